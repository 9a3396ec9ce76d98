#include "umk/png.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace umk {

namespace {

std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t crc = 0xffffffffu) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc;
}

std::uint32_t adler32(const std::uint8_t* data, std::size_t len) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < len; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void write_chunk(std::ofstream& out, const char type[4], const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> header;
  put_u32be(header, static_cast<std::uint32_t>(data.size()));
  out.write(reinterpret_cast<const char*>(header.data()), 4);
  out.write(type, 4);
  if (!data.empty()) out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  std::uint32_t crc = crc32(reinterpret_cast<const std::uint8_t*>(type), 4);
  crc = crc32(data.data(), data.size(), crc) ^ 0xffffffffu;
  std::vector<std::uint8_t> trailer;
  put_u32be(trailer, crc);
  out.write(reinterpret_cast<const char*>(trailer.data()), 4);
}

}  // namespace

void write_png16(const std::filesystem::path& path, const Tensor& pixels) {
  if (pixels.rank() != 3)
    throw shape_error("png: expected (H, W, C) pixels, got " +
                      Tensor::shape_string(pixels.shape()));
  const std::size_t h = pixels.extent(0), w = pixels.extent(1), c = pixels.extent(2);
  if (c != 1 && c != 3)
    throw shape_error("png: only 1- or 3-channel images supported, got " + std::to_string(c));

  // Filter byte 0 per scanline, 16-bit big-endian samples.
  std::vector<std::uint8_t> raw;
  raw.reserve(h * (1 + w * c * 2));
  for (std::size_t y = 0; y < h; ++y) {
    raw.push_back(0);
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = std::clamp(pixels.data()[(y * w + x) * c + ch], 0.0, 1.0);
        const auto s = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        raw.push_back(static_cast<std::uint8_t>(s >> 8));
        raw.push_back(static_cast<std::uint8_t>(s & 0xff));
      }
  }

  // zlib wrapper around stored (uncompressed) deflate blocks.
  std::vector<std::uint8_t> idat;
  idat.push_back(0x78);
  idat.push_back(0x01);
  std::size_t offset = 0;
  while (offset < raw.size() || raw.empty()) {
    const std::size_t chunk = std::min<std::size_t>(raw.size() - offset, 65535);
    const bool final = offset + chunk == raw.size();
    idat.push_back(final ? 1 : 0);
    idat.push_back(static_cast<std::uint8_t>(chunk & 0xff));
    idat.push_back(static_cast<std::uint8_t>(chunk >> 8));
    idat.push_back(static_cast<std::uint8_t>(~chunk & 0xff));
    idat.push_back(static_cast<std::uint8_t>((~chunk >> 8) & 0xff));
    idat.insert(idat.end(), raw.begin() + static_cast<long>(offset),
                raw.begin() + static_cast<long>(offset + chunk));
    offset += chunk;
    if (final) break;
  }
  put_u32be(idat, adler32(raw.data(), raw.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write png: " + path.string());
  static const std::uint8_t signature[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  out.write(reinterpret_cast<const char*>(signature), 8);

  std::vector<std::uint8_t> ihdr;
  put_u32be(ihdr, static_cast<std::uint32_t>(w));
  put_u32be(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(16);                 // bit depth
  ihdr.push_back(c == 3 ? 2 : 0);     // color type
  ihdr.push_back(0);                  // compression
  ihdr.push_back(0);                  // filter
  ihdr.push_back(0);                  // interlace
  write_chunk(out, "IHDR", ihdr);
  write_chunk(out, "IDAT", idat);
  write_chunk(out, "IEND", {});
  if (!out) throw config_error("short write on png: " + path.string());
}

}  // namespace umk
