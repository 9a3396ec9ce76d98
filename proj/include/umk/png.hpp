#pragma once

#include <filesystem>

#include "umk/tensor.hpp"

namespace umk {

// Writes (H, W, C) pixels in [0, 1] as a 16-bit-per-channel PNG (grayscale
// for C=1, RGB for C=3). Dependency-free: the zlib stream uses stored deflate
// blocks. Values outside [0, 1] are clamped.
void write_png16(const std::filesystem::path& path, const Tensor& pixels);

}  // namespace umk
