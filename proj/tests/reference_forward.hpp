#pragma once

// Hand-rolled, loop-only forward pass used as an independent oracle for the
// graph-based implementation. No Eigen, no autodiff ops; just the model
// formula written out directly.

#include <cmath>
#include <vector>

#include "umk/model.hpp"

namespace testutil {

using Mat = std::vector<std::vector<double>>;

inline Mat ref_matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat ref_tensor_matrix(const umk::Tensor& t) {
  const std::size_t rows = t.rank() == 2 ? t.extent(0) : 1;
  const std::size_t cols = t.extent(t.rank() - 1);
  Mat m(rows, std::vector<double>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m[r][c] = t.data()[r * cols + c];
  return m;
}

inline std::vector<double> ref_layer_norm_row(const std::vector<double>& x,
                                              const std::vector<double>& g,
                                              const std::vector<double>& b, double eps) {
  const std::size_t n = x.size();
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = (x[i] - mean) * inv * g[i] + b[i];
  return y;
}

// NLL of `target` given [images][BOS][text], replicating the production
// template and teacher forcing.
inline double ref_forward_nll(const umk::ModelParams& params,
                              const std::vector<umk::Tensor>& images,
                              const std::vector<int>& text, const std::vector<int>& target) {
  const umk::ModelConfig& cfg = params.config;
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);

  Mat x;
  for (const auto& image : images) {
    const std::size_t p = static_cast<std::size_t>(cfg.patch);
    const std::size_t rows = static_cast<std::size_t>(cfg.image_h) / p;
    const std::size_t cols = static_cast<std::size_t>(cfg.image_w) / p;
    const std::size_t w = static_cast<std::size_t>(cfg.image_w);
    const std::size_t ch = static_cast<std::size_t>(cfg.image_c);
    Mat proj = ref_tensor_matrix(params.patch_proj);
    for (std::size_t pr = 0; pr < rows; ++pr)
      for (std::size_t pc = 0; pc < cols; ++pc) {
        std::vector<double> patch;
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t j = 0; j < p; ++j)
            for (std::size_t c = 0; c < ch; ++c)
              patch.push_back(image.data()[((pr * p + i) * w + (pc * p + j)) * ch + c]);
        std::vector<double> emb(d, 0.0);
        for (std::size_t k = 0; k < patch.size(); ++k)
          for (std::size_t j = 0; j < d; ++j) emb[j] += patch[k] * proj[k][j];
        x.push_back(std::move(emb));
      }
  }
  Mat tok = ref_tensor_matrix(params.tok_emb);
  std::vector<int> ids = {umk::Vocab::kBos};
  ids.insert(ids.end(), text.begin(), text.end());
  ids.insert(ids.end(), target.begin(), target.end() - 1);
  for (int id : ids) x.push_back(tok[static_cast<std::size_t>(id)]);

  Mat pos = ref_tensor_matrix(params.pos_emb);
  for (std::size_t t = 0; t < x.size(); ++t)
    for (std::size_t j = 0; j < d; ++j) x[t][j] += pos[t][j];

  const std::size_t seq = x.size();
  const std::size_t hd = static_cast<std::size_t>(cfg.head_dim());
  for (const auto& layer : params.layers) {
    const auto g1 = ref_tensor_matrix(layer.ln1_g)[0];
    const auto b1 = ref_tensor_matrix(layer.ln1_b)[0];
    Mat h(seq);
    for (std::size_t t = 0; t < seq; ++t) h[t] = ref_layer_norm_row(x[t], g1, b1, cfg.ln_eps);
    Mat q = ref_matmul(h, ref_tensor_matrix(layer.wq));
    Mat k = ref_matmul(h, ref_tensor_matrix(layer.wk));
    Mat v = ref_matmul(h, ref_tensor_matrix(layer.wv));
    Mat attn_out(seq, std::vector<double>(d, 0.0));
    for (int head = 0; head < cfg.n_heads; ++head) {
      const std::size_t off = static_cast<std::size_t>(head) * hd;
      for (std::size_t t = 0; t < seq; ++t) {
        std::vector<double> scores(t + 1);
        for (std::size_t s = 0; s <= t; ++s) {
          double dot = 0;
          for (std::size_t j = 0; j < hd; ++j) dot += q[t][off + j] * k[s][off + j];
          scores[s] = dot / std::sqrt(static_cast<double>(hd));
        }
        double mx = scores[0];
        for (double s : scores) mx = std::max(mx, s);
        double total = 0;
        for (double& s : scores) {
          s = std::exp(s - mx);
          total += s;
        }
        for (std::size_t s = 0; s <= t; ++s)
          for (std::size_t j = 0; j < hd; ++j)
            attn_out[t][off + j] += scores[s] / total * v[s][off + j];
      }
    }
    Mat attn_proj = ref_matmul(attn_out, ref_tensor_matrix(layer.wo));
    for (std::size_t t = 0; t < seq; ++t)
      for (std::size_t j = 0; j < d; ++j) x[t][j] += attn_proj[t][j];

    const auto g2 = ref_tensor_matrix(layer.ln2_g)[0];
    const auto b2 = ref_tensor_matrix(layer.ln2_b)[0];
    Mat h2(seq);
    for (std::size_t t = 0; t < seq; ++t) h2[t] = ref_layer_norm_row(x[t], g2, b2, cfg.ln_eps);
    Mat m1 = ref_matmul(h2, ref_tensor_matrix(layer.mlp_w1));
    const auto bias1 = ref_tensor_matrix(layer.mlp_b1)[0];
    for (auto& row : m1)
      for (std::size_t j = 0; j < row.size(); ++j) {
        const double z = row[j] + bias1[j];
        row[j] = 0.5 * z * (1.0 + std::erf(z * 0.7071067811865475244));
      }
    Mat m2 = ref_matmul(m1, ref_tensor_matrix(layer.mlp_w2));
    const auto bias2 = ref_tensor_matrix(layer.mlp_b2)[0];
    for (std::size_t t = 0; t < seq; ++t)
      for (std::size_t j = 0; j < d; ++j) x[t][j] += m2[t][j] + bias2[j];
  }

  const auto gf = ref_tensor_matrix(params.lnf_g)[0];
  const auto bf = ref_tensor_matrix(params.lnf_b)[0];
  Mat xn(seq);
  for (std::size_t t = 0; t < seq; ++t) xn[t] = ref_layer_norm_row(x[t], gf, bf, cfg.ln_eps);
  Mat logits = ref_matmul(xn, ref_tensor_matrix(params.lm_head));

  const std::size_t prefix_len = seq - (target.size() - 1);
  double nll = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto& row = logits[prefix_len - 1 + i];
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double total = 0;
    for (double v : row) total += std::exp(v - mx);
    nll += mx + std::log(total) - row[static_cast<std::size_t>(target[i])];
  }
  return nll;
}

}  // namespace testutil
