#include "voila/perceiver/weights.hpp"

#include <cmath>
#include <random>

#include "voila/error.hpp"

namespace voila::perceiver {

namespace {

std::uint64_t tensor_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed ^ (0x9e3779b97f4a7c15ull * (index + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

template <class Weights, class Ref>
std::vector<Ref> collect(Weights& w) {
  std::vector<Ref> out;
  out.push_back({"latents", &w.latents, ParamGroup::perceiver});
  out.push_back({"gaze.w", &w.gaze_w, ParamGroup::gaze});
  out.push_back({"gaze.b", &w.gaze_b, ParamGroup::gaze});
  out.push_back({"gaze.ln_gain", &w.gaze_ln_gain, ParamGroup::gaze});
  out.push_back({"gaze.ln_bias", &w.gaze_ln_bias, ParamGroup::gaze});
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    auto& b = w.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    out.push_back({p + "w_q", &b.w_q, ParamGroup::perceiver});
    out.push_back({p + "w_k", &b.w_k, ParamGroup::perceiver});
    out.push_back({p + "w_v", &b.w_v, ParamGroup::perceiver});
    out.push_back({p + "w_gaze_key", &b.w_gaze_key, ParamGroup::gaze});
    out.push_back({p + "ff_ln_gain", &b.ff_ln_gain, ParamGroup::perceiver});
    out.push_back({p + "ff_ln_bias", &b.ff_ln_bias, ParamGroup::perceiver});
    out.push_back({p + "ff_w1", &b.ff_w1, ParamGroup::perceiver});
    out.push_back({p + "ff_b1", &b.ff_b1, ParamGroup::perceiver});
    out.push_back({p + "ff_w2", &b.ff_w2, ParamGroup::perceiver});
    out.push_back({p + "ff_b2", &b.ff_b2, ParamGroup::perceiver});
    out.push_back({p + "out_ln_gain", &b.out_ln_gain, ParamGroup::perceiver});
    out.push_back({p + "out_ln_bias", &b.out_ln_bias, ParamGroup::perceiver});
  }
  out.push_back({"final_ln_gain", &w.final_ln_gain, ParamGroup::perceiver});
  out.push_back({"final_ln_bias", &w.final_ln_bias, ParamGroup::perceiver});
  return out;
}

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError("weights: " + name + " is " + m.shape_string() + ", expected (" +
                     std::to_string(rows) + "x" + std::to_string(cols) + ")");
  }
}

}  // namespace

std::vector<ParamRef> parameters(ResamplerWeights& w) {
  return collect<ResamplerWeights, ParamRef>(w);
}

std::vector<ConstParamRef> parameters(const ResamplerWeights& w) {
  return collect<const ResamplerWeights, ConstParamRef>(w);
}

std::size_t parameter_count(const ResamplerWeights& w) {
  std::size_t n = 0;
  for (const auto& p : parameters(w)) n += p.tensor->size();
  return n;
}

ResamplerWeights zeros_like(const ResamplerConfig& config) {
  config.validate();
  const std::size_t d = config.dim;
  ResamplerWeights w;
  w.latents = Matrix(config.n_latents, d);
  w.gaze_w = Matrix(config.patch_dim, d);
  w.gaze_b = Matrix(1, d);
  w.gaze_ln_gain = Matrix(1, d);
  w.gaze_ln_bias = Matrix(1, d);
  w.blocks.resize(config.depth);
  for (auto& b : w.blocks) {
    b.w_q = Matrix(d, d);
    b.w_k = Matrix(d, d);
    b.w_v = Matrix(d, d);
    b.w_gaze_key = Matrix(d, d);
    b.ff_ln_gain = Matrix(1, d);
    b.ff_ln_bias = Matrix(1, d);
    b.ff_w1 = Matrix(d, config.ff_dim());
    b.ff_b1 = Matrix(1, config.ff_dim());
    b.ff_w2 = Matrix(config.ff_dim(), d);
    b.ff_b2 = Matrix(1, d);
    b.out_ln_gain = Matrix(1, d);
    b.out_ln_bias = Matrix(1, d);
  }
  w.final_ln_gain = Matrix(1, d);
  w.final_ln_bias = Matrix(1, d);
  return w;
}

Matrix kaiming_normal(std::size_t fan_in, std::size_t fan_out, double target_std,
                      std::uint64_t seed) {
  // ReLU gain sqrt(2), fan-in mode; the draw is then rescaled so the target
  // standard deviation holds regardless of fan-in.
  const double kaiming_std = std::sqrt(2.0 / static_cast<double>(fan_in));
  const double rescale = target_std / kaiming_std;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kaiming_std);
  Matrix m(fan_in, fan_out);
  for (auto& v : m.values()) v = normal(rng) * rescale;
  return m;
}

ResamplerWeights init_weights(const ResamplerConfig& config, std::uint64_t seed) {
  ResamplerWeights w = zeros_like(config);
  std::uint64_t index = 0;
  for (auto& p : parameters(w)) {
    const std::uint64_t s = tensor_seed(seed, index++);
    const std::string& name = p.name;
    const bool is_gain = name.ends_with("ln_gain");
    const bool is_bias = name.ends_with("_bias") || name.ends_with(".b") || name.ends_with("_b1") ||
                         name.ends_with("_b2");
    if (is_gain) {
      for (auto& v : p.tensor->values()) v = 1.0;
    } else if (is_bias) {
      // already zero
    } else if (name == "latents") {
      // Stored (n_latents x dim); fan-in is the feature width.
      *p.tensor = transpose(kaiming_normal(config.dim, config.n_latents, kInitStd, s));
    } else {
      *p.tensor = kaiming_normal(p.tensor->rows(), p.tensor->cols(), kInitStd, s);
    }
  }
  return w;
}

void check_shapes(const ResamplerWeights& w, const ResamplerConfig& config) {
  config.validate();
  if (w.blocks.size() != config.depth) {
    throw ShapeError("weights: " + std::to_string(w.blocks.size()) + " blocks, config depth " +
                     std::to_string(config.depth));
  }
  const auto expected = zeros_like(config);
  const auto have = parameters(w);
  const auto want = parameters(expected);
  for (std::size_t i = 0; i < have.size(); ++i) {
    expect_shape(*have[i].tensor, want[i].tensor->rows(), want[i].tensor->cols(), have[i].name);
  }
}

}  // namespace voila::perceiver
