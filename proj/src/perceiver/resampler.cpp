#include "voila/perceiver/resampler.hpp"

#include <cmath>

#include "voila/error.hpp"

namespace voila::perceiver {

namespace {

struct LayerNormCache {
  Matrix normalized;            // (x - mean) / sqrt(var + eps)
  std::vector<double> inv_std;  // per row
};

Matrix layer_norm_cached(const Matrix& x, const Matrix& gain, const Matrix& bias,
                         LayerNormCache& cache) {
  const std::size_t n = x.cols();
  cache.normalized = Matrix(x.rows(), n);
  cache.inv_std.assign(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto in = x.row(i);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    cache.inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < n; ++j) cache.normalized(i, j) = (in[j] - mean) * cache.inv_std[i];
  }
  // Same arithmetic as voila::layer_norm, so cached and uncached paths agree
  // bit for bit.
  return layer_norm(x, gain, bias);
}

// Returns dL/dx; accumulates into d_gain / d_bias.
Matrix layer_norm_backward(const Matrix& upstream, const Matrix& gain, const LayerNormCache& cache,
                           Matrix& d_gain, Matrix& d_bias) {
  const std::size_t n = upstream.cols();
  Matrix dx(upstream.rows(), n);
  std::vector<double> d_norm(n);
  for (std::size_t i = 0; i < upstream.rows(); ++i) {
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dy = upstream(i, j);
      const double xh = cache.normalized(i, j);
      d_gain(0, j) += dy * xh;
      d_bias(0, j) += dy;
      d_norm[j] = dy * gain(0, j);
      mean_d += d_norm[j];
      mean_dx += d_norm[j] * xh;
    }
    mean_d /= static_cast<double>(n);
    mean_dx /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      dx(i, j) = cache.inv_std[i] * (d_norm[j] - mean_d - cache.normalized(i, j) * mean_dx);
    }
  }
  return dx;
}

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  return add_row_vector(matmul(x, w), b);
}

double logit_scale(const ResamplerConfig& config) {
  return config.attn_scale == AttnScale::scaled
             ? 1.0 / std::sqrt(static_cast<double>(config.head_dim()))
             : 1.0;
}

void require_attn_shapes(const Matrix& x, const Matrix& latents, const Matrix& gaze,
                         const ResamplerConfig& config) {
  if (x.rows() != gaze.rows()) {
    throw ShapeError("attn: gaze grid has " + std::to_string(gaze.rows()) +
                     " tokens but media has " + std::to_string(x.rows()));
  }
  if (x.cols() != config.dim || latents.cols() != config.dim || gaze.cols() != config.dim) {
    throw ShapeError("attn: feature width mismatch, media " + x.shape_string() + ", latents " +
                     latents.shape_string() + ", gaze " + gaze.shape_string() + ", dim " +
                     std::to_string(config.dim));
  }
}

struct AttnCache {
  Matrix tokens;       // x ++ L
  Matrix gaze_tokens;  // G ++ 0
  Matrix q, k, v;
  std::vector<Matrix> probs;
};

Matrix attn_forward(const Matrix& x, const Matrix& latents, const Matrix& gaze,
                    const BlockWeights& b, const ResamplerConfig& config, AttnCache& cache) {
  require_attn_shapes(x, latents, gaze, config);
  cache.tokens = concat_rows(x, latents);
  cache.gaze_tokens = concat_rows(gaze, Matrix(latents.rows(), latents.cols()));
  cache.q = matmul(latents, b.w_q);
  cache.k = matmul(cache.tokens, b.w_k) + matmul(cache.gaze_tokens, b.w_gaze_key);
  cache.v = matmul(cache.tokens, b.w_v);

  const std::size_t hd = config.head_dim();
  const double scale = logit_scale(config);
  Matrix out(latents.rows(), config.dim);
  cache.probs.clear();
  for (std::size_t h = 0; h < config.n_heads; ++h) {
    const Matrix qh = slice_cols(cache.q, h * hd, (h + 1) * hd);
    const Matrix kh = slice_cols(cache.k, h * hd, (h + 1) * hd);
    const Matrix vh = slice_cols(cache.v, h * hd, (h + 1) * hd);
    Matrix probs = softmax_rows(matmul_nt(qh, kh) * scale);
    assign_cols(out, h * hd, matmul(probs, vh));
    cache.probs.push_back(std::move(probs));
  }
  return out;
}

struct FeedForwardCache {
  LayerNormCache ln;
  Matrix normed;
  Matrix pre_act;
  Matrix act;
};

Matrix feed_forward_cached(const Matrix& t, const BlockWeights& b, FeedForwardCache& cache) {
  if (t.cols() != b.ff_w1.rows()) {
    throw ShapeError("feed_forward: input " + t.shape_string() + " does not match first linear " +
                     b.ff_w1.shape_string());
  }
  cache.normed = layer_norm_cached(t, b.ff_ln_gain, b.ff_ln_bias, cache.ln);
  cache.pre_act = linear(cache.normed, b.ff_w1, b.ff_b1);
  cache.act = gelu(cache.pre_act);
  return linear(cache.act, b.ff_w2, b.ff_b2);
}

struct BlockCache {
  AttnCache attn;
  Matrix hidden;  // L + Attn
  FeedForwardCache ff;
  LayerNormCache out_ln;
};

Matrix block_forward_cached(const Matrix& x, const Matrix& latents, const Matrix& gaze,
                            const BlockWeights& b, const ResamplerConfig& config,
                            BlockCache& cache) {
  cache.hidden = latents + attn_forward(x, latents, gaze, b, config, cache.attn);
  const Matrix ff = feed_forward_cached(cache.hidden, b, cache.ff);
  const Matrix pre = config.residual == BlockResidual::literal ? latents + ff : cache.hidden + ff;
  return layer_norm_cached(pre, b.out_ln_gain, b.out_ln_bias, cache.out_ln);
}

struct ResamplerCache {
  Matrix gaze_linear;
  LayerNormCache gaze_ln;
  Matrix gaze;
  std::vector<BlockCache> blocks;
  LayerNormCache final_ln;
};

void require_inputs(const Matrix& media, const GazeInput& gaze, const ResamplerConfig& config) {
  config.validate();
  if (media.rows() != config.n_media_tokens || media.cols() != config.dim) {
    throw ShapeError("resampler: media features " + media.shape_string() + ", expected (" +
                     std::to_string(config.n_media_tokens) + "x" + std::to_string(config.dim) +
                     ")");
  }
  if (gaze.heatmap_patches.rows() != config.n_media_tokens ||
      gaze.heatmap_patches.cols() != config.patch_dim) {
    throw ShapeError("resampler: gaze patches " + gaze.heatmap_patches.shape_string() +
                     ", expected (" + std::to_string(config.n_media_tokens) + "x" +
                     std::to_string(config.patch_dim) + ")");
  }
}

Matrix resampler_forward_cached(const Matrix& media, const GazeInput& gaze,
                                const ResamplerWeights& w, const ResamplerConfig& config,
                                ResamplerCache& cache) {
  require_inputs(media, gaze, config);
  check_shapes(w, config);
  cache.gaze_linear = linear(gaze.heatmap_patches, w.gaze_w, w.gaze_b);
  cache.gaze = layer_norm_cached(cache.gaze_linear, w.gaze_ln_gain, w.gaze_ln_bias, cache.gaze_ln);
  cache.blocks.resize(config.depth);
  Matrix latents = w.latents;
  for (std::size_t i = 0; i < config.depth; ++i) {
    latents = block_forward_cached(media, latents, cache.gaze, w.blocks[i], config, cache.blocks[i]);
  }
  return layer_norm_cached(latents, w.final_ln_gain, w.final_ln_bias, cache.final_ln);
}

struct BlockGrads {
  Matrix d_media;
  Matrix d_latents;
  Matrix d_gaze;
};

BlockGrads attn_backward(const Matrix& d_out, const BlockWeights& b, const AttnCache& cache,
                         const ResamplerConfig& config, BlockWeights& g,
                         const BackwardOptions& options) {
  const std::size_t hd = config.head_dim();
  const double scale = logit_scale(config);
  Matrix d_q(cache.q.rows(), cache.q.cols());
  Matrix d_k(cache.k.rows(), cache.k.cols());
  Matrix d_v(cache.v.rows(), cache.v.cols());
  for (std::size_t h = 0; h < config.n_heads; ++h) {
    const Matrix qh = slice_cols(cache.q, h * hd, (h + 1) * hd);
    const Matrix kh = slice_cols(cache.k, h * hd, (h + 1) * hd);
    const Matrix vh = slice_cols(cache.v, h * hd, (h + 1) * hd);
    const Matrix d_oh = slice_cols(d_out, h * hd, (h + 1) * hd);
    const Matrix& probs = cache.probs[h];

    assign_cols(d_v, h * hd, matmul_tn(probs, d_oh));
    const Matrix d_probs = matmul_nt(d_oh, vh);
    Matrix d_logits(probs.rows(), probs.cols());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < probs.cols(); ++j) dot += d_probs(i, j) * probs(i, j);
      if (options.inject_softmax_fault) dot = 0.0;
      for (std::size_t j = 0; j < probs.cols(); ++j)
        d_logits(i, j) = probs(i, j) * (d_probs(i, j) - dot) * scale;
    }
    assign_cols(d_q, h * hd, matmul(d_logits, kh));
    assign_cols(d_k, h * hd, matmul_tn(d_logits, qh));
  }

  const std::size_t n_latents = cache.q.rows();
  const std::size_t n_media = cache.tokens.rows() - n_latents;
  const Matrix latents = slice_rows(cache.tokens, n_media, cache.tokens.rows());

  g.w_q += matmul_tn(latents, d_q);
  g.w_k += matmul_tn(cache.tokens, d_k);
  g.w_v += matmul_tn(cache.tokens, d_v);
  g.w_gaze_key += matmul_tn(cache.gaze_tokens, d_k);

  const Matrix d_tokens = matmul_nt(d_k, b.w_k) + matmul_nt(d_v, b.w_v);
  const Matrix d_gaze_tokens = matmul_nt(d_k, b.w_gaze_key);

  BlockGrads out;
  out.d_media = slice_rows(d_tokens, 0, n_media);
  out.d_latents = slice_rows(d_tokens, n_media, d_tokens.rows()) + matmul_nt(d_q, b.w_q);
  // The zero padding below the gaze rows is a constant; its gradient is dropped.
  out.d_gaze = slice_rows(d_gaze_tokens, 0, n_media);
  return out;
}

Matrix feed_forward_backward(const Matrix& d_out, const BlockWeights& b,
                             const FeedForwardCache& cache, BlockWeights& g) {
  g.ff_w2 += matmul_tn(cache.act, d_out);
  g.ff_b2 += column_sums(d_out);
  Matrix d_pre = matmul_nt(d_out, b.ff_w2);
  for (std::size_t i = 0; i < d_pre.size(); ++i)
    d_pre.values()[i] *= gelu_derivative(cache.pre_act.values()[i]);
  g.ff_w1 += matmul_tn(cache.normed, d_pre);
  g.ff_b1 += column_sums(d_pre);
  const Matrix d_normed = matmul_nt(d_pre, b.ff_w1);
  return layer_norm_backward(d_normed, b.ff_ln_gain, cache.ln, g.ff_ln_gain, g.ff_ln_bias);
}

BlockGrads block_backward(const Matrix& d_out, const BlockWeights& b, const BlockCache& cache,
                          const ResamplerConfig& config, BlockWeights& g,
                          const BackwardOptions& options) {
  const Matrix d_pre = layer_norm_backward(d_out, b.out_ln_gain, cache.out_ln, g.out_ln_gain,
                                           g.out_ln_bias);
  // literal: pre = L + FF(h);  standard: pre = h + FF(h);  h = L + Attn.
  Matrix d_hidden = feed_forward_backward(d_pre, b, cache.ff, g);
  Matrix d_latents = Matrix(d_pre.rows(), d_pre.cols());
  if (config.residual == BlockResidual::literal) {
    d_latents += d_pre;
  } else {
    d_hidden += d_pre;
  }
  d_latents += d_hidden;
  BlockGrads a = attn_backward(d_hidden, b, cache.attn, config, g, options);
  a.d_latents += d_latents;
  return a;
}

}  // namespace

Matrix encode_gaze(const GazeInput& gaze, const ResamplerWeights& weights) {
  if (gaze.heatmap_patches.cols() != weights.gaze_w.rows()) {
    throw ShapeError("encode_gaze: patches " + gaze.heatmap_patches.shape_string() +
                     " do not match gaze encoder " + weights.gaze_w.shape_string());
  }
  return layer_norm(linear(gaze.heatmap_patches, weights.gaze_w, weights.gaze_b),
                    weights.gaze_ln_gain, weights.gaze_ln_bias);
}

AttentionResult attn_with_weights(const Matrix& x, const Matrix& latents, const Matrix& gaze,
                                  const BlockWeights& block, const ResamplerConfig& config) {
  AttnCache cache;
  AttentionResult r;
  r.output = attn_forward(x, latents, gaze, block, config, cache);
  r.weights = std::move(cache.probs);
  return r;
}

Matrix attn(const Matrix& x, const Matrix& latents, const Matrix& gaze, const BlockWeights& block,
            const ResamplerConfig& config) {
  AttnCache cache;
  return attn_forward(x, latents, gaze, block, config, cache);
}

Matrix feed_forward(const Matrix& t, const BlockWeights& block) {
  FeedForwardCache cache;
  return feed_forward_cached(t, block, cache);
}

Matrix block_forward(const Matrix& x, const Matrix& latents, const Matrix& gaze,
                     const BlockWeights& block, const ResamplerConfig& config) {
  BlockCache cache;
  return block_forward_cached(x, latents, gaze, block, config, cache);
}

Matrix resampler_forward(const Matrix& media, const GazeInput& gaze,
                         const ResamplerWeights& weights, const ResamplerConfig& config) {
  ResamplerCache cache;
  return resampler_forward_cached(media, gaze, weights, config, cache);
}

Gradients backward(const Matrix& media, const GazeInput& gaze, const ResamplerWeights& weights,
                   const ResamplerConfig& config, const Matrix& upstream,
                   const BackwardOptions& options) {
  ResamplerCache cache;
  const Matrix out = resampler_forward_cached(media, gaze, weights, config, cache);
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw ShapeError("backward: upstream gradient " + upstream.shape_string() +
                     " does not match output " + out.shape_string());
  }

  Gradients grads;
  grads.params = zeros_like(config);
  auto& g = grads.params;
  grads.d_media = Matrix(media.rows(), media.cols());
  Matrix d_gaze(cache.gaze.rows(), cache.gaze.cols());

  Matrix d_latents = layer_norm_backward(upstream, weights.final_ln_gain, cache.final_ln,
                                         g.final_ln_gain, g.final_ln_bias);
  for (std::size_t i = config.depth; i-- > 0;) {
    BlockGrads bg =
        block_backward(d_latents, weights.blocks[i], cache.blocks[i], config, g.blocks[i], options);
    grads.d_media += bg.d_media;
    d_gaze += bg.d_gaze;
    d_latents = std::move(bg.d_latents);
  }
  g.latents = std::move(d_latents);

  const Matrix d_gaze_linear =
      layer_norm_backward(d_gaze, weights.gaze_ln_gain, cache.gaze_ln, g.gaze_ln_gain,
                          g.gaze_ln_bias);
  g.gaze_w += matmul_tn(gaze.heatmap_patches, d_gaze_linear);
  g.gaze_b += column_sums(d_gaze_linear);
  grads.d_gaze_patches = matmul_nt(d_gaze_linear, weights.gaze_w);
  return grads;
}

}  // namespace voila::perceiver
