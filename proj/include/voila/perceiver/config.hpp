#pragma once

#include <cstddef>
#include <string_view>

#include <json.hpp>

namespace voila::perceiver {

// Logit scaling inside attention. `paper_literal` applies none;
// `scaled` divides by sqrt(dim / n_heads).
enum class AttnScale { paper_literal, scaled };

// Block residual wiring.
//   literal:  LN(L + FF(L + Attn(x, L, G)))
//   standard: h = L + Attn(x, L, G);  LN(h + FF(h))
enum class BlockResidual { literal, standard };

std::string_view to_string(AttnScale s);
std::string_view to_string(BlockResidual r);
AttnScale attn_scale_from_string(std::string_view s);
BlockResidual block_residual_from_string(std::string_view s);

struct ResamplerConfig {
  std::size_t dim = 1024;
  std::size_t n_latents = 64;
  std::size_t n_media_tokens = 256;
  std::size_t n_heads = 8;
  std::size_t depth = 6;
  std::size_t ff_mult = 4;
  AttnScale attn_scale = AttnScale::scaled;
  std::size_t patch_dim = 196;
  BlockResidual residual = BlockResidual::literal;

  std::size_t head_dim() const { return dim / n_heads; }
  std::size_t ff_dim() const { return dim * ff_mult; }

  // Throws ParameterError on zero counts or dim not divisible by n_heads.
  void validate() const;

  bool operator==(const ResamplerConfig&) const = default;

  // 224x224 heatmap cut into a 16x16 grid of 14x14 patches, 1024-wide
  // features: the CLIP ViT-L/14 token grid.
  static ResamplerConfig paper_scale();
  // d=8, 4 latents, 9 media tokens (12x12 heatmap in a 3x3 grid), depth 2,
  // 2 heads.
  static ResamplerConfig desk_scale();
};

nlohmann::json config_to_json(const ResamplerConfig& c);
ResamplerConfig config_from_json(const nlohmann::json& j);

}  // namespace voila::perceiver
