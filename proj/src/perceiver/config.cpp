#include "voila/perceiver/config.hpp"

#include <string>

#include "voila/error.hpp"

namespace voila::perceiver {

std::string_view to_string(AttnScale s) {
  return s == AttnScale::scaled ? "scaled" : "paper_literal";
}

std::string_view to_string(BlockResidual r) {
  return r == BlockResidual::literal ? "literal" : "standard";
}

AttnScale attn_scale_from_string(std::string_view s) {
  if (s == "scaled") return AttnScale::scaled;
  if (s == "paper_literal") return AttnScale::paper_literal;
  throw ParameterError("unknown attn_scale '" + std::string(s) + "'");
}

BlockResidual block_residual_from_string(std::string_view s) {
  if (s == "literal") return BlockResidual::literal;
  if (s == "standard") return BlockResidual::standard;
  throw ParameterError("unknown residual mode '" + std::string(s) + "'");
}

void ResamplerConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw ParameterError(std::string("ResamplerConfig: ") + what);
  };
  require(dim >= 1, "dim must be >= 1");
  require(n_latents >= 1, "n_latents must be >= 1");
  require(n_media_tokens >= 1, "n_media_tokens must be >= 1");
  require(n_heads >= 1, "n_heads must be >= 1");
  require(depth >= 1, "depth must be >= 1");
  require(ff_mult >= 1, "ff_mult must be >= 1");
  require(patch_dim >= 1, "patch_dim must be >= 1");
  require(dim % n_heads == 0, "dim must be divisible by n_heads");
}

ResamplerConfig ResamplerConfig::paper_scale() { return ResamplerConfig{}; }

ResamplerConfig ResamplerConfig::desk_scale() {
  ResamplerConfig c;
  c.dim = 8;
  c.n_latents = 4;
  c.n_media_tokens = 9;
  c.n_heads = 2;
  c.depth = 2;
  c.ff_mult = 4;
  c.patch_dim = 16;
  return c;
}

nlohmann::json config_to_json(const ResamplerConfig& c) {
  return {{"dim", c.dim},
          {"n_latents", c.n_latents},
          {"n_media_tokens", c.n_media_tokens},
          {"n_heads", c.n_heads},
          {"depth", c.depth},
          {"ff_mult", c.ff_mult},
          {"attn_scale", to_string(c.attn_scale)},
          {"patch_dim", c.patch_dim},
          {"residual", to_string(c.residual)}};
}

ResamplerConfig config_from_json(const nlohmann::json& j) {
  ResamplerConfig c;
  try {
    c.dim = j.at("dim").get<std::size_t>();
    c.n_latents = j.at("n_latents").get<std::size_t>();
    c.n_media_tokens = j.at("n_media_tokens").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.ff_mult = j.at("ff_mult").get<std::size_t>();
    c.attn_scale = attn_scale_from_string(j.at("attn_scale").get<std::string>());
    c.patch_dim = j.at("patch_dim").get<std::size_t>();
    c.residual = block_residual_from_string(j.value("residual", std::string("literal")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("resampler config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace voila::perceiver
