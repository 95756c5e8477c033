#pragma once

#include <span>
#include <string>
#include <vector>

#include "voila/perceiver/config.hpp"
#include "voila/perceiver/weights.hpp"

namespace voila::perceiver {

inline constexpr const char* kCheckpointFormat = "VPW1";

// "VPW1" checkpoint layout:
//   4 bytes  magic "VPW1"
//   u64 LE   header length N
//   N bytes  JSON header: {"format": "VPW1", "config": {...},
//            "tensors": [{"name", "rows", "cols", "offset", "length"}, ...]}
//   payload  binary32 LE values; offsets / lengths in bytes from the payload start
// Values are stored at single precision, so save(load(save(w))) reproduces the
// first file byte for byte.
struct Checkpoint {
  ResamplerConfig config;
  ResamplerWeights weights;
};

std::vector<unsigned char> encode_checkpoint(const ResamplerConfig& config,
                                             const ResamplerWeights& weights);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const std::string& path, const ResamplerConfig& config,
                     const ResamplerWeights& weights);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace voila::perceiver
