#include "voila/perceiver/checkpoint.hpp"

#include <cstring>

#include <json.hpp>

#include "voila/error.hpp"
#include "voila/io/binary.hpp"

namespace voila::perceiver {

namespace {

constexpr char kMagic[4] = {'V', 'P', 'W', '1'};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const ResamplerConfig& config,
                                             const ResamplerWeights& weights) {
  check_shapes(weights, config);
  nlohmann::json index = nlohmann::json::array();
  io::Bytes payload;
  for (const auto& p : parameters(weights)) {
    const std::size_t offset = payload.size();
    for (double v : p.tensor->values()) io::put_f32_le(payload, static_cast<float>(v));
    index.push_back({{"name", p.name},
                     {"rows", p.tensor->rows()},
                     {"cols", p.tensor->cols()},
                     {"offset", offset},
                     {"length", payload.size() - offset}});
  }
  const nlohmann::json header = {
      {"format", "VPW1"}, {"config", config_to_json(config)}, {"tensors", std::move(index)}};
  const std::string text = header.dump();

  io::Bytes out(std::begin(kMagic), std::end(kMagic));
  io::put_u64_le(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  io::Reader in(bytes);
  const auto magic = in.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("not a VPW1 checkpoint");
  const std::uint64_t header_len = in.u64();
  if (header_len > in.remaining()) throw FormatError("VPW1 header length exceeds file size");
  const auto header_bytes = in.take(static_cast<std::size_t>(header_len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("VPW1 header: ") + e.what());
  }
  const auto payload = bytes.subspan(in.position());

  Checkpoint ckpt;
  ckpt.config = config_from_json(header.at("config"));
  ckpt.weights = zeros_like(ckpt.config);
  auto params = parameters(ckpt.weights);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size()) {
    throw FormatError("VPW1 index lists " + std::to_string(tensors.size()) + " tensors, config implies " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = tensors[i];
    auto& dst = *params[i].tensor;
    if (entry.at("name").get<std::string>() != params[i].name ||
        entry.at("rows").get<std::size_t>() != dst.rows() ||
        entry.at("cols").get<std::size_t>() != dst.cols()) {
      throw FormatError("VPW1 tensor " + std::to_string(i) + " (" +
                        entry.at("name").get<std::string>() + ") does not match expected " +
                        params[i].name + " " + dst.shape_string());
    }
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto length = entry.at("length").get<std::size_t>();
    if (length != 4 * dst.size() || offset > payload.size() || length > payload.size() - offset) {
      throw FormatError("VPW1 tensor " + params[i].name + " has an out-of-range payload slice");
    }
    io::Reader values(payload.subspan(offset, length));
    for (auto& v : dst.values()) v = static_cast<double>(values.f32());
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const ResamplerConfig& config,
                     const ResamplerWeights& weights) {
  io::write_file(path, encode_checkpoint(config, weights));
}

Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace voila::perceiver
