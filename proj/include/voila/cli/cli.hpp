#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace voila::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

// Settings shared by the subcommands. A --config JSON file sets any of these
// by name; explicit flags win over the file.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t grid = 64;
  double sigma = 0.0;  // <= 0: default blur for the grid
  std::string rates = "1-40";
  std::size_t count = 100;  // synthetic tracks per population
  std::optional<double> tau;
  std::string generator;  // http(s) endpoint; empty means offline only
  std::string scorer = "word-count";
  std::string judge;
  std::string modes = "overall,helpful,grounding";
  std::size_t jobs = 1;
  std::string stage = "perceiver_and_gaze";
  std::size_t steps = 200;
  double lr = 0.1;
  std::size_t batch = 4;
};

nlohmann::json config_to_json(const RunConfig& c);
// Unknown keys raise FormatError.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});

// "1-40", "1,2,5" or a mix such as "1-10,20,30".
std::vector<std::size_t> parse_rates(const std::string& spec);

// args excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace voila::cli
