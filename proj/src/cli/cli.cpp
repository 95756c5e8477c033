#include "voila/cli/cli.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "voila/annotation/generator.hpp"
#include "voila/annotation/pipeline.hpp"
#include "voila/chunk/chunk.hpp"
#include "voila/error.hpp"
#include "voila/eval/eval.hpp"
#include "voila/gaze/heatmap.hpp"
#include "voila/gaze/sweep.hpp"
#include "voila/perceiver/checkpoint.hpp"
#include "voila/perceiver/gradcheck.hpp"
#include "voila/perceiver/training.hpp"
#include "voila/scorer.hpp"

#ifndef VOILA_VERSION
#define VOILA_VERSION "0.0.0"
#endif

namespace voila::cli {

namespace {

// Raised for problems CLI11 cannot see, such as a missing tau.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string version_string() {
  return std::string("voila ") + VOILA_VERSION + " (heatmap " + gaze::kHeatmapFormat +
         ", checkpoint " + perceiver::kCheckpointFormat + ")";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

void write_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

nlohmann::json run_record(const std::string& command, const RunConfig& cfg,
                          const std::map<std::string, std::string>& paths) {
  return {{"command", command}, {"version", VOILA_VERSION}, {"config", config_to_json(cfg)},
          {"paths", paths}};
}

void write_sidecar(const std::string& output, const nlohmann::json& record) {
  write_json(output + ".run.json", record);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

using Override = std::function<void(RunConfig&)>;

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::vector<Override> overrides;
  std::map<std::string, std::string> paths;
  std::function<int(RunConfig&, Command&, std::ostream&)> run;
};

// Binds a flag to a staging field; the value reaches the effective config
// only when the flag was given.
template <typename T>
void config_flag(Command& cmd, RunConfig& staged, const std::string& name, T RunConfig::*field,
                 const std::string& help) {
  CLI::Option* opt = cmd.app->add_option(name, staged.*field, help);
  cmd.overrides.push_back([opt, field, &staged](RunConfig& c) {
    if (opt->count() > 0) c.*field = staged.*field;
  });
}

void path_flag(Command& cmd, const std::string& name, const std::string& key, bool required,
               const std::string& help) {
  CLI::Option* opt = cmd.app->add_option(name, cmd.paths[key], help);
  if (required) opt->required();
}

const std::string& path_of(const Command& cmd, const std::string& key) { return cmd.paths.at(key); }

bool has_path(const Command& cmd, const std::string& key) {
  const auto it = cmd.paths.find(key);
  return it != cmd.paths.end() && !it->second.empty();
}

std::map<std::string, std::string> used_paths(const Command& cmd) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : cmd.paths)
    if (!v.empty()) out.emplace(k, v);
  return out;
}

int run_heatmap(RunConfig& cfg, Command& cmd, std::ostream& out) {
  const auto tracks = gaze::read_tracks_jsonl(path_of(cmd, "in"));
  if (tracks.empty()) throw EmptyInputError("heatmap: " + path_of(cmd, "in") + " holds no tracks");
  const double sigma = cfg.sigma > 0.0 ? cfg.sigma : gaze::default_sigma(cfg.grid, cfg.grid);
  const auto maps = gaze::tracks_to_heatmaps(tracks, cfg.grid, cfg.grid, sigma, cfg.jobs);
  const gaze::Heatmap map = gaze::mean_heatmap(maps);
  const std::string& dest = path_of(cmd, "out");
  gaze::save_vhm1(dest, map);
  if (has_path(cmd, "pgm")) gaze::save_pgm(path_of(cmd, "pgm"), map);
  write_sidecar(dest, run_record(cmd.name, cfg, used_paths(cmd)));
  out << nlohmann::json{{"tracks", tracks.size()}, {"height", map.height()}, {"width", map.width()},
                        {"out", dest}}
             .dump()
      << '\n';
  return kExitOk;
}

int run_emd(RunConfig&, Command& cmd, std::ostream& out) {
  const auto p = gaze::load_vhm1(path_of(cmd, "p"));
  const auto q = gaze::load_vhm1(path_of(cmd, "q"));
  out << nlohmann::json{{"emd", gaze::cumulative_emd(p, q)}}.dump() << '\n';
  return kExitOk;
}

int run_sweep(RunConfig& cfg, Command& cmd, std::ostream& out) {
  const auto rates = parse_rates(cfg.rates);
  gaze::SynthPopulation pop;
  const bool recorded = has_path(cmd, "gaze") || has_path(cmd, "trace");
  if (recorded) {
    if (!has_path(cmd, "gaze") || !has_path(cmd, "trace")) {
      throw UsageError("sweep: --gaze and --trace must be given together");
    }
    pop.gaze = gaze::read_tracks_jsonl(path_of(cmd, "gaze"));
    pop.trace = gaze::read_tracks_jsonl(path_of(cmd, "trace"));
  } else {
    pop = gaze::synth_population(cfg.seed, cfg.count);
  }
  const auto result =
      gaze::sampling_rate_sweep(pop.gaze, pop.trace, rates, {cfg.grid, cfg.sigma, cfg.jobs});
  nlohmann::json j = {{"rates", result.rates},
                      {"emd", result.emd_values},
                      {"argmin_rate", result.argmin_rate},
                      {"source", recorded ? "recorded" : "synthetic"},
                      {"run", run_record(cmd.name, cfg, used_paths(cmd))}};
  if (has_path(cmd, "out")) {
    write_json(path_of(cmd, "out"), j);
    write_sidecar(path_of(cmd, "out"), j["run"]);
  } else {
    out << j.dump(2) << '\n';
  }
  return kExitOk;
}

int run_annotate(RunConfig& cfg, Command& cmd, std::ostream& out) {
  if (!cfg.tau) throw UsageError("annotate: --tau is required (the reward threshold has no default)");
  const bool offline = has_path(cmd, "offline");
  if (offline == !cfg.generator.empty()) {
    throw UsageError("annotate: give exactly one of --offline <canned.json> or --generator <url>");
  }
  const auto narratives = annotation::read_narratives_jsonl(path_of(cmd, "in"));
  const annotation::FrozenPrompt prompt = has_path(cmd, "prompts")
                                              ? annotation::load_frozen_prompt(path_of(cmd, "prompts"))
                                              : annotation::builtin_prompt();
  std::unique_ptr<annotation::TextGenerator> generator;
  if (offline) {
    generator = std::make_unique<annotation::CannedGenerator>(
        annotation::CannedGenerator::from_file(path_of(cmd, "offline")));
  } else {
    generator = std::make_unique<annotation::HttpGenerator>(cfg.generator);
  }
  const auto generated = annotation::generate_all(narratives, *generator, prompt, cfg.jobs);
  if (has_path(cmd, "raw-out")) write_json(path_of(cmd, "raw-out"), generated);

  const auto keywords = has_path(cmd, "keywords") ? read_lines(path_of(cmd, "keywords"))
                                                  : annotation::default_keywords();
  const auto scorer = make_scorer(cfg.scorer);
  const auto build = annotation::build_dataset(narratives, generated, keywords, *scorer, *cfg.tau);
  const std::string& dest = path_of(cmd, "out");
  annotation::write_records_jsonl(dest, build.records);
  nlohmann::json stats = annotation::stats_to_json(build);
  stats["keywords"] = keywords;
  stats["run"] = run_record(cmd.name, cfg, used_paths(cmd));
  write_json(dest + ".stats.json", stats);
  write_sidecar(dest, stats["run"]);
  out << nlohmann::json{{"raw_count", build.stats.raw_count},
                        {"kept_count", build.stats.kept_count},
                        {"survival_rate", build.stats.survival_rate},
                        {"quarantined", build.quarantined.size()}}
             .dump()
      << '\n';
  return kExitOk;
}

int run_format_chunks(RunConfig& cfg, Command& cmd, std::ostream& out, bool multi_turn) {
  const auto records = annotation::read_records_jsonl(path_of(cmd, "in"));
  std::string lines;
  std::size_t chunks = 0;
  if (multi_turn) {
    std::map<std::string, std::vector<const annotation::QARecord*>> by_image;
    for (const auto& r : records) by_image[r.image_id].push_back(&r);
    for (auto& [id, turns] : by_image) {
      std::stable_sort(turns.begin(), turns.end(), [](const auto* a, const auto* b) {
        return a->tag_number < b->tag_number;
      });
      std::vector<chunk::Chunk> conversation;
      for (const auto* r : turns) conversation.push_back(chunk::chunk_from_record(*r));
      nlohmann::json j = chunk::chunk_to_json(chunk::render_conversation(conversation));
      j["image_id"] = id;
      lines += j.dump() + "\n";
      ++chunks;
    }
  } else {
    for (const auto& r : records) {
      nlohmann::json j = chunk::chunk_to_json(chunk::render_chunk(chunk::chunk_from_record(r)));
      j["image_id"] = r.image_id;
      j["tag_number"] = r.tag_number;
      lines += j.dump() + "\n";
      ++chunks;
    }
  }
  const std::string& dest = path_of(cmd, "out");
  write_text(dest, lines);
  auto run = run_record(cmd.name, cfg, used_paths(cmd));
  run["multi_turn"] = multi_turn;
  write_sidecar(dest, run);
  out << nlohmann::json{{"records", records.size()}, {"chunks", chunks}}.dump() << '\n';
  return kExitOk;
}

int run_perceiver_check(RunConfig& cfg, Command&, std::ostream& out, std::size_t per_tensor,
                        std::size_t trials, bool inject_bug) {
  bool ok = true;
  nlohmann::json checks = nlohmann::json::array();
  for (const auto scale : {perceiver::AttnScale::scaled, perceiver::AttnScale::paper_literal}) {
    for (const auto residual : {perceiver::BlockResidual::literal, perceiver::BlockResidual::standard}) {
      perceiver::ResamplerConfig pc = perceiver::ResamplerConfig::desk_scale();
      pc.attn_scale = scale;
      pc.residual = residual;
      const auto weights = perceiver::randomized_weights(pc, cfg.seed);
      const auto problem = perceiver::random_problem(pc, cfg.seed + 1);
      perceiver::GradCheckOptions opts;
      opts.per_tensor = per_tensor;
      opts.seed = cfg.seed;
      opts.backward.inject_softmax_fault = inject_bug;
      const auto report = perceiver::gradient_check(problem.media, problem.gaze, weights, pc,
                                                    problem.upstream, opts);
      ok = ok && report.passed;
      checks.push_back({{"attn_scale", perceiver::to_string(scale)},
                        {"residual", perceiver::to_string(residual)},
                        {"coordinates", report.coordinates},
                        {"tensors", report.tensors},
                        {"max_relative_error", report.max_relative_error},
                        {"worst_tensor", report.worst_tensor},
                        {"worst_index", report.worst_index},
                        {"passed", report.passed}});
    }
  }
  const auto neutrality =
      perceiver::gaze_neutrality_check(perceiver::ResamplerConfig::desk_scale(), cfg.seed, trials);
  ok = ok && neutrality.passed;
  out << nlohmann::json{{"gradient_checks", checks},
                        {"gaze_neutrality",
                         {{"trials", neutrality.trials},
                          {"mismatches", neutrality.mismatches},
                          {"passed", neutrality.passed}}},
                        {"injected_fault", inject_bug},
                        {"passed", ok}}
             .dump(2)
      << '\n';
  return ok ? kExitOk : kExitDomainError;
}

int run_train_demo(RunConfig& cfg, Command& cmd, std::ostream& out) {
  const perceiver::ResamplerConfig pc = has_path(cmd, "model")
                                            ? perceiver::config_from_json(read_json(path_of(cmd, "model")))
                                            : perceiver::ResamplerConfig::desk_scale();
  const auto stage = perceiver::training_stage_from_string(cfg.stage);
  const auto mask = perceiver::trainable_mask(stage, pc);
  const auto batch = perceiver::synthetic_batch(pc, cfg.batch, cfg.seed);
  auto weights = perceiver::init_weights(pc, cfg.seed);
  std::vector<double> losses;
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    auto step = perceiver::train_step(weights, pc, mask, batch, cfg.lr);
    losses.push_back(step.loss);
    weights = std::move(step.weights);
  }
  const double final_loss = perceiver::regression_loss(weights, pc, batch);
  const double initial = losses.empty() ? final_loss : losses.front();
  nlohmann::json j = {{"stage", cfg.stage},
                      {"steps", cfg.steps},
                      {"trainable_tensors", mask.trainable_count()},
                      {"initial_loss", initial},
                      {"final_loss", final_loss},
                      {"loss_ratio", initial > 0 ? final_loss / initial : 0.0}};
  if (has_path(cmd, "out")) {
    perceiver::save_checkpoint(path_of(cmd, "out"), pc, weights);
    auto run = run_record(cmd.name, cfg, used_paths(cmd));
    run["model"] = perceiver::config_to_json(pc);
    run["result"] = j;
    write_sidecar(path_of(cmd, "out"), run);
  }
  out << j.dump() << '\n';
  return kExitOk;
}

int run_evaluate(RunConfig& cfg, Command& cmd, std::ostream& out) {
  if (cfg.judge.empty()) throw UsageError("evaluate: --judge is required");
  const auto dataset = eval::read_eval_dataset(path_of(cmd, "dataset"));
  const auto a = eval::read_responses(path_of(cmd, "a"));
  const auto b = eval::read_responses(path_of(cmd, "b"));
  const auto judge = eval::make_judge(cfg.judge);
  std::unique_ptr<Scorer> reward;
  if (has_path(cmd, "reward")) reward = make_scorer(path_of(cmd, "reward"));
  eval::BenchmarkOptions opts;
  opts.modes = eval::parse_modes(cfg.modes);
  opts.jobs = cfg.jobs;
  opts.reward = reward.get();
  const auto report = eval::run_benchmark(dataset, a, b, *judge, opts);
  nlohmann::json j = eval::report_to_json(report);
  j["run"] = run_record(cmd.name, cfg, used_paths(cmd));
  const std::string& dest = path_of(cmd, "out");
  write_json(dest, j);
  write_text(has_path(cmd, "audit") ? path_of(cmd, "audit") : dest + ".audit.jsonl",
             eval::audit_to_jsonl(report));
  write_sidecar(dest, j["run"]);
  out << eval::report_to_json(report).dump() << '\n';
  return kExitOk;
}

}  // namespace

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j = {{"seed", c.seed},       {"grid", c.grid},         {"sigma", c.sigma},
                      {"rates", c.rates},     {"count", c.count},       {"generator", c.generator},
                      {"scorer", c.scorer},   {"judge", c.judge},       {"modes", c.modes},
                      {"jobs", c.jobs},       {"stage", c.stage},       {"steps", c.steps},
                      {"lr", c.lr},           {"batch", c.batch}};
  j["tau"] = c.tau ? nlohmann::json(*c.tau) : nlohmann::json(nullptr);
  return j;
}

RunConfig config_from_json(const nlohmann::json& j, RunConfig c) {
  if (!j.is_object()) throw FormatError("run config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "grid") c.grid = v.get<std::size_t>();
      else if (key == "sigma") c.sigma = v.get<double>();
      else if (key == "rates") c.rates = v.get<std::string>();
      else if (key == "count") c.count = v.get<std::size_t>();
      else if (key == "tau") c.tau = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      else if (key == "generator") c.generator = v.get<std::string>();
      else if (key == "scorer") c.scorer = v.get<std::string>();
      else if (key == "judge") c.judge = v.get<std::string>();
      else if (key == "modes") c.modes = v.get<std::string>();
      else if (key == "jobs") c.jobs = v.get<std::size_t>();
      else if (key == "stage") c.stage = v.get<std::string>();
      else if (key == "steps") c.steps = v.get<std::size_t>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "batch") c.batch = v.get<std::size_t>();
      else throw FormatError("unknown run config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("run config: ") + e.what());
  }
  return c;
}

std::vector<std::size_t> parse_rates(const std::string& spec) {
  std::vector<std::size_t> rates;
  const auto number = [&](const std::string& s) -> std::size_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ParameterError("bad rate '" + s + "' in '" + spec + "'");
    }
    const auto v = std::stoull(s);
    if (v == 0) throw ParameterError("rates must be >= 1 in '" + spec + "'");
    return static_cast<std::size_t>(v);
  };
  std::stringstream in(spec);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (const auto dash = part.find('-'); dash != std::string::npos) {
      const auto lo = number(part.substr(0, dash));
      const auto hi = number(part.substr(dash + 1));
      if (hi < lo) throw ParameterError("descending rate range '" + part + "'");
      for (auto r = lo; r <= hi; ++r) rates.push_back(r);
    } else {
      rates.push_back(number(part));
    }
  }
  if (rates.empty()) throw ParameterError("no rates in '" + spec + "'");
  return rates;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gaze-conditioned vision-language toolkit", "voila"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON run config; flags override its values");

  RunConfig staged;
  std::vector<std::unique_ptr<Command>> commands;
  const auto add = [&](const std::string& name, const std::string& help) -> Command& {
    auto cmd = std::make_unique<Command>();
    cmd->name = name;
    cmd->app = app.add_subcommand(name, help);
    commands.push_back(std::move(cmd));
    return *commands.back();
  };
  // --jobs is accepted on every subcommand.
  const auto jobs_flag = [&](Command& c) {
    config_flag(c, staged, "--jobs", &RunConfig::jobs, "worker thread cap");
  };

  std::size_t per_tensor = 0;
  std::size_t trials = 20;
  bool inject_bug = false;
  bool multi_turn = false;
  double tau_flag = 0.0;

  {
    auto& c = add("heatmap", "mean Gaussian heatmap of a track file");
    path_flag(c, "--in", "in", true, "tracks JSONL");
    path_flag(c, "--out", "out", true, "VHM1 output");
    path_flag(c, "--pgm", "pgm", false, "optional PGM preview");
    config_flag(c, staged, "--grid", &RunConfig::grid, "grid side");
    config_flag(c, staged, "--sigma", &RunConfig::sigma, "blur width in pixels");
    jobs_flag(c);
    c.run = run_heatmap;
  }
  {
    auto& c = add("emd", "cumulative EMD between two VHM1 heatmaps");
    path_flag(c, "--p", "p", true, "reference heatmap");
    path_flag(c, "--q", "q", true, "compared heatmap");
    c.run = run_emd;
  }
  {
    auto& c = add("sweep", "trace sampling-rate sweep against gaze");
    path_flag(c, "--gaze", "gaze", false, "recorded gaze tracks JSONL");
    path_flag(c, "--trace", "trace", false, "recorded trace tracks JSONL");
    path_flag(c, "--out", "out", false, "JSON output (stdout when absent)");
    config_flag(c, staged, "--seed", &RunConfig::seed, "synthetic population seed");
    config_flag(c, staged, "--count", &RunConfig::count, "synthetic tracks per population");
    config_flag(c, staged, "--grid", &RunConfig::grid, "grid side");
    config_flag(c, staged, "--sigma", &RunConfig::sigma, "blur width in pixels");
    config_flag(c, staged, "--rates", &RunConfig::rates, "rates, e.g. 1-40 or 1,5,10");
    jobs_flag(c);
    c.run = run_sweep;
  }
  {
    auto& c = add("annotate", "grounded QA dataset from localized narratives");
    path_flag(c, "--in", "in", true, "narratives JSONL");
    path_flag(c, "--out", "out", true, "dataset JSONL");
    path_flag(c, "--offline", "offline", false, "canned completions JSON keyed by image id");
    path_flag(c, "--prompts", "prompts", false, "prompt directory overriding the built-in one");
    path_flag(c, "--keywords", "keywords", false, "keyword file, one per line");
    path_flag(c, "--raw-out", "raw-out", false, "write raw generations as JSON");
    CLI::Option* tau = c.app->add_option("--tau", tau_flag, "minimum reward (required)");
    c.overrides.push_back([tau, &tau_flag](RunConfig& cfg) {
      if (tau->count() > 0) cfg.tau = tau_flag;
    });
    config_flag(c, staged, "--generator", &RunConfig::generator, "generation endpoint URL");
    config_flag(c, staged, "--scorer", &RunConfig::scorer, "word-count or a scorer URL");
    jobs_flag(c);
    c.run = run_annotate;
  }
  {
    auto& c = add("format-chunks", "render QA records as training chunks");
    path_flag(c, "--in", "in", true, "dataset JSONL");
    path_flag(c, "--out", "out", true, "chunks JSONL");
    c.app->add_flag("--multi-turn", multi_turn, "one conversation per image");
    c.run = [&](RunConfig& cfg, Command& cmd, std::ostream& o) {
      return run_format_chunks(cfg, cmd, o, multi_turn);
    };
  }
  {
    auto& c = add("perceiver-check", "gradient check and gaze-neutrality self test");
    config_flag(c, staged, "--seed", &RunConfig::seed, "problem seed");
    c.app->add_option("--per-tensor", per_tensor, "coordinates per tensor, 0 for all");
    c.app->add_option("--trials", trials, "gaze-neutrality trials");
    c.app->add_flag("--inject-gradient-bug", inject_bug, "break the softmax backward (self test)");
    c.run = [&](RunConfig& cfg, Command& cmd, std::ostream& o) {
      return run_perceiver_check(cfg, cmd, o, per_tensor, trials, inject_bug);
    };
  }
  {
    auto& c = add("train-demo", "staged training on a synthetic regression batch");
    path_flag(c, "--out", "out", false, "VPW1 checkpoint output");
    path_flag(c, "--model", "model", false, "resampler config JSON (desk scale when absent)");
    config_flag(c, staged, "--seed", &RunConfig::seed, "init and batch seed");
    config_flag(c, staged, "--stage", &RunConfig::stage, "frozen, gaze_only or perceiver_and_gaze");
    config_flag(c, staged, "--steps", &RunConfig::steps, "gradient steps");
    config_flag(c, staged, "--lr", &RunConfig::lr, "learning rate");
    config_flag(c, staged, "--batch", &RunConfig::batch, "batch size");
    c.run = run_train_demo;
  }
  {
    auto& c = add("evaluate", "dual-order pairwise judging of two response sets");
    path_flag(c, "--dataset", "dataset", true, "JSONL {key, question, fact, gt_answer}");
    path_flag(c, "--a", "a", true, "responses of model A, JSONL {key, response}");
    path_flag(c, "--b", "b", true, "responses of model B");
    path_flag(c, "--out", "out", true, "JSON report");
    path_flag(c, "--audit", "audit", false, "JSONL audit log (default <out>.audit.jsonl)");
    path_flag(c, "--reward", "reward", false, "reward scorer: word-count or a URL");
    config_flag(c, staged, "--judge", &RunConfig::judge, "rule:<name>, mock:<file> or a URL");
    config_flag(c, staged, "--modes", &RunConfig::modes, "comma-separated judging modes");
    jobs_flag(c);
    c.run = run_evaluate;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Command* selected = nullptr;
  for (auto& c : commands)
    if (c->app->parsed()) selected = c.get();
  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = config_from_json(read_json(config_path));
    for (const auto& o : selected->overrides) o(cfg);
    if (cfg.jobs == 0) throw UsageError("--jobs must be >= 1");
    return selected->run(cfg, *selected, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n' << selected->app->help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  }
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace voila::cli
