// SPDX-License-Identifier: Apache-2.0
//
// gsn-shaper <train|sample|verify|export> [flags]
//
// Exit codes: 0 ok, 1 verification failed, 2 usage or config, 3 missing
// input, 4 corrupt artifact.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gsn/checkpoint.hpp"
#include "gsn/data.hpp"
#include "gsn/error.hpp"
#include "gsn/image.hpp"
#include "gsn/suites.hpp"
#include "gsn/train.hpp"

#ifndef GSN_VERSION
#define GSN_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum Exit : int { kOk = 0, kVerifyFailed = 1, kUsage = 2, kMissing = 3, kCorrupt = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_input(const fs::path& p) {
  if (!fs::exists(p)) throw MissingInput(p.string() + ": no such file");
}

// ---- config -----------------------------------------------------------------

struct RunConfig {
  gsn::TrainConfig train;
  std::string dataset = "ring";
  std::string data_path;
  std::size_t data_n = 4096;
  std::size_t data_holdout = 1024;
  std::size_t data_k = 8;
  double data_radius = 1.0;
  double data_std = 0.3;
  double data_inner = 1.0;
  double data_outer = 2.0;
  double data_turns = 2.0;
  std::optional<std::size_t> data_seed;
  std::size_t eval_chains = 512;
  std::size_t eval_steps = 5;
  std::size_t eval_seed = 7;
};

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  try {
    if (!v.empty() && v[0] != '-') {
      const unsigned long long n = std::stoull(v, &pos);
      if (pos == v.size()) return static_cast<std::size_t>(n);
    }
  } catch (const std::exception&) {
  }
  throw gsn::ConfigError(key, "expected a non-negative integer, got '" + v + "'");
}

double to_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  try {
    const double d = std::stod(v, &pos);
    if (pos == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  throw gsn::ConfigError(key, "expected a finite real, got '" + v + "'");
}

void set_value(RunConfig& c, const std::string& key, const std::string& value) {
  if (gsn::is_config_key(key)) {
    gsn::set_config_value(c.train, key, value);
  } else if (key == "dataset") {
    if (value != "ring" && value != "two_circles" && value != "spiral" && value != "csv") {
      throw gsn::ConfigError(key, "expected ring, two_circles, spiral or csv, got '" + value + "'");
    }
    c.dataset = value;
  } else if (key == "data_path") {
    c.data_path = value;
  } else if (key == "data_n") {
    c.data_n = to_count(key, value);
  } else if (key == "data_holdout") {
    c.data_holdout = to_count(key, value);
  } else if (key == "data_k") {
    c.data_k = to_count(key, value);
  } else if (key == "data_radius") {
    c.data_radius = to_real(key, value);
  } else if (key == "data_std") {
    c.data_std = to_real(key, value);
  } else if (key == "data_inner") {
    c.data_inner = to_real(key, value);
  } else if (key == "data_outer") {
    c.data_outer = to_real(key, value);
  } else if (key == "data_turns") {
    c.data_turns = to_real(key, value);
  } else if (key == "data_seed") {
    c.data_seed = to_count(key, value);
  } else if (key == "eval_chains") {
    c.eval_chains = to_count(key, value);
  } else if (key == "eval_steps") {
    c.eval_steps = to_count(key, value);
  } else if (key == "eval_seed") {
    c.eval_seed = to_count(key, value);
  } else {
    throw gsn::ConfigError(key, "unknown configuration key");
  }
}

std::vector<std::pair<std::string, std::string>> entries(const RunConfig& c) {
  auto out = gsn::config_entries(c.train);
  auto add = [&](const char* k, std::string v) { out.emplace_back(k, std::move(v)); };
  add("dataset", c.dataset);
  add("data_path", c.data_path);
  add("data_n", std::to_string(c.data_n));
  add("data_holdout", std::to_string(c.data_holdout));
  add("data_k", std::to_string(c.data_k));
  add("data_radius", gsn::format_shortest(c.data_radius));
  add("data_std", gsn::format_shortest(c.data_std));
  add("data_inner", gsn::format_shortest(c.data_inner));
  add("data_outer", gsn::format_shortest(c.data_outer));
  add("data_turns", gsn::format_shortest(c.data_turns));
  add("data_seed", std::to_string(c.data_seed.value_or(c.train.seed)));
  add("eval_chains", std::to_string(c.eval_chains));
  add("eval_steps", std::to_string(c.eval_steps));
  add("eval_seed", std::to_string(c.eval_seed));
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  s = s.substr(b, e - b + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

std::pair<std::string, std::string> split_assignment(const std::string& text, const std::string& where) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw UsageError(where + ": expected key = value, got '" + text + "'");
  std::string key = trim(text.substr(0, eq));
  if (key.empty()) throw UsageError(where + ": empty key");
  return {key, trim(text.substr(eq + 1))};
}

// `key = value` per line; '#' starts a comment.
void apply_config_file(RunConfig& c, const fs::path& path) {
  require_input(path);
  std::ifstream in(path);
  if (!in) throw gsn::IoError(path.string(), "cannot open for reading");
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto [k, v] = split_assignment(line, path.string() + ":" + std::to_string(lineno));
    set_value(c, k, v);
  }
}

RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  RunConfig c;
  if (!config_path.empty()) apply_config_file(c, config_path);
  for (const auto& o : overrides) {
    const auto [k, v] = split_assignment(o, "--set");
    set_value(c, k, v);
  }
  c.train.validate();
  if (c.dataset == "csv" && c.data_path.empty()) throw gsn::ConfigError("data_path", "required when dataset = csv");
  return c;
}

// ---- manifest ---------------------------------------------------------------

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("GSN_SHAPER_OUT"); env && *env) return env;
  return "gsn-out";
}

class Manifest {
 public:
  Manifest(fs::path dir, const std::string& run) : dir_(std::move(dir)), path_(dir_ / (run + ".manifest.json")) {
    if (fs::exists(path_)) throw UsageError(path_.string() + " already exists; choose a fresh --out directory");
    fs::create_directories(dir_);
    doc_["artifact"] = "gsn-shaper";
    doc_["version"] = GSN_VERSION;
    doc_["command"] = run;
    doc_["started"] = utc_now();
    doc_["finished"] = nullptr;
    doc_["status"] = "running";
    doc_["outputs"] = json::array();
  }

  json& operator[](const char* key) { return doc_[key]; }
  fs::path output(const std::string& name) {
    doc_["outputs"].push_back(name);
    return dir_ / name;
  }
  void write() const {
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw gsn::IoError(path_.string(), "cannot open for writing");
    out << doc_.dump(2) << '\n';
  }
  void finish(const std::string& status) {
    doc_["finished"] = utc_now();
    doc_["status"] = status;
    write();
  }

 private:
  fs::path dir_;
  fs::path path_;
  json doc_;
};

json config_json(const std::vector<std::pair<std::string, std::string>>& e) {
  json out = json::object();
  for (const auto& [k, v] : e) out[k] = v;
  return out;
}

// ---- shared output helpers --------------------------------------------------

void write_trajectory_csv(const fs::path& path, const std::vector<gsn::Tensor>& states) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw gsn::IoError(path.string(), "cannot open for writing");
  const std::size_t chains = states.front().rows(), d = states.front().cols();
  out << "chain,t";
  for (std::size_t j = 0; j < d; ++j) out << ",x" << j;
  out << '\n';
  for (std::size_t c = 0; c < chains; ++c)
    for (std::size_t t = 0; t < states.size(); ++t) {
      out << c << ',' << t;
      for (std::size_t j = 0; j < d; ++j) out << ',' << gsn::format_real(states[t](c, j));
      out << '\n';
    }
  if (!out) throw gsn::IoError(path.string(), "write failed");
}

gsn::Tensor stack(const std::vector<gsn::Tensor>& states, std::size_t first) {
  const std::size_t n = states.front().rows(), d = states.front().cols();
  gsn::Tensor out({n * (states.size() - first), d});
  for (std::size_t t = first, r = 0; t < states.size(); ++t)
    for (std::size_t i = 0; i < n; ++i, ++r)
      for (std::size_t j = 0; j < d; ++j) out(r, j) = states[t](i, j);
  return out;
}

const gsn::Rgb kDataColor{170, 170, 170};
const gsn::Rgb kSampleColor{30, 80, 200};

std::vector<gsn::Tensor> sample_from(const gsn::Checkpoint& ck, std::size_t chains, std::size_t steps,
                                     std::uint64_t seed) {
  const gsn::Stream root = gsn::Stream(seed).split("sample");
  gsn::Stream pick = root.split("starts");
  std::vector<std::size_t> idx(chains);
  for (auto& i : idx) i = pick.below(ck.data.size());
  gsn::GaussianNoise noise(root.split("chain"));
  return gsn::sample_chain(ck.state.gsn, ck.data.rows(idx), steps, noise);
}

void write_sample_grid(const fs::path& path, const gsn::Dataset& data, const std::vector<gsn::Tensor>& states) {
  const gsn::Tensor pts = stack(states, states.size() > 1 ? 1 : 0);
  gsn::write_ppm(path, gsn::scatter({{&data.samples(), kDataColor, 0}, {&pts, kSampleColor, 1}}));
}

gsn::Checkpoint open_checkpoint(const fs::path& path) {
  require_input(path);
  return gsn::load_checkpoint(path);
}

// ---- commands ---------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out_flag) {
  const RunConfig cfg = resolve_config(config_path, overrides);
  const std::size_t data_seed = cfg.data_seed.value_or(cfg.train.seed);
  const fs::path out = output_root(out_flag);

  std::optional<gsn::Dataset> train_data, holdout;
  if (cfg.dataset == "csv") {
    require_input(cfg.data_path);
    train_data = gsn::load_csv(cfg.data_path);
    holdout = train_data;
  } else {
    auto make = [&](std::size_t n, std::uint64_t s) {
      if (cfg.dataset == "ring") return gsn::make_ring_of_gaussians(cfg.data_k, cfg.data_radius, cfg.data_std, n, s);
      if (cfg.dataset == "two_circles") return gsn::make_two_circles(n, cfg.data_inner, cfg.data_outer, cfg.data_std, s);
      return gsn::make_spiral(n, cfg.data_turns, cfg.data_std, s);
    };
    try {
      train_data = make(cfg.data_n, data_seed);
      holdout = make(cfg.data_holdout, data_seed + 1);
    } catch (const gsn::InvalidArgument& e) {
      throw gsn::ConfigError("dataset", e.what());
    }
  }

  Manifest manifest(out, "train");
  manifest["seed"] = cfg.train.seed;
  manifest["config"] = config_json(entries(cfg));
  const fs::path history_path = manifest.output("history.csv");
  const fs::path eval_path = manifest.output("eval.csv");
  const fs::path events_path = manifest.output("events.log");
  manifest["checkpoint_dir"] = "checkpoints";
  manifest.write();

  gsn::TrainState state = gsn::TrainState::initial(cfg.train, train_data->dim());
  const gsn::TrainHistory history = gsn::train_loop(state, *train_data, out / "checkpoints");
  gsn::write_history_csv(history_path, history);
  {
    std::ofstream ev(events_path, std::ios::trunc);
    for (const auto& e : history.events) ev << e << '\n';
  }
  for (const auto& c : history.checkpoints) manifest["outputs"].push_back(fs::relative(c, out).string());

  const gsn::EvalReport rep =
      gsn::evaluate(state.gsn, state.guide, *holdout, cfg.eval_chains, cfg.eval_steps, cfg.eval_seed);
  {
    std::ofstream ev(eval_path, std::ios::binary | std::ios::trunc);
    ev << "metric,value\n";
    auto row = [&](const char* k, double v) { ev << k << ',' << gsn::format_real(v) << '\n'; };
    row("mean_rel_error", rep.mean_rel_error);
    row("cov_rel_error", rep.cov_rel_error);
    row("score_data", rep.score_data);
    row("abs_score_data", rep.abs_score_data);
    row("score_samples", rep.score_samples);
    row("displacement_mean", rep.displacement_mean);
    row("displacement_median", rep.displacement_median);
    for (std::size_t j = 0; j < rep.sample_mean.size(); ++j) {
      const std::string k = "sample_mean_" + std::to_string(j);
      row(k.c_str(), rep.sample_mean[j]);
    }
    for (std::size_t i = 0; i < rep.sample_cov.size(); ++i) {
      const std::string k = "sample_cov_" + std::to_string(i);
      row(k.c_str(), rep.sample_cov[i]);
    }
  }
  manifest.finish("completed");

  std::printf("trained %zu steps, %zu rolled back\n", history.records.size(), history.events.size());
  std::printf("held-out mean |f| %.4f, mean error %.4f, covariance error %.4f\n", rep.abs_score_data,
              rep.mean_rel_error, rep.cov_rel_error);
  std::printf("outputs in %s\n", out.string().c_str());
  return kOk;
}

int cmd_sample(const std::string& checkpoint, std::size_t chains, std::size_t steps, std::uint64_t seed,
               const std::string& out_flag) {
  if (chains < 1) throw UsageError("--chains must be at least 1");
  const gsn::Checkpoint ck = open_checkpoint(checkpoint);
  Manifest manifest(output_root(out_flag), "sample");
  manifest["seed"] = seed;
  manifest["config"] = json{{"checkpoint", checkpoint}, {"chains", chains}, {"steps", steps}};
  const fs::path csv = manifest.output("trajectory.csv");
  const fs::path ppm = manifest.output("samples.ppm");
  manifest.write();

  const auto states = sample_from(ck, chains, steps, seed);
  write_trajectory_csv(csv, states);
  write_sample_grid(ppm, ck.data, states);
  manifest.finish("completed");
  std::printf("%zu chains x %zu steps -> %s\n", chains, steps, csv.string().c_str());
  return kOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& out_flag) {
  const auto& names = gsn::suite_names();
  if (std::find(names.begin(), names.end(), suite) == names.end()) throw UsageError("unknown suite '" + suite + "'");
  Manifest manifest(output_root(out_flag), "verify-" + suite);
  manifest["seed"] = seed;
  manifest["config"] = json{{"suite", suite}};
  const fs::path csv = manifest.output("verify-" + suite + ".csv");
  manifest.write();

  const gsn::SuiteReport report = gsn::run_suite(suite, seed);
  gsn::write_report_csv(csv, report);
  for (const auto& c : report.checks) {
    std::printf("%-4s %s: %s (%s)\n", c.pass ? "ok" : "FAIL", c.check.c_str(), c.value.c_str(), c.tolerance.c_str());
  }
  const bool ok = report.passed();
  manifest["passed"] = ok;
  manifest.finish(ok ? "passed" : "failed");
  return ok ? kOk : kVerifyFailed;
}

int cmd_export(const std::string& checkpoint, const std::string& dataset, const std::string& format, std::size_t chains,
               std::size_t steps, std::uint64_t seed, const std::string& out_flag) {
  if (format != "csv" && format != "ppm") throw UsageError("unknown export format '" + format + "'; use csv or ppm");
  if (checkpoint.empty() == dataset.empty()) throw UsageError("pass exactly one of --checkpoint or --dataset");

  std::optional<gsn::Checkpoint> ck;
  std::optional<gsn::Dataset> data;
  if (!checkpoint.empty()) {
    ck = open_checkpoint(checkpoint);
    data = ck->data;
  } else {
    require_input(dataset);
    data = gsn::load_csv(dataset);
  }

  Manifest manifest(output_root(out_flag), "export");
  manifest["seed"] = seed;
  manifest["config"] = json{{"source", checkpoint.empty() ? dataset : checkpoint}, {"format", format}};
  fs::path target;
  if (format == "csv") {
    target = manifest.output("data.csv");
    manifest.write();
    gsn::save_csv(*data, target);
  } else if (ck) {
    target = manifest.output("samples.ppm");
    manifest.write();
    write_sample_grid(target, ck->data, sample_from(*ck, chains, steps, seed));
  } else {
    target = manifest.output("data.ppm");
    manifest.write();
    gsn::write_ppm(target, gsn::scatter({{&data->samples(), kSampleColor, 1}}));
  }
  manifest.finish("completed");
  std::printf("wrote %s\n", target.string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simple GSN training with collaborative shaping, plus exact verification suites", "gsn-shaper"};
  app.require_subcommand(1);
  app.set_version_flag("--version", GSN_VERSION);

  std::string out;
  std::uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "train a Simple GSN and its guide");
  std::string config_path;
  std::vector<std::string> overrides;
  train->add_option("--config", config_path, "key = value config file");
  train->add_option("--set", overrides, "override key=value (repeatable, wins over --config)")->take_all();
  train->add_option("--out", out, "output directory (default $GSN_SHAPER_OUT or ./gsn-out)");

  auto* sample = app.add_subcommand("sample", "run chains from a checkpoint");
  std::string checkpoint;
  std::size_t chains = 64, steps = 50;
  sample->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  sample->add_option("--chains", chains, "number of chains");
  sample->add_option("--steps,-T", steps, "transitions per chain");
  sample->add_option("--seed", seed, "random seed");
  sample->add_option("--out", out, "output directory");

  auto* verify = app.add_subcommand("verify", "run a verification suite");
  std::string suite;
  verify->add_option("suite", suite, "theorem1 | corollary2 | theorem3 | vfe-bound | gradcheck | deviance | walkback")
      ->required();
  verify->add_option("--seed", seed, "random seed");
  verify->add_option("--out", out, "output directory");

  auto* exp = app.add_subcommand("export", "export a dataset or sample grid");
  std::string dataset, format = "csv";
  exp->add_option("--checkpoint", checkpoint, "checkpoint file");
  exp->add_option("--dataset", dataset, "dataset CSV");
  exp->add_option("--format", format, "csv | ppm");
  exp->add_option("--chains", chains, "chains for a sample grid");
  exp->add_option("--steps,-T", steps, "steps for a sample grid");
  exp->add_option("--seed", seed, "random seed");
  exp->add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(config_path, overrides, out);
    if (*sample) return cmd_sample(checkpoint, chains, steps, seed, out);
    if (*verify) return cmd_verify(suite, seed, out);
    if (*exp) return cmd_export(checkpoint, dataset, format, chains, steps, seed, out);
  } catch (const gsn::ConfigError& e) {
    std::fprintf(stderr, "config error: key '%s': %s\n", e.key().c_str(), e.what());
    return kUsage;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const MissingInput& e) {
    std::fprintf(stderr, "missing input: %s\n", e.what());
    return kMissing;
  } catch (const gsn::FormatError& e) {
    std::fprintf(stderr, "corrupt artifact: record '%s': %s\n", e.record().c_str(), e.what());
    return kCorrupt;
  } catch (const gsn::ParseError& e) {
    std::fprintf(stderr, "corrupt input: %s\n", e.what());
    return kCorrupt;
  } catch (const gsn::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kMissing;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kVerifyFailed;
  }
  return kUsage;
}
