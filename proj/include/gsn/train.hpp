// SPDX-License-Identifier: Apache-2.0
//
// Alternating training of a Simple GSN and its guide. Each iteration trains
// the guide on data against frozen chain samples, then trains the generator
// on the unrolled chain: per-step free energy on (x_{t-1}, z_t), shaping of
// the emitted states x_1..x_T, optional moment matching, all through BPTT.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gsn/data.hpp"
#include "gsn/nets.hpp"
#include "gsn/rng.hpp"
#include "gsn/sgsn.hpp"
#include "gsn/shaping.hpp"

namespace gsn {

struct TrainConfig {
  std::size_t unroll = 5;
  std::size_t batch = 64;
  double lr_gen = 1e-3;
  double lr_guide = 2e-3;
  double lambda_vfe = 1.0;
  double lambda_shape = 1.0;
  double lambda_mm = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t steps = 2000;
  std::size_t seed = 0;
  std::size_t checkpoint_interval = 500;
  std::size_t guide_ratio = 1;

  std::size_t latent_dim = 2;
  std::vector<std::size_t> encoder_hidden{32, 32};
  std::vector<std::size_t> decoder_hidden{32, 32};
  std::vector<std::size_t> guide_hidden{32, 32};
  DecoderFamily decoder = DecoderFamily::gaussian;
  /// Chain states enter the free-energy term as constants ("detached") or
  /// as differentiable nodes ("chain").
  bool vfe_through_chain = false;

  /// Throws ConfigError naming the first offending key.
  void validate() const;
  GsnLayout layout(std::size_t data_dim) const;

  bool operator==(const TrainConfig&) const = default;
};

/// Config keys in a fixed order, each with its value rendered as text.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg);
/// Parses `value` into the field named `key`; unknown keys and bad values
/// throw ConfigError.
void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);
bool is_config_key(std::string_view key);
/// Numeric form of each field as used by checkpoints.
std::vector<std::pair<std::string, std::vector<double>>> config_numeric(const TrainConfig& cfg);
void set_config_numeric(TrainConfig& cfg, std::string_view key, const std::vector<double>& values);

/// Adam with per-name moment buffers, created on first update.
class Adam {
 public:
  Adam() = default;
  Adam(double lr, double beta1, double beta2, double eps);

  void step(ParamStore& params, const ParamStore& grads);

  double lr() const noexcept { return lr_; }
  std::size_t steps() const noexcept { return t_; }
  const ParamStore& first_moment() const noexcept { return m_; }
  const ParamStore& second_moment() const noexcept { return v_; }
  void restore(std::size_t t, ParamStore m, ParamStore v);

  bool operator==(const Adam&) const = default;

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::size_t t_ = 0;
  ParamStore m_, v_;
};

struct DataStats {
  Tensor mean;
  Tensor covariance;
};

/// Differentiable pieces of the generator objective on one tape.
struct GeneratorTerms {
  std::vector<ad::Var> vfe_steps;  // batch-mean free energy of pair t
  ad::Var vfe;                     // mean over t
  ad::Var shape;                   // loss_g on x_1..x_T
  ad::Var moment;                  // moment match on x_1..x_T
  ad::Var total;
};

/// Unrolls cfg.unroll steps from `data_batch` and assembles the weighted
/// objective. By default the free-energy term treats each pair
/// (x_{t-1}, z_t) as training data: states after x_0 are re-encoded from
/// constant copies with the chain's own noise. With cfg.vfe_through_chain
/// the term differentiates through the states as well. Shaping and moment
/// terms always differentiate through the whole chain. Guide variables
/// should be bound frozen.
GeneratorTerms generator_objective(const SimpleGsn& g, const SimpleGsn::Bound& bound, const Guide& guide,
                                   const Mlp::Bound& guide_vars, ad::Var data_batch, const DataStats& stats,
                                   const TrainConfig& cfg, NoiseSource& noise);

struct GeneratorReport {
  std::vector<double> vfe_steps;
  double vfe = 0.0, loss_g = 0.0, moment = 0.0, total = 0.0;
  bool rolled_back = false;
  std::string event;
};

/// One Adam update of the encoder and decoder. A non-finite loss or update
/// leaves `g` and `opt` untouched and reports rolled_back.
GeneratorReport generator_step(SimpleGsn& g, Adam& opt, const Guide& guide, const Tensor& data_batch,
                               const DataStats& stats, const TrainConfig& cfg, NoiseSource& noise);

struct GuideReport {
  double loss_f = 0.0;
  double score_data = 0.0;  // mean f on the data batch
  double score_gen = 0.0;   // mean f on the generated batch
  bool rolled_back = false;
  std::string event;
};

/// Chain states x_1..x_T from frozen `g`, pooled and subsampled without
/// replacement to the data batch size.
Tensor generated_batch(const SimpleGsn& g, const Tensor& data_batch, std::size_t unroll, NoiseSource& noise,
                       Stream& pick);

/// One Adam update of the guide on loss_f against `generated`.
GuideReport guide_step(Guide& guide, Adam& opt, const Tensor& data_batch, const Tensor& generated);

struct HistoryRecord {
  std::size_t step = 0;  // 1-based
  double loss_f = 0.0, loss_g = 0.0, vfe = 0.0, moment = 0.0, total = 0.0;
  std::vector<double> vfe_steps;
  double score_data = 0.0, score_gen = 0.0;
  bool rolled_back = false;

  bool operator==(const HistoryRecord&) const = default;
};

struct TrainHistory {
  std::vector<HistoryRecord> records;
  std::vector<std::string> events;
  std::vector<std::filesystem::path> checkpoints;
};

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

/// Everything needed to continue a run bit-exactly.
struct TrainState {
  TrainConfig config;
  SimpleGsn gsn;
  Guide guide;
  Adam gen_opt;
  Adam guide_opt;
  std::size_t step = 0;

  static TrainState initial(const TrainConfig& cfg, std::size_t data_dim);
  bool operator==(const TrainState&) const = default;
};

/// Runs iterations state.step .. cfg.steps - 1. When `checkpoint_dir` is set,
/// writes ckpt-<step>.gsnc at the starting step, every checkpoint interval
/// and at the end. Randomness for iteration s depends only on (seed, s).
TrainHistory train_loop(TrainState& state, const Dataset& data, const std::filesystem::path& checkpoint_dir = {});
TrainHistory train_loop(const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& checkpoint_dir = {});

std::filesystem::path checkpoint_name(const std::filesystem::path& dir, std::size_t step);

struct EvalReport {
  Tensor sample_mean;
  Tensor sample_cov;
  Tensor data_mean;
  Tensor data_cov;
  /// ||mu_g - mu_d|| / max(||mu_d||, sqrt(tr cov_d)).
  double mean_rel_error = 0.0;
  /// ||cov_g - cov_d||_F / ||cov_d||_F.
  double cov_rel_error = 0.0;
  double score_data = 0.0;
  double abs_score_data = 0.0;
  double score_samples = 0.0;
  double displacement_mean = 0.0;
  double displacement_median = 0.0;
  /// x_0 .. x_T, each n_chains x d.
  std::vector<Tensor> states;
};

/// Samples n_chains chains of t_eval steps from data starts. Statistics pool
/// x_1..x_T; with t_eval = 0 they describe the starts.
EvalReport evaluate(const SimpleGsn& g, const Guide& guide, const Dataset& data, std::size_t n_chains,
                    std::size_t t_eval, std::uint64_t seed);

}  // namespace gsn
