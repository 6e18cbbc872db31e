// SPDX-License-Identifier: Apache-2.0

#include "gsn/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>

#include "gsn/checkpoint.hpp"
#include "gsn/dists.hpp"
#include "gsn/error.hpp"

namespace gsn {

// ---- config -----------------------------------------------------------------

namespace {

constexpr double kMaxExactInteger = 9007199254740992.0;  // 2^53

std::size_t parse_count(std::string_view key, std::string_view text) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(std::string(key), "expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

double parse_real(std::string_view key, std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError(std::string(key), "expected a finite real, got '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::size_t> parse_widths(std::string_view key, std::string_view text) {
  std::vector<std::size_t> out;
  if (text.empty() || text == "none") return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string_view part = text.substr(start, comma == std::string_view::npos ? text.npos : comma - start);
    out.push_back(parse_count(key, part));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string count_text(std::size_t v) { return std::to_string(v); }

std::string widths_text(const std::vector<std::size_t>& w) {
  if (w.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> text;
  std::function<void(TrainConfig&, std::string_view)> parse;
  std::function<std::vector<double>(const TrainConfig&)> numeric;
  std::function<void(TrainConfig&, const std::vector<double>&)> from_numeric;
};

std::size_t numeric_count(std::string_view key, const std::vector<double>& v, std::size_t i = 0) {
  if (v.size() <= i || v[i] < 0 || v[i] != std::floor(v[i]) || v[i] >= kMaxExactInteger) {
    throw ConfigError(std::string(key), "stored value is not a non-negative integer");
  }
  return static_cast<std::size_t>(v[i]);
}

Field count_field(const char* key, std::size_t TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return count_text(c.*member); },
          [member, key](TrainConfig& c, std::string_view t) { c.*member = parse_count(key, t); },
          [member](const TrainConfig& c) { return std::vector<double>{static_cast<double>(c.*member)}; },
          [member, key](TrainConfig& c, const std::vector<double>& v) {
            if (v.size() != 1) throw ConfigError(key, "stored value must be a single number");
            c.*member = numeric_count(key, v);
          }};
}

Field real_field(const char* key, double TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return format_shortest(c.*member); },
          [member, key](TrainConfig& c, std::string_view t) { c.*member = parse_real(key, t); },
          [member](const TrainConfig& c) { return std::vector<double>{c.*member}; },
          [member, key](TrainConfig& c, const std::vector<double>& v) {
            if (v.size() != 1 || !std::isfinite(v[0])) throw ConfigError(key, "stored value must be a finite number");
            c.*member = v[0];
          }};
}

Field widths_field(const char* key, std::vector<std::size_t> TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return widths_text(c.*member); },
          [member, key](TrainConfig& c, std::string_view t) { c.*member = parse_widths(key, t); },
          [member](const TrainConfig& c) {
            std::vector<double> out;
            for (auto w : c.*member) out.push_back(static_cast<double>(w));
            return out;
          },
          [member, key](TrainConfig& c, const std::vector<double>& v) {
            std::vector<std::size_t> w;
            for (std::size_t i = 0; i < v.size(); ++i) w.push_back(numeric_count(key, v, i));
            c.*member = std::move(w);
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(count_field("unroll", &TrainConfig::unroll));
    f.push_back(count_field("batch", &TrainConfig::batch));
    f.push_back(real_field("lr_gen", &TrainConfig::lr_gen));
    f.push_back(real_field("lr_guide", &TrainConfig::lr_guide));
    f.push_back(real_field("lambda_vfe", &TrainConfig::lambda_vfe));
    f.push_back(real_field("lambda_shape", &TrainConfig::lambda_shape));
    f.push_back(real_field("lambda_mm", &TrainConfig::lambda_mm));
    f.push_back(real_field("beta1", &TrainConfig::beta1));
    f.push_back(real_field("beta2", &TrainConfig::beta2));
    f.push_back(real_field("eps", &TrainConfig::eps));
    f.push_back(count_field("steps", &TrainConfig::steps));
    f.push_back(count_field("seed", &TrainConfig::seed));
    f.push_back(count_field("checkpoint_interval", &TrainConfig::checkpoint_interval));
    f.push_back(count_field("guide_ratio", &TrainConfig::guide_ratio));
    f.push_back(count_field("latent_dim", &TrainConfig::latent_dim));
    f.push_back(widths_field("encoder_hidden", &TrainConfig::encoder_hidden));
    f.push_back(widths_field("decoder_hidden", &TrainConfig::decoder_hidden));
    f.push_back(widths_field("guide_hidden", &TrainConfig::guide_hidden));
    f.push_back({"decoder",
                 [](const TrainConfig& c) { return std::string(c.decoder == DecoderFamily::gaussian ? "gaussian" : "bernoulli"); },
                 [](TrainConfig& c, std::string_view t) {
                   if (t == "gaussian") {
                     c.decoder = DecoderFamily::gaussian;
                   } else if (t == "bernoulli") {
                     c.decoder = DecoderFamily::bernoulli;
                   } else {
                     throw ConfigError("decoder", "expected gaussian or bernoulli, got '" + std::string(t) + "'");
                   }
                 },
                 [](const TrainConfig& c) { return std::vector<double>{c.decoder == DecoderFamily::gaussian ? 0.0 : 1.0}; },
                 [](TrainConfig& c, const std::vector<double>& v) {
                   if (v.size() != 1 || (v[0] != 0.0 && v[0] != 1.0)) throw ConfigError("decoder", "stored value must be 0 or 1");
                   c.decoder = v[0] == 0.0 ? DecoderFamily::gaussian : DecoderFamily::bernoulli;
                 }});
    f.push_back({"vfe_targets",
                 [](const TrainConfig& c) { return std::string(c.vfe_through_chain ? "chain" : "detached"); },
                 [](TrainConfig& c, std::string_view t) {
                   if (t == "detached") {
                     c.vfe_through_chain = false;
                   } else if (t == "chain") {
                     c.vfe_through_chain = true;
                   } else {
                     throw ConfigError("vfe_targets", "expected detached or chain, got '" + std::string(t) + "'");
                   }
                 },
                 [](const TrainConfig& c) { return std::vector<double>{c.vfe_through_chain ? 1.0 : 0.0}; },
                 [](TrainConfig& c, const std::vector<double>& v) {
                   if (v.size() != 1 || (v[0] != 0.0 && v[0] != 1.0)) throw ConfigError("vfe_targets", "stored value must be 0 or 1");
                   c.vfe_through_chain = v[0] == 1.0;
                 }});
    return f;
  }();
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& f : fields())
    if (key == f.key) return f;
  throw ConfigError(std::string(key), "unknown configuration key");
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const char* key, const char* what) { throw ConfigError(key, what); };
  if (unroll < 1) fail("unroll", "must be at least 1");
  if (batch < 2) fail("batch", "must be at least 2");
  if (!(lr_gen > 0.0)) fail("lr_gen", "must be positive");
  if (!(lr_guide > 0.0)) fail("lr_guide", "must be positive");
  if (!(lambda_vfe >= 0.0)) fail("lambda_vfe", "must be non-negative");
  if (!(lambda_shape >= 0.0)) fail("lambda_shape", "must be non-negative");
  if (!(lambda_mm >= 0.0)) fail("lambda_mm", "must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must lie in [0, 1)");
  if (!(eps > 0.0)) fail("eps", "must be positive");
  if (static_cast<double>(seed) >= kMaxExactInteger) fail("seed", "must be below 2^53");
  if (checkpoint_interval < 1) fail("checkpoint_interval", "must be at least 1");
  if (guide_ratio < 1) fail("guide_ratio", "must be at least 1");
  if (latent_dim < 1) fail("latent_dim", "must be at least 1");
  for (auto w : encoder_hidden)
    if (w < 1) fail("encoder_hidden", "widths must be positive");
  for (auto w : decoder_hidden)
    if (w < 1) fail("decoder_hidden", "widths must be positive");
  for (auto w : guide_hidden)
    if (w < 1) fail("guide_hidden", "widths must be positive");
}

GsnLayout TrainConfig::layout(std::size_t data_dim) const {
  return {data_dim, latent_dim, encoder_hidden, decoder_hidden, decoder};
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.text(cfg));
  return out;
}

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) { field(key).parse(cfg, value); }

bool is_config_key(std::string_view key) {
  return std::any_of(fields().begin(), fields().end(), [&](const Field& f) { return key == f.key; });
}

std::vector<std::pair<std::string, std::vector<double>>> config_numeric(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::vector<double>>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.numeric(cfg));
  return out;
}

void set_config_numeric(TrainConfig& cfg, std::string_view key, const std::vector<double>& values) {
  field(key).from_numeric(cfg, values);
}

// ---- Adam -------------------------------------------------------------------

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
    throw InvalidArgument("Adam: invalid hyperparameters");
  }
}

void Adam::step(ParamStore& params, const ParamStore& grads) {
  for (const auto& [name, g] : grads) {
    if (params.get(name).shape() != g.shape()) throw ShapeError("Adam: gradient shape mismatch for " + name);
    if (!m_.contains(name)) {
      m_.add(name, Tensor(g.shape()));
      v_.add(name, Tensor(g.shape()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    auto p = params.values(name);
    auto m = m_.values(name);
    auto v = v_.values(name);
    const auto gv = g.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gv[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gv[i] * gv[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void Adam::restore(std::size_t t, ParamStore m, ParamStore v) {
  if (m.names() != v.names()) throw InvalidArgument("Adam::restore: moment buffers disagree");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

// ---- generator --------------------------------------------------------------

GeneratorTerms generator_objective(const SimpleGsn& g, const SimpleGsn::Bound& bound, const Guide& guide,
                                   const Mlp::Bound& guide_vars, ad::Var data_batch, const DataStats& stats,
                                   const TrainConfig& cfg, NoiseSource& noise) {
  ad::Tape& tape = *data_batch.tape();
  const Trajectory traj = unroll_chain(g, bound, data_batch, cfg.unroll, noise);
  GeneratorTerms terms;
  ad::Var vfe_sum;
  for (std::size_t t = 0; t < traj.length(); ++t) {
    ad::Var target = traj.states[t];
    DiagGaussian post = traj.posteriors[t];
    ObservationDist recon = traj.reconstructions[t];
    if (t > 0 && !cfg.vfe_through_chain) {
      target = tape.constant(target.value());
      post = g.encode(bound, target);
      recon = g.decode(bound, gauss_sample_reparam(post, tape.constant(traj.noise_z[t])));
    }
    const ad::Var nll = ad::neg(ad::mean(observation_log_prob(target, recon)));
    const ad::Var kl = ad::mean(kl_gauss_to_std(post));
    terms.vfe_steps.push_back(ad::add(nll, kl));
    vfe_sum = t == 0 ? terms.vfe_steps.back() : ad::add(vfe_sum, terms.vfe_steps.back());
  }
  terms.vfe = ad::scale(vfe_sum, 1.0 / static_cast<double>(traj.length()));

  const std::vector<ad::Var> emitted(traj.states.begin() + 1, traj.states.end());
  const ad::Var pooled = ad::concat_rows(emitted);
  terms.shape = loss_g(guide, guide_vars, pooled);
  terms.moment = moment_match_loss(pooled, stats.mean, stats.covariance);

  ad::Var total = ad::scale(terms.vfe, cfg.lambda_vfe);
  if (cfg.lambda_shape != 0.0) total = ad::add(total, ad::scale(terms.shape, cfg.lambda_shape));
  if (cfg.lambda_mm != 0.0) total = ad::add(total, ad::scale(terms.moment, cfg.lambda_mm));
  terms.total = total;
  return terms;
}

namespace {

bool all_finite(const ParamStore& p) {
  return std::all_of(p.begin(), p.end(), [](const auto& kv) { return kv.second.all_finite(); });
}

}  // namespace

GeneratorReport generator_step(SimpleGsn& g, Adam& opt, const Guide& guide, const Tensor& data_batch,
                               const DataStats& stats, const TrainConfig& cfg, NoiseSource& noise) {
  GeneratorReport report;
  try {
    ad::Tape tape;
    const auto bound = g.bind(tape, true);
    const auto guide_vars = guide.net().bind(tape, false);
    const GeneratorTerms terms =
        generator_objective(g, bound, guide, guide_vars, tape.constant(data_batch), stats, cfg, noise);
    for (const auto& v : terms.vfe_steps) report.vfe_steps.push_back(v.value().item());
    report.vfe = terms.vfe.value().item();
    report.loss_g = terms.shape.value().item();
    report.moment = terms.moment.value().item();
    report.total = terms.total.value().item();

    const ad::Gradients grads = tape.backward(terms.total);
    const ParamStore grad_store = g.gradients(bound, grads);
    if (!all_finite(grad_store)) throw NumericError("non-finite generator gradient");

    ParamStore params = g.parameters();
    Adam next = opt;
    next.step(params, grad_store);
    if (!all_finite(params)) throw NumericError("non-finite generator parameters after update");
    g.set_parameters(params);
    opt = std::move(next);
  } catch (const NumericError& e) {
    report.rolled_back = true;
    report.event = std::string("generator step rolled back: ") + e.what();
  }
  return report;
}

// ---- guide ------------------------------------------------------------------

Tensor generated_batch(const SimpleGsn& g, const Tensor& data_batch, std::size_t unroll, NoiseSource& noise,
                       Stream& pick) {
  const std::size_t n = data_batch.rows(), d = data_batch.cols();
  const auto states = sample_chain(g, data_batch, unroll, noise);
  std::vector<std::size_t> pool(n * unroll);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + pick.below(pool.size() - i)]);
  Tensor out({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t t = 1 + pool[r] / n, row = pool[r] % n;
    for (std::size_t j = 0; j < d; ++j) out(r, j) = states[t](row, j);
  }
  return out;
}

GuideReport guide_step(Guide& guide, Adam& opt, const Tensor& data_batch, const Tensor& generated) {
  GuideReport report;
  try {
    ad::Tape tape;
    const auto vars = guide.net().bind(tape, true);
    const ad::Var data = tape.constant(data_batch);
    const ad::Var gen = tape.constant(generated);
    const ad::Var loss = loss_f(guide, vars, data, gen);
    report.loss_f = loss.value().item();
    report.score_data = ad::mean(guide.scores(vars, data)).value().item();
    report.score_gen = ad::mean(guide.scores(vars, gen)).value().item();

    const ad::Gradients grads = tape.backward(loss);
    const ParamStore grad_store = gradients_of(guide.net(), vars, grads);
    if (!all_finite(grad_store)) throw NumericError("non-finite guide gradient");
    ParamStore params = guide.net().params();
    Adam next = opt;
    next.step(params, grad_store);
    if (!all_finite(params)) throw NumericError("non-finite guide parameters after update");
    guide.net().params() = std::move(params);
    opt = std::move(next);
  } catch (const NumericError& e) {
    report.rolled_back = true;
    report.event = std::string("guide step rolled back: ") + e.what();
  }
  return report;
}

// ---- history ----------------------------------------------------------------

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  const std::size_t steps_t = history.records.empty() ? 0 : history.records.front().vfe_steps.size();
  out << "step,loss_f,loss_g,vfe,moment,total,score_data,score_gen,rolled_back";
  for (std::size_t t = 1; t <= steps_t; ++t) out << ",vfe_" << t;
  out << '\n';
  for (const auto& r : history.records) {
    out << r.step << ',' << format_real(r.loss_f) << ',' << format_real(r.loss_g) << ',' << format_real(r.vfe) << ','
        << format_real(r.moment) << ',' << format_real(r.total) << ',' << format_real(r.score_data) << ','
        << format_real(r.score_gen) << ',' << (r.rolled_back ? 1 : 0);
    for (std::size_t t = 0; t < steps_t; ++t) out << ',' << format_real(t < r.vfe_steps.size() ? r.vfe_steps[t] : 0.0);
    out << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

// ---- loop -------------------------------------------------------------------

TrainState TrainState::initial(const TrainConfig& cfg, std::size_t data_dim) {
  cfg.validate();
  const Stream root(cfg.seed);
  return {cfg,
          SimpleGsn::init(cfg.layout(data_dim), root.split("gsn-init").key()),
          Guide::init(data_dim, cfg.guide_hidden, root.split("guide-init").key()),
          Adam(cfg.lr_gen, cfg.beta1, cfg.beta2, cfg.eps),
          Adam(cfg.lr_guide, cfg.beta1, cfg.beta2, cfg.eps),
          0};
}

std::filesystem::path checkpoint_name(const std::filesystem::path& dir, std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt-%06zu.gsnc", step);
  return dir / buf;
}

namespace {

Tensor draw_batch(const Dataset& data, std::size_t batch, Stream rng) {
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = rng.below(data.size());
  return data.rows(idx);
}

}  // namespace

TrainHistory train_loop(TrainState& state, const Dataset& data, const std::filesystem::path& checkpoint_dir) {
  const TrainConfig& cfg = state.config;
  cfg.validate();
  if (state.gsn.data_dim() != data.dim()) {
    throw ShapeError("train_loop: model expects " + std::to_string(state.gsn.data_dim()) + " columns, dataset has " +
                     std::to_string(data.dim()));
  }
  const DataStats stats{data.mean(), data.covariance()};
  TrainHistory history;
  auto save = [&] {
    if (checkpoint_dir.empty()) return;
    std::filesystem::create_directories(checkpoint_dir);
    const auto path = checkpoint_name(checkpoint_dir, state.step);
    save_checkpoint(path, state, data);
    history.checkpoints.push_back(path);
  };
  save();

  const Stream root = Stream(cfg.seed).split("train");
  while (state.step < cfg.steps) {
    const Stream iter = root.split(static_cast<std::uint64_t>(state.step));
    const Tensor batch = draw_batch(data, cfg.batch, iter.split("batch"));

    HistoryRecord rec;
    rec.step = state.step + 1;
    for (std::size_t r = 0; r < cfg.guide_ratio; ++r) {
      const Tensor guide_batch = r == 0 ? batch : draw_batch(data, cfg.batch, iter.split("batch").split(r));
      GaussianNoise noise(iter.split("guide-noise").split(r));
      Stream pick = iter.split("guide-pick").split(r);
      const Tensor gen = generated_batch(state.gsn, guide_batch, cfg.unroll, noise, pick);
      const GuideReport gr = guide_step(state.guide, state.guide_opt, guide_batch, gen);
      rec.loss_f = gr.loss_f;
      rec.score_data = gr.score_data;
      rec.score_gen = gr.score_gen;
      if (gr.rolled_back) {
        rec.rolled_back = true;
        history.events.push_back("step " + std::to_string(rec.step) + ": " + gr.event);
      }
    }

    GaussianNoise gen_noise(iter.split("generator-noise"));
    const GeneratorReport g = generator_step(state.gsn, state.gen_opt, state.guide, batch, stats, cfg, gen_noise);
    rec.loss_g = g.loss_g;
    rec.vfe = g.vfe;
    rec.vfe_steps = g.vfe_steps;
    rec.moment = g.moment;
    rec.total = g.total;
    if (g.rolled_back) {
      rec.rolled_back = true;
      rec.vfe_steps.assign(cfg.unroll, std::numeric_limits<double>::quiet_NaN());
      history.events.push_back("step " + std::to_string(rec.step) + ": " + g.event);
    }
    history.records.push_back(std::move(rec));
    ++state.step;
    if (state.step % cfg.checkpoint_interval == 0 || state.step == cfg.steps) save();
  }
  return history;
}

TrainHistory train_loop(const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& checkpoint_dir) {
  TrainState state = TrainState::initial(cfg, data.dim());
  return train_loop(state, data, checkpoint_dir);
}

// ---- evaluation -------------------------------------------------------------

namespace {

double frobenius(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

EvalReport evaluate(const SimpleGsn& g, const Guide& guide, const Dataset& data, std::size_t n_chains,
                    std::size_t t_eval, std::uint64_t seed) {
  if (n_chains < 1) throw InvalidArgument("evaluate: need at least one chain");
  if (t_eval == 0 && n_chains < 2) throw InvalidArgument("evaluate: statistics need at least two samples");
  const Stream root = Stream(seed).split("evaluate");
  Stream pick = root.split("starts");
  std::vector<std::size_t> idx(n_chains);
  for (auto& i : idx) i = pick.below(data.size());
  const Tensor starts = data.rows(idx);
  GaussianNoise noise(root.split("chain"));

  EvalReport rep;
  rep.states = sample_chain(g, starts, t_eval, noise);
  const std::size_t d = data.dim();

  const std::size_t first = t_eval == 0 ? 0 : 1;
  Tensor pooled({n_chains * (rep.states.size() - first), d});
  for (std::size_t t = first, r = 0; t < rep.states.size(); ++t)
    for (std::size_t i = 0; i < n_chains; ++i, ++r)
      for (std::size_t j = 0; j < d; ++j) pooled(r, j) = rep.states[t](i, j);
  const Dataset samples(pooled);
  rep.sample_mean = samples.mean();
  rep.sample_cov = samples.covariance();
  rep.data_mean = data.mean();
  rep.data_cov = data.covariance();

  double trace = 0.0, mean_diff = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    trace += rep.data_cov(j, j);
    mean_diff += std::pow(rep.sample_mean[j] - rep.data_mean[j], 2);
  }
  rep.mean_rel_error = std::sqrt(mean_diff) / std::max(frobenius(rep.data_mean), std::sqrt(trace));
  Tensor cov_diff = rep.sample_cov;
  for (std::size_t i = 0; i < cov_diff.size(); ++i) cov_diff[i] -= rep.data_cov[i];
  rep.cov_rel_error = frobenius(cov_diff) / frobenius(rep.data_cov);

  const auto on_data = guide.scores(data.samples());
  for (double f : on_data) {
    rep.score_data += f;
    rep.abs_score_data += std::abs(f);
  }
  rep.score_data /= static_cast<double>(on_data.size());
  rep.abs_score_data /= static_cast<double>(on_data.size());
  const auto on_samples = guide.scores(pooled);
  for (double f : on_samples) rep.score_samples += f;
  rep.score_samples /= static_cast<double>(on_samples.size());

  std::vector<double> disp;
  for (std::size_t t = 1; t < rep.states.size(); ++t)
    for (std::size_t i = 0; i < n_chains; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += std::pow(rep.states[t](i, j) - rep.states[t - 1](i, j), 2);
      disp.push_back(std::sqrt(s));
    }
  if (!disp.empty()) {
    for (double v : disp) rep.displacement_mean += v;
    rep.displacement_mean /= static_cast<double>(disp.size());
    std::sort(disp.begin(), disp.end());
    const std::size_t h = disp.size() / 2;
    rep.displacement_median = disp.size() % 2 ? disp[h] : 0.5 * (disp[h - 1] + disp[h]);
  }
  return rep;
}

}  // namespace gsn
