// SPDX-License-Identifier: Apache-2.0

#include "gsn/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "gsn/error.hpp"

namespace gsn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'S', 'N', 'C'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <class T>
  T get(const std::string& record, const char* what) {
    if (bytes_.size() - pos_ < sizeof(T)) throw FormatError(record, std::string("truncated ") + what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(const std::string& record, std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError(record, "truncated name");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_records(const std::filesystem::path& path, const std::vector<Record>& records) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    std::uint64_t count = 1;
    for (auto e : r.extents) count *= e;
    if (count != r.values.size()) throw ShapeError("write_records: " + r.name + " payload does not match its extents");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.extents.size()));
    for (auto e : r.extents) put<std::uint64_t>(out, e);
    for (double v : r.values) put<double>(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path.string(), "cannot open for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError(path.string(), "write failed");
}

std::vector<Record> read_records(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string(), "cannot open for reading");
  Reader in(std::string(std::istreambuf_iterator<char>(f), {}));

  const std::string header = "header";
  if (in.get_string(header, 4) != std::string(kMagic, 4)) throw FormatError(header, "bad magic, not a GSNC file");
  const auto version = in.get<std::uint32_t>(header, "version");
  if (version != kCheckpointVersion) throw FormatError(header, "unsupported version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>(header, "record count");

  std::vector<Record> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string slot = "#" + std::to_string(i);
    Record r;
    const auto name_len = in.get<std::uint32_t>(slot, "name length");
    r.name = in.get_string(slot, name_len);
    if (r.name.empty()) throw FormatError(slot, "empty record name");
    const auto rank = in.get<std::uint32_t>(r.name, "rank");
    if (rank > 8) throw FormatError(r.name, "implausible rank " + std::to_string(rank));
    std::uint64_t elements = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      r.extents.push_back(in.get<std::uint64_t>(r.name, "extent"));
      if (r.extents.back() > kMaxElements) throw FormatError(r.name, "implausible extent");
      elements *= r.extents.back();
      if (elements > kMaxElements) throw FormatError(r.name, "implausible element count");
    }
    r.values.resize(elements);
    for (auto& v : r.values) {
      v = in.get<double>(r.name, "payload");
      if (!std::isfinite(v)) throw FormatError(r.name, "non-finite payload value");
    }
    records.push_back(std::move(r));
  }
  if (!in.done()) throw FormatError("trailer", "unexpected bytes after the last record");
  return records;
}

// ---- training checkpoints ---------------------------------------------------

namespace {

Record tensor_record(std::string name, const Tensor& t) {
  return {std::move(name), {t.shape().begin(), t.shape().end()}, {t.values().begin(), t.values().end()}};
}

Record scalar_record(std::string name, double v) { return {std::move(name), {1}, {v}}; }

void append_store(std::vector<Record>& out, const std::string& prefix, const ParamStore& store) {
  for (const auto& [name, t] : store) out.push_back(tensor_record(prefix + name, t));
}

Tensor record_tensor(const Record& r) {
  if (r.extents.empty()) throw FormatError(r.name, "tensor record needs rank >= 1");
  Shape shape;
  for (auto e : r.extents) {
    if (e == 0) throw FormatError(r.name, "tensor record has a zero extent");
    shape.push_back(static_cast<std::size_t>(e));
  }
  return Tensor(std::move(shape), r.values);
}

double record_scalar(const Record& r) {
  if (r.values.size() != 1) throw FormatError(r.name, "expected a single value");
  return r.values[0];
}

ParamStore collect(const std::map<std::string, const Record*>& by_name, const std::string& prefix) {
  ParamStore out;
  for (auto it = by_name.lower_bound(prefix); it != by_name.end() && it->first.starts_with(prefix); ++it) {
    out.add(it->first.substr(prefix.size()), record_tensor(*it->second));
  }
  return out;
}

Mlp rebuild_mlp(const std::map<std::string, const Record*>& by_name, const std::string& prefix) {
  ParamStore p = collect(by_name, prefix);
  if (p.size() == 0) throw FormatError(prefix + "w0", "missing network parameters");
  try {
    return Mlp::from_params(std::move(p));
  } catch (const FormatError& e) {
    throw FormatError(prefix + e.record(), e.what());
  }
}

Adam rebuild_adam(const std::map<std::string, const Record*>& by_name, const std::string& prefix, double lr,
                  const TrainConfig& cfg, const ParamStore& params) {
  const auto t_it = by_name.find(prefix + "t");
  if (t_it == by_name.end()) throw FormatError(prefix + "t", "missing record");
  const double t = record_scalar(*t_it->second);
  if (t < 0 || t != std::floor(t)) throw FormatError(prefix + "t", "step counter must be a non-negative integer");
  ParamStore m = collect(by_name, prefix + "m.");
  ParamStore v = collect(by_name, prefix + "v.");
  for (const auto& [name, tensor] : m) {
    if (!params.contains(name) || params.get(name).shape() != tensor.shape()) {
      throw FormatError(prefix + "m." + name, "moment does not match any parameter shape");
    }
    if (!v.contains(name) || v.get(name).shape() != tensor.shape()) {
      throw FormatError(prefix + "v." + name, "missing or mis-shaped second moment");
    }
  }
  if (v.size() != m.size()) throw FormatError(prefix + "v.", "second moments without first moments");
  Adam opt(lr, cfg.beta1, cfg.beta2, cfg.eps);
  opt.restore(static_cast<std::size_t>(t), std::move(m), std::move(v));
  return opt;
}

}  // namespace

std::vector<Record> checkpoint_records(const TrainState& state, const Dataset& data) {
  std::vector<Record> out;
  for (const auto& [key, values] : config_numeric(state.config)) {
    out.push_back({"config." + key, {values.size()}, values});
  }
  out.push_back(scalar_record("meta.step", static_cast<double>(state.step)));
  append_store(out, "gsn.", state.gsn.parameters());
  append_store(out, "guide.", state.guide.net().params());
  for (const auto& [prefix, opt] : {std::pair{"opt.gen.", &state.gen_opt}, std::pair{"opt.guide.", &state.guide_opt}}) {
    out.push_back(scalar_record(std::string(prefix) + "t", static_cast<double>(opt->steps())));
    append_store(out, std::string(prefix) + "m.", opt->first_moment());
    append_store(out, std::string(prefix) + "v.", opt->second_moment());
  }
  out.push_back(tensor_record("data.samples", data.samples()));
  return out;
}

Checkpoint checkpoint_from_records(const std::vector<Record>& records) {
  std::map<std::string, const Record*> by_name;
  for (const auto& r : records) {
    if (!by_name.emplace(r.name, &r).second) throw FormatError(r.name, "duplicate record");
  }

  TrainConfig cfg;
  for (const auto& r : records) {
    if (!r.name.starts_with("config.")) continue;
    const std::string key = r.name.substr(7);
    if (!is_config_key(key)) throw FormatError(r.name, "unknown configuration key");
    if (r.extents.size() != 1) throw FormatError(r.name, "config values must be rank 1");
    try {
      set_config_numeric(cfg, key, r.values);
    } catch (const ConfigError& e) {
      throw FormatError(r.name, e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError("config." + e.key(), e.what());
  }

  const auto step_it = by_name.find("meta.step");
  if (step_it == by_name.end()) throw FormatError("meta.step", "missing record");
  const double step = record_scalar(*step_it->second);
  if (step < 0 || step != std::floor(step)) throw FormatError("meta.step", "step must be a non-negative integer");

  const auto data_it = by_name.find("data.samples");
  if (data_it == by_name.end()) throw FormatError("data.samples", "missing record");
  const Tensor samples = record_tensor(*data_it->second);
  if (samples.rank() != 2 || samples.shape()[0] < 2) throw FormatError("data.samples", "need an n x d matrix with n >= 2");
  Dataset data(samples);

  Mlp enc = rebuild_mlp(by_name, "gsn.enc.");
  Mlp dec = rebuild_mlp(by_name, "gsn.dec.");
  const GsnLayout layout = cfg.layout(data.dim());
  std::vector<std::size_t> want_enc{layout.data_dim};
  want_enc.insert(want_enc.end(), layout.encoder_hidden.begin(), layout.encoder_hidden.end());
  want_enc.push_back(2 * layout.latent_dim);
  std::vector<std::size_t> want_dec{layout.latent_dim};
  want_dec.insert(want_dec.end(), layout.decoder_hidden.begin(), layout.decoder_hidden.end());
  want_dec.push_back(layout.decoder == DecoderFamily::gaussian ? 2 * layout.data_dim : layout.data_dim);
  if (enc.widths() != want_enc) throw FormatError("gsn.enc.w0", "encoder widths disagree with the stored config");
  if (dec.widths() != want_dec) throw FormatError("gsn.dec.w0", "decoder widths disagree with the stored config");
  SimpleGsn gsn(std::move(enc), std::move(dec), layout.decoder);

  Mlp guide_net = rebuild_mlp(by_name, "guide.");
  std::vector<std::size_t> want_guide{data.dim()};
  want_guide.insert(want_guide.end(), cfg.guide_hidden.begin(), cfg.guide_hidden.end());
  want_guide.push_back(1);
  if (guide_net.widths() != want_guide) throw FormatError("guide.w0", "guide widths disagree with the stored config");
  Guide guide(std::move(guide_net));

  Adam gen_opt = rebuild_adam(by_name, "opt.gen.", cfg.lr_gen, cfg, gsn.parameters());
  Adam guide_opt = rebuild_adam(by_name, "opt.guide.", cfg.lr_guide, cfg, guide.net().params());

  for (const auto& r : records) {
    const bool known = r.name.starts_with("config.") || r.name == "meta.step" || r.name == "data.samples" ||
                       r.name.starts_with("gsn.enc.") || r.name.starts_with("gsn.dec.") ||
                       r.name.starts_with("guide.") || r.name.starts_with("opt.gen.") ||
                       r.name.starts_with("opt.guide.");
    if (!known) throw FormatError(r.name, "unrecognized record");
  }

  TrainState state{cfg, std::move(gsn), std::move(guide), std::move(gen_opt), std::move(guide_opt),
                   static_cast<std::size_t>(step)};
  return {std::move(state), std::move(data)};
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const Dataset& data) {
  write_records(path, checkpoint_records(state, data));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_records(read_records(path)); }

}  // namespace gsn
