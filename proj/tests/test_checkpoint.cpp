// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "gsn/checkpoint.hpp"
#include "gsn/error.hpp"
#include "gsn/image.hpp"
#include "temp_dir.hpp"

using namespace gsn;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.unroll = 2;
  c.batch = 8;
  c.steps = 3;
  c.encoder_hidden = {3};
  c.decoder_hidden = {3};
  c.guide_hidden = {3};
  return c;
}

struct Fixture {
  Dataset data = make_ring_of_gaussians(4, 1.0, 0.2, 32, 0);
  TrainState state = TrainState::initial(small_config(), 2);
  Fixture() { train_loop(state, data); }
};

std::string record_error(const std::vector<Record>& recs) {
  try {
    (void)checkpoint_from_records(recs);
  } catch (const FormatError& e) {
    return e.record();
  }
  return {};
}

Record* find(std::vector<Record>& recs, const std::string& name) {
  for (auto& r : recs)
    if (r.name == name) return &r;
  return nullptr;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

}  // namespace

TEST_CASE("raw records round trip, including empty payloads") {
  TempDir dir("records");
  const std::vector<Record> recs = {
      {"a", {2, 3}, {1, 2, 3, 4, 5, -0.0}},
      {"empty", {0}, {}},
      {"scalar", {1}, {std::numeric_limits<double>::min()}},
  };
  write_records(dir / "r.gsnc", recs);
  CHECK(read_records(dir / "r.gsnc") == recs);
  CHECK(slurp(dir / "r.gsnc").substr(0, 4) == "GSNC");
}

TEST_CASE("trained state and dataset round trip bit-exactly") {
  TempDir dir("state");
  const Fixture fx;
  save_checkpoint(dir / "c.gsnc", fx.state, fx.data);
  const Checkpoint back = load_checkpoint(dir / "c.gsnc");
  CHECK(back.state == fx.state);
  CHECK(back.data.samples() == fx.data.samples());
  CHECK(back.state.gen_opt.steps() == 3);
  save_checkpoint(dir / "d.gsnc", back.state, back.data);
  CHECK(slurp(dir / "c.gsnc") == slurp(dir / "d.gsnc"));
}

TEST_CASE("malformed files name the failing record") {
  TempDir dir("malformed");
  const Fixture fx;
  save_checkpoint(dir / "c.gsnc", fx.state, fx.data);
  const std::string good = slurp(dir / "c.gsnc");

  auto read_error = [&](const std::string& bytes) {
    spit(dir / "x.gsnc", bytes);
    try {
      (void)load_checkpoint(dir / "x.gsnc");
    } catch (const FormatError& e) {
      return e.record();
    }
    return std::string("<none>");
  };

  CHECK(read_error("XXXX" + good.substr(4)) == "header");
  CHECK(read_error(good.substr(0, 2)) == "header");
  CHECK(read_error(good + "z") == "trailer");
  const std::string cut = good.substr(0, good.size() - 3);
  CHECK(read_error(cut) == "data.samples");

  std::string nan_file = good;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  nan_file.replace(nan_file.size() - 8, 8, reinterpret_cast<const char*>(&nan), 8);
  CHECK(read_error(nan_file) == "data.samples");

  try {
    (void)load_checkpoint(dir / "missing.gsnc");
    FAIL("expected IoError");
  } catch (const IoError&) {
  }
}

TEST_CASE("inconsistent records are rejected by name") {
  const Fixture fx;
  const auto good = checkpoint_records(fx.state, fx.data);
  CHECK(record_error(good).empty());

  {
    auto r = good;
    r.push_back(r.front());
    CHECK(record_error(r) == r.front().name);
  }
  {
    auto r = good;
    r.push_back({"stray", {1}, {0}});
    CHECK(record_error(r) == "stray");
  }
  {
    auto r = good;
    r.push_back({"config.colour", {1}, {0}});
    CHECK(record_error(r) == "config.colour");
  }
  {
    auto r = good;
    std::erase_if(r, [](const Record& x) { return x.name == "meta.step"; });
    CHECK(record_error(r) == "meta.step");
  }
  {
    auto r = good;
    find(r, "meta.step")->values[0] = 1.5;
    CHECK(record_error(r) == "meta.step");
  }
  {
    auto r = good;
    find(r, "config.unroll")->values[0] = 0;
    CHECK(record_error(r) == "config.unroll");
  }
  {
    auto r = good;
    std::erase_if(r, [](const Record& x) { return x.name == "data.samples"; });
    CHECK(record_error(r) == "data.samples");
  }
  {
    auto r = good;
    find(r, "config.encoder_hidden")->values[0] = 5;
    CHECK(record_error(r) == "gsn.enc.w0");
  }
  {
    auto r = good;
    find(r, "config.guide_hidden")->values[0] = 5;
    CHECK(record_error(r) == "guide.w0");
  }
  {
    auto r = good;
    Record* w = find(r, "gsn.dec.w1");
    REQUIRE(w);
    w->extents = {w->extents[1], w->extents[0]};
    CHECK(record_error(r).starts_with("gsn.dec."));
  }
  {
    auto r = good;
    std::erase_if(r, [](const Record& x) { return x.name == "opt.gen.t"; });
    CHECK(record_error(r) == "opt.gen.t");
  }
  {
    auto r = good;
    Record* m = find(r, "opt.guide.m.w0");
    REQUIRE(m);
    m->extents.push_back(1);
    CHECK(record_error(r) == "opt.guide.m.w0");
  }
}

TEST_CASE("ppm header and pixel count") {
  TempDir dir("ppm");
  Stream s(1);
  const Tensor pts = s.normal(50, 2);
  const Image img = scatter({{&pts, {200, 0, 0}, 1}});
  CHECK(img.width == kGridSize);
  CHECK(img.height == kGridSize);
  write_ppm(dir / "p.ppm", img);
  const std::string bytes = slurp(dir / "p.ppm");
  const std::string header = "P6\n512 512\n255\n";
  CHECK(bytes.substr(0, header.size()) == header);
  CHECK(bytes.size() == header.size() + 3 * 512 * 512);
  std::size_t red = 0;
  for (const Rgb& p : img.pixels) red += (p.r == 200 && p.g == 0 && p.b == 0);
  CHECK(red >= 50);
}
