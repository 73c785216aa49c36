// Acceptance run: one PASS/FAIL line per top-level requirement.
//
//   acceptance            run everything
//   acceptance 3 6        run only criteria 3 and 6
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "composed_suite.hpp"
#include "dynfire/checkpoint.hpp"
#include "dynfire/eval.hpp"
#include "dynfire/gridstack.hpp"
#include "dynfire/simulator.hpp"
#include "dynfire/training.hpp"
#include "primitive_suite.hpp"
#include "test_util.hpp"

using namespace dynfire;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- shared fixtures --------------------------------------------------------

constexpr std::size_t kWeeks = 520;

const Dataset& default_train() {
  static const Dataset d = temporal_split(generate_dataset(SimConfig{}, kWeeks, 0)).first;
  return d;
}

TrainConfig default_config() {
  TrainConfig c;
  c.iterations = 500;
  return c;
}

// One reference run shared by the determinism and learning criteria.
struct ReferenceRun {
  TrainResult result;
  double seconds = 0.0;
  fs::path dir;
};

const ReferenceRun& reference_run() {
  static const ReferenceRun r = [] {
    ReferenceRun out;
    out.dir = fs::temp_directory_path() / "dynfire_acceptance_a";
    fs::remove_all(out.dir);
    TrainConfig c = default_config();
    c.checkpoint_interval = 250;
    const auto t0 = Clock::now();
    out.result = train_run(c, default_train(), {out.dir, std::nullopt, {}});
    out.seconds = seconds_since(t0);
    return out;
  }();
  return r;
}

// ---- criteria ---------------------------------------------------------------

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  double worst32 = 0.0, worst64 = 0.0;
  std::string where32, where64;
  for (const auto& [name, err] : testing::primitive_grad_errors<float>(1e-3))
    if (err >= worst32) worst32 = err, where32 = name;
  for (const auto& [name, err] : testing::primitive_grad_errors<double>(1e-6))
    if (err >= worst64) worst64 = err, where64 = name;
  for (const auto& c : testing::composed_loss_checks<float>(1e-3, 1e-3))
    if (c.result.max_rel_error >= worst32) worst32 = c.result.max_rel_error, where32 = c.label;
  for (const auto& c : testing::composed_loss_checks<double>(1e-6, 1e-3))
    if (c.result.max_rel_error >= worst64) worst64 = c.result.max_rel_error, where64 = c.label;
  const double secs = seconds_since(t0);
  return {worst32 < 1e-3 && worst64 < 1e-6 && secs < 60.0,
          "32-bit worst " + fmt("%.2e", worst32) + " (" + where32 + "), 64-bit worst " + fmt("%.2e", worst64) + " (" +
              where64 + "), " + fmt("%.1f s", secs)};
}

Outcome online_offline() {
  SimConfig sc;
  const Dataset val = generate_dataset(sc, 60, 7);
  ModelDims d;
  double worst = 0.0;
  for (const Variant v : all_variants()) {
    const Model m = Model::initialize(v, d, 3);
    const HiddenState h0 = m.initial_state(val.observations.week_of(0));
    const auto on = evaluate_stream(m, val, h0, EvalMode::online);
    const auto un = evaluate_stream(m, val, h0, EvalMode::unrolled);
    worst = std::max({worst, std::abs(on.total_bce - un.total_bce), std::abs(on.mean_pixel_bce - un.mean_pixel_bce),
                      std::abs(on.positive_rate - un.positive_rate)});
    if (on.auroc.has_value() != un.auroc.has_value()) return {false, to_string(v) + ": AUROC defined in one mode only"};
    if (on.auroc) worst = std::max(worst, std::abs(*on.auroc - *un.auroc));
    for (std::size_t i = 0; i < on.frame_bce.size(); ++i)
      worst = std::max(worst, std::abs(on.frame_bce[i] - un.frame_bce[i]));
  }
  return {worst <= 1e-6, "max metric difference " + fmt("%.2e", worst) + " over 3 variants"};
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const ReferenceRun& a = reference_run();
  const fs::path dir_b = fs::temp_directory_path() / "dynfire_acceptance_b";
  fs::remove_all(dir_b);
  TrainConfig c = default_config();
  c.checkpoint_interval = 250;
  const TrainResult b = train_run(c, default_train(), {dir_b, std::nullopt, {}});

  bool same_files = a.result.checkpoints.size() == b.checkpoints.size();
  for (std::size_t i = 0; same_files && i < b.checkpoints.size(); ++i)
    same_files = file_bytes(a.result.checkpoints[i]) == file_bytes(b.checkpoints[i]);
  const bool same_log = metrics_csv(a.result.state.history) == metrics_csv(b.state.history);

  // Resume from the midpoint checkpoint and finish the run.
  TrainState mid = load_train_checkpoint(a.dir / "ckpt_000250.dfck", default_train());
  const TrainResult resumed = train_run(c, default_train(), {{}, std::move(mid), {}});
  const bool same_resume = encode_train_checkpoint(resumed.state) == encode_train_checkpoint(a.result.state) &&
                           metrics_csv(resumed.state.history) == metrics_csv(a.result.state.history);
  fs::remove_all(dir_b);
  std::ostringstream s;
  s << a.result.checkpoints.size() << " checkpoints " << (same_files ? "identical" : "DIFFER") << ", metrics log "
    << (same_log ? "identical" : "DIFFERS") << ", resume@250 " << (same_resume ? "identical" : "DIFFERS");
  return {same_files && same_log && same_resume, s.str()};
}

Outcome ttur_contract() {
  const TturSchedule s;
  double prev = s.ratio(0);
  bool strict = true;
  std::uint64_t bad = 0;
  for (std::uint64_t n = 1; n <= 100000; ++n) {
    const double r = s.ratio(n);
    if (!(r < prev)) {
      strict = false;
      bad = n;
      break;
    }
    prev = r;
  }
  const double factor = s.ratio(10000) / s.ratio(0);
  std::string detail = strict ? "strictly decreasing on 0..1e5" : "not decreasing at n=" + std::to_string(bad);
  detail += ", ratio(1e4)/ratio(0) = " + fmt("%.6f", factor);
  return {strict && factor < 0.1, detail};
}

Outcome learning_smoke() {
  const ReferenceRun& a = reference_run();
  std::vector<double> sys0, sys1, pred0, pred1;
  for (const auto& r : a.result.state.history) {
    if (r.n <= 100) sys0.push_back(r.l_sys), pred0.push_back(r.l_pred);
    if (r.n >= 400) sys1.push_back(r.l_sys), pred1.push_back(r.l_pred);
  }
  const double ds = 1.0 - median(sys1) / median(sys0), dp = 1.0 - median(pred1) / median(pred0);
  const bool pass = ds >= 0.2 && dp >= 0.2 && a.seconds < 600.0;
  return {pass, "l_sys median " + fmt("%.4f", median(sys0)) + " -> " + fmt("%.4f", median(sys1)) + " (" +
                    fmt("%.1f%%", 100 * ds) + "), l_pred median " + fmt("%.4f", median(pred0)) + " -> " +
                    fmt("%.4f", median(pred1)) + " (" + fmt("%.1f%%", 100 * dp) + "), " +
                    fmt("%.0f s", a.seconds)};
}

Outcome headline() {
  int wins = 0;
  std::ostringstream s;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SimConfig sc;
    sc.dropout_p = 0.5;
    const auto [train, val] = temporal_split(generate_dataset(sc, kWeeks, 1000 + seed));
    double total[2];
    int i = 0;
    for (const Variant v : {Variant::dynamic_autoenc, Variant::static_generative}) {
      TrainConfig c = default_config();
      c.variant = v;
      c.seed = seed;
      const Model m = train_run(c, train).state.model();
      total[i++] = evaluate_stream(m, val, carried_state(m, train.observations)).total_bce;
    }
    const bool win = total[0] < total[1];
    wins += win;
    s << (seed ? " " : "") << fmt("%.2f", total[0]) << (win ? "<" : ">=") << fmt("%.2f", total[1]);
    std::fprintf(stderr, "  headline seed %llu: dynamic %.3f static %.3f\n", static_cast<unsigned long long>(seed),
                 total[0], total[1]);
  }
  return {wins >= 7, std::to_string(wins) + "/10 seeds won by dynamic_autoenc [" + s.str() + "]"};
}

double pairwise_auroc(const std::vector<float>& p, const std::vector<std::uint8_t>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p.size(); ++j)
      if (y[i] && !y[j]) {
        pairs += 1.0;
        wins += p[i] > p[j] ? 1.0 : p[i] == p[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

Outcome metric_oracles() {
  Rng rng(99);
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<float> p(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<float>(rng.below(6)) / 5.0f;
      y[i] = rng.bernoulli(0.5);
    }
    y[0] = 1;
    y[1] = 0;
    exact += auroc(p, y) == pairwise_auroc(p, y);
  }
  const Dataset val = generate_dataset(SimConfig{}, 40, 3);
  ModelDims d;
  Model m = Model::initialize(Variant::static_generative, d, 1);
  for (auto& e : m.mutable_params()) e.tensor.fill(0.0f);
  const double bce = evaluate_stream(m, val, m.initial_state(0)).mean_pixel_bce;
  const double gap = std::abs(bce - std::log(2.0));
  return {exact == 100 && gap <= 1e-6,
          std::to_string(exact) + "/100 AUROC instances exact, constant-0.5 BCE - ln2 = " + fmt("%.1e", gap)};
}

GridStack random_stack(std::uint64_t seed) {
  Rng rng(seed);
  GridStack s;
  s.header.height = 1 + rng.below(9);
  s.header.width = 1 + rng.below(9);
  s.header.channels = 1 + rng.below(4);
  s.header.frame_count = 1 + rng.below(12);
  s.header.first_week = static_cast<std::int64_t>(rng.below(500));
  for (std::size_t c = 0; c < s.header.channels; ++c) {
    s.header.channel_names.push_back("c" + std::to_string(c));
    s.header.channel_min.push_back(rng.uniform(-5.0, 0.0));
    s.header.channel_max.push_back(rng.uniform(0.0, 5.0));
  }
  s.payload.resize(s.header.frame_count * s.header.frame_size());
  for (auto& v : s.payload) v = static_cast<float>(rng.uniform());
  return s;
}

Outcome format_round_trip() {
  int exact = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const GridStack s = random_stack(seed);
    const auto bytes = encode_stack(s);
    const GridStack back = decode_stack(bytes);
    exact += back == s && encode_stack(back) == bytes &&
             std::memcmp(back.payload.data(), s.payload.data(), s.payload.size() * sizeof(float)) == 0;
  }
  // Corruptions must be rejected with the byte offset of the fault.
  const auto good = encode_stack(random_stack(77));
  int positioned = 0;
  auto expect_offset = [&](std::vector<std::uint8_t> bytes, auto ok) {
    try {
      decode_stack(bytes);
    } catch (const FormatError& e) {
      positioned += ok(e.offset()) && std::string(e.what()).find("offset") != std::string::npos;
    }
  };
  auto magic = good;
  magic[1] ^= 0xff;
  expect_offset(magic, [](std::uint64_t o) { return o == 0; });
  auto json = good;
  json[16] = '#';
  expect_offset(json, [](std::uint64_t o) { return o >= 14; });
  auto value = good;
  const float bad = -1.0f;
  std::memcpy(value.data() + value.size() - 8, &bad, 4);
  expect_offset(value, [&](std::uint64_t o) { return o == good.size() - 8; });
  auto truncated = good;
  truncated.resize(truncated.size() - 3);
  expect_offset(truncated, [](std::uint64_t o) { return o > 0; });

  GridStack hundred = random_stack(5);
  hundred.header.frame_count = 100;
  hundred.payload.assign(100 * hundred.header.frame_size(), 0.25f);
  const auto [tr, va] = temporal_split(hundred);
  const bool split = tr.frames() == 70 && va.frames() == 30 && va.header.first_week == hundred.header.first_week + 70;
  return {exact == 50 && positioned == 4 && split, std::to_string(exact) + "/50 round trips bit-exact, " +
                                                       std::to_string(positioned) + "/4 corruptions positioned, split " +
                                                       std::to_string(tr.frames()) + "/" + std::to_string(va.frames())};
}

Outcome variant_contracts() {
  ModelDims d;
  d.height = 8;
  d.width = 8;
  d.state = 8;
  d.feature = 8;
  int refused = 0;
  std::set<std::string> messages;
  for (const Variant v : {Variant::gru_baseline, Variant::static_generative}) {
    const Model m = Model::initialize(v, d, 2);
    for (int rep = 0; rep < 3; ++rep) {
      try {
        m.decode_obs(m.initial_state(0));
      } catch (const UnsupportedVariantError& e) {
        ++refused;
        messages.insert(to_string(v) + ":" + e.what());
      }
    }
  }
  const Model gen = Model::initialize(Variant::static_generative, d, 4);
  std::vector<ObservationFrame> frames;
  for (int k = 0; k < 6; ++k)
    frames.push_back({testing::random_tensor<float>({d.channels, d.height, d.width}, 200 + k, 0.0, 1.0), k});
  auto predict = [&](const std::vector<ObservationFrame>& fs) {
    HiddenState h = gen.initial_state(0);
    for (const auto& f : fs) h = gen.assimilate(h, f);
    return gen.decode_fire(h).grid;
  };
  const auto base = predict(frames);
  int invariant = 0;
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<ObservationFrame> shuffled(frames.begin(), frames.end() - 1);
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    shuffled.push_back(frames.back());
    invariant += predict(shuffled) == base;
  }
  return {refused == 6 && messages.size() == 2 && invariant == 10,
          std::to_string(refused) + "/6 decode_obs calls refused with stable messages, " + std::to_string(invariant) +
              "/10 permutations leave static predictions unchanged"};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"gradient integrity", gradient_integrity},
      {"online/offline equivalence", online_offline},
      {"determinism", determinism},
      {"TTUR contract", ttur_contract},
      {"learning smoke test", learning_smoke},
      {"headline directional claim", headline},
      {"metric oracles", metric_oracles},
      {"format round-trip", format_round_trip},
      {"variant contracts", variant_contracts},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(static_cast<std::size_t>(std::stoul(argv[i])));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s [%zu] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
