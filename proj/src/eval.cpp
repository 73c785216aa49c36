#include "dynfire/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dynfire/ops.hpp"

namespace dynfire {

double auroc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("auroc: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                         " labels");
  }
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (const auto l : labels) {
    if (l > 1) throw MetricError("auroc: labels must be 0 or 1");
    pos += l;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw MetricError("auroc undefined: labels contain a single class");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double pixel_mean_bce(std::span<const float> pred, std::span<const float> truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw DimensionError("pixel_mean_bce: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " targets");
  }
  const double lo = static_cast<float>(kBceClamp), hi = 1.0f - static_cast<float>(kBceClamp);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double t = truth[i];
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("pixel_mean_bce: target outside [0,1]");
    const double p = std::clamp(static_cast<double>(pred[i]), lo, hi);
    acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(pred.size());
}

namespace {

void check_dims(const Model& model, const GridHeader& h) {
  const auto& d = model.dims();
  if (h.channels != d.channels || h.height != d.height || h.width != d.width) {
    throw ConfigError("stack grid [" + std::to_string(h.channels) + "," + std::to_string(h.height) + "," +
                      std::to_string(h.width) + "] does not match model dims [" + std::to_string(d.channels) + "," +
                      std::to_string(d.height) + "," + std::to_string(d.width) + "]");
  }
}

}  // namespace

EvalReport evaluate_range(const Model& model, const Dataset& val, std::size_t begin, std::size_t end,
                          const HiddenState& h0, EvalMode mode) {
  check_dims(model, val.observations.header);
  if (begin > end || end > val.frames()) throw DomainError("evaluate_range: bad frame range");
  const std::size_t horizon = model.dims().horizon;

  std::vector<FireMap> preds;
  HiddenState last = h0;
  if (mode == EvalMode::online) {
    for (std::size_t k = begin; k < end; ++k) {
      last = model.assimilate(last, val.observations.observation(k));
      if (k + horizon < val.frames()) preds.push_back(model.decode_fire(last));
    }
  } else if (end > begin) {
    std::vector<ObservationFrame> frames;
    for (std::size_t k = begin; k < end; ++k) frames.push_back(val.observations.observation(k));
    auto out = model.forward_trajectory(frames, h0);
    last = out.states.back();
    for (std::size_t i = 0; i < out.fire_predictions.size(); ++i)
      if (begin + i + horizon < val.frames()) preds.push_back(std::move(out.fire_predictions[i]));
  }

  EvalReport r;
  r.variant = to_string(model.variant());
  r.stack_fingerprint = val.observations.fingerprint();
  r.final_state = last;
  std::vector<float> scores;
  std::vector<std::uint8_t> labels;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::size_t target = begin + i + horizon;
    const FireMap truth = val.fire.fire_map(target);
    const double b = pixel_mean_bce(preds[i].grid.data(), truth.grid.data());
    r.frame_bce.push_back(b);
    r.target_weeks.push_back(truth.week_index);
    r.total_bce += b;
    for (std::size_t p = 0; p < truth.grid.size(); ++p) {
      const bool lab = truth.grid[p] >= 0.5f;
      scores.push_back(preds[i].grid[p]);
      labels.push_back(lab ? 1 : 0);
      positives += lab ? 1 : 0;
    }
  }
  r.frames = preds.size();
  r.mean_pixel_bce = r.frames ? r.total_bce / static_cast<double>(r.frames) : 0.0;
  r.positive_rate = labels.empty() ? 0.0 : static_cast<double>(positives) / static_cast<double>(labels.size());
  if (positives > 0 && positives < labels.size()) r.auroc = auroc(scores, labels);
  return r;
}

EvalReport evaluate_stream(const Model& model, const Dataset& val, const HiddenState& h0, EvalMode mode) {
  val.validate();
  check_dims(model, val.observations.header);
  if (val.frames() < model.dims().horizon + 1) {
    throw ConfigError("validation stream has " + std::to_string(val.frames()) + " frames, need at least T+1 = " +
                      std::to_string(model.dims().horizon + 1));
  }
  return evaluate_range(model, val, 0, val.frames(), h0, mode);
}

HiddenState carried_state(const Model& model, const GridStack& train_obs) {
  check_dims(model, train_obs.header);
  HiddenState h = model.initial_state(train_obs.week_of(0));
  for (std::size_t k = 0; k < train_obs.frames(); ++k) h = model.assimilate(h, train_obs.observation(k));
  return h;
}

FireMap predict_ahead(const Model& model, const GridStack& obs, const HiddenState& h0) {
  check_dims(model, obs.header);
  if (obs.frames() == 0) throw ConfigError("predict: the stack has no frames");
  HiddenState h = h0;
  for (std::size_t k = 0; k < obs.frames(); ++k) h = model.assimilate(h, obs.observation(k));
  return model.decode_fire(h);
}

Comparison compare_models(std::vector<EvalReport> reports) {
  if (reports.size() < 2) throw ComparisonError("comparison needs at least two reports");
  for (const auto& r : reports) {
    if (r.stack_fingerprint != reports[0].stack_fingerprint || r.frames != reports[0].frames) {
      throw ComparisonError("report '" + r.variant + "' was computed on a different validation stack than '" +
                            reports[0].variant + "'");
    }
  }
  Comparison c;
  const double lowest =
      std::min_element(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
        return a.total_bce < b.total_bce;
      })->total_bce;
  bool found = false;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    reports[i].best = false;
    if (reports[i].total_bce != lowest) continue;
    c.tied.push_back(reports[i].variant);
    if (!found || reports[i].variant < reports[c.best_index].variant) c.best_index = i;
    found = true;
  }
  reports[c.best_index].best = true;
  c.tie = c.tied.size() > 1;
  std::sort(c.tied.begin(), c.tied.end());
  c.reports = std::move(reports);
  return c;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::string out = "variant,frames,total_bce,mean_pixel_bce,auroc,positive_rate,best_flag\n";
  for (const auto& r : reports) {
    out += r.variant + "," + std::to_string(r.frames) + "," + num(r.total_bce) + "," + num(r.mean_pixel_bce) + "," +
           (r.auroc ? num(*r.auroc) : std::string("N/A")) + "," + num(r.positive_rate) + "," +
           (r.best ? "1" : "0") + "\n";
  }
  return out;
}

std::string comparison_table(const Comparison& c) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-18s %7s %12s %10s %8s %9s  %s\n", "variant", "frames", "total_bce",
                "mean_bce", "auroc", "pos_rate", "best");
  out += line;
  for (const auto& r : c.reports) {
    std::snprintf(line, sizeof(line), "%-18s %7zu %12.4f %10.6f %8s %9.5f  %s\n", r.variant.c_str(), r.frames,
                  r.total_bce, r.mean_pixel_bce, r.auroc ? num(*r.auroc).substr(0, 8).c_str() : "N/A",
                  r.positive_rate, r.best ? "*" : "");
    out += line;
  }
  if (c.tie) {
    out += "note: tie on total BCE between";
    for (const auto& v : c.tied) out += " " + v;
    out += "; broken by variant-name order\n";
  }
  return out;
}

std::string frame_csv(const EvalReport& r) {
  std::string out = "variant,target_week,bce\n";
  for (std::size_t i = 0; i < r.frame_bce.size(); ++i) {
    out += r.variant + "," + std::to_string(r.target_weeks[i]) + "," + num(r.frame_bce[i]) + "\n";
  }
  return out;
}

}  // namespace dynfire
