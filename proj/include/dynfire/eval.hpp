#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynfire/gridstack.hpp"
#include "dynfire/model.hpp"

namespace dynfire {

/// Probability that a random positive outranks a random negative, ties
/// counted one half, from average ranks. MetricError for single-class labels.
double auroc(std::span<const float> scores, std::span<const std::uint8_t> labels);

/// Mean clamped binary cross-entropy of one predicted map against truth.
double pixel_mean_bce(std::span<const float> pred, std::span<const float> truth);

enum class EvalMode { online, unrolled };

struct EvalReport {
  std::string variant;
  std::uint64_t stack_fingerprint = 0;
  std::size_t frames = 0;          // scored target frames
  std::vector<double> frame_bce;   // per scored frame, pixel mean
  std::vector<std::int64_t> target_weeks;
  double total_bce = 0.0;          // sum of frame_bce
  double mean_pixel_bce = 0.0;     // total_bce / frames
  std::optional<double> auroc;     // empty when the targets are single-class
  double positive_rate = 0.0;
  bool best = false;
  HiddenState final_state;         // state after the last assimilated frame
};

/// Assimilates validation frames [begin, end) starting from `h0` and scores
/// every fire prediction whose target week (T ahead) lies inside the stack.
/// Parameters are read-only.
EvalReport evaluate_range(const Model& model, const Dataset& val, std::size_t begin, std::size_t end,
                          const HiddenState& h0, EvalMode mode = EvalMode::online);

/// Whole validation stream. ConfigError when it has fewer than T+1 frames or
/// when the model dims do not match the stack.
EvalReport evaluate_stream(const Model& model, const Dataset& val, const HiddenState& h0,
                           EvalMode mode = EvalMode::online);

/// State at the end of the training stream, used to seed validation.
HiddenState carried_state(const Model& model, const GridStack& train_obs);

/// Fire risk T weeks after the last frame of `obs`.
FireMap predict_ahead(const Model& model, const GridStack& obs, const HiddenState& h0);

struct Comparison {
  std::vector<EvalReport> reports;  // input order, exactly one best
  std::size_t best_index = 0;
  bool tie = false;
  std::vector<std::string> tied;    // variants sharing the lowest total BCE
};

/// Flags the lowest total BCE, breaking ties by variant-name order.
/// ComparisonError for fewer than two reports or mismatched stacks.
Comparison compare_models(std::vector<EvalReport> reports);

/// variant,frames,total_bce,mean_pixel_bce,auroc,positive_rate,best_flag
std::string report_csv(const std::vector<EvalReport>& reports);
std::string comparison_table(const Comparison& comparison);
/// variant,target_week,bce
std::string frame_csv(const EvalReport& report);

}  // namespace dynfire
