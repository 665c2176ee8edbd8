#pragma once

// Distribution-free detector thresholds from raw moments of q >= 0.
//
// Given M^j = E[q^j], j = 1..s, every alpha below satisfies
// sup P[q > alpha] <= F over all laws on [0, inf) with those moments:
//
//   Markov, order j:  alpha_j = (M^j / F)^{1/j}          (P[q > a] <= M^j / a^j)
//   Cantelli:         alpha_c = mu + sigma sqrt((1-F)/F)  (s >= 2)
//
// The reported threshold is the smallest of these certificates. Moments are
// normalized by the power of two nearest below M^1 before evaluation and the
// result rescaled.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mnad/model.hpp"
#include "mnad/sim.hpp"
#include "mnad/synthesis.hpp"

namespace mnad {

enum class ThresholdMethod { markov_family, cantelli, combined };

const char* to_string(ThresholdMethod method);

struct ThresholdReport {
  int s = 0;
  std::vector<double> moments;
  double target_rate = 0.0;
  double alpha_star = 0.0;
  double bound_at_alpha = 0.0;
  ThresholdMethod method = ThresholdMethod::markov_family;
  double scale = 1.0;
  int markov_order = 0;  // j of the best Markov certificate
};

ThresholdReport tune_threshold(std::span<const double> moments, double target_rate);

/// Tightest certified tail bound at `alpha` from the given moments.
double certified_tail_bound(std::span<const double> moments, double alpha);

struct Detection {
  std::vector<std::uint8_t> alarms;
  std::vector<long> alarm_times;
};

/// Alarm iff q_k > alpha; q_k == alpha raises no alarm.
Detection detect(std::span<const double> q, double alpha);

/// JSON object {s, moments, F, alpha_star, bound_at_alpha, method, scale};
/// alpha_star is rounded up to a multiple of 1e-6.
std::string threshold_report_json(const ThresholdReport& report);

/// Parses the JSON produced by threshold_report_json.
ThresholdReport threshold_report_from_json(const std::string& text);

enum class CompensatorKind { mlqg, lqg };

const char* to_string(CompensatorKind kind);

struct EvaluationOptions {
  double target_rate = 0.05;
  int moment_order = 4;
  long steps = 1000000;  // 0 skips the simulation columns
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  long burn_in = 1000;
  NoiseKind noise_kind = NoiseKind::laplacian;
  SimulationMode mode = SimulationMode::sampled_noise;
  std::optional<MatrixXd> true_A;
  SolverOptions solver;
};

/// One compensator pushed through synthesis, moment analysis, simulation,
/// tuning and evaluation. Optional fields are empty where the pipeline stopped:
/// no gains on Riccati non-convergence, no steady state when rho(H) >= 1.
struct CompensatorReport {
  CompensatorKind kind = CompensatorKind::mlqg;
  bool converged = false;
  long iterations = 0;
  MatrixXd K, L;
  std::optional<double> rho_H;
  std::optional<MatrixXd> sigma_r;
  std::optional<double> expected_q;
  std::optional<std::vector<double>> moments;
  std::optional<ThresholdReport> threshold;
  std::optional<double> false_alarm_rate;
  std::optional<double> mean_q;
  std::string status;  // "ok", "not_converged", "not_compensated", or the failing error code

  bool compensated() const { return rho_H && *rho_H < 1.0; }
};

CompensatorReport evaluate_compensator(const UncertainLinearSystem<double>& sys,
                                       const SynthesisWeights<double>& weights,
                                       CompensatorKind kind, const EvaluationOptions& opts);

struct ComparisonReport {
  CompensatorReport mlqg;
  CompensatorReport lqg;
};

/// Both compensators on common random numbers (same seed and stream).
ComparisonReport compare_compensators(const UncertainLinearSystem<double>& sys,
                                      const SynthesisWeights<double>& weights,
                                      const EvaluationOptions& opts);

std::string comparison_report_json(const ComparisonReport& report);

}  // namespace mnad
