#include "mnad/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "mnad/config.hpp"
#include "mnad/moments.hpp"

namespace mnad {

using nlohmann::json;

const char* to_string(ThresholdMethod method) {
  switch (method) {
    case ThresholdMethod::markov_family: return "markov-family";
    case ThresholdMethod::cantelli: return "cantelli";
    case ThresholdMethod::combined: return "combined";
  }
  return "unknown";
}

const char* to_string(CompensatorKind kind) {
  return kind == CompensatorKind::mlqg ? "mlqg" : "lqg";
}

namespace {

// Lyapunov's inequality (M^j)^2 <= M^{j-1} M^{j+1}, with M^0 = 1, checked with
// 1% slack.
constexpr double kLogConvexSlack = 1.01;

void check_moments(std::span<const double> moments) {
  if (moments.empty()) throw Error(ErrorCode::invalid_argument, "at least one moment is required");
  for (std::size_t j = 0; j < moments.size(); ++j) {
    if (!std::isfinite(moments[j])) {
      throw Error(ErrorCode::moment_explosion,
                  "moment " + std::to_string(j + 1) + " is not finite");
    }
    if (!(moments[j] > 0.0)) {
      throw Error(ErrorCode::invalid_argument,
                  "moment " + std::to_string(j + 1) + " must be positive");
    }
  }
}

/// Power of two nearest below M^1. Dividing by it is exact, so normalization
/// adds no rounding and power-of-two rescaling of q leaves the normalized
/// moments bit-identical.
double normalizing_scale(double m1) { return std::ldexp(1.0, std::ilogb(m1)); }

/// M^j / scale^j
std::vector<double> normalized(std::span<const double> moments, double scale) {
  const int e = std::ilogb(scale);
  std::vector<double> out(moments.size());
  for (std::size_t j = 0; j < moments.size(); ++j) {
    out[j] = std::ldexp(moments[j], -e * static_cast<int>(j + 1));
  }
  return out;
}

void check_log_convex(const std::vector<double>& m) {
  for (std::size_t j = 0; j + 1 < m.size(); ++j) {
    const double prev = j == 0 ? 1.0 : m[j - 1];  // M^0 = 1
    if (m[j] * m[j] > kLogConvexSlack * prev * m[j + 1]) {
      throw Error(ErrorCode::inconsistent_moments,
                  "moments violate log-convexity at order " + std::to_string(j + 1) +
                      " (no distribution on [0, inf) has these moments)");
    }
  }
}

double cantelli_threshold(double mean, double variance, double rate) {
  return mean + std::sqrt(std::max(variance, 0.0)) * std::sqrt((1.0 - rate) / rate);
}

double cantelli_bound(double mean, double variance, double alpha) {
  variance = std::max(variance, 0.0);
  if (alpha <= mean) return 1.0;
  const double t = alpha - mean;
  return variance / (variance + t * t);
}

double tail_bound_normalized(const std::vector<double>& m, double alpha) {
  double best = 1.0;
  double power = 1.0;
  for (std::size_t j = 0; j < m.size(); ++j) {
    power *= alpha;
    best = std::min(best, m[j] / power);
  }
  if (m.size() >= 2) best = std::min(best, cantelli_bound(m[0], m[1] - m[0] * m[0], alpha));
  return best;
}

}  // namespace

double certified_tail_bound(std::span<const double> moments, double alpha) {
  check_moments(moments);
  if (!(alpha > 0.0)) return 1.0;
  const double scale = normalizing_scale(moments[0]);
  return tail_bound_normalized(normalized(moments, scale), alpha / scale);
}

ThresholdReport tune_threshold(std::span<const double> moments, double target_rate) {
  check_moments(moments);
  if (!(target_rate > 0.0 && target_rate < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "target false-alarm rate must lie in (0, 1)");
  }
  const double scale = normalizing_scale(moments[0]);
  const std::vector<double> m = normalized(moments, scale);
  check_log_convex(m);

  double best_markov = std::numeric_limits<double>::infinity();
  int best_order = 0;
  for (std::size_t j = 0; j < m.size(); ++j) {
    const double order = static_cast<double>(j + 1);
    const double alpha_j = std::pow(m[j] / target_rate, 1.0 / order);
    if (alpha_j < best_markov) {
      best_markov = alpha_j;
      best_order = static_cast<int>(j + 1);
    }
  }

  ThresholdReport report;
  report.s = static_cast<int>(moments.size());
  report.moments.assign(moments.begin(), moments.end());
  report.target_rate = target_rate;
  report.scale = scale;
  report.markov_order = best_order;

  double alpha_n = best_markov;
  report.method = ThresholdMethod::markov_family;
  if (m.size() >= 2) {
    const double alpha_c = cantelli_threshold(m[0], m[1] - m[0] * m[0], target_rate);
    if (std::abs(alpha_c - best_markov) <= 1e-12 * best_markov) {
      report.method = ThresholdMethod::combined;
      alpha_n = std::min(alpha_c, best_markov);
    } else if (alpha_c < best_markov) {
      report.method = ThresholdMethod::cantelli;
      alpha_n = alpha_c;
    }
  }
  report.bound_at_alpha = std::min(target_rate, tail_bound_normalized(m, alpha_n));
  report.alpha_star = alpha_n * scale;
  return report;
}

Detection detect(std::span<const double> q, double alpha) {
  Detection out;
  out.alarms.resize(q.size(), 0);
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (q[k] > alpha) {
      out.alarms[k] = 1;
      out.alarm_times.push_back(static_cast<long>(k));
    }
  }
  return out;
}

namespace {

double round_up_micro(double v) { return std::ceil(v * 1e6) / 1e6; }

json threshold_json(const ThresholdReport& r) {
  return {{"s", r.s},
          {"moments", r.moments},
          {"F", r.target_rate},
          {"alpha_star", round_up_micro(r.alpha_star)},
          {"bound_at_alpha", r.bound_at_alpha},
          {"method", to_string(r.method)},
          {"scale", r.scale}};
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json compensator_json(const CompensatorReport& r) {
  json out = {{"compensator", to_string(r.kind)},
              {"status", r.status},
              {"converged", r.converged},
              {"iterations", r.iterations},
              {"rho_H", optional_number(r.rho_H)},
              {"expected_q", optional_number(r.expected_q)},
              {"false_alarm_rate", optional_number(r.false_alarm_rate)},
              {"mean_q", optional_number(r.mean_q)}};
  out["K"] = r.converged ? matrix_to_json(r.K) : json(nullptr);
  out["L"] = r.converged ? matrix_to_json(r.L) : json(nullptr);
  out["Sigma_r"] = r.sigma_r ? matrix_to_json(*r.sigma_r) : json(nullptr);
  out["moments"] = r.moments ? json(*r.moments) : json(nullptr);
  out["alpha_star"] = r.threshold ? json(round_up_micro(r.threshold->alpha_star)) : json(nullptr);
  out["threshold"] = r.threshold ? threshold_json(*r.threshold) : json(nullptr);
  return out;
}

}  // namespace

std::string threshold_report_json(const ThresholdReport& report) {
  return threshold_json(report).dump(2) + "\n";
}

ThresholdReport threshold_report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("threshold report: ") + e.what());
  }
  try {
    ThresholdReport r;
    r.s = j.at("s").get<int>();
    r.moments = j.at("moments").get<std::vector<double>>();
    r.target_rate = j.at("F").get<double>();
    r.alpha_star = j.at("alpha_star").get<double>();
    r.bound_at_alpha = j.at("bound_at_alpha").get<double>();
    r.scale = j.at("scale").get<double>();
    const auto method = j.at("method").get<std::string>();
    if (method == "markov-family") {
      r.method = ThresholdMethod::markov_family;
    } else if (method == "cantelli") {
      r.method = ThresholdMethod::cantelli;
    } else if (method == "combined") {
      r.method = ThresholdMethod::combined;
    } else {
      throw Error(ErrorCode::schema_error, "threshold report: unknown method " + method);
    }
    if (!(r.alpha_star > 0.0)) throw Error(ErrorCode::schema_error, "threshold report: alpha_star must be > 0");
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema_error, std::string("threshold report: ") + e.what());
  }
}

CompensatorReport evaluate_compensator(const UncertainLinearSystem<double>& sys,
                                       const SynthesisWeights<double>& weights,
                                       CompensatorKind kind, const EvaluationOptions& opts) {
  CompensatorReport out;
  out.kind = kind;
  const auto gains = kind == CompensatorKind::mlqg
                         ? solve_coupled_riccati(sys, weights, opts.solver)
                         : solve_lqg(sys, weights, opts.solver);
  out.converged = gains.converged;
  out.iterations = gains.iterations;
  if (!gains.converged) {
    out.status = "not_converged";
    return out;
  }
  out.K = gains.K;
  out.L = gains.L;

  // The analysis always uses the true multiplicative system, whatever the
  // gains were designed for.
  const auto op = build_operator(sys, gains.K, gains.L);
  out.rho_H = spectral_radius(op.H);
  if (!(*out.rho_H < 1.0)) {
    out.status = "not_compensated";
    return out;
  }
  try {
    const auto ss = steady_state(op, sys);
    out.sigma_r = ss.sigma_r;
    out.expected_q = expected_q(ss, VectorXd(VectorXd::Zero(sys.n())), sys.C_bar);

    if (opts.steps > 0) {
      SimulationConfig cfg;
      cfg.steps = opts.steps;
      cfg.seed = opts.seed;
      cfg.stream = opts.stream;
      cfg.noise_kind = opts.noise_kind;
      cfg.mode = opts.mode;
      cfg.true_A = opts.true_A;
      const auto trace = simulate(sys, gains.K, gains.L, ss.sigma_r, cfg);
      out.moments = empirical_moments(trace, opts.moment_order, opts.burn_in);
      out.threshold = tune_threshold(*out.moments, opts.target_rate);
      const auto stats = empirical_stats(trace, out.threshold->alpha_star, opts.burn_in);
      out.false_alarm_rate = stats.false_alarm_rate;
      out.mean_q = stats.mean_q;
    }
    out.status = "ok";
  } catch (const Error& e) {
    out.status = to_string(e.code());
  }
  return out;
}

ComparisonReport compare_compensators(const UncertainLinearSystem<double>& sys,
                                      const SynthesisWeights<double>& weights,
                                      const EvaluationOptions& opts) {
  return {evaluate_compensator(sys, weights, CompensatorKind::mlqg, opts),
          evaluate_compensator(sys, weights, CompensatorKind::lqg, opts)};
}

std::string comparison_report_json(const ComparisonReport& report) {
  json out = {{"mlqg", compensator_json(report.mlqg)}, {"lqg", compensator_json(report.lqg)}};
  return out.dump(2) + "\n";
}

}  // namespace mnad
