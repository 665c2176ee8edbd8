#pragma once

// Seeded Monte-Carlo simulation of the closed loop
//
//   u_k    = K xhat_k
//   y_k    = C_k x_k + v_k (+ sensor bias after an injected anomaly)
//   r_k    = y_k - C_bar xhat_k,   q_k = r_k' Sigma_r^{-1} r_k
//   x_k+1  = A_k x_k + B_k u_k + w_k
//   xhat_k+1 = (A_bar + B_bar K) xhat_k + L r_k
//
// Random streams: replicate/stream s of seed S uses std::mt19937_64 seeded
// with std::seed_seq{S_lo, S_hi, s_lo, s_hi} (32-bit halves). Each step draws,
// in order: gamma_1..gamma_na, delta_1..delta_nb, kappa_1..kappa_nc (normal),
// then w (n normals, then one exponential mixing weight if laplacian), then v
// (p normals, then one exponential if laplacian).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mnad/model.hpp"

namespace mnad {

using Rng = std::mt19937_64;

/// Generator for replicate `stream` of `seed`.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

/// Zero-mean vector sampler with prescribed covariance. Gaussian: F g.
/// Laplacian: sqrt(W) F g with W ~ Exp(1), giving the same covariance and
/// heavier tails.
class NoiseSampler {
 public:
  NoiseSampler(NoiseKind kind, const MatrixXd& covariance);

  NoiseKind kind() const { return kind_; }
  const MatrixXd& covariance() const { return covariance_; }
  const MatrixXd& factor() const { return factor_; }
  Eigen::Index dim() const { return covariance_.rows(); }

  VectorXd sample(Rng& rng) const;
  void sample_into(Rng& rng, Eigen::Ref<VectorXd> out) const;

 private:
  NoiseKind kind_;
  MatrixXd covariance_;
  MatrixXd factor_;  // factor_ * factor_^T == covariance_
};

enum class SimulationMode { sampled_noise, fixed_mismatch };

const char* to_string(SimulationMode mode);

struct AnomalySpec {
  long start = 0;
  Eigen::Index channel = 0;
  double bias = 0.0;
};

struct SimulationConfig {
  long steps = 1;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  NoiseKind noise_kind = NoiseKind::laplacian;
  SimulationMode mode = SimulationMode::sampled_noise;
  std::optional<MatrixXd> true_A;  // required in fixed_mismatch mode
  std::optional<AnomalySpec> anomaly;
  std::optional<double> alpha;  // alarm threshold; no alarms when absent
};

/// Column k of each matrix holds step k.
struct SimulationTrace {
  MatrixXd x, xhat, u, y, r;
  VectorXd q;
  std::vector<std::uint8_t> alarm;

  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  NoiseKind noise_kind = NoiseKind::laplacian;
  SimulationMode mode = SimulationMode::sampled_noise;
  std::optional<AnomalySpec> anomaly;

  long steps() const { return static_cast<long>(q.size()); }
};

/// Steps excluded from every empirical statistic by default.
inline constexpr long kDefaultBurnIn = 1000;

SimulationTrace simulate(const UncertainLinearSystem<double>& sys, const MatrixXd& K,
                         const MatrixXd& L, const MatrixXd& sigma_r, const SimulationConfig& cfg);

/// Independent replicates on streams cfg.stream, cfg.stream + 1, ... run
/// concurrently; result order follows the stream index.
std::vector<SimulationTrace> simulate_replicates(const UncertainLinearSystem<double>& sys,
                                                 const MatrixXd& K, const MatrixXd& L,
                                                 const MatrixXd& sigma_r,
                                                 const SimulationConfig& cfg, int count);

/// Raw moments [M^1 .. M^s] of q over the samples after burn_in.
std::vector<double> empirical_moments(std::span<const double> q, int s, long burn_in = 0);
std::vector<double> empirical_moments(const SimulationTrace& trace, int s,
                                      long burn_in = kDefaultBurnIn);

struct EmpiricalStats {
  double false_alarm_rate = 0.0;  // over anomaly-free steps after burn-in
  std::vector<long> alarm_times;  // every k with q_k > alpha
  double mean_q = 0.0;
  MatrixXd var_r;  // E[r r'] after burn-in
};

EmpiricalStats empirical_stats(const SimulationTrace& trace, double alpha,
                               long burn_in = kDefaultBurnIn);

/// Sample averages of the stacked second moments [vec xx', vec x xhat',
/// vec xhat x', vec xhat xhat'] after burn-in.
VectorXd empirical_second_moments(const SimulationTrace& trace, long burn_in = kDefaultBurnIn);

/// Header: k,x1..xn,xhat1..xhatn,u1..um,y1..yp,r1..rp,q,alarm
void write_trace_csv(std::ostream& os, const SimulationTrace& trace);

}  // namespace mnad
