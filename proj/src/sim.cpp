#include "mnad/sim.hpp"

#include <cmath>
#include <future>
#include <limits>
#include <ostream>
#include <thread>

#include "mnad/format.hpp"

namespace mnad {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

namespace {

MatrixXd covariance_factor(const MatrixXd& cov) {
  const Eigen::Index d = cov.rows();
  if (cov.rows() != cov.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "NoiseSampler: covariance must be square");
  }
  if (d == 0) return MatrixXd(0, 0);
  ValidationReport report;
  detail::check_finite(report, "covariance", cov);
  detail::check_psd(report, "covariance", cov);
  if (!report.ok()) throw Error(ErrorCode::validation_error, "NoiseSampler: " + report.summary());

  const MatrixXd sym = symmetrize(cov);
  Eigen::LLT<MatrixXd> llt(sym);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  // Semidefinite: cov = P' L D L' P  =>  F = P' L sqrt(D).
  Eigen::LDLT<MatrixXd> ldlt(sym);
  const VectorXd dvec = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
  MatrixXd lower = ldlt.matrixL();
  MatrixXd factor = ldlt.transpositionsP().transpose() * (lower * dvec.asDiagonal());
  return factor;
}

}  // namespace

NoiseSampler::NoiseSampler(NoiseKind kind, const MatrixXd& covariance)
    : kind_(kind), covariance_(covariance), factor_(covariance_factor(covariance)) {}

VectorXd NoiseSampler::sample(Rng& rng) const {
  VectorXd out(dim());
  sample_into(rng, out);
  return out;
}

void NoiseSampler::sample_into(Rng& rng, Eigen::Ref<VectorXd> out) const {
  std::normal_distribution<double> normal;
  VectorXd g(dim());
  for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = normal(rng);
  out.noalias() = factor_ * g;
  if (kind_ == NoiseKind::laplacian) {
    std::exponential_distribution<double> mixing(1.0);
    out *= std::sqrt(mixing(rng));
  }
}

const char* to_string(SimulationMode mode) {
  return mode == SimulationMode::sampled_noise ? "sampled" : "fixed-mismatch";
}

SimulationTrace simulate(const UncertainLinearSystem<double>& sys, const MatrixXd& K,
                         const MatrixXd& L, const MatrixXd& sigma_r, const SimulationConfig& cfg) {
  const Eigen::Index n = sys.n(), m = sys.m(), p = sys.p();
  if (cfg.steps < 1) throw Error(ErrorCode::invalid_argument, "simulate: steps must be >= 1");
  if (K.rows() != m || K.cols() != n || L.rows() != n || L.cols() != p) {
    throw Error(ErrorCode::dimension_mismatch, "simulate: gain shapes do not match the system");
  }
  if (sigma_r.rows() != p || sigma_r.cols() != p) {
    throw Error(ErrorCode::dimension_mismatch, "simulate: Sigma_r must be p x p");
  }
  if (cfg.mode == SimulationMode::fixed_mismatch) {
    if (!cfg.true_A) {
      throw Error(ErrorCode::invalid_argument, "simulate: fixed-mismatch mode requires true_A");
    }
    if (cfg.true_A->rows() != n || cfg.true_A->cols() != n) {
      throw Error(ErrorCode::dimension_mismatch, "simulate: true_A must be n x n");
    }
  }
  if (cfg.anomaly && (cfg.anomaly->channel < 0 || cfg.anomaly->channel >= p)) {
    throw Error(ErrorCode::invalid_argument, "simulate: anomaly channel out of range");
  }
  Eigen::LDLT<MatrixXd> sigma_r_ldlt(symmetrize(sigma_r));
  if (sigma_r_ldlt.info() != Eigen::Success || !(sigma_r_ldlt.vectorD().minCoeff() > 0.0)) {
    throw Error(ErrorCode::singular_matrix, "simulate: Sigma_r is not positive definite");
  }

  const NoiseSampler w_sampler(cfg.noise_kind, sys.sigma_w);
  const NoiseSampler v_sampler(cfg.noise_kind, sys.sigma_v);
  const NoiseSampler x0_sampler(NoiseKind::gaussian, sys.sigma_x0);
  Rng rng = make_rng(cfg.seed, cfg.stream);

  const long T = cfg.steps;
  SimulationTrace trace;
  trace.seed = cfg.seed;
  trace.stream = cfg.stream;
  trace.noise_kind = cfg.noise_kind;
  trace.mode = cfg.mode;
  trace.anomaly = cfg.anomaly;
  trace.x.resize(n, T);
  trace.xhat.resize(n, T);
  trace.u.resize(m, T);
  trace.y.resize(p, T);
  trace.r.resize(p, T);
  trace.q.resize(T);
  trace.alarm.assign(static_cast<std::size_t>(T), 0);

  const bool fixed = cfg.mode == SimulationMode::fixed_mismatch;
  const MatrixXd estimator = sys.A_bar + sys.B_bar * K;
  std::vector<double> gamma(sys.a_dirs.size()), delta(sys.b_dirs.size()),
      kappa(sys.c_dirs.size());
  std::normal_distribution<double> normal;

  VectorXd x = x0_sampler.sample(rng);
  VectorXd xhat = VectorXd::Zero(n);
  VectorXd u(m), y(p), r(p), w(n), v(p), x_next(n), xhat_next(n), scaled(p);
  MatrixXd A_k(n, n), B_k(n, m), C_k(p, n);

  for (long k = 0; k < T; ++k) {
    for (std::size_t i = 0; i < gamma.size(); ++i) {
      gamma[i] = std::sqrt(sys.a_dirs[i].variance) * normal(rng);
    }
    for (std::size_t j = 0; j < delta.size(); ++j) {
      delta[j] = std::sqrt(sys.b_dirs[j].variance) * normal(rng);
    }
    for (std::size_t l = 0; l < kappa.size(); ++l) {
      kappa[l] = std::sqrt(sys.c_dirs[l].variance) * normal(rng);
    }
    w_sampler.sample_into(rng, w);
    v_sampler.sample_into(rng, v);

    if (fixed) {
      A_k = *cfg.true_A;
    } else {
      A_k = sys.A_bar;
      for (std::size_t i = 0; i < gamma.size(); ++i) A_k += gamma[i] * sys.a_dirs[i].pattern;
    }
    B_k = sys.B_bar;
    for (std::size_t j = 0; j < delta.size(); ++j) B_k += delta[j] * sys.b_dirs[j].pattern;
    C_k = sys.C_bar;
    for (std::size_t l = 0; l < kappa.size(); ++l) C_k += kappa[l] * sys.c_dirs[l].pattern;

    u.noalias() = K * xhat;
    y.noalias() = C_k * x;
    y += v;
    if (cfg.anomaly && k >= cfg.anomaly->start) y[cfg.anomaly->channel] += cfg.anomaly->bias;
    r = y;
    r.noalias() -= sys.C_bar * xhat;
    scaled = sigma_r_ldlt.solve(r);
    const double q = std::max(0.0, r.dot(scaled));

    trace.x.col(k) = x;
    trace.xhat.col(k) = xhat;
    trace.u.col(k) = u;
    trace.y.col(k) = y;
    trace.r.col(k) = r;
    trace.q[k] = q;
    if (cfg.alpha && q > *cfg.alpha) trace.alarm[static_cast<std::size_t>(k)] = 1;

    x_next.noalias() = A_k * x;
    x_next.noalias() += B_k * u;
    x_next += w;
    xhat_next.noalias() = estimator * xhat;
    xhat_next.noalias() += L * r;
    x.swap(x_next);
    xhat.swap(xhat_next);
  }
  return trace;
}

std::vector<SimulationTrace> simulate_replicates(const UncertainLinearSystem<double>& sys,
                                                 const MatrixXd& K, const MatrixXd& L,
                                                 const MatrixXd& sigma_r,
                                                 const SimulationConfig& cfg, int count) {
  if (count < 0) throw Error(ErrorCode::invalid_argument, "simulate_replicates: negative count");
  std::vector<std::future<SimulationTrace>> jobs;
  jobs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SimulationConfig c = cfg;
    c.stream = cfg.stream + static_cast<std::uint64_t>(i);
    jobs.push_back(std::async(std::launch::async,
                              [&sys, &K, &L, &sigma_r, c] { return simulate(sys, K, L, sigma_r, c); }));
  }
  std::vector<SimulationTrace> out;
  out.reserve(jobs.size());
  for (auto& job : jobs) out.push_back(job.get());
  return out;
}

std::vector<double> empirical_moments(std::span<const double> q, int s, long burn_in) {
  if (s < 1) throw Error(ErrorCode::invalid_argument, "empirical_moments: order must be >= 1");
  if (burn_in < 0) burn_in = 0;
  if (static_cast<std::size_t>(burn_in) >= q.size()) {
    throw Error(ErrorCode::invalid_argument, "empirical_moments: no samples after burn-in");
  }
  std::vector<long double> sums(static_cast<std::size_t>(s), 0.0L);
  for (std::size_t k = static_cast<std::size_t>(burn_in); k < q.size(); ++k) {
    long double power = 1.0L;
    for (int j = 0; j < s; ++j) {
      power *= q[k];
      sums[static_cast<std::size_t>(j)] += power;
    }
  }
  const long double count = static_cast<long double>(q.size() - static_cast<std::size_t>(burn_in));
  std::vector<double> out(static_cast<std::size_t>(s));
  for (int j = 0; j < s; ++j) {
    const double mj = static_cast<double>(sums[static_cast<std::size_t>(j)] / count);
    if (!std::isfinite(mj)) {
      throw Error(ErrorCode::moment_explosion,
                  "empirical_moments: moment " + std::to_string(j + 1) + " is not finite");
    }
    out[static_cast<std::size_t>(j)] = mj;
  }
  return out;
}

std::vector<double> empirical_moments(const SimulationTrace& trace, int s, long burn_in) {
  return empirical_moments(std::span<const double>(trace.q.data(), trace.q.size()), s, burn_in);
}

EmpiricalStats empirical_stats(const SimulationTrace& trace, double alpha, long burn_in) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::invalid_argument, "empirical_stats: alpha must be > 0");
  if (burn_in < 0) burn_in = 0;
  const long T = trace.steps();
  EmpiricalStats stats;
  stats.var_r = MatrixXd::Zero(trace.r.rows(), trace.r.rows());
  for (long k = 0; k < T; ++k) {
    if (trace.q[k] > alpha) stats.alarm_times.push_back(k);
  }
  const long clean_end = trace.anomaly ? std::min(T, std::max(trace.anomaly->start, 0L)) : T;
  long clean = 0, clean_alarms = 0, window = 0;
  long double q_sum = 0.0L;
  for (long k = burn_in; k < T; ++k) {
    q_sum += trace.q[k];
    stats.var_r.noalias() += trace.r.col(k) * trace.r.col(k).transpose();
    ++window;
    if (k < clean_end) {
      ++clean;
      if (trace.q[k] > alpha) ++clean_alarms;
    }
  }
  if (window > 0) {
    stats.mean_q = static_cast<double>(q_sum / window);
    stats.var_r /= static_cast<double>(window);
  }
  stats.false_alarm_rate = clean > 0 ? static_cast<double>(clean_alarms) / clean : 0.0;
  return stats;
}

VectorXd empirical_second_moments(const SimulationTrace& trace, long burn_in) {
  const Eigen::Index n = trace.x.rows(), nn = n * n;
  if (burn_in < 0) burn_in = 0;
  const long T = trace.steps();
  if (burn_in >= T) {
    throw Error(ErrorCode::invalid_argument, "empirical_second_moments: no samples after burn-in");
  }
  MatrixXd xx = MatrixXd::Zero(n, n), xxh = MatrixXd::Zero(n, n), xhxh = MatrixXd::Zero(n, n);
  for (long k = burn_in; k < T; ++k) {
    const auto x = trace.x.col(k);
    const auto xh = trace.xhat.col(k);
    xx.noalias() += x * x.transpose();
    xxh.noalias() += x * xh.transpose();
    xhxh.noalias() += xh * xh.transpose();
  }
  const double count = static_cast<double>(T - burn_in);
  VectorXd out(4 * nn);
  out << vectorize(xx) / count, vectorize(xxh) / count, vectorize(MatrixXd(xxh.transpose())) / count,
      vectorize(xhxh) / count;
  return out;
}

void write_trace_csv(std::ostream& os, const SimulationTrace& trace) {
  const Eigen::Index n = trace.x.rows(), m = trace.u.rows(), p = trace.y.rows();
  os << "k";
  for (Eigen::Index i = 1; i <= n; ++i) os << ",x" << i;
  for (Eigen::Index i = 1; i <= n; ++i) os << ",xhat" << i;
  for (Eigen::Index i = 1; i <= m; ++i) os << ",u" << i;
  for (Eigen::Index i = 1; i <= p; ++i) os << ",y" << i;
  for (Eigen::Index i = 1; i <= p; ++i) os << ",r" << i;
  os << ",q,alarm\n";
  auto put_col = [&os](const MatrixXd& mat, long k) {
    for (Eigen::Index i = 0; i < mat.rows(); ++i) os << ',' << format_double(mat(i, k));
  };
  for (long k = 0; k < trace.steps(); ++k) {
    os << k;
    put_col(trace.x, k);
    put_col(trace.xhat, k);
    put_col(trace.u, k);
    put_col(trace.y, k);
    put_col(trace.r, k);
    os << ',' << format_double(trace.q[k]) << ',' << static_cast<int>(trace.alarm[static_cast<std::size_t>(k)])
       << '\n';
  }
}

}  // namespace mnad
