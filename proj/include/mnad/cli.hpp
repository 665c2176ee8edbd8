#pragma once

// Command-line front end. Subcommands:
//   synthesize | analyze | simulate | tune | evaluate | compare | sweep
// Exit codes: 0 success, 1 internal error, 2 invalid config or flags,
// 3 Riccati non-convergence, 4 mean-square compensation lost (rho(H) >= 1).

#include <iosfwd>
#include <string>
#include <vector>

#include "mnad/detector.hpp"

namespace mnad::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kInvalidInput = 2,
  kNotConverged = 3,
  kNotCompensated = 4,
};

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Sets the variance of the first A and first C noise direction.
void apply_sigma2(ProblemSetup& setup, double sigma2);

struct SweepRow {
  double sigma2 = 0.0;
  CompensatorReport report;
};

/// One row per (grid value, compensator) in grid order. Grid points run
/// concurrently; point i simulates on stream opts.stream + i, shared by both
/// compensators.
std::vector<SweepRow> sweep(const ProblemSetup& base, const std::vector<double>& grid,
                            const std::vector<CompensatorKind>& kinds,
                            const EvaluationOptions& opts);

/// Columns: sigma2,compensator,converged,rho_H,Sigma_r,E_q,alpha_star,
/// empirical_false_alarm_rate,mean_q. Undefined cells are "N/A".
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace mnad::cli
