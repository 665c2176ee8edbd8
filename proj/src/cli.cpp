#include "mnad/cli.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mnad/config.hpp"
#include "mnad/format.hpp"
#include "mnad/moments.hpp"
#include "mnad/sim.hpp"

namespace mnad::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

void apply_sigma2(ProblemSetup& setup, double sigma2) {
  if (!(sigma2 >= 0.0)) throw Error(ErrorCode::invalid_argument, "--sigma2 must be >= 0");
  auto& sys = setup.system;
  if (sys.a_dirs.empty() || sys.c_dirs.empty()) {
    throw Error(ErrorCode::invalid_argument,
                "--sigma2 needs at least one A and one C noise direction in the config");
  }
  sys.a_dirs.front().variance = sigma2;
  sys.c_dirs.front().variance = sigma2;
}

std::vector<SweepRow> sweep(const ProblemSetup& base, const std::vector<double>& grid,
                            const std::vector<CompensatorKind>& kinds,
                            const EvaluationOptions& opts) {
  std::vector<std::future<std::vector<SweepRow>>> jobs;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ProblemSetup setup = base;
    apply_sigma2(setup, grid[i]);
    EvaluationOptions point_opts = opts;
    point_opts.stream = opts.stream + i;
    jobs.push_back(std::async(std::launch::async, [setup, point_opts, &kinds, sigma2 = grid[i]] {
      std::vector<SweepRow> rows;
      for (const auto kind : kinds) {
        rows.push_back({sigma2, evaluate_compensator(setup.system, setup.weights, kind, point_opts)});
      }
      return rows;
    }));
  }
  std::vector<SweepRow> out;
  for (auto& job : jobs) {
    auto rows = job.get();
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "sigma2,compensator,converged,rho_H,Sigma_r,E_q,alpha_star,empirical_false_alarm_rate,"
        "mean_q\n";
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : "N/A"; };
  for (const auto& row : rows) {
    const auto& r = row.report;
    std::optional<double> sigma_r;
    if (r.sigma_r) {
      sigma_r = r.sigma_r->size() == 1 ? (*r.sigma_r)(0, 0) : r.sigma_r->norm();
    }
    std::optional<double> alpha;
    if (r.threshold) alpha = r.threshold->alpha_star;
    os << format_double(row.sigma2) << ',' << to_string(r.kind) << ','
       << (r.converged ? "true" : "false") << ',' << cell(r.converged ? r.rho_H : std::nullopt)
       << ',' << cell(sigma_r) << ',' << cell(r.expected_q) << ',' << cell(alpha) << ','
       << cell(r.false_alarm_rate) << ',' << cell(r.mean_q) << '\n';
  }
  return os.str();
}

namespace {

struct CommonArgs {
  std::string config;
  bool pendulum = false;
  std::optional<double> sigma2;
  std::string compensator = "mlqg";
  std::optional<long> steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> noise;
  std::string mode = "sampled";
  int moments = 4;
  double rate = 0.05;
  std::string out_dir = ".";
  long burn_in = kDefaultBurnIn;
};

struct ExtraArgs {
  std::vector<double> grid;
  std::vector<std::string> compensators{"mlqg", "lqg"};
  std::optional<long> anomaly_start;
  Eigen::Index anomaly_channel = 0;
  double anomaly_bias = 0.0;
  std::optional<double> alpha;
  std::string threshold_file;
};

class ExitError : public std::runtime_error {
 public:
  ExitError(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config, "JSON problem description");
  sub->add_flag("--pendulum", a.pendulum, "use the built-in inverted pendulum benchmark");
  sub->add_option("--sigma2", a.sigma2, "variance of the first A and C noise directions");
  sub->add_option("--compensator", a.compensator, "lqg or mlqg")
      ->check(CLI::IsMember({"lqg", "mlqg"}));
  sub->add_option("--steps", a.steps, "simulation length");
  sub->add_option("--seed", a.seed, "random seed");
  sub->add_option("--noise", a.noise, "additive noise law")
      ->check(CLI::IsMember({"gaussian", "laplacian"}));
  sub->add_option("--mode", a.mode, "simulation mode")
      ->check(CLI::IsMember({"sampled", "fixed-mismatch"}));
  sub->add_option("--moments", a.moments, "number of raw moments for tuning")
      ->check(CLI::Range(1, 16));
  sub->add_option("--rate", a.rate, "target false-alarm rate");
  sub->add_option("--out", a.out_dir, "output directory");
  sub->add_option("--burn-in", a.burn_in, "steps excluded from statistics")
      ->check(CLI::NonNegativeNumber);
}

void add_anomaly(CLI::App* sub, ExtraArgs& x) {
  sub->add_option("--anomaly-start", x.anomaly_start, "inject a sensor bias from this step on");
  sub->add_option("--anomaly-channel", x.anomaly_channel, "output channel of the bias");
  sub->add_option("--anomaly-bias", x.anomaly_bias, "bias magnitude");
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class Run {
 public:
  Run(std::string subcommand, const CommonArgs& args, std::ostream& out)
      : subcommand_(std::move(subcommand)), args_(args), out_(out), started_(utc_now()) {}

  ProblemSetup load() {
    if (args_.pendulum == !args_.config.empty()) {
      throw ExitError(kInvalidInput, "exactly one of --pendulum or --config is required");
    }
    ProblemSetup setup;
    if (args_.pendulum) {
      setup = build_pendulum(args_.sigma2.value_or(0.0), args_.sigma2.value_or(0.0));
      config_text_ = write_config(setup);
      config_path_ = "<pendulum>";
    } else {
      std::ifstream in(args_.config, std::ios::binary);
      if (!in) throw ExitError(kInvalidInput, "cannot open config file " + args_.config);
      std::ostringstream buf;
      buf << in.rdbuf();
      config_text_ = buf.str();
      config_path_ = args_.config;
      setup = parse_config(config_text_);
      if (args_.sigma2) apply_sigma2(setup, *args_.sigma2);
    }
    if (args_.seed) setup.options.seed = *args_.seed;
    if (args_.noise) {
      setup.options.noise_kind = *args_.noise == "gaussian" ? NoiseKind::gaussian : NoiseKind::laplacian;
    }
    if (!(args_.rate > 0.0 && args_.rate < 1.0)) {
      throw ExitError(kInvalidInput, "--rate must lie in (0, 1)");
    }
    seed_ = setup.options.seed;
    return setup;
  }

  CompensatorKind kind() const {
    return args_.compensator == "lqg" ? CompensatorKind::lqg : CompensatorKind::mlqg;
  }

  SimulationMode mode() const {
    return args_.mode == "fixed-mismatch" ? SimulationMode::fixed_mismatch
                                          : SimulationMode::sampled_noise;
  }

  EvaluationOptions evaluation(const ProblemSetup& setup, long default_steps) const {
    EvaluationOptions opts;
    opts.target_rate = args_.rate;
    opts.moment_order = args_.moments;
    opts.steps = args_.steps.value_or(default_steps);
    opts.seed = setup.options.seed;
    opts.burn_in = args_.burn_in;
    opts.noise_kind = setup.options.noise_kind;
    opts.mode = mode();
    opts.true_A = setup.options.true_A;
    return opts;
  }

  CompensatorGains<double> synthesize(const ProblemSetup& setup) const {
    return kind() == CompensatorKind::mlqg ? solve_coupled_riccati(setup.system, setup.weights)
                                           : solve_lqg(setup.system, setup.weights);
  }

  CompensatorGains<double> require_converged(const ProblemSetup& setup) const {
    auto gains = synthesize(setup);
    if (!gains.converged) {
      throw ExitError(kNotConverged, "coupled Riccati iteration did not converge after " +
                                         std::to_string(gains.iterations) +
                                         " sweeps (mean-square compensation lost)");
    }
    return gains;
  }

  void write(const std::string& name, const std::string& contents) {
    fs::create_directories(args_.out_dir);
    const fs::path path = fs::path(args_.out_dir) / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ExitError(kInternalError, "cannot write " + path.string());
    os << contents;
    outputs_.push_back(path.string());
    out_ << path.string() << '\n';
  }

  template <typename Writer>
  void write_stream(const std::string& name, Writer&& writer) {
    fs::create_directories(args_.out_dir);
    const fs::path path = fs::path(args_.out_dir) / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ExitError(kInternalError, "cannot write " + path.string());
    writer(os);
    outputs_.push_back(path.string());
    out_ << path.string() << '\n';
  }

  void write_manifest(int exit_code) {
    if (config_path_.empty()) return;
    json m = {{"tool", "mnad"},
              {"version", kVersion},
              {"subcommand", subcommand_},
              {"config_path", config_path_},
              {"config_sha256", sha256_hex(config_text_)},
              {"seed", seed_},
              {"started_utc", started_},
              {"finished_utc", utc_now()},
              {"exit_code", exit_code},
              {"outputs", outputs_}};
    fs::create_directories(args_.out_dir);
    const fs::path path = fs::path(args_.out_dir) / "manifest.json";
    std::ofstream os(path, std::ios::binary);
    os << m.dump(2) << '\n';
  }

  const CommonArgs& args() const { return args_; }

 private:
  std::string subcommand_;
  const CommonArgs& args_;
  std::ostream& out_;
  std::string started_;
  std::string config_path_;
  std::string config_text_;
  std::uint64_t seed_ = 0;
  std::vector<std::string> outputs_;
};

json gains_json(const CompensatorGains<double>& g, CompensatorKind kind) {
  return {{"compensator", to_string(kind)},
          {"converged", g.converged},
          {"iterations", g.iterations},
          {"residual", std::isfinite(g.residual) ? json(g.residual) : json(nullptr)},
          {"K", matrix_to_json(g.K)},
          {"L", matrix_to_json(g.L)},
          {"P1", matrix_to_json(g.P1)},
          {"P2", matrix_to_json(g.P2)},
          {"P3", matrix_to_json(g.P3)},
          {"P4", matrix_to_json(g.P4)}};
}

std::optional<AnomalySpec> anomaly_from(const ExtraArgs& x) {
  if (!x.anomaly_start) return std::nullopt;
  return AnomalySpec{*x.anomaly_start, x.anomaly_channel, x.anomaly_bias};
}

struct Analysis {
  CompensatorGains<double> gains;
  SecondMomentOperator<double> op;
  SteadyStateMoments<double> ss;
};

Analysis analyze_or_exit(const Run& run, const ProblemSetup& setup) {
  Analysis a{run.require_converged(setup), {}, {}};
  a.op = build_operator(setup.system, a.gains.K, a.gains.L);
  a.ss = steady_state(a.op, setup.system);
  return a;
}

SimulationConfig sim_config(const Run& run, const ProblemSetup& setup, long default_steps,
                            const ExtraArgs& x) {
  SimulationConfig cfg;
  cfg.steps = run.args().steps.value_or(default_steps);
  cfg.seed = setup.options.seed;
  cfg.noise_kind = setup.options.noise_kind;
  cfg.mode = run.mode();
  cfg.true_A = setup.options.true_A;
  cfg.anomaly = anomaly_from(x);
  cfg.alpha = x.alpha;
  return cfg;
}

int cmd_synthesize(Run& run) {
  const auto setup = run.load();
  const auto gains = run.synthesize(setup);
  run.write("gains.json", gains_json(gains, run.kind()).dump(2) + "\n");
  if (!gains.converged) {
    throw ExitError(kNotConverged, "coupled Riccati iteration did not converge after " +
                                       std::to_string(gains.iterations) + " sweeps");
  }
  return kOk;
}

int cmd_analyze(Run& run) {
  const auto setup = run.load();
  const auto gains = run.require_converged(setup);
  const auto diag = stability_diagnostics<double>(setup.system, gains.K, gains.L);
  json out = {{"compensator", to_string(run.kind())},
              {"converged", gains.converged},
              {"iterations", gains.iterations},
              {"K", matrix_to_json(gains.K)},
              {"L", matrix_to_json(gains.L)},
              {"rho_open", diag.rho_open},
              {"rho_closed", *diag.rho_closed},
              {"rho_H", *diag.rho_H},
              {"Sigma_r", nullptr},
              {"Sigma_x_inf", nullptr},
              {"E_q", nullptr}};
  if (!diag.mean_square_compensated()) {
    run.write("analysis.json", out.dump(2) + "\n");
    throw ExitError(kNotCompensated, "steady state does not exist: rho(H) = " +
                                         format_double(*diag.rho_H) + " >= 1");
  }
  const auto op = build_operator(setup.system, gains.K, gains.L);
  const auto ss = steady_state(op, setup.system);
  out["Sigma_r"] = matrix_to_json(ss.sigma_r);
  out["Sigma_x_inf"] = matrix_to_json(ss.sigma_x_err);
  out["E_q"] = expected_q(ss, VectorXd(VectorXd::Zero(setup.system.n())), setup.system.C_bar);
  run.write("analysis.json", out.dump(2) + "\n");
  return kOk;
}

int cmd_simulate(Run& run, const ExtraArgs& x) {
  const auto setup = run.load();
  const auto a = analyze_or_exit(run, setup);
  const auto trace = simulate(setup.system, a.gains.K, a.gains.L, a.ss.sigma_r,
                              sim_config(run, setup, 10000, x));
  run.write_stream("trace.csv", [&](std::ostream& os) { write_trace_csv(os, trace); });
  return kOk;
}

int cmd_tune(Run& run) {
  const auto setup = run.load();
  const auto a = analyze_or_exit(run, setup);
  const auto trace = simulate(setup.system, a.gains.K, a.gains.L, a.ss.sigma_r,
                              sim_config(run, setup, 1000000, {}));
  const auto moments = empirical_moments(trace, run.args().moments, run.args().burn_in);
  const auto report = tune_threshold(moments, run.args().rate);
  run.write("threshold.json", threshold_report_json(report));
  return kOk;
}

int cmd_evaluate(Run& run, ExtraArgs x) {
  if (!x.threshold_file.empty()) {
    std::ifstream in(x.threshold_file, std::ios::binary);
    if (!in) throw ExitError(kInvalidInput, "cannot open threshold file " + x.threshold_file);
    std::ostringstream buf;
    buf << in.rdbuf();
    x.alpha = threshold_report_from_json(buf.str()).alpha_star;
  }
  if (!x.alpha || !(*x.alpha > 0.0)) {
    throw ExitError(kInvalidInput, "evaluate needs --threshold <json> or a positive --alpha");
  }
  const auto setup = run.load();
  const auto a = analyze_or_exit(run, setup);
  const auto trace = simulate(setup.system, a.gains.K, a.gains.L, a.ss.sigma_r,
                              sim_config(run, setup, 1000000, x));
  const auto stats = empirical_stats(trace, *x.alpha, run.args().burn_in);
  run.write_stream("alarms.csv", [&](std::ostream& os) {
    os << "k,q,alarm\n";
    for (long k = 0; k < trace.steps(); ++k) {
      os << k << ',' << format_double(trace.q[k]) << ','
         << static_cast<int>(trace.alarm[static_cast<std::size_t>(k)]) << '\n';
    }
  });
  json out = {{"compensator", to_string(run.kind())},
              {"alpha", *x.alpha},
              {"steps", trace.steps()},
              {"burn_in", run.args().burn_in},
              {"false_alarm_rate", stats.false_alarm_rate},
              {"alarm_count", stats.alarm_times.size()},
              {"first_alarm", stats.alarm_times.empty() ? json(nullptr)
                                                        : json(stats.alarm_times.front())},
              {"mean_q", stats.mean_q}};
  if (trace.anomaly) {
    long first_after = -1;
    for (const long k : stats.alarm_times) {
      if (k >= trace.anomaly->start) {
        first_after = k;
        break;
      }
    }
    out["anomaly_start"] = trace.anomaly->start;
    out["first_alarm_after_anomaly"] = first_after >= 0 ? json(first_after) : json(nullptr);
  }
  run.write("evaluation.json", out.dump(2) + "\n");
  return kOk;
}

int cmd_compare(Run& run) {
  const auto setup = run.load();
  const auto report =
      compare_compensators(setup.system, setup.weights, run.evaluation(setup, 1000000));
  run.write("compare.json", comparison_report_json(report));
  return kOk;
}

int cmd_sweep(Run& run, const ExtraArgs& x) {
  if (x.grid.empty()) throw ExitError(kInvalidInput, "sweep needs --grid");
  for (const double g : x.grid) {
    if (!(g >= 0.0)) throw ExitError(kInvalidInput, "sweep grid values must be >= 0");
  }
  std::vector<CompensatorKind> kinds;
  for (const auto& name : x.compensators) {
    if (name == "mlqg") {
      kinds.push_back(CompensatorKind::mlqg);
    } else if (name == "lqg") {
      kinds.push_back(CompensatorKind::lqg);
    } else {
      throw ExitError(kInvalidInput, "unknown compensator " + name);
    }
  }
  const auto setup = run.load();
  const auto rows = sweep(setup, x.grid, kinds, run.evaluation(setup, 1000000));
  run.write("sweep.csv", sweep_csv(rows));
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multiplicative-noise compensator synthesis and anomaly-detector tuning", "mnad"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonArgs common;
  ExtraArgs extra;
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"synthesize", "compute compensator gains (writes gains.json)"},
      {"analyze", "stability and steady-state residual statistics (writes analysis.json)"},
      {"simulate", "simulate the closed loop (writes trace.csv)"},
      {"tune", "tune the detector threshold from simulated q moments (writes threshold.json)"},
      {"evaluate", "apply a threshold to a simulated trace (writes alarms.csv, evaluation.json)"},
      {"compare", "MLQG vs LQG side by side (writes compare.json)"},
      {"sweep", "tabulate over a sigma2 grid (writes sweep.csv)"},
  };
  std::map<std::string, CLI::App*> commands;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, common);
    commands[s.name] = sub;
  }
  add_anomaly(commands["simulate"], extra);
  add_anomaly(commands["evaluate"], extra);
  commands["simulate"]->add_option("--alpha", extra.alpha, "threshold for the alarm column");
  commands["evaluate"]->add_option("--alpha", extra.alpha, "detector threshold");
  commands["evaluate"]->add_option("--threshold", extra.threshold_file, "threshold report JSON");
  commands["sweep"]->add_option("--grid", extra.grid, "sigma2 values")->delimiter(',');
  commands["sweep"]
      ->add_option("--compensators", extra.compensators, "subset of {mlqg,lqg}")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalidInput;
  }

  std::string name;
  for (const auto& [key, sub] : commands) {
    if (sub->parsed()) name = key;
  }
  Run run(name, common, out);
  int code = kOk;
  try {
    if (name == "synthesize") {
      code = cmd_synthesize(run);
    } else if (name == "analyze") {
      code = cmd_analyze(run);
    } else if (name == "simulate") {
      code = cmd_simulate(run, extra);
    } else if (name == "tune") {
      code = cmd_tune(run);
    } else if (name == "evaluate") {
      code = cmd_evaluate(run, extra);
    } else if (name == "compare") {
      code = cmd_compare(run);
    } else {
      code = cmd_sweep(run, extra);
    }
  } catch (const ExitError& e) {
    err << "mnad " << name << ": " << e.what() << '\n';
    code = e.code();
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::parse_error:
      case ErrorCode::schema_error:
      case ErrorCode::validation_error:
      case ErrorCode::invalid_argument:
        code = kInvalidInput;
        break;
      case ErrorCode::not_compensated:
        code = kNotCompensated;
        break;
      default:
        code = kInternalError;
    }
    err << "mnad " << name << ": " << to_string(e.code()) << ": " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "mnad " << name << ": internal error: " << e.what() << '\n';
    code = kInternalError;
  }
  try {
    run.write_manifest(code);
  } catch (const std::exception& e) {
    err << "mnad " << name << ": cannot write manifest: " << e.what() << '\n';
    if (code == kOk) code = kInternalError;
  }
  return code;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("mnad");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace mnad::cli
