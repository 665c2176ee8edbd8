#include <doctest.h>

#include <cmath>

#include "mnad/detector.hpp"

using namespace mnad;

namespace {

const std::vector<double> kExp{1, 2, 6, 24};

double markov(const std::vector<double>& m, int j, double F) {
  return std::pow(m[j - 1] / F, 1.0 / j);
}

double cantelli(const std::vector<double>& m, double F) {
  return m[0] + std::sqrt(m[1] - m[0] * m[0]) * std::sqrt((1 - F) / F);
}

std::vector<double> scaled(const std::vector<double>& m, double c) {
  std::vector<double> out = m;
  double p = 1.0;
  for (auto& v : out) {
    p *= c;
    v *= p;
  }
  return out;
}

}  // namespace

TEST_CASE("single moment gives the Markov threshold") {
  const auto r = tune_threshold(std::vector<double>{1.0}, 0.05);
  CHECK(r.alpha_star == doctest::Approx(20.0).epsilon(1e-15));
  CHECK(r.method == ThresholdMethod::markov_family);
  CHECK(r.s == 1);
}

TEST_CASE("exponential moments") {
  const double F = 0.05;
  CHECK(markov(kExp, 1, F) == doctest::Approx(20.0));
  CHECK(std::abs(markov(kExp, 2, F) - 6.325) < 1e-3);
  CHECK(std::abs(markov(kExp, 3, F) - 4.932) < 1e-3);
  CHECK(std::abs(markov(kExp, 4, F) - 4.681) < 1e-3);
  CHECK(std::abs(cantelli(kExp, F) - 5.359) < 1e-3);

  const auto r = tune_threshold(kExp, F);
  CHECK(r.alpha_star == doctest::Approx(markov(kExp, 4, F)).epsilon(1e-12));
  CHECK(r.method == ThresholdMethod::markov_family);
  CHECK(r.markov_order == 4);
  CHECK(r.bound_at_alpha <= F);
  CHECK(certified_tail_bound(kExp, r.alpha_star) <= F * (1 + 1e-12));
  CHECK(r.scale == 1.0);
}

TEST_CASE("Cantelli wins for concentrated laws") {
  // q = 1 + small spread: variance 0.01
  const std::vector<double> m{1.0, 1.01};
  const auto r = tune_threshold(m, 0.05);
  CHECK(r.method == ThresholdMethod::cantelli);
  CHECK(r.alpha_star == doctest::Approx(cantelli(m, 0.05)));
}

TEST_CASE("scale equivariance") {
  const auto base = tune_threshold(kExp, 0.05);
  for (const double c : {2.0, 0.5, 1024.0, 1.0 / 64}) {
    CAPTURE(c);
    CHECK(tune_threshold(scaled(kExp, c), 0.05).alpha_star == c * base.alpha_star);
  }
  for (const double c : {3.0, 0.1, 7.3e4}) {
    CAPTURE(c);
    CHECK(tune_threshold(scaled(kExp, c), 0.05).alpha_star ==
          doctest::Approx(c * base.alpha_star).epsilon(1e-13));
  }
}

TEST_CASE("monotonicity") {
  double prev = INFINITY;
  for (const double F : {0.001, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5}) {
    const double a = tune_threshold(kExp, F).alpha_star;
    CHECK(a <= prev);
    prev = a;
  }
  for (std::size_t j = 1; j < kExp.size(); ++j) {
    CAPTURE(j);
    double last = tune_threshold(kExp, 0.05).alpha_star;
    for (const double f : {1.02, 1.05, 1.1}) {
      auto m = kExp;
      m[j] *= f;
      const double a = tune_threshold(m, 0.05).alpha_star;
      CHECK(a >= last);
      last = a;
    }
  }
  // Only the Markov certificates are monotone in M^1 with M^2 held fixed.
  CHECK(tune_threshold(std::vector<double>{1.2}, 0.05).alpha_star >
        tune_threshold(std::vector<double>{1.0}, 0.05).alpha_star);
}

TEST_CASE("moment validation") {
  try {
    tune_threshold(std::vector<double>{1.0, 0.5}, 0.05);
    FAIL("expected inconsistent_moments");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::inconsistent_moments);
  }
  try {
    tune_threshold(std::vector<double>{1.0, INFINITY}, 0.05);
    FAIL("expected moment_explosion");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::moment_explosion);
  }
  CHECK_THROWS_AS(tune_threshold(std::vector<double>{}, 0.05), Error);
  CHECK_THROWS_AS(tune_threshold(std::vector<double>{0.0}, 0.05), Error);
  CHECK_THROWS_AS(tune_threshold(kExp, 0.0), Error);
  CHECK_THROWS_AS(tune_threshold(kExp, 1.0), Error);
  // Within the 1% slack: exactly degenerate moments are accepted.
  CHECK(tune_threshold(std::vector<double>{2, 4, 8}, 0.05).alpha_star > 0);
}

TEST_CASE("alarm rule") {
  const std::vector<double> q{0.5, 8.3};
  const auto d = detect(q, 8.247);
  CHECK(d.alarms == std::vector<std::uint8_t>{0, 1});
  CHECK(d.alarm_times == std::vector<long>{1});
  CHECK(detect(std::vector<double>{8.247}, 8.247).alarm_times.empty());
  CHECK(detect(std::vector<double>{}, 1.0).alarms.empty());
}

TEST_CASE("threshold report json") {
  const auto r = tune_threshold(kExp, 0.05);
  const auto back = threshold_report_from_json(threshold_report_json(r));
  CHECK(back.alpha_star >= r.alpha_star);
  CHECK(back.alpha_star - r.alpha_star < 1e-6);
  CHECK(std::abs(std::round(back.alpha_star * 1e6) - back.alpha_star * 1e6) < 1e-6);
  CHECK(back.moments == r.moments);
  CHECK(back.method == r.method);
  CHECK(back.target_rate == 0.05);
  CHECK_THROWS_AS(threshold_report_from_json("{"), Error);
  CHECK_THROWS_AS(threshold_report_from_json(R"({"s": 1})"), Error);
}

TEST_CASE("compensator evaluation") {
  EvaluationOptions opts;
  opts.steps = 0;
  SUBCASE("LQG loses compensation at 0.20") {
    const auto s = build_pendulum(0.2, 0.2);
    const auto c = compare_compensators(s.system, s.weights, opts);
    CHECK(c.mlqg.status == "ok");
    CHECK(c.mlqg.compensated());
    CHECK(c.mlqg.expected_q == 1.0);
    CHECK(c.lqg.status == "not_compensated");
    CHECK_FALSE(c.lqg.sigma_r);
    const auto json = comparison_report_json(c);
    CHECK(json.find("\"Sigma_r\": null") != std::string::npos);
  }
  SUBCASE("MLQG stops converging") {
    const auto s = build_pendulum(4.5, 4.5);
    const auto r = evaluate_compensator(s.system, s.weights, CompensatorKind::mlqg, opts);
    CHECK(r.status == "not_converged");
    CHECK_FALSE(r.rho_H);
  }
  SUBCASE("compensators coincide without multiplicative noise") {
    opts.steps = 20000;
    const auto s = build_pendulum(0.0, 0.0);
    const auto c = compare_compensators(s.system, s.weights, opts);
    CHECK((c.mlqg.K - c.lqg.K).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(std::abs(*c.mlqg.rho_H - *c.lqg.rho_H) < 1e-10);
    CHECK(std::abs(c.mlqg.threshold->alpha_star - c.lqg.threshold->alpha_star) <
          1e-6 * c.lqg.threshold->alpha_star);
  }
}

TEST_CASE("pendulum threshold at 0.06 over 1e7 steps") {
  EvaluationOptions opts;
  opts.steps = 10000000;
  const auto s = build_pendulum(0.06, 0.06);
  const auto r = evaluate_compensator(s.system, s.weights, CompensatorKind::mlqg, opts);
  REQUIRE(r.status == "ok");
  CHECK(r.threshold->alpha_star >= 8.247);
  CHECK(*r.false_alarm_rate <= 0.05);
}
