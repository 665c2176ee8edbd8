#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "mnad/config.hpp"
#include "mnad/model.hpp"

using namespace mnad;

namespace {

bool mentions(const ValidationReport& r, const std::string& needle) {
  return std::any_of(r.violations.begin(), r.violations.end(),
                     [&](const std::string& v) { return v.find(needle) != std::string::npos; });
}

std::string error_message(const std::string& text, ErrorCode expected) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    CHECK(e.code() == expected);
    return e.what();
  }
  FAIL("config was accepted");
  return {};
}

const char* kMinimal = R"({
  "system": {
    "A_bar": [[0.5]], "B_bar": [[1]], "C_bar": [[1]],
    "sigma_w": [[1]], "sigma_v": [[1]]
  }
})";

}  // namespace

TEST_CASE("pendulum benchmark") {
  const auto setup = build_pendulum(0.06, 0.06);
  const auto& sys = setup.system;
  CHECK(validate_system(sys).ok());
  CHECK(validate_weights(setup.weights, 2, 1).ok());
  CHECK(sys.n() == 2);
  CHECK(sys.m() == 1);
  CHECK(sys.p() == 1);
  REQUIRE(sys.a_dirs.size() == 1);
  REQUIRE(sys.c_dirs.size() == 1);
  CHECK(sys.a_dirs[0].variance == 0.06);
  CHECK(sys.c_dirs[0].variance == 0.06);
  CHECK(sys.a_dirs[0].pattern(1, 0) == 1.0);
  CHECK(sys.a_dirs[0].pattern.sum() == 1.0);
  CHECK(sys.c_dirs[0].pattern(0, 0) == 0.1);
  CHECK(sys.b_dirs.empty());
  CHECK(sys.sigma_w == 2.0 * MatrixXd::Identity(2, 2));
  CHECK(sys.sigma_v(0, 0) == 2.0);

  const auto zero = build_pendulum(0, 0).system;
  CHECK(zero.a_dirs[0].variance == 0.0);
  CHECK(zero.c_dirs[0].variance == 0.0);
  CHECK_THROWS_AS(build_pendulum(-0.1, 0.0), Error);
}

TEST_CASE("validation reports violations") {
  auto sys = build_pendulum(0.06, 0.06).system;
  SUBCASE("negative sigma_v") {
    sys.sigma_v(0, 0) = -1.0;
    const auto r = validate_system(sys);
    CHECK_FALSE(r.ok());
    CHECK(mentions(r, "sigma_v not PSD"));
  }
  SUBCASE("C_bar columns") {
    sys.C_bar = MatrixXd::Zero(1, 3);
    const auto r = validate_system(sys);
    CHECK(mentions(r, "C_bar column count 3 != 2"));
  }
  SUBCASE("asymmetric sigma_w") {
    sys.sigma_w(0, 1) = 0.5;
    CHECK(mentions(validate_system(sys), "sigma_w not symmetric"));
  }
  SUBCASE("negative variance") {
    sys.a_dirs[0].variance = -0.1;
    CHECK(mentions(validate_system(sys), "a_dirs[0].variance"));
  }
  SUBCASE("non-finite") {
    sys.A_bar(0, 0) = std::numeric_limits<double>::infinity();
    CHECK(mentions(validate_system(sys), "A_bar has non-finite"));
  }
  SUBCASE("singular R") {
    SynthesisWeights<double> w{MatrixXd::Identity(2, 2), MatrixXd::Zero(1, 1)};
    CHECK(mentions(validate_weights(w, 2, 1), "R not positive definite"));
  }
}

TEST_CASE("config round trip") {
  const auto setup = build_pendulum(0.15, 0.15);
  const auto back = parse_config(write_config(setup));
  CHECK(back.system.A_bar == setup.system.A_bar);
  CHECK(back.system.C_bar == setup.system.C_bar);
  CHECK(back.system.a_dirs[0].pattern == setup.system.a_dirs[0].pattern);
  CHECK(back.system.a_dirs[0].variance == 0.15);
  CHECK(back.system.c_dirs[0].variance == 0.15);
  CHECK(back.weights.Q == setup.weights.Q);
  REQUIRE(back.options.true_A);
  CHECK(*back.options.true_A == *setup.options.true_A);
  CHECK(back.options.noise_kind == NoiseKind::laplacian);
  CHECK(write_config(back) == write_config(setup));

  const auto dir = std::filesystem::temp_directory_path() / "mnad_test_model";
  std::filesystem::create_directories(dir);
  const auto path = dir / "pendulum.json";
  std::ofstream(path) << write_config(setup);
  CHECK(load_config(path).system.B_bar == setup.system.B_bar);
}

TEST_CASE("config defaults") {
  const auto setup = parse_config(kMinimal);
  CHECK(setup.weights.Q == MatrixXd::Identity(1, 1));
  CHECK(setup.weights.R == MatrixXd::Identity(1, 1));
  CHECK(setup.system.sigma_x0 == MatrixXd::Zero(1, 1));
  CHECK(setup.system.a_dirs.empty());
  CHECK_FALSE(setup.options.true_A);
  CHECK(setup.options.seed == 0);
}

TEST_CASE("config errors name the field") {
  const std::string bad_type = R"({"system": {"A_bar": "oops", "B_bar": [[1]], "C_bar": [[1]],
    "sigma_w": [[1]], "sigma_v": [[1]]}})";
  CHECK(error_message(bad_type, ErrorCode::schema_error).find("system.A_bar") != std::string::npos);

  const std::string missing = R"({"system": {"A_bar": [[1]], "B_bar": [[1]], "C_bar": [[1]],
    "sigma_w": [[1]]}})";
  CHECK(error_message(missing, ErrorCode::schema_error).find("system.sigma_v") != std::string::npos);

  const std::string ragged = R"({"system": {"A_bar": [[1, 0], [0]], "B_bar": [[1]], "C_bar": [[1]],
    "sigma_w": [[1]], "sigma_v": [[1]]}})";
  CHECK(error_message(ragged, ErrorCode::schema_error).find("system.A_bar[1]") != std::string::npos);

  const std::string bad_entry = R"({"system": {"A_bar": [[0.5]], "B_bar": [[1]], "C_bar": [[1]],
    "sigma_w": [[1]], "sigma_v": [[1]],
    "a_dirs": [{"pattern": [[1]], "variance": "x"}]}})";
  CHECK(error_message(bad_entry, ErrorCode::schema_error).find("system.a_dirs[0].variance") !=
        std::string::npos);

  const std::string bad_noise = R"({"system": {"A_bar": [[0.5]], "B_bar": [[1]], "C_bar": [[1]],
    "sigma_w": [[1]], "sigma_v": [[1]]}, "options": {"noise_kind": "cauchy"}})";
  CHECK(error_message(bad_noise, ErrorCode::schema_error).find("options.noise_kind") !=
        std::string::npos);

  const std::string syntax = "{\n  \"system\": {\n    \"A_bar\": [[1,]]\n}";
  CHECK(error_message(syntax, ErrorCode::parse_error).find("line 3") != std::string::npos);

  const std::string invalid = R"({"system": {"A_bar": [[0.5]], "B_bar": [[1]], "C_bar": [[1, 2]],
    "sigma_w": [[1]], "sigma_v": [[-1]]}})";
  const auto msg = error_message(invalid, ErrorCode::validation_error);
  CHECK(msg.find("C_bar column count") != std::string::npos);
  CHECK(msg.find("sigma_v not PSD") != std::string::npos);
}
