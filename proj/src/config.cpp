#include "mnad/config.hpp"

#include <fstream>
#include <sstream>

namespace mnad {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::schema_error, "config field '" + path + "': " + what);
}

const json* find(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const json& require(const json& obj, const char* key, const std::string& parent) {
  const json* v = find(obj, key);
  if (!v) schema_error(parent.empty() ? key : parent + "." + key, "missing required field");
  return *v;
}

const json& require_object(const json& obj, const std::string& path) {
  if (!obj.is_object()) schema_error(path, "expected an object");
  return obj;
}

std::vector<NoiseDirection<double>> dirs_from_json(const json* j, const std::string& path) {
  std::vector<NoiseDirection<double>> out;
  if (!j) return out;
  if (!j->is_array()) schema_error(path, "expected an array of {pattern, variance} objects");
  for (std::size_t i = 0; i < j->size(); ++i) {
    const std::string item_path = path + "[" + std::to_string(i) + "]";
    const json& item = require_object((*j)[i], item_path);
    NoiseDirection<double> d;
    d.pattern = matrix_from_json(require(item, "pattern", item_path), item_path + ".pattern");
    const json& var = require(item, "variance", item_path);
    if (!var.is_number()) schema_error(item_path + ".variance", "expected a number");
    d.variance = var.get<double>();
    out.push_back(std::move(d));
  }
  return out;
}

json dirs_to_json(const std::vector<NoiseDirection<double>>& dirs) {
  json out = json::array();
  for (const auto& d : dirs) {
    out.push_back({{"pattern", matrix_to_json(d.pattern)}, {"variance", d.variance}});
  }
  return out;
}

std::pair<std::size_t, std::size_t> line_and_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) schema_error(path, "expected a matrix (array of row arrays)");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return MatrixXd(0, 0);
  if (!j[0].is_array()) schema_error(path + "[0]", "expected a row array");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    const std::string row_path = path + "[" + std::to_string(r) + "]";
    if (!row.is_array()) schema_error(row_path, "expected a row array");
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      schema_error(row_path, "row has " + std::to_string(row.size()) + " entries, expected " +
                                 std::to_string(cols));
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) {
        schema_error(row_path + "[" + std::to_string(c) + "]",
                     std::string("expected a number, got ") + v.type_name());
      }
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

ProblemSetup parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_and_column(text, e.byte > 0 ? e.byte - 1 : 0);
    throw Error(ErrorCode::parse_error, "config parse error at line " + std::to_string(line) +
                                            ", column " + std::to_string(col) + ": " + e.what());
  }
  require_object(doc, "<root>");

  ProblemSetup setup;
  const json& sys_json = require_object(require(doc, "system", ""), "system");
  auto& sys = setup.system;
  sys.A_bar = matrix_from_json(require(sys_json, "A_bar", "system"), "system.A_bar");
  sys.B_bar = matrix_from_json(require(sys_json, "B_bar", "system"), "system.B_bar");
  sys.C_bar = matrix_from_json(require(sys_json, "C_bar", "system"), "system.C_bar");
  sys.a_dirs = dirs_from_json(find(sys_json, "a_dirs"), "system.a_dirs");
  sys.b_dirs = dirs_from_json(find(sys_json, "b_dirs"), "system.b_dirs");
  sys.c_dirs = dirs_from_json(find(sys_json, "c_dirs"), "system.c_dirs");
  sys.sigma_w = matrix_from_json(require(sys_json, "sigma_w", "system"), "system.sigma_w");
  sys.sigma_v = matrix_from_json(require(sys_json, "sigma_v", "system"), "system.sigma_v");
  if (const json* x0 = find(sys_json, "sigma_x0")) {
    sys.sigma_x0 = matrix_from_json(*x0, "system.sigma_x0");
  } else {
    sys.sigma_x0 = MatrixXd::Zero(sys.n(), sys.n());
  }

  setup.weights.Q = MatrixXd::Identity(sys.n(), sys.n());
  setup.weights.R = MatrixXd::Identity(sys.m(), sys.m());
  if (const json* w = find(doc, "weights")) {
    require_object(*w, "weights");
    if (const json* q = find(*w, "Q")) setup.weights.Q = matrix_from_json(*q, "weights.Q");
    if (const json* r = find(*w, "R")) setup.weights.R = matrix_from_json(*r, "weights.R");
  }

  if (const json* opts = find(doc, "options")) {
    require_object(*opts, "options");
    if (const json* a = find(*opts, "true_A")) {
      setup.options.true_A = matrix_from_json(*a, "options.true_A");
    }
    if (const json* kind = find(*opts, "noise_kind")) {
      if (!kind->is_string()) schema_error("options.noise_kind", "expected a string");
      const auto value = kind->get<std::string>();
      if (value == "gaussian") {
        setup.options.noise_kind = NoiseKind::gaussian;
      } else if (value == "laplacian") {
        setup.options.noise_kind = NoiseKind::laplacian;
      } else {
        schema_error("options.noise_kind", "expected \"gaussian\" or \"laplacian\", got \"" +
                                               value + "\"");
      }
    }
    if (const json* seed = find(*opts, "seed")) {
      if (!seed->is_number_integer() || (seed->is_number_integer() && !seed->is_number_unsigned() &&
                                         seed->get<std::int64_t>() < 0)) {
        schema_error("options.seed", "expected a non-negative integer");
      }
      setup.options.seed = seed->get<std::uint64_t>();
    }
  }

  ValidationReport report = validate_system(sys);
  const ValidationReport wreport = validate_weights(setup.weights, sys.n(), sys.m());
  report.violations.insert(report.violations.end(), wreport.violations.begin(),
                           wreport.violations.end());
  if (setup.options.true_A &&
      (setup.options.true_A->rows() != sys.n() || setup.options.true_A->cols() != sys.n())) {
    report.violations.push_back("options.true_A must be n x n");
  }
  if (!report.ok()) throw Error(ErrorCode::validation_error, "invalid config: " + report.summary());
  return setup;
}

ProblemSetup load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::parse_error, "cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string write_config(const ProblemSetup& setup) {
  const auto& sys = setup.system;
  json doc;
  doc["system"] = {
      {"A_bar", matrix_to_json(sys.A_bar)},     {"B_bar", matrix_to_json(sys.B_bar)},
      {"C_bar", matrix_to_json(sys.C_bar)},     {"a_dirs", dirs_to_json(sys.a_dirs)},
      {"b_dirs", dirs_to_json(sys.b_dirs)},     {"c_dirs", dirs_to_json(sys.c_dirs)},
      {"sigma_w", matrix_to_json(sys.sigma_w)}, {"sigma_v", matrix_to_json(sys.sigma_v)},
      {"sigma_x0", matrix_to_json(sys.sigma_x0)},
  };
  doc["weights"] = {{"Q", matrix_to_json(setup.weights.Q)}, {"R", matrix_to_json(setup.weights.R)}};
  json opts = {{"noise_kind", to_string(setup.options.noise_kind)}, {"seed", setup.options.seed}};
  if (setup.options.true_A) opts["true_A"] = matrix_to_json(*setup.options.true_A);
  doc["options"] = std::move(opts);
  return doc.dump(2) + "\n";
}

}  // namespace mnad
