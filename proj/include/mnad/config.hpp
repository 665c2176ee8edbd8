#pragma once

// JSON problem description:
//
// {
//   "system":  { "A_bar": [[..]], "B_bar": [[..]], "C_bar": [[..]],
//                "a_dirs": [{"pattern": [[..]], "variance": x}], "b_dirs": [..], "c_dirs": [..],
//                "sigma_w": [[..]], "sigma_v": [[..]], "sigma_x0": [[..]] },
//   "weights": { "Q": [[..]], "R": [[..]] },
//   "options": { "true_A": [[..]], "noise_kind": "gaussian" | "laplacian", "seed": 0 }
// }
//
// Matrices are row-major nested arrays. Optional: the *_dirs lists (empty),
// sigma_x0 (zero), the whole "weights" object (Q = I, R = I) and every
// "options" field (no true_A, laplacian, seed 0).

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mnad/model.hpp"

namespace mnad {

/// Throws Error with parse_error (with line/column), schema_error (with the
/// field path) or validation_error.
ProblemSetup parse_config(std::string_view text);
ProblemSetup load_config(const std::filesystem::path& path);

/// Serializes with round-trip exact doubles: parse_config(write_config(s))
/// reproduces every matrix bit for bit.
std::string write_config(const ProblemSetup& setup);

nlohmann::json matrix_to_json(const MatrixXd& m);
MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& path);

}  // namespace mnad
