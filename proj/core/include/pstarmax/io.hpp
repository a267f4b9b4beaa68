#pragma once

#include "pstarmax/estimate.hpp"
#include "pstarmax/inference.hpp"
#include "pstarmax/model.hpp"
#include "pstarmax/simulate.hpp"
#include "pstarmax/spatial_weights.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>

namespace pstarmax::io {

using nlohmann::json;

// JSON documents. Field names follow the model symbols: delta, alpha[i][l], beta[j][l], gamma[k][l].
json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const json& j);
json to_json(const ParameterVector& theta);
ParameterVector parameter_vector_from_json(const json& j);
json to_json(const CopulaSpec& copula);
CopulaSpec copula_from_json(const json& j);
json to_json(const FitResult& fit);
FitResult fit_result_from_json(const json& j);
json to_json(const WaldResult& result);
json to_json(const ValidationReport& report);
json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j);

// CSV files, one header line each.
// weights:    order,row,col,weight       (0-based indices)
// counts:     t,location,value           (0-based t, 1-based location)
// covariates: covariate,t,location,value (1-based covariate and location)
// adjacency:  location,neighbor          (1-based, symmetrised on read)
void write_weights_csv(std::ostream& out, const WeightMatrixSet& w);
WeightMatrixSet read_weights_csv(std::istream& in);
void write_panel_csv(std::ostream& out, const Eigen::MatrixXd& values);
Eigen::MatrixXd read_panel_csv(std::istream& in);
CountPanel read_counts_csv(std::istream& in);
void write_covariates_csv(std::ostream& out, const CovariatePanel& x);
CovariatePanel read_covariates_csv(std::istream& in);
AdjacencyList read_adjacency_csv(std::istream& in);
/// Headerless numeric CSV, used for contrast matrices and vectors.
Eigen::MatrixXd read_matrix_csv(std::istream& in);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
json read_json(const std::filesystem::path& path);

}  // namespace pstarmax::io
