#include "pstarmax/io.hpp"

#include "pstarmax/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>
#include <vector>

namespace pstarmax::io {

namespace {

template <class T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorKind::io, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::io, std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
T field_or(const json& j, const char* key, T fallback) {
  return j.is_object() && j.contains(key) ? field<T>(j, key) : fallback;
}

json blocks_to_json(const std::vector<std::vector<double>>& blocks) {
  json out = json::array();
  for (const auto& b : blocks) out.push_back(b);
  return out;
}

std::vector<std::vector<double>> blocks_from_json(const json& j, const char* key) {
  return field_or<std::vector<std::vector<double>>>(j, key, {});
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end)
    fail(ErrorKind::io, "line " + std::to_string(line) + ": '" + s + "' is not a number");
  return v;
}

long long parse_int(const std::string& s, std::size_t line) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end)
    fail(ErrorKind::io, "line " + std::to_string(line) + ": '" + s + "' is not an integer");
  return v;
}

// Reads the header (must equal `expected`) and all data rows.
std::vector<std::vector<std::string>> read_table(std::istream& in, const std::vector<std::string>& expected) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!trim(line).empty()) break;
  }
  if (split(line) != expected) {
    std::string want;
    for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
    fail(ErrorKind::io, "expected CSV header '" + want + "'");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (cells.size() != expected.size())
      fail(ErrorKind::io, "line " + std::to_string(n) + ": expected " + std::to_string(expected.size()) + " fields");
    cells.push_back(std::to_string(n));
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::size_t line_of(const std::vector<std::string>& row) { return std::stoul(row.back()); }

// Long-format (t, location) cells into a dense p x (T+1) matrix; every cell must appear once.
Eigen::MatrixXd assemble(const std::map<std::pair<long long, long long>, double>& cells, const char* what) {
  if (cells.empty()) fail(ErrorKind::io, std::string(what) + " file has no data rows");
  long long tmax = -1, pmax = 0;
  for (const auto& [key, v] : cells) {
    tmax = std::max(tmax, key.first);
    pmax = std::max(pmax, key.second);
  }
  if (static_cast<long long>(cells.size()) != (tmax + 1) * pmax)
    fail(ErrorKind::io, std::string(what) + " file does not cover every (t, location) cell");
  Eigen::MatrixXd out(pmax, tmax + 1);
  for (const auto& [key, v] : cells) out(key.second - 1, key.first) = v;
  return out;
}

}  // namespace

json to_json(const ModelSpec& spec) {
  return json{{"link", std::string(to_string(spec.link))},
              {"intercept", std::string(to_string(spec.intercept))},
              {"a", spec.a},
              {"b", spec.b},
              {"s", spec.s}};
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  spec.link = parse_link(field_or<std::string>(j, "link", "linear"));
  spec.intercept = parse_intercept(field_or<std::string>(j, "intercept", "homogeneous"));
  spec.a = field_or<std::vector<int>>(j, "a", {});
  spec.b = field_or<std::vector<int>>(j, "b", {});
  spec.s = field_or<std::vector<int>>(j, "s", {});
  return spec;
}

json to_json(const ParameterVector& theta) {
  return json{{"delta", vector_to_json(theta.delta)},
              {"alpha", blocks_to_json(theta.alpha)},
              {"beta", blocks_to_json(theta.beta)},
              {"gamma", blocks_to_json(theta.gamma)}};
}

ParameterVector parameter_vector_from_json(const json& j) {
  ParameterVector theta;
  if (!j.is_object() || !j.contains("delta")) fail(ErrorKind::io, "missing field 'delta'");
  const auto& d = j.at("delta");
  try {
    theta.delta = d.is_number() ? Eigen::VectorXd::Constant(1, d.get<double>()) : vector_from_json(d);
  } catch (const json::exception& e) {
    fail(ErrorKind::io, std::string("field 'delta': ") + e.what());
  }
  theta.alpha = blocks_from_json(j, "alpha");
  theta.beta = blocks_from_json(j, "beta");
  theta.gamma = blocks_from_json(j, "gamma");
  return theta;
}

json to_json(const CopulaSpec& copula) {
  return json{{"family", std::string(to_string(copula.family))}, {"parameter", copula.parameter}};
}

CopulaSpec copula_from_json(const json& j) {
  CopulaSpec c;
  c.family = parse_copula_family(field_or<std::string>(j, "family", "independent"));
  c.parameter = field_or<double>(j, "parameter", 0.0);
  return c;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  try {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    const Index n = static_cast<Index>(rows.size());
    const Index k = n == 0 ? 0 : static_cast<Index>(rows.front().size());
    Eigen::MatrixXd m(n, k);
    for (Index i = 0; i < n; ++i) {
      if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != k) fail(ErrorKind::io, "ragged matrix");
      for (Index c = 0; c < k; ++c) m(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::io, std::string("matrix: ") + e.what());
  }
}

json to_json(const FitResult& fit) {
  const ParameterLayout layout(fit.spec, fit.p);
  json active = json::array();
  for (Index k : fit.active_constraints) active.push_back(k);
  return json{{"model", to_json(fit.spec)},
              {"p", fit.p},
              {"n_obs", fit.n_obs},
              {"init", std::string(to_string(fit.init))},
              {"criterion", std::string(to_string(fit.criterion))},
              {"theta", to_json(fit.theta_hat)},
              {"parameter_names", layout.names()},
              {"theta_flat", vector_to_json(fit.theta)},
              {"std_errors", vector_to_json(fit.std_errors)},
              {"covariance", matrix_to_json(fit.covariance)},
              {"H", matrix_to_json(fit.H)},
              {"G", matrix_to_json(fit.G)},
              {"loglik", fit.loglik},
              {"qic", fit.qic},
              {"converged", fit.converged},
              {"iterations", fit.iterations},
              {"gradient_norm", fit.gradient_norm},
              {"active_constraints", active},
              {"sum_constraint_active", fit.sum_constraint_active},
              {"fingerprint", fit.fingerprint},
              {"message", fit.message}};
}

FitResult fit_result_from_json(const json& j) {
  FitResult fit;
  fit.spec = model_spec_from_json(field<json>(j, "model"));
  fit.p = field<Index>(j, "p");
  fit.n_obs = field<Index>(j, "n_obs");
  fit.init = parse_init(field_or<std::string>(j, "init", "first_obs"));
  fit.criterion = parse_criterion(field_or<std::string>(j, "criterion", "coefficient_sum"));
  fit.theta_hat = parameter_vector_from_json(field<json>(j, "theta"));
  check_shape(fit.theta_hat, fit.spec, fit.p);
  fit.theta = pack(fit.theta_hat);
  fit.covariance = matrix_from_json(field<json>(j, "covariance"));
  const Index k = fit.theta.size();
  if (fit.covariance.rows() != k || fit.covariance.cols() != k) fail(ErrorKind::io, "covariance has the wrong shape");
  fit.std_errors = j.contains("std_errors") ? vector_from_json(j.at("std_errors"))
                                            : Eigen::VectorXd(fit.covariance.diagonal().cwiseSqrt());
  fit.H = j.contains("H") ? matrix_from_json(j.at("H")) : Eigen::MatrixXd();
  fit.G = j.contains("G") ? matrix_from_json(j.at("G")) : Eigen::MatrixXd();
  fit.loglik = field<double>(j, "loglik");
  fit.qic = field<double>(j, "qic");
  fit.converged = field<bool>(j, "converged");
  fit.iterations = field_or<int>(j, "iterations", 0);
  fit.gradient_norm = field_or<double>(j, "gradient_norm", 0.0);
  fit.active_constraints = field_or<std::vector<Index>>(j, "active_constraints", {});
  fit.sum_constraint_active = field_or<bool>(j, "sum_constraint_active", false);
  fit.fingerprint = field_or<std::string>(j, "fingerprint", "");
  fit.message = field_or<std::string>(j, "message", "");
  return fit;
}

json to_json(const WaldResult& r) {
  return json{{"statistic", r.statistic},
              {"df", r.df},
              {"p_value", r.p_value},
              {"boundary_adjusted", r.boundary_adjusted}};
}

json to_json(const ValidationReport& report) {
  json issues = json::array();
  for (const auto& i : report.issues()) {
    json item{{"code", i.code}, {"message", i.message}, {"severity", i.error ? "error" : "warning"}};
    if (i.matrix >= 0) item["matrix"] = i.matrix;
    if (i.row >= 0) item["row"] = i.row;
    issues.push_back(std::move(item));
  }
  return json{{"ok", report.ok()}, {"issues", issues}};
}

void write_weights_csv(std::ostream& out, const WeightMatrixSet& w) {
  out << "order,row,col,weight\n";
  out.precision(17);
  for (int l = 0; l <= w.max_order(); ++l)
    w[l].for_each_nonzero([&](Index i, Index j, double v) { out << l << ',' << i << ',' << j << ',' << v << '\n'; });
}

WeightMatrixSet read_weights_csv(std::istream& in) {
  const auto rows = read_table(in, {"order", "row", "col", "weight"});
  if (rows.empty()) fail(ErrorKind::io, "weights file has no entries");
  long long lmax = 0, imax = 0;
  std::vector<std::tuple<long long, long long, long long, double>> entries;
  for (const auto& r : rows) {
    const auto line = line_of(r);
    const long long l = parse_int(r[0], line), i = parse_int(r[1], line), j = parse_int(r[2], line);
    if (l < 0 || i < 0 || j < 0) fail(ErrorKind::io, "line " + std::to_string(line) + ": negative index");
    entries.emplace_back(l, i, j, parse_double(r[3], line));
    lmax = std::max(lmax, l);
    imax = std::max({imax, i, j});
  }
  std::vector<std::vector<Eigen::Triplet<double>>> per(static_cast<std::size_t>(lmax + 1));
  for (const auto& [l, i, j, v] : entries) per[static_cast<std::size_t>(l)].emplace_back(i, j, v);
  std::vector<WeightMatrix> mats;
  for (const auto& t : per) mats.push_back(WeightMatrix::from_triplets(imax + 1, t));
  return WeightMatrixSet(std::move(mats));
}

void write_panel_csv(std::ostream& out, const Eigen::MatrixXd& values) {
  out << "t,location,value\n";
  out.precision(17);
  for (Index t = 0; t < values.cols(); ++t)
    for (Index i = 0; i < values.rows(); ++i) out << t << ',' << i + 1 << ',' << values(i, t) << '\n';
}

Eigen::MatrixXd read_panel_csv(std::istream& in) {
  const auto rows = read_table(in, {"t", "location", "value"});
  std::map<std::pair<long long, long long>, double> cells;
  for (const auto& r : rows) {
    const auto line = line_of(r);
    const long long t = parse_int(r[0], line), loc = parse_int(r[1], line);
    if (t < 0 || loc < 1) fail(ErrorKind::io, "line " + std::to_string(line) + ": t must be >= 0 and location >= 1");
    if (!cells.emplace(std::make_pair(t, loc), parse_double(r[2], line)).second)
      fail(ErrorKind::io, "line " + std::to_string(line) + ": duplicate cell");
  }
  return assemble(cells, "panel");
}

CountPanel read_counts_csv(std::istream& in) { return CountPanel(read_panel_csv(in)); }

void write_covariates_csv(std::ostream& out, const CovariatePanel& x) {
  out << "covariate,t,location,value\n";
  out.precision(17);
  for (int k = 0; k < x.m(); ++k) {
    const auto& xk = x.process(k);
    for (Index t = 0; t < xk.cols(); ++t)
      for (Index i = 0; i < xk.rows(); ++i) out << k + 1 << ',' << t << ',' << i + 1 << ',' << xk(i, t) << '\n';
  }
}

CovariatePanel read_covariates_csv(std::istream& in) {
  const auto rows = read_table(in, {"covariate", "t", "location", "value"});
  std::map<long long, std::map<std::pair<long long, long long>, double>> per;
  for (const auto& r : rows) {
    const auto line = line_of(r);
    const long long k = parse_int(r[0], line), t = parse_int(r[1], line), loc = parse_int(r[2], line);
    if (k < 1 || t < 0 || loc < 1) fail(ErrorKind::io, "line " + std::to_string(line) + ": invalid index");
    if (!per[k].emplace(std::make_pair(t, loc), parse_double(r[3], line)).second)
      fail(ErrorKind::io, "line " + std::to_string(line) + ": duplicate cell");
  }
  std::vector<Eigen::MatrixXd> processes;
  long long expected = 1;
  for (const auto& [k, cells] : per) {
    if (k != expected++) fail(ErrorKind::io, "covariates must be numbered 1..m without gaps");
    processes.push_back(assemble(cells, "covariate"));
  }
  return CovariatePanel(std::move(processes));
}

AdjacencyList read_adjacency_csv(std::istream& in) {
  const auto rows = read_table(in, {"location", "neighbor"});
  std::vector<std::pair<long long, long long>> edges;
  long long p = 0;
  for (const auto& r : rows) {
    const auto line = line_of(r);
    const long long a = parse_int(r[0], line), b = parse_int(r[1], line);
    if (a < 1 || b < 1) fail(ErrorKind::io, "line " + std::to_string(line) + ": locations are 1-based");
    if (a == b) fail(ErrorKind::io, "line " + std::to_string(line) + ": a location cannot neighbour itself");
    edges.emplace_back(a - 1, b - 1);
    p = std::max({p, a, b});
  }
  AdjacencyList adj;
  adj.neighbors.resize(static_cast<std::size_t>(p));
  for (const auto& [a, b] : edges) {
    adj.neighbors[static_cast<std::size_t>(a)].push_back(b);
    adj.neighbors[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& n : adj.neighbors) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return adj;
}

Eigen::MatrixXd read_matrix_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split(line)) row.push_back(parse_double(cell, n));
    if (!rows.empty() && row.size() != rows.front().size())
      fail(ErrorKind::io, "line " + std::to_string(n) + ": ragged matrix");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::io, "matrix file is empty");
  Eigen::MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index k = 0; k < m.cols(); ++k) m(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  return m;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail(ErrorKind::io, "failed writing '" + path.string() + "'");
}

json read_json(const std::filesystem::path& path) {
  const auto text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::io, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace pstarmax::io
