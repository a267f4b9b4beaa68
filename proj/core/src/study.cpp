#include "pstarmax/study.hpp"

#include "pstarmax/error.hpp"
#include "pstarmax/forecast.hpp"
#include "pstarmax/inference.hpp"
#include "pstarmax/io.hpp"
#include "pstarmax/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace pstarmax {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kCovariateStream = 0xC0BA217EULL;

template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::pair<std::string_view, E> (&table)[N], const char* what) {
  std::string norm(s);
  std::replace(norm.begin(), norm.end(), '-', '_');
  for (const auto& [name, value] : table)
    if (name == norm) return value;
  fail(ErrorKind::validation, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::pair<std::string_view, StudyKind> kStudyKinds[] = {
    {"initialization", StudyKind::initialization}, {"size", StudyKind::size},
    {"power", StudyKind::power},                   {"anisotropy", StudyKind::anisotropy},
    {"copula", StudyKind::copula},                 {"intercept_misspec", StudyKind::intercept_misspec},
    {"link_misspec", StudyKind::link_misspec}};
constexpr std::pair<std::string_view, WeightKind> kWeightKinds[] = {{"grid4nn", WeightKind::grid4nn},
                                                                    {"grid_directional", WeightKind::grid_directional}};
constexpr std::pair<std::string_view, FitInit> kFitInits[] = {{"first_obs", FitInit::first_obs},
                                                              {"global_mean", FitInit::global_mean},
                                                              {"zero", FitInit::zero},
                                                              {"true_value", FitInit::true_value}};
constexpr std::pair<std::string_view, TestKind> kTestKinds[] = {
    {"boundary", TestKind::boundary}, {"plain", TestKind::plain}, {"contrast", TestKind::contrast}};

Index index_of(const std::vector<std::string>& names, const std::string& name, const std::string& context) {
  const auto it = std::find(names.begin(), names.end(), name);
  require(it != names.end(), ErrorKind::validation, context + ": no parameter named '" + name + "'");
  return static_cast<Index>(it - names.begin());
}

Eigen::VectorXd linspace(double lo, double hi, int n) { return Eigen::VectorXd::LinSpaced(n, lo, hi); }

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

double mean(const std::vector<double>& v) {
  return v.empty() ? kNaN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Reference settings: delta0, alpha and beta (0.2, 0.1) at lag 1, (0.05, 0.05) at lag 2, gamma01.
ParameterVector reference_theta(Link link, int lags, bool covariate) {
  ParameterVector theta;
  theta.delta = Eigen::VectorXd::Constant(1, link == Link::linear ? 5.0 : 0.6);
  for (int i = 0; i < lags; ++i) {
    const std::vector<double> block = i == 0 ? std::vector<double>{0.2, 0.1} : std::vector<double>{0.05, 0.05};
    theta.alpha.push_back(block);
    theta.beta.push_back(block);
  }
  if (covariate) theta.gamma.push_back({link == Link::linear ? 2.0 : 0.9});
  return theta;
}

ModelSpec orders(Link link, int q, int r, int m, int order = 1) {
  ModelSpec spec;
  spec.link = link;
  spec.a.assign(static_cast<std::size_t>(q), order);
  spec.b.assign(static_cast<std::size_t>(r), order);
  spec.s.assign(static_cast<std::size_t>(m), 0);
  return spec;
}

void set_parameter(ParameterVector& theta, const ModelSpec& spec, Index p, const std::string& name, double value) {
  const ParameterLayout layout(spec, p);
  Eigen::VectorXd flat = pack(theta);
  flat[index_of(layout.names(), name, "generator")] = value;
  theta = unpack(flat, spec, p);
}

// Everything a replicate needs that does not depend on the replicate.
struct Prepared {
  std::map<WeightKind, WeightMatrixSet> weights;
  CovariatePanel covariates;
  Index p = 0;
  std::vector<std::string> generator_names;
  Eigen::VectorXd generator_theta;
  // Per fit: positions of fitted parameters that match a generator parameter.
  std::vector<std::vector<std::pair<Index, Index>>> matched;
  std::vector<std::vector<std::string>> fit_names;
  std::vector<std::size_t> test_fit;
  std::vector<Eigen::MatrixXd> test_matrix;
  std::vector<Eigen::VectorXd> test_rhs;
  std::vector<std::vector<Index>> test_indices;
};

Prepared prepare(const StudyPlan& plan) {
  Prepared prep;
  const auto& gen = plan.generator;
  prep.weights.emplace(gen.weights, build_weights(gen.weights, gen.grid));
  for (const auto& f : plan.fits)
    if (!prep.weights.count(f.weights)) prep.weights.emplace(f.weights, build_weights(f.weights, gen.grid));
  prep.p = prep.weights.at(gen.weights).p();
  prep.covariates = study_covariates(plan);
  prep.generator_names = ParameterLayout(gen.spec, prep.p).names();
  prep.generator_theta = pack(gen.theta);
  for (const auto& f : plan.fits) {
    const auto names = ParameterLayout(f.spec, prep.p).names();
    std::vector<std::pair<Index, Index>> match;
    if (f.spec.link == gen.spec.link && f.weights == gen.weights) {
      for (std::size_t k = 0; k < names.size(); ++k) {
        const auto it = std::find(prep.generator_names.begin(), prep.generator_names.end(), names[k]);
        if (it != prep.generator_names.end())
          match.emplace_back(static_cast<Index>(k), static_cast<Index>(it - prep.generator_names.begin()));
      }
    }
    prep.matched.push_back(std::move(match));
    prep.fit_names.push_back(names);
  }
  for (const auto& t : plan.tests) {
    const auto it = std::find_if(plan.fits.begin(), plan.fits.end(),
                                 [&](const FittedModel& f) { return f.name == t.model; });
    const auto fi = static_cast<std::size_t>(it - plan.fits.begin());
    const auto& names = prep.fit_names[fi];
    prep.test_fit.push_back(fi);
    std::vector<Index> idx;
    Eigen::MatrixXd c;
    Eigen::VectorXd rhs;
    if (t.kind == TestKind::contrast) {
      c = Eigen::MatrixXd::Zero(static_cast<Index>(t.rows.size()), static_cast<Index>(names.size()));
      for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (const auto& [name, coef] : t.rows[r]) c(static_cast<Index>(r), index_of(names, name, t.name)) = coef;
      rhs = Eigen::Map<const Eigen::VectorXd>(t.rhs.data(), static_cast<Index>(t.rhs.size()));
    } else {
      for (const auto& name : t.parameters) idx.push_back(index_of(names, name, t.name));
      c = Eigen::MatrixXd::Zero(static_cast<Index>(idx.size()), static_cast<Index>(names.size()));
      for (std::size_t r = 0; r < idx.size(); ++r) c(static_cast<Index>(r), idx[r]) = 1.0;
      rhs = Eigen::VectorXd::Zero(c.rows());
    }
    prep.test_indices.push_back(std::move(idx));
    prep.test_matrix.push_back(std::move(c));
    prep.test_rhs.push_back(std::move(rhs));
  }
  return prep;
}

struct ReplicateOutput {
  std::vector<FitRecord> fits;
  std::vector<TestRecord> tests;
};

ReplicateOutput run_replicate(const StudyPlan& plan, const Prepared& prep, Index T, int replicate,
                              bool record_timing) {
  const auto& gen = plan.generator;
  const std::uint64_t seed = replicate_seed(plan.seed, T, replicate);
  ReplicateOutput out;

  std::optional<CovariatePanel> x;
  if (!prep.covariates.empty()) x = prep.covariates.slice(0, T);

  SimulationConfig sim_cfg;
  sim_cfg.T = T;
  sim_cfg.burn_in = gen.burn_in;
  sim_cfg.seed = seed;
  sim_cfg.copula = gen.copula;
  std::optional<SimulationResult> sim;
  std::string sim_error;
  try {
    sim = simulate_path(gen.theta, gen.spec, prep.weights.at(gen.weights), x ? &*x : nullptr, sim_cfg);
  } catch (const std::exception& e) {
    sim_error = std::string("simulation: ") + e.what();
  }

  std::vector<std::optional<FitResult>> results(plan.fits.size());
  for (std::size_t f = 0; f < plan.fits.size(); ++f) {
    const auto& model = plan.fits[f];
    FitRecord rec;
    rec.T = T;
    rec.replicate = replicate;
    rec.seed = seed;
    rec.model = model.name;
    rec.names = prep.fit_names[f];
    rec.mse = rec.mae = rec.mspe = rec.loglik = rec.qic = kNaN;
    if (!sim) {
      rec.failed = true;
      rec.error = sim_error;
      out.fits.push_back(std::move(rec));
      continue;
    }
    const auto& w = prep.weights.at(model.weights);
    const CovariatePanel* xf = model.spec.m() > 0 ? &*x : nullptr;
    FitConfig cfg = plan.fit_config;
    cfg.multistart_seed = seed;
    switch (model.init) {
      case FitInit::first_obs: cfg.init = InitStrategy::first_obs; break;
      case FitInit::global_mean: cfg.init = InitStrategy::global_mean; break;
      case FitInit::zero: cfg.init = InitStrategy::zero; break;
      case FitInit::true_value: {
        cfg.init = InitStrategy::supplied;
        Eigen::MatrixXd init = sim->intensity.leftCols(model.spec.first_time());
        if (model.spec.link == Link::log_linear) init = init.array().log();
        cfg.supplied_init = std::move(init);
        break;
      }
    }
    const auto start = std::chrono::steady_clock::now();
    try {
      FitResult res = fit(model.spec, w, sim->counts, xf, cfg);
      rec.converged = res.converged;
      rec.iterations = res.iterations;
      rec.loglik = res.loglik;
      rec.qic = res.qic;
      rec.theta = res.theta;
      if (!prep.matched[f].empty()) {
        double sq = 0.0;
        for (const auto& [k, g] : prep.matched[f]) sq += std::pow(res.theta[k] - prep.generator_theta[g], 2);
        rec.mse = sq / static_cast<double>(prep.matched[f].size());
      }
      FilterOptions opts;
      opts.init = cfg.init;
      opts.supplied = cfg.supplied_init;
      const auto state = QuasiLikelihood(model.spec, w, sim->counts, xf, opts).filter(res.theta);
      const Index n = T - model.spec.first_time() + 1;
      rec.mae = mae(sim->counts.values().rightCols(n), state.intensity.rightCols(n));
      rec.mspe = mspe(sim->counts.values().rightCols(n), state.intensity.rightCols(n));
      results[f] = std::move(res);
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
    if (record_timing)
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.fits.push_back(std::move(rec));
  }

  const bool complete = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.has_value(); });
  if (complete && !results.empty()) {
    std::vector<FitResult> all;
    for (const auto& r : results) all.push_back(*r);
    const auto ranked = compare_models(all);
    for (std::size_t k = 0; k < ranked.size(); ++k) out.fits[ranked[k].index].qic_rank = static_cast<int>(k + 1);
  }

  for (std::size_t t = 0; t < plan.tests.size(); ++t) {
    const auto& spec = plan.tests[t];
    TestRecord rec;
    rec.T = T;
    rec.replicate = replicate;
    rec.test = spec.name;
    const auto& res = results[prep.test_fit[t]];
    if (!res) {
      rec.error = "fit failed";
      out.tests.push_back(std::move(rec));
      continue;
    }
    try {
      WaldResult wr;
      if (spec.kind == TestKind::boundary) {
        wr = boundary_test(*res, prep.test_indices[t]);
      } else {
        wr = wald_test(*res, prep.test_matrix[t], prep.test_rhs[t]);
      }
      rec.valid = true;
      rec.statistic = wr.statistic;
      rec.p_value = wr.p_value;
      rec.reject = wr.p_value < plan.alpha;
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    out.tests.push_back(std::move(rec));
  }
  return out;
}

nlohmann::json fit_config_to_json(const FitConfig& c) {
  return {{"criterion", std::string(to_string(c.criterion))},
          {"slack", c.slack},
          {"gradient_tolerance", c.gradient_tolerance},
          {"max_iterations", c.max_iterations},
          {"multistart", c.multistart},
          {"log_linear_box", c.log_linear_box},
          {"check_design_rank", c.check_design_rank}};
}

FitConfig fit_config_from_json(const nlohmann::json& j) {
  FitConfig c;
  c.criterion = parse_criterion(j.value("criterion", std::string(to_string(c.criterion))));
  c.slack = j.value("slack", c.slack);
  c.gradient_tolerance = j.value("gradient_tolerance", c.gradient_tolerance);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.multistart = j.value("multistart", c.multistart);
  c.log_linear_box = j.value("log_linear_box", c.log_linear_box);
  c.check_design_rank = j.value("check_design_rank", c.check_design_rank);
  return c;
}

PresetOptions preset_options_from_json(const nlohmann::json& j) {
  PresetOptions o;
  o.link = parse_link(j.value("link", std::string(to_string(o.link))));
  o.T = j.value("T", o.T);
  o.replicates = j.value("replicates", o.replicates);
  o.seed = j.value("seed", o.seed);
  o.grid = j.value("grid", o.grid);
  if (j.contains("copula")) o.copula = io::copula_from_json(j.at("copula"));
  o.lags = j.value("lags", o.lags);
  o.covariate = j.value("covariate", o.covariate);
  o.feedback = j.value("feedback", o.feedback);
  o.parameter = j.value("parameter", o.parameter);
  o.negative = j.value("negative", o.negative);
  o.grid_values = j.value("grid_values", o.grid_values);
  return o;
}

std::string csv_double(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

std::string_view to_string(StudyKind kind) noexcept {
  for (const auto& [name, value] : kStudyKinds)
    if (value == kind) return name;
  return "?";
}
StudyKind parse_study_kind(std::string_view s) { return parse_enum(s, kStudyKinds, "study kind"); }

std::string_view to_string(WeightKind kind) noexcept {
  for (const auto& [name, value] : kWeightKinds)
    if (value == kind) return name;
  return "?";
}
WeightKind parse_weight_kind(std::string_view s) { return parse_enum(s, kWeightKinds, "weight kind"); }

WeightMatrixSet build_weights(WeightKind kind, int n) {
  return kind == WeightKind::grid4nn ? build_grid_4nn({n}) : build_grid_directional({n});
}

std::string_view to_string(FitInit init) noexcept {
  for (const auto& [name, value] : kFitInits)
    if (value == init) return name;
  return "?";
}
FitInit parse_fit_init(std::string_view s) { return parse_enum(s, kFitInits, "fit init"); }

std::string_view to_string(TestKind kind) noexcept {
  for (const auto& [name, value] : kTestKinds)
    if (value == kind) return name;
  return "?";
}
TestKind parse_test_kind(std::string_view s) { return parse_enum(s, kTestKinds, "test kind"); }

void StudyPlan::check() const {
  require(replicates >= 1, ErrorKind::validation, "replicate count must be at least 1");
  require(!T.empty(), ErrorKind::validation, "no sample sizes given");
  require(!fits.empty(), ErrorKind::validation, "no fitted models given");
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::validation, "alpha must be in (0, 1)");
  require(generator.grid >= 2, ErrorKind::validation, "grid must be at least 2 x 2");
  require(generator.burn_in >= 0, ErrorKind::validation, "burn-in must be nonnegative");
  fit_config.check();
  const auto gw = build_weights(generator.weights, generator.grid);
  const Index p = gw.p();
  generator.spec.check(gw);
  check_shape(generator.theta, generator.spec, p);
  generator.copula.check(p);
  for (const auto t : T) require(t >= 1, ErrorKind::validation, "sample sizes must be positive");
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& f = fits[i];
    require(!f.name.empty(), ErrorKind::validation, "fitted models need a name");
    for (std::size_t k = 0; k < i; ++k)
      require(fits[k].name != f.name, ErrorKind::validation, "duplicate fitted model '" + f.name + "'");
    f.spec.check(build_weights(f.weights, generator.grid));
    require(f.spec.m() <= generator.spec.m(), ErrorKind::validation,
            "fitted model '" + f.name + "' uses more covariates than the generator provides");
    for (const auto t : T)
      require(t >= f.spec.first_time(), ErrorKind::validation,
              "insufficient observations: T = " + std::to_string(t) + " for model '" + f.name + "'");
  }
  for (const auto& t : tests) {
    require(std::any_of(fits.begin(), fits.end(), [&](const FittedModel& f) { return f.name == t.model; }),
            ErrorKind::validation, "test '" + t.name + "' refers to unknown model '" + t.model + "'");
    if (t.kind == TestKind::contrast) {
      require(!t.rows.empty() && t.rows.size() == t.rhs.size(), ErrorKind::validation,
              "contrast '" + t.name + "' needs one rhs entry per row");
    } else {
      require(!t.parameters.empty(), ErrorKind::validation, "test '" + t.name + "' names no parameters");
    }
  }
  if (grid) {
    require(!grid->values.empty(), ErrorKind::validation, "parameter grid is empty");
    index_of(ParameterLayout(generator.spec, p).names(), grid->parameter, "grid");
  }
  prepare(*this);
}

StudyPlan preset_plan(StudyKind kind, const PresetOptions& o) {
  StudyPlan plan;
  plan.kind = kind;
  plan.T = o.T;
  plan.replicates = o.replicates;
  plan.seed = o.seed;
  auto& gen = plan.generator;
  gen.grid = o.grid;
  gen.copula = o.copula;
  const Index p = static_cast<Index>(o.grid) * o.grid;
  if (o.link == Link::log_linear) {
    gen.covariate.center = true;
    gen.covariate.shift_nonnegative = false;
  }

  auto same_fit = [&](std::string name, FitInit init = FitInit::first_obs) {
    plan.fits.push_back({std::move(name), gen.spec, gen.weights, init});
  };

  switch (kind) {
    case StudyKind::initialization: {
      require(o.lags == 1 || o.lags == 2, ErrorKind::validation, "lags must be 1 or 2");
      gen.spec = orders(o.link, o.lags, o.lags, o.covariate ? 1 : 0);
      gen.theta = reference_theta(o.link, o.lags, o.covariate);
      for (auto init : {FitInit::first_obs, FitInit::global_mean, FitInit::zero, FitInit::true_value})
        same_fit(std::string(to_string(init)), init);
      break;
    }
    case StudyKind::size:
    case StudyKind::power: {
      const bool cov = o.covariate || o.parameter.rfind("gamma", 0) == 0;
      gen.spec = orders(o.link, o.feedback ? 1 : 0, 1, cov ? 1 : 0);
      gen.theta = reference_theta(o.link, 1, cov);
      if (!o.feedback) {
        gen.theta.alpha.clear();
        gen.theta.beta[0][1] = 0.25;
      }
      if (kind == StudyKind::size) set_parameter(gen.theta, gen.spec, p, o.parameter, 0.0);
      same_fit("model");
      plan.tests.push_back({o.parameter, "model", TestKind::boundary, {o.parameter}, {}, {}});
      plan.tests.push_back({o.parameter + ":plain", "model", TestKind::plain, {o.parameter}, {}, {}});
      if (kind == StudyKind::power) {
        ParameterGrid grid{o.parameter, o.grid_values};
        if (grid.values.empty()) {
          const Eigen::VectorXd v = o.link == Link::linear ? linspace(0.0, 0.5, 11) : linspace(-0.25, 0.25, 11);
          grid.values.assign(v.data(), v.data() + v.size());
        }
        plan.grid = std::move(grid);
      }
      break;
    }
    case StudyKind::anisotropy: {
      gen.weights = WeightKind::grid_directional;
      gen.spec = orders(o.link, 1, 1, 0, 2);
      gen.theta = reference_theta(o.link, 1, false);
      gen.theta.alpha[0].push_back(0.05);
      gen.theta.beta[0].push_back(0.05);
      same_fit("anisotropic");
      plan.fits.push_back({"isotropic", orders(o.link, 1, 1, 0), WeightKind::grid4nn, FitInit::first_obs});
      plan.tests.push_back({"isotropic:beta[1][1]", "isotropic", TestKind::boundary, {"beta[1][1]"}, {}, {}});
      plan.tests.push_back({"isotropic:alpha[1][1]", "isotropic", TestKind::boundary, {"alpha[1][1]"}, {}, {}});
      plan.tests.push_back({"anisotropic:beta_contrast", "anisotropic", TestKind::contrast, {},
                            {{{"beta[1][2]", 1.0}, {"beta[1][1]", -1.0}}}, {0.0}});
      plan.tests.push_back({"anisotropic:alpha_contrast", "anisotropic", TestKind::contrast, {},
                            {{{"alpha[1][2]", 1.0}, {"alpha[1][1]", -1.0}}}, {0.0}});
      break;
    }
    case StudyKind::copula: {
      gen.spec = orders(o.link, 1, 1, 0);
      gen.theta = reference_theta(o.link, 1, false);
      same_fit("model");
      break;
    }
    case StudyKind::intercept_misspec: {
      gen.spec = orders(o.link, 1, 1, 0);
      gen.spec.intercept = InterceptKind::inhomogeneous;
      gen.theta = reference_theta(o.link, 1, false);
      gen.theta.delta.resize(p);
      for (Index i = 0; i < p; ++i) {
        const double frac = static_cast<double>(i + 1) / static_cast<double>(p);
        gen.theta.delta[i] = o.link == Link::linear ? 2.0 + 3.0 * frac : 0.6 * frac;
      }
      same_fit("inhomogeneous");
      ModelSpec homog = gen.spec;
      homog.intercept = InterceptKind::homogeneous;
      plan.fits.push_back({"homogeneous", homog, WeightKind::grid4nn, FitInit::first_obs});
      break;
    }
    case StudyKind::link_misspec: {
      gen.spec = orders(o.link, 1, 1, 0);
      gen.theta = reference_theta(o.link, 1, false);
      if (o.negative) {
        require(o.link == Link::log_linear, ErrorKind::validation, "negative coefficients need the log-linear link");
        gen.theta.alpha[0][0] = -0.2;
        gen.theta.beta[0][0] = -0.2;
      }
      plan.fits.push_back({"linear", orders(Link::linear, 1, 1, 0), WeightKind::grid4nn, FitInit::first_obs});
      plan.fits.push_back({"log_linear", orders(Link::log_linear, 1, 1, 0), WeightKind::grid4nn, FitInit::first_obs});
      break;
    }
  }
  plan.check();
  return plan;
}

std::uint64_t replicate_seed(std::uint64_t master, Index T, int replicate) noexcept {
  return derive_seed(derive_seed(master, static_cast<std::uint64_t>(T)), static_cast<std::uint64_t>(replicate));
}

CovariatePanel study_covariates(const StudyPlan& plan) {
  const int m = plan.generator.spec.m();
  if (m == 0) return {};
  const Index p = static_cast<Index>(plan.generator.grid) * plan.generator.grid;
  const Index tmax = *std::max_element(plan.T.begin(), plan.T.end());
  std::vector<Eigen::MatrixXd> processes;
  for (int k = 0; k < m; ++k) {
    const auto one = generate_arma_covariate(p, tmax, derive_seed(plan.seed ^ kCovariateStream, static_cast<std::uint64_t>(k)),
                                             plan.generator.covariate);
    processes.push_back(one.process(0));
  }
  return CovariatePanel(std::move(processes));
}

StudyReport run_study(const StudyPlan& plan, const RunOptions& options) {
  plan.check();
  require(options.jobs >= 1, ErrorKind::validation, "jobs must be at least 1");
  const Prepared prep = prepare(plan);

  std::vector<std::pair<Index, int>> tasks;
  for (const auto T : plan.T)
    for (int i = 0; i < plan.replicates; ++i) tasks.emplace_back(T, i);
  std::vector<ReplicateOutput> outputs(tasks.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++)
      outputs[k] = run_replicate(plan, prep, tasks[k].first, tasks[k].second, options.record_timing);
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(options.jobs), tasks.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  StudyReport report;
  report.plan = plan;
  for (auto& o : outputs) {
    for (auto& f : o.fits) report.fits.push_back(std::move(f));
    for (auto& t : o.tests) report.tests.push_back(std::move(t));
  }
  summarize(report);
  return report;
}

void summarize(StudyReport& report) {
  const auto& plan = report.plan;
  report.fit_summaries.clear();
  report.test_summaries.clear();
  const auto gen_names = ParameterLayout(plan.generator.spec, static_cast<Index>(plan.generator.grid) * plan.generator.grid).names();
  const Eigen::VectorXd gen_theta = pack(plan.generator.theta);

  for (const auto T : plan.T) {
    // Replicates whose fits all succeeded, for QIC preference.
    std::map<int, int> complete;
    for (const auto& r : report.fits)
      if (r.T == T) complete[r.replicate] += r.qic_rank > 0 ? 1 : 0;
    int n_complete = 0;
    for (const auto& [rep, count] : complete) n_complete += count > 0 ? 1 : 0;

    for (const auto& model : plan.fits) {
      FitSummary s;
      s.T = T;
      s.model = model.name;
      std::vector<double> mse, mae_v, mspe_v, secs;
      std::map<std::string, std::vector<double>> bias;
      int preferred = 0;
      for (const auto& r : report.fits) {
        if (r.T != T || r.model != model.name) continue;
        ++s.n;
        if (r.failed) {
          ++s.failures;
          continue;
        }
        if (!r.converged) ++s.nonconverged;
        if (!std::isnan(r.mse)) mse.push_back(r.mse);
        mae_v.push_back(r.mae);
        mspe_v.push_back(r.mspe);
        secs.push_back(r.seconds);
        if (r.qic_rank == 1) ++preferred;
        if (model.spec.link == plan.generator.spec.link && model.weights == plan.generator.weights) {
          for (std::size_t k = 0; k < r.names.size(); ++k) {
            const auto it = std::find(gen_names.begin(), gen_names.end(), r.names[k]);
            if (it != gen_names.end())
              bias[r.names[k]].push_back(r.theta[static_cast<Index>(k)] - gen_theta[it - gen_names.begin()]);
          }
        }
      }
      s.nonconvergence_rate = s.n > 0 ? static_cast<double>(s.failures + s.nonconverged) / s.n : 0.0;
      s.mean_mse = mean(mse);
      s.median_mse = median(mse);
      s.mean_mae = mean(mae_v);
      s.mean_mspe = mean(mspe_v);
      s.mean_seconds = mean(secs);
      s.qic_preferred = n_complete > 0 ? static_cast<double>(preferred) / n_complete : kNaN;
      for (const auto& [name, v] : bias) s.mean_bias[name] = mean(v);
      report.fit_summaries.push_back(std::move(s));
    }
    for (const auto& test : plan.tests) {
      TestSummary s;
      s.T = T;
      s.test = test.name;
      for (const auto& r : report.tests) {
        if (r.T != T || r.test != test.name || !r.valid) continue;
        ++s.n;
        s.rejections += r.reject ? 1 : 0;
      }
      s.rate = s.n > 0 ? static_cast<double>(s.rejections) / s.n : kNaN;
      s.std_error = s.n > 0 ? std::sqrt(s.rate * (1.0 - s.rate) / s.n) : kNaN;
      report.test_summaries.push_back(std::move(s));
    }
  }
}

const FitSummary& StudyReport::fit_summary(Index T, std::string_view model) const {
  for (const auto& s : fit_summaries)
    if (s.T == T && s.model == model) return s;
  fail(ErrorKind::precondition, "no summary for model '" + std::string(model) + "' at T = " + std::to_string(T));
}

const TestSummary& StudyReport::test_summary(Index T, std::string_view test) const {
  for (const auto& s : test_summaries)
    if (s.T == T && s.test == test) return s;
  fail(ErrorKind::precondition, "no summary for test '" + std::string(test) + "' at T = " + std::to_string(T));
}

std::vector<PowerPoint> power_curve(const StudyPlan& plan, const ParameterGrid& grid, const RunOptions& options) {
  require(!grid.values.empty(), ErrorKind::validation, "parameter grid is empty");
  std::vector<PowerPoint> curve;
  for (const double v : grid.values) {
    StudyPlan at = plan;
    at.grid.reset();
    const Index p = static_cast<Index>(at.generator.grid) * at.generator.grid;
    set_parameter(at.generator.theta, at.generator.spec, p, grid.parameter, v);
    const auto report = run_study(at, options);
    for (const auto& s : report.test_summaries) curve.push_back({v, s.T, s.test, s.n, s.rejections, s.rate});
  }
  return curve;
}

std::vector<double> isotonic_regression(const std::vector<double>& y) {
  // Blocks of (mean, weight); merge while the last two violate monotonicity.
  std::vector<std::pair<double, std::size_t>> blocks;
  for (const double v : y) {
    blocks.emplace_back(v, 1);
    while (blocks.size() > 1 && blocks[blocks.size() - 2].first > blocks.back().first) {
      const auto [m2, w2] = blocks.back();
      blocks.pop_back();
      auto& [m1, w1] = blocks.back();
      m1 = (m1 * static_cast<double>(w1) + m2 * static_cast<double>(w2)) / static_cast<double>(w1 + w2);
      w1 += w2;
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (const auto& [m, w] : blocks) out.insert(out.end(), w, m);
  return out;
}

DesignGrowth covariate_growth(const ModelSpec& spec, const WeightMatrixSet& w, const CovariatePanel& x,
                              double epsilon) {
  require(x.m() == spec.m() && spec.m() > 0, ErrorKind::precondition, "covariates do not match the model");
  require(x.p() == w.p(), ErrorKind::precondition, "covariates do not match the weights");
  require(epsilon > 1.0, ErrorKind::validation, "epsilon must exceed 1");
  const Index p = w.p();
  const Index n_delta = spec.intercept_size(p);
  Index cols = n_delta;
  for (int s : spec.s) cols += s + 1;
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(cols, cols);
  Eigen::MatrixXd xt(p, cols);
  for (Index t = 1; t <= x.T(); ++t) {
    if (n_delta == 1) {
      xt.col(0).setOnes();
    } else {
      xt.leftCols(p).setIdentity();
    }
    Index c = n_delta;
    for (int k = 0; k < spec.m(); ++k)
      for (int l = 0; l <= spec.s[static_cast<std::size_t>(k)]; ++l) w[l].apply(x.process(k).col(t), xt.col(c++));
    f.selfadjointView<Eigen::Lower>().rankUpdate(xt.transpose());
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(f.selfadjointView<Eigen::Lower>());
  DesignGrowth g;
  g.sigma_max = eig.eigenvalues().maxCoeff();
  g.sigma_min = eig.eigenvalues().minCoeff();
  g.ratio = g.sigma_min > 0.0 ? std::sqrt(g.sigma_max) * std::pow(std::log(g.sigma_max), 0.5 * epsilon) / g.sigma_min
                              : std::numeric_limits<double>::infinity();
  return g;
}

nlohmann::json to_json(const StudyPlan& plan) {
  using nlohmann::json;
  const auto& g = plan.generator;
  json fits = json::array();
  for (const auto& f : plan.fits)
    fits.push_back({{"name", f.name},
                    {"model", io::to_json(f.spec)},
                    {"weights", std::string(to_string(f.weights))},
                    {"init", std::string(to_string(f.init))}});
  json tests = json::array();
  for (const auto& t : plan.tests) {
    json item{{"name", t.name}, {"model", t.model}, {"kind", std::string(to_string(t.kind))}};
    if (t.kind == TestKind::contrast) {
      item["rows"] = t.rows;
      item["rhs"] = t.rhs;
    } else {
      item["parameters"] = t.parameters;
    }
    tests.push_back(std::move(item));
  }
  json out{{"kind", std::string(to_string(plan.kind))},
           {"T", plan.T},
           {"replicates", plan.replicates},
           {"seed", plan.seed},
           {"alpha", plan.alpha},
           {"generator",
            {{"model", io::to_json(g.spec)},
             {"theta", io::to_json(g.theta)},
             {"weights", std::string(to_string(g.weights))},
             {"grid", g.grid},
             {"copula", io::to_json(g.copula)},
             {"burn_in", g.burn_in},
             {"covariate",
              {{"ar", g.covariate.ar},
               {"ma", g.covariate.ma},
               {"warmup", g.covariate.warmup},
               {"center", g.covariate.center},
               {"shift_nonnegative", g.covariate.shift_nonnegative}}}}},
           {"fits", fits},
           {"tests", tests},
           {"fit_config", fit_config_to_json(plan.fit_config)}};
  if (plan.grid) out["grid"] = {{"parameter", plan.grid->parameter}, {"values", plan.grid->values}};
  return out;
}

StudyPlan study_plan_from_json(const nlohmann::json& j) {
  try {
    if (j.contains("preset")) {
      StudyPlan plan = preset_plan(parse_study_kind(j.at("preset").get<std::string>()), preset_options_from_json(j));
      if (j.contains("alpha")) plan.alpha = j.at("alpha").get<double>();
      if (j.contains("fit_config")) plan.fit_config = fit_config_from_json(j.at("fit_config"));
      plan.check();
      return plan;
    }
    StudyPlan plan;
    plan.kind = parse_study_kind(j.at("kind").get<std::string>());
    plan.T = j.at("T").get<std::vector<Index>>();
    plan.replicates = j.at("replicates").get<int>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.alpha = j.value("alpha", plan.alpha);
    const auto& g = j.at("generator");
    plan.generator.spec = io::model_spec_from_json(g.at("model"));
    plan.generator.theta = io::parameter_vector_from_json(g.at("theta"));
    plan.generator.weights = parse_weight_kind(g.value("weights", std::string("grid4nn")));
    plan.generator.grid = g.value("grid", plan.generator.grid);
    if (g.contains("copula")) plan.generator.copula = io::copula_from_json(g.at("copula"));
    plan.generator.burn_in = g.value("burn_in", plan.generator.burn_in);
    if (g.contains("covariate")) {
      const auto& c = g.at("covariate");
      auto& cov = plan.generator.covariate;
      cov.ar = c.value("ar", cov.ar);
      cov.ma = c.value("ma", cov.ma);
      cov.warmup = c.value("warmup", cov.warmup);
      cov.center = c.value("center", cov.center);
      cov.shift_nonnegative = c.value("shift_nonnegative", cov.shift_nonnegative);
    }
    for (const auto& f : j.at("fits"))
      plan.fits.push_back({f.at("name").get<std::string>(), io::model_spec_from_json(f.at("model")),
                           parse_weight_kind(f.value("weights", std::string("grid4nn"))),
                           parse_fit_init(f.value("init", std::string("first_obs")))});
    if (j.contains("tests")) {
      for (const auto& t : j.at("tests")) {
        TestSpec spec;
        spec.name = t.at("name").get<std::string>();
        spec.model = t.at("model").get<std::string>();
        spec.kind = parse_test_kind(t.value("kind", std::string("boundary")));
        spec.parameters = t.value("parameters", std::vector<std::string>{});
        spec.rows = t.value("rows", std::vector<std::map<std::string, double>>{});
        spec.rhs = t.value("rhs", std::vector<double>{});
        plan.tests.push_back(std::move(spec));
      }
    }
    if (j.contains("fit_config")) plan.fit_config = fit_config_from_json(j.at("fit_config"));
    if (j.contains("grid"))
      plan.grid = ParameterGrid{j.at("grid").at("parameter").get<std::string>(),
                                j.at("grid").at("values").get<std::vector<double>>()};
    plan.check();
    return plan;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, std::string("study plan: ") + e.what());
  }
}

nlohmann::json to_json(const StudyReport& report) {
  using nlohmann::json;
  json fits = json::array();
  for (const auto& s : report.fit_summaries) {
    json bias = json::object();
    for (const auto& [name, v] : s.mean_bias) bias[name] = number_or_null(v);
    json item{{"T", s.T},
              {"model", s.model},
              {"n", s.n},
              {"failures", s.failures},
              {"nonconverged", s.nonconverged},
              {"nonconvergence_rate", s.nonconvergence_rate},
              {"mean_mse", number_or_null(s.mean_mse)},
              {"median_mse", number_or_null(s.median_mse)},
              {"mean_mae", number_or_null(s.mean_mae)},
              {"mean_mspe", number_or_null(s.mean_mspe)},
              {"qic_preferred", number_or_null(s.qic_preferred)},
              {"mean_bias", bias}};
    if (s.mean_seconds > 0.0) item["mean_seconds"] = s.mean_seconds;
    fits.push_back(std::move(item));
  }
  json tests = json::array();
  for (const auto& s : report.test_summaries)
    tests.push_back({{"T", s.T},
                     {"test", s.test},
                     {"n", s.n},
                     {"rejections", s.rejections},
                     {"rate", number_or_null(s.rate)},
                     {"std_error", number_or_null(s.std_error)}});
  return json{{"plan", to_json(report.plan)},
              {"seed_derivation", "splitmix64: derive_seed(derive_seed(seed, T), replicate)"},
              {"fit_summaries", fits},
              {"test_summaries", tests}};
}

nlohmann::json to_json(const std::vector<PowerPoint>& curve) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& pt : curve)
    out.push_back({{"value", pt.value},
                   {"T", pt.T},
                   {"test", pt.test},
                   {"n", pt.n},
                   {"rejections", pt.rejections},
                   {"rate", number_or_null(pt.rate)}});
  return out;
}

void write_fit_records_csv(std::ostream& out, const StudyReport& report) {
  out << "T,replicate,seed,model,failed,converged,iterations,loglik,qic,qic_rank,mse,mae,mspe,theta,error\n";
  for (const auto& r : report.fits) {
    std::string theta;
    for (Index k = 0; k < r.theta.size(); ++k) theta += (k ? ";" : "") + csv_double(r.theta[k]);
    out << r.T << ',' << r.replicate << ',' << r.seed << ',' << csv_quote(r.model) << ',' << r.failed << ','
        << r.converged << ',' << r.iterations << ',' << csv_double(r.loglik) << ',' << csv_double(r.qic) << ','
        << r.qic_rank << ',' << csv_double(r.mse) << ',' << csv_double(r.mae) << ',' << csv_double(r.mspe) << ','
        << theta << ',' << csv_quote(r.error) << '\n';
  }
}

void write_test_records_csv(std::ostream& out, const StudyReport& report) {
  out << "T,replicate,test,valid,statistic,p_value,reject,error\n";
  for (const auto& r : report.tests)
    out << r.T << ',' << r.replicate << ',' << csv_quote(r.test) << ',' << r.valid << ','
        << csv_double(r.statistic) << ',' << csv_double(r.p_value) << ',' << r.reject << ',' << csv_quote(r.error)
        << '\n';
}

void write_power_curve_csv(std::ostream& out, const std::vector<PowerPoint>& curve) {
  out << "value,T,test,n,rejections,rate\n";
  for (const auto& pt : curve)
    out << csv_double(pt.value) << ',' << pt.T << ',' << csv_quote(pt.test) << ',' << pt.n << ',' << pt.rejections
        << ',' << csv_double(pt.rate) << '\n';
}

}  // namespace pstarmax
