#include "nsda/config.hpp"

#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <Eigen/Core>

namespace nsda::io {

using harness::ConfigError;
using harness::ExperimentConfig;

namespace {

/// Object reader that records the keys it consumed, so leftovers can be
/// reported as unknown fields.
class Obj {
 public:
  Obj(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where(), "expected an object");
  }

  ~Obj() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(sub(it.key()), "unknown field");
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* find(const std::string& key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    const Json* v = find(key);
    if (!v) return;
    out = as<T>(*v, sub(key));
  }

  void get_enum(const std::string& key, auto& out, const std::vector<std::pair<std::string, std::decay_t<decltype(out)>>>& names) {
    const Json* v = find(key);
    if (!v) return;
    if (!v->is_string()) throw ConfigError(sub(key), "expected a string");
    std::string options;
    for (const auto& [name, value] : names) {
      if (v->get<std::string>() == name) {
        out = value;
        return;
      }
      options += (options.empty() ? "" : ", ") + name;
    }
    throw ConfigError(sub(key), "expected one of " + options);
  }

  template <typename T>
  static T as(const Json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return v.get<T>();
        if (v.get<long long>() < 0) throw ConfigError(path, "must be nonnegative");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw ConfigError(path, "expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(as<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

  const std::string& path() const { return path_; }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> used_;
};

LinearGaussianModel<double> linear_model(const Json& j, const std::string& path) {
  try {
    return model_from_json(j, path);
  } catch (const FormatError& e) {
    throw ConfigError(e.path(), std::string(e.what()).substr(e.path().size() + 2));
  }
}

const std::vector<std::pair<std::string, harness::Scenario>> kScenarios{
    {"analytic_example", harness::Scenario::analytic_example},
    {"linear_em", harness::Scenario::linear_em},
    {"linear_gmm", harness::Scenario::linear_gmm},
    {"nonlinear_smc", harness::Scenario::nonlinear_smc}};
const std::vector<std::pair<std::string, CovarianceVariant>> kVariants{
    {"prediction", CovarianceVariant::prediction}, {"smoothed", CovarianceVariant::smoothed}};
const std::vector<std::pair<std::string, Pooling>> kPooling{{"equal_weight", Pooling::equal_weight},
                                                           {"sample_weighted", Pooling::sample_weighted},
                                                           {"total_minus_two", Pooling::total_minus_two}};
const std::vector<std::pair<std::string, harness::TestDraws>> kDraws{
    {"conditional", harness::TestDraws::conditional}, {"marginal", harness::TestDraws::marginal}};

template <typename T>
std::string name_of(const std::vector<std::pair<std::string, T>>& table, T v) {
  for (const auto& [n, x] : table)
    if (x == v) return n;
  return "?";
}

void parse_em(Obj o, EMConfig& em) {
  o.get("tol", em.tol);
  o.get("max_iter", em.max_iter);
  o.get("psd_floor", em.psd_floor);
  if (const Json* e = o.find("estimate")) {
    Obj f(*e, o.sub("estimate"));
    f.get("A", em.estimate.A);
    f.get("Q", em.estimate.Q);
    f.get("init_mean", em.estimate.init_mean);
    f.get("init_cov", em.estimate.init_cov);
    f.get("R", em.estimate.R);
  }
}

void parse_particle_em(Obj o, ParticleEMConfig& p) {
  o.get("initial_step", p.initial_step);
  o.get("backtrack", p.backtrack);
  o.get("max_line_search", p.max_line_search);
  o.get("armijo", p.armijo);
  o.get("max_ascent_steps", p.max_ascent_steps);
  o.get("fd_step", p.fd_step);
  o.get("tol", p.tol);
  o.get("max_iter", p.max_iter);
  o.get("free", p.free);
}

}  // namespace

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig cfg;
  {
    Obj o(j, "");
    if (!o.find("scenario")) throw ConfigError("scenario", "missing");
    o.get_enum("scenario", cfg.scenario, kScenarios);
    if (const Json* m = o.find("model")) cfg.model = linear_model(*m, "model");
    if (const Json* m = o.find("init")) cfg.init = linear_model(*m, "init");
    if (const Json* n = o.find("nonlinear")) {
      Obj s(*n, "nonlinear");
      s.get("observation_noise", cfg.nonlinear.observation_noise);
      s.get("transition_noise", cfg.nonlinear.transition_noise);
      s.get("step", cfg.nonlinear.step);
    }
    if (const Json* a = o.find("analytic")) {
      Obj s(*a, "analytic");
      auto& p = cfg.analytic.params;
      s.get("a", p.a);
      std::vector<double> mu0{p.mu0_0, p.mu0_1};
      s.get("mu0", mu0);
      if (mu0.size() != 2) throw ConfigError("analytic.mu0", "expected two class means");
      p.mu0_0 = mu0[0];
      p.mu0_1 = mu0[1];
      s.get("sigma", p.sigma);
      s.get("sigma_q", p.sigma_q);
      s.get("sigma_r", p.sigma_r);
      s.get("sigmas", cfg.analytic.sigmas);
    }
    o.get("horizons", cfg.horizons);
    if (const Json* c = o.find("counts")) {
      Obj s(*c, "counts");
      s.get("per_time", cfg.counts.per_time);
      s.get("per_class", cfg.counts.per_class);
      if (const Json* ov = s.find("overrides")) {
        if (!ov->is_array()) throw ConfigError("counts.overrides", "expected an array");
        for (std::size_t i = 0; i < ov->size(); ++i) {
          Obj e((*ov)[i], "counts.overrides[" + std::to_string(i) + "]");
          harness::CountSpec::Override x;
          e.get("class", x.cls);
          if (!e.find("time")) throw ConfigError(e.sub("time"), "missing");
          e.get("time", x.time);
          e.get("n", x.n);
          cfg.counts.overrides.push_back(x);
        }
      }
    }
    o.get("runs", cfg.runs);
    o.get("test_size", cfg.test_size);
    o.get("seed", cfg.seed);
    o.get("threads", cfg.threads);
    if (const Json* e = o.find("em")) parse_em(Obj(*e, "em"), cfg.em);
    if (const Json* g = o.find("gmm")) {
      Obj s(*g, "gmm");
      s.get("count", cfg.candidates.count);
      s.get("spread", cfg.candidates.spread);
      s.get("include_truth", cfg.include_truth);
      if (const Json* p = s.find("perturb")) {
        Obj f(*p, "gmm.perturb");
        f.get("A", cfg.candidates.perturb.A);
        f.get("mu0", cfg.candidates.perturb.mu0);
        f.get("Q", cfg.candidates.perturb.Q);
        f.get("R", cfg.candidates.perturb.R);
        f.get("K0", cfg.candidates.perturb.K0);
      }
    }
    if (const Json* p = o.find("particle")) {
      Obj s(*p, "particle");
      s.get("N", cfg.filter.N);
      s.get("lookahead_draws", cfg.filter.lookahead_draws);
      s.get("estimate_theta", cfg.estimate_theta);
      if (const Json* e = s.find("em")) parse_particle_em(Obj(*e, "particle.em"), cfg.particle_em);
    }
    o.get_enum("covariance", cfg.covariance, kVariants);
    o.get_enum("pooling", cfg.pooling, kPooling);
    o.get_enum("test_draws", cfg.test_draws, kDraws);
    if (const Json* s = o.find("shrink")) {
      Obj r(*s, "shrink");
      r.get("lambda", cfg.shrink.lambda);
      r.get("max_condition", cfg.shrink.max_condition);
      r.get("max_steps", cfg.shrink.max_steps);
    }
    o.get("methods", cfg.methods);
  }
  cfg.particle_em.filter = cfg.filter;
  cfg.validate();
  return cfg;
}

ExperimentConfig read_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, std::string("JSON parse error: ") + e.what());
  }
  return experiment_config_from_json(j);
}

Json to_json(const ExperimentConfig& cfg) {
  Json j;
  j["scenario"] = harness::to_string(cfg.scenario);
  if (cfg.scenario == harness::Scenario::linear_em || cfg.scenario == harness::Scenario::linear_gmm) {
    j["model"] = to_json(cfg.truth());
    j["init"] = to_json(cfg.start());
  }
  if (cfg.scenario == harness::Scenario::nonlinear_smc) {
    j["nonlinear"] = {{"observation_noise", cfg.nonlinear.observation_noise},
                      {"transition_noise", cfg.nonlinear.transition_noise},
                      {"step", cfg.nonlinear.step}};
  }
  if (cfg.scenario == harness::Scenario::analytic_example) {
    const auto& p = cfg.analytic.params;
    j["analytic"] = {{"a", p.a},           {"mu0", {p.mu0_0, p.mu0_1}}, {"sigma", p.sigma},
                     {"sigma_q", p.sigma_q}, {"sigma_r", p.sigma_r},      {"sigmas", cfg.analytic.sigmas}};
  }
  j["horizons"] = cfg.horizons;
  Json overrides = Json::array();
  for (const auto& o : cfg.counts.overrides) overrides.push_back({{"class", o.cls}, {"time", o.time}, {"n", o.n}});
  j["counts"] = {{"per_time", cfg.counts.per_time}, {"per_class", cfg.counts.per_class}, {"overrides", overrides}};
  j["runs"] = cfg.runs;
  j["test_size"] = cfg.test_size;
  j["seed"] = cfg.seed;
  const auto& f = cfg.em.estimate;
  j["em"] = {{"tol", cfg.em.tol},
             {"max_iter", cfg.em.max_iter},
             {"psd_floor", cfg.em.psd_floor},
             {"estimate", {{"A", f.A}, {"Q", f.Q}, {"init_mean", f.init_mean}, {"init_cov", f.init_cov}, {"R", f.R}}}};
  const auto& p = cfg.candidates.perturb;
  j["gmm"] = {{"count", cfg.candidates.count},
              {"spread", cfg.candidates.spread},
              {"include_truth", cfg.include_truth},
              {"perturb", {{"A", p.A}, {"mu0", p.mu0}, {"Q", p.Q}, {"R", p.R}, {"K0", p.K0}}}};
  const auto& pe = cfg.particle_em;
  j["particle"] = {{"N", cfg.filter.N},
                   {"lookahead_draws", cfg.filter.lookahead_draws},
                   {"estimate_theta", cfg.estimate_theta},
                   {"em",
                    {{"initial_step", pe.initial_step},
                     {"backtrack", pe.backtrack},
                     {"max_line_search", pe.max_line_search},
                     {"armijo", pe.armijo},
                     {"max_ascent_steps", pe.max_ascent_steps},
                     {"fd_step", pe.fd_step},
                     {"tol", pe.tol},
                     {"max_iter", pe.max_iter},
                     {"free", pe.free}}}};
  j["covariance"] = name_of(kVariants, cfg.covariance);
  j["pooling"] = name_of(kPooling, cfg.pooling);
  j["test_draws"] = name_of(kDraws, cfg.test_draws);
  j["shrink"] = {{"lambda", cfg.shrink.lambda},
                 {"max_condition", cfg.shrink.max_condition},
                 {"max_steps", cfg.shrink.max_steps}};
  j["methods"] = cfg.method_list();
  return j;
}

void write_error_table_csv(std::ostream& os, const harness::ErrorTable& table) {
  os << "method,T,k,error,stderr,runs\n";
  for (const auto& r : table.rows) {
    os << r.method << ',' << r.T << ',' << (r.k < 0 ? std::string("avg") : std::to_string(r.k)) << ','
       << format_double(r.error) << ',' << format_double(r.stderr_) << ',' << r.runs << '\n';
  }
}

std::string version_string() { return "0.1.0"; }

Json manifest(const ExperimentConfig& cfg, const harness::ErrorTable& table, const std::string& command) {
  const auto canonical = to_json(cfg).dump();
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(harness::fnv1a(canonical)));
  Json failures = Json::array();
  for (const auto& f : table.failures) {
    failures.push_back({{"method", f.method}, {"T", f.T}, {"failures", f.failures}, {"first_error", f.first_error}});
  }
  return Json{{"command", command},
              {"scenario", harness::to_string(cfg.scenario)},
              {"seed", cfg.seed},
              {"runs", cfg.runs},
              {"config_hash", std::string(hash)},
              {"versions",
               {{"nsda", version_string()},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"compiler", __VERSION__}}},
              {"failures", failures},
              {"warnings", table.warnings},
              {"config", to_json(cfg)}};
}

}  // namespace nsda::io
