#include "bnode/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "bnode/diagnostics.hpp"
#include "bnode/posterior.hpp"

namespace fs = std::filesystem;

namespace bnode {

namespace {

// Reads one JSON object and rejects keys that were never asked for.
class Section {
public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  template <class T>
  T require(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(where(key) + " is required");
    return get<T>(key, T{});
  }

  const Json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string where(const std::string& key = "") const {
    const std::string p = key.empty() ? path_ : (path_.empty() ? key : path_ + "." + key);
    return "config key '" + (p.empty() ? std::string("<root>") : p) + "'";
  }

  void done() const {
    for (const auto& item : j_.items())
      if (!seen_.contains(item.key())) throw ConfigError("unknown " + where(item.key()));
  }

private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Vector vec(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

std::vector<double> std_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector default_u0(SystemKind kind) {
  switch (kind) {
    case SystemKind::Spiral:
      return pack({2.0, 0.0});
    case SystemKind::LotkaVolterra:
      return pack({1.0, 1.0});
    case SystemKind::Seir:
      break;
  }
  return pack({0.99, 0.01, 0.0, 0.0});
}

SystemSpec system_from_json(const Json& j) {
  Section s(j, "system");
  SystemSpec spec;
  spec.kind = parse_system_kind(s.require<std::string>("kind"));
  spec.params = SystemSpec::default_params(spec.kind);
  for (const auto& [k, v] : s.get<std::map<std::string, double>>("params", {})) spec.params[k] = v;
  spec.u0 = vec(s.get<std::vector<double>>("u0", std_vec(default_u0(spec.kind))));
  const double t0 = s.get<double>("t0", 0.0);
  const double t1 = s.get<double>("t1", 1.0);
  const long n_steps = s.get<long>("n_steps", 100);
  const long n_save = s.get<long>("n_save", 21);
  spec.grid = TimeGrid::uniform(t0, t1, n_steps, n_save);
  spec.noise_sigma = s.get<double>("noise_sigma", 0.0);
  spec.refine = s.get<long>("refine", 10);
  s.done();
  return spec;
}

Json to_json_system(const SystemSpec& spec) {
  return Json{{"kind", to_string(spec.kind)},
              {"params", spec.params},
              {"u0", std_vec(spec.u0)},
              {"t0", spec.grid.t0()},
              {"t1", spec.grid.t1()},
              {"n_steps", spec.grid.n_steps()},
              {"n_save", static_cast<long>(spec.grid.n_save())},
              {"noise_sigma", spec.noise_sigma},
              {"refine", spec.refine}};
}

MlpSpec mlp_config_from_json(const Json& j) {
  Section s(j, "mlp");
  const auto widths = s.require<std::vector<Index>>("widths");
  const Activation hidden = parse_activation(s.get<std::string>("hidden_activation", "tanh"));
  const Activation output = parse_activation(s.get<std::string>("output_activation", "identity"));
  s.done();
  return MlpSpec(widths, hidden, output);
}

Json to_json_mlp_config(const MlpSpec& spec) {
  const Activation hidden =
      spec.hidden_activations.empty() ? Activation::Tanh : spec.hidden_activations.front();
  return Json{{"widths", spec.layer_widths},
              {"hidden_activation", to_string(hidden)},
              {"output_activation", to_string(spec.output_activation)}};
}

MethodConfig method_config_from_json(Method m, const Json& j) {
  Section s(j, "method_config");
  MethodConfig out;
  switch (m) {
    case Method::Nuts: {
      NutsConfig c;
      c.delta = s.get("delta", c.delta);
      c.n_warmup = s.get("n_warmup", c.n_warmup);
      c.n_samples = s.get("n_samples", c.n_samples);
      c.max_tree_depth = s.get("max_tree_depth", c.max_tree_depth);
      c.initial_step_size = s.get("initial_step_size", c.initial_step_size);
      out = c;
      break;
    }
    case Method::Sghmc: {
      SghmcConfig c;
      c.eta = s.get("eta", c.eta);
      c.alpha = s.get("alpha", c.alpha);
      c.beta_hat = s.get("beta_hat", c.beta_hat);
      c.n_samples = s.get("n_samples", c.n_samples);
      c.n_burnin = s.get("n_burnin", c.n_burnin);
      c.temper = s.get("temper", c.temper);
      out = c;
      break;
    }
    case Method::Sgld: {
      SgldConfig c;
      c.a = s.get("a", c.a);
      c.b = s.get("b", c.b);
      c.gamma = s.get("gamma", c.gamma);
      c.n_iters = s.get("n_iters", c.n_iters);
      c.n_keep = s.get("n_keep", c.n_keep);
      out = c;
      break;
    }
    case Method::Psgld:
    case Method::UdePsgld: {
      PsgldConfig c;
      if (m == Method::UdePsgld) c.sgld.n_keep = 100;
      c.sgld.a = s.get("a", c.sgld.a);
      c.sgld.b = s.get("b", c.sgld.b);
      c.sgld.gamma = s.get("gamma", c.sgld.gamma);
      c.sgld.n_iters = s.get("n_iters", c.sgld.n_iters);
      c.sgld.n_keep = s.get("n_keep", c.sgld.n_keep);
      c.rms_decay = s.get("rms_decay", c.rms_decay);
      c.precond_floor = s.get("precond_floor", c.precond_floor);
      out = c;
      break;
    }
    case Method::ViMeanfield:
    case Method::ViFlow: {
      ViSettings c;
      c.advi.mc_samples = s.get("mc_samples", c.advi.mc_samples);
      c.advi.max_steps = s.get("max_steps", c.advi.max_steps);
      c.advi.lr = s.get("lr", c.advi.lr);
      c.advi.cosine_decay = s.get("cosine_decay", c.advi.cosine_decay);
      c.advi.eval_every = s.get("eval_every", c.advi.eval_every);
      c.advi.eval_draws = s.get("eval_draws", c.advi.eval_draws);
      c.advi.tol = s.get("tol", c.advi.tol);
      c.advi.window = s.get("window", c.advi.window);
      c.n_layers = m == Method::ViFlow ? s.get("n_layers", c.n_layers) : 0;
      if (m == Method::ViMeanfield && s.get<long>("n_layers", 0) != 0)
        throw ConfigError("vi_meanfield takes no flow layers");
      c.n_draws = s.get("n_draws", c.n_draws);
      c.init_scale = s.get("init_scale", c.init_scale);
      out = c;
      break;
    }
  }
  s.done();
  return out;
}

Json to_json_method_config(Method m, const MethodConfig& mc) {
  switch (m) {
    case Method::Nuts: {
      const auto& c = std::get<NutsConfig>(mc);
      return Json{{"delta", c.delta},
                  {"n_warmup", c.n_warmup},
                  {"n_samples", c.n_samples},
                  {"max_tree_depth", c.max_tree_depth},
                  {"initial_step_size", c.initial_step_size}};
    }
    case Method::Sghmc: {
      const auto& c = std::get<SghmcConfig>(mc);
      return Json{{"eta", c.eta},           {"alpha", c.alpha},       {"beta_hat", c.beta_hat},
                  {"n_samples", c.n_samples}, {"n_burnin", c.n_burnin}, {"temper", c.temper}};
    }
    case Method::Sgld: {
      const auto& c = std::get<SgldConfig>(mc);
      return Json{{"a", c.a}, {"b", c.b}, {"gamma", c.gamma}, {"n_iters", c.n_iters}, {"n_keep", c.n_keep}};
    }
    case Method::Psgld:
    case Method::UdePsgld: {
      const auto& c = std::get<PsgldConfig>(mc);
      return Json{{"a", c.sgld.a},
                  {"b", c.sgld.b},
                  {"gamma", c.sgld.gamma},
                  {"n_iters", c.sgld.n_iters},
                  {"n_keep", c.sgld.n_keep},
                  {"rms_decay", c.rms_decay},
                  {"precond_floor", c.precond_floor}};
    }
    case Method::ViMeanfield:
    case Method::ViFlow:
      break;
  }
  const auto& c = std::get<ViSettings>(mc);
  return Json{{"mc_samples", c.advi.mc_samples}, {"max_steps", c.advi.max_steps},
              {"lr", c.advi.lr},                 {"cosine_decay", c.advi.cosine_decay},
              {"eval_every", c.advi.eval_every}, {"eval_draws", c.advi.eval_draws},
              {"tol", c.advi.tol},               {"window", c.advi.window},
              {"n_layers", c.n_layers},          {"n_draws", c.n_draws},
              {"init_scale", c.init_scale}};
}

bool is_sampler(Method m) {
  return m == Method::Nuts || m == Method::Sghmc || m == Method::Sgld || m == Method::Psgld;
}

bool is_vi(Method m) { return m == Method::ViMeanfield || m == Method::ViFlow; }

// ---------------------------------------------------------------------------
// Run helpers

class ArtifactLog {
public:
  explicit ArtifactLog(fs::path dir) : dir_(std::move(dir)) {}
  std::string path(const std::string& name) {
    names_.push_back(name);
    return (dir_ / name).string();
  }
  const std::vector<std::string>& names() const { return names_; }

private:
  fs::path dir_;
  std::vector<std::string> names_;
};

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::vector<Vector> thin(const std::vector<Vector>& samples, long n) {
  if (samples.empty() || n <= 0) return {};
  const std::size_t count = std::min<std::size_t>(samples.size(), static_cast<std::size_t>(n));
  std::vector<Vector> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(samples[i * samples.size() / count]);
  return out;
}

double mse(const Trajectory& a, const Trajectory& b) {
  double total = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    total += (a.states[i] - b.states[i]).squaredNorm();
    count += a.states[i].size();
  }
  return total / static_cast<double>(count);
}

// Mean prediction over the given parameter draws; blown-up rollouts are skipped.
std::optional<Trajectory> predictive_mean(const OdePosterior& post, const std::vector<Vector>& draws) {
  std::optional<Trajectory> mean;
  long used = 0;
  for (const Vector& theta : draws) {
    Trajectory p;
    try {
      p = post.predict(theta);
    } catch (const NonFiniteState&) {
      continue;
    }
    if (!mean) {
      mean = p;
    } else {
      for (std::size_t i = 0; i < p.states.size(); ++i) mean->states[i] += p.states[i];
    }
    ++used;
  }
  if (mean)
    for (Vector& s : mean->states) s /= static_cast<double>(used);
  return mean;
}

void write_diagnostics(ArtifactLog& log, const Chain& chain, const std::optional<Vector>& map_point) {
  if (chain.samples.size() < 10) return;
  const long max_lag = std::min<long>(50, static_cast<long>(chain.samples.size()) - 1);
  const ChainSummary s = summarize(chain, max_lag);
  std::vector<double> index, lag_col;
  for (Index p = 0; p < s.mean.size(); ++p) index.push_back(static_cast<double>(p + 1));
  write_columns_csv(log.path("summary.csv"), {"param", "mean", "std", "ess"},
                    {index, std_vec(s.mean), std_vec(s.std), std_vec(s.ess)});

  const Index shown = std::min<Index>(5, s.autocorr.rows());
  std::vector<std::string> header{"lag"};
  std::vector<std::vector<double>> cols;
  for (long l = 0; l <= max_lag; ++l) lag_col.push_back(static_cast<double>(l));
  cols.push_back(lag_col);
  for (Index p = 0; p < shown; ++p) {
    header.push_back("theta_" + std::to_string(p + 1));
    cols.push_back(std_vec(s.autocorr.row(p).transpose()));
  }
  write_columns_csv(log.path("autocorr.csv"), header, cols);

  const Matrix m = chain_matrix(chain);
  std::vector<double> param, lo, hi, count, density;
  for (Index p = 0; p < shown; ++p) {
    const Histogram h = histogram(m.col(p));
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      param.push_back(static_cast<double>(p + 1));
      lo.push_back(h.edges[b]);
      hi.push_back(h.edges[b + 1]);
      count.push_back(static_cast<double>(h.counts[b]));
      density.push_back(h.density[b]);
    }
  }
  write_columns_csv(log.path("histograms.csv"), {"param", "bin_lo", "bin_hi", "count", "density"},
                    {param, lo, hi, count, density});

  if (map_point) {
    const Vector d = map_distance_trace(chain, *map_point);
    std::vector<double> idx;
    for (Index i = 0; i < d.size(); ++i) idx.push_back(static_cast<double>(i));
    write_columns_csv(log.path("map_distance.csv"), {"index", "distance"}, {idx, std_vec(d)});
  }
}

void write_recovery(ArtifactLog& log, const RecoveryReport& rep, const Chain& chain,
                    const UdeSpec& spec) {
  {
    std::ofstream os(log.path("ude_lambda_summary.csv"));
    os << "lambda,n_active,terms,error,mean_aic,percent_consensus\n";
    for (const LambdaRow& r : rep.rows)
      os << format_double(r.lambda) << ',' << r.n_active << ",\"" << r.terms << "\","
         << format_double(r.error) << ',' << format_double(r.mean_aic) << ','
         << format_double(r.percent_consensus) << '\n';
  }
  Json coeffs = Json::object();
  for (std::size_t j = 0; j < rep.term_names.size(); ++j)
    if (rep.best.active_mask[j]) coeffs[rep.term_names[j]] = rep.best.coeffs[static_cast<Index>(j)];
  write_json(log.path("ude_best_model.json"),
             Json{{"terms", rep.consensus_terms},
                  {"coefficients", coeffs},
                  {"lambda", rep.best.lambda},
                  {"aic", rep.best.aic},
                  {"rss", rep.best.rss},
                  {"percent_consensus", rep.percent_consensus},
                  {"mean_consensus_coefficients", std_vec(rep.consensus_coeffs)},
                  {"term_names", rep.term_names}});

  const Trajectory& data = spec.dataset.observed;
  const Vector truth = true_missing_term(data, spec);
  Matrix series(truth.size(), static_cast<Index>(chain.samples.size()));
  for (std::size_t k = 0; k < chain.samples.size(); ++k)
    series.col(static_cast<Index>(k)) = eval_missing_term(chain.samples[k], data, spec);
  write_columns_csv(log.path("ude_term_series.csv"), {"t", "true", "mean", "min", "max"},
                    {data.grid.save_at(), std_vec(truth), std_vec(series.rowwise().mean()),
                     std_vec(series.rowwise().minCoeff()), std_vec(series.rowwise().maxCoeff())});
}

void write_manifest(const fs::path& dir, const ExperimentConfig& cfg, const ExperimentReport& rep,
                    double wall_seconds) {
  Json artifacts = Json::array();
  for (const std::string& name : rep.artifacts)
    artifacts.push_back(Json{{"path", name}, {"sha256", sha256_file((dir / name).string())}});
  Json m{{"config_sha256", sha256_string(to_json(cfg).dump())},
         {"config", to_json(cfg)},
         {"seed", cfg.seed},
         {"wall_seconds", wall_seconds},
         {"artifacts", artifacts}};
  if (!rep.error.empty()) m["error"] = rep.error;
  write_json((dir / "manifest.json").string(), m);
}

}  // namespace

std::vector<std::string> write_chain_diagnostics(const std::string& output_dir, const Chain& chain,
                                                 const std::optional<Vector>& map_point) {
  fs::create_directories(output_dir);
  ArtifactLog log(output_dir);
  write_diagnostics(log, chain, map_point);
  return log.names();
}

// ---------------------------------------------------------------------------

Method parse_method(const std::string& name) {
  if (name == "nuts") return Method::Nuts;
  if (name == "sghmc") return Method::Sghmc;
  if (name == "sgld") return Method::Sgld;
  if (name == "psgld") return Method::Psgld;
  if (name == "vi_meanfield") return Method::ViMeanfield;
  if (name == "vi_flow") return Method::ViFlow;
  if (name == "ude_psgld") return Method::UdePsgld;
  throw ConfigError("unknown method '" + name + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Nuts:
      return "nuts";
    case Method::Sghmc:
      return "sghmc";
    case Method::Sgld:
      return "sgld";
    case Method::Psgld:
      return "psgld";
    case Method::ViMeanfield:
      return "vi_meanfield";
    case Method::ViFlow:
      return "vi_flow";
    case Method::UdePsgld:
      break;
  }
  return "ude_psgld";
}

void ExperimentConfig::validate() const {
  system.validate();
  mlp.validate();
  if (!(posterior.likelihood_scale > 0.0)) throw ConfigError("posterior.likelihood_scale must be > 0");
  const PriorSettings& p = posterior.prior;
  if (p.kind != "quadratic" && p.kind != "gaussian")
    throw ConfigError("posterior.prior.kind must be 'quadratic' or 'gaussian'");
  if (p.center != "zero" && p.center != "map")
    throw ConfigError("posterior.prior.center must be 'zero' or 'map'");
  if (!(p.sigma > 0.0)) throw ConfigError("posterior.prior.sigma must be > 0");
  if (p.kind == "gaussian" && p.center == "map" && map.steps < 1 && init_from.empty())
    throw ConfigError("a MAP-centred prior needs map.steps >= 1 or init_from");
  if (map.steps < 0 || !(map.lr > 0.0)) throw ConfigError("map settings are invalid");
  if (n_predict < 0) throw ConfigError("n_predict must be >= 0");

  const bool matches = std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, NutsConfig>) return method == Method::Nuts;
        if constexpr (std::is_same_v<T, SghmcConfig>) return method == Method::Sghmc;
        if constexpr (std::is_same_v<T, SgldConfig>) return method == Method::Sgld;
        if constexpr (std::is_same_v<T, PsgldConfig>)
          return method == Method::Psgld || method == Method::UdePsgld;
        if constexpr (std::is_same_v<T, ViSettings>) return is_vi(method);
        return false;
      },
      method_config);
  if (!matches) throw ConfigError("method_config does not match method " + to_string(method));
  std::visit(
      [](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, ViSettings>) {
          c.advi.validate();
          if (c.n_layers < 0 || c.n_draws < 1) throw ConfigError("vi settings are invalid");
        } else {
          c.validate();
        }
      },
      method_config);

  if (method == Method::UdePsgld) {
    const SystemKind want = ude.base == UdeBase::LvMissingInteraction ? SystemKind::LotkaVolterra
                                                                      : SystemKind::Seir;
    if (system.kind != want)
      throw ConfigError("ude.base " + to_string(ude.base) + " needs system " + to_string(want));
    if (mlp.input_dim() != 2 || mlp.output_dim() != 1)
      throw ConfigError("ude_psgld needs a 2 -> 1 network");
    if (ude.collocation_steps < 0) throw ConfigError("ude.collocation_steps must be >= 0");
  } else if (mlp.input_dim() != system.state_dim() || mlp.output_dim() != system.state_dim()) {
    throw ConfigError("mlp widths must start and end with the state dimension " +
                      std::to_string(system.state_dim()));
  }
  if (!init_from.empty() && !fs::exists(init_from))
    throw ConfigError("init_from file " + init_from + " does not exist");
}

Json to_json(const ExperimentConfig& cfg) {
  return Json{{"system", to_json_system(cfg.system)},
              {"mlp", to_json_mlp_config(cfg.mlp)},
              {"posterior",
               {{"likelihood_scale", cfg.posterior.likelihood_scale},
                {"prior",
                 {{"kind", cfg.posterior.prior.kind},
                  {"center", cfg.posterior.prior.center},
                  {"sigma", cfg.posterior.prior.sigma}}}}},
              {"map", {{"steps", cfg.map.steps}, {"lr", cfg.map.lr}, {"cosine_decay", cfg.map.cosine_decay}}},
              {"method", to_string(cfg.method)},
              {"method_config", to_json_method_config(cfg.method, cfg.method_config)},
              {"ude",
               {{"base", to_string(cfg.ude.base)},
                {"known_params", cfg.ude.known_params},
                {"collocation_steps", cfg.ude.collocation_steps},
                {"collocation_lr", cfg.ude.collocation_lr},
                {"lambdas", cfg.ude.lambdas}}},
              {"output_dir", cfg.output_dir},
              {"seed", cfg.seed},
              {"n_predict", cfg.n_predict},
              {"init_from", cfg.init_from}};
}

ExperimentConfig config_from_json(const Json& j) {
  Section root(j, "");
  ExperimentConfig cfg;
  const Json* system = root.child("system");
  if (system == nullptr) throw ConfigError("config key 'system' is required");
  cfg.system = system_from_json(*system);
  const Json* mlp = root.child("mlp");
  if (mlp == nullptr) throw ConfigError("config key 'mlp' is required");
  cfg.mlp = mlp_config_from_json(*mlp);

  if (const Json* post = root.child("posterior")) {
    Section s(*post, "posterior");
    cfg.posterior.likelihood_scale = s.get("likelihood_scale", cfg.posterior.likelihood_scale);
    if (const Json* prior = s.child("prior")) {
      Section p(*prior, "posterior.prior");
      cfg.posterior.prior.kind = p.get("kind", cfg.posterior.prior.kind);
      cfg.posterior.prior.center = p.get("center", cfg.posterior.prior.center);
      cfg.posterior.prior.sigma = p.get("sigma", cfg.posterior.prior.sigma);
      p.done();
    }
    s.done();
  }
  if (const Json* map = root.child("map")) {
    Section s(*map, "map");
    cfg.map.steps = s.get("steps", cfg.map.steps);
    cfg.map.lr = s.get("lr", cfg.map.lr);
    cfg.map.cosine_decay = s.get("cosine_decay", cfg.map.cosine_decay);
    s.done();
  }
  cfg.method = parse_method(root.get<std::string>("method", "nuts"));
  const Json* mc = root.child("method_config");
  cfg.method_config = method_config_from_json(cfg.method, mc != nullptr ? *mc : Json::object());

  cfg.ude.base = cfg.system.kind == SystemKind::Seir ? UdeBase::SeirMissingExposure
                                                     : UdeBase::LvMissingInteraction;
  if (const Json* ude = root.child("ude")) {
    Section s(*ude, "ude");
    cfg.ude.base = parse_ude_base(s.get("base", to_string(cfg.ude.base)));
    cfg.ude.known_params = s.get("known_params", cfg.ude.known_params);
    cfg.ude.collocation_steps = s.get("collocation_steps", cfg.ude.collocation_steps);
    cfg.ude.collocation_lr = s.get("collocation_lr", cfg.ude.collocation_lr);
    cfg.ude.lambdas = s.get("lambdas", cfg.ude.lambdas);
    s.done();
  }
  cfg.output_dir = root.get("output_dir", cfg.output_dir);
  cfg.seed = root.get("seed", cfg.seed);
  cfg.n_predict = root.get("n_predict", cfg.n_predict);
  cfg.init_from = root.get("init_from", cfg.init_from);
  root.done();
  return cfg;
}

void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::exception&) {
    value = text;
  }
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  Json j = read_json(path);
  for (const std::string& o : overrides) apply_override(j, o);
  ExperimentConfig cfg = config_from_json(j);
  cfg.validate();
  return cfg;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, Stage stage) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  ArtifactLog log(dir);
  ExperimentReport rep;
  rep.output_dir = cfg.output_dir;

  try {
    write_json(log.path("config.json"), to_json(cfg));
    const Dataset data = generate_dataset(cfg.system, derive_seed(cfg.seed, 1));
    write_trajectory_csv(log.path("data.csv"), data.observed);
    write_trajectory_csv(log.path("truth.csv"), data.truth);
    write_json(log.path("dataset.json"),
               Json{{"system", to_json_system(cfg.system)}, {"seed", data.seed}});
    if (stage == Stage::Data) {
      rep.artifacts = log.names();
      write_manifest(dir, cfg, rep, seconds_since(t_start));
      return rep;
    }

    const std::uint64_t sampler_seed = derive_seed(cfg.seed, 3);
    Vector init = cfg.init_from.empty() ? init_params(cfg.mlp, derive_seed(cfg.seed, 2)).values
                                        : read_param_vec(cfg.init_from).values;
    if (init.size() != cfg.mlp.param_count())
      throw DimMismatch("init_from does not match the configured network");

    std::optional<UdeSpec> ude;
    const double scale = cfg.posterior.likelihood_scale;
    Prior base_prior = QuadraticPrior{};
    if (cfg.posterior.prior.kind == "gaussian" && cfg.posterior.prior.center == "zero")
      base_prior = GaussianPrior{Vector::Zero(init.size()), cfg.posterior.prior.sigma};

    std::unique_ptr<OdePosterior> post;
    if (cfg.method == Method::UdePsgld) {
      ude = UdeSpec{cfg.ude.base, cfg.ude.known_params, cfg.mlp, data};
      post = std::make_unique<OdePosterior>(ude_posterior(*ude, scale, base_prior));
      if (cfg.ude.collocation_steps > 0 && cfg.init_from.empty())
        init = collocation_fit(*ude, init, cfg.ude.collocation_steps, cfg.ude.collocation_lr);
    } else {
      post = std::make_unique<OdePosterior>(PosteriorSpec::neural(data, cfg.mlp, base_prior, scale));
    }
    rep.baseline_mse = post->zero_field_loss() /
                       static_cast<double>(data.observed.states.size() * data.observed.dim());

    std::optional<Vector> map_point;
    Vector start = init;
    if (cfg.map.steps > 0) {
      const MapResult m = map_estimate(*post, init, MapConfig{cfg.map.steps, cfg.map.lr, cfg.map.cosine_decay});
      map_point = m.theta;
      start = m.theta;
      rep.map_loss = post->loss(m.theta);
      write_param_vec(log.path("map.csv"), ParamVec{m.theta, cfg.mlp});
      log.path("map.json");
      std::vector<double> steps;
      for (std::size_t i = 0; i < m.trace.size(); ++i) steps.push_back(static_cast<double>(i));
      write_columns_csv(log.path("map_trace.csv"), {"step", "log_density"}, {steps, m.trace});
    } else if (!cfg.init_from.empty()) {
      map_point = init;
    }
    if (stage == Stage::Map) {
      rep.artifacts = log.names();
      write_manifest(dir, cfg, rep, seconds_since(t_start));
      return rep;
    }

    if (cfg.posterior.prior.kind == "gaussian" && cfg.posterior.prior.center == "map") {
      const GaussianPrior centred{*map_point, cfg.posterior.prior.sigma};
      post = std::make_unique<OdePosterior>(
          PosteriorSpec{post->spec().data, post->spec().field, centred, scale});
    }

    const auto t_method = std::chrono::steady_clock::now();
    std::vector<Vector> draws;
    if (is_sampler(cfg.method) || cfg.method == Method::UdePsgld) {
      Chain chain;
      std::visit(
          [&](auto c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, NutsConfig>) {
              c.seed = sampler_seed;
              chain = nuts_sample(*post, start, c);
            } else if constexpr (std::is_same_v<T, SghmcConfig>) {
              c.seed = sampler_seed;
              chain = sghmc_sample(*post, start, c);
            } else if constexpr (std::is_same_v<T, SgldConfig>) {
              c.seed = sampler_seed;
              chain = sgld_sample(*post, start, c);
            } else if constexpr (std::is_same_v<T, PsgldConfig>) {
              c.sgld.seed = sampler_seed;
              chain = psgld_sample(*post, start, c);
            }
          },
          cfg.method_config);
      rep.seconds = seconds_since(t_method);
      rep.gradient_evals = chain.stats.gradient_evals;
      write_chain_csv(log.path("chain.csv"), chain);
      write_json(log.path("chain_stats.json"), chain_stats_json(chain.stats));
      write_diagnostics(log, chain, map_point);
      draws = chain.samples;
      if (ude) {
        std::vector<double> lambdas = cfg.ude.lambdas;
        if (lambdas.empty())
          lambdas = ude->base == UdeBase::LvMissingInteraction ? lv_default_lambdas()
                                                               : seir_default_lambdas();
        write_recovery(log, recover_equations(chain, *ude, lambdas), chain, *ude);
      }
    } else {
      const auto& vi = std::get<ViSettings>(cfg.method_config);
      FlowStack family = init_flow(init.size(), static_cast<std::size_t>(vi.n_layers),
                                   derive_seed(cfg.seed, 5), vi.init_scale);
      family.base.mu = start;
      AdviConfig advi = vi.advi;
      advi.seed = sampler_seed;
      const AdviResult fit = advi_fit(*post, family, advi);
      rep.seconds = seconds_since(t_method);
      write_json(log.path("family.json"), to_json(fit.family));
      std::vector<double> steps;
      for (std::size_t i = 0; i < fit.elbo_trace.size(); ++i) steps.push_back(static_cast<double>(i));
      write_columns_csv(log.path("elbo_trace.csv"), {"step", "elbo", "smoothed"},
                        {steps, fit.elbo_trace, fit.smoothed_trace});
      for (const FlowDraw& d : flow_sample_and_logq(fit.family, derive_seed(cfg.seed, 6), vi.n_draws))
        draws.push_back(d.theta);
      Chain as_chain;
      as_chain.samples = draws;
      for (const Vector& d : draws) as_chain.log_densities.push_back(post->log_density(d));
      write_chain_csv(log.path("draws.csv"), as_chain);
    }

    double best = std::numeric_limits<double>::infinity();
    for (const Vector& theta : draws) best = std::min(best, post->loss(theta));
    rep.final_loss = best;
    if (const auto mean = predictive_mean(*post, thin(draws, cfg.n_predict))) {
      write_trajectory_csv(log.path("prediction_mean.csv"), *mean);
      rep.prediction_mse = mse(*mean, data.observed);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    rep.error = e.what();
  }
  std::vector<std::string> present;
  for (const std::string& name : log.names())
    if (fs::exists(dir / name)) present.push_back(name);
  rep.artifacts = present;
  write_manifest(dir, cfg, rep, seconds_since(t_start));
  return rep;
}

std::vector<std::string> verify_manifest(const std::string& output_dir, const ExperimentConfig& cfg) {
  const fs::path dir(output_dir);
  const Json m = read_json((dir / "manifest.json").string());
  std::vector<std::string> bad;
  if (m.at("config_sha256").get<std::string>() != sha256_string(to_json(cfg).dump()))
    bad.push_back("config");
  for (const auto& a : m.at("artifacts")) {
    const std::string name = a.at("path").get<std::string>();
    const fs::path p = dir / name;
    if (!fs::exists(p) || sha256_file(p.string()) != a.at("sha256").get<std::string>())
      bad.push_back(name);
  }
  return bad;
}

std::size_t worker_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BNODE_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
  }
  return n;
}

std::vector<SweepPoint> run_sweep(const Json& base, const std::vector<SweepAxis>& axes,
                                  std::size_t threads) {
  const ExperimentConfig base_cfg = config_from_json(base);
  for (const SweepAxis& axis : axes) {
    if (axis.values.empty()) throw ConfigError("sweep axis '" + axis.key + "' has no values");
    Json probe = base;
    apply_override(probe, axis.key + "=" + axis.values.front().dump());
    if (probe.dump() == base.dump() && !base.contains(axis.key.substr(0, axis.key.find('.'))))
      throw ConfigError("sweep axis '" + axis.key + "' does not name a config key");
    (void)config_from_json(probe);
  }

  std::vector<SweepPoint> points;
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    SweepPoint p;
    Json j = base;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      p.overrides.push_back(axes[a].key + "=" + axes[a].values[idx[a]].dump());
      apply_override(j, p.overrides.back());
    }
    j["output_dir"] = (fs::path(base_cfg.output_dir) / ("point_" + std::to_string(points.size()))).string();
    p.config = config_from_json(j);
    p.config.validate();
    points.push_back(std::move(p));
    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++idx[a] < axes[a].values.size()) break;
      idx[a] = 0;
    }
    if (a == axes.size()) break;
  }

  const std::size_t n_workers = std::min(points.size(), threads == 0 ? worker_threads() : threads);
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        points[i].report = run_experiment(points[i].config);
      } catch (const std::exception& e) {
        points[i].report.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();

  fs::create_directories(base_cfg.output_dir);
  std::ofstream os(fs::path(base_cfg.output_dir) / "sweep.csv");
  os << "delta,units,layers,seconds,final_loss,gradient_evals,status,output_dir\n";
  for (const SweepPoint& p : points) {
    const auto* nuts = std::get_if<NutsConfig>(&p.config.method_config);
    const auto& w = p.config.mlp.layer_widths;
    os << (nuts != nullptr ? format_double(nuts->delta) : "") << ','
       << (w.size() > 2 ? w[1] : 0) << ',' << (w.size() - 2) << ','
       << format_double(p.report.seconds) << ',' << format_double(p.report.final_loss) << ','
       << p.report.gradient_evals << ',' << (p.report.ok() ? "ok" : "failed") << ','
       << p.config.output_dir << '\n';
  }
  return points;
}

}  // namespace bnode
