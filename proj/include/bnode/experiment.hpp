#ifndef BNODE_EXPERIMENT_HPP
#define BNODE_EXPERIMENT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bnode/io.hpp"
#include "bnode/mcmc.hpp"
#include "bnode/mlp.hpp"
#include "bnode/systems.hpp"
#include "bnode/ude.hpp"
#include "bnode/varinf.hpp"

namespace bnode {

enum class Method { Nuts, Sghmc, Sgld, Psgld, ViMeanfield, ViFlow, UdePsgld };

Method parse_method(const std::string& name);
std::string to_string(Method m);

struct PriorSettings {
  /** "quadratic" (-theta.theta) or "gaussian" */
  std::string kind = "quadratic";
  /** Gaussian prior centre: "zero" or "map" */
  std::string center = "zero";
  double sigma = 1.0;
};

struct PosteriorSettings {
  double likelihood_scale = 1.0;
  PriorSettings prior;
};

/** steps == 0 skips the MAP stage. */
struct MapSettings {
  long steps = 2000;
  double lr = 1e-2;
  bool cosine_decay = true;
};

struct ViSettings {
  AdviConfig advi;
  long n_layers = 2;
  /** Draws from the fitted family used for predictions. */
  long n_draws = 200;
  double init_scale = 0.1;
};

struct UdeSettings {
  UdeBase base = UdeBase::LvMissingInteraction;
  std::map<std::string, double> known_params;
  long collocation_steps = 5000;
  double collocation_lr = 1e-2;
  /** Empty selects the default grid for the base system. */
  std::vector<double> lambdas;
};

using MethodConfig = std::variant<NutsConfig, SghmcConfig, SgldConfig, PsgldConfig, ViSettings>;

/**
 * One end-to-end run.  Sampler seeds inside method_config are ignored;
 * every random stream is derived from `seed` (see derive_seed).
 */
struct ExperimentConfig {
  SystemSpec system;
  MlpSpec mlp;
  PosteriorSettings posterior;
  MapSettings map;
  Method method = Method::Nuts;
  MethodConfig method_config = NutsConfig{};
  UdeSettings ude;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  /** Posterior samples (thinned evenly) used for the predictive mean. */
  long n_predict = 200;
  /** Optional ParamVec CSV used instead of a fresh network initialization. */
  std::string init_from;

  void validate() const;
};

/** Full serialization: every field, defaults included. */
Json to_json(const ExperimentConfig& cfg);
/** Strict parse: unknown keys anywhere raise ConfigError. */
ExperimentConfig config_from_json(const Json& j);

/** Applies `a.b.c=value`; the value is parsed as JSON, else taken as a string. */
void apply_override(Json& j, const std::string& assignment);

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

enum class Stage { Data, Map, Full };

struct ExperimentReport {
  std::string output_dir;
  /** Wall-clock seconds of the method stage. */
  double seconds = 0.0;
  double map_loss = std::numeric_limits<double>::quiet_NaN();
  /** Lowest trajectory loss among chain samples or family draws. */
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double prediction_mse = std::numeric_limits<double>::quiet_NaN();
  double baseline_mse = std::numeric_limits<double>::quiet_NaN();
  long gradient_evals = 0;
  std::vector<std::string> artifacts;
  std::string error;

  bool ok() const { return error.empty(); }
};

/**
 * Generates the dataset, fits the MAP and runs the method, writing every
 * artifact plus manifest.json under cfg.output_dir.  Config errors throw
 * before any compute; method failures are recorded in the report and the
 * manifest, with earlier artifacts kept.
 */
ExperimentReport run_experiment(const ExperimentConfig& cfg, Stage stage = Stage::Full);

/** Artifacts whose current hash differs from the manifest (empty when all match). */
std::vector<std::string> verify_manifest(const std::string& output_dir, const ExperimentConfig& cfg);

/**
 * summary.csv, autocorr.csv, histograms.csv and (with a MAP point)
 * map_distance.csv for a chain of at least 10 samples; returns the names written.
 */
std::vector<std::string> write_chain_diagnostics(const std::string& output_dir, const Chain& chain,
                                                 const std::optional<Vector>& map_point);

/** Worker count: hardware concurrency capped by BNODE_THREADS. */
std::size_t worker_threads();

struct SweepAxis {
  std::string key;
  std::vector<Json> values;
};

struct SweepPoint {
  std::vector<std::string> overrides;
  ExperimentConfig config;
  ExperimentReport report;
};

/**
 * Runs the cartesian product of the axes over a config template, each
 * point in <output_dir>/point_<i>, and writes <output_dir>/sweep.csv with
 * columns delta, units, layers, seconds, final_loss, gradient_evals, status.
 */
std::vector<SweepPoint> run_sweep(const Json& base, const std::vector<SweepAxis>& axes,
                                  std::size_t threads = 0);

}  // namespace bnode

#endif  // BNODE_EXPERIMENT_HPP
