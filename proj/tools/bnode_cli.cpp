#include <cstdio>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bnode/experiment.hpp"

using namespace bnode;

namespace {

struct RunOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string init_from;
  std::string output_dir;
  bool check = false;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config, "experiment config JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "override a config key, e.g. --set method_config.delta=0.65");
  cmd->add_option("--init-from", o.init_from, "parameter CSV used instead of a fresh initialization");
  cmd->add_option("--output-dir", o.output_dir, "overrides output_dir");
  cmd->add_flag("--check", o.check, "verify the artifacts of a previous run against its manifest");
}

ExperimentConfig load(const RunOptions& o) {
  std::vector<std::string> overrides = o.overrides;
  if (!o.init_from.empty()) overrides.push_back("init_from=" + Json(o.init_from).dump());
  if (!o.output_dir.empty()) overrides.push_back("output_dir=" + Json(o.output_dir).dump());
  return load_config(o.config, overrides);
}

int check_run(const ExperimentConfig& cfg) {
  const std::vector<std::string> bad = verify_manifest(cfg.output_dir, cfg);
  for (const std::string& name : bad) std::cout << "mismatch: " << name << '\n';
  std::cout << (bad.empty() ? "manifest verified" : "manifest check failed") << '\n';
  return bad.empty() ? 0 : 1;
}

int run(const RunOptions& o, Stage stage, const std::set<Method>& allowed, const char* what) {
  const ExperimentConfig cfg = load(o);
  if (o.check) return check_run(cfg);
  if (!allowed.empty() && !allowed.contains(cfg.method))
    throw ConfigError(std::string("method ") + to_string(cfg.method) + " cannot be run by " + what);
  const ExperimentReport rep = run_experiment(cfg, stage);
  std::cout << "output_dir " << rep.output_dir << '\n';
  if (!std::isnan(rep.map_loss)) std::cout << "map_loss " << format_double(rep.map_loss) << '\n';
  if (!std::isnan(rep.final_loss)) std::cout << "final_loss " << format_double(rep.final_loss) << '\n';
  if (!std::isnan(rep.prediction_mse))
    std::cout << "prediction_mse " << format_double(rep.prediction_mse) << " (zero-field "
              << format_double(rep.baseline_mse) << ")\n";
  if (stage == Stage::Full) std::cout << "seconds " << format_double(rep.seconds) << '\n';
  if (!rep.ok()) {
    std::cerr << "error: " << rep.error << '\n';
    return 1;
  }
  return 0;
}

SweepAxis parse_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("axis '" + text + "' is not key=[values]");
  SweepAxis axis{text.substr(0, eq), {}};
  Json values;
  try {
    values = Json::parse(text.substr(eq + 1));
  } catch (const Json::exception&) {
    throw ConfigError("axis '" + axis.key + "' values must be a JSON array");
  }
  if (!values.is_array()) throw ConfigError("axis '" + axis.key + "' values must be a JSON array");
  for (const auto& v : values) axis.values.push_back(v);
  return axis;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian neural ODE inference and universal-ODE term recovery"};
  app.require_subcommand(1);

  RunOptions data_opts, map_opts, sample_opts, vi_opts, ude_opts;
  add_run_options(app.add_subcommand("generate-data", "simulate the configured system"), data_opts);
  add_run_options(app.add_subcommand("map", "generate data and fit the MAP estimate"), map_opts);
  add_run_options(app.add_subcommand("sample", "run NUTS, SGHMC, SGLD or pSGLD"), sample_opts);
  add_run_options(app.add_subcommand("vi", "fit a mean-field or planar-flow family"), vi_opts);
  add_run_options(app.add_subcommand("ude-recover", "train a universal ODE and recover the missing term"),
                  ude_opts);

  auto* diagnose = app.add_subcommand("diagnose", "summaries, autocorrelation and ESS of a chain CSV");
  std::string chain_path, map_path, diag_out = "diagnostics";
  diagnose->add_option("--chain", chain_path, "chain CSV")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--map", map_path, "MAP parameter CSV for distance traces")->check(CLI::ExistingFile);
  diagnose->add_option("--output-dir", diag_out, "where to write the diagnostics");

  auto* sweep = app.add_subcommand("sweep", "run a config over the cartesian product of axes");
  RunOptions sweep_opts;
  std::vector<std::string> axis_texts;
  std::size_t threads = 0;
  sweep->add_option("--config", sweep_opts.config, "template config JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--set", sweep_opts.overrides, "override a template key");
  sweep->add_option("--axis", axis_texts, "key=[v1,v2,...] with JSON values");
  sweep->add_option("--threads", threads, "worker count (0: hardware, capped by BNODE_THREADS)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("generate-data")) return run(data_opts, Stage::Data, {}, "generate-data");
    if (app.got_subcommand("map")) return run(map_opts, Stage::Map, {}, "map");
    if (app.got_subcommand("sample"))
      return run(sample_opts, Stage::Full, {Method::Nuts, Method::Sghmc, Method::Sgld, Method::Psgld},
                 "sample");
    if (app.got_subcommand("vi"))
      return run(vi_opts, Stage::Full, {Method::ViMeanfield, Method::ViFlow}, "vi");
    if (app.got_subcommand("ude-recover"))
      return run(ude_opts, Stage::Full, {Method::UdePsgld}, "ude-recover");
    if (app.got_subcommand("diagnose")) {
      const Chain chain = read_chain_csv(chain_path);
      std::optional<Vector> map_point;
      if (!map_path.empty()) map_point = read_param_vec(map_path).values;
      for (const std::string& name : write_chain_diagnostics(diag_out, chain, map_point))
        std::cout << "wrote " << name << '\n';
      return 0;
    }
    Json base = read_json(sweep_opts.config);
    for (const std::string& o : sweep_opts.overrides) apply_override(base, o);
    std::vector<SweepAxis> axes;
    for (const std::string& t : axis_texts) axes.push_back(parse_axis(t));
    const auto points = run_sweep(base, axes, threads);
    int failed = 0;
    for (const SweepPoint& p : points) {
      std::cout << p.config.output_dir << ' ' << (p.report.ok() ? "ok" : "failed: " + p.report.error)
                << '\n';
      failed += p.report.ok() ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
