#include "bnode/ude.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bnode/optim.hpp"

namespace bnode {

namespace {

std::map<std::string, double> merged_params(SystemKind kind,
                                            const std::map<std::string, double>& known) {
  std::map<std::string, double> p = SystemSpec::default_params(kind);
  for (const auto& [k, v] : known) {
    if (!p.contains(k)) throw ConfigError("parameter '" + k + "' does not apply to " + to_string(kind));
    p[k] = v;
  }
  return p;
}

SystemKind system_of(UdeBase base) {
  return base == UdeBase::LvMissingInteraction ? SystemKind::LotkaVolterra : SystemKind::Seir;
}

double net_scalar(const MlpSpec& nn, const Vector& theta, const Vector& x) {
  return mlp_forward(nn, theta, x)[0];
}

ad::Var net_scalar(const MlpSpec& nn, const ad::Var& theta, const ad::Var& x) {
  return mlp_forward(nn, theta, x);
}

std::string mask_key(const std::vector<bool>& mask) {
  std::string key;
  for (bool b : mask) key.push_back(b ? '1' : '0');
  return key;
}

}  // namespace

UdeBase parse_ude_base(const std::string& name) {
  if (name == "lv_missing_interaction") return UdeBase::LvMissingInteraction;
  if (name == "seir_missing_exposure") return UdeBase::SeirMissingExposure;
  throw ConfigError("unknown UDE base '" + name + "'");
}

std::string to_string(UdeBase base) {
  return base == UdeBase::LvMissingInteraction ? "lv_missing_interaction" : "seir_missing_exposure";
}

void UdeSpec::validate() const {
  nn.validate();
  if (nn.input_dim() != 2 || nn.output_dim() != 1)
    throw ConfigError("the UDE network must map 2 inputs to 1 output");
  (void)merged_params(system_of(base), known_params);
  if (dataset.spec.kind != system_of(base))
    throw ConfigError("UDE base " + to_string(base) + " needs data from " +
                      to_string(system_of(base)));
  dataset.observed.validate();
}

UdeField::UdeField(UdeBase base, const std::map<std::string, double>& params, MlpSpec nn)
    : base_(base), nn_(std::move(nn)) {
  nn_.validate();
  if (nn_.input_dim() != 2 || nn_.output_dim() != 1)
    throw ConfigError("the UDE network must map 2 inputs to 1 output");
  SystemSpec s;
  s.kind = system_of(base);
  s.params = merged_params(s.kind, params);
  if (base == UdeBase::LvMissingInteraction)
    lv_ = s.lotka_volterra();
  else
    seir_ = s.seir();
}

template <class V, class P>
V UdeField::eval_impl(const P& theta, const V& u) const {
  if (base_ == UdeBase::LvMissingInteraction) {
    const auto u1 = component(u, 0);
    const auto u2 = component(u, 1);
    const auto m = net_scalar(nn_, theta, pack({u1, u2}));
    return pack({lv_.alpha * u1 - m, -lv_.delta * u2 + lv_.gamma * (u1 * u2)});
  }
  const auto s = component(u, 0);
  const auto e = component(u, 1);
  const auto i = component(u, 2);
  const auto m = net_scalar(nn_, theta, pack({e, i}));
  const auto infection = seir_.beta * (s * i);
  return pack({-1.0 * infection, infection - m, seir_.sigma * e - seir_.gamma * i,
               seir_.gamma * i});
}

Vector UdeField::eval(const Vector& theta, double, const Vector& u) const {
  return eval_impl<Vector>(theta, u);
}

ad::Var UdeField::eval(const ad::Var& theta, double, const ad::Var& u) const {
  return eval_impl<ad::Var>(theta, u);
}

Vector UdeField::term_inputs(const Vector& u) const {
  if (u.size() != state_dim()) throw DimMismatch("state has the wrong length for this UDE");
  return base_ == UdeBase::LvMissingInteraction ? pack({u[0], u[1]}) : pack({u[1], u[2]});
}

double UdeField::missing_term(const Vector& theta, const Vector& u) const {
  return net_scalar(nn_, theta, term_inputs(u));
}

std::shared_ptr<const UdeField> make_ude_field(const UdeSpec& spec) {
  spec.validate();
  return std::make_shared<UdeField>(spec.base, spec.known_params, spec.nn);
}

OdePosterior ude_posterior(const UdeSpec& spec, double likelihood_scale, Prior prior) {
  return OdePosterior(
      PosteriorSpec{spec.dataset.observed, make_ude_field(spec), std::move(prior), likelihood_scale});
}

Chain train_ude_psgld(const UdeSpec& spec, const PsgldConfig& cfg, const Vector& init,
                      double likelihood_scale) {
  const OdePosterior posterior = ude_posterior(spec, likelihood_scale);
  return psgld_sample(posterior, init, cfg);
}

std::vector<Vector> estimate_derivatives(const Trajectory& data) {
  data.validate();
  const std::size_t n = data.states.size();
  if (n < 3) throw DimMismatch("derivative estimation needs at least 3 saved states");
  const std::vector<double>& t = data.grid.save_at();
  std::vector<Vector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i < 2 ? 0 : std::min(i - 2, n - std::min<std::size_t>(n, 5));
    const std::size_t hi = std::min(n, lo + 5);
    Matrix a(static_cast<Index>(hi - lo), 3);
    Matrix b(static_cast<Index>(hi - lo), data.dim());
    for (std::size_t k = lo; k < hi; ++k) {
      const double dt = t[k] - t[i];
      a.row(static_cast<Index>(k - lo)) << 1.0, dt, dt * dt;
      b.row(static_cast<Index>(k - lo)) = data.states[k].transpose();
    }
    const Matrix coef = a.colPivHouseholderQr().solve(b);
    out.push_back(coef.row(1).transpose());
  }
  return out;
}

Vector collocation_targets(const UdeSpec& spec) {
  const Trajectory& data = spec.dataset.observed;
  const std::vector<Vector> du = estimate_derivatives(data);
  SystemSpec s;
  s.kind = system_of(spec.base);
  s.params = merged_params(s.kind, spec.known_params);
  Vector y(static_cast<Index>(du.size()));
  for (std::size_t i = 0; i < du.size(); ++i) {
    const Vector& u = data.states[i];
    y[static_cast<Index>(i)] = spec.base == UdeBase::LvMissingInteraction
                                   ? s.lotka_volterra().alpha * u[0] - du[i][0]
                                   : s.seir().beta * u[0] * u[2] - du[i][1];
  }
  return y;
}

Vector collocation_fit(const UdeSpec& spec, const Vector& init, long steps, double lr) {
  const auto field = make_ude_field(spec);
  if (init.size() != field->param_dim()) throw DimMismatch("network weights have the wrong length");
  const Vector y = collocation_targets(spec);
  std::vector<Vector> inputs;
  for (const Vector& u : spec.dataset.observed.states) inputs.push_back(field->term_inputs(u));
  auto objective = [&](ad::Tape& tape, const ad::Var& theta) {
    std::vector<ad::Var> residuals;
    residuals.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i)
      residuals.push_back(mlp_forward(spec.nn, theta, tape.constant(inputs[i])) -
                          y[static_cast<Index>(i)]);
    return -1.0 * tape.sum_squares(tape.concat(residuals));
  };
  Vector theta = init;
  Adam adam(theta.size());
  for (long step = 0; step < steps; ++step) {
    const GradRecord rec = grad_through_integrator(objective, theta);
    adam.step(theta, rec.grad, cosine_lr(lr, step, steps));
  }
  return theta;
}

Vector eval_missing_term(const Vector& theta, const Trajectory& trajectory, const UdeSpec& spec) {
  const auto field = make_ude_field(spec);
  if (theta.size() != field->param_dim()) throw DimMismatch("network weights have the wrong length");
  Vector out(static_cast<Index>(trajectory.states.size()));
  for (std::size_t i = 0; i < trajectory.states.size(); ++i)
    out[static_cast<Index>(i)] = field->missing_term(theta, trajectory.states[i]);
  return out;
}

Vector true_missing_term(const Trajectory& trajectory, const UdeSpec& spec) {
  SystemSpec s = spec.dataset.spec;
  Vector out(static_cast<Index>(trajectory.states.size()));
  for (std::size_t i = 0; i < trajectory.states.size(); ++i) {
    const Vector& u = trajectory.states[i];
    out[static_cast<Index>(i)] = spec.base == UdeBase::LvMissingInteraction
                                     ? s.lotka_volterra().beta * u[0] * u[1]
                                     : s.seir().sigma * u[1];
  }
  return out;
}

const std::array<std::array<int, 2>, kBasisSize>& basis_exponents() {
  static const std::array<std::array<int, 2>, kBasisSize> exps{
      {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {0, 2}, {1, 1}, {2, 1}, {1, 2}, {2, 2}}};
  return exps;
}

std::vector<std::string> basis_names(const std::string& x, const std::string& y) {
  std::vector<std::string> names;
  for (const auto& [i, j] : basis_exponents()) {
    std::string name;
    if (i > 0) name += x + (i == 2 ? "^2" : "");
    if (j > 0) name += y + (j == 2 ? "^2" : "");
    names.push_back(name.empty() ? "1" : name);
  }
  return names;
}

Matrix basis_matrix(const Matrix& xy) {
  if (xy.cols() != 2) throw DimMismatch("basis_matrix needs two input columns");
  Matrix out(xy.rows(), kBasisSize);
  for (int k = 0; k < kBasisSize; ++k) {
    const auto [i, j] = basis_exponents()[static_cast<std::size_t>(k)];
    out.col(k) = (xy.col(0).array().pow(i) * xy.col(1).array().pow(j)).matrix();
  }
  return out;
}

long SparseModel::n_active() const {
  return static_cast<long>(std::count(active_mask.begin(), active_mask.end(), true));
}

double aic_score(double rss, long n_points, long k_active) {
  if (n_points <= 0) throw ConfigError("AIC needs n_points > 0");
  if (rss < 0.0) throw ConfigError("AIC needs rss >= 0");
  const double n = static_cast<double>(n_points);
  const double safe = std::max(rss, std::numeric_limits<double>::min());
  return n * std::log(safe / n) + 2.0 * static_cast<double>(k_active);
}

SparseModel strridge_fit(const Matrix& x, const Vector& y, double lambda_ridge, double threshold,
                         long max_iters) {
  return strridge_fit(x, y, lambda_ridge, threshold, max_iters,
                      std::vector<bool>(static_cast<std::size_t>(x.cols()), true));
}

SparseModel strridge_fit(const Matrix& x, const Vector& y, double lambda_ridge, double threshold,
                         long max_iters, const std::vector<bool>& initial_mask) {
  const Index n = x.rows();
  const Index p = x.cols();
  if (y.size() != n) throw DimMismatch("STRRidge targets and features differ in length");
  if (n < p) throw DimMismatch("STRRidge needs at least as many points as features");
  if (static_cast<Index>(initial_mask.size()) != p) throw DimMismatch("STRRidge mask length");
  if (lambda_ridge < 0.0 || threshold < 0.0) throw ConfigError("STRRidge needs nonnegative knobs");

  const Vector norms = x.colwise().norm().transpose();
  Matrix xn = x;
  std::vector<bool> mask = initial_mask;
  for (Index j = 0; j < p; ++j) {
    if (norms[j] > 0.0)
      xn.col(j) /= norms[j];
    else
      mask[static_cast<std::size_t>(j)] = false;
  }

  Vector cn = Vector::Zero(p);
  auto solve = [&]() {
    cn.setZero();
    std::vector<Index> cols;
    for (Index j = 0; j < p; ++j)
      if (mask[static_cast<std::size_t>(j)]) cols.push_back(j);
    if (cols.empty()) return;
    Matrix a(n, static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) a.col(static_cast<Index>(c)) = xn.col(cols[c]);
    Matrix gram = a.transpose() * a;
    gram.diagonal().array() += lambda_ridge;
    const Vector c = gram.ldlt().solve(a.transpose() * y);
    for (std::size_t k = 0; k < cols.size(); ++k) cn[cols[k]] = c[static_cast<Index>(k)];
  };

  bool settled = false;
  for (long it = 0; it < std::max<long>(max_iters, 1); ++it) {
    solve();
    std::vector<bool> next = mask;
    for (Index j = 0; j < p; ++j)
      if (std::abs(cn[j]) < threshold) next[static_cast<std::size_t>(j)] = false;
    if (next == mask) {
      settled = true;
      break;
    }
    mask = std::move(next);
  }
  if (!settled) solve();

  SparseModel m;
  m.coeffs = Vector::Zero(p);
  for (Index j = 0; j < p; ++j)
    if (mask[static_cast<std::size_t>(j)]) m.coeffs[j] = cn[j] / norms[j];
  m.active_mask = mask;
  m.n_points = static_cast<long>(n);
  m.rss = (y - x * m.coeffs).squaredNorm();
  m.lambda = threshold;
  m.all_pruned = m.n_active() == 0;
  m.aic = aic_score(m.rss, m.n_points, m.n_active());
  return m;
}

std::size_t select_by_aic(const std::vector<SparseModel>& models) {
  if (models.empty()) throw ConfigError("no models to select from");
  std::size_t best_pos = models.size();
  std::size_t best_any = 0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].aic < models[best_any].aic) best_any = i;
    if (models[i].aic > 0.0 && (best_pos == models.size() || models[i].aic < models[best_pos].aic))
      best_pos = i;
  }
  return best_pos < models.size() ? best_pos : best_any;
}

std::vector<double> lv_default_lambdas() { return {0.01, 0.1, 1.0, 2.0, 3.0, 5.0}; }

std::vector<double> seir_default_lambdas() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i)
    out.push_back(0.005 * std::pow(100.0, static_cast<double>(i) / 9.0));
  return out;
}

std::string describe_terms(const SparseModel& model, const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t j = 0; j < model.active_mask.size(); ++j) {
    if (!model.active_mask[j]) continue;
    if (!out.empty()) out += ',';
    out += names[j];
  }
  return out.empty() ? "(none)" : out;
}

RecoveryReport recover_equations(const Chain& chain, const UdeSpec& spec,
                                 const std::vector<double>& lambdas) {
  if (chain.samples.empty()) throw ConfigError("recovery needs a non-empty chain");
  if (lambdas.empty()) throw ConfigError("recovery needs a non-empty lambda grid");
  const auto field = make_ude_field(spec);
  const Trajectory& data = spec.dataset.observed;

  Matrix inputs(static_cast<Index>(data.states.size()), 2);
  for (std::size_t i = 0; i < data.states.size(); ++i)
    inputs.row(static_cast<Index>(i)) = field->term_inputs(data.states[i]).transpose();
  const Matrix features = basis_matrix(inputs);

  RecoveryReport rep;
  rep.term_names = spec.base == UdeBase::LvMissingInteraction ? basis_names("u1", "u2")
                                                              : basis_names("E", "I");
  for (const Vector& theta : chain.samples) {
    const Vector y = eval_missing_term(theta, data, spec);
    std::vector<SparseModel> per_lambda;
    for (double lambda : lambdas)
      per_lambda.push_back(strridge_fit(features, y, kStrRidgePenalty, lambda));
    rep.selected.push_back(select_by_aic(per_lambda));
    rep.models.push_back(std::move(per_lambda));
  }
  const double n_traj = static_cast<double>(rep.models.size());

  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    std::map<std::string, long> counts;
    double error = 0.0;
    double aic = 0.0;
    for (const auto& per_lambda : rep.models) {
      const SparseModel& m = per_lambda[l];
      ++counts[mask_key(m.active_mask)];
      error += std::sqrt(m.rss / static_cast<double>(m.n_points));
      aic += m.aic;
    }
    const auto mode = std::max_element(counts.begin(), counts.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    SparseModel shape;
    for (char c : mode->first) shape.active_mask.push_back(c == '1');
    rep.rows.push_back({lambdas[l], shape.n_active(), describe_terms(shape, rep.term_names),
                        error / n_traj, aic / n_traj,
                        100.0 * static_cast<double>(mode->second) / n_traj});
  }

  std::map<std::string, long> selected_counts;
  for (std::size_t t = 0; t < rep.models.size(); ++t)
    ++selected_counts[mask_key(rep.models[t][rep.selected[t]].active_mask)];
  const auto mode = std::max_element(selected_counts.begin(), selected_counts.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; });
  rep.percent_consensus = 100.0 * static_cast<double>(mode->second) / n_traj;
  rep.consensus_coeffs = Vector::Zero(kBasisSize);
  bool have_best = false;
  for (std::size_t t = 0; t < rep.models.size(); ++t) {
    const SparseModel& m = rep.models[t][rep.selected[t]];
    if (mask_key(m.active_mask) != mode->first) continue;
    rep.consensus_coeffs += m.coeffs / static_cast<double>(mode->second);
    if (!have_best || m.aic < rep.best.aic) {
      rep.best = m;
      have_best = true;
    }
  }
  rep.consensus_terms = describe_terms(rep.best, rep.term_names);
  if (std::none_of(rep.models.begin(), rep.models.end(), [&](const auto& per_lambda) {
        return std::any_of(per_lambda.begin(), per_lambda.end(), [](const SparseModel& m) { return m.aic > 0.0; });
      }))
    log_warning("no model has a positive AIC; selected the lowest AIC instead");
  return rep;
}

}  // namespace bnode
