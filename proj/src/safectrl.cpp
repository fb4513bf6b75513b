#include "gin/safectrl.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace gin::safectrl {

using ad::ShapeError;

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0, 1)");
  // Acklam's coefficients.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double lo = 0.02425, hi = 1.0 - lo;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= hi) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double cvar_coefficient(double alpha, bool literal) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::domain_error("cvar: alpha must lie in (0, 1]");
  if (literal) return normal_pdf(normal_cdf(alpha)) / alpha;
  if (alpha == 1.0) return 0.0;
  return normal_pdf(normal_quantile(alpha)) / alpha;
}

double cvar(double q, double v, double alpha, bool literal) {
  if (v < 0) throw std::domain_error("cvar: variance must be non-negative");
  return q + cvar_coefficient(alpha, literal) * std::sqrt(v);
}

Var cvar(const Var& q, const Var& v, double alpha, bool literal) {
  const double k = cvar_coefficient(alpha, literal);
  if (k == 0.0) return q;
  return ad::add(q, ad::scale(ad::sqrt(v), k));
}

Tensor pooling_weights(const Tensor& positions, const Tensor& mask, double tau, bool distance_weighted) {
  if (mask.rank() != 2 || positions.shape() != ad::Shape{mask.dim(0), mask.dim(1), 2}) {
    throw ShapeError("pooling_weights: positions " + ad::shape_string(positions.shape()) + ", mask " +
                     ad::shape_string(mask.shape()));
  }
  const std::size_t b = mask.dim(0), n = mask.dim(1);
  Tensor w({b, n});
  for (std::size_t s = 0; s < b; ++s) {
    double valid = 0;
    for (std::size_t i = 0; i < n; ++i) valid += mask[s * n + i];
    if (valid == 0) throw std::invalid_argument("pooling_weights: every node is masked");
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[s * n + i] == 0) continue;
      const double r = std::hypot(positions[(s * n + i) * 2], positions[(s * n + i) * 2 + 1]);
      w[s * n + i] = (distance_weighted ? std::exp(-r / tau) : 1.0) / valid;
    }
  }
  return w;
}

Var dap(Tape& tape, ad::Dense& local, const Var& z, const Tensor& weights) {
  return ad::sum_axis1(ad::mul_const(ad::relu(local(tape, z)), weights));
}

namespace {

// Fixed scaling of the path feature before it enters a network.
constexpr double kPathScale[] = {0.5, 1.0, 0.5, 1.0, 0.1};

Var state_input(Tape& tape, ad::Dense& local, const StateBatch& s) {
  if (s.path.rank() != 2 || s.path.dim(1) != feat::kPathDim) throw ShapeError("state: path must be [B, 5]");
  Tensor path = s.path;
  for (std::size_t i = 0; i < path.size(); ++i) path[i] *= kPathScale[i % feat::kPathDim];
  Var pooled = dap(tape, local, tape.constant(s.z), s.weights);
  return ad::concat_last({pooled, tape.constant(std::move(path))});
}

Var column(const Var& x, std::size_t k) {
  return ad::reshape(ad::slice_last(x, k, k + 1), {x.dim(0)});
}

double mean_of(const Tensor& t) {
  double acc = 0;
  for (double v : t.values()) acc += v;
  return acc / static_cast<double>(t.size());
}

}  // namespace

Actor::Actor(const std::string& name, const NetConfig& c, Rng& init)
    : local(name + ".local", c.z_dim, c.local, init),
      trunk(name + ".trunk", {c.local + feat::kPathDim, c.hidden, c.hidden}, init),
      mean_head(name + ".mean", c.hidden, kActionDim, init),
      log_std_head(name + ".log_std", c.hidden, kActionDim, init) {}

Actor::Output Actor::operator()(Tape& tape, const StateBatch& s, const Tensor& eps) {
  if (eps.shape() != ad::Shape{s.size(), kActionDim}) throw ShapeError("actor: noise must be [B, 2]");
  Var h = ad::relu(trunk(tape, state_input(tape, local, s)));
  Var mu = mean_head(tape, h);
  Var log_std = ad::clamp(log_std_head(tape, h), -20.0, 2.0);
  Var u = ad::add(mu, ad::mul(ad::exp(log_std), tape.constant(eps)));
  Var action = ad::tanh(u);
  // log N(u; mu, sigma) = -eps^2/2 - log sigma - log(2 pi)/2, and
  // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)).
  Tensor gauss_const({s.size()});
  for (std::size_t b = 0; b < s.size(); ++b) {
    double eps_term = 0;
    for (std::size_t k = 0; k < kActionDim; ++k) eps_term += eps[b * kActionDim + k] * eps[b * kActionDim + k];
    gauss_const[b] = -0.5 * eps_term - 0.5 * kActionDim * std::log(2 * std::numbers::pi);
  }
  Var squash = ad::scale(ad::add_scalar(ad::neg(ad::add(u, ad::softplus(ad::scale(u, -2.0)))), std::numbers::ln2), 2.0);
  Var log_prob = ad::sub(ad::add(tape.constant(std::move(gauss_const)), ad::neg(ad::sum_last(log_std))),
                         ad::sum_last(squash));
  return {action, log_prob, mu};
}

void Actor::collect(std::vector<Parameter*>& out) {
  local.collect(out);
  trunk.collect(out);
  mean_head.collect(out);
  log_std_head.collect(out);
}

QCritic::QCritic(const std::string& name, const NetConfig& c, Rng& init)
    : local(name + ".local", c.z_dim, c.local, init),
      net(name + ".net", {c.local + feat::kPathDim + kActionDim, c.hidden, c.hidden, 1}, init) {}

Var QCritic::operator()(Tape& tape, const StateBatch& s, const Var& action) {
  Var x = ad::concat_last({state_input(tape, local, s), action});
  return column(net(tape, x), 0);
}

void QCritic::collect(std::vector<Parameter*>& out) {
  local.collect(out);
  net.collect(out);
}

CostCritic::CostCritic(const std::string& name, const NetConfig& c, Rng& init)
    : local(name + ".local", c.z_dim, c.local, init),
      net(name + ".net", {c.local + feat::kPathDim + kActionDim, c.hidden, c.hidden, 2}, init) {}

CostCritic::Output CostCritic::operator()(Tape& tape, const StateBatch& s, const Var& action) {
  Var out = net(tape, ad::concat_last({state_input(tape, local, s), action}));
  return {column(out, 0), ad::softplus(column(out, 1))};
}

void CostCritic::collect(std::vector<Parameter*>& out) {
  local.collect(out);
  net.collect(out);
}

namespace {

template <class Net>
std::vector<Parameter*> params_of(Net& net) {
  std::vector<Parameter*> out;
  net.collect(out);
  return out;
}

template <class Net>
void copy_into(Net& target, Net& online) {
  ad::polyak_update(params_of(target), params_of(online), 0.0);
}

}  // namespace

Wcsac::Wcsac(const WcsacConfig& config, std::uint64_t seed) : config_(config) {
  Rng init(seed);
  actor = Actor("actor", config.net, init);
  q1 = QCritic("q1", config.net, init);
  q2 = QCritic("q2", config.net, init);
  cost_critic = CostCritic("qc", config.net, init);
  actor_target = Actor("actor_t", config.net, init);
  q1_target = QCritic("q1_t", config.net, init);
  q2_target = QCritic("q2_t", config.net, init);
  cost_target = CostCritic("qc_t", config.net, init);
  copy_into(actor_target, actor);
  copy_into(q1_target, q1);
  copy_into(q2_target, q2);
  copy_into(cost_target, cost_critic);
  log_beta = Parameter("log_beta", Tensor::scalar(std::log(config.beta_init)));
  log_kappa = Parameter("log_kappa", Tensor::scalar(config.cost ? std::log(config.kappa_init) : 0.0));

  ad::AdamConfig net_adam;
  net_adam.lr = config.lr;
  ad::AdamConfig weight_adam;
  weight_adam.lr = config.weight_lr;
  actor_opt_ = ad::Adam(params_of(actor), net_adam);
  std::vector<Parameter*> critics = params_of(q1);
  q2.collect(critics);
  critic_opt_ = ad::Adam(critics, net_adam);
  cost_opt_ = ad::Adam(params_of(cost_critic), net_adam);
  beta_opt_ = ad::Adam({&log_beta}, weight_adam);
  kappa_opt_ = ad::Adam({&log_kappa}, weight_adam);
}

double Wcsac::beta() const { return std::exp(log_beta.value.item()); }

double Wcsac::kappa() const { return config_.cost ? std::exp(log_kappa.value.item()) : 0.0; }

namespace {

Tensor normal_noise(std::size_t b, Rng& rng) {
  Tensor eps({b, kActionDim});
  for (double& v : eps.values()) v = rng.normal();
  return eps;
}

}  // namespace

LossReport Wcsac::update(const TransitionBatch& batch, Rng& rng) {
  const std::size_t b = batch.s.size();
  if (b == 0) throw std::invalid_argument("wcsac update: empty batch");
  if (batch.action.shape() != ad::Shape{b, kActionDim} || batch.reward.size() != b || batch.cost.size() != b ||
      batch.done.size() != b || batch.next.size() != b) {
    throw ShapeError("wcsac update: inconsistent batch");
  }
  const double g = config_.gamma, beta_now = beta(), kappa_now = kappa();
  LossReport report;

  // Bellman targets from the target networks.
  Tensor y_r({b}), y_c({b}), next_var({b});
  {
    Tape tape(false);
    auto next = actor_target(tape, batch.next, normal_noise(b, rng));
    const Tensor& q1n = q1_target(tape, batch.next, next.action).value();
    const Tensor& q2n = q2_target(tape, batch.next, next.action).value();
    const Tensor& logp = next.log_prob.value();
    for (std::size_t i = 0; i < b; ++i) {
      const double live = 1.0 - batch.done[i];
      y_r[i] = batch.reward[i] + g * live * (std::min(q1n[i], q2n[i]) - beta_now * logp[i]);
    }
    if (config_.cost) {
      auto cn = cost_target(tape, batch.next, next.action);
      for (std::size_t i = 0; i < b; ++i) {
        const double live = 1.0 - batch.done[i];
        y_c[i] = batch.cost[i] + g * live * cn.mean.value()[i];
        next_var[i] = g * g * live * cn.variance.value()[i];
      }
    }
  }

  {
    Tape tape;
    Var a = tape.constant(batch.action);
    Var y = tape.constant(y_r);
    Var loss = ad::add(ad::mean(ad::square(ad::sub(q1(tape, batch.s, a), y))),
                       ad::mean(ad::square(ad::sub(q2(tape, batch.s, a), y))));
    tape.backward(loss);
    critic_opt_.step();
    report.critic_loss = loss.value().item();
  }

  if (config_.cost) {
    Tape tape;
    auto c = cost_critic(tape, batch.s, tape.constant(batch.action));
    Tensor y_v({b});
    for (std::size_t i = 0; i < b; ++i) {
      const double resid = y_c[i] - c.mean.value()[i];
      y_v[i] = std::max(0.0, resid * resid + next_var[i]);
    }
    Var loss = ad::add(ad::mean(ad::square(ad::sub(c.mean, tape.constant(y_c)))),
                       ad::mean(ad::square(ad::sub(c.variance, tape.constant(y_v)))));
    tape.backward(loss);
    cost_opt_.step();
    report.cost_critic_loss = loss.value().item();
  }

  double mean_logp = 0;
  {
    Tape tape;
    auto pi = actor(tape, batch.s, normal_noise(b, rng));
    Var q = ad::minimum(q1(tape, batch.s, pi.action), q2(tape, batch.s, pi.action));
    Var objective = ad::sub(ad::scale(pi.log_prob, beta_now), q);
    if (config_.cost) {
      auto c = cost_critic(tape, batch.s, pi.action);
      Var gamma_risk = cvar(c.mean, c.variance, config_.alpha, config_.literal_cvar);
      report.mean_gamma = mean_of(gamma_risk.value());
      objective = ad::add(objective, ad::scale(gamma_risk, kappa_now));
    }
    Var loss = ad::mean(objective);
    tape.backward(loss);
    actor_opt_.step();
    // The critics only served as a differentiable path for the actor.
    critic_opt_.zero_grad();
    cost_opt_.zero_grad();
    report.actor_loss = loss.value().item();
    mean_logp = mean_of(pi.log_prob.value());
  }

  log_beta.grad[0] = -(mean_logp + config_.target_entropy);
  beta_opt_.step();
  if (config_.cost) {
    log_kappa.grad[0] = -(report.mean_gamma - config_.budget);
    kappa_opt_.step();
  }
  target_update();
  report.beta = beta();
  report.kappa = kappa();
  return report;
}

void Wcsac::target_update() {
  const double rho = config_.polyak;
  ad::polyak_update(params_of(actor_target), params_of(actor), rho);
  ad::polyak_update(params_of(q1_target), params_of(q1), rho);
  ad::polyak_update(params_of(q2_target), params_of(q2), rho);
  if (config_.cost) ad::polyak_update(params_of(cost_target), params_of(cost_critic), rho);
}

std::array<double, kActionDim> Wcsac::act(const StateBatch& s, Rng& rng, bool deterministic) {
  if (s.size() != 1) throw ShapeError("act expects a single state");
  Tape tape(false);
  Tensor eps = deterministic ? Tensor({1, kActionDim}) : normal_noise(1, rng);
  auto out = actor(tape, s, eps);
  const Tensor& a = out.action.value();
  return {a[0], a[1]};
}

std::vector<Parameter*> Wcsac::parameters() {
  std::vector<Parameter*> out;
  actor.collect(out);
  q1.collect(out);
  q2.collect(out);
  cost_critic.collect(out);
  actor_target.collect(out);
  q1_target.collect(out);
  q2_target.collect(out);
  cost_target.collect(out);
  out.push_back(&log_beta);
  out.push_back(&log_kappa);
  return out;
}

std::vector<ad::Adam*> Wcsac::optimizers() { return {&actor_opt_, &critic_opt_, &cost_opt_, &beta_opt_, &kappa_opt_}; }

void write_loss_header(std::ostream& os) { os << "step,actor_loss,critic_loss,cost_critic_loss,beta,kappa,mean_gamma\n"; }

void write_loss_row(std::ostream& os, long step, const LossReport& r) {
  os << step << ',' << r.actor_loss << ',' << r.critic_loss << ',' << r.cost_critic_loss << ',' << r.beta << ','
     << r.kappa << ',' << r.mean_gamma << '\n';
}

}  // namespace gin::safectrl
