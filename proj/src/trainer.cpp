#include "ducos/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace ducos {

DualState DualState::initial(int horizon, double lambda, double mu, double eta_lambda, double eta_mu) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  DualState d;
  d.lambda = lambda;
  d.mu = mu;
  d.eta_lambda = d.eta_lambda0 = eta_lambda;
  d.eta_mu = d.eta_mu0 = eta_mu;
  d.horizon = horizon;
  return d;
}

DualState step_schedule(DualState dual, int t, ScheduleMode mode) {
  const double factor = 1.0 - static_cast<double>(t) / dual.horizon;
  if (mode == ScheduleMode::recompute) {
    dual.eta_lambda = dual.eta_lambda0 * factor;
    dual.eta_mu = dual.eta_mu0 * factor;
  } else {
    dual.eta_lambda *= factor;
    dual.eta_mu *= factor;
  }
  dual.epoch = t;
  return dual;
}

DualState ascend(DualState dual, double l_cf, double l_gr) {
  dual.lambda = std::max(0.0, dual.lambda + dual.eta_lambda * l_cf);
  dual.mu = std::max(0.0, dual.mu + dual.eta_mu * l_gr);
  return dual;
}

DualState step_dual(DualState dual, double l_cf, double l_gr, int t, ScheduleMode mode) {
  return ascend(step_schedule(dual, t, mode), l_cf, l_gr);
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer: " + name);
}

std::string to_string(ScheduleMode m) { return m == ScheduleMode::recompute ? "recompute" : "compounding"; }

ScheduleMode schedule_from_string(const std::string& name) {
  if (name == "recompute") return ScheduleMode::recompute;
  if (name == "compounding") return ScheduleMode::compounding;
  throw std::invalid_argument("unknown schedule: " + name);
}

void TrainConfig::validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (lambda0 < 0 || mu0 < 0) throw std::invalid_argument("initial multipliers must be nonnegative");
  if (eta_lambda0 < 0 || eta_mu0 < 0) throw std::invalid_argument("dual step lengths must be nonnegative");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 && adam_eps > 0)) {
    throw std::invalid_argument("invalid adam hyperparameters");
  }
}

template <typename T>
void Sgd<T>::step(std::span<Parameter<T>> params) {
  for (auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    p.tensor.mutable_values() -= static_cast<T>(lr_) * p.tensor.grad();
  }
}

template <typename T>
void Adam<T>::step(std::span<Parameter<T>> params) {
  if (m_.empty()) {
    for (auto& p : params) {
      m_.push_back(Vec<T>::Zero(p.tensor.numel()));
      v_.push_back(Vec<T>::Zero(p.tensor.numel()));
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("adam: parameter set changed");
  ++steps_;
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
  const T c1 = static_cast<T>(1.0 - std::pow(beta1_, steps_));
  const T c2 = static_cast<T>(1.0 - std::pow(beta2_, steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i].tensor;
    if (!t.has_grad()) continue;
    const Vec<T>& g = t.grad();
    m_[i] = b1 * m_[i] + (T(1) - b1) * g;
    v_[i] = b2 * v_[i] + (T(1) - b2) * g.square();
    t.mutable_values() -= static_cast<T>(lr_) * (m_[i] / c1) / ((v_[i] / c2).sqrt() + static_cast<T>(eps_));
  }
}

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(const TrainConfig& c) {
  if (c.optimizer == OptimizerKind::adam) return std::make_unique<Adam<T>>(c.lr, c.adam_beta1, c.adam_beta2, c.adam_eps);
  return std::make_unique<Sgd<T>>(c.lr);
}

void write_history_csv(std::ostream& os, std::span<const HistoryRow> rows) {
  os << kHistoryHeader << '\n';
  os.precision(10);
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.l_rec << ',' << r.l_cf << ',' << r.l_gr << ',' << r.lambda << ',' << r.mu << ','
       << r.eta_lambda << ',' << r.eta_mu << '\n';
  }
}

template <typename T>
Trainer<T>::Trainer(Objective<T>& objective, TrainConfig config)
    : objective_(objective), config_(config), shuffle_state_(config.seed) {
  config_.validate();
  dual_ = DualState::initial(config_.epochs, config_.lambda0, config_.mu0, config_.eta_lambda0, config_.eta_mu0);
  params_ = objective_.parameters();
  for (auto& p : params_) p.tensor.set_requires_grad(true);
  optimizer_ = make_optimizer<T>(config_);
}

template <typename T>
LossBundle Trainer<T>::step_primal(std::span<const Index> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  for (auto& p : params_) p.tensor.zero_grad();
  LossBundle out;
  const T inv_b = T(1) / static_cast<T>(batch.size());
  for (Index i : batch) {
    LossTerms<T> terms = objective_.evaluate(i);
    if (config_.disable_cf_loss) terms.cf = {};
    if (config_.disable_gr_loss) terms.gr = {};
    const Tensor<T> total = lagrangian_total(terms.rec, terms.cf, terms.gr, dual_.lambda, dual_.mu);
    const double rec = terms.rec.item();
    const double cf = terms.cf.defined() ? static_cast<double>(terms.cf.item()) : 0.0;
    const double gr = terms.gr.defined() ? static_cast<double>(terms.gr.item()) : 0.0;
    const double lag = total.item();
    if (!std::isfinite(rec) || !std::isfinite(cf) || !std::isfinite(gr) || !std::isfinite(lag)) {
      throw NumericError("non-finite loss at epoch " + std::to_string(dual_.epoch) + " (l_rec=" + std::to_string(rec) +
                         ", l_cf=" + std::to_string(cf) + ", l_gr=" + std::to_string(gr) + ")");
    }
    backward(total * inv_b);
    out.l_rec += rec / batch.size();
    out.l_cf += cf / batch.size();
    out.l_gr += gr / batch.size();
    out.lagrangian += lag / batch.size();
  }
  for (auto& p : params_) {
    if (p.tensor.has_grad() && !p.tensor.grad().allFinite()) {
      throw NumericError("non-finite gradient in " + p.name + " at epoch " + std::to_string(dual_.epoch));
    }
  }
  optimizer_->step(params_);
  return out;
}

template <typename T>
std::vector<HistoryRow> Trainer<T>::train(const std::function<void(const HistoryRow&)>& on_epoch) {
  std::vector<HistoryRow> history;
  const Index n = objective_.size();
  if (n < 1) throw std::invalid_argument("objective has no samples");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(shuffle_state_);
  for (int t = 1; t <= config_.epochs; ++t) {
    dual_.epoch = t;
    if (config_.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double rec = 0, cf = 0, gr = 0;
    Index seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
      const std::size_t len = std::min<std::size_t>(config_.batch_size, order.size() - start);
      const LossBundle b = step_primal(std::span<const Index>(order.data() + start, len));
      rec += b.l_rec * len;
      cf += b.l_cf * len;
      gr += b.l_gr * len;
      seen += static_cast<Index>(len);
    }
    rec /= seen;
    cf /= seen;
    gr /= seen;
    if (!config_.fixed_multipliers) {
      dual_ = step_dual(dual_, config_.disable_cf_loss ? 0.0 : cf, config_.disable_gr_loss ? 0.0 : gr, t,
                        config_.schedule);
    }
    HistoryRow row{t, rec, cf, gr, dual_.lambda, dual_.mu, dual_.eta_lambda, dual_.eta_mu};
    history.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return history;
}

template <typename T>
ConvexProbe<T>::ConvexProbe(Vec<T> a, Vec<T> b, Vec<T> w0) {
  if (a.size() != b.size() || a.size() != w0.size()) throw ShapeError("ConvexProbe: size mismatch");
  const Shape s{a.size()};
  a_ = Tensor<T>(s, std::move(a));
  b_ = Tensor<T>(s, std::move(b));
  w_ = Tensor<T>(s, std::move(w0), true);
}

template <typename T>
LossTerms<T> ConvexProbe<T>::evaluate(Index) {
  return {sum(square(w_ - a_)), sum(square(w_ - b_)), {}};
}

#define DUCOS_INSTANTIATE_TRAINER(T)                                              \
  template class Sgd<T>;                                                          \
  template class Adam<T>;                                                         \
  template std::unique_ptr<Optimizer<T>> make_optimizer<T>(const TrainConfig&);  \
  template class Trainer<T>;                                                      \
  template class ConvexProbe<T>;

DUCOS_INSTANTIATE_TRAINER(float)
DUCOS_INSTANTIATE_TRAINER(double)

}  // namespace ducos
