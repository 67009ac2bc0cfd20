#ifndef DUCOS_TRAINER_HPP
#define DUCOS_TRAINER_HPP

#include "ducos/losses.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ducos {

/// Raised when a loss turns non-finite; carries the epoch and terms.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ScheduleMode {
  recompute,    // eta(t) = eta0 (1 - t/T)
  compounding,  // eta <- eta (1 - t/T), applied to the running value
};

/// Multipliers and their step lengths. Defaults are the initial values of
/// the dual-ascent algorithm.
struct DualState {
  double lambda = 0.01;
  double mu = 0.05;
  double eta_lambda = 0.01;
  double eta_mu = 0.01;
  double eta_lambda0 = 0.01;
  double eta_mu0 = 0.01;
  int epoch = 0;
  int horizon = 1;

  static DualState initial(int horizon, double lambda = 0.01, double mu = 0.05, double eta_lambda = 0.01,
                           double eta_mu = 0.01);
};

/// Step lengths for epoch t.
DualState step_schedule(DualState dual, int t, ScheduleMode mode = ScheduleMode::recompute);

/// lambda += eta_lambda l_cf, mu += eta_mu l_gr, then both clamped at 0.
DualState ascend(DualState dual, double l_cf, double l_gr);

/// Schedule for epoch t followed by the clamped ascent step.
DualState step_dual(DualState dual, double l_cf, double l_gr, int t, ScheduleMode mode = ScheduleMode::recompute);

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& name);
std::string to_string(ScheduleMode m);
ScheduleMode schedule_from_string(const std::string& name);

struct TrainConfig {
  double lr = 1e-5;  // eta_omega
  int epochs = 1;    // T
  int batch_size = 1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda0 = 0.01;
  double mu0 = 0.05;
  double eta_lambda0 = 0.01;
  double eta_mu0 = 0.01;
  ScheduleMode schedule = ScheduleMode::recompute;
  bool disable_cf_loss = false;
  bool disable_gr_loss = false;
  /// Keep lambda, mu at their initial values (no dual ascent).
  bool fixed_multipliers = false;
  bool shuffle = true;

  void validate() const;
};

/// Loss terms of one sample; an undefined term is treated as absent.
template <typename T>
struct LossTerms {
  Tensor<T> rec;
  Tensor<T> cf;
  Tensor<T> gr;
};

/// Problem the dual-ascent trainer optimizes.
template <typename T>
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::vector<Parameter<T>> parameters() = 0;
  virtual Index size() const = 0;
  /// Records the graph of one sample's loss terms.
  virtual LossTerms<T> evaluate(Index sample) = 0;
};

template <typename T>
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::span<Parameter<T>> params) = 0;
};

template <typename T>
class Sgd final : public Optimizer<T> {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::span<Parameter<T>> params) override;

 private:
  double lr_;
};

template <typename T>
class Adam final : public Optimizer<T> {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::span<Parameter<T>> params) override;

 private:
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  std::vector<Vec<T>> m_, v_;
};

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(const TrainConfig& config);

/// One row of the training history.
struct HistoryRow {
  int epoch = 0;
  double l_rec = 0, l_cf = 0, l_gr = 0;
  double lambda = 0, mu = 0, eta_lambda = 0, eta_mu = 0;
};

void write_history_csv(std::ostream& os, std::span<const HistoryRow> rows);
inline constexpr const char* kHistoryHeader = "epoch,l_rec,l_cf,l_gr,lambda,mu,eta_lambda,eta_mu";

/// Alternating primal descent on the weights and dual ascent on (lambda, mu).
template <typename T>
class Trainer {
 public:
  Trainer(Objective<T>& objective, TrainConfig config);

  /// One optimizer step on the mean Lagrangian of `batch` at the current
  /// multipliers; returns the pre-step losses.
  LossBundle step_primal(std::span<const Index> batch);

  /// Runs epochs until the horizon. `on_epoch` fires after each epoch's dual
  /// update (checkpointing hook).
  std::vector<HistoryRow> train(const std::function<void(const HistoryRow&)>& on_epoch = {});

  const DualState& dual() const { return dual_; }
  DualState& dual() { return dual_; }
  const TrainConfig& config() const { return config_; }

 private:
  Objective<T>& objective_;
  TrainConfig config_;
  DualState dual_;
  std::vector<Parameter<T>> params_;
  std::unique_ptr<Optimizer<T>> optimizer_;
  std::uint64_t shuffle_state_;
};

/// Quadratic test problem: target ||w - a||^2 with constraint ||w - b||^2.
template <typename T>
class ConvexProbe final : public Objective<T> {
 public:
  ConvexProbe(Vec<T> a, Vec<T> b, Vec<T> w0);
  std::vector<Parameter<T>> parameters() override { return {{"w", w_}}; }
  Index size() const override { return 1; }
  LossTerms<T> evaluate(Index sample) override;

  const Tensor<T>& w() const { return w_; }

 private:
  Tensor<T> a_, b_, w_;
};

}  // namespace ducos

#endif  // DUCOS_TRAINER_HPP
