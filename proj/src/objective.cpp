#include "ducos/objective.hpp"

#include <stdexcept>

namespace ducos {

template <typename T>
DuCosObjective<T>::DuCosObjective(DuCosModel<T>& model, std::vector<SamplePair> samples, GradientOperator op)
    : model_(model), samples_(std::move(samples)), op_(op) {
  if (samples_.empty()) throw std::invalid_argument("training set is empty");
  const double s = model_.config().depth_scale;
  for (const auto& p : samples_) {
    Prepared q;
    q.x = to_tensor(Raster<T>((p.x.cast<double>() / s).template cast<T>()));
    q.z = to_tensor(Raster<T>((p.z.cast<double>() / s).template cast<T>()));
    q.y_prime = p.prompts.relative_depth.template cast<T>();
    prepared_.push_back(std::move(q));
  }
}

template <typename T>
LossTerms<T> DuCosObjective<T>::evaluate(Index sample) {
  const Prepared& q = prepared_.at(static_cast<std::size_t>(sample));
  const ForwardResult<T> r = model_.forward(q.x, samples_[static_cast<std::size_t>(sample)].prompts);
  LossTerms<T> out;
  out.rec = loss_rec(r.y, q.z);
  out.cf = loss_cf(std::span<const FusionTrace<T>>(r.traces));
  out.gr = loss_gr(r.y, q.y_prime, op_);
  return out;
}

template class DuCosObjective<float>;
template class DuCosObjective<double>;

}  // namespace ducos
