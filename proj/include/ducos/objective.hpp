#ifndef DUCOS_OBJECTIVE_HPP
#define DUCOS_OBJECTIVE_HPP

#include "ducos/harness.hpp"
#include "ducos/network.hpp"
#include "ducos/trainer.hpp"

#include <vector>

namespace ducos {

/// The depth super-resolution problem: L_rec on valid pixels, L_cf over the
/// fusion stages and L_gr against the prompt relative depth.
template <typename T>
class DuCosObjective final : public Objective<T> {
 public:
  DuCosObjective(DuCosModel<T>& model, std::vector<SamplePair> samples,
                 GradientOperator op = GradientOperator::central);

  std::vector<Parameter<T>> parameters() override { return model_.parameters(); }
  Index size() const override { return static_cast<Index>(samples_.size()); }
  LossTerms<T> evaluate(Index sample) override;

  const std::vector<SamplePair>& samples() const { return samples_; }

 private:
  struct Prepared {
    Tensor<T> x, z, y_prime;
  };

  DuCosModel<T>& model_;
  std::vector<SamplePair> samples_;
  std::vector<Prepared> prepared_;
  GradientOperator op_;
};

}  // namespace ducos

#endif  // DUCOS_OBJECTIVE_HPP
