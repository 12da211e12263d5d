#include "dhg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dhg {

double relative_error(const Tensor<double>& analytic, const Tensor<double>& numeric) {
  require(analytic.shape() == numeric.shape(), ErrorCode::kShapeMismatch, "relative_error");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return scale == 0.0 ? 0.0 : diff / scale;
}

std::vector<GradCheckResult> gradcheck(const LossFn& loss, const std::vector<Parameter<double>*>& params,
                                       double h) {
  zero_grad(params);
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  auto eval = [&]() {
    Tape<double> tape(Tape<double>::Mode::kNoGrad);
    return loss(tape).value()[0];
  };
  std::vector<GradCheckResult> results;
  for (Parameter<double>* p : params) {
    Tensor<double> numeric = Tensor<double>::zeros_like(p->value);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = eval();
      p->value[i] = saved - h;
      const double down = eval();
      p->value[i] = saved;
      numeric[i] = (up - down) / (2.0 * h);
    }
    results.push_back({p->name, relative_error(p->grad, numeric), p->value.size()});
  }
  return results;
}

double worst(const std::vector<GradCheckResult>& results) {
  double w = 0.0;
  for (const auto& r : results) w = std::max(w, r.max_rel_error);
  return w;
}

}  // namespace dhg
