#include "acr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "acr/error.hpp"

namespace acr {

namespace {

double evaluate(const MultiScalarFunction& f, const std::vector<Matrix>& values) {
  std::vector<Tensor> inputs;
  inputs.reserve(values.size());
  for (const auto& v : values) inputs.push_back(Tensor::constant(v));
  const Tensor y = f(inputs);
  if (y.value().size() != 1) throw ArgumentError("gradcheck: function output is not a scalar");
  return y.item();
}

}  // namespace

double gradcheck_multi(const MultiScalarFunction& f, std::span<const Matrix> inputs, double eps) {
  if (!(eps > 0)) throw ArgumentError("gradcheck: eps must be positive");
  std::vector<Tensor> params;
  params.reserve(inputs.size());
  for (const auto& m : inputs) params.push_back(Tensor::parameter(m));
  const Tensor y = f(params);
  if (y.value().size() != 1) throw ArgumentError("gradcheck: function output is not a scalar");
  y.backward();

  std::vector<Matrix> point(inputs.begin(), inputs.end());
  double worst = 0;
  for (std::size_t t = 0; t < point.size(); ++t) {
    const Matrix analytic = params[t].grad();
    for (Index i = 0; i < point[t].size(); ++i) {
      double& coord = point[t].data()[i];
      const double saved = coord;
      coord = saved + eps;
      const double up = evaluate(f, point);
      coord = saved - eps;
      const double down = evaluate(f, point);
      coord = saved;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic.data()[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

double gradcheck(const ScalarFunction& f, const Matrix& x, double eps) {
  const std::vector<Matrix> inputs{x};
  return gradcheck_multi([&](std::span<const Tensor> in) { return f(in[0]); }, inputs, eps);
}

}  // namespace acr
