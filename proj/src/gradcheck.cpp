#include "dccm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dccm/errors.hpp"

namespace dccm {

namespace {

void check_eps(double eps) {
  if (!(eps > 0.0 && eps <= 1e-3)) throw ContractError("gradient_check: eps must lie in (0, 1e-3]");
}

double eval_point(const PointLoss& build, const Tensor& point) {
  Tape tape;
  Var loss = build(tape, tape.constant(point));
  return loss.value().item();
}

double eval_params(const ParamLoss& build) {
  Tape tape;
  return build(tape).value().item();
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

double gradient_check(const PointLoss& build, const Tensor& point, double eps) {
  check_eps(eps);
  std::vector<double> analytic;
  double base = 0.0;
  {
    Tape tape;
    Var x = tape.variable(point);
    Var loss = build(tape, x);
    base = loss.value().item();
    tape.backward(loss);
    auto g = tape.grad(x);
    analytic.assign(point.numel(), 0.0);
    std::copy(g.begin(), g.end(), analytic.begin());
  }
  if (!same_bits(base, eval_point(build, point))) {
    throw ContractError("gradient_check: loss constructor is not deterministic");
  }
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = eval_point(build, probe);
    probe[i] = orig - eps;
    const double down = eval_point(build, probe);
    probe[i] = orig;
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * eps)));
  }
  return worst;
}

double gradient_check_params(const ParamLoss& build, const std::vector<Tensor*>& params, double eps) {
  check_eps(eps);
  for (Tensor* p : params) {
    p->enable_grad();
    p->zero_grad();
  }
  double base = 0.0;
  {
    Tape tape;
    Var loss = build(tape);
    base = loss.value().item();
    tape.backward(loss);
  }
  if (!same_bits(base, eval_params(build))) {
    throw ContractError("gradient_check: loss constructor is not deterministic");
  }
  double worst = 0.0;
  for (Tensor* p : params) {
    std::vector<double> analytic(p->grad().begin(), p->grad().end());
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double orig = (*p)[i];
      (*p)[i] = orig + eps;
      const double up = eval_params(build);
      (*p)[i] = orig - eps;
      const double down = eval_params(build);
      (*p)[i] = orig;
      worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * eps)));
    }
  }
  for (Tensor* p : params) p->zero_grad();
  return worst;
}

}  // namespace dccm
