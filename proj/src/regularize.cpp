#include "signfd/regularize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace signfd {

void RegParams::validate() const {
  if (!(eps > 0.0)) throw std::invalid_argument("RegParams: eps must be > 0");
  if (!(delta >= 0.0)) throw std::invalid_argument("RegParams: delta must be >= 0");
  if (!(tau >= 0.0)) throw std::invalid_argument("RegParams: tau must be >= 0");
}

static void check_eps(double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("regularize: eps must be > 0");
}

double psi_eps(double r, double eps) {
  check_eps(eps);
  double a = std::abs(r);
  return a <= eps ? r * r / (2.0 * eps) : a - eps / 2.0;
}

double phi_eps(double r, double eps) {
  check_eps(eps);
  return std::clamp(r / eps, -1.0, 1.0);
}

double phi_eps_prime(double r, double eps) {
  check_eps(eps);
  return std::abs(r) <= eps ? 1.0 / eps : 0.0;
}

double resolvent_J(double r, double eps) {
  check_eps(eps);
  return r - eps * phi_eps(r, eps);
}

double zeta(double r, double p, double eps) {
  check_eps(eps);
  if (!(p >= 1.0)) throw std::invalid_argument("zeta: p must be >= 1");
  double m = std::min(std::abs(r), eps);
  return std::pow(m, p) / (p * eps);
}

// Quartic bump rho_tau(u) = (15/16/tau) * (1 - (u/tau)^2)^2 on [-tau, tau].
// P(v) = int_{-1}^{v} rho, Q(v) = int_{-1}^{v} u*rho(u) du in the scaled variable
// v = u/tau; both are polynomials, so the convolution with the piecewise-linear
// phi_eps reduces to evaluating P and Q at the breakpoints.
namespace {

double bump_P(double v) {
  v = std::clamp(v, -1.0, 1.0);
  return 0.5 + (15.0 / 16.0) * (v - (2.0 / 3.0) * v * v * v + v * v * v * v * v / 5.0);
}

double bump_Q(double v, double tau) {
  v = std::clamp(v, -1.0, 1.0);
  double one_m = 1.0 - v * v;
  return -tau * (15.0 / 16.0) * one_m * one_m * one_m / 6.0;
}

}  // namespace

std::function<double(double)> mollify_phi(double eps, double tau) {
  check_eps(eps);
  if (!(tau >= 0.0)) throw std::invalid_argument("mollify_phi: tau must be >= 0");
  if (tau == 0.0) {
    return [eps](double r) { return phi_eps(r, eps); };
  }
  // (phi * rho)(r) = int phi_eps(r - u) rho(u) du. phi_eps(r-u) is -1 for
  // u >= r + eps, +1 for u <= r - eps and (r - u)/eps between; split [-tau, tau]
  // at u1 = r - eps, u2 = r + eps and integrate each polynomial piece exactly.
  return [eps, tau](double r) {
    if (std::abs(r) >= eps + tau) return r > 0 ? 1.0 : -1.0;
    double v1 = (r - eps) / tau;  // below: phi = +1
    double v2 = (r + eps) / tau;  // above: phi = -1
    double plus = bump_P(v1);                 // mass where phi = +1
    double minus = 1.0 - bump_P(v2);          // mass where phi = -1
    // linear piece: int_{u1}^{u2} ((r-u)/eps) rho(u) du
    double lin = (r * (bump_P(v2) - bump_P(v1)) - (bump_Q(v2, tau) - bump_Q(v1, tau))) / eps;
    return plus - minus + lin;
  };
}

}  // namespace signfd
