#pragma once

#include <functional>

namespace signfd {

// Parameters of the regularized sign nonlinearity and the viscosity term.
struct RegParams {
  double eps = 1e-3;   // Moreau-Yosida parameter of the sign graph (> 0)
  double delta = 0.0;  // vanishing-viscosity coefficient (>= 0)
  double tau = 0.0;    // mollification radius for phi; 0 keeps the piecewise-linear phi

  void validate() const;
};

// Moreau-Yosida approximation of |r|: quadratic cap r^2/(2 eps) on |r| <= eps,
// |r| - eps/2 outside. C^1, convex, 0 <= |r| - psi <= eps/2.
double psi_eps(double r, double eps);

// Yosida approximation of sign(r): clamp(r/eps, -1, 1). Equals d/dr psi_eps.
double phi_eps(double r, double eps);

// a.e. derivative of phi_eps; the kink at |r| = eps takes the interior value 1/eps.
double phi_eps_prime(double r, double eps);

// Resolvent of the sign graph: J_eps(r) = r - eps*phi_eps(r, eps).
// Identity psi_eps(r) = |J_eps r| + eps/2*phi_eps(r)^2 holds for |r| > eps;
// on |r| <= eps both sides reduce to r^2/(2 eps).
double resolvent_J(double r, double eps);

// zeta(r) = int_0^r |s|^{p-1} sgn(s) * phi_eps'(s) ds = min(|r|, eps)^p / (p*eps).
// Even in r, bounded by eps^{p-1}/p. Requires p >= 1.
double zeta(double r, double p, double eps);

// phi_eps convolved with a polynomial bump of radius tau (quartic kernel,
// evaluated by exact piecewise integration, no quadrature). The result is C^2,
// agrees with sign(r) for |r| >= eps + tau, and deviates from phi_eps by at
// most tau/eps in sup norm. tau = 0 returns phi_eps itself.
std::function<double(double)> mollify_phi(double eps, double tau);

}  // namespace signfd
