#pragma once

// Spike generation functions and the periodic exponential surrogate.
//
// The surrogate peaks at 1 on every positive multiple of theta and decays
// exponentially with the distance to the nearest one:
//
//   g(v) = exp(-beta * d(v) / theta)   for v > theta/2
//   g(v) = 0                           otherwise
//
// soft_spike is the antiderivative of g starting at theta/2. It replaces the
// floor count in the soft forward mode, which makes the backward pass an
// exact derivative and therefore checkable with finite differences.

#include <algorithm>
#include <cmath>

namespace tripwire::snn {

template <typename Real>
Real surrogate_grad(Real v, Real theta, Real beta) {
    if (!(v > theta/2)) return Real(0);
    const Real k = std::max(Real(1), std::floor(v/theta + Real(0.5)));
    const Real d = std::abs(v - k*theta);
    return std::exp(-beta*d/theta);
}

template <typename Real>
Real soft_spike(Real v, Real theta, Real beta) {
    if (!(v > theta/2)) return Real(0);
    const Real a = beta/theta;
    const Real half = std::exp(-a*theta/2);
    const Real period = 2*(1 - half)/a;
    const Real k = std::max(Real(1), std::floor(v/theta + Real(0.5)));
    const Real delta = v - k*theta;
    const Real partial = delta <= 0
        ? (std::exp(a*delta) - half)/a
        : (1 - half)/a + (1 - std::exp(-a*delta))/a;
    return (k - 1)*period + partial;
}

// MultiSpike count for a membrane value that has already been clamped.
template <typename Real>
Real hard_spike(Real v, Real theta) {
    if (!(v >= theta)) return Real(0);
    Real n = std::floor(v/theta);
    Real r = v - n*theta;
    while (r >= theta) { r -= theta; n += 1; }
    if (r < 0 && n > 0) n -= 1;
    return n;
}

} // namespace tripwire::snn
