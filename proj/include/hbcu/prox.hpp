#pragma once

#include <cstddef>

#include "hbcu/linalg.hpp"

namespace hbcu {

enum class ProxKind { zero, l1, nonneg, box, nuclear, spectral, weighted_hinge };

/// Separable-term oracle: knows how to evaluate itself, take a proximal step,
/// and (for testing) check the optimality inclusion of a candidate prox output.
/// Matrix-valued kinds (nuclear, spectral) act on vectors reshaped row-major
/// to mat_rows x mat_cols.
struct ProxOracle {
    ProxKind kind = ProxKind::zero;
    double mu = 0.0;               // scale for l1 / nuclear / spectral
    Vector lo, hi;                 // box bounds
    Vector weights;                // per-entry hinge weights, >= 0
    std::size_t mat_rows = 0, mat_cols = 0;

    static ProxOracle zero();
    static ProxOracle l1(double mu);
    static ProxOracle nonneg();
    static ProxOracle box(Vector lo, Vector hi);
    static ProxOracle nuclear(double mu, std::size_t rows, std::size_t cols);
    static ProxOracle spectral(double mu, std::size_t rows, std::size_t cols);
    static ProxOracle weighted_hinge(Vector weights);

    bool separable() const { return kind != ProxKind::nuclear && kind != ProxKind::spectral; }
};

/// argmin_z g(z) + (theta/2) ||z - v||^2.
Vector prox_apply(const ProxOracle& g, const Vector& v, double theta);

/// True iff theta*(v - z) lies in the subdifferential of g at z, to `tol`.
bool prox_check(const ProxOracle& g, const Vector& v, double theta, const Vector& z,
                double tol = 1e-8);

/// g(x); +infinity when an indicator is violated beyond 1e-9.
double eval_g(const ProxOracle& g, const Vector& x);

/// Euclidean projection of v onto the l1 ball of the given radius.
Vector project_l1_ball(const Vector& v, double radius);

}  // namespace hbcu
