#include "hbcu/prox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hbcu {

namespace {

constexpr double kIndicatorTol = 1e-9;

Matrix reshape(const Vector& v, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = v[i * cols + j];
    return m;
}

Vector flatten(const Matrix& m) {
    return Vector(m.entries().begin(), m.entries().end());
}

void check_shape(const ProxOracle& g, const Vector& v) {
    switch (g.kind) {
        case ProxKind::box:
            if (v.size() != g.lo.size()) throw std::invalid_argument("prox: box bound size mismatch");
            break;
        case ProxKind::weighted_hinge:
            if (v.size() != g.weights.size())
                throw std::invalid_argument("prox: hinge weight size mismatch");
            break;
        case ProxKind::nuclear:
        case ProxKind::spectral:
            if (v.size() != g.mat_rows * g.mat_cols)
                throw std::invalid_argument("prox: matrix shape mismatch");
            break;
        default:
            break;
    }
}

double nuclear_norm_of(const Matrix& m) {
    SvdResult s = svd(m);
    double tot = 0.0;
    for (double x : s.singular_values) tot += x;
    return tot;
}

}  // namespace

ProxOracle ProxOracle::zero() { return {}; }

ProxOracle ProxOracle::l1(double mu) {
    if (mu < 0) throw std::invalid_argument("l1: negative scale");
    ProxOracle g;
    g.kind = ProxKind::l1;
    g.mu = mu;
    return g;
}

ProxOracle ProxOracle::nonneg() {
    ProxOracle g;
    g.kind = ProxKind::nonneg;
    return g;
}

ProxOracle ProxOracle::box(Vector lo, Vector hi) {
    if (lo.size() != hi.size()) throw std::invalid_argument("box: bound size mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (lo[i] > hi[i]) throw std::invalid_argument("box: lo > hi");
    ProxOracle g;
    g.kind = ProxKind::box;
    g.lo = std::move(lo);
    g.hi = std::move(hi);
    return g;
}

ProxOracle ProxOracle::nuclear(double mu, std::size_t rows, std::size_t cols) {
    if (mu < 0) throw std::invalid_argument("nuclear: negative scale");
    ProxOracle g;
    g.kind = ProxKind::nuclear;
    g.mu = mu;
    g.mat_rows = rows;
    g.mat_cols = cols;
    return g;
}

ProxOracle ProxOracle::spectral(double mu, std::size_t rows, std::size_t cols) {
    if (mu < 0) throw std::invalid_argument("spectral: negative scale");
    ProxOracle g;
    g.kind = ProxKind::spectral;
    g.mu = mu;
    g.mat_rows = rows;
    g.mat_cols = cols;
    return g;
}

ProxOracle ProxOracle::weighted_hinge(Vector weights) {
    for (double w : weights)
        if (w < 0) throw std::invalid_argument("weighted_hinge: negative weight");
    ProxOracle g;
    g.kind = ProxKind::weighted_hinge;
    g.weights = std::move(weights);
    return g;
}

Vector project_l1_ball(const Vector& v, double radius) {
    double total = 0.0;
    for (double x : v) total += std::abs(x);
    if (total <= radius) return v;
    Vector a(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) a[i] = std::abs(v[i]);
    std::sort(a.rbegin(), a.rend());
    double cum = 0.0, tau = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        cum += a[k];
        const double t = (cum - radius) / static_cast<double>(k + 1);
        if (k + 1 == a.size() || a[k + 1] <= t) {
            tau = t;
            break;
        }
    }
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double m = std::max(std::abs(v[i]) - tau, 0.0);
        out[i] = (v[i] >= 0 ? m : -m);
    }
    return out;
}

Vector prox_apply(const ProxOracle& g, const Vector& v, double theta) {
    if (theta <= 0) throw std::invalid_argument("prox_apply: theta must be positive");
    check_shape(g, v);
    switch (g.kind) {
        case ProxKind::zero:
            return v;
        case ProxKind::l1: {
            const double shift = g.mu / theta;
            Vector z(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double m = std::max(std::abs(v[i]) - shift, 0.0);
                z[i] = (v[i] >= 0 ? m : -m);
            }
            return z;
        }
        case ProxKind::nonneg: {
            Vector z(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) z[i] = std::max(v[i], 0.0);
            return z;
        }
        case ProxKind::box: {
            Vector z(v.size());
            for (std::size_t i = 0; i < v.size(); ++i)
                z[i] = std::clamp(v[i], g.lo[i], g.hi[i]);
            return z;
        }
        case ProxKind::weighted_hinge: {
            Vector z(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double shift = g.weights[i] / theta;
                if (v[i] > shift)
                    z[i] = v[i] - shift;
                else if (v[i] >= 0)
                    z[i] = 0.0;
                else
                    z[i] = v[i];
            }
            return z;
        }
        case ProxKind::nuclear: {
            SvdResult s = svd(reshape(v, g.mat_rows, g.mat_cols));
            const double shift = g.mu / theta;
            Matrix out(g.mat_rows, g.mat_cols);
            for (std::size_t r = 0; r < s.singular_values.size(); ++r) {
                const double sr = std::max(s.singular_values[r] - shift, 0.0);
                if (sr == 0.0) continue;
                for (std::size_t i = 0; i < g.mat_rows; ++i)
                    for (std::size_t j = 0; j < g.mat_cols; ++j)
                        out(i, j) += sr * s.u(i, r) * s.v(j, r);
            }
            return flatten(out);
        }
        case ProxKind::spectral: {
            SvdResult s = svd(reshape(v, g.mat_rows, g.mat_cols));
            // Moreau: prox = V - (1/theta) proj_{nuclear ball mu}(theta V),
            // which shrinks the singular values by an l1-ball projection.
            Vector scaled = vscale(s.singular_values, theta);
            Vector proj = project_l1_ball(scaled, g.mu);
            Matrix out(g.mat_rows, g.mat_cols);
            for (std::size_t r = 0; r < s.singular_values.size(); ++r) {
                const double sr = s.singular_values[r] - proj[r] / theta;
                if (sr == 0.0) continue;
                for (std::size_t i = 0; i < g.mat_rows; ++i)
                    for (std::size_t j = 0; j < g.mat_cols; ++j)
                        out(i, j) += sr * s.u(i, r) * s.v(j, r);
            }
            return flatten(out);
        }
    }
    throw std::invalid_argument("prox_apply: unsupported kind");
}

bool prox_check(const ProxOracle& g, const Vector& v, double theta, const Vector& z,
                double tol) {
    if (theta <= 0) throw std::invalid_argument("prox_check: theta must be positive");
    check_shape(g, v);
    Vector r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = theta * (v[i] - z[i]);
    switch (g.kind) {
        case ProxKind::zero: {
            for (double x : r)
                if (std::abs(x) > tol) return false;
            return true;
        }
        case ProxKind::l1: {
            for (std::size_t i = 0; i < z.size(); ++i) {
                if (z[i] > tol) {
                    if (std::abs(r[i] - g.mu) > tol) return false;
                } else if (z[i] < -tol) {
                    if (std::abs(r[i] + g.mu) > tol) return false;
                } else if (std::abs(r[i]) > g.mu + tol) {
                    return false;
                }
            }
            return true;
        }
        case ProxKind::nonneg: {
            for (std::size_t i = 0; i < z.size(); ++i) {
                if (z[i] < -tol) return false;
                if (z[i] > tol) {
                    if (std::abs(r[i]) > tol) return false;
                } else if (r[i] > tol) {
                    return false;
                }
            }
            return true;
        }
        case ProxKind::box: {
            for (std::size_t i = 0; i < z.size(); ++i) {
                if (z[i] < g.lo[i] - tol || z[i] > g.hi[i] + tol) return false;
                const bool at_lo = z[i] <= g.lo[i] + tol;
                const bool at_hi = z[i] >= g.hi[i] - tol;
                if (!at_lo && !at_hi && std::abs(r[i]) > tol) return false;
                if (at_lo && !at_hi && r[i] > tol) return false;
                if (at_hi && !at_lo && r[i] < -tol) return false;
            }
            return true;
        }
        case ProxKind::weighted_hinge: {
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double c = g.weights[i];
                if (z[i] > tol) {
                    if (std::abs(r[i] - c) > tol) return false;
                } else if (z[i] < -tol) {
                    if (std::abs(r[i]) > tol) return false;
                } else if (r[i] < -tol || r[i] > c + tol) {
                    return false;
                }
            }
            return true;
        }
        case ProxKind::nuclear: {
            // Dual characterization: G in mu * subdiff ||Z||_* iff the spectral
            // norm of G is at most mu and <G, Z> equals mu ||Z||_*.
            Matrix gm = reshape(r, g.mat_rows, g.mat_cols);
            Matrix zm = reshape(z, g.mat_rows, g.mat_cols);
            if (spectral_norm(gm) > g.mu + tol * std::max(1.0, g.mu)) return false;
            const double pairing = dot(r, z);
            const double gz = g.mu * nuclear_norm_of(zm);
            return std::abs(pairing - gz) <= tol * std::max(1.0, std::abs(gz));
        }
        case ProxKind::spectral: {
            Matrix gm = reshape(r, g.mat_rows, g.mat_cols);
            Matrix zm = reshape(z, g.mat_rows, g.mat_cols);
            if (nuclear_norm_of(gm) > g.mu + tol * std::max(1.0, g.mu)) return false;
            const double pairing = dot(r, z);
            const double gz = g.mu * spectral_norm(zm);
            return std::abs(pairing - gz) <= tol * std::max(1.0, std::abs(gz));
        }
    }
    throw std::invalid_argument("prox_check: unsupported kind");
}

double eval_g(const ProxOracle& g, const Vector& x) {
    check_shape(g, x);
    const double inf = std::numeric_limits<double>::infinity();
    switch (g.kind) {
        case ProxKind::zero:
            return 0.0;
        case ProxKind::l1: {
            double s = 0.0;
            for (double v : x) s += std::abs(v);
            return g.mu * s;
        }
        case ProxKind::nonneg: {
            for (double v : x)
                if (v < -kIndicatorTol) return inf;
            return 0.0;
        }
        case ProxKind::box: {
            for (std::size_t i = 0; i < x.size(); ++i)
                if (x[i] < g.lo[i] - kIndicatorTol || x[i] > g.hi[i] + kIndicatorTol) return inf;
            return 0.0;
        }
        case ProxKind::weighted_hinge: {
            double s = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) s += g.weights[i] * std::max(0.0, x[i]);
            return s;
        }
        case ProxKind::nuclear:
            return g.mu * nuclear_norm_of(reshape(x, g.mat_rows, g.mat_cols));
        case ProxKind::spectral:
            return g.mu * spectral_norm(reshape(x, g.mat_rows, g.mat_cols));
    }
    return 0.0;
}

}  // namespace hbcu
