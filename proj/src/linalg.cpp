#include "hbcu/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace hbcu {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: dimension mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

Vector matvec(const Matrix& a, const Vector& x) {
    if (a.cols() != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        const double* row = a.data() + i * a.cols();
        for (std::size_t j = 0; j < a.cols(); ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

Vector matvec_t(const Matrix& a, const Vector& x) {
    if (a.rows() != x.size()) throw std::invalid_argument("matvec_t: dimension mismatch");
    Vector y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = a.data() + i * a.cols();
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += row[j] * xi;
    }
    return y;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("matrix add: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) += b(i, j);
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("matrix sub: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) -= b(i, j);
    return c;
}

Matrix scale(const Matrix& a, double c) {
    Matrix m = a;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) *= c;
    return m;
}

double dot(const Vector& a, const Vector& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

void axpy(double c, const Vector& x, Vector& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
}

Vector vsub(const Vector& a, const Vector& b) {
    Vector c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
    return c;
}

Vector vadd(const Vector& a, const Vector& b) {
    Vector c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
    return c;
}

Vector vscale(const Vector& a, double c) {
    Vector v = a;
    for (double& x : v) x *= c;
    return v;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double x : a.entries()) s += x * x;
    return std::sqrt(s);
}

namespace {

// Sum of squares of off-diagonal entries.
double off_diag_sq(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return s;
}

}  // namespace

SymEigResult sym_eig(const Matrix& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("sym_eig: matrix not square");
    const std::size_t n = m.rows();
    double scale_ref = 0.0;
    for (double x : m.entries()) scale_ref = std::max(scale_ref, std::abs(x));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(m(i, j) - m(j, i)) > 1e-12 * std::max(1.0, scale_ref))
                throw std::invalid_argument("sym_eig: matrix not symmetric");

    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));
    Matrix v = Matrix::identity(n);

    const double fro = frobenius_norm(a);
    const double stop = std::max(1e-300, 1e-30 * fro * fro);
    for (int sweep = 0; sweep < 100 && off_diag_sq(a) > stop; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
    SymEigResult r;
    r.values.resize(n);
    r.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        r.values[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) r.vectors(i, j) = v(i, order[j]);
    }
    return r;
}

SvdResult svd(const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) throw std::invalid_argument("svd: empty matrix");
    if (m.rows() < m.cols()) {
        SvdResult t = svd(m.transposed());
        return SvdResult{t.v, t.singular_values, t.u};
    }
    const std::size_t rows = m.rows(), k = m.cols();
    Matrix a = m;                     // columns rotated in place
    Matrix v = Matrix::identity(k);

    auto col_dot = [&](std::size_t p, std::size_t q) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += a(i, p) * a(i, q);
        return s;
    };

    const double fro = frobenius_norm(m);
    const double tol = 1e-15 * std::max(1.0, fro * fro);
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < k; ++p) {
            for (std::size_t q = p + 1; q < k; ++q) {
                const double app = col_dot(p, p), aqq = col_dot(q, q), apq = col_dot(p, q);
                if (std::abs(apq) <= tol * 1e-2 ||
                    apq * apq <= 1e-30 * app * aqq)
                    continue;
                rotated = true;
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < k; ++i) {
                    const double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - s * viq;
                    v(i, q) = s * vip + c * viq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sig(k);
    for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += a(i, j) * a(i, j);
        sig[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sig[i] > sig[j]; });

    SvdResult r;
    r.u = Matrix(rows, k);
    r.v = Matrix(k, k);
    r.singular_values.resize(k);
    const double null_tol = 1e-13 * std::max(1.0, fro);
    std::vector<std::size_t> null_cols;
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t src = order[j];
        r.singular_values[j] = sig[src];
        for (std::size_t i = 0; i < k; ++i) r.v(i, j) = v(i, src);
        if (sig[src] > null_tol) {
            for (std::size_t i = 0; i < rows; ++i) r.u(i, j) = a(i, src) / sig[src];
        } else {
            null_cols.push_back(j);
        }
    }
    // Complete U to a column-orthonormal set where singular values vanish.
    for (std::size_t j : null_cols) {
        for (std::size_t basis = 0; basis < rows; ++basis) {
            Vector cand(rows, 0.0);
            cand[basis] = 1.0;
            for (std::size_t jj = 0; jj < k; ++jj) {
                if (jj == j) continue;
                double proj = 0.0;
                for (std::size_t i = 0; i < rows; ++i) proj += r.u(i, jj) * cand[i];
                for (std::size_t i = 0; i < rows; ++i) cand[i] -= proj * r.u(i, jj);
            }
            const double nrm = norm2(cand);
            if (nrm > 1e-6) {
                for (std::size_t i = 0; i < rows; ++i) r.u(i, j) = cand[i] / nrm;
                break;
            }
        }
    }
    return r;
}

double spectral_norm(const Matrix& m) {
    const std::size_t n = m.cols();
    Vector v(n, 1.0);
    double nv = norm2(v);
    for (double& x : v) x /= nv;
    double est = 0.0;
    std::mt19937_64 rng(12345);
    for (int it = 0; it < 20000; ++it) {
        Vector w = matvec_t(m, matvec(m, v));
        const double wn = norm2(w);
        if (wn == 0.0) {
            if (it == 0) {
                // All-ones start in the null space: re-randomize once.
                std::uniform_real_distribution<double> dist(-1.0, 1.0);
                for (double& x : v) x = dist(rng);
                const double rn = norm2(v);
                for (double& x : v) x /= rn;
                continue;
            }
            return 0.0;
        }
        const double new_est = std::sqrt(dot(v, w));  // Rayleigh quotient of M^T M
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
        if (it > 2 && std::abs(new_est - est) <= 1e-11 * std::max(1.0, new_est)) return new_est;
        est = new_est;
    }
    return est;
}

double spectral_radius(const Matrix& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("spectral_radius: matrix not square");
    Matrix b = m;
    double log_acc = 0.0;
    const int squarings = 60;
    for (int j = 0; j < squarings; ++j) {
        const double nb = frobenius_norm(b);
        if (!std::isfinite(nb))
            throw std::overflow_error("spectral_radius: norm overflow during squaring");
        if (nb == 0.0) return 0.0;
        log_acc += std::ldexp(std::log(nb), -j);  // log(nb) / 2^j
        Matrix c = scale(b, 1.0 / nb);
        b = matmul(c, c);
    }
    const double nb = frobenius_norm(b);
    if (!std::isfinite(nb)) throw std::overflow_error("spectral_radius: norm overflow");
    if (nb == 0.0) return 0.0;
    log_acc += std::ldexp(std::log(nb), -squarings);
    return std::exp(log_acc);
}

Vector lu_solve(const Matrix& a, const Vector& b) {
    Matrix rhs(b.size(), 1);
    for (std::size_t i = 0; i < b.size(); ++i) rhs(i, 0) = b[i];
    Matrix x = lu_solve(a, rhs);
    Vector out(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = x(i, 0);
    return out;
}

Matrix lu_solve(const Matrix& a, const Matrix& b) {
    if (a.rows() != a.cols() || a.rows() != b.rows())
        throw std::invalid_argument("lu_solve: dimension mismatch");
    const std::size_t n = a.rows();
    Matrix lu = a;
    Matrix x = b;
    std::vector<std::size_t> piv(n);
    std::iota(piv.begin(), piv.end(), 0);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t best = col;
        for (std::size_t i = col + 1; i < n; ++i)
            if (std::abs(lu(i, col)) > std::abs(lu(best, col))) best = i;
        if (std::abs(lu(best, col)) < 1e-300)
            throw std::runtime_error("lu_solve: singular matrix");
        if (best != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(col, j), lu(best, j));
            for (std::size_t j = 0; j < x.cols(); ++j) std::swap(x(col, j), x(best, j));
        }
        for (std::size_t i = col + 1; i < n; ++i) {
            const double f = lu(i, col) / lu(col, col);
            lu(i, col) = f;
            for (std::size_t j = col + 1; j < n; ++j) lu(i, j) -= f * lu(col, j);
            for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) -= f * x(col, j);
        }
    }
    for (std::size_t col = n; col-- > 0;) {
        for (std::size_t j = 0; j < x.cols(); ++j) x(col, j) /= lu(col, col);
        for (std::size_t i = 0; i < col; ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) -= lu(i, col) * x(col, j);
    }
    return x;
}

Vector cholesky_solve(const Matrix& a, const Vector& b) {
    if (a.rows() != a.cols() || a.rows() != b.size())
        throw std::invalid_argument("cholesky_solve: dimension mismatch");
    const std::size_t n = a.rows();
    Matrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0) throw std::runtime_error("cholesky_solve: matrix not positive definite");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    Vector x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = y[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
        x[i] = s / l(i, i);
    }
    return x;
}

}  // namespace hbcu
