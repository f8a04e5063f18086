#include "hbcu/mixing.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace hbcu {

MixingPlan MixingPlan::jacobi(std::size_t m, std::vector<int> lin_flags) {
    MixingPlan plan;
    plan.m = m;
    plan.u.assign(m, 0.0);
    plan.w = construct_w(plan.u);
    plan.lin_flags = std::move(lin_flags);
    Matrix g = mixing_design_matrix(plan.u, plan.lin_flags);
    plan.sigma_star = sym_eig(g).values[0];  // lambda_max(E - I + D)
    plan.d_max = plan.sigma_star;
    return plan;
}

Matrix construct_w(const Vector& u) {
    const std::size_t m = u.size();
    Matrix w(m, m, 1.0);
    for (std::size_t i = 1; i < m; ++i)
        for (std::size_t j = 0; j < i; ++j) w(i, j) = 1.0 + u[j] - u[i];
    return w;
}

ValidateResult validate_w(const Matrix& w) {
    if (w.rows() != w.cols()) return {false, "not square", std::nullopt};
    const std::size_t m = w.rows();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i; j < m; ++j)
            if (std::abs(w(i, j) - 1.0) > 1e-9)
                return {false, "upper triangle entry differs from one", std::nullopt};
    Vector u(m, 0.0);
    for (std::size_t i = 1; i < m; ++i) u[i] = u[i - 1] + 1.0 - w(i, i - 1);
    // Symmetry of W - e u' is equivalent to consistency of the whole
    // strict lower triangle with the recovered u.
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double uij = w(i, j) - u[j];
            const double uji = w(j, i) - u[i];
            if (std::abs(uij - uji) > 1e-9)
                return {false, "W - e u' is not symmetric", std::nullopt};
        }
    return {true, "", u};
}

Matrix mixing_design_matrix(const Vector& u, const std::vector<int>& lin_flags) {
    const std::size_t m = u.size();
    if (lin_flags.size() != m) throw std::invalid_argument("mixing_design_matrix: flag size");
    Matrix g(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            g(i, j) = 1.0 - u[std::max(i, j)] + u[i] * u[j];
            if (i == j) g(i, j) += -1.0 + (lin_flags[i] ? 1.0 : 0.0);
        }
    return g;
}

namespace {

// Smoothed max eigenvalue of the design matrix and its gradient in u.
struct SmoothedObjective {
    const std::vector<int>& lin_flags;
    double mu;

    double eval(const Vector& u, Vector* grad) const {
        const std::size_t m = u.size();
        SymEigResult eig = sym_eig(mixing_design_matrix(u, lin_flags));
        const double lmax = eig.values[0];
        double z = 0.0;
        Vector wts(m);
        for (std::size_t i = 0; i < m; ++i) {
            wts[i] = std::exp((eig.values[i] - lmax) / mu);
            z += wts[i];
        }
        if (grad) {
            grad->assign(m, 0.0);
            for (std::size_t i = 0; i < m; ++i) {
                const double wt = wts[i] / z;
                if (wt < 1e-18) continue;
                // d/du_k of v' G(u) v at eigenvector v.
                double prefix = 0.0, vu = 0.0;
                for (std::size_t k = 0; k < m; ++k) vu += eig.vectors(k, i) * u[k];
                for (std::size_t k = 0; k < m; ++k) {
                    const double vk = eig.vectors(k, i);
                    const double ck = vk * vk + 2.0 * vk * prefix;
                    (*grad)[k] += wt * (-ck + 2.0 * vu * vk);
                    prefix += vk;
                }
            }
        }
        return lmax + mu * std::log(z);
    }
};

// L-BFGS with Armijo backtracking over an affine subspace u = u0 + N xi.
struct Minimizer {
    const SmoothedObjective& obj;
    const Vector& u0;
    const Matrix& basis;  // m x dim, columns span the feasible directions

    Vector lift(const Vector& xi) const {
        Vector u = u0;
        for (std::size_t k = 0; k < basis.cols(); ++k)
            for (std::size_t i = 0; i < basis.rows(); ++i) u[i] += basis(i, k) * xi[k];
        return u;
    }

    Vector project_grad(const Vector& gu) const {
        Vector g(basis.cols(), 0.0);
        for (std::size_t k = 0; k < basis.cols(); ++k)
            for (std::size_t i = 0; i < basis.rows(); ++i) g[k] += basis(i, k) * gu[i];
        return g;
    }

    std::size_t run(Vector& xi, std::size_t max_iter, double gtol) const {
        const std::size_t dim = xi.size();
        if (dim == 0) return 0;
        std::deque<Vector> s_hist, y_hist;
        std::deque<double> rho_hist;
        Vector gu;
        double f = obj.eval(lift(xi), &gu);
        Vector g = project_grad(gu);
        std::size_t it = 0;
        for (; it < max_iter; ++it) {
            double gn = 0.0;
            for (double v : g) gn = std::max(gn, std::abs(v));
            if (gn <= gtol) break;

            // Two-loop recursion.
            Vector q = g;
            std::vector<double> alpha(s_hist.size());
            for (std::size_t h = s_hist.size(); h-- > 0;) {
                alpha[h] = rho_hist[h] * dot(s_hist[h], q);
                axpy(-alpha[h], y_hist[h], q);
            }
            double gamma = 1.0;
            if (!s_hist.empty()) {
                const double yy = dot(y_hist.back(), y_hist.back());
                if (yy > 0) gamma = dot(s_hist.back(), y_hist.back()) / yy;
            }
            Vector dir = vscale(q, -gamma);
            for (std::size_t h = 0; h < s_hist.size(); ++h) {
                const double beta = -rho_hist[h] * dot(y_hist[h], dir);
                axpy(alpha[h] - beta, s_hist[h], dir);
            }

            double slope = dot(g, dir);
            if (slope >= 0) {  // fall back to steepest descent
                dir = vscale(g, -1.0);
                slope = dot(g, dir);
            }
            double step = 1.0;
            Vector xi_new, gu_new;
            double f_new = f;
            bool accepted = false;
            for (int ls = 0; ls < 60; ++ls) {
                xi_new = xi;
                axpy(step, dir, xi_new);
                f_new = obj.eval(lift(xi_new), &gu_new);
                if (f_new <= f + 1e-4 * step * slope) {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) break;
            Vector g_new = project_grad(gu_new);
            Vector s = vsub(xi_new, xi);
            Vector y = vsub(g_new, g);
            const double sy = dot(s, y);
            if (sy > 1e-14 * norm2(s) * norm2(y)) {
                s_hist.push_back(std::move(s));
                y_hist.push_back(std::move(y));
                rho_hist.push_back(1.0 / sy);
                if (s_hist.size() > 10) {
                    s_hist.pop_front();
                    y_hist.pop_front();
                    rho_hist.pop_front();
                }
            }
            xi = std::move(xi_new);
            g = std::move(g_new);
            f = f_new;
        }
        return it;
    }
};

}  // namespace

SdpSolution solve_mixing_sdp(std::size_t m, const std::vector<int>& lin_flags,
                             const std::vector<PinConstraint>& pins) {
    if (m == 0) throw std::invalid_argument("solve_mixing_sdp: m must be positive");
    if (lin_flags.size() != m) throw std::invalid_argument("solve_mixing_sdp: flag size");

    // Pins w_ij = t (i > j) are linear constraints u_i - u_j = 1 - t.
    Vector u0(m, 0.0);
    Matrix basis;
    if (pins.empty()) {
        basis = Matrix::identity(m);
    } else {
        Matrix con(pins.size(), m);
        Vector rhs(pins.size());
        for (std::size_t k = 0; k < pins.size(); ++k) {
            const auto& pin = pins[k];
            if (pin.i <= pin.j || pin.i >= m)
                throw std::invalid_argument("solve_mixing_sdp: pin must address i > j");
            con(k, pin.i) = 1.0;
            con(k, pin.j) = -1.0;
            rhs[k] = 1.0 - pin.value;
        }
        // Least-squares particular solution and null basis via C'C.
        Matrix ctc = matmul(con.transposed(), con);
        Vector ctr = matvec_t(con, rhs);
        SymEigResult eig = sym_eig(ctc);
        const double cut = 1e-10 * std::max(1.0, eig.values[0]);
        std::size_t null_dim = 0;
        for (std::size_t k = 0; k < m; ++k) {
            if (eig.values[k] > cut) {
                double coef = 0.0;
                for (std::size_t i = 0; i < m; ++i) coef += eig.vectors(i, k) * ctr[i];
                coef /= eig.values[k];
                for (std::size_t i = 0; i < m; ++i) u0[i] += coef * eig.vectors(i, k);
            } else {
                ++null_dim;
            }
        }
        Vector resid = matvec(con, u0);
        for (std::size_t k = 0; k < pins.size(); ++k) resid[k] -= rhs[k];
        if (norm2(resid) > 1e-8 * (1.0 + norm2(rhs)))
            throw std::runtime_error("solve_mixing_sdp: infeasible structural constraints");
        basis = Matrix(m, null_dim);
        std::size_t col = 0;
        for (std::size_t k = 0; k < m; ++k)
            if (eig.values[k] <= cut) {
                for (std::size_t i = 0; i < m; ++i) basis(i, col) = eig.vectors(i, k);
                ++col;
            }
    }

    Vector xi(basis.cols(), 0.0);
    std::size_t total_iters = 0;
    for (double mu = 1.0; mu >= 0.5e-9; mu *= 0.2) {
        SmoothedObjective obj{lin_flags, mu};
        Minimizer opt{obj, u0, basis};
        total_iters += opt.run(xi, 600, std::max(1e-13, mu * 1e-4));
    }

    SdpSolution sol;
    sol.u = u0;
    for (std::size_t k = 0; k < basis.cols(); ++k)
        for (std::size_t i = 0; i < m; ++i) sol.u[i] += basis(i, k) * xi[k];
    sol.certificate = sym_eig(mixing_design_matrix(sol.u, lin_flags)).values[0];
    sol.sigma = sol.certificate;
    sol.iterations = total_iters;
    return sol;
}

MixingPlan solve_plan(std::size_t m, std::vector<int> lin_flags,
                      const std::vector<PinConstraint>& pins) {
    SdpSolution sol = solve_mixing_sdp(m, lin_flags, pins);
    MixingPlan plan;
    plan.m = m;
    plan.u = sol.u;
    plan.w = construct_w(sol.u);
    plan.lin_flags = std::move(lin_flags);
    plan.sigma_star = sol.sigma;
    plan.d_max = sol.sigma + 1e-6;
    return plan;
}

BlockWeights build_p(const BlockProblem& prob, const std::vector<int>& lin_flags, double beta,
                     double d) {
    if (beta <= 0) throw std::invalid_argument("build_p: beta must be positive");
    if (d < 0) throw std::invalid_argument("build_p: d must be nonnegative");
    if (lin_flags.size() != prob.m) throw std::invalid_argument("build_p: flag size");
    BlockWeights w;
    w.lin_flags = lin_flags;
    w.beta = beta;
    w.d = d;
    for (std::size_t i = 0; i < prob.m; ++i) {
        const double hn = prob.h_blocks[i].rows() ? spectral_norm(prob.h_blocks[i]) : 0.0;
        const double an = spectral_norm(prob.a_blocks[i]);
        w.h_norm_sq.push_back(hn * hn);
        w.a_norm_sq.push_back(an * an);
    }
    return w;
}

Matrix materialize_p_block(const BlockProblem& prob, const BlockWeights& w, std::size_t i) {
    const std::size_t d = prob.block_dims[i];
    Matrix p(d, d);
    if (!w.lin_flags[i]) {
        if (prob.h_blocks[i].rows())
            p = matmul(prob.h_blocks[i].transposed(), prob.h_blocks[i]);
        p = p + scale(matmul(prob.a_blocks[i].transposed(), prob.a_blocks[i]), w.beta);
    }
    const double s = w.scalar_part(i);
    for (std::size_t k = 0; k < d; ++k) p(k, k) += s;
    return p;
}

CertifyResult certify_p_condition(const BlockProblem& prob, const MixingPlan& plan, double beta,
                                  double d) {
    const std::size_t n = prob.total_dim();
    if (n > 2000) throw std::invalid_argument("certify_p_condition: dimension guard exceeded");
    BlockWeights w = build_p(prob, plan.lin_flags, beta, d);

    // Coupling weights W - e u' + alpha u u'.
    Matrix mix(plan.m, plan.m);
    for (std::size_t i = 0; i < plan.m; ++i)
        for (std::size_t j = 0; j < plan.m; ++j)
            mix(i, j) = plan.w(i, j) - plan.u[j] + plan.alpha * plan.u[i] * plan.u[j];

    Matrix phat(n, n);
    for (std::size_t i = 0; i < plan.m; ++i) {
        const std::size_t oi = prob.block_offset(i);
        Matrix pi = materialize_p_block(prob, w, i);
        for (std::size_t r = 0; r < pi.rows(); ++r)
            for (std::size_t c = 0; c < pi.cols(); ++c) phat(oi + r, oi + c) += pi(r, c);
        for (std::size_t j = 0; j < plan.m; ++j) {
            const std::size_t oj = prob.block_offset(j);
            Matrix coupling(prob.block_dims[i], prob.block_dims[j]);
            if (prob.h_blocks[i].rows())
                coupling = matmul(prob.h_blocks[i].transposed(), prob.h_blocks[j]);
            coupling = coupling +
                       scale(matmul(prob.a_blocks[i].transposed(), prob.a_blocks[j]), beta);
            const double mij = mix(i, j);
            for (std::size_t r = 0; r < coupling.rows(); ++r)
                for (std::size_t c = 0; c < coupling.cols(); ++c)
                    phat(oi + r, oj + c) -= mij * coupling(r, c);
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = 0.5 * (phat(i, j) + phat(j, i));
            phat(i, j) = phat(j, i) = s;
        }
    SymEigResult eig = sym_eig(phat);
    CertifyResult res;
    res.min_eig = eig.values.back();
    res.ok = res.min_eig >= -1e-8;
    return res;
}

namespace {
using nlohmann::json;
}

std::string mixing_plan_to_json(const MixingPlan& plan) {
    json j;
    j["m"] = plan.m;
    j["u"] = plan.u;
    j["alpha"] = plan.alpha;
    j["lin_flags"] = plan.lin_flags;
    j["sigma_star"] = plan.sigma_star;
    j["d_max"] = plan.d_max;
    json wjs = json::array();
    for (std::size_t i = 0; i < plan.m; ++i) {
        json row = json::array();
        for (std::size_t k = 0; k < plan.m; ++k) row.push_back(plan.w(i, k));
        wjs.push_back(std::move(row));
    }
    j["w"] = std::move(wjs);
    return j.dump(2);
}

MixingPlan mixing_plan_from_json(const std::string& text) {
    json j = json::parse(text);
    MixingPlan plan;
    plan.m = j.at("m").get<std::size_t>();
    plan.u = j.at("u").get<Vector>();
    plan.alpha = j.at("alpha").get<double>();
    plan.lin_flags = j.at("lin_flags").get<std::vector<int>>();
    plan.sigma_star = j.at("sigma_star").get<double>();
    plan.d_max = j.at("d_max").get<double>();
    plan.w = Matrix(plan.m, plan.m);
    for (std::size_t i = 0; i < plan.m; ++i)
        for (std::size_t k = 0; k < plan.m; ++k)
            plan.w(i, k) = j.at("w").at(i).at(k).get<double>();
    return plan;
}

void save_mixing_plan(const std::string& path, const MixingPlan& plan) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_mixing_plan: cannot open " + path);
    f << mixing_plan_to_json(plan);
}

MixingPlan load_mixing_plan(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_mixing_plan: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return mixing_plan_from_json(text);
}

}  // namespace hbcu
