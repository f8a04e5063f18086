#include "hbcu/pcp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hbcu/prox.hpp"

namespace hbcu {

namespace {

constexpr double kDivergenceNorm = 1e12;

struct PcpWork {
    std::size_t pn = 0;
    std::vector<std::size_t> omega_idx;  // flattened sample positions, b order
    Vector x, y, z;                      // flattened row-major blocks
    Vector lam, pi;                      // multipliers of the two row groups
    ProxOracle gx, gy;
    double d_k = 0.0;
    std::size_t trigger_count = 0;
};

Vector on_omega(const PcpWork& w, const Vector& v) {
    Vector out(w.omega_idx.size());
    for (std::size_t s = 0; s < out.size(); ++s) out[s] = v[w.omega_idx[s]];
    return out;
}

double objective(const PcpWork& w, double mu) {
    double f = 0.0;
    for (double v : w.x) f += std::fabs(v);
    return mu * f + eval_g(w.gy, w.y);
}

double feasibility(const PcpWork& w, const PcpInstance& inst) {
    double s = 0.0;
    for (std::size_t t = 0; t < w.pn; ++t) {
        double r = w.x[t] + w.y[t] - w.z[t];
        s += r * r;
    }
    for (std::size_t k = 0; k < w.omega_idx.size(); ++k) {
        double r = w.z[w.omega_idx[k]] - inst.b[k];
        s += r * r;
    }
    return std::sqrt(s);
}

// One closed-form sweep. The mixing coefficients w21, w31, w32 are the
// weights applied to the step of each already-updated block.
void sweep(PcpWork& w, const PcpInstance& inst, const ProxSchedule& sched, double w21,
           double w31, double w32, Vector& dx, Vector& dy, Vector& dz) {
    const double beta = sched.beta;
    const double theta = beta * (1.0 + w.d_k);
    const std::size_t pn = w.pn;

    // X block: soft-threshold against the unmixed residual.
    Vector v(pn);
    for (std::size_t t = 0; t < pn; ++t)
        v[t] = w.x[t] - (-w.lam[t] + beta * (w.x[t] + w.y[t] - w.z[t])) / theta;
    Vector x_new = prox_apply(w.gx, v, theta);
    dx = vsub(x_new, w.x);

    // Y block sees X mixed by w21.
    for (std::size_t t = 0; t < pn; ++t) {
        double xt = x_new[t] - w21 * dx[t];
        v[t] = w.y[t] - (-w.lam[t] + beta * (xt + w.y[t] - w.z[t])) / theta;
    }
    Vector y_new = prox_apply(w.gy, v, theta);
    dy = vsub(y_new, w.y);

    // Z block: diagonal quadratic, heavier on sampled entries.
    Vector q(pn);
    for (std::size_t t = 0; t < pn; ++t) {
        double xh = x_new[t] - w31 * dx[t];
        double yh = y_new[t] - w32 * dy[t];
        q[t] = w.lam[t] - beta * (xh + yh - w.z[t]);
    }
    for (std::size_t s = 0; s < w.omega_idx.size(); ++s) {
        std::size_t t = w.omega_idx[s];
        q[t] -= w.pi[s] - beta * (w.z[t] - inst.b[s]);
    }
    const double p_off = beta * (1.0 + 2.0 * w.d_k);
    const double p_on = beta * (2.0 + 2.0 * w.d_k);
    dz.assign(pn, 0.0);
    for (std::size_t t = 0; t < pn; ++t) dz[t] = -q[t] / p_off;
    for (std::size_t s = 0; s < w.omega_idx.size(); ++s) {
        std::size_t t = w.omega_idx[s];
        dz[t] = -q[t] / p_on;
    }

    w.x = std::move(x_new);
    w.y = std::move(y_new);
    for (std::size_t t = 0; t < pn; ++t) w.z[t] += dz[t];

    for (std::size_t t = 0; t < pn; ++t)
        w.lam[t] -= sched.rho * (w.x[t] + w.y[t] - w.z[t]);
    for (std::size_t s = 0; s < w.omega_idx.size(); ++s)
        w.pi[s] -= sched.rho * (w.z[w.omega_idx[s]] - inst.b[s]);
}

// Adaptive test specialised to the three constraint maps (I,0), (I,0),
// (-I, E_Omega); all inner products reduce to entrywise sums.
bool adaptive_fire(const PcpWork& w, const ProxSchedule& sched, const Vector& u,
                   const Matrix& wmat, const Vector& dx, const Vector& dy, const Vector& dz) {
    const double beta = sched.beta;
    const double d = w.d_k;
    Vector dz_om = on_omega(w, dz);
    double dzz = dot(dz, dz) + dot(dz_om, dz_om);

    double lhs = beta * (1.0 + d) * (dot(dx, dx) + dot(dy, dy))
                 + beta * (1.0 + 2.0 * d) * dot(dz, dz) + beta * dot(dz_om, dz_om);
    lhs *= sched.eta;

    double ip[3][3];
    ip[0][0] = dot(dx, dx);
    ip[1][1] = dot(dy, dy);
    ip[2][2] = dzz;
    ip[0][1] = ip[1][0] = dot(dx, dy);
    ip[0][2] = ip[2][0] = -dot(dx, dz);
    ip[1][2] = ip[2][1] = -dot(dy, dz);

    double quad = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) quad += (wmat(i, j) - u[j]) * ip[i][j];

    Vector usum(w.pn);
    for (std::size_t t = 0; t < w.pn; ++t)
        usum[t] = u[0] * dx[t] + u[1] * dy[t] - u[2] * dz[t];
    double unorm = dot(usum, usum) + u[2] * u[2] * dot(dz_om, dz_om);

    return lhs <= beta * (quad + unorm);
}

RunRecord record_of(const PcpWork& w, const PcpInstance& inst, std::size_t epoch,
                    std::optional<double> f_star,
                    std::chrono::steady_clock::time_point t0) {
    RunRecord rec;
    rec.epoch = epoch;
    rec.objective = objective(w, inst.mu);
    rec.obj_gap = f_star ? std::fabs(rec.objective - *f_star)
                         : std::numeric_limits<double>::quiet_NaN();
    rec.feasibility = feasibility(w, inst);
    rec.d_k = w.d_k;
    rec.triggers = w.trigger_count;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

Matrix unflatten(const Vector& v, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = v[i * cols + j];
    return m;
}

double rel_err(const Matrix& got, const Matrix& truth) {
    double num = frobenius_norm(got - truth);
    double den = frobenius_norm(truth);
    return den > 0.0 ? num / den : num;
}

}  // namespace

PcpResult run_pcp(const PcpInstance& inst, const PcpOptions& options, std::size_t max_epochs,
                  double tol, std::optional<double> f_star) {
    auto t0 = std::chrono::steady_clock::now();
    ProxSchedule sched = options.schedule;
    sched.validate();

    PcpWork w;
    w.pn = inst.rows * inst.cols;
    for (std::size_t j = 0; j < inst.cols; ++j)
        for (std::size_t i : inst.omega[j]) w.omega_idx.push_back(i * inst.cols + j);
    w.x.assign(w.pn, 0.0);
    w.y.assign(w.pn, 0.0);
    w.z.assign(w.pn, 0.0);
    w.lam.assign(w.pn, 0.0);
    w.pi.assign(w.omega_idx.size(), 0.0);
    w.gx = ProxOracle::l1(inst.mu);
    w.gy = options.spectral ? ProxOracle::spectral(1.0, inst.rows, inst.cols)
                            : ProxOracle::nuclear(1.0, inst.rows, inst.cols);
    w.d_k = sched.mode == ScheduleMode::fixed ? sched.d_max : sched.d1;

    Vector u = {0.0, 0.0, 0.0};
    if (options.method == PcpMethod::hybrid && options.u) u = *options.u;
    if (options.method == PcpMethod::hybrid && !options.u)
        throw std::invalid_argument("hybrid method needs a mixing vector");
    if (u.size() != 3 || u[0] != 0.0)
        throw std::invalid_argument("mixing vector must have three entries with u_1 = 0");
    Matrix wmat = construct_w(u);

    double w21 = 1.0 + u[0] - u[1];
    double w31 = 1.0 + u[0] - u[2];
    double w32 = 1.0 + u[1] - u[2];
    bool adaptive = sched.mode == ScheduleMode::adaptive;
    if (options.method == PcpMethod::gauss_seidel) {
        w21 = w31 = w32 = 0.0;
        if (adaptive)
            throw std::invalid_argument("adaptive schedule is undefined for plain Gauss-Seidel");
    }

    Rng rng(options.seed);
    PcpResult result;
    result.report.d1_used = sched.d1;
    result.report.d_inc_used = sched.d_inc;
    result.report.epochs.push_back(record_of(w, inst, 0, f_star, t0));

    Vector dx, dy, dz;
    for (std::size_t e = 1; e <= max_epochs; ++e) {
        if (options.method == PcpMethod::random_block) {
            // One uniformly chosen closed-form block update per iteration,
            // multiplier step rho = beta / 3 after each; three make an epoch.
            const double rho = sched.beta / 3.0;
            const double beta = sched.beta;
            const double theta = beta * (1.0 + w.d_k);
            for (int t = 0; t < 3; ++t) {
                std::size_t pick = static_cast<std::size_t>(rng.below(3));
                if (pick == 0) {
                    Vector v(w.pn);
                    for (std::size_t s = 0; s < w.pn; ++s)
                        v[s] = w.x[s] - (-w.lam[s] + beta * (w.x[s] + w.y[s] - w.z[s])) / theta;
                    w.x = prox_apply(w.gx, v, theta);
                } else if (pick == 1) {
                    Vector v(w.pn);
                    for (std::size_t s = 0; s < w.pn; ++s)
                        v[s] = w.y[s] - (-w.lam[s] + beta * (w.x[s] + w.y[s] - w.z[s])) / theta;
                    w.y = prox_apply(w.gy, v, theta);
                } else {
                    Vector q(w.pn);
                    for (std::size_t s = 0; s < w.pn; ++s)
                        q[s] = w.lam[s] - beta * (w.x[s] + w.y[s] - w.z[s]);
                    for (std::size_t s = 0; s < w.omega_idx.size(); ++s) {
                        std::size_t id = w.omega_idx[s];
                        q[id] -= w.pi[s] - beta * (w.z[id] - inst.b[s]);
                    }
                    const double p_off = beta * (1.0 + 2.0 * w.d_k);
                    const double p_on = beta * (2.0 + 2.0 * w.d_k);
                    for (std::size_t s = 0; s < w.pn; ++s) w.z[s] -= q[s] / p_off;
                    for (std::size_t s = 0; s < w.omega_idx.size(); ++s) {
                        std::size_t id = w.omega_idx[s];
                        w.z[id] += q[id] / p_off - q[id] / p_on;
                    }
                }
                for (std::size_t s = 0; s < w.pn; ++s)
                    w.lam[s] -= rho * (w.x[s] + w.y[s] - w.z[s]);
                for (std::size_t s = 0; s < w.omega_idx.size(); ++s)
                    w.pi[s] -= rho * (w.z[w.omega_idx[s]] - inst.b[s]);
            }
        } else {
            sweep(w, inst, sched, w21, w31, w32, dx, dy, dz);
            if (adaptive && adaptive_fire(w, sched, u, wmat, dx, dy, dz)
                && w.d_k < sched.d_max - 1e-15) {
                w.d_k = std::min(w.d_k + sched.d_inc, sched.d_max);
                ++w.trigger_count;
            }
        }

        RunRecord rec = record_of(w, inst, e, f_star, t0);
        result.report.epochs.push_back(rec);
        double xn = std::sqrt(dot(w.x, w.x) + dot(w.y, w.y) + dot(w.z, w.z));
        if (!std::isfinite(xn) || xn > kDivergenceNorm) {
            result.report.status = RunStatus::diverged;
            break;
        }
        if (tol > 0.0 && rec.feasibility <= tol
            && (!f_star || rec.obj_gap <= tol * (1.0 + std::fabs(*f_star)))) {
            result.report.status = RunStatus::tolerance_met;
            break;
        }
    }

    result.report.total_triggers = w.trigger_count;
    result.report.final_x = w.x;
    result.report.final_x.insert(result.report.final_x.end(), w.y.begin(), w.y.end());
    result.report.final_x.insert(result.report.final_x.end(), w.z.begin(), w.z.end());
    result.report.final_lambda = w.lam;
    result.report.final_lambda.insert(result.report.final_lambda.end(), w.pi.begin(),
                                      w.pi.end());
    result.x = unflatten(w.x, inst.rows, inst.cols);
    result.y = unflatten(w.y, inst.rows, inst.cols);
    result.z = unflatten(w.z, inst.rows, inst.cols);
    result.rel_err_sparse = rel_err(result.x, inst.sparse);
    result.rel_err_low_rank = rel_err(result.y, inst.low_rank);
    return result;
}

}  // namespace hbcu
