#include "hbcu/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hbcu/prox.hpp"

namespace hbcu {

namespace {

constexpr double kDivergenceNorm = 1e12;

double elapsed_seconds(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vector block_linear_term(const BlockProblem& prob, std::size_t i) {
    Vector ci(prob.block_dims[i], 0.0);
    if (!prob.c.empty()) {
        std::size_t off = prob.block_offset(i);
        for (std::size_t t = 0; t < ci.size(); ++t) ci[t] = prob.c[off + t];
    }
    return ci;
}

// ||v||^2_{P_i} with P_i at scale d; delta images supplied by the caller.
double p_block_norm_sq(const ProxSchedule& schedule, const BlockWeights& weights, std::size_t i,
                       double d, const Vector& v, const Vector& hv, const Vector& av) {
    double n2 = dot(v, v);
    if (schedule.uniform_prox) return *schedule.uniform_prox * n2;
    double s = weights.h_norm_sq[i] + schedule.beta * weights.a_norm_sq[i];
    double val = d * s * n2;
    if (!weights.lin_flags[i]) val += dot(hv, hv) + schedule.beta * dot(av, av);
    return val;
}

const Matrix& p_base(SolverState& state, const BlockProblem& prob, const ProxSchedule& schedule,
                     std::size_t i) {
    Matrix& cache = state.p_base_cache[i];
    if (cache.rows() == 0) {
        const Matrix& ai = prob.a_blocks[i];
        cache = scale(matmul(ai.transposed(), ai), schedule.beta);
        const Matrix& hi = prob.h_blocks[i];
        if (hi.rows() > 0) cache = cache + matmul(hi.transposed(), hi);
    }
    return cache;
}

void refresh_residuals(SolverState& state, const BlockProblem& prob) {
    state.r_a.assign(prob.constraint_rows(), 0.0);
    axpy(-1.0, prob.b, state.r_a);
    state.r_h.assign(prob.quad_rows(), 0.0);
    for (std::size_t i = 0; i < prob.m; ++i) {
        axpy(1.0, matvec(prob.a_blocks[i], state.x[i]), state.r_a);
        if (prob.h_blocks[i].rows() > 0) axpy(1.0, matvec(prob.h_blocks[i], state.x[i]), state.r_h);
    }
}

double objective_from_state(const SolverState& state, const BlockProblem& prob) {
    double f = 0.5 * dot(state.r_h, state.r_h);
    for (std::size_t i = 0; i < prob.m; ++i) {
        if (!prob.c.empty()) f += dot(block_linear_term(prob, i), state.x[i]);
        f += eval_g(prob.g[i], state.x[i]);
    }
    return f;
}

RunRecord make_record(const SolverState& state, const BlockProblem& prob,
                      std::optional<double> f_star, std::size_t epoch,
                      std::chrono::steady_clock::time_point t0) {
    RunRecord rec;
    rec.epoch = epoch;
    rec.objective = objective_from_state(state, prob);
    rec.obj_gap = f_star ? std::fabs(rec.objective - *f_star)
                         : std::numeric_limits<double>::quiet_NaN();
    rec.feasibility = norm2(state.r_a);
    rec.d_k = state.d_k;
    rec.triggers = state.trigger_count;
    rec.seconds = elapsed_seconds(t0);
    return rec;
}

bool stopped(const RunRecord& rec, double tol, std::optional<double> f_star) {
    if (tol <= 0.0) return false;
    if (rec.feasibility > tol) return false;
    if (f_star && rec.obj_gap > tol * (1.0 + std::fabs(*f_star))) return false;
    return true;
}

bool diverged(const SolverState& state) {
    double n = state.x_norm();
    return !std::isfinite(n) || n > kDivergenceNorm;
}

void maybe_bump_d(SolverState& state, const ProxSchedule& schedule) {
    if (state.d_k < schedule.d_max - 1e-15) {
        state.d_k = std::min(state.d_k + schedule.d_inc, schedule.d_max);
        ++state.trigger_count;
    }
    // At the cap the test still passing is not an event worth counting.
}

}  // namespace

void ProxSchedule::validate() const {
    if (beta <= 0.0) throw std::invalid_argument("penalty beta must be positive");
    if (rho < 0.0 || rho > beta + 1e-12)
        throw std::invalid_argument("dual stepsize rho must lie in [0, beta]");
    if (d1 < 0.0 || d_inc < 0.0 || d_max < 0.0)
        throw std::invalid_argument("proximal scale parameters must be nonnegative");
    if (mode == ScheduleMode::adaptive && d_inc <= 0.0)
        throw std::invalid_argument("adaptive schedule needs a positive increment");
    if (eta <= 0.0 || eta >= 1.0) throw std::invalid_argument("eta must lie in (0, 1)");
    if (uniform_prox && *uniform_prox <= 0.0)
        throw std::invalid_argument("uniform proximal weight must be positive");
}

Vector SolverState::stacked_x() const {
    Vector out;
    for (const Vector& xi : x) out.insert(out.end(), xi.begin(), xi.end());
    return out;
}

Vector SolverState::ergodic_x() const {
    if (ergodic_count == 0) return stacked_x();
    return vscale(ergodic_sum, 1.0 / static_cast<double>(ergodic_count));
}

double SolverState::x_norm() const {
    double s = 0.0;
    for (const Vector& xi : x) s += dot(xi, xi);
    return std::sqrt(s);
}

SolverState init_state(const BlockProblem& prob, const ProxSchedule& schedule,
                       const std::optional<Vector>& x0) {
    SolverState state;
    state.x.resize(prob.m);
    if (x0) {
        state.x = split_blocks(prob, *x0);
    } else {
        // Zero start, pushed through one proximal projection so indicator
        // blocks begin inside their domain.
        for (std::size_t i = 0; i < prob.m; ++i) {
            Vector zero(prob.block_dims[i], 0.0);
            state.x[i] = prox_apply(prob.g[i], zero, 1.0);
        }
    }
    state.x_prev = state.x;
    state.lambda.assign(prob.constraint_rows(), 0.0);
    // Fixed schedules run at the certified cap; d1 only seeds adaptive runs.
    state.d_k = schedule.mode == ScheduleMode::fixed ? schedule.d_max : schedule.d1;
    state.s1_a.assign(prob.constraint_rows(), 0.0);
    state.s2_a.assign(prob.constraint_rows(), 0.0);
    state.s1_h.assign(prob.quad_rows(), 0.0);
    state.s2_h.assign(prob.quad_rows(), 0.0);
    state.h_delta.assign(prob.m, {});
    state.a_delta.assign(prob.m, {});
    state.delta_sq.assign(prob.m, 0.0);
    state.p_base_cache.assign(prob.m, Matrix());
    state.ergodic_sum.assign(prob.total_dim(), 0.0);
    refresh_residuals(state, prob);
    return state;
}

void step_block(SolverState& state, const BlockProblem& prob, const MixingPlan& plan,
                const ProxSchedule& schedule, const BlockWeights& weights, std::size_t i,
                MixRule mix) {
    const Matrix& ai = prob.a_blocks[i];
    const Matrix& hi = prob.h_blocks[i];
    const std::size_t ni = prob.block_dims[i];
    const double beta = schedule.beta;

    // Residuals at the mixed point seen by block i.
    Vector ax_res = state.r_a;
    if (mix == MixRule::gauss_seidel) {
        axpy(1.0, state.s1_a, ax_res);
    } else {
        axpy(plan.u[i], state.s1_a, ax_res);
        axpy(-1.0, state.s2_a, ax_res);
    }

    Vector q = block_linear_term(prob, i);
    if (hi.rows() > 0) {
        Vector hx = state.r_h;
        if (mix == MixRule::gauss_seidel) {
            axpy(1.0, state.s1_h, hx);
        } else {
            axpy(plan.u[i], state.s1_h, hx);
            axpy(-1.0, state.s2_h, hx);
        }
        axpy(1.0, matvec_t(hi, hx), q);
    }
    Vector dual(ax_res.size());
    for (std::size_t r = 0; r < dual.size(); ++r)
        dual[r] = beta * ax_res[r] - state.lambda[r];
    axpy(1.0, matvec_t(ai, dual), q);

    const double s_i = weights.h_norm_sq[i] + beta * weights.a_norm_sq[i];
    double theta = schedule.uniform_prox ? *schedule.uniform_prox : state.d_k * s_i;
    const bool linearized = schedule.uniform_prox.has_value() || weights.lin_flags[i] != 0;

    Vector x_new;
    if (linearized) {
        if (theta <= 0.0) theta = 1e-8 * std::max(s_i, 1.0);
        Vector v = state.x[i];
        axpy(-1.0 / theta, q, v);
        x_new = prox_apply(prob.g[i], v, theta);
    } else if (prob.g[i].kind == ProxKind::zero) {
        const Matrix& base = p_base(state, prob, schedule, i);
        Matrix p = base;
        for (std::size_t t = 0; t < ni; ++t) p(t, t) += theta;
        x_new = vadd(state.x[i], cholesky_solve(p, vscale(q, -1.0)));
    } else {
        // Proximal-gradient inner loop on the strongly convex subproblem.
        const Matrix& base = p_base(state, prob, schedule, i);
        const double lip = theta + s_i;
        Vector z = state.x[i];
        for (int iter = 0; iter < 500; ++iter) {
            Vector dz = vsub(z, state.x[i]);
            Vector grad = q;
            axpy(1.0, matvec(base, dz), grad);
            axpy(theta, dz, grad);
            Vector v = z;
            axpy(-1.0 / lip, grad, v);
            Vector z_new = prox_apply(prob.g[i], v, lip);
            double move = norm2(vsub(z_new, z));
            z = z_new;
            if (move <= 1e-10 * (1.0 + norm2(z))) break;
        }
        x_new = z;
    }

    Vector delta = vsub(x_new, state.x[i]);
    state.delta_sq[i] = dot(delta, delta);
    state.a_delta[i] = matvec(ai, delta);
    axpy(1.0, state.a_delta[i], state.s1_a);
    axpy(plan.u[i], state.a_delta[i], state.s2_a);
    if (hi.rows() > 0) {
        state.h_delta[i] = matvec(hi, delta);
        axpy(1.0, state.h_delta[i], state.s1_h);
        axpy(plan.u[i], state.h_delta[i], state.s2_h);
    } else {
        state.h_delta[i].clear();
    }
    state.x[i] = std::move(x_new);
}

bool adaptive_check(const SolverState& state, const BlockProblem& prob, const MixingPlan& plan,
                    const ProxSchedule& schedule, const BlockWeights& weights, double* lhs_out,
                    double* rhs_out) {
    const std::size_t m = prob.m;
    double lhs = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double n2 = state.delta_sq[i];
        double s = weights.h_norm_sq[i] + schedule.beta * weights.a_norm_sq[i];
        double val = schedule.uniform_prox ? *schedule.uniform_prox * n2 : state.d_k * s * n2;
        if (!schedule.uniform_prox && !weights.lin_flags[i])
            val += dot(state.h_delta[i], state.h_delta[i])
                   + schedule.beta * dot(state.a_delta[i], state.a_delta[i]);
        lhs += val;
    }
    lhs *= schedule.eta;

    // Coupling energy sum_{ij} (W - e u')_{ij} <img_i, img_j> plus the
    // squared norm of sum_j u_j img_j, for the quadratic and constraint maps.
    auto coupling = [&](const std::vector<Vector>& img, std::size_t dim) {
        double quad = 0.0;
        Vector usum(dim, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            if (img[i].empty()) continue;
            for (std::size_t j = 0; j < m; ++j) {
                if (img[j].empty()) continue;
                double wij = plan.w(i, j) - plan.u[j];
                if (wij != 0.0) quad += wij * dot(img[i], img[j]);
            }
            axpy(plan.u[i], img[i], usum);
        }
        return quad + dot(usum, usum);
    };
    double rhs = coupling(state.h_delta, prob.quad_rows())
                 + schedule.beta * coupling(state.a_delta, prob.constraint_rows());
    if (lhs_out) *lhs_out = lhs;
    if (rhs_out) *rhs_out = rhs;
    return lhs <= rhs;
}

void step_epoch(SolverState& state, const BlockProblem& prob, const MixingPlan& plan,
                const ProxSchedule& schedule, const BlockWeights& weights, MixRule mix) {
    state.x_prev = state.x;
    std::fill(state.s1_a.begin(), state.s1_a.end(), 0.0);
    std::fill(state.s2_a.begin(), state.s2_a.end(), 0.0);
    std::fill(state.s1_h.begin(), state.s1_h.end(), 0.0);
    std::fill(state.s2_h.begin(), state.s2_h.end(), 0.0);
    for (std::size_t i = 0; i < prob.m; ++i)
        step_block(state, prob, plan, schedule, weights, i, mix);

    refresh_residuals(state, prob);
    axpy(-schedule.rho, state.r_a, state.lambda);
    axpy(1.0, state.stacked_x(), state.ergodic_sum);
    ++state.ergodic_count;
    ++state.k;

    state.last_epoch_fired = false;
    if (schedule.mode == ScheduleMode::adaptive
        && adaptive_check(state, prob, plan, schedule, weights)) {
        state.last_epoch_fired = true;
        maybe_bump_d(state, schedule);
    }
}

namespace {

// Count epochs (out of `epochs`) in which the adaptive test fires, starting
// from a fresh state with the given (d1, d_inc).
std::size_t probe_trigger_epochs(const BlockProblem& prob, const MixingPlan& plan,
                                 ProxSchedule schedule, const BlockWeights& weights, MixRule mix,
                                 const std::optional<Vector>& x0, std::size_t epochs) {
    SolverState state = init_state(prob, schedule, x0);
    std::size_t fired = 0;
    for (std::size_t e = 0; e < epochs; ++e) {
        step_epoch(state, prob, plan, schedule, weights, mix);
        if (state.last_epoch_fired) ++fired;
        if (diverged(state)) return epochs;  // treat blow-up as always firing
    }
    return fired;
}

}  // namespace

RunReport run(const BlockProblem& prob, const MixingPlan& plan, const ProxSchedule& schedule_in,
              std::size_t max_epochs, double tol, std::optional<double> f_star, MixRule mix,
              const std::optional<Vector>& x0) {
    auto t0 = std::chrono::steady_clock::now();
    prob.validate();
    ProxSchedule schedule = schedule_in;
    schedule.validate();
    if (plan.m != prob.m) throw std::invalid_argument("plan/problem block count mismatch");

    BlockWeights weights = build_p(prob, plan.lin_flags, schedule.beta, schedule.d1);

    RunReport report;
    report.d1_used = schedule.d1;
    report.d_inc_used = schedule.d_inc;

    if (schedule.mode == ScheduleMode::adaptive && schedule.startup == StartupRule::grid20) {
        const double d1_grid[] = {0.0, 0.5, 1.0};
        const double inc_grid[] = {0.01, 0.1};
        bool found = false;
        for (double d1 : d1_grid) {
            for (double inc : inc_grid) {
                ProxSchedule probe = schedule;
                probe.d1 = d1;
                probe.d_inc = inc;
                if (probe_trigger_epochs(prob, plan, probe, weights, mix, x0, 20) < 20) {
                    schedule.d1 = d1;
                    schedule.d_inc = inc;
                    found = true;
                    break;
                }
            }
            if (found) break;
        }
        if (!found) {
            schedule.mode = ScheduleMode::fixed;
            schedule.d1 = schedule.d_max;
            report.startup_fell_back = true;
        }
        report.d1_used = schedule.d1;
        report.d_inc_used = schedule.d_inc;
    }

    SolverState state = init_state(prob, schedule, x0);
    report.epochs.push_back(make_record(state, prob, f_star, 0, t0));

    for (std::size_t e = 1; e <= max_epochs; ++e) {
        step_epoch(state, prob, plan, schedule, weights, mix);
        RunRecord rec = make_record(state, prob, f_star, e, t0);
        report.epochs.push_back(rec);
        if (diverged(state)) {
            report.status = RunStatus::diverged;
            break;
        }
        if (stopped(rec, tol, f_star)) {
            report.status = RunStatus::tolerance_met;
            break;
        }
    }
    report.total_triggers = state.trigger_count;
    report.final_x = state.stacked_x();
    report.final_lambda = state.lambda;
    return report;
}

RunReport run_random_bcu(const BlockProblem& prob, const ProxSchedule& schedule_in,
                         std::size_t max_epochs, std::uint64_t seed, double tol,
                         std::optional<double> f_star) {
    auto t0 = std::chrono::steady_clock::now();
    prob.validate();
    ProxSchedule schedule = schedule_in;
    schedule.validate();
    const std::size_t m = prob.m;
    const double beta = schedule.beta;
    const double rho = beta / static_cast<double>(m);

    std::vector<int> lin_flags(m, 1);
    BlockWeights weights = build_p(prob, lin_flags, beta, schedule.d1);

    SolverState state = init_state(prob, schedule, std::nullopt);
    Rng rng(seed);

    RunReport report;
    report.d1_used = schedule.d1;
    report.d_inc_used = schedule.d_inc;
    report.epochs.push_back(make_record(state, prob, f_star, 0, t0));

    for (std::size_t e = 1; e <= max_epochs; ++e) {
        for (std::size_t t = 0; t < m; ++t) {
            std::size_t i = static_cast<std::size_t>(rng.below(m));
            const Matrix& ai = prob.a_blocks[i];
            const Matrix& hi = prob.h_blocks[i];

            Vector q = block_linear_term(prob, i);
            if (hi.rows() > 0) axpy(1.0, matvec_t(hi, state.r_h), q);
            Vector dual(state.r_a.size());
            for (std::size_t r = 0; r < dual.size(); ++r)
                dual[r] = beta * state.r_a[r] - state.lambda[r];
            axpy(1.0, matvec_t(ai, dual), q);

            double s_i = weights.h_norm_sq[i] + beta * weights.a_norm_sq[i];
            double theta = state.d_k * s_i;
            if (theta <= 0.0) theta = 1e-8 * std::max(s_i, 1.0);
            Vector v = state.x[i];
            axpy(-1.0 / theta, q, v);
            Vector x_new = prox_apply(prob.g[i], v, theta);
            Vector delta = vsub(x_new, state.x[i]);
            Vector a_delta = matvec(ai, delta);
            axpy(1.0, a_delta, state.r_a);
            Vector h_delta;
            if (hi.rows() > 0) {
                h_delta = matvec(hi, delta);
                axpy(1.0, h_delta, state.r_h);
            }
            state.x[i] = std::move(x_new);
            axpy(-rho, state.r_a, state.lambda);

            if (schedule.mode == ScheduleMode::adaptive) {
                double lhs = schedule.eta * theta * dot(delta, delta);
                double rhs = beta * dot(a_delta, a_delta);
                if (!h_delta.empty()) rhs += dot(h_delta, h_delta);
                if (lhs <= rhs) maybe_bump_d(state, schedule);
            }
        }
        refresh_residuals(state, prob);
        axpy(1.0, state.stacked_x(), state.ergodic_sum);
        ++state.ergodic_count;
        ++state.k;
        RunRecord rec = make_record(state, prob, f_star, e, t0);
        report.epochs.push_back(rec);
        if (diverged(state)) {
            report.status = RunStatus::diverged;
            break;
        }
        if (stopped(rec, tol, f_star)) {
            report.status = RunStatus::tolerance_met;
            break;
        }
    }
    report.total_triggers = state.trigger_count;
    report.final_x = state.stacked_x();
    report.final_lambda = state.lambda;
    return report;
}

double lyapunov_monitor(const SolverState& state, const BlockProblem& prob,
                        const MixingPlan& plan, const ProxSchedule& schedule,
                        const BlockWeights& weights, const Vector& x_star,
                        const Vector& lambda_star) {
    const std::size_t m = prob.m;
    std::vector<Vector> dx(m);
    std::vector<Vector> hdx(m), adx(m);
    std::vector<Vector> xs = split_blocks(prob, x_star);
    double p_part = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        dx[i] = vsub(state.x[i], xs[i]);
        adx[i] = matvec(prob.a_blocks[i], dx[i]);
        if (prob.h_blocks[i].rows() > 0) hdx[i] = matvec(prob.h_blocks[i], dx[i]);
        p_part += p_block_norm_sq(schedule, weights, i, weights.d, dx[i], hdx[i], adx[i]);
    }
    double cross = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double mij = plan.w(i, j) - plan.u[j];
            if (mij == 0.0) continue;
            double inner = schedule.beta * dot(adx[i], adx[j]);
            if (!hdx[i].empty() && !hdx[j].empty()) inner += dot(hdx[i], hdx[j]);
            cross += mij * inner;
        }
    }
    Vector dl = vsub(state.lambda, lambda_star);
    double dual_part = schedule.rho > 0.0 ? dot(dl, dl) / (2.0 * schedule.rho) : 0.0;
    return dual_part + 0.5 * (p_part - cross);
}

Matrix build_gs_iteration_matrix(double eps, double tau) {
    if (eps == 0.0) throw std::invalid_argument("eps must be nonzero");
    if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
    Vector a1 = {1.0, 1.0 - eps, 1.0 - eps};
    Vector a2 = {1.0, 1.0, 1.0 - eps};
    Vector a3 = {1.0, 1.0, 1.0};
    std::vector<Vector> a = {a1, a2, a3};
    // Stepsize convention: every proximal weight is max_j ||a_j||^2 / tau,
    // so the update coefficient is tau scaled down by the largest norm.
    double max_sq = 0.0;
    for (const Vector& v : a) max_sq = std::max(max_sq, dot(v, v));
    tau /= max_sq;

    Matrix left(6, 6, 0.0), right(6, 6, 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
        left(i, i) = 1.0;
        for (std::size_t j = 0; j < i; ++j) left(i, j) = tau * dot(a[i], a[j]);
        for (std::size_t r = 0; r < 3; ++r) left(3 + r, i) = a[i][r];
    }
    for (std::size_t r = 0; r < 3; ++r) left(3 + r, 3 + r) = 1.0;

    for (std::size_t i = 0; i < 3; ++i) {
        right(i, i) = 1.0 - tau * dot(a[i], a[i]);
        for (std::size_t j = i + 1; j < 3; ++j) right(i, j) = -tau * dot(a[i], a[j]);
        for (std::size_t r = 0; r < 3; ++r) right(i, 3 + r) = tau * a[i][r];
    }
    for (std::size_t r = 0; r < 3; ++r) right(3 + r, 3 + r) = 1.0;

    return lu_solve(left, right);
}

BlockProblem gs_divergence_problem(double eps) {
    if (eps == 0.0) throw std::invalid_argument("eps must be nonzero");
    BlockProblem prob;
    prob.m = 3;
    prob.block_dims = {1, 1, 1};
    Vector cols[3] = {{1.0, 1.0 - eps, 1.0 - eps}, {1.0, 1.0, 1.0 - eps}, {1.0, 1.0, 1.0}};
    for (int i = 0; i < 3; ++i) {
        Matrix ai(3, 1);
        for (std::size_t r = 0; r < 3; ++r) ai(r, 0) = cols[i][r];
        prob.a_blocks.push_back(ai);
        prob.h_blocks.push_back(Matrix(0, 1));
        prob.g.push_back(ProxOracle::zero());
    }
    prob.b.assign(3, 0.0);
    prob.validate();
    return prob;
}

std::vector<DivergenceRow> divergence_table(const std::vector<double>& eps_list,
                                            double tau_start, double tau_step) {
    if (tau_start <= 0.0 || tau_step <= 0.0)
        throw std::invalid_argument("tau grid parameters must be positive");
    std::vector<DivergenceRow> rows;
    for (double eps : eps_list) {
        bool found = false;
        for (double tau = tau_start; tau > 0.0; tau -= tau_step) {
            double r;
            try {
                r = spectral_radius(build_gs_iteration_matrix(eps, tau));
            } catch (const std::overflow_error&) {
                continue;  // norm blow-up certifies instability at this tau
            }
            if (r < 1.0) {
                rows.push_back({eps, tau});
                found = true;
                break;
            }
        }
        if (!found) throw std::runtime_error("no stable stepsize on the grid");
    }
    return rows;
}

}  // namespace hbcu
