#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hbcu/linalg.hpp"
#include "hbcu/mixing.hpp"
#include "hbcu/model.hpp"

namespace hbcu {

enum class ScheduleMode { fixed, adaptive };
enum class StartupRule { none, grid20 };

/// Which previous-block values a block update sees: the affinely mixed point
/// driven by u, or the newest values (plain Gauss-Seidel, no convergence
/// guarantee for m >= 3).
enum class MixRule { weighted, gauss_seidel };

struct ProxSchedule {
    double beta = 1.0;
    double rho = 1.0;
    double d1 = 0.0;
    double d_inc = 0.0;
    double d_max = 0.0;
    double eta = 0.999;
    ScheduleMode mode = ScheduleMode::fixed;
    StartupRule startup = StartupRule::none;
    /// When set, every P_i is this scalar times the identity (used by the
    /// Gauss-Seidel divergence laboratory).
    std::optional<double> uniform_prox;

    void validate() const;
};

enum class RunStatus { max_epochs, tolerance_met, diverged };

struct RunRecord {
    std::size_t epoch = 0;
    double objective = 0.0;
    double obj_gap = 0.0;  // |F - F*| when F* was supplied, else NaN
    double feasibility = 0.0;
    double d_k = 0.0;
    std::size_t triggers = 0;  // cumulative adaptive triggers
    double seconds = 0.0;
};

struct RunReport {
    std::vector<RunRecord> epochs;
    RunStatus status = RunStatus::max_epochs;
    std::size_t total_triggers = 0;
    double d1_used = 0.0, d_inc_used = 0.0;
    bool startup_fell_back = false;  // grid20 found no quiet pair
    Vector final_x, final_lambda;
};

struct SolverState {
    std::vector<Vector> x, x_prev;
    Vector lambda;
    Vector r_a;  // A x^k - b
    Vector r_h;  // H x^k
    Vector s1_a, s2_a, s1_h, s2_h;  // running mixed-point corrections
    std::size_t k = 0;
    double d_k = 0.0;
    std::size_t trigger_count = 0;
    bool last_epoch_fired = false;
    Vector ergodic_sum;
    std::size_t ergodic_count = 0;
    // Images of the last full epoch's block steps, for the adaptive check.
    std::vector<Vector> h_delta, a_delta;
    std::vector<double> delta_sq;
    // Lazily built H_i'H_i + beta A_i'A_i for blocks solved exactly.
    std::vector<Matrix> p_base_cache;

    Vector stacked_x() const;
    Vector ergodic_x() const;
    double x_norm() const;
};

SolverState init_state(const BlockProblem& prob, const ProxSchedule& schedule,
                       const std::optional<Vector>& x0 = std::nullopt);

/// One block update of the hybrid scheme; blocks 1..i-1 must already have
/// been updated this iteration.
void step_block(SolverState& state, const BlockProblem& prob, const MixingPlan& plan,
                const ProxSchedule& schedule, const BlockWeights& weights, std::size_t i,
                MixRule mix = MixRule::weighted);

/// The adaptive-schedule inequality, evaluated from the deltas of the last
/// completed epoch against the proximal weights at state.d_k. The two sides
/// of the inequality are reported through the optional out-parameters.
bool adaptive_check(const SolverState& state, const BlockProblem& prob, const MixingPlan& plan,
                    const ProxSchedule& schedule, const BlockWeights& weights,
                    double* lhs_out = nullptr, double* rhs_out = nullptr);

/// Full sweep over the blocks, the multiplier ascent step, cache refresh,
/// ergodic update, and (in adaptive mode) the proximal-weight update.
void step_epoch(SolverState& state, const BlockProblem& prob, const MixingPlan& plan,
                const ProxSchedule& schedule, const BlockWeights& weights,
                MixRule mix = MixRule::weighted);

RunReport run(const BlockProblem& prob, const MixingPlan& plan, const ProxSchedule& schedule,
              std::size_t max_epochs, double tol,
              std::optional<double> f_star = std::nullopt, MixRule mix = MixRule::weighted,
              const std::optional<Vector>& x0 = std::nullopt);

/// Randomized baseline: one uniformly chosen block per iteration updated
/// against the current iterate, then a multiplier step with rho = beta / m.
RunReport run_random_bcu(const BlockProblem& prob, const ProxSchedule& schedule,
                         std::size_t max_epochs, std::uint64_t seed, double tol = 0.0,
                         std::optional<double> f_star = std::nullopt);

/// Nonincreasing-along-iterations merit value used as a convergence monitor,
/// evaluated against a reference KKT pair.
double lyapunov_monitor(const SolverState& state, const BlockProblem& prob,
                        const MixingPlan& plan, const ProxSchedule& schedule,
                        const BlockWeights& weights, const Vector& x_star,
                        const Vector& lambda_star);

/// The 6x6 linear iteration map of the three-block Gauss-Seidel example.
Matrix build_gs_iteration_matrix(double eps, double tau);

/// The underlying feasibility problem of the example (3 scalar blocks,
/// zero objective, b = 0).
BlockProblem gs_divergence_problem(double eps);

struct DivergenceRow {
    double eps = 0.0;
    double tau = 0.0;  // largest stable stepsize found on the grid
};

std::vector<DivergenceRow> divergence_table(const std::vector<double>& eps_list,
                                            double tau_start, double tau_step);

}  // namespace hbcu
