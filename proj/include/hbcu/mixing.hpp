#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hbcu/linalg.hpp"
#include "hbcu/model.hpp"

namespace hbcu {

/// Mixing configuration: vector u, the induced matrix W, the linearization
/// flags D, and the proximal scale d_max derived from the design SDP.
struct MixingPlan {
    std::size_t m = 0;
    Vector u;
    Matrix w;
    double alpha = 1.0;
    std::vector<int> lin_flags;  // D_i in {0, 1}
    double d_max = 0.0;          // sigma* + safeguard
    double sigma_star = 0.0;

    static MixingPlan jacobi(std::size_t m, std::vector<int> lin_flags);
};

struct SdpSolution {
    double sigma = 0.0;
    Vector u;
    double certificate = 0.0;  // lambda_max of the design matrix at (sigma, u)
    std::size_t iterations = 0;
};

/// Pin a strict-lower-triangle entry of W (i > j) to a value.
struct PinConstraint {
    std::size_t i = 0, j = 0;
    double value = 1.0;
};

/// Upper triangle all ones, strict lower triangle w_ij = 1 + u_j - u_i.
Matrix construct_w(const Vector& u);

struct ValidateResult {
    bool ok = false;
    std::string reason;
    std::optional<Vector> u;
};

/// Check the mixing-matrix conditions and recover u (u_1 = 0) if they hold.
ValidateResult validate_w(const Matrix& w);

/// Minimize lambda_max of the design matrix over u, optionally with pinned
/// strict-lower entries of W. Throws on infeasible pins.
SdpSolution solve_mixing_sdp(std::size_t m, const std::vector<int>& lin_flags,
                             const std::vector<PinConstraint>& pins = {});

/// Solve the SDP and assemble a full plan; d_max = sigma* + 1e-6.
MixingPlan solve_plan(std::size_t m, std::vector<int> lin_flags,
                      const std::vector<PinConstraint>& pins = {});

/// The design matrix L(e u' - u e') + E - e u' + u u' - I + D, symmetric.
Matrix mixing_design_matrix(const Vector& u, const std::vector<int>& lin_flags);

/// Per-block proximal weights P_i = (1-D_i)(H_i'H_i + beta A_i'A_i)
/// + d (||H_i||^2 + beta ||A_i||^2) I, kept in factored form.
struct BlockWeights {
    std::vector<int> lin_flags;
    double beta = 0.0;
    double d = 0.0;
    std::vector<double> h_norm_sq;  // ||H_i||_2^2
    std::vector<double> a_norm_sq;  // ||A_i||_2^2

    double scalar_part(std::size_t i) const {
        return d * (h_norm_sq[i] + beta * a_norm_sq[i]);
    }
    double quad_cap(std::size_t i) const {  // upper bound on lambda_max(P_i)
        return (lin_flags[i] ? 0.0 : h_norm_sq[i] + beta * a_norm_sq[i]) + scalar_part(i);
    }
};

BlockWeights build_p(const BlockProblem& prob, const std::vector<int>& lin_flags, double beta,
                     double d);

/// Dense P_i for one block (test / certification use).
Matrix materialize_p_block(const BlockProblem& prob, const BlockWeights& w, std::size_t i);

struct CertifyResult {
    bool ok = false;
    double min_eig = 0.0;
};

/// Numerically verify the proximal-weight condition of the convergence
/// theorem: min eigenvalue of P - blockwise coupling terms.
CertifyResult certify_p_condition(const BlockProblem& prob, const MixingPlan& plan, double beta,
                                  double d);

std::string mixing_plan_to_json(const MixingPlan& plan);
MixingPlan mixing_plan_from_json(const std::string& text);
void save_mixing_plan(const std::string& path, const MixingPlan& plan);
MixingPlan load_mixing_plan(const std::string& path);

}  // namespace hbcu
