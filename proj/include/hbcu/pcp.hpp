#pragma once

#include <cstdint>
#include <optional>

#include "hbcu/model.hpp"
#include "hbcu/solver.hpp"

namespace hbcu {

/// Matrix-shaped runner for the three-block principal component pursuit
/// splitting (X sparse, Y low rank, Z coupled to the samples). All block
/// updates have closed forms, so this scales past the dense generic path.
enum class PcpMethod { hybrid, jacobi, gauss_seidel, random_block };

struct PcpOptions {
    PcpMethod method = PcpMethod::hybrid;
    bool spectral = false;  // penalize ||Y||_2 instead of ||Y||_*
    ProxSchedule schedule;
    /// Mixing vector (u_1 = 0) for the hybrid method; jacobi forces u = 0.
    std::optional<Vector> u;
    std::uint64_t seed = 1;  // block sampling for random_block
};

struct PcpResult {
    RunReport report;
    Matrix x, y, z;
    double rel_err_sparse = 0.0;    // ||X - S||_F / ||S||_F
    double rel_err_low_rank = 0.0;  // ||Y - L||_F / ||L||_F
};

PcpResult run_pcp(const PcpInstance& inst, const PcpOptions& options, std::size_t max_epochs,
                  double tol, std::optional<double> f_star = std::nullopt);

}  // namespace hbcu
