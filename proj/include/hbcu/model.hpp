#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hbcu/linalg.hpp"
#include "hbcu/prox.hpp"

namespace hbcu {

/// Deterministic RNG with hand-rolled distributions so instances reproduce
/// bit-exactly across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next_u64();         // splitmix64 stream
    double uniform();                 // [0, 1)
    double normal();                  // standard Gaussian, Box-Muller
    std::uint64_t below(std::uint64_t n);

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Linearly constrained multi-block problem
///   min (1/2)||H x||^2 + c' x + sum_i g_i(x_i)   s.t.  A x = b,
/// stored per block. H blocks may have zero rows (no quadratic term).
struct BlockProblem {
    std::size_t m = 0;
    std::vector<std::size_t> block_dims;
    std::vector<Matrix> h_blocks;  // shared row count (possibly 0)
    std::vector<Matrix> a_blocks;  // shared row count p
    Vector b;
    std::vector<ProxOracle> g;
    Vector c;  // optional linear term, empty means zero

    std::size_t total_dim() const;
    std::size_t constraint_rows() const { return b.size(); }
    std::size_t quad_rows() const;
    void validate() const;

    /// Offset of block i inside the stacked variable.
    std::size_t block_offset(std::size_t i) const;
};

struct InstanceMeta {
    std::uint64_t seed = 0;
    std::string name;
    std::map<std::string, double> params;
};

double eval_objective(const BlockProblem& prob, const Vector& x);
double feasibility(const BlockProblem& prob, const Vector& x);

/// Split / join a stacked variable by the problem's block partition.
std::vector<Vector> split_blocks(const BlockProblem& prob, const Vector& x);
Vector join_blocks(const BlockProblem& prob, const std::vector<Vector>& xs);

/// Nonnegative QP instance: Gaussian H with n-10 rows, A = [B, I],
/// uniform[0,1] right-hand side, nonnegativity on every block.
BlockProblem gen_qp(std::size_t p, std::size_t n, std::size_t m, std::uint64_t seed);

/// Synthetic compressive principal component pursuit instance.
struct PcpInstance {
    std::size_t rows = 0, cols = 0;
    Matrix truth;                          // low-rank + sparse ground truth
    Matrix low_rank, sparse;
    std::vector<std::vector<std::size_t>> omega;  // sampled row indices per column
    Vector b;                              // observed entries, column scan order
    double mu = 0.0;
    InstanceMeta meta;

    std::size_t sample_count() const;
};

PcpInstance gen_pcp(std::size_t rows, std::size_t cols, std::size_t rank, double sparsity,
                    double sample_frac, std::uint64_t seed);

/// Three-block (X, Y, Z) formulation of a PCP instance with constraints
/// X + Y - Z = 0 and the sampling rows of Z pinned to b. Dense; guarded to
/// modest sizes.
BlockProblem pcp_to_block_problem(const PcpInstance& inst, bool spectral_kind = false);

/// Multi-class SVM instance (c = 3 classes) with blocks (x1, x2, x3, Y).
struct MsvmInstance {
    BlockProblem prob;
    std::vector<int> labels;   // in {1, 2, 3}
    Matrix data;               // p x n sample matrix
    InstanceMeta meta;
};

MsvmInstance gen_msvm(std::size_t p, std::size_t n_per_class, std::size_t s, double sigma,
                      double mu, std::uint64_t seed);

/// Raw matrix file: little-endian uint64 rows, uint64 cols, then rows*cols
/// doubles in column-major order.
Matrix load_raw_matrix(const std::string& path);
void save_raw_matrix(const std::string& path, const Matrix& m);

std::string block_problem_to_json(const BlockProblem& prob);
BlockProblem block_problem_from_json(const std::string& text);
void save_block_problem(const std::string& path, const BlockProblem& prob);
BlockProblem load_block_problem(const std::string& path);

}  // namespace hbcu
