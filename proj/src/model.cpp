#include "hbcu/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace hbcu {

std::uint64_t Rng::next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

std::size_t BlockProblem::total_dim() const {
    std::size_t n = 0;
    for (std::size_t d : block_dims) n += d;
    return n;
}

std::size_t BlockProblem::quad_rows() const {
    for (const Matrix& h : h_blocks)
        if (h.rows() > 0) return h.rows();
    return 0;
}

std::size_t BlockProblem::block_offset(std::size_t i) const {
    std::size_t off = 0;
    for (std::size_t j = 0; j < i; ++j) off += block_dims[j];
    return off;
}

void BlockProblem::validate() const {
    if (m == 0 || block_dims.size() != m || a_blocks.size() != m || h_blocks.size() != m ||
        g.size() != m)
        throw std::invalid_argument("BlockProblem: inconsistent block counts");
    const std::size_t p = b.size();
    const std::size_t hr = quad_rows();
    for (std::size_t i = 0; i < m; ++i) {
        if (a_blocks[i].rows() != p || a_blocks[i].cols() != block_dims[i])
            throw std::invalid_argument("BlockProblem: A block shape mismatch");
        if (h_blocks[i].cols() != block_dims[i] || h_blocks[i].rows() != hr)
            throw std::invalid_argument("BlockProblem: H block shape mismatch");
    }
    if (!c.empty() && c.size() != total_dim())
        throw std::invalid_argument("BlockProblem: linear term length mismatch");
}

std::vector<Vector> split_blocks(const BlockProblem& prob, const Vector& x) {
    if (x.size() != prob.total_dim())
        throw std::invalid_argument("split_blocks: dimension mismatch");
    std::vector<Vector> xs(prob.m);
    std::size_t off = 0;
    for (std::size_t i = 0; i < prob.m; ++i) {
        xs[i].assign(x.begin() + off, x.begin() + off + prob.block_dims[i]);
        off += prob.block_dims[i];
    }
    return xs;
}

Vector join_blocks(const BlockProblem& prob, const std::vector<Vector>& xs) {
    Vector x;
    x.reserve(prob.total_dim());
    for (const Vector& xi : xs) x.insert(x.end(), xi.begin(), xi.end());
    return x;
}

double eval_objective(const BlockProblem& prob, const Vector& x) {
    std::vector<Vector> xs = split_blocks(prob, x);
    double obj = 0.0;
    const std::size_t hr = prob.quad_rows();
    if (hr > 0) {
        Vector hx(hr, 0.0);
        for (std::size_t i = 0; i < prob.m; ++i) {
            Vector hi = matvec(prob.h_blocks[i], xs[i]);
            for (std::size_t r = 0; r < hr; ++r) hx[r] += hi[r];
        }
        obj += 0.5 * dot(hx, hx);
    }
    if (!prob.c.empty()) obj += dot(prob.c, x);
    for (std::size_t i = 0; i < prob.m; ++i) obj += eval_g(prob.g[i], xs[i]);
    return obj;
}

double feasibility(const BlockProblem& prob, const Vector& x) {
    std::vector<Vector> xs = split_blocks(prob, x);
    Vector r = prob.b;
    for (double& v : r) v = -v;
    for (std::size_t i = 0; i < prob.m; ++i) {
        Vector ai = matvec(prob.a_blocks[i], xs[i]);
        for (std::size_t k = 0; k < r.size(); ++k) r[k] += ai[k];
    }
    return norm2(r);
}

BlockProblem gen_qp(std::size_t p, std::size_t n, std::size_t m, std::uint64_t seed) {
    if (m == 0 || n % m != 0) throw std::invalid_argument("gen_qp: n must be divisible by m");
    if (p >= n) throw std::invalid_argument("gen_qp: need p < n");
    if (n <= 10) throw std::invalid_argument("gen_qp: need n > 10");
    Rng rng(seed);
    const std::size_t hr = n - 10;
    Matrix h(hr, n);
    for (std::size_t i = 0; i < hr; ++i)
        for (std::size_t j = 0; j < n; ++j) h(i, j) = rng.normal();
    Vector c(n);
    for (double& v : c) v = rng.normal();
    Matrix a(p, n);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < n - p; ++j) a(i, j) = rng.normal();
    for (std::size_t i = 0; i < p; ++i) a(i, n - p + i) = 1.0;
    Vector b(p);
    for (double& v : b) v = rng.uniform();

    BlockProblem prob;
    prob.m = m;
    prob.block_dims.assign(m, n / m);
    prob.b = std::move(b);
    prob.c = std::move(c);
    prob.g.assign(m, ProxOracle::nonneg());
    const std::size_t bd = n / m;
    for (std::size_t blk = 0; blk < m; ++blk) {
        Matrix hb(hr, bd), ab(p, bd);
        for (std::size_t i = 0; i < hr; ++i)
            for (std::size_t j = 0; j < bd; ++j) hb(i, j) = h(i, blk * bd + j);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < bd; ++j) ab(i, j) = a(i, blk * bd + j);
        prob.h_blocks.push_back(std::move(hb));
        prob.a_blocks.push_back(std::move(ab));
    }
    prob.validate();
    return prob;
}

std::size_t PcpInstance::sample_count() const {
    std::size_t s = 0;
    for (const auto& col : omega) s += col.size();
    return s;
}

PcpInstance gen_pcp(std::size_t rows, std::size_t cols, std::size_t rank, double sparsity,
                    double sample_frac, std::uint64_t seed) {
    if (sample_frac <= 0.0 || sample_frac > 1.0)
        throw std::invalid_argument("gen_pcp: sample_frac must be in (0, 1]");
    if (sparsity < 0.0 || sparsity > 1.0)
        throw std::invalid_argument("gen_pcp: sparsity must be in [0, 1]");
    if (rank >= std::min(rows, cols)) throw std::invalid_argument("gen_pcp: rank too large");
    Rng rng(seed);
    PcpInstance inst;
    inst.rows = rows;
    inst.cols = cols;
    inst.meta = {seed, "pcp", {{"rows", double(rows)}, {"cols", double(cols)},
                               {"rank", double(rank)}, {"sparsity", sparsity},
                               {"sample_frac", sample_frac}}};
    Matrix u(rows, std::max<std::size_t>(rank, 1)), v(cols, std::max<std::size_t>(rank, 1));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t r = 0; r < rank; ++r) u(i, r) = rng.normal();
    for (std::size_t j = 0; j < cols; ++j)
        for (std::size_t r = 0; r < rank; ++r) v(j, r) = rng.normal();
    const double lr_scale = rank > 0 ? 1.0 / std::sqrt(double(rank)) : 0.0;
    inst.low_rank = Matrix(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < rank; ++r) s += u(i, r) * v(j, r);
            inst.low_rank(i, j) = lr_scale * s;
        }
    inst.sparse = Matrix(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            if (rng.uniform() < sparsity) inst.sparse(i, j) = 10.0 * (rng.uniform() - 0.5);
    inst.truth = inst.low_rank + inst.sparse;

    const std::size_t per_col = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(sample_frac * double(rows))));
    inst.omega.resize(cols);
    std::vector<std::size_t> pool(rows);
    for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t i = 0; i < rows; ++i) pool[i] = i;
        for (std::size_t k = 0; k < per_col; ++k) {
            const std::size_t pick = k + rng.below(rows - k);
            std::swap(pool[k], pool[pick]);
        }
        inst.omega[j].assign(pool.begin(), pool.begin() + per_col);
        std::sort(inst.omega[j].begin(), inst.omega[j].end());
    }
    inst.b.reserve(inst.sample_count());
    for (std::size_t j = 0; j < cols; ++j)
        for (std::size_t i : inst.omega[j]) inst.b.push_back(inst.truth(i, j));
    inst.mu = 1.0 / std::sqrt(double(std::max(rows, cols)));
    return inst;
}

BlockProblem pcp_to_block_problem(const PcpInstance& inst, bool spectral_kind) {
    const std::size_t nb = inst.rows * inst.cols;
    if (nb > 4000)
        throw std::invalid_argument("pcp_to_block_problem: instance too large for dense form");
    const std::size_t ns = inst.sample_count();
    const std::size_t p = nb + ns;
    BlockProblem prob;
    prob.m = 3;
    prob.block_dims = {nb, nb, nb};
    Matrix ax(p, nb), az(p, nb);
    for (std::size_t t = 0; t < nb; ++t) {
        ax(t, t) = 1.0;
        az(t, t) = -1.0;
    }
    std::size_t row = nb;
    for (std::size_t j = 0; j < inst.cols; ++j)
        for (std::size_t i : inst.omega[j]) az(row++, i * inst.cols + j) = 1.0;
    prob.a_blocks = {ax, ax, az};
    prob.h_blocks.assign(3, Matrix(0, nb));
    prob.b.assign(p, 0.0);
    for (std::size_t t = 0; t < ns; ++t) prob.b[nb + t] = inst.b[t];
    prob.g = {ProxOracle::l1(inst.mu),
              spectral_kind ? ProxOracle::spectral(1.0, inst.rows, inst.cols)
                            : ProxOracle::nuclear(1.0, inst.rows, inst.cols),
              ProxOracle::zero()};
    prob.validate();
    return prob;
}

namespace {

// Square root factor of sigma*E + (1-sigma)*I applied to a contiguous span.
void corr_block_sqrt_apply(Vector& x, std::size_t start, std::size_t len, double sigma) {
    const double d = std::sqrt(1.0 - sigma);
    const double c = (std::sqrt(sigma * double(len) + 1.0 - sigma) - d) / double(len);
    double sum = 0.0;
    for (std::size_t i = 0; i < len; ++i) sum += x[start + i];
    for (std::size_t i = 0; i < len; ++i) x[start + i] = d * x[start + i] + c * sum;
}

}  // namespace

MsvmInstance gen_msvm(std::size_t p, std::size_t n_per_class, std::size_t s, double sigma,
                      double mu, std::uint64_t seed) {
    if (s % 2 != 0) throw std::invalid_argument("gen_msvm: s must be even");
    if (p < 2 * s) throw std::invalid_argument("gen_msvm: need p >= 2s");
    constexpr std::size_t kClasses = 3;
    const std::size_t n = kClasses * n_per_class;
    Rng rng(seed);

    std::vector<Vector> means(kClasses, Vector(p, 0.0));
    for (std::size_t i = 0; i < s; ++i) means[0][i] = 1.0;
    for (std::size_t i = 0; i < s; ++i) means[1][s / 2 + i] = 1.0;
    for (std::size_t i = 0; i < s; ++i) means[2][s + i] = 1.0;
    const std::size_t corr_start[kClasses] = {0, s / 2, s};

    MsvmInstance inst;
    inst.meta = {seed, "msvm", {{"p", double(p)}, {"n_per_class", double(n_per_class)},
                                {"s", double(s)}, {"sigma", sigma}, {"mu", mu}}};
    inst.data = Matrix(p, n);
    inst.labels.resize(n);
    for (std::size_t cls = 0; cls < kClasses; ++cls) {
        for (std::size_t t = 0; t < n_per_class; ++t) {
            Vector z(p);
            for (double& v : z) v = rng.normal();
            corr_block_sqrt_apply(z, corr_start[cls], s, sigma);
            const std::size_t col = cls * n_per_class + t;
            inst.labels[col] = static_cast<int>(cls) + 1;
            for (std::size_t i = 0; i < p; ++i)
                inst.data(i, col) = means[cls][i] + z[i];
        }
    }

    // Blocks (x1, x2, x3, Y) for the reformulation with constraints
    // A' X - Y = -1 (n rows per class) and x1 + x2 + x3 = 0 (p rows).
    const std::size_t rows = n * kClasses + p;
    BlockProblem& prob = inst.prob;
    prob.m = kClasses + 1;
    prob.block_dims = {p, p, p, n * kClasses};
    for (std::size_t cls = 0; cls < kClasses; ++cls) {
        Matrix a(rows, p);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < p; ++j) a(cls * n + i, j) = inst.data(j, i);
        for (std::size_t j = 0; j < p; ++j) a(n * kClasses + j, j) = 1.0;
        prob.a_blocks.push_back(std::move(a));
    }
    Matrix ay(rows, n * kClasses);
    for (std::size_t t = 0; t < n * kClasses; ++t) ay(t, t) = -1.0;
    prob.a_blocks.push_back(std::move(ay));
    prob.h_blocks = {Matrix(0, p), Matrix(0, p), Matrix(0, p), Matrix(0, n * kClasses)};
    prob.b.assign(rows, 0.0);
    for (std::size_t t = 0; t < n * kClasses; ++t) prob.b[t] = -1.0;
    Vector hw(n * kClasses, 0.0);
    for (std::size_t cls = 0; cls < kClasses; ++cls)
        for (std::size_t i = 0; i < n; ++i)
            if (inst.labels[i] != static_cast<int>(cls) + 1)
                hw[cls * n + i] = 1.0 / double(n);
    prob.g = {ProxOracle::l1(mu), ProxOracle::l1(mu), ProxOracle::l1(mu),
              ProxOracle::weighted_hinge(std::move(hw))};
    prob.validate();
    return inst;
}

Matrix load_raw_matrix(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_raw_matrix: cannot open " + path);
    std::uint64_t rows = 0, cols = 0;
    f.read(reinterpret_cast<char*>(&rows), 8);
    f.read(reinterpret_cast<char*>(&cols), 8);
    if (!f) throw std::runtime_error("load_raw_matrix: truncated header");
    Matrix m(rows, cols);
    std::vector<double> col(rows);
    for (std::uint64_t j = 0; j < cols; ++j) {
        f.read(reinterpret_cast<char*>(col.data()), 8 * rows);
        if (!f) throw std::runtime_error("load_raw_matrix: truncated data");
        for (std::uint64_t i = 0; i < rows; ++i) m(i, j) = col[i];
    }
    return m;
}

void save_raw_matrix(const std::string& path, const Matrix& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_raw_matrix: cannot open " + path);
    const std::uint64_t rows = m.rows(), cols = m.cols();
    f.write(reinterpret_cast<const char*>(&rows), 8);
    f.write(reinterpret_cast<const char*>(&cols), 8);
    std::vector<double> col(rows);
    for (std::uint64_t j = 0; j < cols; ++j) {
        for (std::uint64_t i = 0; i < rows; ++i) col[i] = m(i, j);
        f.write(reinterpret_cast<const char*>(col.data()), 8 * rows);
    }
}

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"entries", std::move(rows)}};
}

Matrix matrix_from_json(const json& j) {
    if (j.contains("file")) return load_raw_matrix(j.at("file").get<std::string>());
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const json& rows = j.at("entries");
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t c = 0; c < m.cols(); ++c) m(i, c) = rows.at(i).at(c).get<double>();
    return m;
}

const char* kind_name(ProxKind k) {
    switch (k) {
        case ProxKind::zero: return "zero";
        case ProxKind::l1: return "l1";
        case ProxKind::nonneg: return "nonneg";
        case ProxKind::box: return "box";
        case ProxKind::nuclear: return "nuclear";
        case ProxKind::spectral: return "spectral";
        case ProxKind::weighted_hinge: return "weighted_hinge";
    }
    return "zero";
}

json oracle_to_json(const ProxOracle& g) {
    json j{{"kind", kind_name(g.kind)}};
    switch (g.kind) {
        case ProxKind::l1: j["mu"] = g.mu; break;
        case ProxKind::box: j["lo"] = g.lo; j["hi"] = g.hi; break;
        case ProxKind::weighted_hinge: j["weights"] = g.weights; break;
        case ProxKind::nuclear:
        case ProxKind::spectral:
            j["mu"] = g.mu;
            j["mat_rows"] = g.mat_rows;
            j["mat_cols"] = g.mat_cols;
            break;
        default: break;
    }
    return j;
}

ProxOracle oracle_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "zero") return ProxOracle::zero();
    if (kind == "l1") return ProxOracle::l1(j.at("mu").get<double>());
    if (kind == "nonneg") return ProxOracle::nonneg();
    if (kind == "box")
        return ProxOracle::box(j.at("lo").get<Vector>(), j.at("hi").get<Vector>());
    if (kind == "nuclear")
        return ProxOracle::nuclear(j.at("mu").get<double>(), j.at("mat_rows").get<std::size_t>(),
                                   j.at("mat_cols").get<std::size_t>());
    if (kind == "spectral")
        return ProxOracle::spectral(j.at("mu").get<double>(), j.at("mat_rows").get<std::size_t>(),
                                    j.at("mat_cols").get<std::size_t>());
    if (kind == "weighted_hinge")
        return ProxOracle::weighted_hinge(j.at("weights").get<Vector>());
    throw std::invalid_argument("unknown prox kind: " + kind);
}

}  // namespace

std::string block_problem_to_json(const BlockProblem& prob) {
    json j;
    j["m"] = prob.m;
    j["block_dims"] = prob.block_dims;
    j["b"] = prob.b;
    j["c"] = prob.c;
    j["h_blocks"] = json::array();
    j["a_blocks"] = json::array();
    j["g"] = json::array();
    for (std::size_t i = 0; i < prob.m; ++i) {
        j["h_blocks"].push_back(matrix_to_json(prob.h_blocks[i]));
        j["a_blocks"].push_back(matrix_to_json(prob.a_blocks[i]));
        j["g"].push_back(oracle_to_json(prob.g[i]));
    }
    return j.dump(2);
}

BlockProblem block_problem_from_json(const std::string& text) {
    json j = json::parse(text);
    BlockProblem prob;
    prob.m = j.at("m").get<std::size_t>();
    prob.block_dims = j.at("block_dims").get<std::vector<std::size_t>>();
    prob.b = j.at("b").get<Vector>();
    if (j.contains("c")) prob.c = j.at("c").get<Vector>();
    for (const json& mj : j.at("h_blocks")) prob.h_blocks.push_back(matrix_from_json(mj));
    for (const json& mj : j.at("a_blocks")) prob.a_blocks.push_back(matrix_from_json(mj));
    for (const json& gj : j.at("g")) prob.g.push_back(oracle_from_json(gj));
    prob.validate();
    return prob;
}

void save_block_problem(const std::string& path, const BlockProblem& prob) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_block_problem: cannot open " + path);
    f << block_problem_to_json(prob);
}

BlockProblem load_block_problem(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_block_problem: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return block_problem_from_json(text);
}

}  // namespace hbcu
