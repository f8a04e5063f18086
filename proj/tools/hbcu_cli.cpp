#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hbcu/mixing.hpp"
#include "hbcu/model.hpp"
#include "hbcu/pcp.hpp"
#include "hbcu/report.hpp"
#include "hbcu/solver.hpp"

namespace {

using namespace hbcu;

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kInfeasible = 3;

constexpr double kUnsetReal = std::numeric_limits<double>::quiet_NaN();

bool is_set(double v) { return !std::isnan(v); }

std::vector<int> parse_lin_flags(const std::string& text, std::size_t m) {
    std::vector<int> flags;
    if (text == "0") {
        flags.assign(m, 0);
    } else if (text == "1") {
        flags.assign(m, 1);
    } else {
        for (char ch : text) {
            if (ch != '0' && ch != '1')
                throw std::invalid_argument("linearization pattern must be 0, 1, or a 0/1 string");
            flags.push_back(ch - '0');
        }
        if (flags.size() != m)
            throw std::invalid_argument("linearization pattern length must equal block count");
    }
    return flags;
}

// --- mix -------------------------------------------------------------------

struct MixArgs {
    std::size_t m = 3;
    std::string lin = "0";
    std::vector<std::string> pins;  // "i,j,value", 1-based strict lower triangle
    std::string output;
};

int cmd_mix(const MixArgs& args, const std::string& out_dir) {
    std::vector<int> flags = parse_lin_flags(args.lin, args.m);
    std::vector<PinConstraint> pins;
    for (const std::string& text : args.pins) {
        unsigned long i = 0, j = 0;
        double value = 0.0;
        if (std::sscanf(text.c_str(), "%lu,%lu,%lf", &i, &j, &value) != 3 || i <= j || i > args.m
            || j == 0)
            throw std::invalid_argument("pin must be 'i,j,value' with 1 <= j < i <= m");
        pins.push_back({i - 1, j - 1, value});
    }

    MixingPlan plan;
    try {
        plan = solve_plan(args.m, flags, pins);
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        if (msg.find("infeasible") != std::string::npos) {
            std::cerr << "error: " << msg << "\n";
            return kInfeasible;
        }
        throw;
    }

    std::string path = args.output.empty() ? out_dir + "/plan.json" : args.output;
    save_mixing_plan(path, plan);
    std::printf("sigma = %.6f  d_max = %.6f\n", plan.sigma_star, plan.d_max);
    std::printf("W =\n");
    for (std::size_t i = 0; i < plan.m; ++i) {
        for (std::size_t j = 0; j < plan.m; ++j) std::printf(" %9.4f", plan.w(i, j));
        std::printf("\n");
    }
    std::printf("plan written to %s\n", path.c_str());
    return kOk;
}

// --- run -------------------------------------------------------------------

struct RunArgs {
    std::string experiment = "qp";
    std::string method = "jags";
    std::string config_file;
    // instance parameters (NaN / 0 sentinels filled from experiment defaults)
    std::size_t p = 0, n = 0, m = 0, rows = 0, cols = 0, rank = 0, n_per_class = 0, s = 0;
    double sparsity = kUnsetReal, sample_frac = kUnsetReal, sigma = kUnsetReal,
           mu = kUnsetReal;
    std::uint64_t seed = 1;
    std::string instance_file;  // custom experiments
    // schedule
    double beta = kUnsetReal, rho = kUnsetReal, d1 = kUnsetReal, d_inc = kUnsetReal,
           d_max = kUnsetReal, eta = 0.999;
    std::string mode = "adaptive";
    std::string startup = "none";
    // run control
    std::size_t max_epochs = 500;
    double tol = 0.0;
    double f_star = kUnsetReal;
    std::string plan_file;
    bool acknowledge_gs = false;
    bool spectral = false;
    std::string csv_path, json_path;
};

void apply_config_file(RunArgs& a) {
    std::ifstream in(a.config_file);
    if (!in) throw std::invalid_argument("cannot read config file: " + a.config_file);
    nlohmann::json j;
    in >> j;
    auto get = [&](const char* key, auto& slot) {
        if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
    };
    get("experiment", a.experiment);
    get("method", a.method);
    get("p", a.p);
    get("n", a.n);
    get("m", a.m);
    get("rows", a.rows);
    get("cols", a.cols);
    get("rank", a.rank);
    get("n_per_class", a.n_per_class);
    get("s", a.s);
    get("sparsity", a.sparsity);
    get("sample_frac", a.sample_frac);
    get("sigma", a.sigma);
    get("mu", a.mu);
    get("seed", a.seed);
    get("instance", a.instance_file);
    get("beta", a.beta);
    get("rho", a.rho);
    get("d1", a.d1);
    get("d_inc", a.d_inc);
    get("d_max", a.d_max);
    get("eta", a.eta);
    get("mode", a.mode);
    get("startup", a.startup);
    get("max_epochs", a.max_epochs);
    get("tol", a.tol);
    get("f_star", a.f_star);
    get("plan", a.plan_file);
    get("acknowledge_gs", a.acknowledge_gs);
    get("spectral", a.spectral);
    get("csv", a.csv_path);
    get("json", a.json_path);
}

void fill_default(double& slot, double value) {
    if (!is_set(slot)) slot = value;
}
void fill_default(std::size_t& slot, std::size_t value) {
    if (slot == 0) slot = value;
}

ProxSchedule make_schedule(const RunArgs& a) {
    ProxSchedule s;
    s.beta = a.beta;
    s.rho = a.rho;
    s.d1 = a.d1;
    s.d_inc = a.d_inc;
    s.d_max = a.d_max;
    s.eta = a.eta;
    if (a.mode == "adaptive")
        s.mode = ScheduleMode::adaptive;
    else if (a.mode == "fixed")
        s.mode = ScheduleMode::fixed;
    else
        throw std::invalid_argument("mode must be fixed or adaptive");
    if (a.startup == "grid20")
        s.startup = StartupRule::grid20;
    else if (a.startup != "none")
        throw std::invalid_argument("startup must be none or grid20");
    return s;
}

void emit(const RunArgs& a, const std::string& out_dir, const RunReport& report,
          const ProxSchedule& schedule, const InstanceMeta& meta) {
    std::string stem = out_dir + "/" + a.experiment + "_" + a.method;
    std::string csv = a.csv_path.empty() ? stem + ".csv" : a.csv_path;
    std::string json = a.json_path.empty() ? stem + ".json" : a.json_path;
    save_report_csv(csv, report);
    save_report_json(json, report, schedule, meta);
    const RunRecord& last = report.epochs.back();
    std::printf("%s/%s: status=%s epochs=%zu objective=%.6g feasibility=%.3e triggers=%zu\n",
                a.experiment.c_str(), a.method.c_str(), run_status_name(report.status).c_str(),
                last.epoch, last.objective, last.feasibility, report.total_triggers);
    std::printf("report written to %s and %s\n", csv.c_str(), json.c_str());
}

MixingPlan plan_for(const RunArgs& a, std::size_t m, const std::vector<int>& flags) {
    if (!a.plan_file.empty()) {
        MixingPlan plan = load_mixing_plan(a.plan_file);
        if (plan.m != m) throw std::invalid_argument("plan block count does not match instance");
        return plan;
    }
    return solve_plan(m, flags);
}

int run_generic(const RunArgs& a, const std::string& out_dir, const BlockProblem& prob,
                const std::vector<int>& flags, const InstanceMeta& meta) {
    ProxSchedule schedule = make_schedule(a);
    std::optional<double> f_star;
    if (is_set(a.f_star)) f_star = a.f_star;

    RunReport report;
    if (a.method == "jags") {
        MixingPlan plan = plan_for(a, prob.m, flags);
        if (!is_set(a.d_max)) schedule.d_max = plan.d_max;
        report = run(prob, plan, schedule, a.max_epochs, a.tol, f_star);
    } else if (a.method == "jacobi") {
        MixingPlan plan = MixingPlan::jacobi(prob.m, flags);
        if (!is_set(a.d_max)) schedule.d_max = plan.d_max;
        report = run(prob, plan, schedule, a.max_epochs, a.tol, f_star);
    } else if (a.method == "gs") {
        if (!a.acknowledge_gs)
            throw std::invalid_argument(
                "method gs has no convergence guarantee; pass --acknowledge-gs to run it");
        MixingPlan plan = MixingPlan::jacobi(prob.m, flags);  // u unused by this rule
        if (!is_set(a.d_max)) schedule.d_max = plan.d_max;
        report = run(prob, plan, schedule, a.max_epochs, a.tol, f_star,
                     MixRule::gauss_seidel);
    } else if (a.method == "admm") {
        if (prob.m != 2)
            throw std::invalid_argument("method admm is the two-block scheme; need m = 2");
        MixingPlan plan;
        plan.m = 2;
        plan.u = {0.0, 1.0};
        plan.w = construct_w(plan.u);
        plan.lin_flags = flags;
        plan.d_max = is_set(a.d_max) ? a.d_max : 1e-6;
        schedule.d_max = plan.d_max;
        report = run(prob, plan, schedule, a.max_epochs, a.tol, f_star);
    } else if (a.method == "random") {
        if (!is_set(a.d_max)) schedule.d_max = MixingPlan::jacobi(prob.m, flags).d_max;
        report = run_random_bcu(prob, schedule, a.max_epochs, a.seed, a.tol, f_star);
    } else {
        throw std::invalid_argument("unknown method: " + a.method);
    }
    emit(a, out_dir, report, schedule, meta);
    return kOk;
}

int run_qp(RunArgs a, const std::string& out_dir) {
    fill_default(a.p, 200);
    fill_default(a.n, 2000);
    fill_default(a.m, 40);
    fill_default(a.beta, 1.0);
    fill_default(a.rho, 1.0);
    fill_default(a.d1, a.method == "jacobi" ? 1.0 : 0.5);
    fill_default(a.d_inc, 0.1);
    BlockProblem prob = gen_qp(a.p, a.n, a.m, a.seed);
    std::vector<int> flags(prob.m, 1);
    InstanceMeta meta{a.seed, "qp",
                      {{"p", double(a.p)}, {"n", double(a.n)}, {"m", double(a.m)}}};
    return run_generic(a, out_dir, prob, flags, meta);
}

int run_msvm(RunArgs a, const std::string& out_dir) {
    fill_default(a.p, 200);
    fill_default(a.n_per_class, 100);
    fill_default(a.s, 20);
    fill_default(a.sigma, 0.1);
    fill_default(a.mu, 0.001);
    fill_default(a.beta, 0.005);
    fill_default(a.rho, 0.005);
    fill_default(a.d1, a.method == "jacobi" ? 1.0 : 0.5);
    fill_default(a.d_inc, 0.1);
    MsvmInstance inst = gen_msvm(a.p, a.n_per_class, a.s, a.sigma, a.mu, a.seed);
    std::vector<int> flags(inst.prob.m, 1);
    return run_generic(a, out_dir, inst.prob, flags, inst.meta);
}

int run_custom(RunArgs a, const std::string& out_dir) {
    if (a.instance_file.empty())
        throw std::invalid_argument("custom experiment needs --instance");
    BlockProblem prob = load_block_problem(a.instance_file);
    fill_default(a.beta, 1.0);
    fill_default(a.rho, 1.0);
    fill_default(a.d1, 0.0);
    fill_default(a.d_inc, 0.1);
    std::vector<int> flags(prob.m, 1);
    InstanceMeta meta{a.seed, "custom", {}};
    return run_generic(a, out_dir, prob, flags, meta);
}

int run_pcp_cmd(RunArgs a, const std::string& out_dir) {
    fill_default(a.rows, 400);
    fill_default(a.cols, 100);
    fill_default(a.rank, 5);
    fill_default(a.sparsity, 0.05);
    fill_default(a.sample_frac, 0.3);
    fill_default(a.beta, 0.05);
    fill_default(a.rho, 0.05);
    fill_default(a.d1, a.method == "jacobi" ? 1.0 : 0.0);
    fill_default(a.d_inc, 0.01);

    PcpInstance inst = gen_pcp(a.rows, a.cols, a.rank, a.sparsity, a.sample_frac, a.seed);
    PcpOptions options;
    options.spectral = a.spectral;
    options.seed = a.seed;
    if (a.method == "jags") {
        options.method = PcpMethod::hybrid;
        MixingPlan plan = a.plan_file.empty() ? solve_plan(3, {0, 0, 0})
                                              : load_mixing_plan(a.plan_file);
        options.u = plan.u;
        if (!is_set(a.d_max)) a.d_max = plan.d_max;
    } else if (a.method == "jacobi") {
        options.method = PcpMethod::jacobi;
        if (!is_set(a.d_max)) a.d_max = 2.0;  // largest eigenvalue of E - I at m = 3
    } else if (a.method == "gs") {
        if (!a.acknowledge_gs)
            throw std::invalid_argument(
                "method gs has no convergence guarantee; pass --acknowledge-gs to run it");
        options.method = PcpMethod::gauss_seidel;
        a.mode = "fixed";
        if (!is_set(a.d_max)) a.d_max = a.d1;
    } else if (a.method == "random") {
        options.method = PcpMethod::random_block;
        if (!is_set(a.d_max)) a.d_max = 2.0;
    } else {
        throw std::invalid_argument("method " + a.method + " is not available for pcp");
    }
    options.schedule = make_schedule(a);

    std::optional<double> f_star;
    if (is_set(a.f_star)) f_star = a.f_star;
    PcpResult result = run_pcp(inst, options, a.max_epochs, a.tol, f_star);
    std::printf("recovery: rel_err_sparse=%.4e rel_err_low_rank=%.4e\n", result.rel_err_sparse,
                result.rel_err_low_rank);
    emit(a, out_dir, result.report, options.schedule, inst.meta);
    return kOk;
}

int cmd_run(RunArgs a, const std::string& out_dir) {
    if (a.experiment == "qp") return run_qp(std::move(a), out_dir);
    if (a.experiment == "pcp") return run_pcp_cmd(std::move(a), out_dir);
    if (a.experiment == "msvm") return run_msvm(std::move(a), out_dir);
    if (a.experiment == "custom") return run_custom(std::move(a), out_dir);
    throw std::invalid_argument("unknown experiment: " + a.experiment);
}

// --- divergence ------------------------------------------------------------

struct DivergenceArgs {
    std::vector<double> eps = {1e-1, 1e-2, 1e-3, 1e-4};
    double tau_start = 1.0 / 3.0;
    double tau_step = 1e-5;
    std::string output;
};

int cmd_divergence(const DivergenceArgs& args, const std::string& out_dir) {
    std::vector<DivergenceRow> rows = divergence_table(args.eps, args.tau_start, args.tau_step);
    std::string out = "eps,tau\n";
    for (const DivergenceRow& r : rows) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6e,%.6e\n", r.eps, r.tau);
        out += buf;
        std::printf("eps=%.1e  largest stable tau=%.6e\n", r.eps, r.tau);
    }
    std::string path = args.output.empty() ? out_dir + "/divergence.csv" : args.output;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << out;
    std::printf("table written to %s\n", path.c_str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid Jacobian/Gauss-Seidel proximal block coordinate solver"};
    app.require_subcommand(1);

    std::string out_dir = ".";
    app.add_option("--out-dir", out_dir, "Directory for default output paths")
        ->envname("HBCU_OUT_DIR");

    MixArgs mix_args;
    CLI::App* mix = app.add_subcommand("mix", "Solve the mixing-matrix design problem");
    mix->add_option("-m,--blocks", mix_args.m, "Number of blocks")->check(CLI::PositiveNumber);
    mix->add_option("--lin", mix_args.lin, "Linearization flags: 0, 1, or a 0/1 string");
    mix->add_option("--pin", mix_args.pins, "Pin W entry: 'i,j,value' (1-based, i > j)");
    mix->add_option("-o,--output", mix_args.output, "Plan JSON path");

    RunArgs run_args;
    CLI::App* runc = app.add_subcommand("run", "Generate an instance and run a method");
    runc->add_option("--experiment", run_args.experiment, "qp | pcp | msvm | custom");
    runc->add_option("--method", run_args.method, "jags | jacobi | gs | random | admm");
    runc->add_option("--config", run_args.config_file, "JSON config file (flags override)");
    runc->add_option("--p", run_args.p);
    runc->add_option("--n", run_args.n);
    runc->add_option("-m,--blocks", run_args.m);
    runc->add_option("--rows", run_args.rows);
    runc->add_option("--cols", run_args.cols);
    runc->add_option("--rank", run_args.rank);
    runc->add_option("--n-per-class", run_args.n_per_class);
    runc->add_option("--s", run_args.s);
    runc->add_option("--sparsity", run_args.sparsity);
    runc->add_option("--sample-frac", run_args.sample_frac);
    runc->add_option("--sigma", run_args.sigma);
    runc->add_option("--mu", run_args.mu);
    runc->add_option("--seed", run_args.seed);
    runc->add_option("--instance", run_args.instance_file, "Problem JSON (custom experiment)");
    runc->add_option("--beta", run_args.beta);
    runc->add_option("--rho", run_args.rho);
    runc->add_option("--d1", run_args.d1);
    runc->add_option("--d-inc", run_args.d_inc);
    runc->add_option("--d-max", run_args.d_max);
    runc->add_option("--eta", run_args.eta);
    runc->add_option("--mode", run_args.mode, "fixed | adaptive");
    runc->add_option("--startup", run_args.startup, "none | grid20");
    runc->add_option("--max-epochs", run_args.max_epochs);
    runc->add_option("--tol", run_args.tol);
    runc->add_option("--fstar", run_args.f_star, "Reference optimal value");
    runc->add_option("--plan", run_args.plan_file, "Mixing plan JSON");
    runc->add_flag("--acknowledge-gs", run_args.acknowledge_gs,
                   "Allow the unguaranteed Gauss-Seidel method");
    runc->add_flag("--spectral", run_args.spectral, "PCP: spectral-norm penalty on Y");
    runc->add_option("--csv", run_args.csv_path);
    runc->add_option("--json", run_args.json_path);

    DivergenceArgs div_args;
    CLI::App* div = app.add_subcommand("divergence", "Reproduce the stable-stepsize table");
    div->add_option("--eps", div_args.eps, "Perturbation values");
    div->add_option("--tau-start", div_args.tau_start)->check(CLI::PositiveNumber);
    div->add_option("--tau-step", div_args.tau_step)->check(CLI::PositiveNumber);
    div->add_option("-o,--output", div_args.output, "CSV path");

    // The config file seeds the run defaults; explicit flags then override it
    // on the second parse.
    for (int pass = 0; pass < 2; ++pass) {
        try {
            app.clear();
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            int rc = app.exit(e);
            return rc == 0 ? kOk : kConfigError;
        }
        if (pass == 0 && runc->parsed() && !run_args.config_file.empty()) {
            try {
                apply_config_file(run_args);
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                return kConfigError;
            }
            continue;
        }
        break;
    }

    try {
        if (mix->parsed()) return cmd_mix(mix_args, out_dir);
        if (runc->parsed()) return cmd_run(run_args, out_dir);
        if (div->parsed()) return cmd_divergence(div_args, out_dir);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        std::string msg = e.what();
        return msg.find("infeasible") != std::string::npos ? kInfeasible : kConfigError;
    }
    return kOk;
}
