#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

std::string bin() { return std::string(CLI_BINARY); }

int run_cmd(const std::string& args) {
    std::string cmd = bin() + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

// CSV with the per-epoch timing column blanked out, so reruns compare equal.
std::string strip_seconds(const std::string& csv) {
    std::string out;
    for (const std::string& line : lines_of(csv)) {
        std::size_t cut = line.rfind(',');
        out += line.substr(0, cut);
        out += '\n';
    }
    return out;
}

struct TempDir {
    std::string path;
    TempDir() {
        char tmpl[] = "/tmp/hbcu_cli_XXXXXX";
        path = mkdtemp(tmpl);
    }
    ~TempDir() { std::system(("rm -rf " + path).c_str()); }
};

}  // namespace

TEST_CASE("mix subcommand writes a plan and reports infeasible pins") {
    TempDir dir;
    std::string plan = dir.path + "/plan.json";
    CHECK(run_cmd("mix -m 3 --lin 1 -o " + plan) == 0);
    std::string text = slurp(plan);
    CHECK(text.find("\"w\"") != std::string::npos);

    // Forcing the strictly-lower triangle to zero (plain Gauss-Seidel) has
    // no admissible mixing matrix for three blocks.
    int rc = run_cmd("mix -m 3 --lin 1 --pin 2,1,0 --pin 3,1,0 --pin 3,2,0 -o " + plan);
    CHECK(rc == 3);

    // Malformed pin spec is a configuration error.
    CHECK(run_cmd("mix -m 3 --lin 1 --pin 1,2,0 -o " + plan) == 2);
}

TEST_CASE("bad run configuration exits with code 2") {
    TempDir dir;
    CHECK(run_cmd("--out-dir " + dir.path + " run --experiment qp --method nosuch") == 2);
    CHECK(run_cmd("--out-dir " + dir.path + " run --experiment nosuch") == 2);
    // gs without the acknowledgement flag is refused.
    CHECK(run_cmd("--out-dir " + dir.path
                  + " run --experiment qp --p 6 --n 12 -m 3 --method gs --max-epochs 2")
          == 2);
    // admm needs exactly two blocks.
    CHECK(run_cmd("--out-dir " + dir.path
                  + " run --experiment qp --p 6 --n 12 -m 3 --method admm --max-epochs 2")
          == 2);
}

TEST_CASE("run with max-epochs 0 emits a header-only CSV") {
    TempDir dir;
    std::string csv = dir.path + "/out.csv";
    CHECK(run_cmd("--out-dir " + dir.path
                  + " run --experiment qp --p 4 --n 16 -m 2 --method jacobi --max-epochs 0 --csv "
                  + csv)
          == 0);
    std::vector<std::string> got = lines_of(slurp(csv));
    REQUIRE(got.size() == 1);
    CHECK(got[0] == "epoch,objective,obj_gap,feasibility,d_k,triggers,seconds");
}

TEST_CASE("identical configurations give identical CSVs apart from timing") {
    TempDir dir;
    std::string base = "--out-dir " + dir.path
                       + " run --experiment qp --p 5 --n 16 -m 2 --method jags --mode adaptive"
                         " --d1 0.5 --d-inc 0.1 --max-epochs 15 --seed 7 --csv ";
    CHECK(run_cmd(base + dir.path + "/a.csv") == 0);
    CHECK(run_cmd(base + dir.path + "/b.csv") == 0);
    std::string a = strip_seconds(slurp(dir.path + "/a.csv"));
    std::string b = strip_seconds(slurp(dir.path + "/b.csv"));
    CHECK(a == b);
    CHECK(lines_of(a).size() == 16);  // header + 15 epochs
}

TEST_CASE("run writes a JSON report next to the CSV") {
    TempDir dir;
    CHECK(run_cmd("--out-dir " + dir.path
                  + " run --experiment qp --p 4 --n 16 -m 2 --method jacobi --max-epochs 3")
          == 0);
    std::string text = slurp(dir.path + "/qp_jacobi.json");
    CHECK(text.find("\"status\"") != std::string::npos);
    CHECK(text.find("\"epochs\"") != std::string::npos);
    CHECK(slurp(dir.path + "/qp_jacobi.csv").find("epoch,") == 0);
}

TEST_CASE("config file supplies defaults and flags override it") {
    TempDir dir;
    std::string cfg = dir.path + "/cfg.json";
    {
        std::ofstream out(cfg);
        out << "{\"experiment\":\"qp\",\"method\":\"jacobi\",\"p\":4,\"n\":16,"
               "\"m\":2,\"max_epochs\":4,\"seed\":11}";
    }
    CHECK(run_cmd("--out-dir " + dir.path + " run --config " + cfg + " --csv " + dir.path
                  + "/c.csv")
          == 0);
    CHECK(lines_of(slurp(dir.path + "/c.csv")).size() == 5);
    // Override the epoch budget on the command line.
    CHECK(run_cmd("--out-dir " + dir.path + " run --config " + cfg + " --max-epochs 2 --csv "
                  + dir.path + "/d.csv")
          == 0);
    CHECK(lines_of(slurp(dir.path + "/d.csv")).size() == 3);
}

TEST_CASE("divergence subcommand writes one row per eps") {
    TempDir dir;
    std::string csv = dir.path + "/div.csv";
    CHECK(run_cmd("divergence --eps 0.1 --tau-start 0.2 --tau-step 0.01 -o " + csv) == 0);
    std::vector<std::string> got = lines_of(slurp(csv));
    REQUIRE(got.size() == 2);
    CHECK(got[0] == "eps,tau");
    double eps = 0.0, tau = 0.0;
    CHECK(std::sscanf(got[1].c_str(), "%lf,%lf", &eps, &tau) == 2);
    CHECK(eps == doctest::Approx(0.1));
    // tau-start 0.2 is above the 0.1455 threshold; the 0.01 grid settles at 0.14.
    CHECK(tau == doctest::Approx(0.14));
}
