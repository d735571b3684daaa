#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "support/instances.hpp"

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

RunResult run(const std::string& args, const std::string& env = "") {
    const std::string out_path = "cli_stdout.tmp";
    const std::string err_path = "cli_stderr.tmp";
    std::string cmd = env;
    if (!env.empty()) cmd += " ";
    cmd += std::string(VOLCAL_BIN) + " " + args + " > " + out_path + " 2> " +
           err_path;
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.code = (raw >= 0 && WIFEXITED(raw)) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    std::remove(out_path.c_str());
    std::remove(err_path.c_str());
    return r;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    os << text;
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p, const std::string& text)
        : path(std::move(p)) {
        write_file(path, text);
    }
    ~TempFile() { std::remove(path.c_str()); }
};

std::string good_quotes_csv() {
    // smooth strictly-convex quotes: passes every printed spread check
    auto qs = testsupport::make_bachelier_quoteset(
        100.0, 20.0, 0.25, {70, 80, 90, 100, 110, 120, 130}, 0.002);
    return testsupport::quotes_to_csv(qs);
}

}  // namespace

TEST_CASE("check passes clean quotes with exit 0", "[cli]") {
    TempFile quotes("cli_good.csv", good_quotes_csv());
    const auto r = run("check " + quotes.path);
    CHECK(r.code == 0);
    CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("check fails violating quotes with exit 1 and writes csv", "[cli]") {
    TempFile quotes("cli_bad.csv", testsupport::quotes_to_csv(
                                       testsupport::make_butterfly_violation()));
    const auto r = run("check " + quotes.path + " --csv cli_report.csv");
    CHECK(r.code == 1);
    CHECK(r.out.find("FAIL") != std::string::npos);
    const auto report = slurp("cli_report.csv");
    CHECK(report.rfind("kind,slice,slice1,slice2,k_lo,k_mid,k_hi,value,pass",
                       0) == 0);
    CHECK(report.find("butterfly") != std::string::npos);
    std::remove("cli_report.csv");
}

TEST_CASE("usage errors exit with 2", "[cli]") {
    CHECK(run("definitely-not-a-command").code == 2);
    CHECK(run("check").code == 2);                    // missing argument
    CHECK(run("check no_such_file.csv").code == 2);   // unreadable input
    CHECK(run("smile no_such_surface.bin").code == 2);
    TempFile empty("cli_empty.csv", "");
    CHECK(run("check " + empty.path).code == 2);      // parse error
    TempFile crossed("cli_crossed.csv",
                     "spot,100\nmaturity,strike,bid,ask\n0.25,100,4.3,4.1\n");
    CHECK(run("check " + crossed.path).code == 2);    // validation error
    TempFile ok("cli_ok.csv", good_quotes_csv());
    CHECK(run("check " + ok.path + " --lambda -3").code == 2);
}

TEST_CASE("fit-prior reports the fitted width", "[cli]") {
    TempFile quotes("cli_fit.csv", good_quotes_csv());
    const auto r = run("fit-prior " + quotes.path);
    CHECK(r.code == 0);
    CHECK(r.out.find("sigma0") != std::string::npos);
    // generator width 20 should be visible in the output
    CHECK(r.out.find("20") != std::string::npos);
}

TEST_CASE("calibrate, smile and export-trace form a pipeline", "[cli]") {
    TempFile quotes("cli_pipe.csv", good_quotes_csv());
    const auto cal = run("calibrate " + quotes.path + " -o cli_surface.bin");
    INFO(cal.err);
    CHECK(cal.code == 0);

    const auto smile =
        run("smile cli_surface.bin --k-lo 85 --k-hi 115 --k-n 7");
    CHECK(smile.code == 0);
    CHECK(smile.out.rfind("strike,price,implied_vol", 0) == 0);
    std::size_t lines = 0;
    for (char c : smile.out)
        if (c == '\n') ++lines;
    CHECK(lines == 8);  // header + 7 strikes

    const auto smile_file =
        run("smile cli_surface.bin --all-maturities -o cli_smile.csv");
    CHECK(smile_file.code == 0);
    CHECK(slurp("cli_smile.csv").rfind("maturity,strike,price,implied_vol",
                                       0) == 0);
    std::remove("cli_smile.csv");

    const auto trace = run("export-trace cli_surface.bin -o .");
    CHECK(trace.code == 0);
    bool have_trace = false;
    for (int i = 0; i < 4; ++i) {
        const std::string name = "trace_slice" + std::to_string(i) + ".csv";
        std::ifstream f(name);
        if (f.good()) {
            have_trace = true;
            const auto text = slurp(name);
            CHECK(text.rfind("iter,G,grad_inf", 0) == 0);
            std::remove(name.c_str());
        }
    }
    CHECK(have_trace);

    // a json output path round-trips through the same pipeline
    const auto cal_json =
        run("calibrate " + quotes.path + " -o cli_surface.json");
    CHECK(cal_json.code == 0);
    const auto smile_json = run("smile cli_surface.json --k-n 3");
    CHECK(smile_json.code == 0);
    std::remove("cli_surface.json");
    std::remove("cli_surface.bin");
}

TEST_CASE("martingale-degenerate quotes exit with 3", "[cli]") {
    TempFile quotes("cli_degen.csv", testsupport::quotes_to_csv(
                                         testsupport::make_degenerate_quoteset()));
    const auto r = run("calibrate " + quotes.path + " -o cli_degen.bin");
    CHECK(r.code == 3);
    CHECK(r.err.find("arbitrage") != std::string::npos);
    std::remove("cli_degen.bin");
}

TEST_CASE("print-config shows defaults and overrides", "[cli]") {
    const auto base = run("--print-config");
    CHECK(base.code == 0);
    CHECK(base.out.find("lambda=0.1") != std::string::npos);
    CHECK(base.out.find("grid_n=200") != std::string::npos);

    const auto flag = run("--lambda 0.2 --print-config");
    CHECK(flag.code == 0);
    CHECK(flag.out.find("lambda=0.2") != std::string::npos);
}

TEST_CASE("config file merges under explicit flags", "[cli]") {
    TempFile cfg("cli_cfg.txt",
                 "# test config\nlambda = 0.3\ngrid_n = 64\n");
    const auto from_file = run("--config " + cfg.path + " --print-config");
    CHECK(from_file.code == 0);
    CHECK(from_file.out.find("lambda=0.3") != std::string::npos);
    CHECK(from_file.out.find("grid_n=64") != std::string::npos);

    // explicit flag wins over the file
    const auto mixed =
        run("--config " + cfg.path + " --lambda 0.5 --print-config");
    CHECK(mixed.code == 0);
    CHECK(mixed.out.find("lambda=0.5") != std::string::npos);
    CHECK(mixed.out.find("grid_n=64") != std::string::npos);

    // the environment variable is the fallback source
    const auto env = run("--print-config", "VOLCAL_CONFIG=" + cfg.path);
    CHECK(env.code == 0);
    CHECK(env.out.find("lambda=0.3") != std::string::npos);

    // unknown keys are rejected
    TempFile bad("cli_cfg_bad.txt", "no_such_key=1\n");
    CHECK(run("--config " + bad.path + " --print-config").code == 2);
}
