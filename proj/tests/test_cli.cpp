#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace {

using nlohmann::json;

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

RunResult run_cli(const std::string& args) {
    const std::string out_path = "/tmp/issa_cli_test_out.txt";
    const std::string err_path = "/tmp/issa_cli_test_err.txt";
    const std::string cmd = std::string(ISSA_CLI_PATH) + " " + args + " >" + out_path + " 2>" + err_path;
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WEXITSTATUS(raw);
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

const char* kScalarEs = R"({"dim": 1, "tau": 0.0, "modes": [{"Z1": [[-1.0]], "Z2": [[0.5]]}]})";
const char* kShear = R"({"dim": 2, "tau": 0.0,
  "modes": [{"Z1": [[0.0,1.0],[0.0,0.0]], "Z2": [[1.0,1.0],[0.0,1.0]]}]})";

}  // namespace

TEST_CASE("analyze: exit codes match the classification") {
    spit("/tmp/issa_sys_es.json", kScalarEs);
    const RunResult es = run_cli("analyze /tmp/issa_sys_es.json");
    CHECK(es.exit_code == 0);
    const json jes = json::parse(es.out);
    CHECK(jes["class"] == "ES");

    spit("/tmp/issa_sys_shear.json", kShear);
    const RunResult inf = run_cli("analyze /tmp/issa_sys_shear.json");
    CHECK(inf.exit_code == 30);
    CHECK(json::parse(inf.out)["class"] == "INFINITE");
}

TEST_CASE("analyze: malformed input exits 2 with diagnostics") {
    spit("/tmp/issa_sys_bad.json", R"({"dim": 2, "tau": 0.0, "modes": [{"Z1": [[0.0]], "Z2": [[1.0]]}]})");
    const RunResult bad = run_cli("analyze /tmp/issa_sys_bad.json");
    CHECK(bad.exit_code == 2);
    CHECK(bad.err.find("mode 0") != std::string::npos);

    spit("/tmp/issa_sys_nojson.json", "not json at all {");
    CHECK(run_cli("analyze /tmp/issa_sys_nojson.json").exit_code == 2);

    CHECK(run_cli("analyze /tmp/issa_does_not_exist.json").exit_code == 2);
}

TEST_CASE("simulate: dwell-time violations name the segment") {
    spit("/tmp/issa_sys_eu.json", R"({"dim": 1, "tau": 1.0, "modes": [{"Z1": [[-1.0]], "Z2": [[3.0]]}]})");
    spit("/tmp/issa_sig_bad.json",
         R"({"segments": [{"mode": 0, "duration": 1.5}, {"mode": 0, "duration": 0.2}], "tail_mode": 0})");
    const RunResult r = run_cli("simulate /tmp/issa_sys_eu.json /tmp/issa_sig_bad.json --dt 0.1 --T 2");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("segment 1") != std::string::npos);

    spit("/tmp/issa_sig_ok.json", R"({"segments": [{"mode": 0, "duration": 1.0}], "tail_mode": 0})");
    const RunResult ok = run_cli("simulate /tmp/issa_sys_eu.json /tmp/issa_sig_ok.json --dt 0.5 --T 2 --x0 1");
    CHECK(ok.exit_code == 0);
    CHECK(ok.out.find("t,x1,norm") != std::string::npos);
}

TEST_CASE("certify: exit codes for precondition and decay failures") {
    spit("/tmp/issa_sys_es.json", kScalarEs);
    CHECK(run_cli("certify /tmp/issa_sys_es.json --gamma 0.5").exit_code == 0);

    // alpha(Z1) = 0: precondition violated.
    spit("/tmp/issa_sys_alpha0.json", R"({"dim": 1, "tau": 0.0, "modes": [{"Z1": [[0.0]], "Z2": [[0.5]]}]})");
    CHECK(run_cli("certify /tmp/issa_sys_alpha0.json --gamma 0.1").exit_code == 11);

    // Stable flow, expanding jumps at tau = 0: decay at the requested rate fails.
    spit("/tmp/issa_sys_baddecay.json", R"({"dim": 1, "tau": 0.0, "modes": [{"Z1": [[-0.1]], "Z2": [[3.0]]}]})");
    CHECK(run_cli("certify /tmp/issa_sys_baddecay.json --gamma 0.5").exit_code == 12);
}

TEST_CASE("witness: EU systems yield a signal, ES systems exit 21") {
    spit("/tmp/issa_sys_eu.json", R"({"dim": 1, "tau": 1.0, "modes": [{"Z1": [[-1.0]], "Z2": [[3.0]]}]})");
    const RunResult r = run_cli("witness /tmp/issa_sys_eu.json --grid 0.05");
    CHECK(r.exit_code == 0);
    const json j = json::parse(r.out);
    CHECK(j["period"].get<double>() == 1.0);
    CHECK(std::abs(j["empirical_rate"].get<double>() - (std::log(3.0) - 1.0)) < 0.01);

    spit("/tmp/issa_sys_es.json", kScalarEs);
    CHECK(run_cli("witness /tmp/issa_sys_es.json").exit_code == 21);
}

TEST_CASE("perturb: tau = 0 with a movable jump set is rejected") {
    spit("/tmp/issa_sys_es.json", kScalarEs);
    const RunResult r = run_cli("perturb /tmp/issa_sys_es.json --eps 0.01 --trials 1");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("fix-z2") != std::string::npos);
    CHECK(run_cli("perturb /tmp/issa_sys_es.json --eps 0.01 --trials 1 --fix-z2").exit_code == 0);
}

TEST_CASE("structure and bw-check emit reports") {
    spit("/tmp/issa_sys_shear.json", kShear);
    const RunResult s = run_cli("structure /tmp/issa_sys_shear.json");
    CHECK(s.exit_code == 0);
    const json js = json::parse(s.out);
    CHECK(js["jump_products"]["verdict"] == "Unbounded");

    spit("/tmp/issa_sys_es.json", kScalarEs);
    const RunResult b = run_cli("bw-check /tmp/issa_sys_es.json --depth 4");
    CHECK(b.exit_code == 0);
    CHECK(json::parse(b.out).contains("gap"));
}

TEST_CASE("identical seeds give byte-identical reports") {
    spit("/tmp/issa_sys_eu.json", R"({"dim": 1, "tau": 1.0, "modes": [{"Z1": [[-1.0]], "Z2": [[3.0]]}]})");
    const RunResult a = run_cli("analyze /tmp/issa_sys_eu.json --seed 7 --workers 1");
    const RunResult b = run_cli("analyze /tmp/issa_sys_eu.json --seed 7 --workers 1");
    CHECK(a.out == b.out);
    const RunResult c = run_cli("analyze /tmp/issa_sys_eu.json --seed 7 --workers 2");
    CHECK(a.out == c.out);  // worker count must not change results
}
