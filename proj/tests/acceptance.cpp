// Acceptance suite: end-to-end checks of the analysis pipeline against
// closed-form scalar systems, the shear counterexample, and randomized
// property ensembles. Prints one PASS/FAIL line per criterion; the exit code
// is the number of failures.

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "issa/issa.hpp"

using namespace issa;
using nlohmann::json;

namespace {

std::string g_cli;
int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::printf("%s criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

struct CliRun {
    int exit_code;
    std::string out;
    double seconds;
};

CliRun run_cli(const std::string& args) {
    const std::string out_path = "/tmp/issa_acc_out.txt";
    const auto t0 = std::chrono::steady_clock::now();
    const int raw = std::system((g_cli + " " + args + " >" + out_path + " 2>/tmp/issa_acc_err.txt").c_str());
    const auto t1 = std::chrono::steady_clock::now();
    std::ifstream f(out_path);
    std::stringstream ss;
    ss << f.rdbuf();
    return CliRun{WEXITSTATUS(raw), ss.str(), std::chrono::duration<double>(t1 - t0).count()};
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

Matrix mat1(double v) {
    Matrix m(1, 1);
    m << v;
    return m;
}

const char* kShearFile = "/tmp/issa_acc_shear.json";
const char* kScalarEsFile = "/tmp/issa_acc_scalar_es.json";
const char* kScalarEuFile = "/tmp/issa_acc_scalar_eu.json";
const char* kScalarEsDwellFile = "/tmp/issa_acc_scalar_es_dwell.json";

void write_inputs() {
    spit(kShearFile,
         R"({"dim": 2, "tau": 0.0, "modes": [{"Z1": [[0.0,1.0],[0.0,0.0]], "Z2": [[1.0,1.0],[0.0,1.0]]}]})");
    spit(kScalarEsFile, R"({"dim": 1, "tau": 0.0, "modes": [{"Z1": [[-1.0]], "Z2": [[0.5]]}]})");
    spit(kScalarEuFile, R"({"dim": 1, "tau": 1.0, "modes": [{"Z1": [[-1.0]], "Z2": [[3.0]]}]})");
    spit(kScalarEsDwellFile, R"({"dim": 1, "tau": 1.0, "modes": [{"Z1": [[-1.0]], "Z2": [[0.5]]}]})");
}

double jnum(const json& j) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf" || s == "+inf") return kInf;
        if (s == "-inf") return -kInf;
    }
    return j.get<double>();
}

// ------------------------------------------------------------------------

void criterion_1_shear_counterexample() {
    const CliRun analyze = run_cli(std::string("analyze ") + kShearFile);
    const CliRun structure = run_cli(std::string("structure ") + kShearFile);
    bool pass = analyze.exit_code == 30 && structure.exit_code == 0;
    std::string detail;
    if (pass) {
        const json ja = json::parse(analyze.out);
        const json js = json::parse(structure.out);
        const double alpha = jnum(ja["alpha_max"]);
        const double mu = jnum(ja["mu_lo"]);
        const bool unbounded = js["jump_products"]["verdict"] == "Unbounded";
        const bool witness_is_z2 = unbounded && js["jump_products"]["witness"] == json::array({0});
        const double secs = analyze.seconds + structure.seconds;
        pass = ja["class"] == "INFINITE" && alpha == 0.0 && std::abs(mu) <= 1e-9 && unbounded && witness_is_z2 &&
               secs < 5.0;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "class=%s alpha=%g mu=%g witness=Z2^k %.2fs",
                      ja["class"].get<std::string>().c_str(), alpha, mu, secs);
        detail = buf;
    } else {
        detail = "exit codes " + std::to_string(analyze.exit_code) + "/" + std::to_string(structure.exit_code);
    }
    report(1, "shear counterexample is INFINITE with unbounded jump products", pass, detail);
}

void criterion_2_scalar_es() {
    const CliRun r = run_cli(std::string("analyze ") + kScalarEsFile);
    bool pass = r.exit_code == 0;
    std::string detail = "exit " + std::to_string(r.exit_code);
    if (pass) {
        const json j = json::parse(r.out);
        const double lo = jnum(j["lambda_lo"]), hi = jnum(j["lambda_hi"]);
        pass = j["class"] == "ES" && lo <= -1.0 && -1.0 <= hi && hi - lo <= 0.1 && r.seconds < 10.0;
        char buf[120];
        std::snprintf(buf, sizeof(buf), "lambda in [%.4f, %.4f], width %.4f, %.2fs", lo, hi, hi - lo, r.seconds);
        detail = buf;
    }
    report(2, "scalar ES interval around -1", pass, detail);
}

void criterion_3_scalar_eu() {
    const double truth = std::log(3.0) - 1.0;
    const CliRun r = run_cli(std::string("analyze ") + kScalarEuFile + " --grid 0.02 --tol 0.005");
    bool pass = r.exit_code == 10;
    std::string detail = "exit " + std::to_string(r.exit_code);
    double lo = 0, hi = 0;
    if (pass) {
        const json j = json::parse(r.out);
        lo = jnum(j["lambda_lo"]);
        hi = jnum(j["lambda_hi"]);
        pass = j["class"] == "EU" && lo <= truth + 1e-12 && truth <= hi && hi - lo <= 0.05;
    }
    const CliRun w = run_cli(std::string("witness ") + kScalarEuFile + " --grid 0.05 --periods 20");
    bool wpass = w.exit_code == 0;
    double period = 0, emp = 0;
    if (wpass) {
        const json jw = json::parse(w.out);
        period = jw["period"].get<double>();
        emp = jw["empirical_rate"].get<double>();
        wpass = period == 1.0 && std::abs(emp - truth) <= 0.01;
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "lambda in [%.5f, %.5f] (truth %.5f), witness period %g rate %.5f", lo, hi,
                  truth, period, emp);
    report(3, "scalar EU interval and period-1 witness", pass && wpass, buf);
}

void criterion_4_shift_equivariance() {
    detail::Rng rng(404);
    SearchConfig cfg;
    cfg.max_depth = 5;
    cfg.beam_width = 32;
    SearchConfig lifted_cfg;
    lifted_cfg.max_depth = 3;
    lifted_cfg.beam_width = 16;
    lifted_cfg.grid_step = 0.25;
    lifted_cfg.t_max = 3.0;

    int bad = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const bool use_lift = trial >= 40;
        const double xi = rng.uniform(-2.0, 2.0);
        WeightedSystem ws;
        const SearchConfig* c = use_lift ? &lifted_cfg : &cfg;
        if (use_lift) {
            ImpulsiveSystem sys;
            sys.dim = rng.uniform_int(1, 2);
            sys.tau = rng.uniform(0.3, 1.0);
            const int modes = rng.uniform_int(1, 2);
            for (int i = 0; i < modes; ++i)
                sys.modes.push_back(Mode{rng.matrix(sys.dim, -1, 1), rng.matrix(sys.dim, -1, 1)});
            ws = lift(sys);
        } else {
            ws.dim = rng.uniform_int(1, 4);
            const int atoms = rng.uniform_int(1, 3);
            for (int i = 0; i < atoms; ++i) ws.atoms.push_back(ExplicitAtom{rng.matrix(ws.dim, -1, 1), rng.uniform(0.4, 1.6)});
        }
        const MuResult base = mu_lower(ws, *c);
        const MuResult shifted = mu_lower(shift(ws, xi), *c);
        bool ok = true;
        if (base.value == -kInf) {
            ok = shifted.value == -kInf;
        } else {
            const double err_mu = std::abs(shifted.value - (base.value + xi));
            const double err_norm = std::abs(shifted.lambda_norm_any - (base.lambda_norm_any + xi));
            worst = std::max({worst, err_mu, err_norm});
            ok = err_mu <= 1e-9 && err_norm <= 1e-9 && base.best && shifted.best &&
                 base.best->letters.size() == shifted.best->letters.size();
            if (ok)
                for (size_t i = 0; i < base.best->letters.size(); ++i)
                    ok = ok && base.best->letters[i].atom == shifted.best->letters[i].atom &&
                         base.best->letters[i].t == shifted.best->letters[i].t;
        }
        if (!ok) ++bad;
    }
    char buf[120];
    std::snprintf(buf, sizeof(buf), "50 systems, %d violations, worst drift %.2e", bad, worst);
    report(4, "shift equivariance of search estimates, word for word", bad == 0, buf);
}

void criterion_5_bw_gap() {
    detail::Rng rng(505);
    SearchConfig cfg;
    cfg.max_depth = 12;
    cfg.node_budget = 2000000;

    int gap_bad = 0, monotone_ok = 0, done = 0;
    double worst_gap = -kInf;
    while (done < 25) {
        const int d = rng.uniform_int(2, 3);
        const int atoms = rng.uniform_int(2, 3);
        WeightedSystem ws;
        ws.dim = d;
        for (int i = 0; i < atoms; ++i) {
            Matrix a = rng.matrix(d, -1, 1);
            ws.atoms.push_back(ExplicitAtom{a / operator_norm(a), 1.0});
        }
        std::vector<Matrix> mats;
        for (const Atom& a : ws.atoms) mats.push_back(std::get<ExplicitAtom>(a).a);
        if (!is_irreducible(mats, 505 + done).irreducible) continue;
        ++done;

        const BergerWangReport rep = berger_wang_check(ws, cfg);
        const double gap12 = rep.per_depth[11].gap;
        const double gap8 = rep.per_depth[7].gap;
        worst_gap = std::max(worst_gap, gap12);
        if (!(gap12 >= -1e-9 && gap12 <= 0.15) || rep.truncated) ++gap_bad;
        if (gap12 <= gap8 + 1e-12) ++monotone_ok;
    }
    const bool pass = gap_bad == 0 && monotone_ok >= 23;  // >= 90% of 25
    char buf[140];
    std::snprintf(buf, sizeof(buf), "25 systems, worst gap %.4f, %d outside [ -1e-9, 0.15 ], monotone %d/25",
                  worst_gap, gap_bad, monotone_ok);
    report(5, "norm/spectral growth gap at depth 12", pass, buf);
}

void criterion_6_converse_lyapunov() {
    SearchConfig cfg;
    bool pass = true;
    std::string detail;

    // Scalar ES system: exactly V = |x| with c = 1 at rate 0.5.
    {
        const LyapunovResult r = build_lyapunov(lift(system_from_json(json::parse(
                                                    R"({"dim":1,"tau":0.0,"modes":[{"Z1":[[-1.0]],"Z2":[[0.5]]}]})"))),
                                                0.5, cfg, 1000);
        pass = r.ok() && r.cert->products.empty() && r.cert->c == 1.0;
        detail = "scalar: V=|x| c=1";
    }

    // Non-normal explicit contraction with stored transients.
    if (pass) {
        SearchConfig deep = cfg;
        deep.max_depth = 30;
        WeightedSystem ws;
        ws.dim = 2;
        Matrix a(2, 2);
        a << 0.5, 0.6, 0.0, 0.5;
        ws.atoms.push_back(ExplicitAtom{a, 1.0});
        const LyapunovResult r = build_lyapunov(ws, 0.2, deep, 1000);
        pass = r.ok() && !r.cert->products.empty();
        detail += r.ok() ? ", non-normal: 0 violations" : ", non-normal: FAILED";
    }

    // Random dwell-time ES systems: rate from the certified upper bound.
    if (pass) {
        detail::Rng rng(606);
        int certified = 0;
        for (int trial = 0; trial < 5 && pass; ++trial) {
            ImpulsiveSystem sys;
            sys.dim = 2;
            sys.tau = 0.5;
            sys.modes.push_back(
                Mode{-1.5 * Matrix::Identity(2, 2) + 0.3 * rng.matrix(2, -1, 1), 0.6 * rng.matrix(2, -1, 1)});
            const BoundsReport rep = lambda_bounds(sys, cfg);
            if (rep.cls != StabilityClass::ES) continue;
            ++certified;
            const double gamma = 0.5 * std::abs(rep.lambda_hi);
            const LyapunovResult r = build_lyapunov(lift(sys), gamma, cfg, 1000);
            pass = r.ok();
        }
        detail += ", random ES certified: " + std::to_string(certified);
    }
    report(6, "certified systems pass 1000-point sphere decay with zero violations", pass, detail);
}

void criterion_7_exp_norm_bound() {
    detail::Rng rng(707);
    int violations = 0;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const int d = rng.uniform_int(1, 5);
        const Matrix m = rng.matrix(d, -1, 1);
        const double t = rng.uniform(0.0, 10.0);
        const double slack = exp_norm_bound(m, t) - operator_norm(mat_exp(m, t));
        worst = std::min(worst, slack);
        if (slack < -1e-9) ++violations;
    }
    char buf[100];
    std::snprintf(buf, sizeof(buf), "1000 samples, %d violations, min slack %.2e", violations, worst);
    report(7, "exponential-norm bound dominates the true norm", violations == 0, buf);
}

void criterion_8_flow_word_agreement() {
    detail::Rng rng(808);
    int bad = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int d = rng.uniform_int(1, 4);
        ImpulsiveSystem sys;
        sys.dim = d;
        sys.tau = rng.uniform(0.0, 0.5);
        const int modes = rng.uniform_int(1, 3);
        for (int i = 0; i < modes; ++i) sys.modes.push_back(Mode{rng.matrix(d, -1, 1), rng.matrix(d, -1, 1)});
        SwitchingSignal sig;
        const int segs = rng.uniform_int(1, 5);
        for (int i = 0; i < segs; ++i)
            sig.segments.push_back(Segment{rng.uniform_int(0, modes - 1), sys.tau + rng.uniform(0.05, 1.2)});
        sig.tail_mode = 0;

        Word w = Word::empty(d);
        double t_k = 0.0;
        for (const Segment& s : sig.segments) {
            const Mode& m = sys.modes[static_cast<size_t>(s.mode)];
            w = word_extend(w, m.z2 * mat_exp(m.z1, s.duration), s.duration, Letter{s.mode, s.duration});
            t_k += s.duration;
        }
        const Matrix phi = flow(sys, sig, t_k);
        const double rel = (phi - w.product).norm() / std::max(1e-300, w.product.norm());
        worst = std::max(worst, rel);
        if (rel > 1e-9) ++bad;
    }
    char buf[100];
    std::snprintf(buf, sizeof(buf), "100 runs, %d violations, worst rel err %.2e", bad, worst);
    report(8, "flow equals the lifted word product at switching times", bad == 0, buf);
}

void criterion_9_flag_decomposition() {
    detail::Rng rng(909);
    int bad = 0;
    for (int trial = 0; trial < 25; ++trial) {
        const int d = rng.uniform_int(3, 4);
        const int cut = rng.uniform_int(1, d - 1);
        Matrix g(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
        const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
        std::vector<Matrix> mats;
        for (int m = 0; m < 2; ++m) {
            Matrix t = rng.matrix(d, -1, 1);
            t.block(cut, 0, d - cut, cut).setZero();
            mats.push_back(q * t * q.transpose());
        }
        const FlagDecomposition flag = invariant_flag(mats, 909 + trial);

        // Off-block residuals.
        double resid = 0.0;
        for (const Matrix& a : mats) {
            const Matrix t = flag.p * a * flag.p.transpose();
            Eigen::Index row = 0;
            for (size_t bi = 0; bi + 1 < flag.block_dims.size(); ++bi) {
                row += flag.block_dims[bi];
                resid = std::max(resid, t.block(row, 0, d - row, row).cwiseAbs().maxCoeff());
            }
        }

        // The planted cut must appear among the recovered cuts, as a subspace.
        bool found = false;
        int acc = 0;
        for (const int bd : flag.block_dims) {
            acc += bd;
            if (acc != cut) continue;
            const Matrix rec = flag.p.topRows(cut).transpose();  // recovered invariant basis
            const Matrix planted = q.leftCols(cut);
            Eigen::JacobiSVD<Matrix> svd(rec.transpose() * planted);
            found = svd.singularValues().minCoeff() > 1.0 - 1e-6;
        }

        // Spectrum preservation across blocks.
        double spec_err = 0.0;
        for (size_t mi = 0; mi < mats.size(); ++mi) {
            std::vector<Complex> be;
            for (const Matrix& blk : flag.blocks[mi])
                for (const Complex& ev : eigenvalues(blk).eigenvalues) be.push_back(ev);
            std::vector<Complex> fe = eigenvalues(mats[mi]).eigenvalues;
            const auto lt = [](const Complex& x, const Complex& y) {
                return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
            };
            std::sort(be.begin(), be.end(), lt);
            std::sort(fe.begin(), fe.end(), lt);
            for (size_t i = 0; i < fe.size(); ++i) spec_err = std::max(spec_err, std::abs(be[i] - fe[i]));
        }
        if (!(resid <= 1e-9 && found && spec_err <= 1e-7)) ++bad;
    }
    char buf[80];
    std::snprintf(buf, sizeof(buf), "25 planted families, %d failures", bad);
    report(9, "flag decomposition recovers planted structure", bad == 0, buf);
}

void criterion_10_continuity() {
    const std::string csv_path = "/tmp/issa_acc_perturb.csv";
    const CliRun r = run_cli(std::string("perturb ") + kScalarEsDwellFile +
                             " --eps 0.001,0.01,0.1 --trials 3 --tol 0.001 --seed 1010 --out " + csv_path);
    bool pass = r.exit_code == 0;
    std::string detail = "exit " + std::to_string(r.exit_code);
    if (pass) {
        std::ifstream f(csv_path);
        std::string line;
        std::getline(f, line);  // header
        double base_lo = 0, base_hi = 0;
        bool first = true;
        double worst_ratio = 0.0;
        while (std::getline(f, line)) {
            std::stringstream ss(line);
            std::string tok;
            std::vector<double> cols;
            while (std::getline(ss, tok, ',')) cols.push_back(std::stod(tok));
            if (first) {
                base_lo = cols[2];
                base_hi = cols[3];
                first = false;
                continue;
            }
            const double eps = cols[0];
            const double drift = std::max(std::abs(cols[2] - base_lo), std::abs(cols[3] - base_hi));
            worst_ratio = std::max(worst_ratio, drift / (5.0 * eps));
            if (drift > 5.0 * eps) pass = false;
            if (eps <= 0.01 && !(cols[3] < 0.0)) pass = false;  // classification must remain ES
        }
        char buf[100];
        std::snprintf(buf, sizeof(buf), "worst drift / (5 eps) = %.3f, base [%g, %g]", worst_ratio, base_lo,
                      base_hi);
        detail = buf;
    }
    report(10, "exponent drift under perturbation stays within 5 eps", pass, detail);
}

void criterion_11_determinism() {
    const std::vector<std::string> cmds = {
        std::string("analyze ") + kShearFile,
        std::string("structure ") + kShearFile,
        std::string("analyze ") + kScalarEsFile,
        std::string("analyze ") + kScalarEuFile + " --grid 0.02 --tol 0.005",
        std::string("witness ") + kScalarEuFile + " --grid 0.05",
        std::string("perturb ") + kScalarEsDwellFile + " --eps 0.001,0.01 --trials 2 --tol 0.002 --seed 11",
        std::string("bw-check ") + kScalarEuFile + " --depth 4 --grid 0.2 --tmax 3",
    };
    bool pass = true;
    for (const std::string& cmd : cmds) {
        const CliRun a = run_cli(cmd);
        const CliRun b = run_cli(cmd);
        if (a.out != b.out || a.exit_code != b.exit_code) pass = false;
    }
    report(11, "identical seeds produce byte-identical reports", pass,
           std::to_string(cmds.size()) + " command pairs compared");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) {
        g_cli = argv[1];
    } else {
#ifdef ISSA_CLI_PATH
        g_cli = ISSA_CLI_PATH;
#else
        std::fprintf(stderr, "usage: acceptance <path-to-issa-cli>\n");
        return 64;
#endif
    }
    write_inputs();

    criterion_1_shear_counterexample();
    criterion_2_scalar_es();
    criterion_3_scalar_eu();
    criterion_4_shift_equivariance();
    criterion_5_bw_gap();
    criterion_6_converse_lyapunov();
    criterion_7_exp_norm_bound();
    criterion_8_flow_word_agreement();
    criterion_9_flag_decomposition();
    criterion_10_continuity();
    criterion_11_determinism();

    std::printf("%s: %d/11 criteria passed\n", g_failures == 0 ? "ALL PASS" : "FAILURES", 11 - g_failures);
    return g_failures;
}
