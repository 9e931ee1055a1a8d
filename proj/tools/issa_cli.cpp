// issa: stability analysis of impulsive linear switched systems.
//
// Subcommands: analyze, simulate, certify, witness, structure, perturb,
// bw-check. Inputs are JSON system/signal files; reports are JSON, trajectory
// and perturbation tables are CSV. All randomized steps are seeded, so
// identical inputs produce byte-identical outputs.

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "issa/issa.hpp"

namespace {

using issa::json;

struct CommonOpts {
    issa::SearchConfig cfg;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--depth", opts.cfg.max_depth, "word search depth")->envname("ISSA_DEPTH");
    cmd->add_option("--grid", opts.cfg.grid_step, "flow-family grid step")->envname("ISSA_GRID");
    cmd->add_option("--tmax", opts.cfg.t_max, "flow-family grid end")->envname("ISSA_TMAX");
    cmd->add_option("--tol", opts.cfg.bisect_tol, "bisection tolerance")->envname("ISSA_TOL");
    cmd->add_option("--beam", opts.cfg.beam_width, "beam width of the word search")->envname("ISSA_BEAM");
    cmd->add_option("--horizon", opts.cfg.block_horizon, "certification block horizon")->envname("ISSA_HORIZON");
    cmd->add_option("--q", opts.cfg.contraction_margin, "certification contraction margin in (0,1)")
        ->envname("ISSA_Q");
    cmd->add_option("--budget", opts.cfg.node_budget, "search node budget")->envname("ISSA_BUDGET");
    cmd->add_option("--seed", opts.cfg.seed, "RNG seed")->envname("ISSA_SEED");
    cmd->add_option("--workers", opts.cfg.workers, "parallel workers")->envname("ISSA_WORKERS");
    cmd->add_option("--out", opts.out, "output file (stdout when omitted)")->envname("ISSA_OUT");
}

void emit(const std::string& out, const std::string& text) {
    if (out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out);
    if (!f) throw std::invalid_argument("cannot open for writing: " + out);
    f << text;
}

int run_analyze(const std::string& system_path, const CommonOpts& opts) {
    const issa::ImpulsiveSystem sys = issa::load_system(system_path);
    const issa::BoundsReport rep = issa::lambda_bounds(sys, opts.cfg);
    emit(opts.out, issa::report_to_json(rep).dump(2) + "\n");
    switch (rep.cls) {
        case issa::StabilityClass::ES:
        case issa::StabilityClass::MinusInfinity: return 0;
        case issa::StabilityClass::EU: return 10;
        case issa::StabilityClass::Undetermined: return 20;
        case issa::StabilityClass::Infinite: return 30;
    }
    return 20;
}

int run_simulate(const std::string& system_path, const std::string& signal_path, double dt, double horizon,
                 const std::string& x0_str, const CommonOpts& opts) {
    const issa::ImpulsiveSystem sys = issa::load_system(system_path);
    const issa::SwitchingSignal sig = issa::load_signal(signal_path, sys);
    issa::Vector x0(sys.dim);
    if (x0_str.empty()) {
        x0.setZero();
        x0(0) = 1.0;
    } else {
        std::stringstream ss(x0_str);
        std::string tok;
        int i = 0;
        while (std::getline(ss, tok, ',')) {
            if (i >= sys.dim) throw std::invalid_argument("--x0 has more entries than dim");
            x0(i++) = std::stod(tok);
        }
        if (i != sys.dim) throw std::invalid_argument("--x0 has fewer entries than dim");
    }
    const auto rows = issa::simulate(sys, sig, x0, dt, horizon);
    std::ostringstream csv;
    issa::write_trajectory_csv(csv, rows);
    emit(opts.out, csv.str());
    return 0;
}

int run_certify(const std::string& system_path, double gamma, int samples, const CommonOpts& opts) {
    const issa::ImpulsiveSystem sys = issa::load_system(system_path);
    const double amax = issa::alpha_max(sys);
    if (!(amax < 0.0)) {
        std::cerr << "certify: sup alpha(Z1) = " << amax << " is not negative\n";
        return 11;
    }
    const issa::LyapunovResult res = issa::build_lyapunov(issa::lift(sys), gamma, opts.cfg, samples);
    if (!res.ok()) {
        std::cerr << "certify: " << res.failure << "\n";
        if (res.violating_atom)
            std::cerr << "  counterexample: atom " << *res.violating_atom << ", x = ["
                      << res.violating_x->transpose() << "]\n";
        return 12;
    }
    json j = issa::certificate_to_json(*res.cert);
    j["validation"] = {{"sphere_samples", samples}, {"violations", 0}};
    emit(opts.out, j.dump(2) + "\n");
    std::cerr << "certify: rate " << gamma << " certified; " << res.cert->products.size()
              << " stored products, c = " << res.cert->c << ", " << samples
              << " sphere samples per atom, zero violations\n";
    return 0;
}

int run_witness(const std::string& system_path, const std::string& out_signal, const std::string& out_x0,
                int periods, const CommonOpts& opts) {
    const issa::ImpulsiveSystem sys = issa::load_system(system_path);
    const issa::BoundsReport rep = issa::lambda_bounds(sys, opts.cfg);

    std::optional<issa::EuWitness> witness;
    const double amax = rep.alpha_max;
    const bool word_route = rep.best_word && rep.mu_lo > 0.0;
    if (amax > 0.0 && amax >= rep.mu_lo) {
        int mode = 0;
        for (size_t i = 0; i < sys.modes.size(); ++i)
            if (issa::spectral_abscissa(sys.modes[i].z1) == amax) mode = static_cast<int>(i);
        witness = issa::eu_witness_constant(sys, mode);
    } else if (word_route) {
        witness = issa::eu_witness(sys, *rep.best_word);
    }
    if (!witness) {
        std::cerr << "witness: no expanding word or positive-abscissa mode found\n";
        return 21;
    }

    // Emitted signal: `periods` copies of the witness period (tail repeats the
    // last mode); a constant witness has no segments at all.
    issa::SwitchingSignal emitted;
    emitted.tail_mode = witness->signal.tail_mode;
    for (int p = 0; p < (witness->signal.segments.empty() ? 0 : periods); ++p)
        for (const issa::Segment& s : witness->signal.segments) emitted.segments.push_back(s);

    json jx;
    jx["x0"] = json::array();
    for (Eigen::Index i = 0; i < witness->x0.size(); ++i) jx["x0"].push_back(witness->x0(i));

    if (!out_signal.empty()) issa::write_json_file(out_signal, issa::signal_to_json(emitted));
    if (!out_x0.empty()) issa::write_json_file(out_x0, jx);

    // Self-check: empirical growth rate over `periods` periods.
    const double span = witness->period > 0.0 ? witness->period * periods : static_cast<double>(periods);
    const issa::Matrix phi = issa::flow(sys, emitted, span);
    const double rate = std::log((phi * witness->x0).norm() / witness->x0.norm()) / span;

    json j;
    j["period"] = witness->period;
    j["rho"] = witness->rho;
    j["growth_c"] = witness->growth_c;
    j["expected_rate"] = witness->period > 0.0 ? std::log(witness->rho) / witness->period : std::log(witness->rho);
    j["empirical_rate"] = rate;
    j["periods_checked"] = periods;
    j["signal"] = issa::signal_to_json(emitted);
    j["x0"] = jx["x0"];
    emit(opts.out, j.dump(2) + "\n");
    return 0;
}

int run_structure(const std::string& system_path, const CommonOpts& opts) {
    const issa::ImpulsiveSystem sys = issa::load_system(system_path);
    const issa::WeightedSystem inst = issa::instantiate(issa::lift(sys), opts.cfg.grid_step,
                                                        std::max(opts.cfg.t_max, sys.tau + opts.cfg.grid_step));
    std::vector<issa::Matrix> letters;
    for (const issa::Atom& a : inst.atoms) letters.push_back(std::get<issa::ExplicitAtom>(a).a);
    const issa::IrreducibilityResult irr = issa::is_irreducible(letters, opts.cfg.seed);
    const issa::FlagDecomposition flag = issa::invariant_flag(letters, opts.cfg.seed);
    std::vector<issa::Matrix> jumps;
    for (const issa::Mode& m : sys.modes) jumps.push_back(m.z2);
    const issa::JumpBoundednessResult jb = issa::jump_products_bounded(jumps, opts.cfg);
    emit(opts.out, issa::structure_report_to_json(flag, irr, jb).dump(2) + "\n");
    return 0;
}

int run_perturb(const std::string& system_path, const std::string& eps_list, int trials, bool fix_z2,
                const std::string& plot_path, const CommonOpts& opts) {
    const issa::ImpulsiveSystem sys = issa::load_system(system_path);
    if (sys.tau == 0.0 && !fix_z2)
        throw std::invalid_argument(
            "perturb: tau = 0 requires --fix-z2 (jump-set perturbations can flip the exponent to +inf; "
            "only the flow matrices may move)");

    std::vector<double> epss;
    {
        std::stringstream ss(eps_list);
        std::string tok;
        while (std::getline(ss, tok, ',')) epss.push_back(std::stod(tok));
        if (epss.empty()) throw std::invalid_argument("perturb: empty --eps list");
    }

    std::ostringstream csv;
    csv << "eps,d_hausdorff,lambda_lo,lambda_hi\n";
    char buf[64];
    const auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        csv << buf;
    };
    const auto row = [&](double eps, double dh, const issa::BoundsReport& rep) {
        put(eps);
        csv << ",";
        put(dh);
        csv << ",";
        put(rep.lambda_lo);
        csv << ",";
        put(rep.lambda_hi);
        csv << "\n";
    };

    const issa::BoundsReport base = issa::lambda_bounds(sys, opts.cfg);
    row(0.0, 0.0, base);

    issa::detail::Rng rng(opts.cfg.seed);
    for (const double eps : epss) {
        for (int trial = 0; trial < trials; ++trial) {
            issa::ImpulsiveSystem pert = sys;
            for (issa::Mode& m : pert.modes) {
                m.z1 += rng.matrix(sys.dim, -eps, eps);
                if (!fix_z2) m.z2 += rng.matrix(sys.dim, -eps, eps);
            }
            const issa::BoundsReport rep = issa::lambda_bounds(pert, opts.cfg);
            row(eps, issa::hausdorff_distance(sys, pert), rep);
        }
    }
    emit(opts.out, csv.str());
    if (!plot_path.empty()) {
        std::ofstream p(plot_path);
        p << "set datafile separator ','\n"
          << "set xlabel 'eps'\nset ylabel 'lambda'\nset logscale x\n"
          << "plot '" << (opts.out.empty() ? "perturb.csv" : opts.out)
          << "' every ::1 using 1:3 title 'lambda_lo', '' every ::1 using 1:4 title 'lambda_hi'\n";
    }
    return 0;
}

int run_bw_check(const std::string& path, const CommonOpts& opts) {
    const json j = issa::detail::parse_file(path);
    issa::WeightedSystem ws;
    if (j.contains("modes"))
        ws = issa::lift(issa::system_from_json(j));
    else
        ws = issa::weighted_from_json(j);
    const issa::BergerWangReport rep = issa::berger_wang_check(ws, opts.cfg);
    if (!rep.irreducible)
        std::cerr << "bw-check: warning: system not verified irreducible; the gap identity may fail\n";
    json out;
    out["mu"] = issa::detail::real_to_json(rep.mu);
    out["hat_estimate"] = issa::detail::real_to_json(rep.hat_estimate);
    if (rep.hat_asymptotic) out["hat_asymptotic_bound"] = *rep.hat_asymptotic;
    out["lambda_norm"] = issa::detail::real_to_json(rep.lambda_norm);
    out["gap"] = issa::detail::real_to_json(rep.gap);
    out["irreducible"] = rep.irreducible;
    out["truncated"] = rep.truncated;
    out["per_depth"] = json::array();
    for (const auto& pd : rep.per_depth)
        out["per_depth"].push_back({{"depth", pd.depth},
                                    {"lambda_norm_at", issa::detail::real_to_json(pd.lambda_norm_at)},
                                    {"mu_upto", issa::detail::real_to_json(pd.mu_upto)},
                                    {"gap", issa::detail::real_to_json(pd.gap)}});
    emit(opts.out, out.dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stability analysis for impulsive linear switched systems"};
    app.require_subcommand(1);

    std::string system_path, signal_path, x0_str, eps_list = "0.01", out_signal, out_x0, plot_path;
    double dt = 0.01, horizon = 10.0, gamma = 0.1;
    int samples = 1000, periods = 20, trials = 5;
    bool fix_z2 = false;

    CommonOpts o_analyze, o_simulate, o_certify, o_witness, o_structure, o_perturb, o_bw;

    CLI::App* c_analyze = app.add_subcommand("analyze", "exponent bounds and stability classification");
    c_analyze->add_option("system", system_path, "system JSON file")->required();
    add_common(c_analyze, o_analyze);

    CLI::App* c_simulate = app.add_subcommand("simulate", "sample a trajectory along a switching signal");
    c_simulate->add_option("system", system_path, "system JSON file")->required();
    c_simulate->add_option("signal", signal_path, "signal JSON file")->required();
    c_simulate->add_option("--dt", dt, "sample step")->required();
    c_simulate->add_option("--T", horizon, "time horizon")->required();
    c_simulate->add_option("--x0", x0_str, "initial state, comma separated (default e1)");
    add_common(c_simulate, o_simulate);

    CLI::App* c_certify = app.add_subcommand("certify", "build and validate a decay-certificate norm");
    c_certify->add_option("system", system_path, "system JSON file")->required();
    c_certify->add_option("--gamma", gamma, "decay rate to certify")->required()->check(CLI::PositiveNumber);
    c_certify->add_option("--samples", samples, "sphere validation samples per atom");
    add_common(c_certify, o_certify);

    CLI::App* c_witness = app.add_subcommand("witness", "construct an instability witness signal");
    c_witness->add_option("system", system_path, "system JSON file")->required();
    c_witness->add_option("--out-signal", out_signal, "write the witness signal JSON here");
    c_witness->add_option("--out-x0", out_x0, "write the witness initial state JSON here");
    c_witness->add_option("--periods", periods, "periods for the emitted signal and the self-check");
    add_common(c_witness, o_witness);

    CLI::App* c_structure = app.add_subcommand("structure", "invariant flag, irreducibility, jump products");
    c_structure->add_option("system", system_path, "system JSON file")->required();
    add_common(c_structure, o_structure);

    CLI::App* c_perturb = app.add_subcommand("perturb", "exponent drift under random mode perturbations");
    c_perturb->add_option("system", system_path, "system JSON file")->required();
    c_perturb->add_option("--eps", eps_list, "comma-separated perturbation sizes");
    c_perturb->add_option("--trials", trials, "trials per perturbation size");
    c_perturb->add_flag("--fix-z2", fix_z2, "perturb only the flow matrices (required when tau = 0)");
    c_perturb->add_option("--plot", plot_path, "also write a gnuplot script here");
    add_common(c_perturb, o_perturb);

    CLI::App* c_bw = app.add_subcommand("bw-check", "norm-growth vs spectral-growth gap diagnostic");
    c_bw->add_option("system", system_path, "system or weighted-system JSON file")->required();
    add_common(c_bw, o_bw);

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_analyze->parsed()) return run_analyze(system_path, o_analyze);
        if (c_simulate->parsed()) return run_simulate(system_path, signal_path, dt, horizon, x0_str, o_simulate);
        if (c_certify->parsed()) return run_certify(system_path, gamma, samples, o_certify);
        if (c_witness->parsed()) return run_witness(system_path, out_signal, out_x0, periods, o_witness);
        if (c_structure->parsed()) return run_structure(system_path, o_structure);
        if (c_perturb->parsed()) return run_perturb(system_path, eps_list, trials, fix_z2, plot_path, o_perturb);
        if (c_bw->parsed()) return run_bw_check(system_path, o_bw);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
