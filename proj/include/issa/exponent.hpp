#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "issa/config.hpp"
#include "issa/matrix_ops.hpp"
#include "issa/sampling.hpp"
#include "issa/structure.hpp"
#include "issa/system.hpp"

namespace issa {

enum class StabilityClass { ES, EU, Undetermined, Infinite, MinusInfinity };

inline const char* to_string(StabilityClass c) {
    switch (c) {
        case StabilityClass::ES: return "ES";
        case StabilityClass::EU: return "EU";
        case StabilityClass::Undetermined: return "UNDETERMINED";
        case StabilityClass::Infinite: return "INFINITE";
        case StabilityClass::MinusInfinity: return "MINUS_INFINITY";
    }
    return "?";
}

/// Largest spectral abscissa over the continuous generators; always a valid
/// lower bound on the growth exponent (constant signals realize it).
inline double alpha_max(const ImpulsiveSystem& sys) {
    sys.validate();
    double a = -kInf;
    for (const Mode& m : sys.modes) a = std::max(a, spectral_abscissa(m.z1));
    return a;
}

namespace detail {

struct LetterMat {
    Matrix a;
    double weight = 0.0;
    int source = 0;
    double norm = 0.0;
    double inflate = 0.0;  // covers the half-step grid gap for family letters
};

inline void run_indexed(std::int64_t n, int workers, const std::function<void(std::int64_t)>& fn) {
    if (workers <= 1 || n < 256) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const std::int64_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::int64_t lo = w * chunk, hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (std::thread& t : pool) t.join();
}

inline WeightedSystem instantiated(const WeightedSystem& ws, const SearchConfig& cfg) {
    if (!ws.has_families()) return ws;
    double t_max = cfg.t_max;
    for (const Atom& a : ws.atoms)
        if (const auto* f = std::get_if<FlowFamily>(&a)) t_max = std::max(t_max, f->t_lo);
    return instantiate(ws, cfg.grid_step, t_max);
}

inline std::vector<LetterMat> letters_of(const WeightedSystem& inst) {
    std::vector<LetterMat> out;
    out.reserve(inst.atoms.size());
    for (size_t i = 0; i < inst.atoms.size(); ++i) {
        const auto& e = std::get<ExplicitAtom>(inst.atoms[i]);
        out.push_back(LetterMat{e.a, e.weight, inst.source_of(i), operator_norm(e.a), 0.0});
    }
    return out;
}

inline Word word_from_path(const std::vector<LetterMat>& letters, const std::vector<int>& path, int dim) {
    Word w = Word::empty(dim);
    for (const int i : path) {
        const LetterMat& l = letters[static_cast<size_t>(i)];
        w = word_extend(w, l.a, l.weight, Letter{l.source, l.weight});
    }
    return w;
}

}  // namespace detail

/// Result of the spectral lower-bound search.
struct MuResult {
    double value = -kInf;                 // best log rho(Pi) / |omega|
    std::optional<Word> best;             // word achieving `value`
    double lambda_norm_deepest = -kInf;   // max log||Pi||/|omega| over the deepest level reached
    double lambda_norm_any = -kInf;       // max log||Pi||/|omega| over every explored word
    std::int64_t explored = 0;
};

/// Best-first (beam) search for the spectral growth measure: explores words
/// of the instantiated system up to cfg.max_depth, ranking the frontier by
/// log||Pi|| / max(|omega|, eps) with deterministic lexicographic
/// tie-breaking. Every explored word with positive weight contributes
/// log rho(Pi)/|omega| as a certified lower bound (repetition argument).
inline MuResult mu_lower(const WeightedSystem& ws, const SearchConfig& cfg) {
    ws.validate();
    if (!cfg.valid()) throw std::invalid_argument("mu_lower: invalid search config");
    const double floor = NumericConfig::defaults().ratio_floor;
    const WeightedSystem inst = detail::instantiated(ws, cfg);
    const std::vector<detail::LetterMat> letters = detail::letters_of(inst);

    struct Node {
        Matrix prod;
        double weight;
        std::vector<int> path;
        double score;
    };

    MuResult res;
    std::vector<Node> beam{Node{Matrix::Identity(ws.dim, ws.dim), 0.0, {}, 0.0}};

    for (int depth = 1; depth <= cfg.max_depth && !beam.empty(); ++depth) {
        const std::int64_t n_children = static_cast<std::int64_t>(beam.size()) * static_cast<std::int64_t>(letters.size());
        if (res.explored + n_children > cfg.node_budget) break;

        struct Eval {
            Matrix prod;
            double weight, norm, score;
        };
        std::vector<Eval> evals(static_cast<size_t>(n_children));
        detail::run_indexed(n_children, cfg.workers, [&](std::int64_t idx) {
            const size_t b = static_cast<size_t>(idx) / letters.size();
            const size_t l = static_cast<size_t>(idx) % letters.size();
            Eval& e = evals[static_cast<size_t>(idx)];
            e.prod = letters[l].a * beam[b].prod;
            e.weight = beam[b].weight + letters[l].weight;
            e.norm = operator_norm(e.prod);
            e.score = std::log(e.norm) / std::max(e.weight, floor);
        });
        res.explored += n_children;

        double level_norm_best = -kInf;
        for (std::int64_t idx = 0; idx < n_children; ++idx) {
            const Eval& e = evals[static_cast<size_t>(idx)];
            if (e.weight > 0.0) {
                const double norm_ratio = std::log(e.norm) / e.weight;
                // rho <= norm, so the spectral ratio only needs evaluating
                // when the norm ratio can still improve the running bound.
                const double ratio =
                    norm_ratio > res.value ? std::log(spectral_radius(e.prod)) / e.weight : -kInf;
                res.lambda_norm_any = std::max(res.lambda_norm_any, norm_ratio);
                level_norm_best = std::max(level_norm_best, norm_ratio);
                // Strict improvement beyond float noise, so ties keep the
                // shortest (earliest) word.
                if (ratio > res.value + 1e-12) {
                    res.value = ratio;
                    const size_t b = static_cast<size_t>(idx) / letters.size();
                    std::vector<int> path = beam[b].path;
                    path.push_back(static_cast<int>(idx % static_cast<std::int64_t>(letters.size())));
                    res.best = detail::word_from_path(letters, path, ws.dim);
                }
            }
        }
        res.lambda_norm_deepest = level_norm_best;

        // Keep the beam_width best children; skip dead (zero) products.
        std::vector<std::int64_t> order;
        order.reserve(static_cast<size_t>(n_children));
        for (std::int64_t i = 0; i < n_children; ++i)
            if (evals[static_cast<size_t>(i)].norm > 0.0) order.push_back(i);
        std::sort(order.begin(), order.end(), [&](std::int64_t x, std::int64_t y) {
            const double sx = evals[static_cast<size_t>(x)].score, sy = evals[static_cast<size_t>(y)].score;
            if (sx != sy) return sx > sy;
            return x < y;  // (parent rank, letter index): lexicographic on the flat child index
        });
        if (order.size() > static_cast<size_t>(cfg.beam_width)) order.resize(static_cast<size_t>(cfg.beam_width));

        std::vector<Node> next;
        next.reserve(order.size());
        for (const std::int64_t idx : order) {
            const size_t b = static_cast<size_t>(idx) / letters.size();
            Node n;
            n.prod = evals[static_cast<size_t>(idx)].prod;
            n.weight = evals[static_cast<size_t>(idx)].weight;
            n.path = beam[b].path;
            n.path.push_back(static_cast<int>(idx % static_cast<std::int64_t>(letters.size())));
            n.score = evals[static_cast<size_t>(idx)].score;
            next.push_back(std::move(n));
        }
        beam.swap(next);
    }
    return res;
}

/// Asymptotic per-weight growth of individual atoms. Finite-weight systems
/// have no asymptotic contribution (sup over the empty set), reported as
/// -inf. Flow families are sampled at the grid end (numeric estimate) and
/// also bounded by the spectral abscissa (rigorous asymptotic bound, via the
/// exponential-norm inequality).
struct HatLambda {
    double estimate = -kInf;
    std::optional<double> asymptotic_bound;
};

inline HatLambda hat_lambda_estimate(const WeightedSystem& ws, const SearchConfig& cfg) {
    ws.validate();
    HatLambda out;
    for (const Atom& a : ws.atoms) {
        const auto* f = std::get_if<FlowFamily>(&a);
        if (!f || f->t_hi < kInf) continue;
        const double t_eval = std::max({cfg.t_max, f->t_lo, cfg.grid_step});
        out.estimate = std::max(out.estimate, std::log(operator_norm(f->at(t_eval))) / t_eval);
        const double alpha = spectral_abscissa(f->z1);
        out.asymptotic_bound = out.asymptotic_bound ? std::max(*out.asymptotic_bound, alpha) : alpha;
    }
    return out;
}

/// Certificate that the shifted system contracts blockwise, hence
/// lambda(Xi) <= xi. `rate` is the certified decay rate of the shifted
/// system and `c` the associated overshoot constant.
struct UpperCertificate {
    double xi = 0.0;
    double q = 0.0;            // block contraction threshold
    double horizon = 0.0;      // accumulated weight by which blocks must close
    double t_max = 0.0;        // grid end; analytic tail beyond it
    double rate = 0.0;         // certified decay rate of the shifted system
    double c = 1.0;
    std::int64_t blocks = 0;
    int max_block_len = 1;
};

struct CertifyFailure {
    enum class Reason { NoContraction, Budget, Tail, JumpUnbounded, Refused };
    Reason reason = Reason::NoContraction;
    std::optional<Word> offending;
    std::string detail;
};

struct CertifyResult {
    std::optional<UpperCertificate> cert;
    std::optional<CertifyFailure> failure;
    bool ok() const { return cert.has_value(); }
};

namespace detail {

// Per-letter Lipschitz inflation: |t - grid point| <= h/2 changes the shifted
// letter by at most (h/2) ||Z2|| ||Z1 - xi I|| sup ||e^{s (Z1 - xi I)}||.
inline void add_grid_inflation(std::vector<LetterMat>& letters, const WeightedSystem& shifted_inst,
                               const WeightedSystem& shifted, double h, int dim) {
    struct FamilyData {
        double alpha, norm_m, norm_z2, t_lo, t_hi;
        bool is_family = false;
    };
    std::vector<FamilyData> fams(shifted.atoms.size());
    for (size_t i = 0; i < shifted.atoms.size(); ++i) {
        if (const auto* f = std::get_if<FlowFamily>(&shifted.atoms[i])) {
            fams[i].is_family = true;
            fams[i].alpha = spectral_abscissa(f->z1);
            fams[i].norm_m = operator_norm(f->z1);
            fams[i].norm_z2 = operator_norm(f->z2);
            fams[i].t_lo = f->t_lo;
            fams[i].t_hi = f->t_hi;
        }
    }
    for (size_t i = 0; i < letters.size(); ++i) {
        const int src = shifted_inst.source_of(i);
        const FamilyData& fd = fams[static_cast<size_t>(src)];
        if (!fd.is_family) continue;
        const double lo = std::max(fd.t_lo, letters[i].weight - h / 2.0);
        const double hi = std::min(fd.t_hi, letters[i].weight + h / 2.0);
        const double sup = exp_norm_bound_sup(fd.alpha, fd.norm_m, dim, lo, std::max(lo, hi));
        letters[i].inflate = (h / 2.0) * fd.norm_z2 * fd.norm_m * sup;
    }
}

}  // namespace detail

namespace detail {

inline CertifyResult certify_at_margin(const WeightedSystem& ws, double xi, const SearchConfig& cfg, double q) {
    CertifyResult res;
    const int dim = ws.dim;
    const bool has_fams = ws.has_families();

    double t_max = cfg.t_max;
    for (const Atom& a : ws.atoms)
        if (const auto* f = std::get_if<FlowFamily>(&a)) t_max = std::max(t_max, f->t_lo + cfg.grid_step);

    const WeightedSystem shifted = shift(ws, -xi);

    for (int attempt = 0; attempt < 9; ++attempt) {
        const WeightedSystem inst = has_fams ? instantiate(shifted, cfg.grid_step, t_max) : shifted;
        std::vector<detail::LetterMat> letters = detail::letters_of(inst);
        if (has_fams) detail::add_grid_inflation(letters, inst, shifted, cfg.grid_step, dim);

        double max_weight = 0.0;
        bool zero_weight = false;
        for (const auto& l : letters) {
            max_weight = std::max(max_weight, l.weight);
            zero_weight = zero_weight || l.weight == 0.0;
        }

        if (zero_weight) {
            std::vector<Matrix> jumps;
            for (const auto& l : letters)
                if (l.weight == 0.0) jumps.push_back(l.a);
            const JumpBoundednessResult jb = jump_products_bounded(jumps, cfg);
            if (jb.verdict == JumpBoundednessResult::Verdict::Unbounded) {
                res.failure = CertifyFailure{CertifyFailure::Reason::JumpUnbounded, std::nullopt,
                                             "zero-weight products are unbounded: " + jb.detail};
                return res;
            }
        }

        double p_max = 1.0;
        std::int64_t blocks = 0;
        int max_block_len = 1;
        double horizon_used = 0.0;

        if (zero_weight) {
            // Per-letter regime: blocks degenerate to single letters.
            for (size_t i = 0; i < letters.size(); ++i) {
                if (letters[i].norm + letters[i].inflate > q) {
                    res.failure = CertifyFailure{
                        CertifyFailure::Reason::NoContraction,
                        detail::word_from_path(letters, {static_cast<int>(i)}, dim),
                        "letter (atom " + std::to_string(letters[i].source) + ", w = " +
                            std::to_string(letters[i].weight) + ") has shifted norm " +
                            std::to_string(letters[i].norm + letters[i].inflate) + " > q"};
                    return res;
                }
            }
            blocks = static_cast<std::int64_t>(letters.size());
        } else {
            // Block regime: depth-first expansion; a branch closes as soon as
            // its inflated norm reaches q, and must close before its weight
            // leaves the horizon.
            horizon_used = cfg.block_horizon;
            std::int64_t nodes = 0;
            std::vector<int> path;
            std::optional<CertifyFailure> fail;
            const std::function<void(const Matrix&, double, double, double, int)> dfs =
                [&](const Matrix& prod, double prod_norm, double weight, double infl, int len) {
                    if (fail) return;
                    for (size_t i = 0; i < letters.size() && !fail; ++i) {
                        if (++nodes > cfg.node_budget) {
                            fail = CertifyFailure{CertifyFailure::Reason::Budget, std::nullopt,
                                                  "block enumeration exceeded node budget"};
                            return;
                        }
                        const detail::LetterMat& l = letters[i];
                        const Matrix next = l.a * prod;
                        const double n = operator_norm(next);
                        const double e = (l.norm + l.inflate) * infl + l.inflate * prod_norm;
                        const double val = n + e;
                        const double w = weight + l.weight;
                        path.push_back(static_cast<int>(i));
                        if (val <= q) {
                            ++blocks;
                            max_block_len = std::max(max_block_len, len + 1);
                        } else if (w > cfg.block_horizon) {
                            fail = CertifyFailure{CertifyFailure::Reason::NoContraction,
                                                  detail::word_from_path(letters, path, dim),
                                                  "block of weight " + std::to_string(w) +
                                                      " has inflated norm " + std::to_string(val) + " > q"};
                        } else {
                            p_max = std::max(p_max, val);
                            dfs(next, n, w, e, len + 1);
                        }
                        path.pop_back();
                    }
                };
            dfs(Matrix::Identity(dim, dim), 1.0, 0.0, 0.0, 0);
            if (fail) {
                res.failure = fail;
                return res;
            }
        }

        const double round_slack = has_fams ? static_cast<double>(max_block_len) * cfg.grid_step / 2.0 : 0.0;
        const double rate = -std::log(q) / (horizon_used + max_weight + round_slack);

        // Analytic tails: require P_slack ||Z2|| b(t) e^{rate t} <= 1 and
        // decreasing for t >= t_max, where b is the exponential-norm bound of
        // the shifted generator.
        bool tail_ok = true, growable = false;
        std::string tail_msg;
        const double p_slack = std::max(1.0, p_max) * std::exp(rate * horizon_used);
        for (const TailFamily& tf : inst.tails) {
            const double nz2 = operator_norm(tf.z2);
            if (nz2 == 0.0) continue;
            const double alpha_m = spectral_abscissa(tf.z1);  // alpha(Z1) - xi
            const double norm_m = operator_norm(tf.z1);
            if (alpha_m >= 0.0) {
                res.failure = CertifyFailure{CertifyFailure::Reason::Refused, std::nullopt,
                                             "xi does not dominate the spectral abscissa; tail cannot contract"};
                return res;
            }
            if (alpha_m + rate >= 0.0) {
                tail_ok = false;
                growable = true;  // rate shrinks as t_max grows
                tail_msg = "tail rate margin too small at current t_max";
                continue;
            }
            const double log_deriv =
                alpha_m + rate + detail::poly_log_deriv(static_cast<double>(dim) * norm_m, dim, tf.t_start);
            const double value =
                p_slack * nz2 * exp_norm_bound_terms(alpha_m, norm_m, dim, tf.t_start) * std::exp(rate * tf.t_start);
            if (log_deriv > 0.0 || value > 1.0) {
                tail_ok = false;
                growable = true;
                tail_msg = "tail bound not yet below 1 / decreasing at t_max";
            }
        }

        if (tail_ok) {
            UpperCertificate cert;
            cert.xi = xi;
            cert.q = q;
            cert.horizon = horizon_used;
            cert.t_max = has_fams ? t_max : max_weight;
            cert.rate = rate;
            cert.c = std::max(1.0, p_max) * std::exp(rate * horizon_used);
            cert.blocks = blocks;
            cert.max_block_len = max_block_len;
            res.cert = cert;
            return res;
        }
        if (!growable || t_max > 1e6) {
            res.failure = CertifyFailure{CertifyFailure::Reason::Tail, std::nullopt, tail_msg};
            return res;
        }
        t_max *= 2.0;
    }
    res.failure = CertifyFailure{CertifyFailure::Reason::Tail, std::nullopt, "t_max growth exhausted"};
    return res;
}

}  // namespace detail

/// Attempts to certify lambda(Xi) <= xi by proving the system reweighted by
/// e^{-xi w} is exponentially stable:
///   * grid letters are enumerated into blocks that must contract to q before
///     their weight exceeds the horizon (norm inflated to cover grid gaps);
///   * the analytic family tail beyond t_max must decay below the claimed
///     rate (auto-increasing t_max when it does not yet);
///   * zero-weight letters (possible when tau = 0) force a per-letter regime:
///     every letter must contract on its own.
/// The contraction margin is escalated toward 1 on failure: any q < 1 yields
/// a valid (if slower) certified rate, and a looser q lets blocks close
/// sooner when the shifted letters are only marginally contractive.
inline CertifyResult certify_upper(const WeightedSystem& ws, double xi, const SearchConfig& cfg) {
    ws.validate();
    if (!cfg.valid()) throw std::invalid_argument("certify_upper: invalid search config");
    double gap = 1.0 - cfg.contraction_margin;
    CertifyResult last;
    for (int round = 0; round < 5; ++round) {
        last = detail::certify_at_margin(ws, xi, cfg, 1.0 - gap);
        if (last.ok()) return last;
        const auto reason = last.failure->reason;
        if (reason == CertifyFailure::Reason::Refused || reason == CertifyFailure::Reason::JumpUnbounded)
            return last;
        gap /= 2.0;
    }
    return last;
}

/// Two-sided exponent bounds and the resulting stability classification.
struct BoundsReport {
    double lambda_lo = -kInf;
    double lambda_hi = kInf;
    double alpha_max = -kInf;
    double mu_lo = -kInf;
    StabilityClass cls = StabilityClass::Undetermined;
    std::optional<Word> best_word;
    std::optional<UpperCertificate> certificate;
    std::string warning;
};

/// Sign rule of the growth exponent: negative certified upper bound means ES,
/// positive certified lower bound means EU; infinities pass through.
inline StabilityClass classify(const BoundsReport& r) {
    if (r.cls == StabilityClass::Infinite || r.cls == StabilityClass::MinusInfinity) return r.cls;
    if (r.lambda_hi < 0.0) return StabilityClass::ES;
    if (r.lambda_lo > 0.0) return StabilityClass::EU;
    return StabilityClass::Undetermined;
}

/// Full analysis: lower bound max(alpha_max, mu), certified upper bound by
/// bisection over certify_upper, plus the degenerate classifications
/// (jump-product unboundedness at tau = 0, identically vanishing products).
inline BoundsReport lambda_bounds(const ImpulsiveSystem& sys, const SearchConfig& cfg) {
    sys.validate();
    if (!cfg.valid()) throw std::invalid_argument("lambda_bounds: invalid search config");
    BoundsReport rep;
    rep.alpha_max = alpha_max(sys);

    bool all_jumps_zero = true;
    double max_norm_z1 = 0.0, max_norm_z2 = 0.0;
    for (const Mode& m : sys.modes) {
        all_jumps_zero = all_jumps_zero && m.z2.isZero(0.0);
        max_norm_z1 = std::max(max_norm_z1, operator_norm(m.z1));
        max_norm_z2 = std::max(max_norm_z2, operator_norm(m.z2));
    }
    if (all_jumps_zero) {
        rep.cls = StabilityClass::MinusInfinity;
        rep.lambda_lo = -kInf;
        rep.lambda_hi = -kInf;
        return rep;
    }

    bool jumps_unbounded = false;
    if (sys.tau == 0.0) {
        std::vector<Matrix> z2s;
        for (const Mode& m : sys.modes) z2s.push_back(m.z2);
        const JumpBoundednessResult jb = jump_products_bounded(z2s, cfg);
        if (jb.verdict == JumpBoundednessResult::Verdict::Unbounded) jumps_unbounded = true;
        if (jb.verdict == JumpBoundednessResult::Verdict::Unknown)
            rep.warning = "jump-product boundedness undecided; any reported upper bound is unconfirmed";
    }

    const WeightedSystem lifted = lift(sys);
    const MuResult mu = mu_lower(lifted, cfg);
    rep.mu_lo = mu.value;
    rep.best_word = mu.best;
    rep.lambda_lo = std::max(rep.alpha_max, mu.value);

    if (jumps_unbounded) {
        rep.cls = StabilityClass::Infinite;
        rep.lambda_hi = kInf;
        return rep;
    }

    // Nilpotency sweep: every product of dim letters vanishing identically
    // (kept cheap: only run when the full sweep fits a small budget).
    {
        const WeightedSystem inst = detail::instantiated(lifted, cfg);
        const size_t m = inst.atoms.size();
        double sweep = 1.0;
        for (int k = 0; k < sys.dim; ++k) sweep *= static_cast<double>(m);
        if (sweep <= 65536.0) {
            bool all_zero = true;
            std::vector<Matrix> frontier{Matrix::Identity(sys.dim, sys.dim)};
            for (int k = 0; k < sys.dim && all_zero; ++k) {
                std::vector<Matrix> next;
                next.reserve(frontier.size() * m);
                for (const Matrix& p : frontier)
                    for (const Atom& a : inst.atoms) next.push_back(std::get<ExplicitAtom>(a).a * p);
                frontier.swap(next);
            }
            for (const Matrix& p : frontier) all_zero = all_zero && p.isZero(0.0);
            if (all_zero) {
                rep.cls = StabilityClass::MinusInfinity;
                rep.lambda_lo = -kInf;
                rep.lambda_hi = -kInf;
                rep.mu_lo = -kInf;
                return rep;
            }
        }
    }

    // Upper bound: seed above any realizable growth, then bisect down.
    double hi;
    if (sys.tau > 0.0) {
        hi = rep.alpha_max + static_cast<double>(sys.dim) * max_norm_z1 +
             std::max(0.0, std::log(std::max(max_norm_z2, 1e-300))) / sys.tau + 0.5;
    } else {
        hi = (mu.lambda_norm_any > -kInf ? mu.lambda_norm_any : rep.lambda_lo) + 1.0;
    }
    hi = std::max(hi, rep.lambda_lo + 8.0 * cfg.bisect_tol);

    std::optional<UpperCertificate> best_cert;
    double step = 2.0;
    for (int k = 0; k < 5; ++k) {
        const CertifyResult cr = certify_upper(lifted, hi, cfg);
        if (cr.ok()) {
            best_cert = cr.cert;
            break;
        }
        hi += step;
        step *= 2.0;
    }
    if (!best_cert) {
        rep.lambda_hi = kInf;
        if (rep.warning.empty()) rep.warning = "upper certification failed at seed; lambda_hi unconfirmed";
        rep.cls = classify(rep);
        return rep;
    }

    double lo = rep.lambda_lo, certified = hi;
    for (int it = 0; it < 200 && certified - lo > cfg.bisect_tol; ++it) {
        const double mid = 0.5 * (lo + certified);
        const CertifyResult cr = certify_upper(lifted, mid, cfg);
        if (cr.ok()) {
            certified = mid;
            best_cert = cr.cert;
        } else {
            lo = mid;
        }
    }
    rep.lambda_hi = certified;
    rep.certificate = best_cert;
    rep.cls = classify(rep);
    return rep;
}

/// Instability witness: a periodic signal built from a word whose product has
/// spectral radius above 1, plus an initial vector in the dominant (real or
/// two-dimensional real-invariant) eigenspace and the guaranteed per-period
/// growth constant: |Phi(nT) x0| >= c rho^n |x0|.
struct EuWitness {
    SwitchingSignal signal;  // one period of segments; tail repeats the last mode
    Vector x0;
    double period = 0.0;
    double rho = 0.0;
    double growth_c = 1.0;
};

namespace detail {

// x0 and c with |M^n x0| >= c |lambda_dom|^n |x0| from the dominant
// eigenvector (real case) or the dominant real invariant plane.
inline std::pair<Vector, double> dominant_direction(const Matrix& m) {
    Eigen::EigenSolver<Matrix> es(m, true);
    if (es.info() != Eigen::Success) throw NumericalError("dominant_direction: eigen iteration failed");
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < es.eigenvalues().size(); ++i)
        if (std::abs(es.eigenvalues()(i)) > std::abs(es.eigenvalues()(best))) best = i;
    const Complex lambda = es.eigenvalues()(best);
    const double rho = std::abs(lambda);
    if (std::abs(lambda.imag()) <= 1e-12 * std::max(1.0, rho)) {
        Vector v = es.eigenvectors().col(best).real();
        if (v.norm() < 1e-12) v = es.eigenvectors().col(best).imag();
        return {v / v.norm(), 1.0};
    }
    const Vector vr = es.eigenvectors().col(best).real();
    const Vector vi = es.eigenvectors().col(best).imag();
    Matrix plane(m.rows(), 2);
    plane.col(0) = vr;
    plane.col(1) = vi;
    Eigen::JacobiSVD<Matrix> svd(plane);
    const double sigma_min = svd.singularValues()(svd.singularValues().size() - 1);
    const Vector x0 = vr / vr.norm();
    return {x0, sigma_min / vr.norm()};
}

}  // namespace detail

inline EuWitness eu_witness(const ImpulsiveSystem& sys, const Word& word) {
    sys.validate();
    if (word.letters.empty()) throw std::domain_error("eu_witness: empty word");

    // A repeated word certifies the same rate as its primitive unit; emit the
    // shortest period.
    std::vector<Letter> letters = word.letters;
    for (size_t p = 1; p <= letters.size() / 2; ++p) {
        if (letters.size() % p != 0) continue;
        bool periodic = true;
        for (size_t i = p; i < letters.size() && periodic; ++i)
            periodic = letters[i].atom == letters[i % p].atom && letters[i].t == letters[i % p].t;
        if (periodic) {
            letters.resize(p);
            break;
        }
    }

    Matrix prod = Matrix::Identity(sys.dim, sys.dim);
    double period = 0.0;
    SwitchingSignal sig;
    for (const Letter& l : letters) {
        if (l.atom < 0 || l.atom >= static_cast<int>(sys.modes.size()))
            throw std::domain_error("eu_witness: word letter does not name a mode");
        // Zero-duration letters are not realizable as switching segments;
        // nudge them and re-verify expansion below.
        const double t = l.t > 0.0 ? l.t : 1e-8;
        const Mode& m = sys.modes[static_cast<size_t>(l.atom)];
        prod = m.z2 * mat_exp(m.z1, t) * prod;
        sig.segments.push_back(Segment{l.atom, t});
        period += t;
    }
    sig.tail_mode = letters.back().atom;

    const double rho = spectral_radius(prod);
    if (!(rho > 1.0)) throw std::domain_error("eu_witness: word product has spectral radius <= 1");

    auto [x0, c] = detail::dominant_direction(prod);
    EuWitness w;
    w.signal = sig;
    w.x0 = x0;
    w.period = period;
    w.rho = rho;
    w.growth_c = c;
    return w;
}

/// Constant-signal witness for a mode whose generator has positive spectral
/// abscissa: |e^{t Z1} x0| >= c e^{alpha t} |x0| along the dominant direction.
inline EuWitness eu_witness_constant(const ImpulsiveSystem& sys, int mode) {
    sys.validate();
    if (mode < 0 || mode >= static_cast<int>(sys.modes.size()))
        throw std::domain_error("eu_witness_constant: bad mode index");
    const Matrix& z1 = sys.modes[static_cast<size_t>(mode)].z1;
    const double alpha = spectral_abscissa(z1);
    if (!(alpha > 0.0)) throw std::domain_error("eu_witness_constant: alpha(Z1) <= 0");
    // Dominant direction of e^{Z1}: same invariant plane, growth e^{alpha}.
    auto [x0, c] = detail::dominant_direction(mat_exp(z1, 1.0));
    EuWitness w;
    w.signal.tail_mode = mode;
    w.x0 = x0;
    w.period = 0.0;
    w.rho = std::exp(alpha);
    w.growth_c = c;
    return w;
}

/// Truncated converse-construction norm
///   V(x) = max over stored (Pi, w) and (I, 0) of |Pi x| e^{gamma w},
/// which contracts by e^{-gamma w} along every atom when the system is ES at
/// rate gamma.
struct LyapunovCertificate {
    double gamma = 0.0;
    std::vector<std::pair<Matrix, double>> products;  // (Pi, |omega|), identity implicit
    double c = 1.0;
};

inline double lyapunov_value(const LyapunovCertificate& cert, const Vector& x) {
    double v = x.norm();
    for (const auto& [pi, w] : cert.products) v = std::max(v, (pi * x).norm() * std::exp(cert.gamma * w));
    return v;
}

struct LyapunovResult {
    std::optional<LyapunovCertificate> cert;
    std::string failure;  // empty on success
    std::optional<int> violating_atom;
    std::optional<Vector> violating_x;
    bool ok() const { return cert.has_value(); }
};

inline LyapunovResult build_lyapunov(const WeightedSystem& ws, double gamma, const SearchConfig& cfg,
                                     int validation_samples = 1000) {
    ws.validate();
    if (!(gamma > 0.0)) throw std::invalid_argument("build_lyapunov: gamma must be > 0");
    LyapunovResult res;
    const int dim = ws.dim;
    const double slack = NumericConfig::defaults().decay_slack;

    // Tail feasibility per family: e^{gamma t} ||Z2 e^{t Z1}|| must fall and
    // stay below 1 past some grid end.
    double t_max = cfg.t_max;
    for (const Atom& a : ws.atoms)
        if (const auto* f = std::get_if<FlowFamily>(&a)) t_max = std::max(t_max, f->t_lo + cfg.grid_step);
    const WeightedSystem scaled = shift(ws, gamma);
    if (ws.has_families()) {
        for (int attempt = 0;; ++attempt) {
            bool ok = true;
            for (const Atom& a : scaled.atoms) {
                const auto* f = std::get_if<FlowFamily>(&a);
                if (!f || f->t_hi < kInf) continue;
                const double am = spectral_abscissa(f->z1);  // alpha(Z1) + gamma
                const double nz2 = operator_norm(f->z2);
                if (nz2 == 0.0) continue;
                if (am >= 0.0) {
                    res.failure = "rate gamma is not below the decay margin of a flow family";
                    return res;
                }
                const double nm = operator_norm(f->z1);
                const double deriv = am + detail::poly_log_deriv(static_cast<double>(dim) * nm, dim, t_max);
                const double value = nz2 * exp_norm_bound_terms(am, nm, dim, t_max);
                if (deriv > 0.0 || value > 1.0) ok = false;
            }
            if (ok) break;
            if (attempt >= 9 || t_max > 1e6) {
                res.failure = "tail bound did not fall below 1 within the t_max budget";
                return res;
            }
            t_max *= 2.0;
        }
    }

    SearchConfig icfg = cfg;
    icfg.t_max = t_max;
    const WeightedSystem inst = detail::instantiated(scaled, icfg);
    const std::vector<detail::LetterMat> letters = detail::letters_of(inst);
    double boost = 0.0;
    for (const auto& l : letters) boost = std::max(boost, l.norm);

    LyapunovCertificate cert;
    cert.gamma = gamma;
    std::int64_t nodes = 0;
    bool open_boundary = false, over_budget = false;
    const std::function<void(const Matrix&, double, int)> dfs = [&](const Matrix& prod, double w, int len) {
        if (over_budget) return;
        for (const auto& l : letters) {
            if (++nodes > cfg.node_budget) {
                over_budget = true;
                return;
            }
            const Matrix next = l.a * prod;  // scaled product = e^{gamma |omega|} Pi
            const double val = operator_norm(next);
            const double wn = w + l.weight;
            if (val > 1.0) {
                cert.products.emplace_back(next * std::exp(-gamma * wn), wn);
                cert.c = std::max(cert.c, val);
            }
            // Descendants can still surface iff val * boost^{remaining} > 1.
            const int remaining = cfg.max_depth - (len + 1);
            const bool can_surface =
                val > 0.0 && std::log(val) + static_cast<double>(remaining) * std::log(std::max(boost, 1e-300)) >
                                 0.0;
            if (remaining > 0 && (val > 1.0 || can_surface)) {
                dfs(next, wn, len + 1);
            } else if (remaining == 0 && val > 1.0 && boost >= 1.0) {
                open_boundary = true;
            }
            if (over_budget) return;
        }
    };
    dfs(Matrix::Identity(dim, dim), 0.0, 0);
    if (over_budget) {
        res.failure = "node budget exhausted while collecting the norm's active words";
        return res;
    }
    if (open_boundary) {
        res.failure = "depth budget exhausted before the scaled products decayed";
        return res;
    }

    // Decay validation on a deterministic sphere sample, per instantiated atom.
    const std::vector<Vector> sphere = detail::sphere_points(dim, validation_samples);
    for (size_t li = 0; li < letters.size(); ++li) {
        const Matrix unscaled = letters[li].a * std::exp(-gamma * letters[li].weight);
        const double decay = std::exp(-gamma * letters[li].weight);
        for (const Vector& x : sphere) {
            const double lhs = lyapunov_value(cert, unscaled * x);
            const double rhs = decay * lyapunov_value(cert, x) * (1.0 + slack);
            if (lhs > rhs) {
                res.failure = "decay inequality violated on the sample";
                res.violating_atom = letters[li].source;
                res.violating_x = x;
                return res;
            }
        }
    }
    res.cert = cert;
    return res;
}

/// Diagnostic comparing the norm-growth estimate of the exponent with
/// max(hat-lambda, mu): the gap is nonnegative for exhaustive exploration and
/// is expected to shrink with depth.
struct BergerWangReport {
    double mu = -kInf;
    double hat_estimate = -kInf;
    std::optional<double> hat_asymptotic;
    double lambda_norm = -kInf;  // deepest-level norm-growth estimate
    double gap = kInf;
    bool irreducible = false;
    bool truncated = false;
    struct PerDepth {
        int depth;
        double lambda_norm_at;
        double mu_upto;
        double gap;
    };
    std::vector<PerDepth> per_depth;
};

inline BergerWangReport berger_wang_check(const WeightedSystem& ws, const SearchConfig& cfg) {
    ws.validate();
    BergerWangReport rep;
    const WeightedSystem inst = detail::instantiated(ws, cfg);
    const std::vector<detail::LetterMat> letters = detail::letters_of(inst);
    const int dim = ws.dim;

    std::vector<Matrix> mats;
    for (const auto& l : letters) mats.push_back(l.a);
    rep.irreducible = is_irreducible(mats, cfg.seed).irreducible;

    const HatLambda hat = hat_lambda_estimate(ws, cfg);
    rep.hat_estimate = hat.estimate;
    rep.hat_asymptotic = hat.asymptotic_bound;

    // Exhaustive DFS (budget-guarded) tracking, per depth, the best norm
    // ratio at that depth and the best spectral ratio up to it.
    std::vector<double> norm_at(static_cast<size_t>(cfg.max_depth) + 1, -kInf);
    std::vector<double> mu_at(static_cast<size_t>(cfg.max_depth) + 1, -kInf);
    std::int64_t nodes = 0;
    const std::function<void(const Matrix&, double, int)> dfs = [&](const Matrix& prod, double w, int len) {
        if (rep.truncated || len == cfg.max_depth) return;
        for (const auto& l : letters) {
            if (++nodes > cfg.node_budget) {
                rep.truncated = true;
                return;
            }
            const Matrix next = l.a * prod;
            const double wn = w + l.weight;
            const double n = operator_norm(next);
            if (wn > 0.0) {
                const size_t lev = static_cast<size_t>(len) + 1;
                const double norm_ratio = std::log(n) / wn;
                norm_at[lev] = std::max(norm_at[lev], norm_ratio);
                // rho <= norm: the spectral ratio matters only if the norm
                // ratio beats the cumulative spectral record at this depth.
                double mu_prefix = -kInf;
                for (size_t j = 1; j <= lev; ++j) mu_prefix = std::max(mu_prefix, mu_at[j]);
                if (norm_ratio > mu_prefix)
                    mu_at[lev] = std::max(mu_at[lev], std::log(spectral_radius(next)) / wn);
            }
            if (n > 0.0) dfs(next, wn, len + 1);
            if (rep.truncated) return;
        }
    };
    dfs(Matrix::Identity(dim, dim), 0.0, 0);

    double mu_run = -kInf;
    int deepest = 0;
    for (int k = 1; k <= cfg.max_depth; ++k) {
        mu_run = std::max(mu_run, mu_at[static_cast<size_t>(k)]);
        if (norm_at[static_cast<size_t>(k)] > -kInf) deepest = k;
        rep.per_depth.push_back({k, norm_at[static_cast<size_t>(k)], mu_run,
                                 norm_at[static_cast<size_t>(k)] - std::max(rep.hat_estimate, mu_run)});
    }
    rep.mu = mu_run;
    rep.lambda_norm = deepest > 0 ? norm_at[static_cast<size_t>(deepest)] : -kInf;
    rep.gap = rep.lambda_norm - std::max(rep.hat_estimate, rep.mu);
    return rep;
}

}  // namespace issa
