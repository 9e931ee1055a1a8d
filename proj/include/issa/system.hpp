#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "issa/matrix_ops.hpp"

namespace issa {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// One mode of an impulsive switched system: continuous generator Z1 and
/// jump matrix Z2 applied at the end of the mode's dwell interval.
struct Mode {
    Matrix z1;
    Matrix z2;
};

/// Finite-mode impulsive linear switched system with dwell time tau:
/// between switches the state flows along xdot = Z1 x, and at each switch
/// the state jumps through Z2 of the expiring mode.
struct ImpulsiveSystem {
    int dim = 0;
    double tau = 0.0;
    std::vector<Mode> modes;

    void validate() const {
        if (dim <= 0) throw std::invalid_argument("system: dim must be positive");
        if (!(tau >= 0.0)) throw std::invalid_argument("system: tau must be >= 0");
        if (modes.empty()) throw std::invalid_argument("system: mode list is empty");
        for (size_t i = 0; i < modes.size(); ++i) {
            const Mode& m = modes[i];
            if (m.z1.rows() != dim || m.z1.cols() != dim)
                throw std::invalid_argument("system: mode " + std::to_string(i) + ": Z1 is not " +
                                            std::to_string(dim) + "x" + std::to_string(dim));
            if (m.z2.rows() != dim || m.z2.cols() != dim)
                throw std::invalid_argument("system: mode " + std::to_string(i) + ": Z2 is not " +
                                            std::to_string(dim) + "x" + std::to_string(dim));
            if (!m.z1.allFinite() || !m.z2.allFinite())
                throw std::invalid_argument("system: mode " + std::to_string(i) + ": non-finite entries");
        }
    }
};

struct Segment {
    int mode = 0;
    double duration = 0.0;
};

/// Piecewise-constant switching signal: finitely many dwell segments, each
/// ending in the jump of its mode, followed by a tail mode that flows forever.
struct SwitchingSignal {
    std::vector<Segment> segments;
    int tail_mode = 0;

    double total_duration() const {
        double t = 0.0;
        for (const Segment& s : segments) t += s.duration;
        return t;
    }
};

inline void validate_signal(const ImpulsiveSystem& sys, const SwitchingSignal& sig) {
    const int n = static_cast<int>(sys.modes.size());
    for (size_t i = 0; i < sig.segments.size(); ++i) {
        const Segment& s = sig.segments[i];
        if (s.mode < 0 || s.mode >= n)
            throw std::invalid_argument("signal: segment " + std::to_string(i) + ": mode index " +
                                        std::to_string(s.mode) + " out of range");
        if (s.duration < sys.tau)
            throw std::invalid_argument("signal: segment " + std::to_string(i) + ": duration " +
                                        std::to_string(s.duration) + " below dwell time " +
                                        std::to_string(sys.tau));
        if (sys.tau == 0.0 && !(s.duration > 0.0))
            throw std::invalid_argument("signal: segment " + std::to_string(i) +
                                        ": duration must be positive when tau = 0");
    }
    if (sig.tail_mode < 0 || sig.tail_mode >= n)
        throw std::invalid_argument("signal: tail mode index out of range");
}

/// Flow matrix Phi(t, 0) of the system along the given signal. The state is
/// right-continuous: at a switching time the jump has already been applied.
inline Matrix flow(const ImpulsiveSystem& sys, const SwitchingSignal& sig, double t) {
    sys.validate();
    validate_signal(sys, sig);
    if (t < 0.0) throw std::domain_error("flow: t must be >= 0");

    Matrix phi = Matrix::Identity(sys.dim, sys.dim);
    double cursor = 0.0;
    for (const Segment& s : sig.segments) {
        const Mode& m = sys.modes[static_cast<size_t>(s.mode)];
        const double t_end = cursor + s.duration;
        if (t < t_end) return mat_exp(m.z1, t - cursor) * phi;
        phi = m.z2 * (mat_exp(m.z1, s.duration) * phi);
        if (!phi.allFinite()) throw OverflowError("flow: state transition overflowed");
        cursor = t_end;
    }
    const Mode& tail = sys.modes[static_cast<size_t>(sig.tail_mode)];
    Matrix out = mat_exp(tail.z1, t - cursor) * phi;
    if (!out.allFinite()) throw OverflowError("flow: state transition overflowed");
    return out;
}

/// Weighted-system atom: either a concrete (A, w) pair or a one-parameter
/// family (Z2 e^{t Z1}, t) for t in [t_lo, t_hi].
struct ExplicitAtom {
    Matrix a;
    double weight = 0.0;
};

struct FlowFamily {
    Matrix z1;
    Matrix z2;
    double t_lo = 0.0;
    double t_hi = kInf;

    Matrix at(double t) const { return z2 * mat_exp(z1, t); }
};

using Atom = std::variant<ExplicitAtom, FlowFamily>;

/// Analytic description of the un-gridded remainder (t > t_start) of a flow
/// family, kept by instantiate() so certification can bound it.
struct TailFamily {
    Matrix z1;
    Matrix z2;
    double t_start = 0.0;
    int source_atom = 0;
};

/// Weighted discrete-time switched system: products of atom matrices, with
/// growth measured per unit of accumulated weight.
struct WeightedSystem {
    int dim = 0;
    std::vector<Atom> atoms;
    std::vector<TailFamily> tails;  // populated by instantiate()
    std::vector<int> source;        // per atom: originating atom index (populated by instantiate())

    void validate() const {
        if (dim <= 0) throw std::invalid_argument("weighted system: dim must be positive");
        if (atoms.empty()) throw std::invalid_argument("weighted system: atom list is empty");
        for (size_t i = 0; i < atoms.size(); ++i) {
            const auto check = [&](const Matrix& m, const char* name) {
                if (m.rows() != dim || m.cols() != dim)
                    throw std::invalid_argument("weighted system: atom " + std::to_string(i) + ": " + name +
                                                " is not " + std::to_string(dim) + "x" + std::to_string(dim));
            };
            if (const auto* e = std::get_if<ExplicitAtom>(&atoms[i])) {
                check(e->a, "A");
                if (!(e->weight >= 0.0))
                    throw std::invalid_argument("weighted system: atom " + std::to_string(i) + ": negative weight");
            } else {
                const auto& f = std::get<FlowFamily>(atoms[i]);
                check(f.z1, "Z1");
                check(f.z2, "Z2");
                if (!(f.t_lo >= 0.0) || !(f.t_lo <= f.t_hi))
                    throw std::invalid_argument("weighted system: atom " + std::to_string(i) + ": bad [t_lo, t_hi]");
            }
        }
    }

    bool has_families() const {
        for (const Atom& a : atoms)
            if (std::holds_alternative<FlowFamily>(a)) return true;
        return false;
    }

    int source_of(size_t atom_index) const {
        return source.empty() ? static_cast<int>(atom_index) : source[atom_index];
    }
};

/// Lift of an impulsive system: one flow family (Z2 e^{t Z1}, t), t >= tau,
/// per mode. Words of the lifted system evaluate the flow at switching times.
inline WeightedSystem lift(const ImpulsiveSystem& sys) {
    sys.validate();
    WeightedSystem ws;
    ws.dim = sys.dim;
    ws.atoms.reserve(sys.modes.size());
    for (const Mode& m : sys.modes) ws.atoms.push_back(FlowFamily{m.z1, m.z2, sys.tau, kInf});
    return ws;
}

/// Replaces each flow family by explicit atoms on the grid
/// {t_lo, t_lo + step, ...} up to min(t_max, t_hi), appending the right
/// endpoint when stepping misses it. The analytic tail beyond t_max is
/// recorded in `tails`; `source` maps atoms back to their origin.
inline WeightedSystem instantiate(const WeightedSystem& ws, double grid_step, double t_max) {
    ws.validate();
    if (!(grid_step > 0.0)) throw std::invalid_argument("instantiate: grid_step must be > 0");
    WeightedSystem out;
    out.dim = ws.dim;
    for (size_t i = 0; i < ws.atoms.size(); ++i) {
        if (const auto* e = std::get_if<ExplicitAtom>(&ws.atoms[i])) {
            out.atoms.push_back(*e);
            out.source.push_back(ws.source_of(i));
            continue;
        }
        const auto& f = std::get<FlowFamily>(ws.atoms[i]);
        const double t_end = std::min(t_max, f.t_hi);
        if (t_end < f.t_lo)
            throw std::invalid_argument("instantiate: t_max below t_lo of atom " + std::to_string(i));
        long k = 0;
        double t = f.t_lo;
        while (t <= t_end + 1e-9 * grid_step) {
            out.atoms.push_back(ExplicitAtom{f.at(std::min(t, t_end)), std::min(t, t_end)});
            out.source.push_back(ws.source_of(i));
            ++k;
            t = f.t_lo + static_cast<double>(k) * grid_step;
        }
        const double last = std::get<ExplicitAtom>(out.atoms.back()).weight;
        if (last < t_end - 1e-9 * grid_step) {
            out.atoms.push_back(ExplicitAtom{f.at(t_end), t_end});
            out.source.push_back(ws.source_of(i));
        }
        if (f.t_hi > t_end) out.tails.push_back(TailFamily{f.z1, f.z2, t_end, ws.source_of(i)});
    }
    return out;
}

/// Weight-preserving exponential reweighting: explicit atoms (A, w) become
/// (e^{xi w} A, w); families absorb the factor into the generator, since
/// e^{xi t} Z2 e^{t Z1} = Z2 e^{t (Z1 + xi I)}.
inline WeightedSystem shift(const WeightedSystem& ws, double xi) {
    WeightedSystem out = ws;
    for (Atom& a : out.atoms) {
        if (auto* e = std::get_if<ExplicitAtom>(&a)) {
            e->a *= std::exp(xi * e->weight);
        } else {
            auto& f = std::get<FlowFamily>(a);
            f.z1.diagonal().array() += xi;
        }
    }
    for (TailFamily& t : out.tails) t.z1.diagonal().array() += xi;
    return out;
}

/// Hausdorff distance between the mode sets, each mode embedded as the
/// 2 d^2 coefficient vector of (Z1, Z2) with the Euclidean metric.
inline double hausdorff_distance(const ImpulsiveSystem& a, const ImpulsiveSystem& b) {
    a.validate();
    b.validate();
    if (a.dim != b.dim) throw std::domain_error("hausdorff_distance: dimension mismatch");
    const auto embed_dist = [](const Mode& x, const Mode& y) {
        const double d1 = (x.z1 - y.z1).squaredNorm();
        const double d2 = (x.z2 - y.z2).squaredNorm();
        return std::sqrt(d1 + d2);
    };
    const auto one_sided = [&](const std::vector<Mode>& xs, const std::vector<Mode>& ys) {
        double worst = 0.0;
        for (const Mode& x : xs) {
            double best = kInf;
            for (const Mode& y : ys) best = std::min(best, embed_dist(x, y));
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(one_sided(a.modes, b.modes), one_sided(b.modes, a.modes));
}

/// One instantiated atom inside a word: originating atom (mode, for lifted
/// systems) and the flow-time / weight parameter.
struct Letter {
    int atom = 0;
    double t = 0.0;
};

/// Finite product word: letters in time order, cached left product
/// A_k ... A_1 and total weight.
struct Word {
    std::vector<Letter> letters;
    Matrix product;
    double weight = 0.0;

    static Word empty(int dim) { return Word{{}, Matrix::Identity(dim, dim), 0.0}; }
};

inline Word word_extend(const Word& w, const Matrix& a, double weight, Letter prov) {
    Word out;
    out.letters = w.letters;
    out.letters.push_back(prov);
    out.product = a * w.product;
    out.weight = w.weight + weight;
    return out;
}

}  // namespace issa
