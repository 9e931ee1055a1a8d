#pragma once

#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "issa/system.hpp"

namespace issa {

/// One sampled state. Jump instants produce two rows at the same t: the
/// pre-jump limit first, then the post-jump (right-continuous) state.
struct TrajectoryRow {
    double t = 0.0;
    Vector x;
    bool post_jump = false;  // true on the second row of a jump pair
};

/// Samples x(t) = Phi(t, 0) x0 on the grid {0, dt, 2dt, ...} up to horizon,
/// inserting both sides of every jump. Stepping is exact (matrix
/// exponentials), not an ODE discretization.
inline std::vector<TrajectoryRow> simulate(const ImpulsiveSystem& sys, const SwitchingSignal& sig,
                                           const Vector& x0, double dt, double horizon) {
    sys.validate();
    validate_signal(sys, sig);
    if (!(dt > 0.0)) throw std::invalid_argument("simulate: dt must be > 0");
    if (!(horizon > 0.0)) throw std::invalid_argument("simulate: horizon must be > 0");
    if (x0.size() != sys.dim) throw std::invalid_argument("simulate: x0 has wrong dimension");

    std::vector<TrajectoryRow> rows;
    const auto emit = [&](double t, const Vector& x, bool post) {
        if (!x.allFinite()) throw OverflowError("simulate: state overflowed");
        rows.push_back(TrajectoryRow{t, x, post});
    };

    Vector x = x0;
    double cursor = 0.0;
    long grid_next = 0;  // next grid index to emit
    emit(0.0, x, false);
    ++grid_next;

    const auto emit_grid_within = [&](const Matrix& z1, double seg_start, const Vector& x_start, double t_end) {
        while (true) {
            const double tg = static_cast<double>(grid_next) * dt;
            if (tg >= t_end - 1e-12 * dt || tg > horizon) break;
            emit(tg, mat_exp(z1, tg - seg_start) * x_start, false);
            ++grid_next;
        }
    };

    for (const Segment& s : sig.segments) {
        const Mode& m = sys.modes[static_cast<size_t>(s.mode)];
        const double t_end = cursor + s.duration;
        if (t_end > horizon) {
            emit_grid_within(m.z1, cursor, x, horizon + dt);  // grid rows up to horizon
            return rows;
        }
        emit_grid_within(m.z1, cursor, x, t_end);
        const Vector pre = mat_exp(m.z1, s.duration) * x;
        emit(t_end, pre, false);
        x = m.z2 * pre;
        emit(t_end, x, true);
        // A grid point coinciding with the jump is covered by the pair.
        while (static_cast<double>(grid_next) * dt <= t_end + 1e-12 * dt) ++grid_next;
        cursor = t_end;
    }
    const Mode& tail = sys.modes[static_cast<size_t>(sig.tail_mode)];
    emit_grid_within(tail.z1, cursor, x, horizon + dt);
    return rows;
}

/// CSV dump at full double precision. The comment line documents the jump
/// duplication convention.
inline void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
    out << "# jump instants emit two rows with equal t: pre-jump state first, post-jump state second\n";
    if (rows.empty()) return;
    const Eigen::Index d = rows.front().x.size();
    out << "t";
    for (Eigen::Index i = 0; i < d; ++i) out << ",x" << (i + 1);
    out << ",norm\n";
    char buf[64];
    const auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << buf;
    };
    for (const TrajectoryRow& r : rows) {
        put(r.t);
        for (Eigen::Index i = 0; i < d; ++i) {
            out << ",";
            put(r.x(i));
        }
        out << ",";
        put(r.x.norm());
        out << "\n";
    }
}

}  // namespace issa
