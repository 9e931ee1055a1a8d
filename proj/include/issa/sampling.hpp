#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace issa {
namespace detail {

/// Seeded RNG wrapper with implementation-pinned uniform/normal draws so that
/// outputs are reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(gen_() % static_cast<std::uint64_t>(hi - lo + 1));
    }
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        have_spare_ = true;
        spare_ = r * std::sin(2.0 * M_PI * u2);
        return r * std::cos(2.0 * M_PI * u2);
    }
    Eigen::VectorXd unit_vector(int dim) {
        Eigen::VectorXd v(dim);
        do {
            for (int i = 0; i < dim; ++i) v(i) = normal();
        } while (v.norm() < 1e-12);
        return v / v.norm();
    }
    Eigen::MatrixXd matrix(int dim, double lo, double hi) {
        Eigen::MatrixXd m(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) m(i, j) = uniform(lo, hi);
        return m;
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline double halton(std::uint64_t index, std::uint64_t base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= static_cast<double>(base);
        r += f * static_cast<double>(index % base);
        index /= base;
    }
    return r;
}

/// Deterministic low-discrepancy points on the unit sphere of R^d: Halton
/// coordinates pushed through Box-Muller pairs, then normalized.
inline std::vector<Eigen::VectorXd> sphere_points(int dim, int count) {
    static const std::uint64_t primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
    std::vector<Eigen::VectorXd> pts;
    pts.reserve(static_cast<size_t>(count));
    const int pairs = (dim + 1) / 2;
    for (std::uint64_t idx = 1; pts.size() < static_cast<size_t>(count); ++idx) {
        Eigen::VectorXd v(dim);
        for (int p = 0; p < pairs; ++p) {
            double u1 = halton(idx, primes[2 * p]);
            const double u2 = halton(idx, primes[2 * p + 1]);
            if (u1 < 1e-12) u1 = 1e-12;
            const double r = std::sqrt(-2.0 * std::log(u1));
            v(2 * p) = r * std::cos(2.0 * M_PI * u2);
            if (2 * p + 1 < dim) v(2 * p + 1) = r * std::sin(2.0 * M_PI * u2);
        }
        const double n = v.norm();
        if (n < 1e-9) continue;
        pts.push_back(v / n);
    }
    return pts;
}

}  // namespace detail
}  // namespace issa
