#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "issa/config.hpp"

namespace issa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;

/// Raised when an iterative kernel (eigenvalue iteration) fails to converge
/// within its budget.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a matrix exponential would leave the double range.
struct OverflowError : std::runtime_error {
    explicit OverflowError(const std::string& what) : std::runtime_error(what) {}
};

/// Eigenvalues of a square matrix together with the two derived scalars used
/// throughout the library: spectral radius and spectral abscissa.
struct Spectrum {
    std::vector<Complex> eigenvalues;  // length d, with multiplicity
    double rho = 0.0;                  // max modulus
    double alpha = 0.0;                // max real part
};

namespace detail {

inline void require_square_finite(const Matrix& m, const char* who) {
    if (m.rows() != m.cols() || m.rows() == 0)
        throw std::invalid_argument(std::string(who) + ": matrix must be square and nonempty");
    if (!m.allFinite())
        throw std::invalid_argument(std::string(who) + ": matrix has non-finite entries");
}

// Parlett-Reinsch diagonal balancing (radix 2). Similarity transform, so the
// spectrum is unchanged; improves QR accuracy on badly scaled inputs.
inline Matrix balance(Matrix a) {
    const Eigen::Index n = a.rows();
    bool converged = false;
    while (!converged) {
        converged = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            double c = 0.0, r = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(a(j, i));
                r += std::abs(a(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            double f = 1.0;
            const double s = c + r;
            while (c < r / 2.0) { c *= 2.0; r /= 2.0; f *= 2.0; }
            while (c >= r * 2.0) { c /= 2.0; r *= 2.0; f /= 2.0; }
            if (f != 1.0 && c + r < 0.95 * s) {
                converged = false;
                a.row(i) /= f;
                a.col(i) *= f;
            }
        }
    }
    return a;
}

}  // namespace detail

/// Dense eigenvalue computation: balancing followed by Hessenberg/QR (real
/// Schur form), 2x2 bumps resolved by the quadratic formula. Throws
/// NumericalError if the QR iteration exhausts its budget.
inline Spectrum eigenvalues(const Matrix& m) {
    detail::require_square_finite(m, "eigenvalues");
    const Eigen::Index d = m.rows();

    Eigen::RealSchur<Matrix> schur(d);
    schur.setMaxIterations(100 * static_cast<int>(d) * static_cast<int>(d));
    schur.compute(detail::balance(m), /*computeU=*/false);
    if (schur.info() != Eigen::Success)
        throw NumericalError("eigenvalues: QR iteration did not converge within budget");

    const Matrix& t = schur.matrixT();
    Spectrum spec;
    spec.eigenvalues.reserve(static_cast<size_t>(d));
    Eigen::Index i = 0;
    while (i < d) {
        if (i + 1 < d && t(i + 1, i) != 0.0) {
            const double p = 0.5 * (t(i, i) - t(i + 1, i + 1));
            const double z2 = p * p + t(i + 1, i) * t(i, i + 1);
            const double mean = t(i + 1, i + 1) + p;
            if (z2 >= 0.0) {  // real pair after all
                const double z = std::sqrt(z2);
                spec.eigenvalues.emplace_back(mean + z, 0.0);
                spec.eigenvalues.emplace_back(mean - z, 0.0);
            } else {
                const double z = std::sqrt(-z2);
                spec.eigenvalues.emplace_back(mean, z);
                spec.eigenvalues.emplace_back(mean, -z);
            }
            i += 2;
        } else {
            spec.eigenvalues.emplace_back(t(i, i), 0.0);
            ++i;
        }
    }
    std::sort(spec.eigenvalues.begin(), spec.eigenvalues.end(), [](const Complex& a, const Complex& b) {
        return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    spec.rho = 0.0;
    spec.alpha = -std::numeric_limits<double>::infinity();
    for (const Complex& ev : spec.eigenvalues) {
        spec.rho = std::max(spec.rho, std::abs(ev));
        spec.alpha = std::max(spec.alpha, ev.real());
    }
    return spec;
}

inline double spectral_radius(const Matrix& m) { return eigenvalues(m).rho; }
inline double spectral_abscissa(const Matrix& m) { return eigenvalues(m).alpha; }

/// Euclidean operator norm (largest singular value), computed from the
/// dominant eigenvalue of M^T M.
inline double operator_norm(const Matrix& m) {
    detail::require_square_finite(m, "operator_norm");
    const Matrix gram = 0.5 * (m.transpose() * m + (m.transpose() * m).transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw NumericalError("operator_norm: symmetric eigenvalue iteration failed");
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

/// e^{tM} by scaling and squaring with a diagonal Pade(6,6) core.
/// Scales so that ||tM / 2^s|| <= theta (0.5 by default), where the Pade
/// approximant is accurate to full double precision. Throws OverflowError
/// when the result cannot be represented (t * alpha(M) > 700).
inline Matrix mat_exp(const Matrix& m, double t = 1.0) {
    detail::require_square_finite(m, "mat_exp");
    if (!std::isfinite(t)) throw std::invalid_argument("mat_exp: t must be finite");
    const NumericConfig& nc = NumericConfig::defaults();

    Matrix a = t * m;
    const double anorm = operator_norm(a);
    if (anorm > nc.overflow_t_alpha) {
        // Only now pay for a spectrum: growth is governed by the abscissa.
        const double talpha = t >= 0 ? t * spectral_abscissa(m) : -t * spectral_abscissa(-m);
        if (talpha > nc.overflow_t_alpha)
            throw OverflowError("mat_exp: t*alpha(M) = " + std::to_string(talpha) + " exceeds double range");
    }

    int squarings = 0;
    if (anorm > nc.matexp_theta) {
        squarings = static_cast<int>(std::ceil(std::log2(anorm / nc.matexp_theta)));
        a /= std::ldexp(1.0, squarings);
    }

    // Pade(6,6): N(a) D(a)^{-1} with coefficients of the diagonal approximant.
    static const double c[7] = {1.0,        1.0 / 2.0,     5.0 / 44.0,    1.0 / 66.0,
                                1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0};
    const Matrix a2 = a * a;
    Matrix even = c[6] * a2;  // will hold c0 + c2 a^2 + c4 a^4 + c6 a^6
    even.diagonal().array() += c[4];
    even = even * a2;
    even.diagonal().array() += c[2];
    even = even * a2;
    even.diagonal().array() += c[0];
    Matrix odd = c[5] * a2;  // c1 + c3 a^2 + c5 a^4, times a afterwards
    odd.diagonal().array() += c[3];
    odd = odd * a2;
    odd.diagonal().array() += c[1];
    odd = odd * a;
    const Matrix num = even + odd;
    const Matrix den = even - odd;

    Matrix r = den.partialPivLu().solve(num);
    for (int s = 0; s < squarings; ++s) {
        r = r * r;
        if (!r.allFinite()) throw OverflowError("mat_exp: overflow while squaring");
    }
    if (!r.allFinite()) throw OverflowError("mat_exp: non-finite result");
    return r;
}

/// Bound e^{t alpha} sum_{k<d} (t d ||M||)^k / k! with alpha(M) and ||M||
/// supplied by the caller (hot paths evaluate it repeatedly for one matrix).
inline double exp_norm_bound_terms(double alpha, double norm_m, int d, double t) {
    double sum = 1.0, term = 1.0;
    const double c = t * static_cast<double>(d) * norm_m;
    for (int k = 1; k < d; ++k) {
        term *= c / static_cast<double>(k);
        sum += term;
    }
    return std::exp(t * alpha) * sum;
}

/// Upper bound on ||e^{tM}|| for t >= 0:
///   e^{t alpha(M)} * sum_{k=0}^{d-1} (t d ||M||)^k / k!
/// Exact in dimension 1; always >= ||e^{tM}||.
inline double exp_norm_bound(const Matrix& m, double t) {
    detail::require_square_finite(m, "exp_norm_bound");
    if (t < 0) throw std::invalid_argument("exp_norm_bound: t must be >= 0");
    const int d = static_cast<int>(m.rows());
    return exp_norm_bound_terms(spectral_abscissa(m), operator_norm(m), d, t);
}

namespace detail {

// S_j(x) = sum_{k<=j} x^k / k!; returns 0 for j < 0.
inline double exp_partial_sum(double x, int j) {
    if (j < 0) return 0.0;
    double sum = 1.0, term = 1.0;
    for (int k = 1; k <= j; ++k) {
        term *= x / static_cast<double>(k);
        sum += term;
    }
    return sum;
}

// Logarithmic derivative of the polynomial factor p(t) = S_{d-1}(c t) of the
// exponential-norm bound: p'(t)/p(t) = c S_{d-2}(ct) / S_{d-1}(ct).
// Non-increasing in t (partial sums of exp are a log-concave sequence), which
// makes t -> e^{t a} p(t) unimodal.
inline double poly_log_deriv(double c, int d, double t) {
    if (d <= 1 || c == 0.0) return 0.0;
    return c * exp_partial_sum(c * t, d - 2) / exp_partial_sum(c * t, d - 1);
}

// sup over s in [a,b] of e^{s alpha} S_{d-1}(s d norm_m); uses unimodality.
inline double exp_norm_bound_sup(double alpha, double norm_m, int d, double a, double b) {
    const double c = static_cast<double>(d) * norm_m;
    auto f = [&](double s) { return exp_norm_bound_terms(alpha, norm_m, d, s); };
    auto deriv_sign = [&](double s) { return alpha + poly_log_deriv(c, d, s); };
    if (deriv_sign(a) <= 0.0) return f(a);
    if (deriv_sign(b) >= 0.0) return f(b);
    double lo = a, hi = b;
    for (int it = 0; it < 80 && hi - lo > 1e-14 * (1.0 + hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (deriv_sign(mid) > 0.0 ? lo : hi) = mid;
    }
    return std::max({f(a), f(b), f(0.5 * (lo + hi))});
}

}  // namespace detail

}  // namespace issa
