#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "issa/config.hpp"
#include "issa/matrix_ops.hpp"
#include "issa/sampling.hpp"
#include "issa/system.hpp"

namespace issa {

/// Orthonormal basis of a proper nonzero subspace invariant under every
/// matrix of the analyzed family.
struct ReducibilityWitness {
    Matrix basis;  // d x k, orthonormal columns, 0 < k < d
};

struct IrreducibilityResult {
    bool irreducible = false;
    std::optional<ReducibilityWitness> witness;
};

/// Simultaneous block upper-triangularization induced by a maximal chain of
/// common invariant subspaces. p is orthogonal; for every input matrix A,
/// p A p^T is block upper-triangular with the declared block sizes.
struct FlagDecomposition {
    Matrix p;
    std::vector<int> block_dims;
    std::vector<std::vector<Matrix>> blocks;  // blocks[i][j]: j-th diagonal block of matrix i
};

namespace detail {

// Minimal invariant subspace containing v: repeatedly applies the family and
// orthogonalizes until closure (or the whole space is reached).
inline Matrix grow_invariant_subspace(const std::vector<Matrix>& mats, const Vector& v, double grow_tol) {
    const Eigen::Index d = v.size();
    Matrix basis(d, 0);
    const auto append = [&](const Vector& w) {
        basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
        basis.col(basis.cols() - 1) = w;
    };
    if (v.norm() < 1e-14) return basis;
    append(v / v.norm());
    for (Eigen::Index next = 0; next < basis.cols() && basis.cols() < d; ++next) {
        for (const Matrix& a : mats) {
            Vector r = a * basis.col(next);
            const double scale = std::max(1.0, r.norm());
            r -= basis * (basis.transpose() * r);
            r -= basis * (basis.transpose() * r);  // second pass for orthogonality
            if (r.norm() > grow_tol * scale) {
                append(r / r.norm());
                if (basis.cols() == d) break;
            }
        }
    }
    return basis;
}

inline void check_family(const std::vector<Matrix>& mats, const char* who) {
    if (mats.empty()) throw std::invalid_argument(std::string(who) + ": empty matrix family");
    const Eigen::Index d = mats.front().rows();
    for (const Matrix& m : mats)
        if (m.rows() != d || m.cols() != d)
            throw std::invalid_argument(std::string(who) + ": dimension mismatch in family");
}

}  // namespace detail

/// Tests whether the family has a common proper nonzero invariant subspace.
/// A Reducible answer is certified by its witness; an Irreducible answer is
/// probabilistic-complete (candidate directions: eigenvectors of the members
/// and of random products, plus random vectors).
inline IrreducibilityResult is_irreducible(const std::vector<Matrix>& mats, std::uint64_t seed = 12345) {
    detail::check_family(mats, "is_irreducible");
    const Eigen::Index d = mats.front().rows();
    const double grow_tol = NumericConfig::defaults().subspace_grow_tol;
    if (d == 1) return {true, std::nullopt};

    std::vector<Vector> candidates;
    const auto add_eigvecs = [&](const Matrix& m) {
        Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/true);
        if (es.info() != Eigen::Success) return;
        for (Eigen::Index j = 0; j < d; ++j) {
            const Vector re = es.eigenvectors().col(j).real();
            const Vector im = es.eigenvectors().col(j).imag();
            if (re.norm() > 1e-10) candidates.push_back(re / re.norm());
            if (im.norm() > 1e-10) candidates.push_back(im / im.norm());
        }
    };
    for (const Matrix& m : mats) add_eigvecs(m);
    detail::Rng rng(seed);
    for (int k = 0; k < 20; ++k) {
        const int len = rng.uniform_int(2, 2 * static_cast<int>(d) + 2);
        Matrix prod = Matrix::Identity(d, d);
        for (int i = 0; i < len; ++i) prod = mats[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(mats.size()) - 1))] * prod;
        add_eigvecs(prod);
    }
    for (int k = 0; k < 20; ++k) candidates.push_back(rng.unit_vector(static_cast<int>(d)));

    std::optional<ReducibilityWitness> best;
    for (const Vector& v : candidates) {
        const Matrix closure = detail::grow_invariant_subspace(mats, v, grow_tol);
        if (closure.cols() == 0 || closure.cols() >= d) continue;
        if (!best || closure.cols() < best->basis.cols()) best = ReducibilityWitness{closure};
    }
    if (best) return {false, best};
    return {true, std::nullopt};
}

namespace detail {

inline std::pair<Matrix, std::vector<int>> flag_recurse(const std::vector<Matrix>& mats, std::uint64_t seed) {
    const Eigen::Index d = mats.front().rows();
    const IrreducibilityResult irr = is_irreducible(mats, seed);
    if (irr.irreducible) return {Matrix::Identity(d, d), {static_cast<int>(d)}};

    const Matrix& b = irr.witness->basis;
    const Eigen::Index k = b.cols();
    // Complete the witness basis to an orthogonal change of coordinates.
    Eigen::HouseholderQR<Matrix> qr(b);
    const Matrix q = qr.householderQ();
    Matrix p1 = q.transpose();  // rows: invariant subspace first, complement after

    std::vector<Matrix> top, bottom;
    top.reserve(mats.size());
    bottom.reserve(mats.size());
    for (const Matrix& a : mats) {
        const Matrix t = p1 * a * p1.transpose();
        top.push_back(t.topLeftCorner(k, k));
        bottom.push_back(t.bottomRightCorner(d - k, d - k));
    }
    const auto [p_top, dims_top] = flag_recurse(top, seed + 1);
    const auto [p_bot, dims_bot] = flag_recurse(bottom, seed + 2);

    Matrix refine = Matrix::Zero(d, d);
    refine.topLeftCorner(k, k) = p_top;
    refine.bottomRightCorner(d - k, d - k) = p_bot;
    std::vector<int> dims = dims_top;
    dims.insert(dims.end(), dims_bot.begin(), dims_bot.end());
    return {refine * p1, dims};
}

}  // namespace detail

/// Maximal common invariant flag: repeatedly extracts minimal invariant
/// subspaces and refines both the subspace action and the quotient action.
/// Returns a single full block (p = I) for irreducible input.
inline FlagDecomposition invariant_flag(const std::vector<Matrix>& mats, std::uint64_t seed = 12345) {
    detail::check_family(mats, "invariant_flag");
    FlagDecomposition out;
    auto [p, dims] = detail::flag_recurse(mats, seed);
    out.p = p;
    out.block_dims = dims;
    out.blocks.reserve(mats.size());
    for (const Matrix& a : mats) {
        const Matrix t = p * a * p.transpose();
        std::vector<Matrix> diag;
        Eigen::Index off = 0;
        for (const int bd : dims) {
            diag.push_back(t.block(off, off, bd, bd));
            off += bd;
        }
        out.blocks.push_back(std::move(diag));
    }
    return out;
}

/// Verdict on boundedness of the multiplicative semigroup generated by the
/// jump matrices alone. Unbounded answers carry a witness word whose
/// repetition grows without bound; the problem is undecidable in general, so
/// Unknown is a legitimate outcome.
struct JumpBoundednessResult {
    enum class Verdict { Bounded, Unbounded, Unknown };
    Verdict verdict = Verdict::Unknown;
    double c = 0.0;                // bound on all product norms (Bounded only)
    std::vector<int> witness;      // generator indices, time order (Unbounded only)
    std::string detail;
};

namespace detail {

// Smallest period of an index sequence (witness words are reported by their
// primitive repeating unit).
inline std::vector<int> primitive_root(const std::vector<int>& w) {
    const size_t n = w.size();
    for (size_t p = 1; p <= n / 2; ++p) {
        if (n % p != 0) continue;
        bool ok = true;
        for (size_t i = p; i < n && ok; ++i) ok = (w[i] == w[i % p]);
        if (ok) return std::vector<int>(w.begin(), w.begin() + static_cast<long>(p));
    }
    return w;
}

inline bool repeated_word_grows(const std::vector<Matrix>& mats, const std::vector<int>& word, int reps,
                                double factor) {
    const Eigen::Index d = mats.front().rows();
    Matrix base = Matrix::Identity(d, d);
    for (const int i : word) base = mats[static_cast<size_t>(i)] * base;
    const double start = std::max(base.norm(), 1e-300);
    Matrix prod = base;
    double peak = start;
    for (int n = 1; n < reps; ++n) {
        prod = base * prod;
        if (!prod.allFinite()) return true;
        peak = std::max(peak, prod.norm());
    }
    return peak >= factor * start;
}

}  // namespace detail

inline JumpBoundednessResult jump_products_bounded(const std::vector<Matrix>& z2s, const SearchConfig& cfg) {
    detail::check_family(z2s, "jump_products_bounded");
    using Verdict = JumpBoundednessResult::Verdict;
    const Eigen::Index d = z2s.front().rows();
    const double rho_tol = NumericConfig::defaults().rho_one_tol;
    const size_t m = z2s.size();

    // Depth limited by both the configured word length and a node budget.
    int depth = std::min(cfg.max_depth, 12);
    {
        std::int64_t nodes = 0, level = 1;
        int reachable = 0;
        for (int k = 1; k <= depth; ++k) {
            level *= static_cast<std::int64_t>(m);
            nodes += level;
            if (nodes > std::min<std::int64_t>(cfg.node_budget, 400000)) break;
            reachable = k;
        }
        depth = std::max(1, reachable);
    }

    std::vector<double> max_norm(static_cast<size_t>(depth) + 1, 0.0);
    std::vector<std::vector<int>> argmax(static_cast<size_t>(depth) + 1);
    max_norm[0] = 1.0;

    std::vector<int> path;
    std::optional<std::vector<int>> expanding;
    // DFS over products; left-multiplication in time order.
    const std::function<void(const Matrix&, int)> dfs = [&](const Matrix& prod, int len) {
        if (expanding || len == depth) return;
        for (size_t i = 0; i < m; ++i) {
            const Matrix next = z2s[i] * prod;
            path.push_back(static_cast<int>(i));
            const double n = operator_norm(next);
            if (n > max_norm[static_cast<size_t>(len) + 1]) {
                max_norm[static_cast<size_t>(len) + 1] = n;
                argmax[static_cast<size_t>(len) + 1] = path;
            }
            if (spectral_radius(next) > 1.0 + rho_tol) {
                expanding = path;
                path.pop_back();
                return;
            }
            dfs(next, len + 1);
            path.pop_back();
            if (expanding) return;
        }
    };
    dfs(Matrix::Identity(d, d), 0);

    JumpBoundednessResult res;
    if (expanding) {
        res.verdict = Verdict::Unbounded;
        res.witness = detail::primitive_root(*expanding);
        res.detail = "product with spectral radius > 1";
        return res;
    }

    // Common-norm certificate: if every product of some length K has norm <= 1,
    // chunking bounds all longer products by the pre-K peak.
    for (int k = 1; k <= depth; ++k) {
        if (max_norm[static_cast<size_t>(k)] <= 1.0 + 1e-12) {
            res.verdict = Verdict::Bounded;
            res.c = 1.0;
            for (int j = 0; j < k; ++j) res.c = std::max(res.c, max_norm[static_cast<size_t>(j)]);
            res.detail = "all products of length " + std::to_string(k) + " are non-expanding";
            return res;
        }
    }

    // Polynomial norm growth across depth (peripheral spectrum with nontrivial
    // structure): fit log max-norm against log depth over the deeper half.
    if (depth >= 4) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int n = 0;
        for (int k = depth / 2; k <= depth; ++k) {
            const double x = std::log(static_cast<double>(k));
            const double y = std::log(std::max(max_norm[static_cast<size_t>(k)], 1e-300));
            sx += x; sy += y; sxx += x * x; sxy += x * y;
            ++n;
        }
        const double slope = (n * sxy - sx * sy) / std::max(n * sxx - sx * sx, 1e-300);
        if (slope > 0.4 && max_norm[static_cast<size_t>(depth)] > 1.5) {
            const std::vector<int> candidate = detail::primitive_root(argmax[static_cast<size_t>(depth)]);
            if (detail::repeated_word_grows(z2s, candidate, 50, 5.0)) {
                res.verdict = Verdict::Unbounded;
                res.witness = candidate;
                res.detail = "norm growth is polynomial in depth (fit exponent " + std::to_string(slope) + ")";
                return res;
            }
        }
    }

    // Extremal-norm candidate v(x) = max over products up to K of |Pi x|:
    // certify ||Z||_v <= 1 for each generator on a sphere net with a Lipschitz
    // margin. Net sizes are only practical for d <= 3.
    if (d <= 3) {
        std::vector<Matrix> prods{Matrix::Identity(d, d)};
        std::vector<Matrix> frontier{Matrix::Identity(d, d)};
        double peak = 1.0;
        const int k_norm = std::min(depth, 6);
        for (int k = 0; k < k_norm; ++k) {
            std::vector<Matrix> next;
            next.reserve(frontier.size() * m);
            for (const Matrix& p : frontier)
                for (const Matrix& z : z2s) next.push_back(z * p);
            for (const Matrix& p : next) peak = std::max(peak, operator_norm(p));
            prods.insert(prods.end(), next.begin(), next.end());
            frontier.swap(next);
        }
        const auto v_norm = [&](const Vector& x) {
            double best = 0.0;
            for (const Matrix& p : prods) best = std::max(best, (p * x).norm());
            return best;
        };
        const int net_size = d == 2 ? 2000 : 20000;
        const std::vector<Vector> net = detail::sphere_points(static_cast<int>(d), net_size);
        const double covering = d == 2 ? M_PI / net_size * 4.0 : 6.2 / std::sqrt(static_cast<double>(net_size));
        bool all_ok = true;
        for (const Matrix& z : z2s) {
            const double zn = operator_norm(z);
            const double margin = covering * peak * (1.0 + zn);
            for (const Vector& x : net) {
                if (v_norm(z * x) > v_norm(x) - margin) {
                    all_ok = false;
                    break;
                }
            }
            if (!all_ok) break;
        }
        if (all_ok) {
            res.verdict = Verdict::Bounded;
            res.c = peak * peak;  // kappa(v) bound: |x| <= v(x) <= peak |x|
            res.detail = "extremal-norm candidate contracts every generator (net check, depth " +
                         std::to_string(k_norm) + ")";
            return res;
        }
    }

    res.verdict = Verdict::Unknown;
    res.detail = "no certificate found up to depth " + std::to_string(depth);
    return res;
}

/// True iff Z2 annihilates the generalized eigenspace of Z1 associated with
/// the eigenvalues of maximal real part. The eigenspace is obtained as the
/// kernel of a product of (powered, normalized) real polynomial factors of
/// Z1, one per dominant eigenvalue.
inline bool check_jump_kernel(const Matrix& z1, const Matrix& z2) {
    detail::require_square_finite(z1, "check_jump_kernel");
    detail::require_square_finite(z2, "check_jump_kernel");
    if (z1.rows() != z2.rows()) throw std::invalid_argument("check_jump_kernel: dimension mismatch");
    const Eigen::Index d = z1.rows();
    const NumericConfig& nc = NumericConfig::defaults();

    const Spectrum spec = eigenvalues(z1);
    double scale = 1.0;
    for (const Complex& ev : spec.eigenvalues) scale = std::max(scale, std::abs(ev));
    const double group_tol = 1e-8 * scale;

    std::vector<Complex> dominant;
    for (const Complex& ev : spec.eigenvalues) {
        if (ev.real() < spec.alpha - group_tol || ev.imag() < -group_tol) continue;
        bool dup = false;
        for (const Complex& seen : dominant) dup = dup || std::abs(ev - seen) <= group_tol;
        if (!dup) dominant.push_back(ev);
    }

    Matrix m = Matrix::Identity(d, d);
    for (const Complex& ev : dominant) {
        Matrix f;
        if (std::abs(ev.imag()) <= group_tol) {
            f = z1 - ev.real() * Matrix::Identity(d, d);
        } else {
            f = z1 * z1 - 2.0 * ev.real() * z1 + std::norm(ev) * Matrix::Identity(d, d);
        }
        const double fn = operator_norm(f);
        if (fn > 1e-14) f /= fn;
        Matrix fpow = Matrix::Identity(d, d);
        for (Eigen::Index k = 0; k < d; ++k) fpow = f * fpow;
        m = fpow * m;
    }

    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
    const double sv_tol = 1e-8 * std::max(1.0, svd.singularValues().size() > 0 ? svd.singularValues()(0) : 1.0);
    std::vector<Eigen::Index> kernel_cols;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) <= sv_tol) kernel_cols.push_back(i);
    if (kernel_cols.empty()) kernel_cols.push_back(svd.singularValues().size() - 1);

    for (const Eigen::Index i : kernel_cols) {
        const Vector g = svd.matrixV().col(i);
        if ((z2 * g).norm() > nc.kernel_dir_tol) return false;
    }
    return true;
}

}  // namespace issa
