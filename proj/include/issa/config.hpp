#pragma once

#include <cstdint>

namespace issa {

/// Central tolerance record. Every numeric threshold used by the library
/// lives here so that tests and callers reference a single source of truth.
struct NumericConfig {
    // eigen / norm kernel
    double op_norm_rel_acc = 1e-12;
    double matexp_rel_acc = 1e-12;
    double matexp_theta = 0.5;          // scale so that ||tM / 2^s|| <= theta
    double overflow_t_alpha = 700.0;    // t*alpha(M) beyond this overflows double range

    // structural analysis
    double subspace_grow_tol = 1e-10;   // residual threshold when growing invariant subspaces
    double witness_tol = 1e-9;          // max out-of-subspace component of a reducibility witness
    double offblock_tol = 1e-9;         // allowed off-block residual of a flag triangularization
    double spectrum_match_tol = 1e-7;   // block spectra vs full spectra
    double kernel_dir_tol = 1e-9;       // ||Z2 g|| threshold in the dominant-kernel test
    double rho_one_tol = 1e-9;          // rho(P) > 1 + tol counts as expanding

    // exponent machinery
    double decay_slack = 1e-9;          // multiplicative slack in V(Ax) <= e^{-gamma w} V(x) checks
    double ratio_floor = 1e-12;         // |omega| floor when ranking words by log||Pi|| / |omega|

    static const NumericConfig& defaults() {
        static const NumericConfig cfg{};
        return cfg;
    }
};

/// Knobs for the word search, certification, and bisection routines.
struct SearchConfig {
    int max_depth = 10;           // word length budget for spectral lower-bound search
    double grid_step = 0.05;      // discretization step for flow-family parameters
    double t_max = 8.0;           // grid end; certification may grow it to control tails
    int beam_width = 128;         // frontier width of the beam search
    double bisect_tol = 0.01;     // bisection stopping width for the upper bound
    double block_horizon = 1.0;   // accumulated weight at which a certification block must have closed
    double contraction_margin = 0.9;  // q in (0,1): required block contraction
    std::int64_t node_budget = 4000000;
    std::uint64_t seed = 12345;
    int workers = 1;

    bool valid() const {
        return max_depth >= 1 && grid_step > 0 && beam_width >= 1 && bisect_tol > 0 &&
               block_horizon > 0 && contraction_margin > 0 && contraction_margin < 1 &&
               node_budget > 0 && workers >= 1;
    }
};

}  // namespace issa
