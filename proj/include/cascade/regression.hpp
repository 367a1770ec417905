#pragma once

#include <cstdint>
#include <vector>

namespace cascade {

// Total-degree polynomial basis in `dim` variables. Order: total degree
// ascending, then lexicographic on the exponent tuple; the constant term is
// always index 0, which the ridge penalty skips.
struct PolyBasis {
    int dim = 0;
    int degree = 0;
    std::vector<std::vector<uint8_t>> exps;

    static PolyBasis make(int dim, int degree);
    int size() const { return static_cast<int>(exps.size()); }
    void features(const double* z, double* phi) const;
};

/// Per-coordinate affine map (x - center) / scale; scale 0 marks a dead
/// (constant) coordinate whose feature is pinned to 0.
struct Standardizer {
    std::vector<double> center, scale;
    void standardize(const double* x, double* z) const {
        for (size_t d = 0; d < center.size(); ++d)
            z[d] = scale[d] > 0 ? (x[d] - center[d]) / scale[d] : 0.0;
    }
};

// One (regime, grid step) ridge regression. The caller gathers the sample
// coordinates in a fixed order; assembly of the normal equations runs as a
// blocked reduction so the fit is bit-identical for any OpenMP thread count.
class StepFitter {
  public:
    StepFitter(PolyBasis basis, double ridge);

    /// xs: row-major [count x dim]; computes standardizer, hull, features,
    /// Gram matrix and its factorization (with ridge rescue).
    void prepare(const std::vector<double>& xs, long count);

    struct Fit {
        std::vector<double> coef;
        double resid_rms = 0;
    };
    /// Least squares of one target vector against the prepared design.
    Fit fit(const std::vector<double>& targets) const;

    double evaluate(const std::vector<double>& coef, const double* x) const;

    const PolyBasis& basis() const { return basis_; }
    const Standardizer& standardizer() const { return std_; }
    const std::vector<double>& hull_lo() const { return lo_; }
    const std::vector<double>& hull_hi() const { return hi_; }
    double cond_log10() const { return cond_log10_; }
    long count() const { return count_; }
    double ridge_used() const { return ridge_used_; }

    /// Plain-loop reference for the Gram assembly; kept for tests/benchmarks.
    static std::vector<double> gram_reference(const PolyBasis& basis,
                                              const std::vector<double>& feats,
                                              long count);
    /// Deterministic blocked (and OpenMP-parallel) Gram assembly.
    static std::vector<double> gram_blocked(const PolyBasis& basis,
                                            const std::vector<double>& feats,
                                            long count);

  private:
    PolyBasis basis_;
    double ridge_ = 0;
    double ridge_used_ = 0;
    Standardizer std_;
    std::vector<double> lo_, hi_;
    std::vector<double> feats_;   // [count x nb]
    std::vector<double> chol_;    // nb x nb lower Cholesky factor of G + ridge
    double cond_log10_ = 0;
    long count_ = 0;
};

/// Evaluate a fitted table outside class context (used by solution readers).
double eval_poly(const PolyBasis& basis, const Standardizer& std,
                 const std::vector<double>& coef, const double* x);

/// Evaluation with linear extension outside [lo, hi]: the polynomial is only
/// trusted on the fitted hull; beyond it the value continues with the
/// boundary slope so feedbacks stay proportional instead of exploding or
/// saturating.
double eval_poly_linear_ext(const PolyBasis& basis, const Standardizer& std,
                            const std::vector<double>& coef,
                            const std::vector<double>& lo, const std::vector<double>& hi,
                            const double* x);

}  // namespace cascade
