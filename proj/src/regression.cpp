#include "cascade/regression.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "cascade/errors.hpp"
#include "cascade/numeric.hpp"

namespace cascade {

namespace {

void enumerate_exponents(int dim, int degree, int pos, int left,
                         std::vector<uint8_t>& cur,
                         std::vector<std::vector<uint8_t>>& out) {
    if (pos == dim) {
        if (left == 0) out.push_back(cur);
        return;
    }
    for (int e = 0; e <= left; ++e) {
        cur[static_cast<size_t>(pos)] = static_cast<uint8_t>(e);
        enumerate_exponents(dim, degree, pos + 1, left - e, cur, out);
    }
    cur[static_cast<size_t>(pos)] = 0;
}

constexpr long kBlock = 4096;

}  // namespace

PolyBasis PolyBasis::make(int dim, int degree) {
    PolyBasis b;
    b.dim = dim;
    b.degree = degree;
    std::vector<uint8_t> cur(static_cast<size_t>(dim), 0);
    for (int total = 0; total <= degree; ++total)
        enumerate_exponents(dim, degree, 0, total, cur, b.exps);
    std::stable_sort(b.exps.begin(), b.exps.end(),
                     [](const std::vector<uint8_t>& a, const std::vector<uint8_t>& c) {
                         int ta = 0, tc = 0;
                         for (auto v : a) ta += v;
                         for (auto v : c) tc += v;
                         if (ta != tc) return ta < tc;
                         return a < c;
                     });
    return b;
}

void PolyBasis::features(const double* z, double* phi) const {
    for (int j = 0; j < size(); ++j) {
        double f = 1.0;
        for (int d = 0; d < dim; ++d) {
            const int e = exps[static_cast<size_t>(j)][static_cast<size_t>(d)];
            for (int k = 0; k < e; ++k) f *= z[d];
        }
        phi[j] = f;
    }
}

StepFitter::StepFitter(PolyBasis basis, double ridge)
    : basis_(std::move(basis)), ridge_(ridge) {}

std::vector<double> StepFitter::gram_reference(const PolyBasis& basis,
                                               const std::vector<double>& feats,
                                               long count) {
    const int nb = basis.size();
    std::vector<double> g(static_cast<size_t>(nb) * nb, 0.0);
    for (long s = 0; s < count; ++s) {
        const double* f = feats.data() + static_cast<size_t>(s) * nb;
        for (int i = 0; i < nb; ++i)
            for (int j = 0; j <= i; ++j)
                g[static_cast<size_t>(i) * nb + j] += f[i] * f[j];
    }
    for (int i = 0; i < nb; ++i)
        for (int j = i + 1; j < nb; ++j)
            g[static_cast<size_t>(i) * nb + j] = g[static_cast<size_t>(j) * nb + i];
    return g;
}

std::vector<double> StepFitter::gram_blocked(const PolyBasis& basis,
                                             const std::vector<double>& feats,
                                             long count) {
    const int nb = basis.size();
    const long nblocks = (count + kBlock - 1) / kBlock;
    std::vector<double> partials(static_cast<size_t>(nblocks) * nb * nb, 0.0);
#pragma omp parallel for schedule(static)
    for (long blk = 0; blk < nblocks; ++blk) {
        double* g = partials.data() + static_cast<size_t>(blk) * nb * nb;
        const long lo = blk * kBlock;
        const long hi = std::min(count, lo + kBlock);
        for (long s = lo; s < hi; ++s) {
            const double* f = feats.data() + static_cast<size_t>(s) * nb;
            for (int i = 0; i < nb; ++i)
                for (int j = 0; j <= i; ++j)
                    g[static_cast<size_t>(i) * nb + j] += f[i] * f[j];
        }
    }
    // combine partial blocks in fixed order
    std::vector<double> g(static_cast<size_t>(nb) * nb, 0.0);
    for (long blk = 0; blk < nblocks; ++blk) {
        const double* p = partials.data() + static_cast<size_t>(blk) * nb * nb;
        for (int i = 0; i < nb; ++i)
            for (int j = 0; j <= i; ++j)
                g[static_cast<size_t>(i) * nb + j] += p[static_cast<size_t>(i) * nb + j];
    }
    for (int i = 0; i < nb; ++i)
        for (int j = i + 1; j < nb; ++j)
            g[static_cast<size_t>(i) * nb + j] = g[static_cast<size_t>(j) * nb + i];
    return g;
}

void StepFitter::prepare(const std::vector<double>& xs, long count) {
    const int dim = basis_.dim;
    const int nb = basis_.size();
    count_ = count;
    if (count < 1) throw SolverError("regression with no samples");

    // standardizer and hull: blocked deterministic moments
    std_.center.assign(static_cast<size_t>(dim), 0.0);
    std_.scale.assign(static_cast<size_t>(dim), 0.0);
    lo_.assign(static_cast<size_t>(dim), 0.0);
    hi_.assign(static_cast<size_t>(dim), 0.0);
    for (int d = 0; d < dim; ++d) {
        std::vector<double> col(static_cast<size_t>(count));
        for (long s = 0; s < count; ++s) col[static_cast<size_t>(s)] = xs[static_cast<size_t>(s) * dim + d];
        const double mean = pairwise_sum(col) / static_cast<double>(count);
        std::vector<double> sq(static_cast<size_t>(count));
        double mn = col[0], mx = col[0];
        for (long s = 0; s < count; ++s) {
            const double dev = col[static_cast<size_t>(s)] - mean;
            sq[static_cast<size_t>(s)] = dev * dev;
            mn = std::min(mn, col[static_cast<size_t>(s)]);
            mx = std::max(mx, col[static_cast<size_t>(s)]);
        }
        const double sd = std::sqrt(pairwise_sum(sq) / static_cast<double>(count));
        std_.center[static_cast<size_t>(d)] = mean;
        std_.scale[static_cast<size_t>(d)] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 0.0;
        lo_[static_cast<size_t>(d)] = mn;
        hi_[static_cast<size_t>(d)] = mx;
    }

    feats_.assign(static_cast<size_t>(count) * nb, 0.0);
#pragma omp parallel for schedule(static)
    for (long s = 0; s < count; ++s) {
        double z[16];
        std_.standardize(xs.data() + static_cast<size_t>(s) * dim, z);
        basis_.features(z, feats_.data() + static_cast<size_t>(s) * nb);
    }

    std::vector<double> g = gram_blocked(basis_, feats_, count);

    // ridge (intercept unpenalized), with rescue escalation
    const double scale = static_cast<double>(count);
    double ridge = std::max(ridge_, 0.0);
    for (int attempt = 0;; ++attempt) {
        Eigen::MatrixXd G = Eigen::Map<Eigen::MatrixXd>(g.data(), nb, nb);
        for (int i = 1; i < nb; ++i) G(i, i) += std::max(ridge, 1e-14) * scale;
        Eigen::LLT<Eigen::MatrixXd> llt(G);
        if (llt.info() == Eigen::Success) {
            const Eigen::MatrixXd L = llt.matrixL();
            chol_.assign(static_cast<size_t>(nb) * nb, 0.0);
            double dmin = L(0, 0), dmax = L(0, 0);
            for (int i = 0; i < nb; ++i) {
                dmin = std::min(dmin, L(i, i));
                dmax = std::max(dmax, L(i, i));
                for (int j = 0; j <= i; ++j) chol_[static_cast<size_t>(i) * nb + j] = L(i, j);
            }
            cond_log10_ = 2.0 * std::log10(std::max(dmax, 1e-300) / std::max(dmin, 1e-300));
            ridge_used_ = ridge;
            return;
        }
        ridge = ridge > 0 ? ridge * 100 : 1e-10;
        if (attempt >= 6)
            throw SolverError("rank-deficient regression beyond ridge rescue");
    }
}

StepFitter::Fit StepFitter::fit(const std::vector<double>& targets) const {
    const int nb = basis_.size();
    // rhs = A^T y, blocked
    const long nblocks = (count_ + kBlock - 1) / kBlock;
    std::vector<double> partial(static_cast<size_t>(nblocks) * nb, 0.0);
#pragma omp parallel for schedule(static)
    for (long blk = 0; blk < nblocks; ++blk) {
        double* r = partial.data() + static_cast<size_t>(blk) * nb;
        const long lo = blk * kBlock;
        const long hi = std::min(count_, lo + kBlock);
        for (long s = lo; s < hi; ++s) {
            const double* f = feats_.data() + static_cast<size_t>(s) * nb;
            const double y = targets[static_cast<size_t>(s)];
            for (int i = 0; i < nb; ++i) r[i] += f[i] * y;
        }
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nb);
    for (long blk = 0; blk < nblocks; ++blk)
        for (int i = 0; i < nb; ++i) rhs(i) += partial[static_cast<size_t>(blk) * nb + i];

    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(nb, nb);
    for (int i = 0; i < nb; ++i)
        for (int j = 0; j <= i; ++j) L(i, j) = chol_[static_cast<size_t>(i) * nb + j];
    Eigen::VectorXd c = L.triangularView<Eigen::Lower>().solve(rhs);
    L.triangularView<Eigen::Lower>().transpose().solveInPlace(c);

    Fit out;
    out.coef.assign(c.data(), c.data() + nb);

    // residual rms, blocked deterministic
    std::vector<double> sq(static_cast<size_t>(count_));
    for (long s = 0; s < count_; ++s) {
        const double* f = feats_.data() + static_cast<size_t>(s) * nb;
        double pred = 0;
        for (int i = 0; i < nb; ++i) pred += f[i] * out.coef[static_cast<size_t>(i)];
        const double r = targets[static_cast<size_t>(s)] - pred;
        sq[static_cast<size_t>(s)] = r * r;
    }
    out.resid_rms = std::sqrt(pairwise_sum(sq) / static_cast<double>(count_));
    return out;
}

double StepFitter::evaluate(const std::vector<double>& coef, const double* x) const {
    return eval_poly(basis_, std_, coef, x);
}

double eval_poly(const PolyBasis& basis, const Standardizer& std,
                 const std::vector<double>& coef, const double* x) {
    // dim <= 12 and degree <= 3, so the basis never exceeds C(15,3) = 455
    double z[16];
    double phi[512];
    std.standardize(x, z);
    basis.features(z, phi);
    double out = 0;
    for (int j = 0; j < basis.size(); ++j) out += phi[j] * coef[static_cast<size_t>(j)];
    return out;
}

double eval_poly_linear_ext(const PolyBasis& basis, const Standardizer& std,
                            const std::vector<double>& coef,
                            const std::vector<double>& lo, const std::vector<double>& hi,
                            const double* x) {
    double xc[16];
    bool outside = false;
    for (int d = 0; d < basis.dim; ++d) {
        xc[d] = std::clamp(x[d], lo[static_cast<size_t>(d)], hi[static_cast<size_t>(d)]);
        outside = outside || xc[d] != x[d];
    }
    double out = eval_poly(basis, std, coef, xc);
    if (!outside) return out;
    // boundary gradient in physical coordinates
    double z[16];
    std.standardize(xc, z);
    for (int d = 0; d < basis.dim; ++d) {
        if (xc[d] == x[d] || std.scale[static_cast<size_t>(d)] <= 0) continue;
        double slope = 0;
        for (int j = 0; j < basis.size(); ++j) {
            const int e = basis.exps[static_cast<size_t>(j)][static_cast<size_t>(d)];
            if (e == 0) continue;
            double term = static_cast<double>(e);
            for (int dd = 0; dd < basis.dim; ++dd) {
                const int ee = basis.exps[static_cast<size_t>(j)][static_cast<size_t>(dd)];
                const int pw = dd == d ? ee - 1 : ee;
                for (int k = 0; k < pw; ++k) term *= z[dd];
            }
            slope += coef[static_cast<size_t>(j)] * term;
        }
        out += slope / std.scale[static_cast<size_t>(d)] * (x[d] - xc[d]);
    }
    return out;
}

}  // namespace cascade
