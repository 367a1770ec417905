#include "cascade/policy.hpp"

#include "cascade/errors.hpp"

namespace cascade {

Policy Policy::zero(const ProblemSpec& spec) {
    Policy p;
    p.kind_ = Kind::zero;
    p.n_ = spec.n;
    p.bounds_ = spec.bounds;
    p.fn_ = [](const Regime&, double, const double*, double*) {};
    return p;
}

Policy Policy::constant(const ProblemSpec& spec, std::vector<double> levels) {
    if (static_cast<int>(levels.size()) != spec.n)
        throw ValidationError("constant policy needs one level per node");
    Policy p;
    p.kind_ = Kind::constant;
    p.n_ = spec.n;
    p.bounds_ = spec.bounds;
    p.fn_ = [levels = std::move(levels)](const Regime& r, double, const double*, double* a) {
        for (int i : r.survivors()) a[i] = levels[static_cast<size_t>(i)];
    };
    return p;
}

Policy Policy::from_fn(const ProblemSpec& spec, Kind kind, Fn fn) {
    Policy p;
    p.kind_ = kind;
    p.n_ = spec.n;
    p.bounds_ = spec.bounds;
    p.fn_ = std::move(fn);
    return p;
}

Policy Policy::perturbed(const Policy& base, Direction direction, double h) {
    Policy p;
    p.kind_ = Kind::perturbed;
    p.n_ = base.n_;
    p.bounds_ = base.bounds_;
    p.fn_ = [base, direction = std::move(direction), h](const Regime& r, double t,
                                                        const double* x, double* a) {
        base.eval(r, t, x, a);
        std::vector<double> delta(static_cast<size_t>(r.n), 0.0);
        direction(r, t, delta.data());
        for (int i : r.survivors()) a[i] += h * delta[static_cast<size_t>(i)];
    };
    return p;
}

void Policy::eval(const Regime& regime, double t, const double* x, double* a_out) const {
    for (int i = 0; i < regime.n; ++i) a_out[i] = 0.0;
    fn_(regime, t, x, a_out);
    for (int i = 0; i < regime.n; ++i) {
        if (regime.node_defaulted(i)) {
            a_out[i] = 0.0;  // frozen, regardless of bounds
        } else {
            a_out[i] = bounds_[static_cast<size_t>(i)].clamp(a_out[i]);
        }
    }
}

const char* Policy::kind_name() const {
    switch (kind_) {
        case Kind::zero: return "zero";
        case Kind::constant: return "constant";
        case Kind::riccati_feedback: return "riccati_feedback";
        case Kind::adjoint_feedback: return "adjoint_feedback";
        case Kind::glued: return "glued";
        case Kind::perturbed: return "perturbed";
    }
    return "?";
}

}  // namespace cascade
