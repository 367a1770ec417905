#pragma once

#include <vector>

#include "cascade/errors.hpp"

namespace cascade {

// Piecewise-constant, right-continuous function of time. Breakpoints are
// sorted and start at 0, so the value is defined on all of [0, inf).
class PiecewiseConstant {
  public:
    PiecewiseConstant() : t_{0.0}, v_{0.0} {}
    explicit PiecewiseConstant(double v) : t_{0.0}, v_{v} {}
    PiecewiseConstant(std::vector<double> t, std::vector<double> v)
        : t_(std::move(t)), v_(std::move(v)) {
        if (t_.empty() || t_.size() != v_.size())
            throw ValidationError("piecewise function: breakpoint/value size mismatch");
        if (t_.front() != 0.0)
            throw ValidationError("piecewise function: first breakpoint must be 0");
        for (size_t i = 1; i < t_.size(); ++i)
            if (!(t_[i] > t_[i - 1]))
                throw ValidationError("piecewise function: breakpoints must be strictly increasing");
    }

    double operator()(double t) const {
        size_t i = t_.size();
        while (i > 1 && t_[i - 1] > t) --i;
        return v_[i - 1];
    }

    bool is_constant() const { return t_.size() == 1; }
    const std::vector<double>& breakpoints() const { return t_; }
    const std::vector<double>& values() const { return v_; }

    bool operator==(const PiecewiseConstant& o) const {
        return t_ == o.t_ && v_ == o.v_;
    }

  private:
    std::vector<double> t_;
    std::vector<double> v_;
};

}  // namespace cascade
