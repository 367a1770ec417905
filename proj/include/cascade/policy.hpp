#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cascade/model.hpp"
#include "cascade/regimes.hpp"

namespace cascade {

// A control law a(t, x, regime). Immutable; evaluation is pure. The output
// always vanishes on defaulted components and is projected onto the control
// box of the surviving nodes.
class Policy {
  public:
    enum class Kind { zero, constant, riccati_feedback, adjoint_feedback, glued, perturbed };

    /// Raw rule writing the unprojected control for surviving nodes.
    using Fn = std::function<void(const Regime&, double t, const double* x, double* a_out)>;

    Policy() = default;

    static Policy zero(const ProblemSpec& spec);
    static Policy constant(const ProblemSpec& spec, std::vector<double> levels);
    static Policy from_fn(const ProblemSpec& spec, Kind kind, Fn fn);

    /// base + h * direction(t), projected after the shift.
    using Direction = std::function<void(const Regime&, double t, double* delta)>;
    static Policy perturbed(const Policy& base, Direction direction, double h);

    void eval(const Regime& regime, double t, const double* x, double* a_out) const;

    Kind kind() const { return kind_; }
    const char* kind_name() const;

  private:
    Kind kind_ = Kind::zero;
    int n_ = 0;
    std::vector<ControlBounds> bounds_;
    Fn fn_;
};

}  // namespace cascade
