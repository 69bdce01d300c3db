#pragma once

// State-evolution numerics.
//
//   transduction        s_{t+1} = T(s_t, a_t)                 (learned in model.hpp)
//   first-order flow    dS/dt = F(S, A)                       evolve_first_order (RK4)
//   damped system       S'' + lambda S' + H(S) = 0            evolve_damped (symplectic Euler)
//   kernel flow         H(S) = div(K * S)                     kernel_flow
//   trajectory loss     L = integral |S - S_hat|^2 dt         trajectory_loss (trapezoid)
//
// The "state manifold" of the kernel flow is the 1-D component index of the
// state vector: K * S is a zero-padded discrete convolution over components
// and div is a central difference (one-sided at the two ends).

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace nest {

using Vector = std::vector<double>;
using Trajectory = std::vector<Vector>;

/// Odd-length convolution kernel with finite weights.
class Kernel {
public:
    explicit Kernel(std::vector<double> weights);
    static Kernel identity() { return Kernel({1.0}); }

    std::span<const double> weights() const noexcept { return weights_; }
    std::size_t size() const noexcept { return weights_.size(); }
    std::size_t radius() const noexcept { return weights_.size() / 2; }

private:
    std::vector<double> weights_;
};

/// c[j] = sum_m K[m] * s[j - (m - r)]  (zero outside [0, d))
Vector convolve(std::span<const double> state, const Kernel& kernel);

/// Discrete divergence of the convolved field. Requires d >= 2.
Vector kernel_flow(std::span<const double> state, const Kernel& kernel);

/// F(state, action) -> dS/dt
using EvolutionField = std::function<Vector(std::span<const double>, int)>;

/// Classical RK4 with the action held constant over each step. `actions`
/// may be empty (action 0 everywhere) or give one action per step.
/// Returns steps + 1 states. Throws DivergenceError("divergence at step i").
Trajectory evolve_first_order(std::span<const double> initial, std::span<const int> actions,
                              const EvolutionField& field, double dt, std::size_t steps);

struct DampedConfig {
    double lambda = 0.0;
    double dt = 1e-3;
    std::size_t steps = 1;
};

struct DampedTrajectory {
    Trajectory position;
    Trajectory velocity;
};

using RestoringForce = std::function<Vector(std::span<const double>)>;

/// Semi-implicit Euler:  v <- v - dt (lambda v + h(s));  s <- s + dt v.
DampedTrajectory evolve_damped(std::span<const double> initial,
                               std::span<const double> initial_velocity,
                               const RestoringForce& h, const DampedConfig& cfg);

/// Step bound under which the damped scheme is stable for a linear
/// restoring force with largest frequency omega_max: 2 / (lambda + 2 omega_max).
double damped_stability_bound(double lambda, double omega_max) noexcept;

/// Discrete energy of one mode (h(s) = omega^2 s) that the scheme never
/// increases below the stability bound:
///   E = 1/2 (v^2 + omega^2 s^2 + c s v),
///   c = 2 dt^2 omega^4 (dt lambda - 1) / (2 dt omega^2 (1 - dt lambda) + lambda).
/// At lambda = 0 this is the scheme's exactly conserved shadow energy.
double damped_mode_energy(double s, double v, double omega, double lambda, double dt) noexcept;

/// Trapezoidal integral of |reference_i - estimate_i|^2 with spacing dt.
double trajectory_loss(const Trajectory& reference, const Trajectory& estimate, double dt);

} // namespace nest
