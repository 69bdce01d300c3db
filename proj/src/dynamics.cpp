#include "nest/dynamics.hpp"

#include "nest/error.hpp"

#include <cmath>
#include <string>

namespace nest {

namespace {

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

[[noreturn]] void diverged(std::size_t step) {
    throw DivergenceError("divergence at step " + std::to_string(step), step);
}

} // namespace

Kernel::Kernel(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty() || weights_.size() % 2 == 0) {
        throw InputError("kernel length must be odd");
    }
    if (!all_finite(weights_)) throw InputError("kernel weights must be finite");
}

Vector convolve(std::span<const double> state, const Kernel& kernel) {
    const auto d = static_cast<std::ptrdiff_t>(state.size());
    const auto r = static_cast<std::ptrdiff_t>(kernel.radius());
    const auto w = kernel.weights();
    Vector c(state.size(), 0.0);
    for (std::ptrdiff_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::ptrdiff_t m = 0; m < static_cast<std::ptrdiff_t>(w.size()); ++m) {
            const std::ptrdiff_t src = j - (m - r);
            if (src >= 0 && src < d) acc += w[static_cast<std::size_t>(m)] * state[static_cast<std::size_t>(src)];
        }
        c[static_cast<std::size_t>(j)] = acc;
    }
    return c;
}

Vector kernel_flow(std::span<const double> state, const Kernel& kernel) {
    const std::size_t d = state.size();
    if (d < 2) throw InputError("kernel_flow needs a state of dimension >= 2");
    const Vector c = convolve(state, kernel);
    Vector out(d);
    out[0] = c[1] - c[0];
    out[d - 1] = c[d - 1] - c[d - 2];
    for (std::size_t j = 1; j + 1 < d; ++j) out[j] = 0.5 * (c[j + 1] - c[j - 1]);
    return out;
}

Trajectory evolve_first_order(std::span<const double> initial, std::span<const int> actions,
                              const EvolutionField& field, double dt, std::size_t steps) {
    if (!(dt > 0.0)) throw InputError("dt must be positive");
    if (!actions.empty() && actions.size() < steps) {
        throw InputError("action signal shorter than the number of steps");
    }
    const std::size_t d = initial.size();
    Trajectory traj;
    traj.reserve(steps + 1);
    traj.emplace_back(initial.begin(), initial.end());
    Vector tmp(d);
    for (std::size_t i = 0; i < steps; ++i) {
        const Vector& s = traj.back();
        const int a = actions.empty() ? 0 : actions[i];
        const Vector k1 = field(s, a);
        for (std::size_t j = 0; j < d; ++j) tmp[j] = s[j] + 0.5 * dt * k1[j];
        const Vector k2 = field(tmp, a);
        for (std::size_t j = 0; j < d; ++j) tmp[j] = s[j] + 0.5 * dt * k2[j];
        const Vector k3 = field(tmp, a);
        for (std::size_t j = 0; j < d; ++j) tmp[j] = s[j] + dt * k3[j];
        const Vector k4 = field(tmp, a);
        Vector next(d);
        for (std::size_t j = 0; j < d; ++j) {
            next[j] = s[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if (!all_finite(next)) diverged(i + 1);
        traj.push_back(std::move(next));
    }
    return traj;
}

DampedTrajectory evolve_damped(std::span<const double> initial,
                               std::span<const double> initial_velocity, const RestoringForce& h,
                               const DampedConfig& cfg) {
    if (!(cfg.lambda >= 0.0)) throw InputError("damping factor must be >= 0");
    if (!(cfg.dt > 0.0)) throw InputError("dt must be positive");
    if (initial.size() != initial_velocity.size()) {
        throw InputError("position and velocity dimensions differ");
    }
    const std::size_t d = initial.size();
    DampedTrajectory out;
    out.position.reserve(cfg.steps + 1);
    out.velocity.reserve(cfg.steps + 1);
    Vector s(initial.begin(), initial.end());
    Vector v(initial_velocity.begin(), initial_velocity.end());
    out.position.push_back(s);
    out.velocity.push_back(v);
    for (std::size_t i = 0; i < cfg.steps; ++i) {
        const Vector force = h(s);
        for (std::size_t j = 0; j < d; ++j) v[j] -= cfg.dt * (cfg.lambda * v[j] + force[j]);
        for (std::size_t j = 0; j < d; ++j) s[j] += cfg.dt * v[j];
        if (!all_finite(s) || !all_finite(v)) diverged(i + 1);
        out.position.push_back(s);
        out.velocity.push_back(v);
    }
    return out;
}

double damped_stability_bound(double lambda, double omega_max) noexcept {
    return 2.0 / (lambda + 2.0 * omega_max);
}

double damped_mode_energy(double s, double v, double omega, double lambda, double dt) noexcept {
    const double w2 = omega * omega;
    const double c = 2.0 * dt * dt * w2 * w2 * (dt * lambda - 1.0) /
                     (2.0 * dt * w2 * (1.0 - dt * lambda) + lambda);
    return 0.5 * (v * v + w2 * s * s + c * s * v);
}

double trajectory_loss(const Trajectory& reference, const Trajectory& estimate, double dt) {
    if (reference.size() != estimate.size()) throw InputError("trajectory lengths differ");
    if (reference.size() < 2) throw InputError("trajectories need at least 2 points");
    if (!(dt > 0.0)) throw InputError("dt must be positive");
    const std::size_t n = reference.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (reference[i].size() != estimate[i].size()) throw InputError("state dimensions differ");
        double sq = 0.0;
        for (std::size_t j = 0; j < reference[i].size(); ++j) {
            const double e = reference[i][j] - estimate[i][j];
            sq += e * e;
        }
        acc += (i == 0 || i + 1 == n) ? 0.5 * sq : sq;
    }
    return acc * dt;
}

} // namespace nest
