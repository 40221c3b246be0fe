#pragma once

// Explicit finite-difference integrator for the Barkley excitable medium
//
//   dU/dt = D lap(U) + (1/eps) U (1 - U) (U - (V + b) / a)
//   dV/dt = U^3 - V
//
// with no-flux boundaries, plus the perturbed-eps variant used as the
// knowledge-based one-step predictor.

#include "error.hpp"
#include "field.hpp"
#include "random.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace bkrc {

struct barkley_params {
    double d = 0.02;
    double a = 0.75;
    double b = 0.06;
    double eps = 0.08;
    double dt = 0.01;
    double dx = 0.1;
    std::size_t nx = 80;
    std::size_t ny = 80;

    void validate() const
    {
        if (!(dt > 0)) throw invalid_argument{"barkley: dt must be positive"};
        if (!(dx > 0)) throw invalid_argument{"barkley: dx must be positive"};
        if (!(eps > 0)) throw invalid_argument{"barkley: eps must be positive"};
        if (a == 0 || !std::isfinite(a)) throw invalid_argument{"barkley: a must be finite and non-zero"};
        if (nx < 3 || ny < 3) throw invalid_argument{"barkley: grid must be at least 3x3"};
    }

    friend bool operator==(const barkley_params&, const barkley_params&) = default;
};

/// Multiplicative perturbation of eps: eps_e = eps (1 + e).
struct model_error {
    double e = 0.0;
};

/// Which right-hand-side terms barkley_step evaluates. `diffusion_only` drops the
/// reaction of U and is meant for conservation checks.
enum class barkley_terms { full, diffusion_only };

/// Five-point Laplacian with zero-normal-derivative boundaries. Out-of-grid
/// neighbours take the value of the nearest boundary cell (clamped index), so the
/// stencil sums to zero over the grid.
inline grid2d laplacian_no_flux(const grid2d& field, double dx)
{
    const std::size_t nx = field.nx(), ny = field.ny();
    if (nx < 3 || ny < 3) throw dimension_error{"laplacian_no_flux: grid must be at least 3x3"};
    if (!(dx > 0)) throw invalid_argument{"laplacian_no_flux: dx must be positive"};

    const double inv_dx2 = 1.0 / (dx * dx);
    grid2d out{nx, ny};
    for (std::size_t j = 0; j < ny; ++j) {
        const std::size_t jm = j == 0 ? 0 : j - 1;
        const std::size_t jp = j + 1 == ny ? j : j + 1;
        for (std::size_t i = 0; i < nx; ++i) {
            const std::size_t im = i == 0 ? 0 : i - 1;
            const std::size_t ip = i + 1 == nx ? i : i + 1;
            const double c = field(i, j);
            out(i, j) = (field(im, j) + field(ip, j) + field(i, jm) + field(i, jp) - 4.0 * c) * inv_dx2;
        }
    }
    return out;
}

namespace detail {

inline void check_state(const field_pair& s, const barkley_params& p)
{
    if (!s.u.same_shape(s.v)) throw dimension_error{"barkley: U and V shapes differ"};
    if (s.nx() != p.nx || s.ny() != p.ny)
        throw dimension_error{"barkley: state is " + std::to_string(s.nx()) + "x" + std::to_string(s.ny())
                              + ", params expect " + std::to_string(p.nx) + "x" + std::to_string(p.ny)};
}

}  // namespace detail

/// One explicit Euler step written into `out` (resized as needed; must not alias `in`).
/// Returns false if any output entry is non-finite.
inline bool barkley_step_into(const field_pair& in, field_pair& out, const barkley_params& p,
                              barkley_terms terms = barkley_terms::full)
{
    const std::size_t nx = p.nx, ny = p.ny;
    if (!out.u.same_shape(in.u) || !out.v.same_shape(in.v)) out = field_pair{nx, ny};

    const double diff = p.d / (p.dx * p.dx);
    const double inv_eps = 1.0 / p.eps;
    const double inv_a = 1.0 / p.a;
    const bool reaction = terms == barkley_terms::full;
    bool finite = true;

    for (std::size_t j = 0; j < ny; ++j) {
        const std::size_t jm = j == 0 ? 0 : j - 1;
        const std::size_t jp = j + 1 == ny ? j : j + 1;
        for (std::size_t i = 0; i < nx; ++i) {
            const std::size_t im = i == 0 ? 0 : i - 1;
            const std::size_t ip = i + 1 == nx ? i : i + 1;
            const double u = in.u(i, j);
            const double v = in.v(i, j);
            const double lap = in.u(im, j) + in.u(ip, j) + in.u(i, jm) + in.u(i, jp) - 4.0 * u;
            double du = diff * lap;
            if (reaction) du += inv_eps * u * (1.0 - u) * (u - (v + p.b) * inv_a);
            const double un = u + p.dt * du;
            const double vn = v + p.dt * (u * u * u - v);
            out.u(i, j) = un;
            out.v(i, j) = vn;
            finite = finite && std::isfinite(un) && std::isfinite(vn);
        }
    }
    return finite;
}

/// u' = u + dt (D lap u + (1/eps) u (1-u) (u - (v+b)/a)),  v' = v + dt (u^3 - v).
inline field_pair barkley_step(const field_pair& state, const barkley_params& p,
                               barkley_terms terms = barkley_terms::full)
{
    p.validate();
    detail::check_state(state, p);
    field_pair out{p.nx, p.ny};
    if (!barkley_step_into(state, out, p, terms)) throw blow_up_error{"barkley_step: non-finite state", 1};
    return out;
}

/// Trajectory of n_steps + 1 states starting with `init`.
inline trajectory simulate(const barkley_params& p, const field_pair& init, std::size_t n_steps)
{
    p.validate();
    detail::check_state(init, p);
    if (n_steps < 1) throw invalid_argument{"simulate: n_steps must be at least 1"};
    if (!init.all_finite()) throw invalid_argument{"simulate: initial state is not finite"};

    trajectory out;
    out.reserve(n_steps + 1);
    out.push_back(init);
    for (std::size_t k = 1; k <= n_steps; ++k) {
        field_pair next{p.nx, p.ny};
        if (!barkley_step_into(out.back(), next, p)) throw blow_up_error{"simulate: non-finite state", k};
        out.push_back(std::move(next));
    }
    return out;
}

/// Parameters of the imperfect model: eps replaced by eps (1 + e).
inline barkley_params make_epsilon_model(const barkley_params& p, model_error err)
{
    if (err.e == -1.0) throw invalid_argument{"make_epsilon_model: e = -1 would zero eps"};
    if (!std::isfinite(err.e)) throw invalid_argument{"make_epsilon_model: e must be finite"};
    barkley_params out = p;
    out.eps = p.eps * (1.0 + err.e);
    return out;
}

/// Spiral-inducing start: U = 1 on the left half, V = a/2 on the bottom half,
/// with uniform noise of amplitude 0.01 on both fields. The noise is subtracted
/// where U = 1 so that U stays inside [0, 1]; the cubic V equation turns any
/// U > 1 inside a refractory region into a runaway.
inline field_pair default_initial_condition(std::size_t nx, std::size_t ny, std::uint64_t seed,
                                            double a = barkley_params{}.a)
{
    if (nx < 3 || ny < 3) throw invalid_argument{"default_initial_condition: grid must be at least 3x3"};
    auto gen = make_engine(derive_seed(seed, {stream::initial_condition}));
    std::uniform_real_distribution<double> noise{0.0, 0.01};

    field_pair s{nx, ny};
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            s.u(i, j) = 2 * i < nx ? 1.0 - noise(gen) : noise(gen);
            s.v(i, j) = (2 * j < ny ? 0.5 * a : 0.0) + noise(gen);
        }
    }
    return s;
}

}  // namespace bkrc
