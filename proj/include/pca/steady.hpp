#pragma once

#include <cmath>
#include <utility>

#include "pca/config.hpp"
#include "pca/grid.hpp"

namespace pca {

/// Stationary triple: the phase vanishes, nutrient and PSA solve
/// constant-coefficient Helmholtz problems with no-flux boundaries.
struct SteadyState {
    Field phi_inf;    // identically zero, Dirichlet layout
    Field sigma_inf;  // Neumann layout
    Field p_inf;      // Neumann layout
    double gamma_value = 0.0;
};

/// Quadratic energy whose critical points are the stationary solutions:
/// Gamma(u, v) = int eta/2 |grad u|^2 + gamma_h/2 u^2 - S_h u
///             + int D/2 |grad v|^2 + gamma_p/2 v^2 - alpha_h v.
inline double gamma_functional(const Grid& grid, const Field& u, const Field& v,
                               const ModelParams& params) {
    require_layout(grid, u);
    require_layout(grid, v);
    const double l2u = norm_l2(grid, u), l2v = norm_l2(grid, v);
    return 0.5 * params.eta * seminorm_h1_sq(grid, u) + 0.5 * params.gamma_h * l2u * l2u -
           params.S_h * integral(grid, u) + 0.5 * params.D * seminorm_h1_sq(grid, v) +
           0.5 * params.gamma_p * l2v * l2v - params.alpha_h * integral(grid, v);
}

inline SteadyState steady_closed_form(const Grid& grid, const ModelParams& params) {
    SteadyState s;
    s.phi_inf = make_field(grid, BcKind::Dirichlet0, 0.0);
    s.sigma_inf = make_field(grid, BcKind::Neumann0, params.sigma_infinity());
    s.p_inf = make_field(grid, BcKind::Neumann0, params.p_infinity());
    s.gamma_value = gamma_functional(grid, s.sigma_inf, s.p_inf, params);
    return s;
}

/// Discrete solve of (gamma_h I - eta Lap) sigma = S_h and
/// (gamma_p I - D Lap) p = alpha_h with no-flux boundaries.
inline SteadyState steady_solve_discrete(const Grid& grid, const ModelParams& params,
                                         double rel_tol = 1e-12) {
    SteadyState s;
    s.phi_inf = make_field(grid, BcKind::Dirichlet0, 0.0);
    Field rhs = make_field(grid, BcKind::Neumann0, params.S_h);
    s.sigma_inf = make_field(grid, BcKind::Neumann0);
    solve_helmholtz(grid, params.gamma_h, params.eta, rhs, s.sigma_inf, rel_tol);
    rhs = make_field(grid, BcKind::Neumann0, params.alpha_h);
    s.p_inf = make_field(grid, BcKind::Neumann0);
    solve_helmholtz(grid, params.gamma_p, params.D, rhs, s.p_inf, rel_tol);
    s.gamma_value = gamma_functional(grid, s.sigma_inf, s.p_inf, params);
    return s;
}

/// Norm of the Gateaux derivative of Gamma at (u, v): the L2 norm of the
/// residual fields of the two stationary systems.
inline double gamma_gradient_norm(const Grid& grid, const Field& u, const Field& v,
                                  const ModelParams& params) {
    Field lap;
    laplacian_neumann(grid, u, lap);
    Field g = u;
    for (std::size_t k = 0; k < g.v.size(); ++k)
        g.v[k] = params.gamma_h * u.v[k] - params.eta * lap.v[k] - params.S_h;
    const double gu = norm_l2(grid, g);
    laplacian_neumann(grid, v, lap);
    g = v;
    for (std::size_t k = 0; k < g.v.size(); ++k)
        g.v[k] = params.gamma_p * v.v[k] - params.D * lap.v[k] - params.alpha_h;
    const double gv = norm_l2(grid, g);
    return std::sqrt(gu * gu + gv * gv);
}

/// Minimize Gamma by conjugate gradients on its quadratic form, starting
/// from zero, until the Gateaux-derivative norm drops to `tol`.
inline SteadyState gamma_minimize(const Grid& grid, const ModelParams& params, double tol) {
    if (!(tol > 0.0)) throw ConfigError::bad_value("gamma_minimize tol must be positive");
    SteadyState s;
    s.phi_inf = make_field(grid, BcKind::Dirichlet0, 0.0);
    s.sigma_inf = make_field(grid, BcKind::Neumann0, 0.0);
    s.p_inf = make_field(grid, BcKind::Neumann0, 0.0);

    auto minimize_one = [&](double alpha, double kdiff, double source, Field& x) {
        const Field rhs = make_field(grid, BcKind::Neumann0, source);
        Field lap;
        Field work = make_field(grid, BcKind::Neumann0);
        auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
            work.v = in;
            laplacian_neumann(grid, work, lap);
            for (std::size_t i = 0; i < in.size(); ++i)
                out[i] = alpha * in[i] - kdiff * lap.v[i];
        };
        auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
            return dot_weighted(grid, BcKind::Neumann0, a, b);
        };
        double diag = alpha + 2.0 * kdiff / (grid.h(0) * grid.h(0));
        if (grid.dim == 2) diag += 2.0 * kdiff / (grid.h(1) * grid.h(1));
        const int max_iter = 100 + 10 * static_cast<int>(rhs.v.size());
        // The Gateaux-derivative norm of each component is exactly the CG
        // residual norm in the weighted inner product.
        auto res = pcg(apply, rhs.v, x.v, 1.0 / diag, dot, 0.0, tol, max_iter);
        if (!res.converged) throw NoConvergence("gamma_minimize");
    };
    minimize_one(params.gamma_h, params.eta, params.S_h, s.sigma_inf);
    minimize_one(params.gamma_p, params.D, params.alpha_h, s.p_inf);
    s.gamma_value = gamma_functional(grid, s.sigma_inf, s.p_inf, params);
    return s;
}

/// L2 distance between two steady candidates (nutrient and PSA parts).
inline double steady_distance(const Grid& grid, const SteadyState& a, const SteadyState& b) {
    Field diff = a.sigma_inf;
    for (std::size_t k = 0; k < diff.v.size(); ++k) diff.v[k] -= b.sigma_inf.v[k];
    const double ds = norm_l2(grid, diff);
    diff = a.p_inf;
    for (std::size_t k = 0; k < diff.v.size(); ++k) diff.v[k] -= b.p_inf.v[k];
    const double dp = norm_l2(grid, diff);
    return std::sqrt(ds * ds + dp * dp);
}

struct SteadyAgreement {
    double closed_vs_discrete = 0.0;
    double closed_vs_minimize = 0.0;
    double discrete_vs_minimize = 0.0;
    double max_pairwise() const {
        return std::max({closed_vs_discrete, closed_vs_minimize, discrete_vs_minimize});
    }
};

/// Run the three routes and report the pairwise L2 distances.
inline std::pair<SteadyState, SteadyAgreement> steady_triple_agreement(
    const Grid& grid, const ModelParams& params, double minimize_tol = 1e-12) {
    const SteadyState closed = steady_closed_form(grid, params);
    const SteadyState discrete = steady_solve_discrete(grid, params);
    const SteadyState minimized = gamma_minimize(grid, params, minimize_tol);
    SteadyAgreement agreement;
    agreement.closed_vs_discrete = steady_distance(grid, closed, discrete);
    agreement.closed_vs_minimize = steady_distance(grid, closed, minimized);
    agreement.discrete_vs_minimize = steady_distance(grid, discrete, minimized);
    return {closed, agreement};
}

}  // namespace pca
