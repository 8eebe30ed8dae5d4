#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pca/config.hpp"
#include "pca/grid.hpp"

namespace pca {

/// Tilting function: maps the nutrient level to the local
/// proliferation/apoptosis balance through a scaled arctangent,
/// m(sigma) = m_ref * ((rho + A)/2 + (rho - A)/pi * atan((sigma - sigma_l)/sigma_r)).
inline double tilt_m(double sigma_value, const ModelParams& p) {
    return p.m_ref * (0.5 * (p.rho + p.A) +
                      (p.rho - p.A) / std::numbers::pi *
                          std::atan((sigma_value - p.sigma_l) / p.sigma_r));
}

/// Range of the tilting function over all nutrient levels (closed interval).
inline std::pair<double, double> tilt_range(const ModelParams& p) {
    const double lo = p.m_ref * std::min(p.rho, p.A);
    const double hi = p.m_ref * std::max(p.rho, p.A);
    return {lo, hi};
}

/// Phase nonlinearity f(phi, sigma, u) = M * (1 - 2 phi - 3 (m(sigma) - m_ref u)).
inline double nonlinearity_f(double phi, double sigma, double u, const ModelParams& p) {
    return p.M * (1.0 - 2.0 * phi - 3.0 * (tilt_m(sigma, p) - p.m_ref * u));
}

/// Certified bound for sup |f| over the a-priori box 0 <= phi <= 1,
/// m in its closed range, |u| <= u_sup. Valid along any admissible
/// trajectory, independent of the realized nutrient history.
inline double f_sup_bound(const ModelParams& p, const TherapySchedule& schedule) {
    const auto [m_lo, m_hi] = tilt_range(p);
    const double drug = 3.0 * p.m_ref * schedule.u_sup;
    const double g_hi = 1.0 - 3.0 * m_lo + drug;         // phi = 0
    const double g_lo = -1.0 - 3.0 * m_hi - drug;        // phi = 1
    return p.M * std::max(std::abs(g_lo), std::abs(g_hi));
}

/// Non-diffusive right-hand sides, arranged so that each equation reads
/// d/dt field = diffusion + reaction.
struct ReactionEval {
    Field r_phi;    // Dirichlet layout
    Field r_sigma;  // Neumann layout
    Field r_p;      // Neumann layout
};

struct StateView {
    const Field& phi;
    const Field& sigma;
    const Field& p;
};

inline ReactionEval reactions(const Grid& grid, const StateView& state, double t,
                              const ModelParams& params, const TherapySchedule& schedule) {
    require_layout(grid, state.phi);
    require_layout(grid, state.sigma);
    require_layout(grid, state.p);
    if (state.phi.bc != BcKind::Dirichlet0 || state.sigma.bc != BcKind::Neumann0 ||
        state.p.bc != BcKind::Neumann0)
        throw BcMismatch("reactions expects (Dirichlet, Neumann, Neumann) fields");

    const auto& u_seg = schedule.u.at(t);
    const auto& s_seg = schedule.s.at(t);
    if (!u_seg.cells.empty() && u_seg.cells.size() != state.phi.v.size())
        throw ShapeMismatch("per-cell u profile does not match the phase layout");
    if (!s_seg.cells.empty() && s_seg.cells.size() != state.sigma.v.size())
        throw ShapeMismatch("per-cell s profile does not match the nutrient layout");

    ReactionEval out;
    out.r_phi = make_field(grid, BcKind::Dirichlet0);
    out.r_sigma = make_field(grid, BcKind::Neumann0);
    out.r_p = make_field(grid, BcKind::Neumann0);

    const double gamma_ch = params.gamma_ch();
    const double s_ch = params.s_ch();
    const double alpha_ch = params.alpha_ch();

    // Phase reaction at interior nodes; the logistic gate 2 phi (1 - phi)
    // vanishes identically at phi = 0 and phi = 1.
    for (std::size_t k = 0; k < state.phi.v.size(); ++k) {
        const double phi = state.phi.v[k];
        const double sig = state.sigma.v[dirichlet_to_neumann_index(grid, k)];
        const double u = u_seg.cells.empty() ? u_seg.value : u_seg.cells[k];
        out.r_phi.v[k] = -2.0 * phi * (1.0 - phi) * nonlinearity_f(phi, sig, u, params);
    }

    // Nutrient and PSA reactions on the full node set; the phase value is
    // zero on the boundary ring.
    std::vector<double> phi_full(state.sigma.v.size(), 0.0);
    for (std::size_t k = 0; k < state.phi.v.size(); ++k)
        phi_full[dirichlet_to_neumann_index(grid, k)] = state.phi.v[k];

    for (std::size_t k = 0; k < state.sigma.v.size(); ++k) {
        const double phi = phi_full[k];
        const double sig = state.sigma.v[k];
        const double s = s_seg.cells.empty() ? s_seg.value : s_seg.cells[k];
        out.r_sigma.v[k] = -params.gamma_h * sig - gamma_ch * sig * phi + params.S_h +
                           s_ch * phi - s * phi;
        out.r_p.v[k] = -params.gamma_p * state.p.v[k] + params.alpha_h + alpha_ch * phi;
    }
    return out;
}

}  // namespace pca
