#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pca/errors.hpp"

namespace pca {

/// Solve a tridiagonal system in place. `sub[i]` couples row i to i-1
/// (sub[0] unused), `sup[i]` couples row i to i+1 (last entry unused).
/// No pivoting; callers pass diagonally dominant systems.
inline std::vector<double> solve_tridiagonal(std::vector<double> sub,
                                             std::vector<double> diag,
                                             std::vector<double> sup,
                                             std::vector<double> rhs) {
    const std::size_t m = diag.size();
    for (std::size_t i = 1; i < m; ++i) {
        const double w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    rhs[m - 1] /= diag[m - 1];
    for (std::size_t i = m - 1; i-- > 0;)
        rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
    return rhs;
}

struct IterativeResult {
    int iterations = 0;
    double residual = 0.0;  // final ||b - Ax|| / ||b|| (or absolute, per stop mode)
    bool converged = false;
};

/// Preconditioned conjugate gradient for an operator that is self-adjoint
/// positive definite with respect to the inner product `dot`. The
/// preconditioner is a single scalar: the stencil diagonal is constant for
/// every operator assembled here. Stops when the residual norm drops below
/// max(rel_tol * ||b||, abs_tol).
template <class ApplyOp, class Dot>
IterativeResult pcg(ApplyOp&& apply, const std::vector<double>& b, std::vector<double>& x,
                    double inv_diag, Dot&& dot, double rel_tol, double abs_tol,
                    int max_iter) {
    const std::size_t m = b.size();
    std::vector<double> r(m), z(m), p(m), ap(m);

    apply(x, ap);
    for (std::size_t i = 0; i < m; ++i) r[i] = b[i] - ap[i];

    const double bnorm = std::sqrt(dot(b, b));
    const double stop = std::max(rel_tol * bnorm, abs_tol);

    IterativeResult out;
    double rnorm = std::sqrt(dot(r, r));
    if (rnorm <= stop) {
        out.converged = true;
        out.residual = bnorm > 0.0 ? rnorm / bnorm : rnorm;
        return out;
    }

    for (std::size_t i = 0; i < m; ++i) z[i] = inv_diag * r[i];
    p = z;
    double rz = dot(r, z);

    for (int it = 1; it <= max_iter; ++it) {
        apply(p, ap);
        const double pap = dot(p, ap);
        if (!(pap > 0.0)) break;  // lost positive definiteness -> diverged
        const double alpha = rz / pap;
        for (std::size_t i = 0; i < m; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = std::sqrt(dot(r, r));
        out.iterations = it;
        if (rnorm <= stop) {
            out.converged = true;
            break;
        }
        for (std::size_t i = 0; i < m; ++i) z[i] = inv_diag * r[i];
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < m; ++i) p[i] = z[i] + beta * p[i];
    }
    out.residual = bnorm > 0.0 ? rnorm / bnorm : rnorm;
    return out;
}

}  // namespace pca
