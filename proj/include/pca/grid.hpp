#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include "pca/csv.hpp"
#include "pca/errors.hpp"
#include "pca/linsolve.hpp"

namespace pca {

enum class BcKind { Dirichlet0, Neumann0 };

inline const char* bc_name(BcKind bc) {
    return bc == BcKind::Dirichlet0 ? "dirichlet0" : "neumann0";
}

/// Uniform structured mesh on an interval (dim 1) or rectangle (dim 2).
/// `n` counts interior nodes per axis, so the spacing is L/(n+1).
/// Homogeneous-Dirichlet fields store interior nodes only; homogeneous-
/// Neumann fields store all nodes including the boundary, with mirror
/// ghosts applied by the stencils.
struct Grid {
    int dim = 1;
    std::array<int, 2> n{3, 3};
    std::array<double, 2> extent{1.0, 1.0};

    Grid() = default;
    Grid(int n1, double length) : dim(1), n{n1, 0}, extent{length, 0.0} { validate(); }
    Grid(int n1, int n2, double lx, double ly) : dim(2), n{n1, n2}, extent{lx, ly} {
        validate();
    }

    void validate() const {
        if (dim != 1 && dim != 2) throw ShapeMismatch("grid dim must be 1 or 2");
        for (int a = 0; a < dim; ++a) {
            if (n[static_cast<std::size_t>(a)] < 3)
                throw ShapeMismatch("grid needs at least 3 interior nodes per axis");
            if (!(extent[static_cast<std::size_t>(a)] > 0.0))
                throw ShapeMismatch("grid extent must be positive");
        }
    }

    double h(int axis) const {
        return extent[static_cast<std::size_t>(axis)] /
               (n[static_cast<std::size_t>(axis)] + 1);
    }

    int axis_nodes(BcKind bc, int axis) const {
        const int m = n[static_cast<std::size_t>(axis)];
        return bc == BcKind::Dirichlet0 ? m : m + 2;
    }

    std::size_t num_nodes(BcKind bc) const {
        std::size_t total = static_cast<std::size_t>(axis_nodes(bc, 0));
        if (dim == 2) total *= static_cast<std::size_t>(axis_nodes(bc, 1));
        return total;
    }

    double measure() const { return dim == 1 ? extent[0] : extent[0] * extent[1]; }

    /// Quadrature weight along one axis: trapezoidal for Neumann layouts
    /// (half cells at the boundary nodes), full cells for Dirichlet.
    double axis_weight(BcKind bc, int axis, int i) const {
        const double hx = h(axis);
        if (bc == BcKind::Dirichlet0) return hx;
        return (i == 0 || i == axis_nodes(bc, axis) - 1) ? 0.5 * hx : hx;
    }
};

struct Field {
    BcKind bc = BcKind::Dirichlet0;
    std::vector<double> v;
};

inline Field make_field(const Grid& grid, BcKind bc, double value = 0.0) {
    return Field{bc, std::vector<double>(grid.num_nodes(bc), value)};
}

inline void require_layout(const Grid& grid, const Field& field) {
    if (field.v.size() != grid.num_nodes(field.bc))
        throw ShapeMismatch("field length does not match grid layout");
}

/// Index of the Neumann-layout node at the same physical point as
/// Dirichlet interior node k (interior nodes are offset by one per axis).
inline std::size_t dirichlet_to_neumann_index(const Grid& grid, std::size_t k) {
    if (grid.dim == 1) return k + 1;
    const std::size_t nx = static_cast<std::size_t>(grid.n[0]);
    const std::size_t i = k % nx, j = k / nx;
    return (j + 1) * static_cast<std::size_t>(grid.n[0] + 2) + (i + 1);
}

// ---------------------------------------------------------------------------
// Laplacians

inline void laplacian_dirichlet(const Grid& grid, const Field& field, Field& out) {
    if (field.bc != BcKind::Dirichlet0) throw BcMismatch("laplacian_dirichlet");
    require_layout(grid, field);
    out.bc = BcKind::Dirichlet0;
    out.v.resize(field.v.size());
    const double ihx2 = 1.0 / (grid.h(0) * grid.h(0));
    const auto& u = field.v;
    if (grid.dim == 1) {
        const int m = grid.n[0];
        for (int i = 0; i < m; ++i) {
            const double left = i > 0 ? u[static_cast<std::size_t>(i - 1)] : 0.0;
            const double right = i < m - 1 ? u[static_cast<std::size_t>(i + 1)] : 0.0;
            out.v[static_cast<std::size_t>(i)] =
                (left - 2.0 * u[static_cast<std::size_t>(i)] + right) * ihx2;
        }
        return;
    }
    const int nx = grid.n[0], ny = grid.n[1];
    const double ihy2 = 1.0 / (grid.h(1) * grid.h(1));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const std::size_t k = static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) +
                                  static_cast<std::size_t>(i);
            const double c = u[k];
            const double xl = i > 0 ? u[k - 1] : 0.0;
            const double xr = i < nx - 1 ? u[k + 1] : 0.0;
            const double yl = j > 0 ? u[k - static_cast<std::size_t>(nx)] : 0.0;
            const double yr = j < ny - 1 ? u[k + static_cast<std::size_t>(nx)] : 0.0;
            out.v[k] = (xl - 2.0 * c + xr) * ihx2 + (yl - 2.0 * c + yr) * ihy2;
        }
    }
}

inline void laplacian_neumann(const Grid& grid, const Field& field, Field& out) {
    if (field.bc != BcKind::Neumann0) throw BcMismatch("laplacian_neumann");
    require_layout(grid, field);
    out.bc = BcKind::Neumann0;
    out.v.resize(field.v.size());
    const double ihx2 = 1.0 / (grid.h(0) * grid.h(0));
    const auto& u = field.v;
    if (grid.dim == 1) {
        const int m = grid.n[0] + 2;
        for (int i = 0; i < m; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            double d2;
            if (i == 0)
                d2 = 2.0 * (u[k + 1] - u[k]);  // mirror ghost
            else if (i == m - 1)
                d2 = 2.0 * (u[k - 1] - u[k]);
            else
                d2 = u[k - 1] - 2.0 * u[k] + u[k + 1];
            out.v[k] = d2 * ihx2;
        }
        return;
    }
    const int nx = grid.n[0] + 2, ny = grid.n[1] + 2;
    const double ihy2 = 1.0 / (grid.h(1) * grid.h(1));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const std::size_t k = static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) +
                                  static_cast<std::size_t>(i);
            const double c = u[k];
            double dx2, dy2;
            if (i == 0)
                dx2 = 2.0 * (u[k + 1] - c);
            else if (i == nx - 1)
                dx2 = 2.0 * (u[k - 1] - c);
            else
                dx2 = u[k - 1] - 2.0 * c + u[k + 1];
            if (j == 0)
                dy2 = 2.0 * (u[k + static_cast<std::size_t>(nx)] - c);
            else if (j == ny - 1)
                dy2 = 2.0 * (u[k - static_cast<std::size_t>(nx)] - c);
            else
                dy2 = u[k - static_cast<std::size_t>(nx)] - 2.0 * c +
                      u[k + static_cast<std::size_t>(nx)];
            out.v[k] = dx2 * ihx2 + dy2 * ihy2;
        }
    }
}

inline Field laplacian_dirichlet(const Grid& grid, const Field& field) {
    Field out;
    laplacian_dirichlet(grid, field, out);
    return out;
}

inline Field laplacian_neumann(const Grid& grid, const Field& field) {
    Field out;
    laplacian_neumann(grid, field, out);
    return out;
}

inline void apply_laplacian(const Grid& grid, const Field& field, Field& out) {
    if (field.bc == BcKind::Dirichlet0)
        laplacian_dirichlet(grid, field, out);
    else
        laplacian_neumann(grid, field, out);
}

// ---------------------------------------------------------------------------
// Quadrature, norms

/// Cell-measure-weighted inner product matching each layout's quadrature.
inline double dot_weighted(const Grid& grid, BcKind bc, const std::vector<double>& a,
                           const std::vector<double>& b) {
    double acc = 0.0;
    if (grid.dim == 1) {
        const int m = grid.axis_nodes(bc, 0);
        for (int i = 0; i < m; ++i)
            acc += grid.axis_weight(bc, 0, i) * a[static_cast<std::size_t>(i)] *
                   b[static_cast<std::size_t>(i)];
        return acc;
    }
    const int mx = grid.axis_nodes(bc, 0), my = grid.axis_nodes(bc, 1);
    for (int j = 0; j < my; ++j) {
        const double wy = grid.axis_weight(bc, 1, j);
        double row = 0.0;
        for (int i = 0; i < mx; ++i)
            row += grid.axis_weight(bc, 0, i) *
                   a[static_cast<std::size_t>(j * mx + i)] *
                   b[static_cast<std::size_t>(j * mx + i)];
        acc += wy * row;
    }
    return acc;
}

inline double integral(const Grid& grid, const Field& field) {
    require_layout(grid, field);
    const std::vector<double> ones(field.v.size(), 1.0);
    return dot_weighted(grid, field.bc, field.v, ones);
}

inline double norm_l2(const Grid& grid, const Field& field) {
    require_layout(grid, field);
    return std::sqrt(dot_weighted(grid, field.bc, field.v, field.v));
}

/// Forward-difference gradient seminorm. Dirichlet layouts include the
/// gaps to the zero boundary values; Neumann layouts sum the gaps between
/// stored nodes, weighted trapezoidally in the transverse direction so
/// that <-Lap u, u> equals the squared seminorm exactly.
inline double seminorm_h1_sq(const Grid& grid, const Field& field) {
    require_layout(grid, field);
    const auto& u = field.v;
    const bool dir = field.bc == BcKind::Dirichlet0;
    double acc = 0.0;
    if (grid.dim == 1) {
        const int m = grid.axis_nodes(field.bc, 0);
        const double ih = 1.0 / grid.h(0);
        if (dir) {
            double prev = 0.0;
            for (int i = 0; i <= m; ++i) {
                const double cur = i < m ? u[static_cast<std::size_t>(i)] : 0.0;
                acc += (cur - prev) * (cur - prev) * ih;
                prev = cur;
            }
        } else {
            for (int i = 0; i + 1 < m; ++i) {
                const double d = u[static_cast<std::size_t>(i + 1)] -
                                 u[static_cast<std::size_t>(i)];
                acc += d * d * ih;
            }
        }
        return acc;
    }
    const int mx = grid.axis_nodes(field.bc, 0), my = grid.axis_nodes(field.bc, 1);
    const double ihx = 1.0 / grid.h(0), ihy = 1.0 / grid.h(1);
    auto at = [&](int i, int j) { return u[static_cast<std::size_t>(j * mx + i)]; };
    // x-direction gaps, transverse weight in y
    for (int j = 0; j < my; ++j) {
        const double wy = grid.axis_weight(field.bc, 1, j);
        double row = 0.0;
        if (dir) {
            double prev = 0.0;
            for (int i = 0; i <= mx; ++i) {
                const double cur = i < mx ? at(i, j) : 0.0;
                row += (cur - prev) * (cur - prev);
                prev = cur;
            }
        } else {
            for (int i = 0; i + 1 < mx; ++i) {
                const double d = at(i + 1, j) - at(i, j);
                row += d * d;
            }
        }
        acc += wy * row * ihx;
    }
    // y-direction gaps, transverse weight in x
    for (int i = 0; i < mx; ++i) {
        const double wx = grid.axis_weight(field.bc, 0, i);
        double col = 0.0;
        if (dir) {
            double prev = 0.0;
            for (int j = 0; j <= my; ++j) {
                const double cur = j < my ? at(i, j) : 0.0;
                col += (cur - prev) * (cur - prev);
                prev = cur;
            }
        } else {
            for (int j = 0; j + 1 < my; ++j) {
                const double d = at(i, j + 1) - at(i, j);
                col += d * d;
            }
        }
        acc += wx * col * ihy;
    }
    return acc;
}

inline double seminorm_h1(const Grid& grid, const Field& field) {
    return std::sqrt(seminorm_h1_sq(grid, field));
}

inline double norm_h1(const Grid& grid, const Field& field) {
    const double l2 = norm_l2(grid, field);
    return std::sqrt(l2 * l2 + seminorm_h1_sq(grid, field));
}

struct FieldRange {
    double min_value = 0.0;
    double max_value = 0.0;
    std::size_t argmin = 0;
    std::size_t argmax = 0;
};

inline FieldRange field_range(const Field& field) {
    FieldRange r;
    r.min_value = r.max_value = field.v.empty() ? 0.0 : field.v[0];
    for (std::size_t k = 1; k < field.v.size(); ++k) {
        if (field.v[k] < r.min_value) {
            r.min_value = field.v[k];
            r.argmin = k;
        }
        if (field.v[k] > r.max_value) {
            r.max_value = field.v[k];
            r.argmax = k;
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Helmholtz solves:  alpha*u - kdiff*Lap(u) = rhs

struct SolveStats {
    int iterations = 0;
    double rel_residual = 0.0;
};

namespace detail {

inline void helmholtz_tridiagonal(const Grid& grid, BcKind bc, double alpha, double kdiff,
                                  std::vector<double>& sub, std::vector<double>& diag,
                                  std::vector<double>& sup) {
    const int m = grid.axis_nodes(bc, 0);
    const double k = kdiff / (grid.h(0) * grid.h(0));
    sub.assign(static_cast<std::size_t>(m), -k);
    diag.assign(static_cast<std::size_t>(m), alpha + 2.0 * k);
    sup.assign(static_cast<std::size_t>(m), -k);
    if (bc == BcKind::Neumann0) {
        sup[0] = -2.0 * k;  // mirror ghosts fold into the first/last rows
        sub[static_cast<std::size_t>(m - 1)] = -2.0 * k;
    }
}

}  // namespace detail

/// Direct tridiagonal elimination in 1D, diagonally preconditioned CG in 2D.
inline SolveStats solve_helmholtz(const Grid& grid, double alpha, double kdiff,
                                  const Field& rhs, Field& x, double rel_tol,
                                  double abs_tol = 0.0) {
    require_layout(grid, rhs);
    x.bc = rhs.bc;
    if (x.v.size() != rhs.v.size()) x.v.assign(rhs.v.size(), 0.0);

    SolveStats stats;
    if (grid.dim == 1) {
        std::vector<double> sub, diag, sup;
        detail::helmholtz_tridiagonal(grid, rhs.bc, alpha, kdiff, sub, diag, sup);
        x.v = solve_tridiagonal(sub, diag, sup, rhs.v);
        Field ax;
        Field tmp{rhs.bc, x.v};
        apply_laplacian(grid, tmp, ax);
        double rr = 0.0, bb = 0.0;
        for (std::size_t i = 0; i < x.v.size(); ++i) {
            const double r = rhs.v[i] - (alpha * x.v[i] - kdiff * ax.v[i]);
            rr += r * r;
            bb += rhs.v[i] * rhs.v[i];
        }
        stats.rel_residual = bb > 0.0 ? std::sqrt(rr / bb) : std::sqrt(rr);
        return stats;
    }

    Field lap;
    Field work{rhs.bc, std::vector<double>(rhs.v.size())};
    auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
        work.v = in;
        apply_laplacian(grid, work, lap);
        for (std::size_t i = 0; i < in.size(); ++i)
            out[i] = alpha * in[i] - kdiff * lap.v[i];
    };
    auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
        return dot_weighted(grid, rhs.bc, a, b);
    };
    const double diag_value = alpha + 2.0 * kdiff / (grid.h(0) * grid.h(0)) +
                              2.0 * kdiff / (grid.h(1) * grid.h(1));
    const int max_iter = 100 + 10 * static_cast<int>(rhs.v.size());
    auto res = pcg(apply, rhs.v, x.v, 1.0 / diag_value, dot, rel_tol, abs_tol, max_iter);
    if (!res.converged)
        throw SolverDivergence("helmholtz cg stalled at residual " +
                               std::to_string(res.residual));
    stats.iterations = res.iterations;
    stats.rel_residual = res.residual;
    return stats;
}

// ---------------------------------------------------------------------------
// Smallest eigenvalue of the homogeneous-Dirichlet Laplacian

/// Inverse power iteration on -Lap with zero boundary values. Rayleigh
/// quotients of successive iterates stop at relative tolerance `tol`.
inline double lambda1(const Grid& grid, double tol = 1e-10, int max_iter = 50000) {
    grid.validate();
    Field x = make_field(grid, BcKind::Dirichlet0, 1.0);
    Field y = make_field(grid, BcKind::Dirichlet0);

    auto normalize = [&](Field& f) {
        const double nrm = norm_l2(grid, f);
        for (auto& value : f.v) value /= nrm;
    };
    normalize(x);

    double lambda_prev = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        solve_helmholtz(grid, 0.0, 1.0, x, y, 1e-13);
        const double num = dot_weighted(grid, BcKind::Dirichlet0, y.v, x.v);
        const double den = dot_weighted(grid, BcKind::Dirichlet0, y.v, y.v);
        const double lambda_est = num / den;
        normalize(y);
        std::swap(x.v, y.v);
        if (it > 0 && std::abs(lambda_est - lambda_prev) <= tol * std::abs(lambda_est))
            return lambda_est;
        lambda_prev = lambda_est;
    }
    throw NoConvergence("inverse power iteration for lambda1");
}

// ---------------------------------------------------------------------------
// Snapshot files: header "dim <d> n <n...> h <h...> bc <kind>", then
// row-major node values, one per line.

inline void write_snapshot(std::ostream& os, const Grid& grid, const Field& field) {
    require_layout(grid, field);
    os << "dim " << grid.dim << " n";
    for (int a = 0; a < grid.dim; ++a) os << ' ' << grid.n[static_cast<std::size_t>(a)];
    os << " h";
    for (int a = 0; a < grid.dim; ++a) os << ' ' << format_double(grid.h(a));
    os << " bc " << bc_name(field.bc) << '\n';
    for (double value : field.v) os << format_double(value) << '\n';
}

inline void write_snapshot(const std::string& path, const Grid& grid, const Field& field) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open snapshot file " + path);
    write_snapshot(os, grid, field);
}

inline Field read_snapshot(std::istream& is, Grid& grid_out) {
    std::string tag;
    int dim = 0;
    is >> tag >> dim;
    if (tag != "dim" || (dim != 1 && dim != 2))
        throw std::runtime_error("bad snapshot header");
    Grid grid;
    grid.dim = dim;
    is >> tag;  // "n"
    for (int a = 0; a < dim; ++a) is >> grid.n[static_cast<std::size_t>(a)];
    is >> tag;  // "h"
    for (int a = 0; a < dim; ++a) {
        double h = 0.0;
        is >> h;
        grid.extent[static_cast<std::size_t>(a)] =
            h * (grid.n[static_cast<std::size_t>(a)] + 1);
    }
    std::string bc_tag, kind;
    is >> bc_tag >> kind;
    Field field;
    field.bc = kind == "dirichlet0" ? BcKind::Dirichlet0 : BcKind::Neumann0;
    field.v.resize(grid.num_nodes(field.bc));
    for (auto& value : field.v) is >> value;
    if (!is) throw std::runtime_error("truncated snapshot");
    grid_out = grid;
    return field;
}

}  // namespace pca
