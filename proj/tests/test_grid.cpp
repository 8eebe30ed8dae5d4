#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "pca/grid.hpp"
#include "pca/rng.hpp"

using namespace pca;

namespace {

Field random_field(const Grid& grid, BcKind bc, Xoshiro256pp& rng, double lo = -1.0,
                   double hi = 1.0) {
    Field f = make_field(grid, bc);
    for (auto& value : f.v) value = rng.uniform(lo, hi);
    return f;
}

}  // namespace

TEST_CASE("dirichlet laplacian of a constant interior field", "[grid]") {
    const Grid grid(3, 1.0);
    REQUIRE(grid.h(0) == Catch::Approx(0.25));
    const double c = 2.5;
    const Field f = make_field(grid, BcKind::Dirichlet0, c);
    const Field lap = laplacian_dirichlet(grid, f);
    const double edge = -c / (0.25 * 0.25);
    REQUIRE(lap.v[0] == Catch::Approx(edge).margin(1e-12));
    REQUIRE(lap.v[1] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(lap.v[2] == Catch::Approx(edge).margin(1e-12));
}

TEST_CASE("dirichlet laplacian annihilates zero", "[grid]") {
    const Grid grid(9, 1.0);
    const Field zero = make_field(grid, BcKind::Dirichlet0, 0.0);
    const Field lap = laplacian_dirichlet(grid, zero);
    for (double value : lap.v) REQUIRE(value == 0.0);
}

TEST_CASE("first discrete eigenvector reproduces -lambda1 exactly", "[grid]") {
    for (int n : {3, 17}) {
        const Grid grid(n, 1.0);
        Field e1 = make_field(grid, BcKind::Dirichlet0);
        for (int i = 0; i < n; ++i)
            e1.v[static_cast<std::size_t>(i)] =
                std::sin(std::numbers::pi * (i + 1) / (n + 1));
        const double lam = oracle::tridiag_lambda1(n, 1.0);
        const Field lap = laplacian_dirichlet(grid, e1);
        for (int i = 0; i < n; ++i)
            REQUIRE(lap.v[static_cast<std::size_t>(i)] ==
                    Catch::Approx(-lam * e1.v[static_cast<std::size_t>(i)]).margin(1e-12 * lam));
    }
}

TEST_CASE("neumann laplacian annihilates constants", "[grid]") {
    const Grid grid1(7, 2.0);
    Field f = make_field(grid1, BcKind::Neumann0, 3.25);
    for (double value : laplacian_neumann(grid1, f).v) REQUIRE(value == 0.0);
    const Grid grid2(5, 6, 1.0, 2.0);
    f = make_field(grid2, BcKind::Neumann0, -1.5);
    for (double value : laplacian_neumann(grid2, f).v) REQUIRE(value == 0.0);
}

TEST_CASE("neumann laplacian converges at second order on a cosine", "[grid]") {
    const double L = 1.0;
    auto max_error = [&](int n) {
        const Grid grid(n, L);
        Field f = make_field(grid, BcKind::Neumann0);
        const double k = std::numbers::pi / L;
        for (int i = 0; i < n + 2; ++i)
            f.v[static_cast<std::size_t>(i)] = std::cos(k * i * grid.h(0));
        const Field lap = laplacian_neumann(grid, f);
        double err = 0.0;
        for (std::size_t i = 0; i < f.v.size(); ++i)
            err = std::max(err, std::abs(lap.v[i] + k * k * f.v[i]));
        return err;
    };
    const double ratio = max_error(32) / max_error(64);
    REQUIRE(ratio > 3.5);
    REQUIRE(ratio < 4.5);
}

TEST_CASE("neumann laplacian output integrates to zero", "[grid]") {
    Xoshiro256pp rng(11);
    const Grid grid1(20, 1.0);
    Field f = random_field(grid1, BcKind::Neumann0, rng);
    REQUIRE(std::abs(integral(grid1, laplacian_neumann(grid1, f))) < 1e-12);
    const Grid grid2(12, 12, 1.0, 1.5);
    f = random_field(grid2, BcKind::Neumann0, rng);
    REQUIRE(std::abs(integral(grid2, laplacian_neumann(grid2, f))) < 1e-10);
}

TEST_CASE("bc mismatch is rejected", "[grid]") {
    const Grid grid(5, 1.0);
    const Field d = make_field(grid, BcKind::Dirichlet0);
    const Field n = make_field(grid, BcKind::Neumann0);
    REQUIRE_THROWS_AS(laplacian_dirichlet(grid, n), BcMismatch);
    REQUIRE_THROWS_AS(laplacian_neumann(grid, d), BcMismatch);
}

TEST_CASE("laplacians are self-adjoint in the weighted inner product", "[grid]") {
    Xoshiro256pp rng(5);
    for (int dim : {1, 2}) {
        const Grid grid = dim == 1 ? Grid(17, 1.0) : Grid(7, 9, 1.0, 2.0);
        for (BcKind bc : {BcKind::Dirichlet0, BcKind::Neumann0}) {
            const Field u = random_field(grid, bc, rng);
            const Field v = random_field(grid, bc, rng);
            Field au, av;
            apply_laplacian(grid, u, au);
            apply_laplacian(grid, v, av);
            const double lhs = dot_weighted(grid, bc, au.v, v.v);
            const double rhs = dot_weighted(grid, bc, u.v, av.v);
            REQUIRE(lhs == Catch::Approx(rhs).margin(1e-12 * (1.0 + std::abs(lhs))));
        }
    }
}

TEST_CASE("summation by parts: <-Lap u, u> equals the squared seminorm", "[grid]") {
    Xoshiro256pp rng(7);
    for (int dim : {1, 2}) {
        const Grid grid = dim == 1 ? Grid(23, 1.5) : Grid(8, 6, 1.0, 0.7);
        for (BcKind bc : {BcKind::Dirichlet0, BcKind::Neumann0}) {
            const Field u = random_field(grid, bc, rng);
            Field au;
            apply_laplacian(grid, u, au);
            const double energy = -dot_weighted(grid, bc, au.v, u.v);
            const double semi = seminorm_h1_sq(grid, u);
            REQUIRE(energy == Catch::Approx(semi).margin(1e-10 * (1.0 + semi)));
        }
    }
}

TEST_CASE("norms: zero, constants, domain measure", "[grid]") {
    const Grid grid(9, 2.0);
    const Field zero = make_field(grid, BcKind::Dirichlet0, 0.0);
    REQUIRE(norm_l2(grid, zero) == 0.0);
    const double c = 0.75;
    const Field constant = make_field(grid, BcKind::Neumann0, c);
    REQUIRE(norm_l2(grid, constant) ==
            Catch::Approx(c * std::sqrt(grid.measure())).epsilon(1e-14));
    REQUIRE(seminorm_h1(grid, constant) == 0.0);

    const Grid grid2(4, 5, 2.0, 3.0);
    const Field c2 = make_field(grid2, BcKind::Neumann0, c);
    REQUIRE(norm_l2(grid2, c2) == Catch::Approx(c * std::sqrt(6.0)).epsilon(1e-14));
}

TEST_CASE("lambda1 matches the closed-form tridiagonal eigenvalue", "[grid]") {
    const Grid grid(3, 1.0);
    const double lam = lambda1(grid);
    REQUIRE(lam == Catch::Approx(9.3725830020304794).margin(1e-8));
    REQUIRE(lam == Catch::Approx(oracle::tridiag_lambda1(3, 1.0)).margin(1e-10));

    Field work = make_field(grid, BcKind::Dirichlet0);
    Field lap;
    auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
        work.v = in;
        laplacian_dirichlet(grid, work, lap);
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = -lap.v[i];
    };
    const auto dense = oracle::dense_from_operator(grid.num_nodes(BcKind::Dirichlet0), apply);
    const auto eig = oracle::symmetric_eigenvalues(dense);
    REQUIRE(lam == Catch::Approx(eig.front()).margin(1e-8));
}

TEST_CASE("lambda1 increases toward pi^2 under refinement", "[grid]") {
    double prev = 0.0;
    for (int n : {7, 15, 31, 63}) {
        const double lam = lambda1(Grid(n, 1.0));
        REQUIRE(lam > prev);
        REQUIRE(lam < std::numbers::pi * std::numbers::pi);
        REQUIRE(lam == Catch::Approx(oracle::tridiag_lambda1(n, 1.0)).margin(1e-8));
        prev = lam;
    }
    REQUIRE(prev == Catch::Approx(std::numbers::pi * std::numbers::pi).margin(5e-3));
}

TEST_CASE("lambda1 in 2D is the sum of the axis eigenvalues", "[grid]") {
    const Grid square(5, 5, 1.0, 1.0);
    const double expected = 2.0 * oracle::tridiag_lambda1(5, 1.0);
    REQUIRE(lambda1(square) == Catch::Approx(expected).margin(1e-8));

    Field work = make_field(square, BcKind::Dirichlet0);
    Field lap;
    auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
        work.v = in;
        laplacian_dirichlet(square, work, lap);
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = -lap.v[i];
    };
    const auto dense = oracle::dense_from_operator(square.num_nodes(BcKind::Dirichlet0), apply);
    const auto eig = oracle::symmetric_eigenvalues(dense);
    REQUIRE(lambda1(square) == Catch::Approx(eig.front()).margin(1e-8));

    const Grid rect(5, 7, 1.0, 2.0);
    const double expected_rect =
        oracle::tridiag_lambda1(5, 1.0) + oracle::tridiag_lambda1(7, 2.0);
    REQUIRE(lambda1(rect) == Catch::Approx(expected_rect).margin(1e-8));
}

TEST_CASE("discrete Poincare inequality holds on random fields", "[grid]") {
    Xoshiro256pp rng(2024);
    for (int dim : {1, 2}) {
        const Grid grid = dim == 1 ? Grid(31, 1.0) : Grid(8, 8, 1.0, 1.0);
        const double lam = lambda1(grid);
        for (int trial = 0; trial < 100; ++trial) {
            const Field u = random_field(grid, BcKind::Dirichlet0, rng);
            const double semi2 = seminorm_h1_sq(grid, u);
            const double l2 = norm_l2(grid, u);
            REQUIRE(semi2 >= lam * l2 * l2 * (1.0 - 1e-12));
        }
    }
}

TEST_CASE("helmholtz solves match a dense LU oracle", "[grid]") {
    Xoshiro256pp rng(99);
    const double alpha = 1.3, kdiff = 0.7;

    const Grid grid1(5, 1.0);
    Field rhs = random_field(grid1, BcKind::Neumann0, rng);
    Field x;
    solve_helmholtz(grid1, alpha, kdiff, rhs, x, 1e-12);
    Field work = make_field(grid1, BcKind::Neumann0);
    Field lap;
    auto apply1 = [&](const std::vector<double>& in, std::vector<double>& out) {
        work.v = in;
        laplacian_neumann(grid1, work, lap);
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = alpha * in[i] - kdiff * lap.v[i];
    };
    auto dense = oracle::dense_from_operator(rhs.v.size(), apply1);
    auto expected = oracle::lu_solve(dense, rhs.v);
    for (std::size_t i = 0; i < expected.size(); ++i)
        REQUIRE(x.v[i] == Catch::Approx(expected[i]).margin(1e-12));

    const Grid grid2(3, 3, 1.0, 1.0);
    rhs = random_field(grid2, BcKind::Neumann0, rng);
    Field x2;
    solve_helmholtz(grid2, alpha, kdiff, rhs, x2, 1e-13);
    Field work2 = make_field(grid2, BcKind::Neumann0);
    auto apply2 = [&](const std::vector<double>& in, std::vector<double>& out) {
        work2.v = in;
        laplacian_neumann(grid2, work2, lap);
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = alpha * in[i] - kdiff * lap.v[i];
    };
    dense = oracle::dense_from_operator(rhs.v.size(), apply2);
    expected = oracle::lu_solve(dense, rhs.v);
    for (std::size_t i = 0; i < expected.size(); ++i)
        REQUIRE(x2.v[i] == Catch::Approx(expected[i]).margin(1e-10));
}

TEST_CASE("snapshot files round-trip", "[grid]") {
    Xoshiro256pp rng(3);
    const Grid grid(4, 5, 1.25, 0.5);
    const Field f = random_field(grid, BcKind::Neumann0, rng);
    std::stringstream ss;
    write_snapshot(ss, grid, f);
    Grid grid2;
    const Field g = read_snapshot(ss, grid2);
    REQUIRE(grid2.dim == grid.dim);
    REQUIRE(grid2.n == grid.n);
    REQUIRE(g.bc == f.bc);
    REQUIRE(g.v == f.v);
}

TEST_CASE("lambda1 reports a hit iteration cap", "[grid]") {
    REQUIRE_THROWS_AS(lambda1(Grid(63, 1.0), 1e-10, 2), NoConvergence);
}

TEST_CASE("grid validation", "[grid]") {
    REQUIRE_THROWS_AS(Grid(2, 1.0), ShapeMismatch);
    REQUIRE_THROWS_AS(Grid(5, -1.0), ShapeMismatch);
    REQUIRE_THROWS_AS(Grid(5, 2, 1.0, 1.0), ShapeMismatch);
}
