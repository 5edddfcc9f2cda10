#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "vmc/errors.hpp"
#include "vmc/param_field.hpp"

namespace vmc {

/// Uniform criss-cross triangulation of the unit square. Vertex (i, j) sits at
/// (i/n, j/n) with index i + j(n+1); every cell is cut along its lower-left to
/// upper-right diagonal.
struct Mesh2D {
    int n = 0;
    std::vector<Point2> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<int> interior_dofs;  ///< vertex index of each interior dof, increasing
    std::vector<int> dof_of_vertex;  ///< interior dof index, or -1 on the boundary

    [[nodiscard]] std::size_t dofs() const { return interior_dofs.size(); }

    [[nodiscard]] double signed_area(std::size_t t) const {
        const auto& tri = triangles[t];
        const Point2 a = vertices[std::size_t(tri[0])];
        const Point2 b = vertices[std::size_t(tri[1])];
        const Point2 c = vertices[std::size_t(tri[2])];
        return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
    }
};

/// Symmetric positive definite operator over the interior dofs.
struct SparseSpdOperator {
    Eigen::SparseMatrix<double> matrix;

    [[nodiscard]] Eigen::Index dimension() const { return matrix.rows(); }
};

/// Nodal values at the interior dofs; boundary values are zero.
struct FemFunction {
    Eigen::VectorXd coefficients;
};

using ScalarField = std::function<double(Point2)>;

inline Mesh2D build_unit_square_mesh(int n) {
    if (n < 1) throw InvalidArgument("build_unit_square_mesh: n must be >= 1");
    Mesh2D mesh;
    mesh.n = n;
    const int side = n + 1;
    mesh.vertices.reserve(std::size_t(side) * std::size_t(side));
    mesh.dof_of_vertex.assign(std::size_t(side) * std::size_t(side), -1);
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i <= n; ++i) {
            mesh.vertices.push_back({double(i) / n, double(j) / n});
            if (i > 0 && i < n && j > 0 && j < n) {
                const int v = i + j * side;
                mesh.dof_of_vertex[std::size_t(v)] = int(mesh.interior_dofs.size());
                mesh.interior_dofs.push_back(v);
            }
        }
    }
    mesh.triangles.reserve(2 * std::size_t(n) * std::size_t(n));
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const int a = i + j * side;
            const int b = a + 1;
            const int c = b + side;
            const int d = a + side;
            mesh.triangles.push_back({a, b, c});
            mesh.triangles.push_back({a, c, d});
        }
    }
    return mesh;
}

/// Edge-midpoint quadrature: three points per triangle, each with weight |T|/3,
/// listed triangle by triangle (edges v0v1, v1v2, v2v0).
inline std::vector<Point2> quadrature_points(const Mesh2D& mesh) {
    std::vector<Point2> points;
    points.reserve(3 * mesh.triangles.size());
    for (const auto& tri : mesh.triangles) {
        for (int e = 0; e < 3; ++e) {
            const Point2 p = mesh.vertices[std::size_t(tri[std::size_t(e)])];
            const Point2 q = mesh.vertices[std::size_t(tri[std::size_t((e + 1) % 3)])];
            points.push_back({0.5 * (p.x + q.x), 0.5 * (p.y + q.y)});
        }
    }
    return points;
}

namespace detail {

/// Gradient products grad(phi_j) . grad(phi_k) of the P1 hat functions on one triangle.
inline Eigen::Matrix3d gradient_products(const Mesh2D& mesh, std::size_t t) {
    const auto& tri = mesh.triangles[t];
    Eigen::Matrix<double, 3, 2> grads;
    const double twice_area = 2.0 * mesh.signed_area(t);
    for (int k = 0; k < 3; ++k) {
        const Point2 p1 = mesh.vertices[std::size_t(tri[std::size_t((k + 1) % 3)])];
        const Point2 p2 = mesh.vertices[std::size_t(tri[std::size_t((k + 2) % 3)])];
        grads(k, 0) = (p1.y - p2.y) / twice_area;
        grads(k, 1) = (p2.x - p1.x) / twice_area;
    }
    return grads * grads.transpose();
}

inline void check_coefficient(std::span<const Point2> points, std::span<const double> values) {
    for (std::size_t q = 0; q < values.size(); ++q) {
        if (!(values[q] > 0.0)) throw EllipticityViolation(points[q].x, points[q].y, values[q]);
    }
}

inline std::vector<double> sample_field(std::span<const Point2> points, const ScalarField& f) {
    std::vector<double> values(points.size());
    for (std::size_t q = 0; q < points.size(); ++q) values[q] = f(points[q]);
    return values;
}

/// Stiffness for coefficient values given at the quadrature points. With
/// interior_only the rows/columns are the interior dofs, otherwise all vertices.
inline Eigen::SparseMatrix<double> stiffness_from_values(const Mesh2D& mesh, std::span<const double> coeff,
                                                        bool interior_only) {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(9 * mesh.triangles.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const double weight = mesh.signed_area(t) / 3.0 * (coeff[3 * t] + coeff[3 * t + 1] + coeff[3 * t + 2]);
        const Eigen::Matrix3d local = weight * gradient_products(mesh, t);
        for (int a = 0; a < 3; ++a) {
            const int ra = interior_only ? mesh.dof_of_vertex[std::size_t(tri[std::size_t(a)])] : tri[std::size_t(a)];
            if (ra < 0) continue;
            for (int b = 0; b < 3; ++b) {
                const int rb =
                    interior_only ? mesh.dof_of_vertex[std::size_t(tri[std::size_t(b)])] : tri[std::size_t(b)];
                if (rb < 0) continue;
                triplets.emplace_back(ra, rb, local(a, b));
            }
        }
    }
    const auto size = Eigen::Index(interior_only ? mesh.dofs() : mesh.vertices.size());
    Eigen::SparseMatrix<double> matrix(size, size);
    matrix.setFromTriplets(triplets.begin(), triplets.end());
    return matrix;
}

}  // namespace detail

/// Stiffness over all vertices, boundary included (its rows sum to zero).
inline Eigen::SparseMatrix<double> assemble_full_stiffness(const Mesh2D& mesh, const ScalarField& coeff) {
    const auto points = quadrature_points(mesh);
    const auto values = detail::sample_field(points, coeff);
    detail::check_coefficient(points, values);
    return detail::stiffness_from_values(mesh, values, false);
}

inline SparseSpdOperator assemble_stiffness(const Mesh2D& mesh, const ScalarField& coeff) {
    const auto points = quadrature_points(mesh);
    const auto values = detail::sample_field(points, coeff);
    detail::check_coefficient(points, values);
    return {detail::stiffness_from_values(mesh, values, true)};
}

inline Eigen::VectorXd assemble_load(const Mesh2D& mesh, const ScalarField& f) {
    Eigen::VectorXd load = Eigen::VectorXd::Zero(Eigen::Index(mesh.dofs()));
    const auto points = quadrature_points(mesh);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const double w = mesh.signed_area(t) / 3.0;
        // hat functions are 1/2 at the midpoints of their two incident edges
        for (int e = 0; e < 3; ++e) {
            const double fq = 0.5 * w * f(points[3 * t + std::size_t(e)]);
            for (int v : {tri[std::size_t(e)], tri[std::size_t((e + 1) % 3)]}) {
                const int dof = mesh.dof_of_vertex[std::size_t(v)];
                if (dof >= 0) load[dof] += fq;
            }
        }
    }
    return load;
}

/// P1 mass matrix over the interior dofs (the edge-midpoint rule is exact here).
inline SparseSpdOperator assemble_mass(const Mesh2D& mesh) {
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const double area = mesh.signed_area(t);
        for (int a = 0; a < 3; ++a) {
            const int ra = mesh.dof_of_vertex[std::size_t(tri[std::size_t(a)])];
            if (ra < 0) continue;
            for (int b = 0; b < 3; ++b) {
                const int rb = mesh.dof_of_vertex[std::size_t(tri[std::size_t(b)])];
                if (rb < 0) continue;
                triplets.emplace_back(ra, rb, area / 12.0 * (a == b ? 2.0 : 1.0));
            }
        }
    }
    const auto size = Eigen::Index(mesh.dofs());
    Eigen::SparseMatrix<double> matrix(size, size);
    matrix.setFromTriplets(triplets.begin(), triplets.end());
    return {matrix};
}

/// True when the operator is symmetric (1e-12 relative) with positive diagonal.
inline bool satisfies_spd_invariants(const SparseSpdOperator& op) {
    const Eigen::SparseMatrix<double> diff = op.matrix - Eigen::SparseMatrix<double>(op.matrix.transpose());
    const double scale = op.matrix.norm();
    if (diff.norm() > 1e-12 * scale) return false;
    for (Eigen::Index k = 0; k < op.matrix.rows(); ++k) {
        if (!(op.matrix.coeff(k, k) > 0.0)) return false;
    }
    return true;
}

namespace detail {

inline Eigen::VectorXd cg_solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                                const Eigen::VectorXd* guess) {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(1e-12);
    cg.setMaxIterations(std::max<Eigen::Index>(1, 10 * A.rows()));
    cg.compute(A);
    Eigen::VectorXd x;
    if (guess) x = cg.solveWithGuess(b, *guess);
    else x = cg.solve(b);
    if (cg.info() != Eigen::Success) {
        throw SingularSystem("conjugate gradient failed after " + std::to_string(cg.iterations()) + " iterations");
    }
    return x;
}

inline bool residual_ok(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
    return (A * x - b).norm() <= 1e-10 * b.norm();
}

}  // namespace detail

/// Sparse Cholesky solve with a conjugate-gradient fallback.
inline FemFunction solve_spd(const SparseSpdOperator& A, const Eigen::VectorXd& b) {
    if (A.dimension() != b.size()) throw InvalidArgument("solve_spd: dimension mismatch");
    if (b.size() == 0 || b.isZero(0.0)) return {Eigen::VectorXd::Zero(b.size())};
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(A.matrix);
    if (llt.info() == Eigen::Success) {
        Eigen::VectorXd x = llt.solve(b);
        if (detail::residual_ok(A.matrix, x, b)) return {std::move(x)};
        return {detail::cg_solve(A.matrix, b, &x)};
    }
    return {detail::cg_solve(A.matrix, b, nullptr)};
}

/// H^1_0 inner product u^T S0 v, where S0 is the unit-coefficient stiffness.
inline double h1_inner(const FemFunction& u, const FemFunction& v, const SparseSpdOperator& S0) {
    if (u.coefficients.size() != S0.dimension() || v.coefficients.size() != S0.dimension()) {
        throw InvalidArgument("h1_inner: dimension mismatch");
    }
    return u.coefficients.dot(S0.matrix * v.coefficients);
}

/// Reusable per-parameter solver for one problem on one mesh: the sparsity
/// pattern, load vector, coefficient modes and symbolic factorization are set
/// up once. Not thread-safe; copies share the immutable setup and get their
/// own factorization, so use one copy per worker.
class ParametricSolver {
public:
    ParametricSolver(const ProblemSpec& problem, const Mesh2D& mesh) : setup_(std::make_shared<Setup>(problem, mesh)) {
        reset_workspace();
    }

    ParametricSolver(const ParametricSolver& other) : setup_(other.setup_) { reset_workspace(); }
    ParametricSolver& operator=(const ParametricSolver& other) {
        if (this != &other) {
            setup_ = other.setup_;
            reset_workspace();
        }
        return *this;
    }

    [[nodiscard]] const Mesh2D& mesh() const { return setup_->mesh; }
    [[nodiscard]] const Eigen::VectorXd& load() const { return setup_->load; }
    [[nodiscard]] int parameter_dimension() const { return setup_->coefficient.model().dimension(); }

    /// Stiffness operator B(y) over the interior dofs.
    const SparseSpdOperator& stiffness(std::span<const double> y) {
        const Setup& s = *setup_;
        s.coefficient.evaluate(y, coeff_);
        detail::check_coefficient(s.coefficient.points(), coeff_);
        double* values = op_.matrix.valuePtr();
        std::fill(values, values + op_.matrix.nonZeros(), 0.0);
        for (std::size_t t = 0; t < s.mesh.triangles.size(); ++t) {
            const double w = s.area_third[t] * (coeff_[3 * t] + coeff_[3 * t + 1] + coeff_[3 * t + 2]);
            for (int e = 0; e < 9; ++e) {
                const auto slot = s.slots[9 * t + std::size_t(e)];
                if (slot >= 0) values[slot] += w * s.grads[t](e / 3, e % 3);
            }
        }
        return op_;
    }

    FemFunction solve(std::span<const double> y) {
        const SparseSpdOperator& A = stiffness(y);
        const Eigen::VectorXd& b = setup_->load;
        if (!analyzed_) {
            llt_.analyzePattern(A.matrix);
            analyzed_ = true;
        }
        llt_.factorize(A.matrix);
        if (llt_.info() == Eigen::Success) {
            Eigen::VectorXd x = llt_.solve(b);
            if (detail::residual_ok(A.matrix, x, b)) return {std::move(x)};
            return {detail::cg_solve(A.matrix, b, &x)};
        }
        return {detail::cg_solve(A.matrix, b, nullptr)};
    }

private:
    struct Setup {
        Setup(const ProblemSpec& problem, const Mesh2D& m)
            : mesh(m), coefficient(problem.model, quadrature_points(m)) {
            load = assemble_load(mesh, [](Point2) { return ProblemSpec::rhs(); });
            std::vector<double> ones(coefficient.size(), 1.0);
            pattern = detail::stiffness_from_values(mesh, ones, true);
            pattern.makeCompressed();
            area_third.resize(mesh.triangles.size());
            grads.resize(mesh.triangles.size());
            slots.assign(9 * mesh.triangles.size(), -1);
            for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
                area_third[t] = mesh.signed_area(t) / 3.0;
                grads[t] = detail::gradient_products(mesh, t);
                const auto& tri = mesh.triangles[t];
                for (int a = 0; a < 3; ++a) {
                    const int ra = mesh.dof_of_vertex[std::size_t(tri[std::size_t(a)])];
                    for (int b = 0; b < 3; ++b) {
                        const int rb = mesh.dof_of_vertex[std::size_t(tri[std::size_t(b)])];
                        if (ra < 0 || rb < 0) continue;
                        slots[9 * t + std::size_t(3 * a + b)] = slot_of(ra, rb);
                    }
                }
            }
        }

        [[nodiscard]] std::ptrdiff_t slot_of(int row, int col) const {
            const auto* outer = pattern.outerIndexPtr();
            const auto* inner = pattern.innerIndexPtr();
            for (auto k = outer[col]; k < outer[col + 1]; ++k) {
                if (inner[k] == row) return k;
            }
            return -1;
        }

        Mesh2D mesh;
        DiscretizedCoefficient coefficient;
        Eigen::VectorXd load;
        Eigen::SparseMatrix<double> pattern;
        std::vector<double> area_third;
        std::vector<Eigen::Matrix3d> grads;
        std::vector<std::ptrdiff_t> slots;
    };

    void reset_workspace() {
        op_.matrix = setup_->pattern;
        coeff_.assign(setup_->coefficient.size(), 0.0);
        analyzed_ = false;
    }

    std::shared_ptr<const Setup> setup_;
    SparseSpdOperator op_;
    std::vector<double> coeff_;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
    bool analyzed_ = false;
};

/// u_h(y): assemble B(y) and solve against the unit load.
inline FemFunction fem_solve_parametric(const ProblemSpec& problem, const Mesh2D& mesh, std::span<const double> y) {
    ParametricSolver solver(problem, mesh);
    return solver.solve(y);
}

}  // namespace vmc
