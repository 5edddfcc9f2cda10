#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "vmc/errors.hpp"
#include "vmc/param_field.hpp"

namespace vmc {

/// Legendre polynomials are orthonormal w.r.t. U(-1, 1), probabilists'
/// Hermite polynomials w.r.t. N(0, 1).
enum class PolyFamily { legendre_uniform, hermite_gaussian };

inline std::string to_string(PolyFamily f) {
    return f == PolyFamily::legendre_uniform ? "legendre_uniform" : "hermite_gaussian";
}

inline PolyFamily family_for(ParameterDomain domain) {
    return domain == ParameterDomain::uniform_cube ? PolyFamily::legendre_uniform : PolyFamily::hermite_gaussian;
}

/// Tensor-product basis: mode m uses polynomials of degree 0..degrees[m]-1.
struct BasisSpec {
    PolyFamily family = PolyFamily::legendre_uniform;
    std::vector<int> degrees;

    static BasisSpec uniform(PolyFamily family, int M, int q) { return {family, std::vector<int>(std::size_t(M), q)}; }

    [[nodiscard]] int modes() const { return int(degrees.size()); }
};

/// Off-diagonal Jacobi coefficient b_k (k >= 1) of the orthonormal recurrence
/// y p_k = b_{k+1} p_{k+1} + b_k p_{k-1}.
inline double recurrence_coefficient(PolyFamily family, int k) {
    if (family == PolyFamily::legendre_uniform) return k / std::sqrt(4.0 * k * k - 1.0);
    return std::sqrt(double(k));
}

inline void eval_basis_into(PolyFamily family, int q, double y, std::span<double> out) {
    out[0] = 1.0;
    if (q > 1) out[1] = y / recurrence_coefficient(family, 1);
    for (int k = 1; k + 1 < q; ++k) {
        out[std::size_t(k) + 1] = (y * out[std::size_t(k)] - recurrence_coefficient(family, k) * out[std::size_t(k) - 1]) /
                                  recurrence_coefficient(family, k + 1);
    }
}

inline bool in_support(PolyFamily family, double y) {
    return family == PolyFamily::hermite_gaussian || (y >= -1.0 && y <= 1.0);
}

struct BasisValues {
    Eigen::VectorXd values;
    bool outside_support = false;
};

inline BasisValues eval_basis(PolyFamily family, int q, double y) {
    if (q < 1) throw InvalidArgument("eval_basis: q must be >= 1");
    BasisValues result{Eigen::VectorXd(q), !in_support(family, y)};
    eval_basis_into(family, q, y, {result.values.data(), std::size_t(q)});
    return result;
}

/// Orthonormal polynomials of degree 0..q-1 at y.
inline Eigen::VectorXd eval_basis_vector(PolyFamily family, int q, double y) {
    return eval_basis(family, q, y).values;
}

/// Gauss rule for the family's probability measure (weights sum to one),
/// via the Golub-Welsch eigenvalue method.
struct GaussRule {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
};

inline GaussRule gauss_rule(PolyFamily family, int order) {
    if (order < 1) throw InvalidArgument("gauss_rule: order must be >= 1");
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        jacobi(k, k - 1) = jacobi(k - 1, k) = recurrence_coefficient(family, k);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    GaussRule rule{eig.eigenvalues(), eig.eigenvectors().row(0).transpose().array().square().matrix()};
    return rule;
}

inline Eigen::MatrixXd gram_matrix(PolyFamily family, int q, int quadrature_order) {
    if (quadrature_order < q) throw InvalidArgument("gram_matrix: quadrature order must be >= q");
    const GaussRule rule = gauss_rule(family, quadrature_order);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(q, q);
    for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
        const Eigen::VectorXd p = eval_basis_vector(family, q, rule.nodes[i]);
        gram.noalias() += rule.weights[i] * p * p.transpose();
    }
    return gram;
}

}  // namespace vmc
