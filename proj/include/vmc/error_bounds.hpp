#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>

#include "vmc/errors.hpp"

namespace vmc {

// Concentration and covering-number bounds for empirical risk minimization.
// Probabilities are carried in log space; `raw` may exceed one (the vacuous
// regime) and is kept alongside the clamped value.

struct ProbabilityBound {
    double log_raw = 0.0;

    [[nodiscard]] double raw() const { return std::exp(log_raw); }
    [[nodiscard]] double clamped() const { return log_raw >= 0.0 ? 1.0 : std::exp(log_raw); }
};

enum class Concentration { hoeffding, bernstein };

inline std::string to_string(Concentration c) { return c == Concentration::hoeffding ? "hoeffding" : "bernstein"; }

inline Concentration parse_concentration(const std::string& name) {
    if (name == "hoeffding") return Concentration::hoeffding;
    if (name == "bernstein") return Concentration::bernstein;
    throw InvalidArgument("unknown concentration inequality '" + name + "'");
}

struct BoundInputs {
    double C1 = 1.0;      ///< loss bound
    double C2 = 1.0;      ///< Lipschitz constant of the loss
    double Gamma = 1.0;   ///< second-derivative bound
    double gamma = 1.0;   ///< strong convexity
    int dim = 1;          ///< dimension of the model class
    double radius = 1.0;  ///< radius of the model class
    double sigma2 = 0.0;  ///< loss variance bound
    double E_best = 0.0;  ///< best-approximation error
};

inline double log_unit_ball_volume(int dim) {
    const double d = dim;
    return 0.5 * d * std::log(std::numbers::pi) - std::lgamma(0.5 * d + 1.0);
}

/// Log of vol(B_1) (R / eps)^dim, the covering number of a radius-R ball in
/// a dim-dimensional space by eps-balls.
inline double log_covering_number_linear(int dim, double radius, double eps) {
    if (dim < 1 || !(radius > 0.0) || !(eps > 0.0)) {
        throw InvalidArgument("covering number needs dim >= 1, R > 0, eps > 0");
    }
    return log_unit_ball_volume(dim) + dim * (std::log(radius) - std::log(eps));
}

inline double covering_number_linear(int dim, double radius, double eps) {
    return std::exp(log_covering_number_linear(dim, radius, eps));
}

/// 2 exp(-2 eps^2 N / C1^2)
inline ProbabilityBound hoeffding_delta(double eps, double N, double C1) {
    if (!(eps >= 0.0) || !(N >= 1.0) || !(C1 > 0.0)) throw InvalidArgument("hoeffding_delta: need eps >= 0, N >= 1, C1 > 0");
    return {std::numbers::ln2 - 2.0 * eps * eps * N / (C1 * C1)};
}

/// 2 exp(-(eps^2 N / 2) / (sigma2 + C1 eps / 3))
inline ProbabilityBound bernstein_delta(double eps, double N, double C1, double sigma2) {
    if (!(eps >= 0.0) || !(N >= 1.0) || !(C1 > 0.0) || !(sigma2 >= 0.0)) {
        throw InvalidArgument("bernstein_delta: need eps >= 0, N >= 1, C1 > 0, sigma2 >= 0");
    }
    if (eps == 0.0) return {std::numbers::ln2};
    return {std::numbers::ln2 - 0.5 * eps * eps * N / (sigma2 + C1 * eps / 3.0)};
}

/// Negligible-variance variant in the form 2 exp(-3 eps N / (4 C1^2)); differs
/// from bernstein_delta(eps, N, C1, 0) = 2 exp(-3 eps N / (2 C1)). Reported
/// next to it, never used in compositions.
inline ProbabilityBound bernstein_negligible_variance_alt(double eps, double N, double C1) {
    return {std::numbers::ln2 - 3.0 * eps * N / (4.0 * C1 * C1)};
}

inline ProbabilityBound concentration_delta(double eps, double N, const BoundInputs& in, Concentration c) {
    return c == Concentration::hoeffding ? hoeffding_delta(eps, N, in.C1) : bernstein_delta(eps, N, in.C1, in.sigma2);
}

/// P[E_gen > eps] <= 2 nu(eps / (8 C2)) delta(eps / 4, N)
inline ProbabilityBound generalization_bound(double eps, double N, const BoundInputs& in, Concentration c) {
    if (!(eps > 0.0)) throw InvalidArgument("generalization_bound: eps must be > 0");
    if (!(in.C2 > 0.0)) throw InvalidArgument("generalization_bound: C2 must be > 0");
    const double log_nu = log_covering_number_linear(in.dim, in.radius, eps / (8.0 * in.C2));
    return {std::numbers::ln2 + log_nu + concentration_delta(eps / 4.0, N, in, c).log_raw};
}

/// Smallest N >= 1 with generalization_bound(eps, N) <= p_fail.
inline std::int64_t samples_for_confidence(double eps, double p_fail, const BoundInputs& in, Concentration c) {
    if (!(p_fail > 0.0 && p_fail < 1.0)) throw InvalidArgument("samples_for_confidence: p_fail must lie in (0, 1)");
    const double target = std::log(p_fail);
    const auto ok = [&](std::int64_t n) { return generalization_bound(eps, double(n), in, c).log_raw <= target; };
    if (ok(1)) return 1;

    if (c == Concentration::hoeffding) {
        // log bound = A - k N
        const double A = generalization_bound(eps, 1.0, in, c).log_raw + 2.0 * std::pow(eps / 4.0, 2) / (in.C1 * in.C1);
        const double k = 2.0 * std::pow(eps / 4.0, 2) / (in.C1 * in.C1);
        auto n = std::max<std::int64_t>(1, std::int64_t(std::ceil((A - target) / k)));
        while (n > 1 && ok(n - 1)) --n;
        while (!ok(n)) ++n;
        return n;
    }
    std::int64_t lo = 1, hi = 2;  // ok(lo) false
    while (!ok(hi)) {
        lo = hi;
        if (hi > std::numeric_limits<std::int64_t>::max() / 2) throw NumericalBreakdown("samples_for_confidence overflow");
        hi *= 2;
    }
    while (hi - lo > 1) {
        const std::int64_t mid = lo + (hi - lo) / 2;
        (ok(mid) ? hi : lo) = mid;
    }
    return hi;
}

struct ApproximationBounds {
    double linear = 0.0;     ///< C2 E_best
    double quadratic = 0.0;  ///< Gamma / 2 E_best^2
};

inline ApproximationBounds approx_error_bounds(double E_best, double C2, double Gamma) {
    if (!(E_best >= 0.0)) throw InvalidArgument("approx_error_bounds: E_best must be >= 0");
    return {C2 * E_best, 0.5 * Gamma * E_best * E_best};
}

/// sqrt((Gamma / gamma) E_best^2 + (2 / gamma) E_gen)
inline double norm_error_bound(double E_best, double E_gen, double Gamma, double gamma) {
    if (!(gamma > 0.0)) throw InvalidArgument("norm_error_bound: gamma must be > 0");
    return std::sqrt(Gamma / gamma * E_best * E_best + 2.0 / gamma * E_gen);
}

struct QuasiOptimality {
    double factor = 0.0;       ///< (1 + a) Gamma / gamma bounds E_norm^2 / E_best^2
    double probability = 0.0;  ///< lower bound on the probability that it holds
};

inline QuasiOptimality quasi_optimality(double a, double N, const BoundInputs& in, Concentration c) {
    if (!(a > 0.0)) throw InvalidArgument("quasi_optimality: a must be > 0");
    if (!(in.gamma > 0.0)) throw InvalidArgument("quasi_optimality: gamma must be > 0");
    const double eps = 0.5 * a * in.Gamma * in.E_best * in.E_best;
    const double fail = eps > 0.0 ? generalization_bound(eps, N, in, c).clamped() : 1.0;
    return {(1.0 + a) * in.Gamma / in.gamma, std::clamp(1.0 - fail, 0.0, 1.0)};
}

}  // namespace vmc
