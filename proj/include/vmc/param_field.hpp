#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "vmc/errors.hpp"
#include "vmc/normal_dist.hpp"

namespace vmc {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Probability measure of the parameter vector y.
enum class ParameterDomain { uniform_cube, gaussian };

inline std::string to_string(ParameterDomain d) {
    return d == ParameterDomain::uniform_cube ? "uniform_cube" : "gaussian";
}

/// Affine expansion a0 + c * sum_m amplitude(m, x) y_m over [-1,1]^M.
/// The mode scale c is fixed by sup_x |c sum_m amplitude(m,x) y_m| <= theta * a0,
/// so the coefficient is surely bounded below by (1 - theta) a0.
struct AffineExpansion {
    double a0 = 1.0;
    int M = 1;
    double theta = 0.9;
};

/// exp(a0 + c * sum_m amplitude(m, x) y_m) with y ~ N(0, I_M).
/// Here a0 sits inside the exponent (default 0) and c = theta / sum_m m^-2,
/// i.e. theta is the sup of the fluctuation for |y|_inf <= 1.
struct LognormalExpansion {
    AffineExpansion exponent{.a0 = 0.0, .M = 1, .theta = 0.9};
};

/// Nine closed discs of radius 1/8 centred at (i/6, j/6), i, j in {1, 3, 5};
/// kappa = 1 outside, 1 + contrast * y_k in disc k.
struct CookieModel {
    static constexpr int kDiscs = 9;
    static constexpr double kRadius = 1.0 / 8.0;
    double contrast = 0.9;
};

struct CoefficientModel {
    std::variant<AffineExpansion, LognormalExpansion, CookieModel> variant;

    [[nodiscard]] int dimension() const {
        return std::visit(
            [](const auto& m) -> int {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, AffineExpansion>) return m.M;
                else if constexpr (std::is_same_v<T, LognormalExpansion>) return m.exponent.M;
                else return CookieModel::kDiscs;
            },
            variant);
    }

    [[nodiscard]] ParameterDomain domain() const {
        return std::holds_alternative<LognormalExpansion>(variant) ? ParameterDomain::gaussian
                                                                   : ParameterDomain::uniform_cube;
    }
};

/// Right-hand side is f = 1 for every catalog problem.
struct ProblemSpec {
    std::string name;
    CoefficientModel model;
    int mesh_n = 32;

    [[nodiscard]] static constexpr double rhs() { return 1.0; }
};

struct EllipticityBounds {
    double lower = 0.0;
    double upper = 0.0;
};

// ---------------------------------------------------------------------------

inline std::array<int, 2> amplitude_frequencies(int m) {
    return {(m + 2) / 2, (m + 3) / 2};
}

/// m^-2 sin(floor((m+2)/2) pi x1) sin(ceil((m+2)/2) pi x2).
inline double amplitude(int m, Point2 p) {
    if (m < 1) throw InvalidArgument("amplitude: mode index must be >= 1");
    const auto [k1, k2] = amplitude_frequencies(m);
    const double pi = std::numbers::pi;
    return std::sin(k1 * pi * p.x) * std::sin(k2 * pi * p.y) / (double(m) * double(m));
}

/// sum_{m<=M} sup_x |amplitude(m, x)| = sum_{m<=M} m^-2.
inline double amplitude_sup_sum(int M) {
    double s = 0.0;
    for (int m = M; m >= 1; --m) s += 1.0 / (double(m) * double(m));
    return s;
}

inline double mode_scale(const AffineExpansion& e) {
    return e.theta * e.a0 / amplitude_sup_sum(e.M);
}

inline double mode_scale(const LognormalExpansion& e) {
    return e.exponent.theta / amplitude_sup_sum(e.exponent.M);
}

/// Index of the disc containing p (closed discs), or -1.
inline int cookie_disc(Point2 p) {
    constexpr double r2 = CookieModel::kRadius * CookieModel::kRadius;
    for (int j = 0; j < 3; ++j) {
        for (int i = 0; i < 3; ++i) {
            const double dx = p.x - (2 * i + 1) / 6.0;
            const double dy = p.y - (2 * j + 1) / 6.0;
            if (dx * dx + dy * dy <= r2) return 3 * j + i;
        }
    }
    return -1;
}

namespace detail {

inline double mode_sum(Point2 p, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t m = 0; m < y.size(); ++m) s += amplitude(int(m) + 1, p) * y[m];
    return s;
}

inline void check_length(const CoefficientModel& model, std::span<const double> y) {
    if (int(y.size()) != model.dimension()) {
        throw InvalidArgument("parameter vector has length " + std::to_string(y.size()) +
                              ", model expects " + std::to_string(model.dimension()));
    }
}

}  // namespace detail

/// Exponent of the lognormal field; equals the affine field with the same
/// (a0, theta) when a0 = 1.
inline double lognormal_exponent(const LognormalExpansion& e, Point2 p, std::span<const double> y) {
    return e.exponent.a0 + mode_scale(e) * detail::mode_sum(p, y);
}

inline double eval_coefficient(const CoefficientModel& model, Point2 p, std::span<const double> y) {
    detail::check_length(model, y);
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, AffineExpansion>) {
                return m.a0 + mode_scale(m) * detail::mode_sum(p, y);
            } else if constexpr (std::is_same_v<T, LognormalExpansion>) {
                return std::exp(lognormal_exponent(m, p, y));
            } else {
                const int k = cookie_disc(p);
                return k < 0 ? 1.0 : 1.0 + m.contrast * y[std::size_t(k)];
            }
        },
        model.variant);
}

/// Bounds on the coefficient over all admissible (x, y). Sure bounds for the
/// affine and cookie models; for the lognormal model they hold with
/// probability >= 1 - failure_probability.
inline EllipticityBounds ellipticity_bounds(const CoefficientModel& model,
                                            double failure_probability = 1e-6) {
    return std::visit(
        [&](const auto& m) -> EllipticityBounds {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, AffineExpansion>) {
                return {m.a0 - m.theta * m.a0, m.a0 + m.theta * m.a0};
            } else if constexpr (std::is_same_v<T, LognormalExpansion>) {
                if (!(failure_probability > 0.0 && failure_probability < 1.0)) {
                    throw InvalidArgument("ellipticity_bounds: failure probability must be in (0,1)");
                }
                // union bound: P(max_m |y_m| > t) <= 2 M (1 - Phi(t))
                const double t = inverse_normal_cdf(1.0 - failure_probability / (2.0 * m.exponent.M));
                const double spread = m.exponent.theta * t;
                return {std::exp(m.exponent.a0 - spread), std::exp(m.exponent.a0 + spread)};
            } else {
                return {1.0 - m.contrast, 1.0 + m.contrast};
            }
        },
        model.variant);
}

/// The coefficient restricted to a fixed point set (e.g. quadrature points),
/// with the y-independent parts precomputed.
class DiscretizedCoefficient {
public:
    DiscretizedCoefficient(CoefficientModel model, std::span<const Point2> points)
        : model_(std::move(model)), points_(points.begin(), points.end()) {
        const auto n = Eigen::Index(points_.size());
        if (std::holds_alternative<CookieModel>(model_.variant)) {
            discs_.resize(points_.size());
            for (std::size_t q = 0; q < points_.size(); ++q) discs_[q] = cookie_disc(points_[q]);
        } else {
            const int M = model_.dimension();
            modes_.resize(n, M);
            for (Eigen::Index q = 0; q < n; ++q) {
                for (int m = 0; m < M; ++m) modes_(q, m) = amplitude(m + 1, points_[std::size_t(q)]);
            }
        }
    }

    [[nodiscard]] std::size_t size() const { return points_.size(); }
    [[nodiscard]] const CoefficientModel& model() const { return model_; }
    [[nodiscard]] std::span<const Point2> points() const { return points_; }

    void evaluate(std::span<const double> y, std::span<double> out) const {
        detail::check_length(model_, y);
        Eigen::Map<Eigen::VectorXd> result(out.data(), Eigen::Index(out.size()));
        std::visit(
            [&](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, CookieModel>) {
                    for (std::size_t q = 0; q < discs_.size(); ++q) {
                        const int k = discs_[q];
                        out[q] = k < 0 ? 1.0 : 1.0 + m.contrast * y[std::size_t(k)];
                    }
                } else {
                    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), Eigen::Index(y.size()));
                    if constexpr (std::is_same_v<T, AffineExpansion>) {
                        result.noalias() = mode_scale(m) * (modes_ * yv);
                        result.array() += m.a0;
                    } else {
                        result.noalias() = mode_scale(m) * (modes_ * yv);
                        result = (result.array() + m.exponent.a0).exp().matrix();
                    }
                }
            },
            model_.variant);
    }

private:
    CoefficientModel model_;
    std::vector<Point2> points_;
    Eigen::MatrixXd modes_;
    std::vector<int> discs_;
};

/// Builds a catalog problem: "affine", "lognormal" or "cookie".
inline ProblemSpec make_problem(const std::string& name, int M, int mesh_n, double theta = 0.9,
                                double contrast = 0.9) {
    if (mesh_n < 1) throw InvalidArgument("mesh n must be >= 1");
    if (name == "affine") {
        if (M < 1) throw InvalidArgument("affine problem needs M >= 1");
        if (!(theta >= 0.0 && theta < 1.0)) throw InvalidArgument("theta must lie in [0, 1)");
        return {name, {AffineExpansion{.a0 = 1.0, .M = M, .theta = theta}}, mesh_n};
    }
    if (name == "lognormal") {
        if (M < 1) throw InvalidArgument("lognormal problem needs M >= 1");
        if (!(theta >= 0.0)) throw InvalidArgument("theta must be >= 0");
        return {name, {LognormalExpansion{AffineExpansion{.a0 = 0.0, .M = M, .theta = theta}}}, mesh_n};
    }
    if (name == "cookie") {
        if (M != CookieModel::kDiscs) throw InvalidArgument("cookie problem has M = 9");
        if (!(contrast >= 0.0 && contrast < 1.0)) throw InvalidArgument("cookie contrast must lie in [0, 1)");
        return {name, {CookieModel{.contrast = contrast}}, mesh_n};
    }
    throw InvalidArgument("unknown problem '" + name + "' (expected affine, lognormal or cookie)");
}

}  // namespace vmc
