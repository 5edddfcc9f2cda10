#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "vmc/param_field.hpp"

using namespace vmc;

TEST(Amplitude, KnownValues) {
    EXPECT_NEAR(amplitude(1, {0.5, 0.5}), 0.0, 1e-15);
    EXPECT_NEAR(amplitude(2, {0.25, 0.25}), 0.25, 1e-15);
    for (int m = 1; m <= 12; ++m) {
        EXPECT_NEAR(amplitude(m, {0.0, 0.37}), 0.0, 1e-15);
        EXPECT_NEAR(amplitude(m, {0.61, 1.0}), 0.0, 1e-14);
    }
    EXPECT_THROW(amplitude(0, {0.5, 0.5}), InvalidArgument);
}

TEST(Amplitude, Frequencies) {
    EXPECT_EQ(amplitude_frequencies(1), (std::array<int, 2>{1, 2}));
    EXPECT_EQ(amplitude_frequencies(2), (std::array<int, 2>{2, 2}));
    EXPECT_EQ(amplitude_frequencies(3), (std::array<int, 2>{2, 3}));
}

TEST(Coefficient, AffineAtZeroIsA0) {
    const auto model = make_problem("affine", 4, 8).model;
    const std::vector<double> y(4, 0.0);
    EXPECT_DOUBLE_EQ(eval_coefficient(model, {0.3, 0.7}, y), 1.0);
}

TEST(Coefficient, AffineWorkedExample) {
    // 1 + 0.9 / (1 + 1/4 + 1/9) * 0.25
    const auto model = make_problem("affine", 3, 8, 0.9).model;
    const std::vector<double> y{0.0, 1.0, 0.0};
    EXPECT_NEAR(eval_coefficient(model, {0.25, 0.25}, y), 1.165306122448979596, 1e-14);
}

TEST(Coefficient, CookieDiscs) {
    const auto model = make_problem("cookie", 9, 8).model;
    std::vector<double> y(9, 0.0);
    y[0] = 1.0;
    EXPECT_NEAR(eval_coefficient(model, {1.0 / 6.0, 1.0 / 6.0}, y), 1.9, 1e-15);
    EXPECT_DOUBLE_EQ(eval_coefficient(model, {0.5, 1.0 / 6.0 + 0.2}, y), 1.0);
    EXPECT_EQ(cookie_disc({0.5, 0.5 + 0.125}), 4);  // closed disc, exact boundary point
    EXPECT_EQ(cookie_disc({1.0 / 6.0 + 0.1249, 1.0 / 6.0}), 0);
    EXPECT_EQ(cookie_disc({1.0 / 6.0 + 0.1251, 1.0 / 6.0}), -1);
    EXPECT_EQ(cookie_disc({5.0 / 6.0, 5.0 / 6.0}), 8);
    EXPECT_EQ(cookie_disc({0.5, 1.0 / 6.0}), 1);
    EXPECT_EQ(cookie_disc({1.0 / 6.0, 0.5}), 3);
}

TEST(Coefficient, LengthMismatchThrows) {
    const auto model = make_problem("affine", 3, 8).model;
    const std::vector<double> y(2, 0.0);
    EXPECT_THROW(eval_coefficient(model, {0.5, 0.5}, y), InvalidArgument);
}

TEST(Coefficient, AffineIsLinearInY) {
    const auto model = make_problem("affine", 6, 8).model;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> y(6), ay(6);
        for (auto& v : y) v = u(rng);
        const double alpha = 0.5 * u(rng);
        for (std::size_t i = 0; i < y.size(); ++i) ay[i] = alpha * y[i];
        const Point2 p{0.5 * (u(rng) + 1), 0.5 * (u(rng) + 1)};
        EXPECT_NEAR(eval_coefficient(model, p, ay) - 1.0, alpha * (eval_coefficient(model, p, y) - 1.0), 1e-13);
    }
}

TEST(Coefficient, LognormalIsExpOfAffineExponent) {
    const auto logn = make_problem("lognormal", 5, 8, 0.9).model;
    const auto aff = CoefficientModel{AffineExpansion{.a0 = 1.0, .M = 5, .theta = 0.9}};
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> y(5);
        for (auto& v : y) v = g(rng);
        const Point2 p{0.13 * trial / 10.0, 0.77};
        // exponent = 0 + c sum a_m y_m with the same c as the a0 = 1 affine field
        const double exponent = eval_coefficient(aff, p, y) - 1.0;
        EXPECT_NEAR(eval_coefficient(logn, p, y), std::exp(exponent), 1e-13 * std::exp(exponent));
    }
    const std::vector<double> zero(5, 0.0);
    EXPECT_DOUBLE_EQ(eval_coefficient(logn, {0.4, 0.4}, zero), 1.0);
}

TEST(Ellipticity, WorkedBounds) {
    auto b = ellipticity_bounds(make_problem("affine", 5, 8, 0.9).model);
    EXPECT_NEAR(b.lower, 0.1, 1e-15);
    EXPECT_NEAR(b.upper, 1.9, 1e-15);
    b = ellipticity_bounds(make_problem("cookie", 9, 8).model);
    EXPECT_NEAR(b.lower, 0.1, 1e-15);
    EXPECT_NEAR(b.upper, 1.9, 1e-15);
    b = ellipticity_bounds(make_problem("affine", 5, 8, 0.0).model);
    EXPECT_EQ(b.lower, 1.0);
    EXPECT_EQ(b.upper, 1.0);
}

TEST(Ellipticity, RandomDrawsStayInside) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_real_distribution<double> s(-1.0, 1.0);
    std::normal_distribution<double> g;
    for (const char* name : {"affine", "cookie", "lognormal"}) {
        const int M = std::string(name) == "cookie" ? 9 : 7;
        const auto model = make_problem(name, M, 8).model;
        const auto bounds = ellipticity_bounds(model);
        int outside = 0;
        for (int k = 0; k < 10000; ++k) {
            std::vector<double> y(static_cast<std::size_t>(M));
            for (auto& v : y) v = model.domain() == ParameterDomain::gaussian ? g(rng) : s(rng);
            const double a = eval_coefficient(model, {u(rng), u(rng)}, y);
            if (a < bounds.lower || a > bounds.upper) ++outside;
        }
        if (model.domain() == ParameterDomain::gaussian) {
            EXPECT_LE(outside, 1) << name;  // holds with probability >= 1 - 1e-6 per draw
        } else {
            EXPECT_EQ(outside, 0) << name;
        }
    }
}

TEST(Ellipticity, LognormalQuantileBound) {
    // union bound over M = 1: t = Phi^{-1}(1 - 1e-6 / 2)
    const auto b = ellipticity_bounds(make_problem("lognormal", 1, 8, 0.5).model, 1e-6);
    const double t = std::log(b.upper) / 0.5;
    EXPECT_NEAR(t, 4.891638475698590, 1e-9);
    EXPECT_NEAR(b.lower * b.upper, 1.0, 1e-14);
}

TEST(Discretized, MatchesPointwiseEvaluation) {
    std::vector<Point2> points;
    for (int i = 0; i <= 20; ++i) points.push_back({i / 20.0, (20 - i) / 23.0});
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> s(-1.0, 1.0);
    for (const char* name : {"affine", "cookie", "lognormal"}) {
        const int M = std::string(name) == "cookie" ? 9 : 4;
        const auto model = make_problem(name, M, 8).model;
        DiscretizedCoefficient d(model, points);
        std::vector<double> y(static_cast<std::size_t>(M)), out(points.size());
        for (auto& v : y) v = s(rng);
        d.evaluate(y, out);
        for (std::size_t q = 0; q < points.size(); ++q) {
            EXPECT_NEAR(out[q], eval_coefficient(model, points[q], y), 1e-14) << name;
        }
    }
}

TEST(Catalog, RejectsBadInput) {
    EXPECT_THROW(make_problem("cookie", 8, 8), InvalidArgument);
    EXPECT_THROW(make_problem("heat", 3, 8), InvalidArgument);
    EXPECT_THROW(make_problem("affine", 0, 8), InvalidArgument);
    EXPECT_THROW(make_problem("affine", 3, 8, 1.0), InvalidArgument);
    EXPECT_EQ(make_problem("lognormal", 3, 8).model.domain(), ParameterDomain::gaussian);
    EXPECT_EQ(make_problem("cookie", 9, 8).model.domain(), ParameterDomain::uniform_cube);
}
