#include <gtest/gtest.h>

#include <functional>
#include <random>
#include <sstream>

#include "vmc/poly_chaos.hpp"
#include "vmc/tensor_train.hpp"

using namespace vmc;

namespace {

using Index = Eigen::Index;

// Entry by explicit summation over all rank indices (no matrix products).
double dense_entry(const TensorTrain& W, Index j, const std::vector<Index>& alpha) {
    const auto ranks = W.ranks();
    std::vector<Index> r(ranks.size());
    double total = 0.0;
    std::function<void(std::size_t)> rec = [&](std::size_t k) {
        if (k == r.size()) {
            double prod = W.core(0)(0, j, r[0]);
            for (std::size_t m = 1; m < W.order(); ++m) {
                const Index a = r[m - 1];
                const Index b = m < r.size() ? r[m] : 0;
                prod *= W.core(m)(a, alpha[m - 1], b);
            }
            total += prod;
            return;
        }
        for (r[k] = 0; r[k] < ranks[k]; ++r[k]) rec(k + 1);
    };
    rec(0);
    return total;
}

// Calls fn(alpha) for every stochastic multi-index.
void for_each_alpha(const TensorTrain& W, const std::function<void(const std::vector<Index>&)>& fn) {
    std::vector<Index> alpha(std::size_t(W.stochastic_modes()), 0);
    while (true) {
        fn(alpha);
        std::size_t m = 0;
        while (m < alpha.size() && ++alpha[m] == W.core(m + 1).mode) alpha[m++] = 0;
        if (m == alpha.size()) return;
    }
}

Eigen::MatrixXd dense(const TensorTrain& W) {
    std::vector<std::vector<Index>> all;
    for_each_alpha(W, [&](const std::vector<Index>& a) { all.push_back(a); });
    Eigen::MatrixXd D(W.spatial_size(), Index(all.size()));
    for (Index c = 0; c < D.cols(); ++c) {
        for (Index j = 0; j < D.rows(); ++j) D(j, c) = dense_entry(W, j, all[std::size_t(c)]);
    }
    return D;
}

TensorTrain random_tt(std::mt19937_64& rng, Index S, std::vector<Index> q, std::vector<Index> r) {
    std::vector<Index> modes{S};
    modes.insert(modes.end(), q.begin(), q.end());
    return TensorTrain::random(modes, r, rng);
}

TensorTrain random_small_tt(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> M_dist(1, 4), mode_dist(1, 4), rank_dist(1, 3);
    const int M = M_dist(rng);
    std::vector<Index> q, r;
    for (int m = 0; m < M; ++m) {
        q.push_back(mode_dist(rng));
        r.push_back(rank_dist(rng));
    }
    return random_tt(rng, mode_dist(rng), q, r);
}

bool left_orthogonal(const Core& c, double tol) {
    const Eigen::MatrixXd U = c.left_unfolding();
    return (U.transpose() * U - Eigen::MatrixXd::Identity(U.cols(), U.cols())).cwiseAbs().maxCoeff() <= tol;
}

bool right_orthogonal(const Core& c, double tol) {
    const Eigen::MatrixXd U = c.right_unfolding();
    return (U * U.transpose() - Eigen::MatrixXd::Identity(U.rows(), U.rows())).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace

TEST(Entry, AllOnesChains) {
    const std::vector<Index> modes{3, 2, 2, 2};
    for (Index rank : {1, 2}) {
        const std::vector<Index> ranks(3, rank);
        TensorTrain W = TensorTrain::zeros(modes, ranks);
        for (auto& c : W.mutable_cores()) std::fill(c.data.begin(), c.data.end(), 1.0);
        const std::vector<Index> alpha{1, 0, 1};
        EXPECT_EQ(tt_entry(W, 2, alpha), std::pow(double(rank), 3.0));
    }
}

TEST(Entry, MatchesDenseOracle) {
    std::mt19937_64 rng(1);
    const TensorTrain W = random_tt(rng, 2, {2, 2, 2}, {2, 2, 2});
    int checked = 0;
    for (Index j = 0; j < 2; ++j) {
        for_each_alpha(W, [&](const std::vector<Index>& a) {
            EXPECT_NEAR(tt_entry(W, j, a), dense_entry(W, j, a), 1e-13);
            ++checked;
        });
    }
    EXPECT_EQ(checked, 16);
    const std::vector<Index> bad{0, 2, 0};
    EXPECT_THROW(tt_entry(W, 0, bad), InvalidArgument);
    EXPECT_THROW(tt_entry(W, 2, std::vector<Index>{0, 0, 0}), InvalidArgument);
    EXPECT_THROW(tt_entry(W, 0, std::vector<Index>{0, 0}), InvalidArgument);
}

TEST(EvalAt, SelectionLinearityAndDenseSum) {
    std::mt19937_64 rng(2);
    const TensorTrain W = random_tt(rng, 4, {3, 3, 3}, {2, 3, 2});
    const Eigen::MatrixXd D = dense(W);
    std::vector<Eigen::VectorXd> e0(3, Eigen::VectorXd::Unit(3, 0));
    EXPECT_LE((tt_eval_at(W, e0) - D.col(0)).norm(), 1e-13);

    std::vector<Eigen::VectorXd> v(3);
    for (auto& x : v) x = Eigen::VectorXd::Random(3);
    Eigen::VectorXd expected = Eigen::VectorXd::Zero(4);
    Index col = 0;
    for_each_alpha(W, [&](const std::vector<Index>& a) {
        expected += D.col(col++) * v[0][a[0]] * v[1][a[1]] * v[2][a[2]];
    });
    const Eigen::VectorXd got = tt_eval_at(W, v);
    EXPECT_LE((got - expected).norm(), 1e-12);

    auto w = v;
    const Eigen::VectorXd z = Eigen::VectorXd::Random(3);
    w[1] = 2.0 * v[1] + z;
    auto vz = v;
    vz[1] = z;
    EXPECT_LE((tt_eval_at(W, w) - (2.0 * got + tt_eval_at(W, vz))).norm(), 1e-13 * (1 + got.norm()));
    EXPECT_LE(got.norm(), tt_norm(W) * v[0].norm() * v[1].norm() * v[2].norm());

    v[2] = Eigen::VectorXd::Ones(2);
    EXPECT_THROW(tt_eval_at(W, v), InvalidArgument);
}

TEST(EvalBatch, MatchesPointwise) {
    std::mt19937_64 rng(3);
    const TensorTrain W = random_tt(rng, 5, {3, 4, 2}, {3, 2, 2});
    std::vector<Eigen::MatrixXd> basis{Eigen::MatrixXd::Random(7, 3), Eigen::MatrixXd::Random(7, 4),
                                       Eigen::MatrixXd::Random(7, 2)};
    const Eigen::MatrixXd batch = tt_eval_batch(W, basis);
    for (Index i = 0; i < 7; ++i) {
        std::vector<Eigen::VectorXd> v{basis[0].row(i).transpose(), basis[1].row(i).transpose(),
                                       basis[2].row(i).transpose()};
        EXPECT_LE((batch.col(i) - tt_eval_at(W, v)).norm(), 1e-13);
    }
}

TEST(Canonicalize, PreservesEntriesAndOrthogonalizes) {
    std::mt19937_64 rng(4);
    const TensorTrain W = random_tt(rng, 3, {3, 2, 4}, {3, 3, 2});
    const Eigen::MatrixXd D = dense(W);
    const TensorTrain L = tt_canonicalize(W, Orthogonality::left);
    const TensorTrain R = tt_canonicalize(W, Orthogonality::right);
    EXPECT_LE((dense(L) - D).norm(), 1e-12 * D.norm());
    EXPECT_LE((dense(R) - D).norm(), 1e-12 * D.norm());
    for (std::size_t k = 0; k + 1 < L.order(); ++k) EXPECT_TRUE(left_orthogonal(L.core(k), 1e-12));
    for (std::size_t k = 1; k < R.order(); ++k) EXPECT_TRUE(right_orthogonal(R.core(k), 1e-12));
    EXPECT_NEAR(L.core(L.order() - 1).norm(), D.norm(), 1e-12 * D.norm());
    EXPECT_NEAR(R.core(0).norm(), D.norm(), 1e-12 * D.norm());
    const TensorTrain LL = tt_canonicalize(L, Orthogonality::left);
    EXPECT_LE((dense(LL) - dense(L)).norm(), 1e-12 * D.norm());
    for (std::size_t k = 0; k < L.order(); ++k) {
        const Eigen::Map<const Eigen::VectorXd> a(L.core(k).data.data(), Index(L.core(k).data.size()));
        const Eigen::Map<const Eigen::VectorXd> b(LL.core(k).data.data(), Index(LL.core(k).data.size()));
        EXPECT_LE((a - b).norm(), 1e-12 * (1 + a.norm()));
    }
}

TEST(Round, RemovesZeroPadding) {
    std::mt19937_64 rng(5);
    const TensorTrain W = random_tt(rng, 4, {3, 3, 3}, {2, 2, 2});
    const std::vector<Index> padded_ranks{4, 5, 4};
    const TensorTrain P = tt_pad_ranks(W, padded_ranks, 0.0, rng);
    EXPECT_EQ(P.ranks(), padded_ranks);
    const TensorTrain R = tt_round(P, {1e-12, {}});
    EXPECT_EQ(R.ranks(), W.ranks());
    EXPECT_LE((dense(R) - dense(W)).norm(), 1e-10 * dense(W).norm());
}

TEST(Round, ToleranceAndTargetRanks) {
    std::mt19937_64 rng(6);
    const TensorTrain W = random_tt(rng, 4, {3, 4, 3}, {3, 3, 3});
    const Eigen::MatrixXd D = dense(W);
    const TensorTrain same = tt_round(W, {0.0, W.ranks()});
    EXPECT_LE((dense(same) - D).norm(), 1e-12 * D.norm());
    for (double tol : {0.05, 0.2, 0.5}) {
        const TensorTrain R = tt_round(W, {tol, {}});
        EXPECT_LE((dense(R) - D).norm(), tol * D.norm() * (1 + 1e-12));
    }
    const TensorTrain capped = tt_round(W, {0.0, {1, 2, 1}});
    EXPECT_EQ(capped.ranks(), (std::vector<Index>{1, 2, 1}));
    const TensorTrain one = random_tt(rng, 3, {2, 2}, {1, 1});
    EXPECT_LE((dense(tt_round(one, {0.0, {1, 1}})) - dense(one)).norm(), 1e-13 * dense(one).norm());
}

TEST(Dot, MatchesDenseOracle) {
    std::mt19937_64 rng(7);
    const TensorTrain A = random_tt(rng, 3, {2, 3, 2}, {2, 3, 2});
    const TensorTrain B = random_tt(rng, 3, {2, 3, 2}, {3, 1, 2});
    const Eigen::MatrixXd DA = dense(A), DB = dense(B);
    EXPECT_NEAR(tt_dot(A, B), (DA.array() * DB.array()).sum(), 1e-12 * DA.norm() * DB.norm());
    EXPECT_NEAR(tt_dot(A, A), DA.squaredNorm(), 1e-12 * DA.squaredNorm());
    EXPECT_EQ(tt_dot(A, TensorTrain::zeros(A.modes(), A.ranks())), 0.0);
    const TensorTrain C = random_tt(rng, 3, {2, 3, 3}, {2, 2, 2});
    EXPECT_THROW(tt_dot(A, C), InvalidArgument);
}

TEST(Moments, MatchGaussQuadrature) {
    std::mt19937_64 rng(8);
    for (PolyFamily family : {PolyFamily::legendre_uniform, PolyFamily::hermite_gaussian}) {
        const TensorTrain W = random_tt(rng, 4, {3, 3}, {2, 2});
        const GaussRule rule = gauss_rule(family, 4);
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
        Eigen::MatrixXd second = Eigen::MatrixXd::Zero(4, 4);
        for (Index a = 0; a < 4; ++a) {
            for (Index b = 0; b < 4; ++b) {
                const std::vector<Eigen::VectorXd> v{eval_basis_vector(family, 3, rule.nodes[a]),
                                                     eval_basis_vector(family, 3, rule.nodes[b])};
                const Eigen::VectorXd phi = tt_eval_at(W, v);
                const double w = rule.weights[a] * rule.weights[b];
                mean += w * phi;
                second += w * phi * phi.transpose();
            }
        }
        EXPECT_LE((tt_mean(W) - mean).norm(), 1e-12 * (1 + mean.norm()));
        EXPECT_LE((tt_second_moment(W) - second).norm(), 1e-12 * (1 + second.norm()));
    }
}

TEST(Moments, SpecialCases) {
    std::mt19937_64 rng(9);
    // rank one, only the alpha = 0 slice nonzero
    TensorTrain W = TensorTrain::zeros(std::vector<Index>{3, 2, 2}, std::vector<Index>{1, 1});
    auto& cores = W.mutable_cores();
    cores[0].data = {1.0, -2.0, 0.5};
    cores[1](0, 0, 0) = 1.0;
    cores[2](0, 0, 0) = 1.0;
    const Eigen::Vector3d w(1.0, -2.0, 0.5);
    EXPECT_LE((tt_mean(W) - w).norm(), 1e-15);
    EXPECT_LE((tt_second_moment(W) - w * w.transpose()).norm(), 1e-15);
    EXPECT_LE(tt_variance(W).cwiseAbs().maxCoeff(), 1e-15);
    // a vanishing alpha_1 = 0 slice kills the mean
    cores[1](0, 0, 0) = 0.0;
    cores[1](0, 1, 0) = 3.0;
    EXPECT_TRUE(tt_mean(W).isZero(0.0));
    EXPECT_THROW(tt_second_moment(W, 2), CapacityError);
}

TEST(Moments, VarianceIsNonnegative) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        const TensorTrain W = random_small_tt(rng);
        EXPECT_GE(tt_variance(W).minCoeff(), -1e-10);
    }
}

TEST(Property, RandomSmallTrainsAgainstOracles) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const TensorTrain W = random_small_tt(rng);
        const Eigen::MatrixXd D = dense(W);
        const double scale = 1.0 + D.norm();
        // entries
        Index col = 0;
        std::vector<std::vector<Index>> all;
        for_each_alpha(W, [&](const std::vector<Index>& a) { all.push_back(a); });
        for (const auto& a : all) {
            for (Index j = 0; j < W.spatial_size(); ++j) ASSERT_NEAR(tt_entry(W, j, a), D(j, col), 1e-10 * scale);
            ++col;
        }
        // contraction with random vectors
        std::vector<Eigen::VectorXd> v;
        for (std::size_t m = 1; m < W.order(); ++m) v.push_back(Eigen::VectorXd::Random(W.core(m).mode));
        Eigen::VectorXd expected = Eigen::VectorXd::Zero(W.spatial_size());
        for (std::size_t c = 0; c < all.size(); ++c) {
            double w = 1.0;
            for (std::size_t m = 0; m < v.size(); ++m) w *= v[m][all[c][m]];
            expected += w * D.col(Index(c));
        }
        ASSERT_LE((tt_eval_at(W, v) - expected).norm(), 1e-10 * scale);
        // moments: the alpha = 0 column and the Gram matrix of all columns
        ASSERT_LE((tt_mean(W) - D.col(0)).norm(), 1e-10 * scale);
        ASSERT_LE((tt_second_moment(W) - D * D.transpose()).norm(), 1e-10 * scale * scale);
        // dot against a second random train of the same shape
        TensorTrain V = TensorTrain::random(W.modes(), W.ranks(), rng);
        ASSERT_NEAR(tt_dot(W, V), (D.array() * dense(V).array()).sum(), 1e-10 * scale * (1 + dense(V).norm()));
    }
}

TEST(Transform, SpatialChangeOfBasis) {
    std::mt19937_64 rng(12);
    const TensorTrain W = random_tt(rng, 3, {2, 2}, {2, 2});
    const Eigen::MatrixXd T = Eigen::MatrixXd::Random(5, 3);
    EXPECT_LE((dense(tt_transform_spatial(W, T)) - T * dense(W)).norm(), 1e-12);
}

TEST(Pad, KeepsTensorUpToNoise) {
    std::mt19937_64 rng(13);
    const TensorTrain W = random_tt(rng, 4, {3, 3, 3}, {1, 1, 1});
    const std::vector<Index> grown{2, 2, 2};
    const TensorTrain P = tt_pad_ranks(W, grown, 1e-6, rng);
    EXPECT_EQ(P.ranks(), grown);
    EXPECT_LE((dense(P) - dense(W)).norm(), 1e-5 * dense(W).norm());
    EXPECT_GT((dense(P) - dense(W)).norm(), 0.0);
}

TEST(Serialization, RoundTripsExactly) {
    std::mt19937_64 rng(14);
    const TensorTrain W = random_tt(rng, 5, {3, 2, 4}, {2, 3, 2});
    std::stringstream buffer;
    write_tt(buffer, W);
    const TensorTrain R = read_tt(buffer);
    EXPECT_EQ(R.modes(), W.modes());
    EXPECT_EQ(R.ranks(), W.ranks());
    for (std::size_t k = 0; k < W.order(); ++k) EXPECT_EQ(R.core(k).data, W.core(k).data);
    std::istringstream bad("VMC-TT 2\ncores 2\n");
    EXPECT_THROW(read_tt(bad), InvalidArgument);
    std::istringstream truncated("VMC-TT 1\ncores 2\nmodes 2 2\nranks 1\n1 2\n3\n");
    EXPECT_THROW(read_tt(truncated), InvalidArgument);
}

TEST(Shape, ValidationAndCounts) {
    std::vector<Core> cores{Core(1, 3, 2), Core(3, 2, 1)};
    EXPECT_THROW(TensorTrain{cores}, InvalidArgument);
    std::vector<Core> ok{Core(1, 3, 2), Core(2, 4, 1)};
    const TensorTrain W(ok);
    EXPECT_EQ(W.parameter_count(), 6 + 8);
    EXPECT_EQ(W.stochastic_modes(), 1);
    EXPECT_EQ(W.ranks(), (std::vector<Index>{2}));
    EXPECT_THROW(TensorTrain::zeros(std::vector<Index>{3}, std::vector<Index>{}), InvalidArgument);
}
