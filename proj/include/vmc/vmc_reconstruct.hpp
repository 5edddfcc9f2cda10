#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "vmc/errors.hpp"
#include "vmc/mesh_fem.hpp"
#include "vmc/poly_chaos.hpp"
#include "vmc/sampling.hpp"
#include "vmc/tensor_train.hpp"

namespace vmc {

// ---------------------------------------------------------------------------
// H^1_0-orthogonal representation of FE coefficient vectors

/// Factor X with S = X^T X, taken from the sparse Cholesky P S P^T = L L^T as
/// X = L^T P. Maps nodal coefficients u to v = X u with u^T S w = v^T (X w).
class StiffnessFactor {
public:
    explicit StiffnessFactor(const SparseSpdOperator& S) : size_(S.dimension()) {
        Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(S.matrix);
        if (llt.info() != Eigen::Success) {
            const double shift = 1e-12 * trace(S.matrix) / double(std::max<Eigen::Index>(1, size_));
            Eigen::SparseMatrix<double> identity(size_, size_);
            identity.setIdentity();
            Eigen::SparseMatrix<double> shifted = S.matrix + shift * identity;
            llt.compute(shifted);
            if (llt.info() != Eigen::Success) {
                throw ConditioningError("Cholesky factorization of the stiffness matrix failed after jitter",
                                        failing_pivot(Eigen::MatrixXd(shifted)));
            }
            jitter_ = shift;
        }
        L_ = llt.matrixL();
        perm_ = llt.permutationP();
    }

    [[nodiscard]] Eigen::Index size() const { return size_; }
    [[nodiscard]] double jitter() const { return jitter_; }

    /// X u (columnwise)
    [[nodiscard]] Eigen::MatrixXd apply(const Eigen::MatrixXd& nodal) const {
        return L_.transpose() * (perm_ * nodal);
    }

    /// X^{-1} v (columnwise)
    [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixXd& orthogonal) const {
        Eigen::MatrixXd w = L_.transpose().triangularView<Eigen::Upper>().solve(orthogonal);
        return perm_.transpose() * w;
    }

private:
    static double trace(const Eigen::SparseMatrix<double>& A) {
        double t = 0.0;
        for (Eigen::Index k = 0; k < A.rows(); ++k) t += A.coeff(k, k);
        return t;
    }

    /// First pivot at which an unpivoted dense Cholesky breaks down.
    static std::ptrdiff_t failing_pivot(Eigen::MatrixXd A) {
        const Eigen::Index n = A.rows();
        for (Eigen::Index k = 0; k < n; ++k) {
            const double d = A(k, k);
            if (!(d > 0.0)) return k;
            const double s = std::sqrt(d);
            A.col(k).tail(n - k - 1) /= s;
            for (Eigen::Index j = k + 1; j < n; ++j) A.col(j).tail(n - j) -= A(j, k) * A.col(k).tail(n - j);
        }
        return -1;
    }

    Eigen::Index size_ = 0;
    double jitter_ = 0.0;
    Eigen::SparseMatrix<double> L_;
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic> perm_;
};

struct OrthogonalizedTargets {
    Eigen::MatrixXd targets;  ///< S x N, column i = X u_i
    std::shared_ptr<const StiffnessFactor> factor;
};

/// Column i of `nodal` is the FE coefficient vector of sample i.
inline OrthogonalizedTargets orthogonalize_targets(const Eigen::MatrixXd& nodal, const SparseSpdOperator& S) {
    if (nodal.rows() != S.dimension()) throw InvalidArgument("orthogonalize_targets: dimension mismatch");
    auto factor = std::make_shared<const StiffnessFactor>(S);
    return {factor->apply(nodal), factor};
}

/// Everything the empirical functional needs: per-mode basis values and
/// orthogonalized targets for each sample.
struct TrainingData {
    RowMatrix parameters;                ///< N x M
    std::vector<Eigen::MatrixXd> basis;  ///< per mode, N x q_m
    Eigen::MatrixXd targets;             ///< S x N
    std::shared_ptr<const StiffnessFactor> factor;

    [[nodiscard]] Eigen::Index size() const { return targets.cols(); }
    [[nodiscard]] Eigen::Index spatial_size() const { return targets.rows(); }
    [[nodiscard]] int modes() const { return int(basis.size()); }

    [[nodiscard]] TrainingData subset(std::span<const Eigen::Index> rows) const {
        TrainingData out;
        out.factor = factor;
        const auto n = Eigen::Index(rows.size());
        out.parameters.resize(n, parameters.cols());
        out.targets.resize(targets.rows(), n);
        out.basis.resize(basis.size());
        for (std::size_t m = 0; m < basis.size(); ++m) out.basis[m].resize(n, basis[m].cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index r = rows[std::size_t(i)];
            if (parameters.rows() > 0) out.parameters.row(i) = parameters.row(r);
            out.targets.col(i) = targets.col(r);
            for (std::size_t m = 0; m < basis.size(); ++m) out.basis[m].row(i) = basis[m].row(r);
        }
        return out;
    }
};

inline std::vector<Eigen::MatrixXd> evaluate_basis(const RowMatrix& parameters, const BasisSpec& spec) {
    if (parameters.cols() != spec.modes()) {
        throw InvalidArgument("basis has " + std::to_string(spec.modes()) + " modes, parameters have " +
                              std::to_string(parameters.cols()));
    }
    std::vector<Eigen::MatrixXd> basis;
    for (int m = 0; m < spec.modes(); ++m) {
        const int q = spec.degrees[std::size_t(m)];
        if (q < 1) throw InvalidArgument("basis degree counts must be >= 1");
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values(parameters.rows(), q);
        for (Eigen::Index i = 0; i < parameters.rows(); ++i) {
            eval_basis_into(spec.family, q, parameters(i, m), {values.row(i).data(), std::size_t(q)});
        }
        basis.emplace_back(values);
    }
    return basis;
}

inline TrainingData make_training_data(const RowMatrix& parameters, const BasisSpec& spec,
                                       OrthogonalizedTargets targets) {
    if (parameters.rows() != targets.targets.cols()) {
        throw InvalidArgument("make_training_data: sample count mismatch");
    }
    return {parameters, evaluate_basis(parameters, spec), std::move(targets.targets), std::move(targets.factor)};
}

/// Mean over samples of ||Phi_W(y_i) - u_i||^2 in orthogonalized coordinates,
/// i.e. the squared H1_0 error.
inline double empirical_risk(const TensorTrain& W, const TrainingData& data) {
    if (data.size() == 0) throw InvalidArgument("empirical_risk: no samples");
    if (W.spatial_size() != data.spatial_size() || W.stochastic_modes() != data.modes()) {
        throw InvalidArgument("empirical_risk: tensor shape does not match the data");
    }
    const Eigen::MatrixXd residual = tt_eval_batch(W, data.basis) - data.targets;
    return residual.squaredNorm() / double(data.size());
}

/// Per-sample ||Phi_W(y_i) - u_i|| / ||u_i|| (absolute error where the
/// target vanishes).
inline Eigen::VectorXd relative_errors(const TensorTrain& W, const TrainingData& data) {
    if (data.size() == 0) throw InvalidArgument("relative_errors: no samples");
    if (W.spatial_size() != data.spatial_size() || W.stochastic_modes() != data.modes()) {
        throw InvalidArgument("relative_errors: tensor shape does not match the data");
    }
    const Eigen::MatrixXd residual = tt_eval_batch(W, data.basis) - data.targets;
    Eigen::VectorXd e(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const double target = data.targets.col(i).norm();
        const double error = residual.col(i).norm();
        e[i] = target > 0.0 ? error / target : error;
    }
    return e;
}

inline double mean_relative_error(const TensorTrain& W, const TrainingData& data) {
    return relative_errors(W, data).mean();
}

/// Mean squared target norm, the risk of the zero surrogate.
inline double target_energy(const TrainingData& data) {
    return data.targets.squaredNorm() / double(std::max<Eigen::Index>(1, data.size()));
}

// ---------------------------------------------------------------------------
// Alternating least squares

/// Statistic on the validation split that drives rank growth, early stopping
/// and the choice of the returned iterate.
enum class ValidationMetric {
    relative_error,  ///< mean_relative_error
    risk,            ///< empirical_risk
};

struct AlsConfig {
    int max_rank = 40;
    int rank_cooldown = 10;         ///< sweeps between rank increases
    int max_sweeps = 300;
    double stagnation_tolerance = 1e-8;  ///< relative training-risk gain over one cooldown window
    double ridge = 1e-12;           ///< relative to trace / dim of each local normal matrix
    double validation_fraction = 0.2;
    ValidationMetric validation_metric = ValidationMetric::relative_error;
    int validation_patience = 3;    ///< windows without a new best validation risk before stopping
    double validation_gain = 0.01;  ///< relative drop that resets the patience counter
    bool one_standard_error = true; ///< return the earliest iterate within one standard error of the best
    double risk_floor = 1e-24;      ///< stop once training risk <= floor * target energy
    int initial_candidates = 4;     ///< rank-1 starts tried (see initial_candidate)
    int candidate_sweeps = 5;       ///< sweeps each start gets before the best is kept
    std::uint64_t seed = 0;
};

struct FitReport {
    std::vector<Eigen::Index> final_ranks;
    int sweeps = 0;
    int best_sweep = 0;              ///< sweep of the returned iterate (0: the start tensor)
    std::string stop_reason;
    std::vector<double> training_risk;    ///< after each sweep
    std::vector<double> validation_risk;  ///< after each sweep, in the configured validation metric
    std::vector<double> validation_standard_error;  ///< of validation_risk over the split (0 without one)
    std::vector<int> adaptation_sweeps;   ///< sweeps after which ranks grew
    std::vector<std::vector<Eigen::Index>> rank_history;
    std::map<std::string, double> seconds;
};

struct FitResult {
    TensorTrain tensor;
    FitReport report;
};

namespace detail {

inline Eigen::MatrixXd ridge_solve(Eigen::MatrixXd A, const Eigen::MatrixXd& rhs, double ridge) {
    const Eigen::Index n = A.rows();
    const double shift = ridge * A.trace() / double(std::max<Eigen::Index>(1, n));
    A.diagonal().array() += shift;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    Eigen::MatrixXd x;
    if (llt.info() == Eigen::Success) {
        x = llt.solve(rhs);
    } else {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
        if (ldlt.info() != Eigen::Success) throw NumericalBreakdown("local ALS system is singular");
        x = ldlt.solve(rhs);
    }
    if (!x.allFinite()) throw NumericalBreakdown("local ALS system is singular");
    return x;
}

/// Row-wise Kronecker product: out(i, j * b.cols() + c) = a(i, j) * b(i, c).
inline Eigen::MatrixXd row_kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows(), a.cols() * b.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        out.middleCols(j * b.cols(), b.cols()) = b.array().colwise() * a.col(j).array();
    }
    return out;
}

/// Sweep state: cores plus per-sample interfaces.
class AlsSweeper {
public:
    AlsSweeper(std::vector<Core> cores, const TrainingData& data, double ridge)
        : cores_(std::move(cores)), data_(data), ridge_(ridge), M_(cores_.size() - 1), N_(data.size()) {}

    std::vector<Core> run() {
        for (std::size_t k = cores_.size() - 1; k > 0; --k) right_orthogonalize_core(cores_, k);
        build_right_interfaces();
        left_.assign(M_ + 1, Eigen::MatrixXd());

        solve_spatial();
        left_orthogonalize_core(cores_, 0);
        projected_ = cores_[0].left_unfolding().transpose() * data_.targets;  // r0 x N
        for (std::size_t k = 1; k <= M_; ++k) {
            solve_stochastic(k);
            if (k < M_) {
                left_orthogonalize_core(cores_, k);
                extend_left_interface(k);
            }
        }
        for (std::size_t k = M_; k > 1; --k) {
            right_orthogonalize_core(cores_, k);
            right_[k - 1] = row_kron(data_.basis[k - 1], right_[k]) * cores_[k].right_unfolding().transpose();
            solve_stochastic(k - 1);
        }
        right_orthogonalize_core(cores_, 1);
        return std::move(cores_);
    }

private:
    // right_[k] (k = 0..M-1) is N x r_k: row i = G_{k+1}(y_i) ... G_M(y_i); right_[M] = ones.
    void build_right_interfaces() {
        right_.assign(M_ + 1, Eigen::MatrixXd());
        right_[M_] = Eigen::MatrixXd::Ones(N_, 1);
        for (std::size_t k = M_; k > 0; --k) {
            right_[k - 1] = row_kron(data_.basis[k - 1], right_[k]) * cores_[k].right_unfolding().transpose();
        }
    }

    // left_[k] (k >= 2) stacks the r0 x r_{k-1} matrices G_1(y_i) ... G_{k-1}(y_i)
    // as rows i*r0 .. i*r0+r0-1; left_[1] is the identity for every sample.
    void extend_left_interface(std::size_t k) {
        const Core& c = cores_[k];
        const Eigen::Index r0 = cores_[0].right;
        Eigen::MatrixXd product;
        if (k == 1) {
            product.resize(N_ * r0, c.mode * c.right);
            for (Eigen::Index i = 0; i < N_; ++i) product.middleRows(i * r0, r0) = c.right_unfolding();
        } else {
            product = left_[k] * c.right_unfolding();
        }
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(N_ * r0, c.right);
        const Eigen::MatrixXd& B = data_.basis[k - 1];
        for (Eigen::Index i = 0; i < N_; ++i) {
            auto block = next.middleRows(i * r0, r0);
            for (Eigen::Index j = 0; j < c.mode; ++j) {
                block += B(i, j) * product.block(i * r0, j * c.right, r0, c.right);
            }
        }
        left_[k + 1] = std::move(next);
    }

    void solve_spatial() {
        const Eigen::MatrixXd& G = right_[0];  // N x r0
        const double inv_n = 1.0 / double(N_);
        const Eigen::MatrixXd gram = inv_n * (G.transpose() * G);
        const Eigen::MatrixXd rhs = inv_n * (G.transpose() * data_.targets.transpose());  // r0 x S
        const Eigen::MatrixXd solution = ridge_solve(gram, rhs, ridge_);
        cores_[0] = core_from_left(solution.transpose(), 1, data_.spatial_size());
    }

    void solve_stochastic(std::size_t k) {
        Core& c = cores_[k];
        const Eigen::Index r0 = cores_[0].right;
        const Eigen::Index rl = c.left, q = c.mode, rr = c.right;
        const Eigen::Index wdim = q * rr;
        const Eigen::Index dim = rl * wdim;
        const Eigen::MatrixXd features = row_kron(data_.basis[k - 1], right_[k]);  // N x (q rr)

        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::MatrixXd H(N_, rl);  // row i = L_i^T t_i
        if (k == 1) {
            const Eigen::MatrixXd wgram = features.transpose() * features;
            for (Eigen::Index a = 0; a < rl; ++a) A.block(a * wdim, a * wdim, wdim, wdim) = wgram;
            H = projected_.transpose();
        } else {
            const Eigen::MatrixXd& L = left_[k];
            // A[(a, w), (b, v)] = sum_i P_i(a, b) f_i(w) f_i(v) is symmetric in (a, b) and in
            // (w, v) separately, so only the pairs a <= b and w <= v are accumulated.
            const auto pairs = [](Eigen::Index n) {
                std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
                for (Eigen::Index a = 0; a < n; ++a) {
                    for (Eigen::Index b = a; b < n; ++b) out.emplace_back(a, b);
                }
                return out;
            };
            const auto lpairs = pairs(rl), wpairs = pairs(wdim);
            const auto nl = Eigen::Index(lpairs.size()), nw = Eigen::Index(wpairs.size());
            Eigen::MatrixXd P(N_, nl);
            for (Eigen::Index i = 0; i < N_; ++i) {
                const auto Li = L.middleRows(i * r0, r0);
                const Eigen::MatrixXd Pi = Li.transpose() * Li;
                for (Eigen::Index p = 0; p < nl; ++p) P(i, p) = Pi(lpairs[std::size_t(p)].first, lpairs[std::size_t(p)].second);
                H.row(i) = (Li.transpose() * projected_.col(i)).transpose();
            }
            constexpr Eigen::Index chunk = 256;
            Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nl, nw);
            Eigen::MatrixXd outer;
            for (Eigen::Index start = 0; start < N_; start += chunk) {
                const Eigen::Index n = std::min(chunk, N_ - start);
                outer.resize(n, nw);
                for (Eigen::Index s = 0; s < nw; ++s) {
                    const auto [w, v] = wpairs[std::size_t(s)];
                    outer.col(s) = features.col(w).segment(start, n).cwiseProduct(features.col(v).segment(start, n));
                }
                K.noalias() += P.middleRows(start, n).transpose() * outer;
            }
            for (Eigen::Index p = 0; p < nl; ++p) {
                const auto [a, b] = lpairs[std::size_t(p)];
                for (Eigen::Index s = 0; s < nw; ++s) {
                    const auto [w, v] = wpairs[std::size_t(s)];
                    const double value = K(p, s);
                    A(a * wdim + w, b * wdim + v) = value;
                    A(b * wdim + w, a * wdim + v) = value;
                    A(a * wdim + v, b * wdim + w) = value;
                    A(b * wdim + v, a * wdim + w) = value;
                }
            }
        }
        const double inv_n = 1.0 / double(N_);
        A *= inv_n;
        const Eigen::MatrixXd g = inv_n * (H.transpose() * features);  // rl x (q rr)
        Eigen::VectorXd rhs(dim);
        for (Eigen::Index a = 0; a < rl; ++a) rhs.segment(a * wdim, wdim) = g.row(a).transpose();
        const Eigen::VectorXd x = ridge_solve(A, rhs, ridge_);
        std::copy(x.data(), x.data() + dim, c.data.begin());
    }

    std::vector<Core> cores_;
    const TrainingData& data_;
    double ridge_;
    std::size_t M_;
    Eigen::Index N_;
    std::vector<Eigen::MatrixXd> right_;
    std::vector<Eigen::MatrixXd> left_;
    Eigen::MatrixXd projected_;
};

}  // namespace detail

/// One forward (core 0 to M) and backward pass of exact ridge-regularized local
/// least-squares updates. The represented tensor is right-canonicalized first.
inline TensorTrain als_sweep(const TensorTrain& W, const TrainingData& data, double ridge) {
    if (data.size() == 0) throw InvalidArgument("als_sweep: no samples");
    if (W.spatial_size() != data.spatial_size() || W.stochastic_modes() != data.modes()) {
        throw InvalidArgument("als_sweep: tensor shape does not match the data");
    }
    for (int m = 0; m < data.modes(); ++m) {
        if (W.core(std::size_t(m) + 1).mode != data.basis[std::size_t(m)].cols()) {
            throw InvalidArgument("als_sweep: mode size does not match the basis");
        }
    }
    detail::AlsSweeper sweeper(W.cores(), data, ridge);
    return TensorTrain(sweeper.run());
}

/// Largest rank each bond can carry: min(prod of modes left of it, prod right of it).
inline std::vector<Eigen::Index> feasible_ranks(const TensorTrain& W) {
    const auto modes = W.modes();
    std::vector<Eigen::Index> caps(modes.size() - 1);
    const double big = 1e18;
    double left = 1.0;
    for (std::size_t k = 0; k + 1 < modes.size(); ++k) {
        left = std::min(big, left * double(modes[k]));
        double right = 1.0;
        for (std::size_t j = k + 1; j < modes.size(); ++j) right = std::min(big, right * double(modes[j]));
        caps[k] = Eigen::Index(std::min(left, right));
    }
    return caps;
}

/// Adds one to every rank below the cap when the validation risk improved by
/// less than 1% over the last cooldown window; otherwise returns W unchanged.
template <class Rng>
TensorTrain adapt_ranks(const TensorTrain& W, std::span<const double> validation_history, const AlsConfig& config,
                        Rng& rng) {
    const auto window = std::size_t(std::max(1, config.rank_cooldown));
    if (validation_history.size() < window + 1) return W;
    const double before = validation_history[validation_history.size() - 1 - window];
    const double now = validation_history.back();
    const bool stagnating = before <= 0.0 ? true : (before - now) / before < 0.01;
    if (!stagnating) return W;

    const auto caps = feasible_ranks(W);
    auto ranks = W.ranks();
    bool grew = false;
    for (std::size_t k = 0; k < ranks.size(); ++k) {
        const Eigen::Index cap = std::min<Eigen::Index>(config.max_rank, caps[k]);
        if (ranks[k] < cap) {
            ++ranks[k];
            grew = true;
        }
    }
    if (!grew) return W;
    return tt_pad_ranks(W, ranks, 1e-6, rng);
}

namespace detail {

inline std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, std::uint64_t seed) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index i = n - 1; i > 0; --i) {
        const auto j = Eigen::Index(counter_uniform(seed, std::uint64_t(i), 0x5eed) * double(i + 1));
        std::swap(idx[std::size_t(i)], idx[std::size_t(std::min(j, i))]);
    }
    return idx;
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

/// Random rank-1 tensor with unit-norm Gaussian cores.
inline TensorTrain initial_tensor(Eigen::Index spatial, std::span<const int> degrees, std::uint64_t seed) {
    std::vector<Eigen::Index> modes{spatial};
    for (int q : degrees) modes.push_back(q);
    std::vector<Eigen::Index> ranks(degrees.size(), 1);
    std::mt19937_64 rng(seed);
    TensorTrain W = TensorTrain::random(modes, ranks, rng);
    for (auto& core : W.mutable_cores()) {
        const double n = core.norm();
        for (auto& x : core.data) x /= n;
    }
    return W;
}

/// Rank-1 start number `j`: 0 is initial_tensor(seed), 1 keeps its spatial
/// core but makes every stochastic core the constant basis function (the
/// surrogate starts as a multiple of one field), j >= 2 are further Gaussian
/// draws. Random rank-1 starts can stall in poor local minima when N is small.
inline TensorTrain initial_candidate(Eigen::Index spatial, std::span<const int> degrees, std::uint64_t seed, int j) {
    if (j == 1) {
        TensorTrain W = initial_tensor(spatial, degrees, seed);
        for (std::size_t k = 1; k < W.order(); ++k) {
            auto& core = W.mutable_cores()[k];
            std::fill(core.data.begin(), core.data.end(), 0.0);
            core(0, 0, 0) = 1.0;
        }
        return W;
    }
    return initial_tensor(spatial, degrees, j == 0 ? seed : seed + std::uint64_t(j) * 0x9e3779b97f4a7c15ULL);
}

/// Minimizes the empirical risk over tensor trains: best of a few rank-1
/// starts, ALS sweeps, rank growth every cooldown window while the validation risk
/// stagnates. Returns the iterate with the lowest validation statistic or,
/// with one_standard_error, the earliest one within a standard error of it:
/// past the best rank the holdout error is flat while the larger models
/// overfit the mean.
inline FitResult reconstruct(const TrainingData& data, const AlsConfig& config) {
    if (data.size() == 0) throw InvalidArgument("reconstruct: need at least one sample");
    if (config.max_rank < 1) throw InvalidArgument("reconstruct: max_rank must be >= 1");
    if (!(config.validation_gain >= 0.0 && config.validation_gain < 1.0)) {
        throw InvalidArgument("reconstruct: validation gain must lie in [0, 1)");
    }
    if (!(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0)) {
        throw InvalidArgument("reconstruct: validation fraction must lie in [0, 1)");
    }
    const auto t_start = std::chrono::steady_clock::now();
    FitReport report;

    const Eigen::Index N = data.size();
    Eigen::Index n_val = Eigen::Index(std::llround(config.validation_fraction * double(N)));
    if (config.validation_fraction > 0.0 && N >= 2) n_val = std::clamp<Eigen::Index>(n_val, 1, N - 1);
    else n_val = 0;
    const auto order = detail::shuffled_indices(N, config.seed);
    std::vector<Eigen::Index> train_rows(order.begin(), order.end() - n_val);
    std::vector<Eigen::Index> val_rows(order.end() - n_val, order.end());
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(val_rows.begin(), val_rows.end());
    const TrainingData train = data.subset(train_rows);
    const TrainingData validation = n_val > 0 ? data.subset(val_rows) : TrainingData{};
    struct Score {
        double value = 0.0;
        double standard_error = 0.0;
    };
    const auto validation_score = [&](const TensorTrain& W, double training) {
        if (n_val == 0) {
            if (config.validation_metric == ValidationMetric::relative_error) return Score{mean_relative_error(W, train)};
            return Score{training};
        }
        Eigen::VectorXd loss;
        if (config.validation_metric == ValidationMetric::relative_error) {
            loss = relative_errors(W, validation);
        } else {
            loss = (tt_eval_batch(W, validation.basis) - validation.targets).colwise().squaredNorm().transpose();
        }
        const double mean = loss.mean();
        const double n = double(loss.size());
        const double var = n > 1 ? (loss.array() - mean).square().sum() / (n - 1) : 0.0;
        return Score{mean, std::sqrt(var / n)};
    };

    std::vector<int> degrees;
    for (const auto& b : data.basis) degrees.push_back(int(b.cols()));
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    const double energy = target_energy(train);

    // short runs from each rank-1 start; the best by validation continues
    auto t0 = std::chrono::steady_clock::now();
    TensorTrain W;
    double start_risk = std::numeric_limits<double>::infinity();
    for (int j = 0; j < std::max(1, config.initial_candidates); ++j) {
        TensorTrain candidate =
            tt_canonicalize(initial_candidate(data.spatial_size(), degrees, config.seed, j), Orthogonality::right);
        for (int s = 0; s < config.candidate_sweeps; ++s) candidate = als_sweep(candidate, train, config.ridge);
        const double risk = validation_score(candidate, empirical_risk(candidate, train)).value;
        if (j == 0 || risk < start_risk) {
            start_risk = risk;
            W = std::move(candidate);
        }
    }
    const double start_seconds = detail::seconds_since(t0);

    // running-best iterates; the returned one is among them
    struct Record {
        int sweep;
        Score score;
        TensorTrain W;
    };
    std::vector<Record> records;
    double gain_reference = std::numeric_limits<double>::infinity();
    int last_gain = 0;
    int last_adaptation = 0;
    const int window = std::max(1, config.rank_cooldown);
    double sweep_seconds = 0.0, adapt_seconds = 0.0;
    report.stop_reason = "max_sweeps";

    for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
        t0 = std::chrono::steady_clock::now();
        W = als_sweep(W, train, config.ridge);
        sweep_seconds += detail::seconds_since(t0);

        const double tr = empirical_risk(W, train);
        const Score score = validation_score(W, tr);
        const double va = score.value;
        report.training_risk.push_back(tr);
        report.validation_risk.push_back(va);
        report.validation_standard_error.push_back(score.standard_error);
        report.rank_history.push_back(W.ranks());
        report.sweeps = sweep;
        if (records.empty() || va < records.back().score.value) {
            // older records this far above the best cannot be selected any more
            std::erase_if(records, [&](const Record& r) { return r.score.value > va + 2.0 * score.standard_error; });
            records.push_back({sweep, score, W});
        }
        if (va < (1.0 - config.validation_gain) * gain_reference) {
            gain_reference = va;
            last_gain = sweep;
        }
        if (tr <= config.risk_floor * energy) {
            report.stop_reason = "converged";
            break;
        }
        if (sweep - last_gain >= config.validation_patience * window) {
            report.stop_reason = "validation_patience";
            break;
        }
        if (sweep - last_adaptation < window) continue;

        t0 = std::chrono::steady_clock::now();
        // include the risk recorded just before the window opened
        const auto since = std::span<const double>(report.validation_risk)
                               .subspan(std::size_t(std::max(0, last_adaptation - 1)));
        TensorTrain grown = adapt_ranks(W, since, config, rng);
        adapt_seconds += detail::seconds_since(t0);
        if (grown.ranks() != W.ranks()) {
            W = tt_canonicalize(grown, Orthogonality::right);
            last_adaptation = sweep;
            report.adaptation_sweeps.push_back(sweep);
            continue;
        }
        const double before = sweep > window ? report.training_risk[std::size_t(sweep - window - 1)] : energy;
        if (before <= 0.0 || (before - tr) / before < config.stagnation_tolerance) {
            report.stop_reason = "stagnated";
            break;
        }
    }
    if (records.empty()) records.push_back({0, validation_score(W, empirical_risk(W, train)), W});
    const Record& best = records.back();
    const double threshold = best.score.value + (config.one_standard_error ? best.score.standard_error : 0.0);
    const auto chosen = std::find_if(records.begin(), records.end(),
                                     [&](const Record& r) { return r.score.value <= threshold; });
    report.best_sweep = chosen->sweep;
    report.final_ranks = chosen->W.ranks();
    report.seconds["start"] = start_seconds;
    report.seconds["sweeps"] = sweep_seconds;
    report.seconds["adaptation"] = adapt_seconds;
    report.seconds["total"] = detail::seconds_since(t_start);
    return {std::move(chosen->W), std::move(report)};
}

/// Converts a surrogate fitted in orthogonalized coordinates back to nodal
/// FE coefficients (core 0 <- X^{-1} core 0).
inline TensorTrain to_nodal_basis(const TensorTrain& W, const StiffnessFactor& factor) {
    return tt_transform_spatial(W, factor.solve(Eigen::MatrixXd::Identity(factor.size(), factor.size())));
}

}  // namespace vmc
