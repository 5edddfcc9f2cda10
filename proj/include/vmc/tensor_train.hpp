#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "vmc/errors.hpp"

namespace vmc {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Order-3 core U(a, i, b) of shape left x mode x right, stored row-major.
struct Core {
    Eigen::Index left = 1;
    Eigen::Index mode = 1;
    Eigen::Index right = 1;
    std::vector<double> data;

    Core() = default;
    Core(Eigen::Index l, Eigen::Index n, Eigen::Index r) : left(l), mode(n), right(r), data(std::size_t(l * n * r), 0.0) {}

    double& operator()(Eigen::Index a, Eigen::Index i, Eigen::Index b) { return data[std::size_t((a * mode + i) * right + b)]; }
    double operator()(Eigen::Index a, Eigen::Index i, Eigen::Index b) const {
        return data[std::size_t((a * mode + i) * right + b)];
    }

    /// (left * mode) x right
    [[nodiscard]] Eigen::Map<RowMajorMatrix> left_unfolding() { return {data.data(), left * mode, right}; }
    [[nodiscard]] Eigen::Map<const RowMajorMatrix> left_unfolding() const { return {data.data(), left * mode, right}; }
    /// left x (mode * right)
    [[nodiscard]] Eigen::Map<RowMajorMatrix> right_unfolding() { return {data.data(), left, mode * right}; }
    [[nodiscard]] Eigen::Map<const RowMajorMatrix> right_unfolding() const { return {data.data(), left, mode * right}; }

    /// left x right slice U(:, i, :)
    [[nodiscard]] Eigen::Map<const RowMajorMatrix, 0, Eigen::OuterStride<>> slice(Eigen::Index i) const {
        return {data.data() + i * right, left, right, Eigen::OuterStride<>(mode * right)};
    }

    /// sum_i v_i U(:, i, :)
    [[nodiscard]] Eigen::MatrixXd contract_mode(const Eigen::Ref<const Eigen::VectorXd>& v) const {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(left, right);
        for (Eigen::Index i = 0; i < mode; ++i) {
            if (v[i] != 0.0) out += v[i] * slice(i);
        }
        return out;
    }

    [[nodiscard]] double norm() const { return left_unfolding().norm(); }
};

/// Tensor train W(j, alpha) = U0(j) U1(alpha_1) ... UM(alpha_M). Core 0 carries
/// the spatial mode (size S), cores 1..M the stochastic modes q_1..q_M; the
/// outer ranks are one. ranks() returns the M inner ranks r_0..r_{M-1}.
class TensorTrain {
public:
    TensorTrain() = default;

    explicit TensorTrain(std::vector<Core> cores) : cores_(std::move(cores)) { validate(); }

    static TensorTrain zeros(std::span<const Eigen::Index> modes, std::span<const Eigen::Index> ranks) {
        if (modes.size() < 2 || ranks.size() + 1 != modes.size()) {
            throw InvalidArgument("TensorTrain: need M+1 >= 2 modes and M ranks");
        }
        std::vector<Core> cores;
        for (std::size_t k = 0; k < modes.size(); ++k) {
            const Eigen::Index l = k == 0 ? 1 : ranks[k - 1];
            const Eigen::Index r = k + 1 == modes.size() ? 1 : ranks[k];
            cores.emplace_back(l, modes[k], r);
        }
        return TensorTrain(std::move(cores));
    }

    template <class Rng>
    static TensorTrain random(std::span<const Eigen::Index> modes, std::span<const Eigen::Index> ranks, Rng& rng) {
        TensorTrain tt = zeros(modes, ranks);
        std::normal_distribution<double> normal;
        for (auto& core : tt.cores_) {
            for (auto& x : core.data) x = normal(rng);
        }
        return tt;
    }

    [[nodiscard]] std::size_t order() const { return cores_.size(); }
    [[nodiscard]] int stochastic_modes() const { return int(cores_.size()) - 1; }
    [[nodiscard]] Eigen::Index spatial_size() const { return cores_.front().mode; }

    [[nodiscard]] std::vector<Eigen::Index> modes() const {
        std::vector<Eigen::Index> m;
        for (const auto& c : cores_) m.push_back(c.mode);
        return m;
    }

    [[nodiscard]] std::vector<Eigen::Index> ranks() const {
        std::vector<Eigen::Index> r;
        for (std::size_t k = 0; k + 1 < cores_.size(); ++k) r.push_back(cores_[k].right);
        return r;
    }

    [[nodiscard]] Eigen::Index parameter_count() const {
        Eigen::Index n = 0;
        for (const auto& c : cores_) n += c.left * c.mode * c.right;
        return n;
    }

    [[nodiscard]] const Core& core(std::size_t k) const { return cores_.at(k); }
    [[nodiscard]] const std::vector<Core>& cores() const { return cores_; }

    /// Mutable access for in-place algorithms; call validate() after reshaping.
    [[nodiscard]] std::vector<Core>& mutable_cores() { return cores_; }

    void validate() const {
        if (cores_.size() < 2) throw InvalidArgument("TensorTrain: need at least two cores");
        if (cores_.front().left != 1 || cores_.back().right != 1) {
            throw InvalidArgument("TensorTrain: boundary ranks must be 1");
        }
        for (std::size_t k = 0; k < cores_.size(); ++k) {
            const auto& c = cores_[k];
            if (c.left < 1 || c.mode < 1 || c.right < 1 || c.data.size() != std::size_t(c.left * c.mode * c.right)) {
                throw InvalidArgument("TensorTrain: core " + std::to_string(k) + " has inconsistent shape");
            }
            if (k + 1 < cores_.size() && c.right != cores_[k + 1].left) {
                throw InvalidArgument("TensorTrain: rank mismatch between cores " + std::to_string(k) + " and " +
                                      std::to_string(k + 1));
            }
        }
    }

private:
    std::vector<Core> cores_;
};

enum class Orthogonality { left, right };

// ---------------------------------------------------------------------------
// Evaluation

inline double tt_entry(const TensorTrain& W, Eigen::Index j, std::span<const Eigen::Index> alpha) {
    if (alpha.size() + 1 != W.order()) throw InvalidArgument("tt_entry: multi-index has wrong length");
    if (j < 0 || j >= W.spatial_size()) throw InvalidArgument("tt_entry: spatial index out of range");
    Eigen::RowVectorXd row = W.core(0).slice(j);
    for (std::size_t m = 0; m < alpha.size(); ++m) {
        const Core& c = W.core(m + 1);
        if (alpha[m] < 0 || alpha[m] >= c.mode) throw InvalidArgument("tt_entry: stochastic index out of range");
        row = row * c.slice(alpha[m]);
    }
    return row(0);
}

/// Contracts every stochastic mode m with v[m]; returns the length-S vector
/// sum_alpha W(:, alpha) prod_m v[m](alpha_m).
inline Eigen::VectorXd tt_eval_at(const TensorTrain& W, std::span<const Eigen::VectorXd> v) {
    if (v.size() + 1 != W.order()) throw InvalidArgument("tt_eval_at: need one vector per stochastic mode");
    Eigen::VectorXd tail = Eigen::VectorXd::Ones(1);
    for (std::size_t m = v.size(); m-- > 0;) {
        const Core& c = W.core(m + 1);
        if (v[m].size() != c.mode) throw InvalidArgument("tt_eval_at: vector length does not match mode size");
        tail = c.contract_mode(v[m]) * tail;
    }
    return W.core(0).left_unfolding() * tail;
}

/// Evaluates at N points at once. basis[m] is N x q_m (row i = mode-m basis
/// values of point i); returns S x N.
inline Eigen::MatrixXd tt_eval_batch(const TensorTrain& W, std::span<const Eigen::MatrixXd> basis) {
    if (basis.size() + 1 != W.order()) throw InvalidArgument("tt_eval_batch: need one basis matrix per mode");
    const Eigen::Index N = basis.empty() ? 0 : basis[0].rows();
    Eigen::MatrixXd tail = Eigen::MatrixXd::Ones(N, 1);
    for (std::size_t m = basis.size(); m-- > 0;) {
        const Core& c = W.core(m + 1);
        if (basis[m].rows() != N || basis[m].cols() != c.mode) {
            throw InvalidArgument("tt_eval_batch: basis matrix has wrong shape");
        }
        // row-wise Kronecker product of basis values and the current tail
        Eigen::MatrixXd kron(N, c.mode * c.right);
        for (Eigen::Index i = 0; i < c.mode; ++i) {
            kron.middleCols(i * c.right, c.right) = tail.array().colwise() * basis[m].col(i).array();
        }
        tail = kron * c.right_unfolding().transpose();
    }
    return W.core(0).left_unfolding() * tail.transpose();
}

// ---------------------------------------------------------------------------
// Orthogonalization and rounding

namespace detail {

/// Thin QR with non-negative diagonal of R, so repeated calls are stable.
inline void thin_qr(const Eigen::MatrixXd& A, Eigen::MatrixXd& Q, Eigen::MatrixXd& R) {
    const Eigen::Index k = std::min(A.rows(), A.cols());
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    Q = qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), k);
    R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < k; ++i) {
        if (R(i, i) < 0.0) {
            R.row(i) *= -1.0;
            Q.col(i) *= -1.0;
        }
    }
}

inline Core core_from_left(const Eigen::MatrixXd& unfolding, Eigen::Index left, Eigen::Index mode) {
    Core c(left, mode, unfolding.cols());
    c.left_unfolding() = unfolding;
    return c;
}

inline Core core_from_right(const Eigen::MatrixXd& unfolding, Eigen::Index mode, Eigen::Index right) {
    Core c(unfolding.rows(), mode, right);
    c.right_unfolding() = unfolding;
    return c;
}

/// Makes core k left-orthogonal and pushes the factor into core k+1.
inline void left_orthogonalize_core(std::vector<Core>& cores, std::size_t k) {
    Eigen::MatrixXd Q, R;
    thin_qr(cores[k].left_unfolding(), Q, R);
    const Core& next = cores[k + 1];
    Eigen::MatrixXd next_unfolding = R * next.right_unfolding();
    const Eigen::Index left = cores[k].left, mode = cores[k].mode;
    cores[k] = core_from_left(Q, left, mode);
    cores[k + 1] = core_from_right(next_unfolding, next.mode, next.right);
}

/// Makes core k right-orthogonal and pushes the factor into core k-1.
inline void right_orthogonalize_core(std::vector<Core>& cores, std::size_t k) {
    Eigen::MatrixXd Q, R;
    thin_qr(cores[k].right_unfolding().transpose(), Q, R);
    const Core& prev = cores[k - 1];
    Eigen::MatrixXd prev_unfolding = prev.left_unfolding() * R.transpose();
    const Eigen::Index mode = cores[k].mode, right = cores[k].right;
    cores[k] = core_from_right(Q.transpose(), mode, right);
    cores[k - 1] = core_from_left(prev_unfolding, prev.left, prev.mode);
}

}  // namespace detail

/// Left: cores 0..M-1 have orthonormal left unfoldings and the last core
/// carries the norm. Right: cores 1..M have orthonormal right unfoldings.
/// Ranks can only shrink (to the size of the unfolding).
inline TensorTrain tt_canonicalize(const TensorTrain& W, Orthogonality direction) {
    std::vector<Core> cores = W.cores();
    if (direction == Orthogonality::left) {
        for (std::size_t k = 0; k + 1 < cores.size(); ++k) detail::left_orthogonalize_core(cores, k);
    } else {
        for (std::size_t k = cores.size() - 1; k > 0; --k) detail::right_orthogonalize_core(cores, k);
    }
    return TensorTrain(std::move(cores));
}

struct RoundOptions {
    double relative_tolerance = 0.0;
    std::vector<Eigen::Index> max_ranks;  ///< per bond; empty means unbounded
};

/// TT-SVD truncation. Each bond drops the longest singular-value tail whose
/// norm stays within tol * ||W|| / sqrt(M) (so the total error is at most
/// tol * ||W||), values below 1e-14 sigma_max, and anything beyond max_ranks.
inline TensorTrain tt_round(const TensorTrain& W, const RoundOptions& options) {
    if (!options.max_ranks.empty() && options.max_ranks.size() + 1 != W.order()) {
        throw InvalidArgument("tt_round: max_ranks needs one entry per bond");
    }
    TensorTrain rc = tt_canonicalize(W, Orthogonality::right);
    std::vector<Core> cores = rc.cores();
    const double total = cores.front().norm();
    const double bonds = double(cores.size() - 1);
    const double budget = options.relative_tolerance * total / std::sqrt(bonds);

    for (std::size_t k = 0; k + 1 < cores.size(); ++k) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(cores[k].left_unfolding()),
                                              Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd& s = svd.singularValues();
        Eigen::Index keep = s.size();
        const double floor = 1e-14 * (s.size() > 0 ? s[0] : 0.0);
        while (keep > 1 && s[keep - 1] <= floor) --keep;
        double tail2 = 0.0;
        while (keep > 1) {
            const double next = tail2 + s[keep - 1] * s[keep - 1];
            if (std::sqrt(next) > budget) break;
            tail2 = next;
            --keep;
        }
        if (!options.max_ranks.empty()) keep = std::min(keep, std::max<Eigen::Index>(1, options.max_ranks[k]));

        const Eigen::MatrixXd U = svd.matrixU().leftCols(keep);
        const Eigen::MatrixXd SVt = s.head(keep).asDiagonal() * svd.matrixV().leftCols(keep).transpose();
        const Core& next = cores[k + 1];
        Eigen::MatrixXd next_unfolding = SVt * next.right_unfolding();
        const Eigen::Index left = cores[k].left, mode = cores[k].mode;
        cores[k] = detail::core_from_left(U, left, mode);
        cores[k + 1] = detail::core_from_right(next_unfolding, next.mode, next.right);
    }
    return TensorTrain(std::move(cores));
}

// ---------------------------------------------------------------------------
// Inner products and moments

inline double tt_dot(const TensorTrain& A, const TensorTrain& B) {
    if (A.modes() != B.modes()) throw InvalidArgument("tt_dot: mode sizes differ");
    Eigen::MatrixXd Z = A.core(0).left_unfolding().transpose() * B.core(0).left_unfolding();
    for (std::size_t k = 1; k < A.order(); ++k) {
        const Core& a = A.core(k);
        const Core& b = B.core(k);
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(a.right, b.right);
        for (Eigen::Index i = 0; i < a.mode; ++i) next.noalias() += a.slice(i).transpose() * Z * b.slice(i);
        Z = std::move(next);
    }
    return Z(0, 0);
}

inline double tt_norm(const TensorTrain& W) {
    return std::sqrt(std::max(0.0, tt_dot(W, W)));
}

/// E[Phi_W] for orthonormal bases with P_0 = 1: contraction with e_0 everywhere.
inline Eigen::VectorXd tt_mean(const TensorTrain& W) {
    std::vector<Eigen::VectorXd> e0;
    for (std::size_t k = 1; k < W.order(); ++k) e0.push_back(Eigen::VectorXd::Unit(W.core(k).mode, 0));
    return tt_eval_at(W, e0);
}

inline constexpr Eigen::Index kSecondMomentCap = 8192;

/// C(j, j') = sum_alpha W(j, alpha) W(j', alpha), i.e. E[Phi_W(x_j) Phi_W(x_j')].
inline Eigen::MatrixXd tt_second_moment(const TensorTrain& W, Eigen::Index cap = kSecondMomentCap) {
    if (W.spatial_size() > cap) {
        throw CapacityError("tt_second_moment: S = " + std::to_string(W.spatial_size()) + " exceeds cap " +
                            std::to_string(cap));
    }
    Eigen::MatrixXd E = Eigen::MatrixXd::Ones(1, 1);
    for (std::size_t k = W.order() - 1; k > 0; --k) {
        const Core& c = W.core(k);
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(c.left, c.left);
        for (Eigen::Index i = 0; i < c.mode; ++i) next.noalias() += c.slice(i) * E * c.slice(i).transpose();
        E = std::move(next);
    }
    const auto U0 = W.core(0).left_unfolding();
    Eigen::MatrixXd C = U0 * E * U0.transpose();
    return 0.5 * (C + C.transpose());
}

/// Pointwise variance diag(C) - mean^2.
inline Eigen::VectorXd tt_variance(const TensorTrain& W) {
    const Eigen::VectorXd mean = tt_mean(W);
    return tt_second_moment(W).diagonal() - mean.cwiseAbs2();
}

/// Replaces core 0 by transform * core 0 (a change of spatial basis).
inline TensorTrain tt_transform_spatial(const TensorTrain& W, const Eigen::MatrixXd& transform) {
    std::vector<Core> cores = W.cores();
    Eigen::MatrixXd U0 = transform * cores[0].left_unfolding();
    cores[0] = detail::core_from_left(U0, 1, U0.rows());
    return TensorTrain(std::move(cores));
}

/// Grows bond ranks to new_ranks by padding with Gaussian noise of standard
/// deviation noise_scale * ||core|| in the new slots of both adjacent cores.
template <class Rng>
TensorTrain tt_pad_ranks(const TensorTrain& W, std::span<const Eigen::Index> new_ranks, double noise_scale, Rng& rng) {
    if (new_ranks.size() + 1 != W.order()) throw InvalidArgument("tt_pad_ranks: need one rank per bond");
    std::vector<Core> cores = W.cores();
    std::normal_distribution<double> normal;
    for (std::size_t k = 0; k < cores.size(); ++k) {
        const Core& old = W.core(k);
        const Eigen::Index l = k == 0 ? 1 : std::max(old.left, new_ranks[k - 1]);
        const Eigen::Index r = k + 1 == cores.size() ? 1 : std::max(old.right, new_ranks[k]);
        if (l == old.left && r == old.right) continue;
        const double scale = noise_scale * old.norm();
        Core grown(l, old.mode, r);
        for (Eigen::Index a = 0; a < l; ++a) {
            for (Eigen::Index i = 0; i < old.mode; ++i) {
                for (Eigen::Index b = 0; b < r; ++b) {
                    grown(a, i, b) = (a < old.left && b < old.right) ? old(a, i, b) : scale * normal(rng);
                }
            }
        }
        cores[k] = std::move(grown);
    }
    return TensorTrain(std::move(cores));
}

// ---------------------------------------------------------------------------
// Serialization
//
//   VMC-TT 1
//   cores <M+1>
//   modes <S> <q_1> ... <q_M>
//   ranks <r_0> ... <r_{M-1}>
//   <core 0 entries, row-major (a, i, b)>
//   ...
//   <core M entries>
//
// Entries are written with 17 significant digits, which round-trips doubles.

inline void write_tt(std::ostream& out, const TensorTrain& W) {
    out << "VMC-TT 1\ncores " << W.order() << "\nmodes";
    for (auto m : W.modes()) out << ' ' << m;
    out << "\nranks";
    for (auto r : W.ranks()) out << ' ' << r;
    out << '\n' << std::setprecision(17);
    for (const auto& core : W.cores()) {
        for (std::size_t i = 0; i < core.data.size(); ++i) out << (i ? " " : "") << core.data[i];
        out << '\n';
    }
}

inline TensorTrain read_tt(std::istream& in) {
    std::string tag, word;
    int version = 0;
    std::size_t order = 0;
    if (!(in >> tag >> version) || tag != "VMC-TT") throw InvalidArgument("read_tt: missing VMC-TT header");
    if (version != 1) throw InvalidArgument("read_tt: unsupported version " + std::to_string(version));
    if (!(in >> word >> order) || word != "cores" || order < 2) throw InvalidArgument("read_tt: bad core count");
    std::vector<Eigen::Index> modes(order), ranks(order - 1);
    if (!(in >> word) || word != "modes") throw InvalidArgument("read_tt: expected modes");
    for (auto& m : modes) in >> m;
    if (!(in >> word) || word != "ranks") throw InvalidArgument("read_tt: expected ranks");
    for (auto& r : ranks) in >> r;
    if (!in) throw InvalidArgument("read_tt: truncated shape header");
    for (auto m : modes) {
        if (m < 1) throw InvalidArgument("read_tt: mode sizes must be positive");
    }
    for (auto r : ranks) {
        if (r < 1) throw InvalidArgument("read_tt: ranks must be positive");
    }
    TensorTrain W = TensorTrain::zeros(modes, ranks);
    for (auto& core : W.mutable_cores()) {
        for (auto& x : core.data) {
            if (!(in >> x)) throw InvalidArgument("read_tt: truncated core data");
        }
    }
    return W;
}

}  // namespace vmc
