#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vmc/errors.hpp"
#include "vmc/mesh_fem.hpp"
#include "vmc/parallel.hpp"
#include "vmc/param_field.hpp"
#include "vmc/poly_chaos.hpp"
#include "vmc/sampling.hpp"
#include "vmc/tensor_train.hpp"
#include "vmc/vmc_reconstruct.hpp"

namespace vmc {

/// Pointwise sample mean and unbiased variance of nodal FE solutions.
struct FieldMoments {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
    std::int64_t samples = 0;
};

/// Welford accumulator; updates run strictly in sample order.
class MomentAccumulator {
public:
    explicit MomentAccumulator(Eigen::Index size) : mean_(Eigen::VectorXd::Zero(size)), m2_(Eigen::VectorXd::Zero(size)) {}

    void add(const Eigen::VectorXd& x) {
        ++count_;
        delta_ = x - mean_;
        mean_ += delta_ / double(count_);
        m2_.array() += delta_.array() * (x - mean_).array();
    }

    [[nodiscard]] std::int64_t count() const { return count_; }

    [[nodiscard]] FieldMoments moments() const {
        if (count_ < 2) throw InvalidArgument("sample variance needs at least two samples");
        return {mean_, m2_ / double(count_ - 1), count_};
    }

private:
    std::int64_t count_ = 0;
    Eigen::VectorXd mean_, m2_, delta_;
};

namespace detail {

inline constexpr std::int64_t kSolveBlock = 512;

/// Solves the FE problem at points produced by `point(i, y)` for i in
/// [0, N) and hands the solutions to `sink(i, u)` in index order.
template <class PointFn, class Sink>
void solve_in_order(const ProblemSpec& problem, const Mesh2D& mesh, std::int64_t N, int workers, PointFn&& point,
                    Sink&& sink) {
    const auto nw = std::size_t(std::max(1, workers));
    std::vector<ParametricSolver> solvers(nw, ParametricSolver(problem, mesh));
    const int M = problem.model.dimension();
    std::vector<std::vector<double>> ys(nw, std::vector<double>(std::size_t(M)));
    Eigen::MatrixXd block(mesh.dofs(), std::min<std::int64_t>(kSolveBlock, std::max<std::int64_t>(N, 1)));
    for (std::int64_t start = 0; start < N; start += kSolveBlock) {
        const std::int64_t n = std::min(kSolveBlock, N - start);
        parallel_for(std::size_t(n), nw, [&](std::size_t i, std::size_t w) {
            auto& y = ys[w];
            point(start + std::int64_t(i), std::span<double>(y));
            block.col(Eigen::Index(i)) = solvers[w].solve(y).coefficients;
        });
        for (std::int64_t i = 0; i < n; ++i) sink(start + i, block.col(Eigen::Index(i)));
    }
}

inline std::function<void(std::int64_t, std::span<double>)> sobol_points(const ProblemSpec& problem) {
    const auto domain = problem.model.domain();
    const int M = problem.model.dimension();
    const SobolGenerator& gen = SobolGenerator::standard();
    if (M > gen.max_dimension()) {
        throw UnsupportedDimension("dimension " + std::to_string(M) + " exceeds the Sobol direction table");
    }
    return [&gen, domain](std::int64_t i, std::span<double> y) {
        for (std::size_t m = 0; m < y.size(); ++m) {
            y[m] = map_unit_to_domain(gen.base_point(std::uint64_t(i) + 1, int(m)), domain);
        }
    };
}

inline std::function<void(std::int64_t, std::span<double>)> pseudo_points(const ProblemSpec& problem,
                                                                          std::uint64_t seed,
                                                                          std::uint64_t first_index) {
    const auto domain = problem.model.domain();
    return [seed, first_index, domain](std::int64_t i, std::span<double> y) {
        for (std::size_t m = 0; m < y.size(); ++m) {
            y[m] = map_unit_to_domain(counter_uniform(seed, first_index + std::uint64_t(i), m), domain);
        }
    };
}

}  // namespace detail

/// QMC moments over the first max(counts) Sobol points, snapshotted at each
/// count (ascending). Each snapshot equals a separate run to that count.
inline std::vector<FieldMoments> qmc_estimates(const ProblemSpec& problem, const Mesh2D& mesh,
                                               std::span<const std::int64_t> counts, int workers = 1) {
    if (counts.empty()) return {};
    if (!std::is_sorted(counts.begin(), counts.end()) || counts.front() < 2) {
        throw InvalidArgument("qmc_estimates: counts must be ascending and >= 2");
    }
    MomentAccumulator acc(mesh.dofs());
    std::vector<FieldMoments> out;
    std::size_t next = 0;
    detail::solve_in_order(problem, mesh, counts.back(), workers, detail::sobol_points(problem),
                           [&](std::int64_t, const Eigen::VectorXd& u) {
                               acc.add(u);
                               while (next < counts.size() && counts[next] == acc.count()) {
                                   out.push_back(acc.moments());
                                   ++next;
                               }
                           });
    return out;
}

inline FieldMoments qmc_estimate(const ProblemSpec& problem, const Mesh2D& mesh, std::int64_t N, int workers = 1) {
    if (N < 2) throw InvalidArgument("qmc_estimate: need N >= 2 for the sample variance");
    const std::int64_t counts[] = {N};
    return qmc_estimates(problem, mesh, counts, workers).front();
}

inline FieldMoments compute_reference(const ProblemSpec& problem, const Mesh2D& mesh, std::int64_t N_ref,
                                      int workers = 1) {
    return qmc_estimate(problem, mesh, N_ref, workers);
}

/// Monte Carlo moments over the pseudo-random counter range [0, N).
inline FieldMoments mc_estimate(const ProblemSpec& problem, const Mesh2D& mesh, std::int64_t N, std::uint64_t seed,
                                int workers = 1) {
    if (N < 2) throw InvalidArgument("mc_estimate: need N >= 2 for the sample variance");
    MomentAccumulator acc(mesh.dofs());
    detail::solve_in_order(problem, mesh, N, workers, detail::pseudo_points(problem, seed, 0),
                           [&](std::int64_t, const Eigen::VectorXd& u) { acc.add(u); });
    return acc.moments();
}

/// Solutions at every row of `samples`, one column per sample.
inline Eigen::MatrixXd solve_samples(const ProblemSpec& problem, const Mesh2D& mesh, const SampleSet& samples,
                                     int workers = 1) {
    if (samples.dimension() != problem.model.dimension()) throw InvalidArgument("solve_samples: dimension mismatch");
    Eigen::MatrixXd out(mesh.dofs(), samples.size());
    detail::solve_in_order(
        problem, mesh, samples.size(), workers,
        [&](std::int64_t i, std::span<double> y) {
            for (std::size_t m = 0; m < y.size(); ++m) y[m] = samples.points(i, Eigen::Index(m));
        },
        [&](std::int64_t i, const Eigen::VectorXd& u) { out.col(Eigen::Index(i)) = u; });
    return out;
}

enum class FieldNorm { h1, l2 };

/// Gram matrices of the H^1_0 seminorm (Laplace stiffness) and L^2 (mass) on a mesh.
struct FieldNorms {
    SparseSpdOperator h1;
    SparseSpdOperator l2;

    explicit FieldNorms(const Mesh2D& mesh)
        : h1(assemble_stiffness(mesh, [](Point2) { return 1.0; })), l2(assemble_mass(mesh)) {}

    [[nodiscard]] const SparseSpdOperator& gram(FieldNorm n) const { return n == FieldNorm::h1 ? h1 : l2; }

    [[nodiscard]] double norm(const Eigen::VectorXd& v, FieldNorm n) const {
        return std::sqrt(std::max(0.0, v.dot(gram(n).matrix * v)));
    }
};

inline double relative_field_error(const Eigen::VectorXd& candidate, const Eigen::VectorXd& reference,
                                   const SparseSpdOperator& gram) {
    if (candidate.size() != reference.size() || reference.size() != gram.dimension()) {
        throw InvalidArgument("relative_field_error: fields live on different meshes");
    }
    const double ref = std::sqrt(std::max(0.0, reference.dot(gram.matrix * reference)));
    if (!(ref > 0.0)) throw UndefinedRelativeError("relative_field_error: reference field has zero norm");
    const Eigen::VectorXd diff = candidate - reference;
    return std::sqrt(std::max(0.0, diff.dot(gram.matrix * diff))) / ref;
}

inline double relative_field_error(const Eigen::VectorXd& candidate, const Eigen::VectorXd& reference,
                                   const FieldNorms& norms, FieldNorm metric) {
    return relative_field_error(candidate, reference, norms.gram(metric));
}

/// Relative error, or the absolute error when the reference vanishes
/// (deterministic problems have a zero variance field).
inline double relative_or_absolute_error(const Eigen::VectorXd& candidate, const Eigen::VectorXd& reference,
                                         const FieldNorms& norms, FieldNorm metric) {
    if (norms.norm(reference, metric) > 0.0) return relative_field_error(candidate, reference, norms, metric);
    return norms.norm(candidate - reference, metric);
}

// ---------------------------------------------------------------------------
// Pipeline

struct RunConfig {
    std::string problem = "affine";
    int M = 5;
    int degree = 4;  ///< maximal polynomial degree per mode (degree + 1 basis functions)
    int mesh_n = 16;
    std::vector<std::int64_t> samples{250, 500, 1000, 2000};
    int max_rank = 40;
    std::uint64_t seed = 1;
    std::int64_t ref_samples = 100000;
    std::int64_t test_samples = 1000;
    int workers = 1;
    std::string out;
    double theta = 0.9;
    double contrast = 0.9;

    void validate() const {
        if (M < 1) throw InvalidArgument("M must be >= 1");
        if (degree < 0) throw InvalidArgument("degree must be >= 0");
        if (mesh_n < 2) throw InvalidArgument("mesh-n must be >= 2");
        if (max_rank < 1) throw InvalidArgument("max-rank must be >= 1");
        if (workers < 1) throw InvalidArgument("workers must be >= 1");
        if (test_samples < 0) throw InvalidArgument("test-samples must be >= 0");
        if (samples.empty()) throw InvalidArgument("sample schedule is empty");
        if (samples.front() < 2) throw InvalidArgument("sample counts must be >= 2");
        for (std::size_t i = 1; i < samples.size(); ++i) {
            if (samples[i] <= samples[i - 1]) throw InvalidArgument("sample schedule must be strictly increasing");
        }
        if (ref_samples < 10 * samples.back()) {
            throw InvalidArgument("ref-samples must be at least 10 x the largest scheduled N");
        }
        make_problem(problem, M, mesh_n, theta, contrast);
    }
};

struct ErrorRecord {
    std::int64_t N = 0;
    double mean_rel_err_reco = 0, mean_rel_err_mc = 0, mean_rel_err_qmc = 0;
    double var_rel_err_reco = 0, var_rel_err_mc = 0, var_rel_err_qmc = 0;
    double holdout_rel_err = 0;
    std::vector<Eigen::Index> ranks;
    int sweeps = 0;

    [[nodiscard]] bool valid() const {
        for (double e : {mean_rel_err_reco, mean_rel_err_mc, mean_rel_err_qmc, var_rel_err_reco, var_rel_err_mc,
                         var_rel_err_qmc, holdout_rel_err}) {
            if (!std::isfinite(e) || e < 0.0) return false;
        }
        return true;
    }
};

inline constexpr const char* kCsvHeader =
    "N,mean_rel_err_reco,mean_rel_err_mc,mean_rel_err_qmc,var_rel_err_reco,var_rel_err_mc,var_rel_err_qmc,"
    "holdout_rel_err,ranks,sweeps";

inline std::string csv_row(const ErrorRecord& r) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(10);
    os << r.N << ',' << r.mean_rel_err_reco << ',' << r.mean_rel_err_mc << ',' << r.mean_rel_err_qmc << ','
       << r.var_rel_err_reco << ',' << r.var_rel_err_mc << ',' << r.var_rel_err_qmc << ',' << r.holdout_rel_err << ',';
    for (std::size_t k = 0; k < r.ranks.size(); ++k) os << (k ? "/" : "") << r.ranks[k];
    os << ',' << r.sweeps;
    return os.str();
}

/// Everything a pipeline run produces besides the CSV rows.
struct PipelineResult {
    std::vector<ErrorRecord> records;
    std::vector<FitReport> reports;
};

/// Counter offset of the held-out test draws; training draws use [0, N).
inline constexpr std::uint64_t kTestCounterOffset = std::uint64_t{1} << 40;

/// For each scheduled N: fit a surrogate to the first N pseudo-random
/// samples and compare its moments, the MC moments of the same samples and
/// the QMC moments at N against the QMC reference. Rows are written to `csv`
/// (if given) and flushed as they complete. A precomputed `reference` (the
/// compute_reference output for this config) skips recomputing it.
inline PipelineResult run_pipeline(const RunConfig& config, std::ostream* csv = nullptr,
                                   AlsConfig als = AlsConfig{}, const FieldMoments* reference_in = nullptr) {
    config.validate();
    const ProblemSpec problem = make_problem(config.problem, config.M, config.mesh_n, config.theta, config.contrast);
    const Mesh2D mesh = build_unit_square_mesh(config.mesh_n);
    const FieldNorms norms(mesh);
    const auto domain = problem.model.domain();
    const BasisSpec basis = BasisSpec::uniform(family_for(domain), config.M, config.degree + 1);
    als.max_rank = config.max_rank;
    als.seed = config.seed;

    const FieldMoments reference =
        reference_in ? *reference_in : compute_reference(problem, mesh, config.ref_samples, config.workers);
    if (reference.mean.size() != Eigen::Index(mesh.dofs())) {
        throw InvalidArgument("run_pipeline: reference does not match the mesh");
    }
    const std::vector<FieldMoments> qmc = qmc_estimates(problem, mesh, config.samples, config.workers);

    const std::int64_t n_max = config.samples.back();
    const SampleSet train_all = sample_pseudo(config.M, n_max, config.seed, domain, 0);
    const Eigen::MatrixXd train_solutions = solve_samples(problem, mesh, train_all, config.workers);
    const OrthogonalizedTargets train_targets = orthogonalize_targets(train_solutions, norms.h1);
    const TrainingData all_data = make_training_data(train_all.points, basis, train_targets);

    TrainingData test;
    if (config.test_samples > 0) {
        const SampleSet test_set = sample_pseudo(config.M, config.test_samples, config.seed, domain, kTestCounterOffset);
        const Eigen::MatrixXd test_solutions = solve_samples(problem, mesh, test_set, config.workers);
        test = make_training_data(test_set.points, basis, {train_targets.factor->apply(test_solutions), train_targets.factor});
    }

    if (csv) *csv << kCsvHeader << '\n' << std::flush;
    PipelineResult result;
    MomentAccumulator mc(mesh.dofs());
    std::int64_t consumed = 0;
    for (std::size_t s = 0; s < config.samples.size(); ++s) {
        const std::int64_t N = config.samples[s];
        for (; consumed < N; ++consumed) mc.add(train_solutions.col(Eigen::Index(consumed)));
        const FieldMoments mc_moments = mc.moments();

        std::vector<Eigen::Index> rows(static_cast<std::size_t>(N));
        std::iota(rows.begin(), rows.end(), Eigen::Index{0});
        const TrainingData data = all_data.subset(rows);
        FitResult fit = reconstruct(data, als);
        const TensorTrain nodal = to_nodal_basis(fit.tensor, *train_targets.factor);
        const Eigen::VectorXd reco_mean = tt_mean(nodal);
        const Eigen::VectorXd reco_var = tt_variance(nodal);

        ErrorRecord r;
        r.N = N;
        r.mean_rel_err_reco = relative_field_error(reco_mean, reference.mean, norms, FieldNorm::h1);
        r.mean_rel_err_mc = relative_field_error(mc_moments.mean, reference.mean, norms, FieldNorm::h1);
        r.mean_rel_err_qmc = relative_field_error(qmc[s].mean, reference.mean, norms, FieldNorm::h1);
        r.var_rel_err_reco = relative_or_absolute_error(reco_var, reference.variance, norms, FieldNorm::l2);
        r.var_rel_err_mc = relative_or_absolute_error(mc_moments.variance, reference.variance, norms, FieldNorm::l2);
        r.var_rel_err_qmc = relative_or_absolute_error(qmc[s].variance, reference.variance, norms, FieldNorm::l2);
        if (test.size() > 0) r.holdout_rel_err = mean_relative_error(fit.tensor, test);
        r.ranks = fit.tensor.ranks();
        r.sweeps = fit.report.sweeps;
        if (!r.valid()) throw NumericalBreakdown("non-finite error record at N = " + std::to_string(N));
        if (csv) *csv << csv_row(r) << '\n' << std::flush;
        result.records.push_back(std::move(r));
        result.reports.push_back(std::move(fit.report));
    }
    return result;
}

}  // namespace vmc
