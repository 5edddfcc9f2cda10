// Acceptance run: one PASS/FAIL line per criterion. Optional arguments select
// criteria by number, e.g. `vmc_acceptance 1 4 9`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vmc/error_bounds.hpp"
#include "vmc/experiment.hpp"

using namespace vmc;
using Index = Eigen::Index;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double limit_seconds;
    std::function<Outcome()> run;
};

std::string fmt(const char* format, auto... args) {
    char buffer[512];
    std::snprintf(buffer, sizeof buffer, format, args...);
    return buffer;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const auto one = [](Point2) { return 1.0; };

// ---------------------------------------------------------------------------
// 1. FEM against the Fourier series of -Laplace u = 1 at the centre

constexpr double kCenterValue = 0.07367122455790029;

double center_value(int n) {
    const Mesh2D mesh = build_unit_square_mesh(n);
    const auto u = solve_spd(assemble_stiffness(mesh, one), assemble_load(mesh, one));
    const int center = n / 2 + (n / 2) * (n + 1);
    return u.coefficients[mesh.dof_of_vertex[std::size_t(center)]];
}

Outcome fem_correctness() {
    const double u64 = center_value(64);
    const double e32 = std::abs(center_value(32) - kCenterValue);
    const double e64 = std::abs(u64 - kCenterValue);
    const double ratio = e32 / e64;
    return {e64 <= 5e-5 && ratio >= 3.5 && ratio <= 4.5,
            fmt("|u64 - oracle| = %.3e (tol 5e-5), e32/e64 = %.3f (want [3.5, 4.5])", e64, ratio)};
}

// ---------------------------------------------------------------------------
// 2. u^T v in orthogonalized coordinates equals the H1_0 inner product

Outcome orthogonalization_identity() {
    const Mesh2D mesh = build_unit_square_mesh(16);
    const auto S = assemble_stiffness(mesh, one);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    Eigen::MatrixXd U(S.dimension(), 100), V(S.dimension(), 100);
    for (Index k = 0; k < U.size(); ++k) {
        U.data()[k] = g(rng);
        V.data()[k] = g(rng);
    }
    const auto ou = orthogonalize_targets(U, S);
    const Eigen::MatrixXd ov = ou.factor->apply(V);
    double worst = 0.0;
    for (Index i = 0; i < 100; ++i) {
        const double exact = U.col(i).dot(S.matrix * V.col(i));
        const double scale = std::sqrt(U.col(i).dot(S.matrix * U.col(i)) * V.col(i).dot(S.matrix * V.col(i)));
        worst = std::max(worst, std::abs(ou.targets.col(i).dot(ov.col(i)) - exact) / scale);
    }
    return {worst <= 1e-10, fmt("max relative deviation %.2e over 100 pairs (tol 1e-10)", worst)};
}

// ---------------------------------------------------------------------------
// 3. TT operations against dense enumeration and tensor Gauss quadrature

double dense_entry(const TensorTrain& W, Index j, const std::vector<Index>& alpha) {
    const auto ranks = W.ranks();
    std::vector<Index> r(ranks.size());
    double total = 0.0;
    std::function<void(std::size_t)> rec = [&](std::size_t k) {
        if (k == r.size()) {
            double prod = W.core(0)(0, j, r[0]);
            for (std::size_t m = 1; m < W.order(); ++m) {
                prod *= W.core(m)(r[m - 1], alpha[m - 1], m < r.size() ? r[m] : 0);
            }
            total += prod;
            return;
        }
        for (r[k] = 0; r[k] < ranks[k]; ++r[k]) rec(k + 1);
    };
    rec(0);
    return total;
}

std::vector<std::vector<Index>> all_indices(const std::vector<Index>& extent) {
    std::vector<std::vector<Index>> out;
    std::vector<Index> a(extent.size(), 0);
    while (true) {
        out.push_back(a);
        std::size_t m = 0;
        while (m < a.size() && ++a[m] == extent[m]) a[m++] = 0;
        if (m == a.size()) return out;
    }
}

Outcome tt_oracles() {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> M_dist(1, 4), mode_dist(1, 4), rank_dist(1, 3);
    const GaussRule rule = gauss_rule(PolyFamily::legendre_uniform, 4);  // exact to degree 7 per mode
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int M = M_dist(rng);
        std::vector<Index> modes{Index(mode_dist(rng))}, ranks, q;
        for (int m = 0; m < M; ++m) {
            q.push_back(mode_dist(rng));
            ranks.push_back(rank_dist(rng));
        }
        modes.insert(modes.end(), q.begin(), q.end());
        const TensorTrain W = TensorTrain::random(modes, ranks, rng);
        const TensorTrain V = TensorTrain::random(modes, ranks, rng);
        const auto alphas = all_indices(q);
        Eigen::MatrixXd D(W.spatial_size(), Index(alphas.size())), E(D.rows(), D.cols());
        for (Index c = 0; c < D.cols(); ++c) {
            for (Index j = 0; j < D.rows(); ++j) {
                D(j, c) = dense_entry(W, j, alphas[std::size_t(c)]);
                E(j, c) = dense_entry(V, j, alphas[std::size_t(c)]);
            }
        }
        const double scale = 1.0 + D.norm();
        const auto note = [&](double err, double s) { worst = std::max(worst, err / s); };
        for (Index c = 0; c < D.cols(); ++c) {
            for (Index j = 0; j < D.rows(); ++j) note(std::abs(tt_entry(W, j, alphas[std::size_t(c)]) - D(j, c)), scale);
        }
        note(std::abs(tt_dot(W, V) - (D.array() * E.array()).sum()), scale * (1.0 + E.norm()));

        // the surrogate y -> sum_alpha D[:, alpha] P_alpha(y), integrated by a tensor Gauss rule
        const auto surrogate = [&](const std::vector<Eigen::VectorXd>& basis) {
            Eigen::VectorXd f = Eigen::VectorXd::Zero(D.rows());
            for (Index c = 0; c < D.cols(); ++c) {
                double w = 1.0;
                for (int m = 0; m < M; ++m) w *= basis[std::size_t(m)][alphas[std::size_t(c)][std::size_t(m)]];
                f += w * D.col(c);
            }
            return f;
        };
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(D.rows());
        Eigen::MatrixXd second = Eigen::MatrixXd::Zero(D.rows(), D.rows());
        for (const auto& node : all_indices(std::vector<Index>(std::size_t(M), rule.nodes.size()))) {
            std::vector<Eigen::VectorXd> basis;
            double weight = 1.0;
            for (int m = 0; m < M; ++m) {
                const Index k = node[std::size_t(m)];
                basis.push_back(eval_basis_vector(PolyFamily::legendre_uniform, int(q[std::size_t(m)]), rule.nodes[k]));
                weight *= rule.weights[k];
            }
            const Eigen::VectorXd f = surrogate(basis);
            mean += weight * f;
            second += weight * f * f.transpose();
            if (node.front() == 1) note((tt_eval_at(W, basis) - f).norm(), scale);
        }
        note((tt_mean(W) - mean).norm(), scale);
        note((tt_second_moment(W) - second).norm(), scale * scale);
    }
    return {worst <= 1e-10, fmt("max scaled deviation %.2e over 200 trains (tol 1e-10)", worst)};
}

// ---------------------------------------------------------------------------
// 4. exact recovery of a rank-2 train from noise-free samples

TrainingData synthetic(const TensorTrain& T, Index N, std::uint64_t seed, std::uint64_t offset) {
    const int M = T.stochastic_modes();
    std::vector<int> q;
    for (int m = 0; m < M; ++m) q.push_back(int(T.core(std::size_t(m) + 1).mode));
    TrainingData data;
    data.parameters = sample_pseudo(M, N, seed, ParameterDomain::uniform_cube, offset).points;
    data.basis = evaluate_basis(data.parameters, {PolyFamily::legendre_uniform, q});
    data.targets = tt_eval_batch(T, data.basis);
    return data;
}

Outcome exact_recovery() {
    std::mt19937_64 rng(4);
    const std::vector<Index> modes{25, 4, 4, 4, 4, 4}, ranks(5, 2);
    const TensorTrain T = TensorTrain::random(modes, ranks, rng);
    const Index N = 5 * T.parameter_count();
    AlsConfig config;
    config.seed = 4;
    config.max_sweeps = 300;
    const FitResult fit = reconstruct(synthetic(T, N, 4, 0), config);
    const TrainingData test = synthetic(T, 1000, 4, kTestCounterOffset);
    const double risk = empirical_risk(fit.tensor, test) / target_energy(test);
    const auto rounded = tt_round(fit.tensor, {1e-6, {}}).ranks();
    std::ostringstream r;
    for (std::size_t k = 0; k < rounded.size(); ++k) r << (k ? "," : "") << rounded[k];
    return {risk < 1e-6 && fit.report.sweeps <= 300 && rounded == ranks,
            fmt("N = %lld, held-out relative risk %.2e (tol 1e-6), %d sweeps, rounded ranks (%s)", (long long)N, risk,
                fit.report.sweeps, r.str().c_str())};
}

// ---------------------------------------------------------------------------
// 5-7, 10. pipeline runs, shared between criteria

constexpr std::uint64_t kSeeds[] = {1, 2, 3};

std::map<std::string, std::vector<PipelineResult>> pipeline_cache;

RunConfig pipeline_config(const std::string& problem) {
    RunConfig c;
    c.problem = problem;
    c.ref_samples = 100000;
    if (problem == "affine") {
        c.M = 5;
        c.degree = 4;
        c.mesh_n = 16;
        c.samples = {2000};
    } else if (problem == "lognormal") {
        c.M = 3;
        c.degree = 4;
        c.mesh_n = 16;
        c.samples = {250, 500, 1000, 2000};
    } else {
        c.M = 9;
        c.degree = 3;
        c.mesh_n = 24;
        c.samples = {200, 500, 1000, 2000};
    }
    return c;
}

const std::vector<PipelineResult>& pipeline_runs(const std::string& problem) {
    auto it = pipeline_cache.find(problem);
    if (it != pipeline_cache.end()) return it->second;
    RunConfig c = pipeline_config(problem);
    const Mesh2D mesh = build_unit_square_mesh(c.mesh_n);
    const FieldMoments reference =
        compute_reference(make_problem(c.problem, c.M, c.mesh_n, c.theta, c.contrast), mesh, c.ref_samples);
    std::vector<PipelineResult> runs;
    for (std::uint64_t seed : kSeeds) {
        c.seed = seed;
        runs.push_back(run_pipeline(c, nullptr, AlsConfig{}, &reference));
    }
    return pipeline_cache[problem] = std::move(runs);
}

std::string joined(const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : " ") + fmt("%.2e", x);
    return s;
}

Outcome method_beats_mc() {
    std::vector<double> reco, mc;
    for (const auto& run : pipeline_runs("affine")) {
        reco.push_back(run.records.back().mean_rel_err_reco);
        mc.push_back(run.records.back().mean_rel_err_mc);
    }
    const double r = median(reco), m = median(mc);
    return {r < m, fmt("N = 2000 median mean error: reco %.3e < mc %.3e (per seed reco [%s], mc [%s])", r, m,
                       joined(reco).c_str(), joined(mc).c_str())};
}

Outcome lognormal_pipeline() {
    const auto& runs = pipeline_runs("lognormal");
    std::vector<double> medians;
    for (std::size_t k = 0; k < runs.front().records.size(); ++k) {
        std::vector<double> v;
        for (const auto& run : runs) v.push_back(run.records[k].holdout_rel_err);
        medians.push_back(median(v));
    }
    bool monotone = true;
    for (std::size_t k = 1; k < medians.size(); ++k) monotone = monotone && medians[k] <= medians[k - 1];
    return {monotone && medians.back() < 5e-2,
            fmt("median held-out error over N = 250..2000: [%s], non-increasing %s, last < 5e-2",
                joined(medians).c_str(), monotone ? "yes" : "NO")};
}

Outcome cookie_pipeline() {
    const auto& runs = pipeline_runs("cookie");
    bool finite = true;
    std::vector<double> reco;
    for (const auto& run : runs) {
        for (const auto& r : run.records) finite = finite && r.valid();
        reco.push_back(run.records.back().mean_rel_err_reco);
    }
    const double qmc200 = runs.front().records.front().mean_rel_err_qmc;
    const double r = median(reco);
    return {finite && r <= qmc200,
            fmt("errors finite %s; N = 2000 median reco mean error %.3e <= qmc(200) %.3e (per seed [%s])",
                finite ? "yes" : "NO", r, qmc200, joined(reco).c_str())};
}

Outcome als_monotonicity() {
    int checked = 0, violations = 0;
    double worst = 0.0;
    for (const char* problem : {"affine", "lognormal", "cookie"}) {
        for (const auto& run : pipeline_runs(problem)) {
            for (const auto& rep : run.reports) {
                ++checked;
                const std::set<int> adapted(rep.adaptation_sweeps.begin(), rep.adaptation_sweeps.end());
                // history index s holds sweep s + 1; the sweep after an adaptation may rise
                for (std::size_t s = 1; s < rep.training_risk.size(); ++s) {
                    if (adapted.count(int(s))) continue;
                    const double rise = rep.training_risk[s] - rep.training_risk[s - 1];
                    worst = std::max(worst, rise);
                    if (rise > 1e-12) ++violations;
                }
            }
        }
    }
    return {violations == 0, fmt("%d fit reports, %d rises above 1e-12 between adaptations (largest rise %.2e)",
                                 checked, violations, worst)};
}

// ---------------------------------------------------------------------------
// 8. empirical check of the Hoeffding bound

Outcome concentration_validation() {
    // affine M = 2 on a coarse mesh; B(y) = B0 + y1 B1 + y2 B2 exactly since
    // the coefficient is affine at every quadrature point
    const ProblemSpec problem = make_problem("affine", 2, 4);
    const Mesh2D mesh = build_unit_square_mesh(4);
    ParametricSolver solver(problem, mesh);
    const std::vector<double> origin{0.0, 0.0};
    const Eigen::MatrixXd B0(solver.stiffness(origin).matrix);
    const Eigen::MatrixXd B1 = Eigen::MatrixXd(solver.stiffness(std::vector<double>{1.0, 0.0}).matrix) - B0;
    const Eigen::MatrixXd B2 = Eigen::MatrixXd(solver.stiffness(std::vector<double>{0.0, 1.0}).matrix) - B0;
    const Eigen::VectorXd b = solver.load();
    const auto S = assemble_stiffness(mesh, one);
    const StiffnessFactor X(S);
    const auto solve = [&](double y1, double y2) -> Eigen::VectorXd {
        return X.apply(Eigen::LLT<Eigen::MatrixXd>(B0 + y1 * B1 + y2 * B2).solve(b));
    };

    // fixed surrogate: the solution at y = 0, constant in y
    const Eigen::VectorXd phi = solve(0.0, 0.0);
    const auto loss = [&](double y1, double y2) { return (solve(y1, y2) - phi).squaredNorm(); };

    // ||u(y)||_S <= ||S^{-1} b||_S / a_min, so the loss is at most C1_hat
    const double a_min = ellipticity_bounds(problem.model).lower;
    const double unit = X.apply(solve_spd(S, b).coefficients).norm();
    const double C1 = std::pow(phi.norm() + unit / a_min, 2);

    const GaussRule rule = gauss_rule(PolyFamily::legendre_uniform, 40);
    double J = 0.0, sup = 0.0;
    for (Index i = 0; i < rule.nodes.size(); ++i) {
        for (Index j = 0; j < rule.nodes.size(); ++j) {
            const double l = loss(rule.nodes[i], rule.nodes[j]);
            J += rule.weights[i] * rule.weights[j] * l;
            sup = std::max(sup, l);
        }
    }

    const double eps_grid[] = {0.002, 0.005, 0.01, 0.02, 0.05};
    const std::int64_t N_grid[] = {10, 100, 1000};
    constexpr int kReplications = 10000;
    std::uint64_t stream = 0;
    bool pass = sup <= C1;
    double min_margin = std::numeric_limits<double>::infinity();
    int nonzero = 0, informative = 0;
    for (std::int64_t N : N_grid) {
        std::vector<int> failures(std::size(eps_grid), 0);
        for (int rep = 0; rep < kReplications; ++rep) {
            double sum = 0.0;
            for (std::int64_t i = 0; i < N; ++i, ++stream) {
                sum += loss(2.0 * counter_uniform(8, stream, 0) - 1.0, 2.0 * counter_uniform(8, stream, 1) - 1.0);
            }
            const double deviation = std::abs(sum / double(N) - J);
            for (std::size_t e = 0; e < std::size(eps_grid); ++e) failures[e] += deviation > eps_grid[e] * C1;
        }
        for (std::size_t e = 0; e < std::size(eps_grid); ++e) {
            const double delta = hoeffding_delta(eps_grid[e] * C1, double(N), C1).clamped();
            const double freq = failures[e] / double(kReplications);
            const double se = std::sqrt(delta * (1.0 - delta) / kReplications);
            nonzero += failures[e] > 0;
            informative += delta < 1.0;
            min_margin = std::min(min_margin, delta + 3.0 * se - freq);
            pass = pass && freq <= delta + 3.0 * se;
        }
    }
    return {pass, fmt("C1_hat %.3e >= max loss %.3e; 15 (eps, N) cells, %d with delta < 1, %d with failures, "
                      "min margin of delta + 3 se over frequency %.3e",
                      C1, sup, informative, nonzero, min_margin)};
}

// ---------------------------------------------------------------------------
// 9. bound calculator

Outcome bound_calculator() {
    bool pass = true;
    int checks = 0;
    const auto expect = [&](bool ok) {
        pass = pass && ok;
        ++checks;
    };
    BoundInputs in;
    in.sigma2 = 0.02;
    for (auto c : {Concentration::hoeffding, Concentration::bernstein}) {
        for (double eps : {0.05, 0.2, 0.5}) {
            in.dim = 10;
            double previous = std::numeric_limits<double>::infinity();
            for (double N = 1; N <= 1e8; N *= 2) {
                const auto b = generalization_bound(eps, N, in, c);
                expect(b.log_raw == generalization_bound(eps, N, in, c).log_raw);
                expect(b.log_raw <= previous);
                previous = b.log_raw;
            }
            previous = -std::numeric_limits<double>::infinity();
            for (int dim = 1; dim <= 100; ++dim) {
                in.dim = dim;
                const double v = generalization_bound(eps, 5000, in, c).log_raw;
                expect(v >= previous);
                previous = v;
            }
            in.dim = 3;
            for (double N : {50.0, 500.0, 5000.0}) {
                const double nu = covering_number_linear(in.dim, in.radius, eps / (8.0 * in.C2));
                const double delta = concentration_delta(eps / 4.0, N, in, c).raw();
                const double linear = 2.0 * nu * delta;
                const double logged = generalization_bound(eps, N, in, c).raw();
                expect(std::abs(logged - linear) <= 1e-10 * linear);
            }
            in.dim = 10;
            for (double pf : {0.5, 1e-3, 1e-9}) {
                const auto n = samples_for_confidence(eps, pf, in, c);
                expect(generalization_bound(eps, double(n), in, c).raw() <= pf);
                expect(n <= 1 || generalization_bound(eps, double(n - 1), in, c).raw() > pf);
            }
        }
    }
    return {pass, fmt("%d checks (determinism, monotone in N and dim, log/linear 1e-10, inversion at N and N-1)",
                      checks)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {1, "fem_correctness", 10, fem_correctness},
        {2, "orthogonalization_identity", 5, orthogonalization_identity},
        {3, "tt_oracle_equivalence", 30, tt_oracles},
        {4, "exact_recovery", 120, exact_recovery},
        {5, "method_beats_mc", 1200, method_beats_mc},
        {6, "lognormal_pipeline", 1200, lognormal_pipeline},
        {7, "cookie_pipeline", 1800, cookie_pipeline},
        {8, "concentration_validation", 600, concentration_validation},
        {9, "bound_calculator", 1, bound_calculator},
        {10, "als_monotonicity", std::numeric_limits<double>::infinity(), als_monotonicity},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = seconds < c.limit_seconds;
        const bool pass = out.pass && in_time;
        failed += !pass;
        std::string limit = std::isfinite(c.limit_seconds) ? fmt(" (limit %.0f s)", c.limit_seconds) : "";
        if (!in_time) limit += " TOO SLOW";
        std::printf("%s [%2d] %-27s %8.2f s%s: %s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(), seconds,
                    limit.c_str(), out.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
