// vmc run | vmc bounds. Exit codes: 0 success, 2 invalid config, 3 numerical failure.
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vmc/error_bounds.hpp"
#include "vmc/experiment.hpp"

using json = nlohmann::ordered_json;
using namespace vmc;

namespace {

constexpr int kInvalidConfig = 2;
constexpr int kNumericalFailure = 3;

std::vector<std::int64_t> parse_schedule(const std::string& text) {
    std::vector<std::int64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
        if (used == 0 || used != item.size()) throw InvalidArgument("bad entry '" + item + "' in sample schedule");
        out.push_back(v);
    }
    return out;
}

// Values given on the command line; anything else falls back to the config file.
struct RunFlags {
    std::string config_path, report_path;
    std::string problem, samples, out;
    int M = 0, degree = 0, mesh_n = 0, max_rank = 0, workers = 0;
    std::int64_t seed = 0, ref_samples = 0, test_samples = 0;
    double theta = 0, contrast = 0;
};

void apply_file(const std::string& path, RunConfig& c) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidArgument("config file " + path + ": " + e.what());
    }
    if (!j.is_object()) throw InvalidArgument("config file must hold a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "problem") c.problem = v.get<std::string>();
            else if (key == "M") c.M = v.get<int>();
            else if (key == "degree") c.degree = v.get<int>();
            else if (key == "mesh-n") c.mesh_n = v.get<int>();
            else if (key == "samples") {
                c.samples = v.is_string() ? parse_schedule(v.get<std::string>()) : v.get<std::vector<std::int64_t>>();
            }
            else if (key == "max-rank") c.max_rank = v.get<int>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "ref-samples") c.ref_samples = v.get<std::int64_t>();
            else if (key == "test-samples") c.test_samples = v.get<std::int64_t>();
            else if (key == "workers") c.workers = v.get<int>();
            else if (key == "out") c.out = v.get<std::string>();
            else if (key == "theta") c.theta = v.get<double>();
            else if (key == "contrast") c.contrast = v.get<double>();
            else throw InvalidArgument("unknown config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config file: ") + e.what());
    }
}

json report_json(const FitReport& r) {
    return {{"final_ranks", r.final_ranks},
            {"sweeps", r.sweeps},
            {"best_sweep", r.best_sweep},
            {"stop_reason", r.stop_reason},
            {"training_risk", r.training_risk},
            {"validation_risk", r.validation_risk},
            {"validation_standard_error", r.validation_standard_error},
            {"adaptation_sweeps", r.adaptation_sweeps},
            {"rank_history", r.rank_history},
            {"seconds", r.seconds}};
}

int run_command(const CLI::App& cmd, const RunFlags& f) {
    RunConfig c;
    if (!f.config_path.empty()) apply_file(f.config_path, c);
    const auto given = [&](const char* name) { return cmd.get_option(name)->count() > 0; };
    if (given("--problem")) c.problem = f.problem;
    if (given("--M")) c.M = f.M;
    if (given("--degree")) c.degree = f.degree;
    if (given("--mesh-n")) c.mesh_n = f.mesh_n;
    if (given("--samples")) c.samples = parse_schedule(f.samples);
    if (given("--max-rank")) c.max_rank = f.max_rank;
    if (given("--seed")) c.seed = std::uint64_t(f.seed);
    if (given("--ref-samples")) c.ref_samples = f.ref_samples;
    if (given("--test-samples")) c.test_samples = f.test_samples;
    if (given("--workers")) c.workers = f.workers;
    if (given("--out")) c.out = f.out;
    if (given("--theta")) c.theta = f.theta;
    if (given("--contrast")) c.contrast = f.contrast;
    c.validate();

    std::ofstream file;
    std::ostream* csv = &std::cout;
    if (!c.out.empty() && c.out != "-") {
        file.open(c.out);
        if (!file) throw InvalidArgument("cannot write " + c.out);
        csv = &file;
    }
    const PipelineResult result = run_pipeline(c, csv);
    if (!f.report_path.empty()) {
        json reports = json::array();
        for (std::size_t k = 0; k < result.reports.size(); ++k) {
            json entry = {{"N", result.records[k].N}};
            entry.update(report_json(result.reports[k]));
            reports.push_back(std::move(entry));
        }
        std::ofstream out(f.report_path);
        if (!out) throw InvalidArgument("cannot write " + f.report_path);
        out << reports.dump(2) << '\n';
    }
    return 0;
}

json bound_json(const ProbabilityBound& b) {
    return {{"raw", b.raw()}, {"clamped", b.clamped()}, {"log", b.log_raw}};
}

struct BoundFlags {
    BoundInputs in;
    double eps = 0.1;
    double N = 1000;
    bool invert = false;
    double pfail = 0.01;
    std::string concentration = "hoeffding";
};

int bounds_command(const BoundFlags& f) {
    const Concentration c = parse_concentration(f.concentration);
    const BoundInputs& in = f.in;
    json report;
    report["inputs"] = {{"dim", in.dim},     {"radius", in.radius}, {"C1", in.C1},       {"C2", in.C2},
                        {"Gamma", in.Gamma}, {"gamma", in.gamma},   {"sigma2", in.sigma2}, {"E_best", in.E_best},
                        {"eps", f.eps},      {"N", f.N},            {"concentration", to_string(c)}};
    const double cover_eps = f.eps / (8.0 * in.C2);
    report["log_covering_number"] = log_covering_number_linear(in.dim, in.radius, cover_eps);
    report["hoeffding_delta"] = bound_json(hoeffding_delta(f.eps, f.N, in.C1));
    report["bernstein_delta"] = bound_json(bernstein_delta(f.eps, f.N, in.C1, in.sigma2));
    // zero-variance Bernstein in both forms; they differ, and only the derived one is used
    report["bernstein_zero_variance"] = {
        {"derived", bound_json(bernstein_delta(f.eps, f.N, in.C1, 0.0))},
        {"printed", bound_json(bernstein_negligible_variance_alt(f.eps, f.N, in.C1))}};
    report["generalization_bound"] = bound_json(generalization_bound(f.eps, f.N, in, c));
    const auto approx = approx_error_bounds(in.E_best, in.C2, in.Gamma);
    report["approximation_error"] = {{"linear", approx.linear}, {"quadratic", approx.quadratic}};
    const auto quasi = quasi_optimality(1.0, f.N, in, c);
    report["quasi_optimality"] = {{"a", 1.0}, {"factor", quasi.factor}, {"probability", quasi.probability}};
    if (f.invert) {
        report["samples_for_confidence"] = {{"pfail", f.pfail},
                                            {"N", samples_for_confidence(f.eps, f.pfail, in, c)}};
    }
    std::cout << report.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variational Monte Carlo for parametric elliptic PDEs"};
    app.require_subcommand(1);

    RunFlags rf;
    auto* run = app.add_subcommand("run", "sample, solve, reconstruct and write the error table as CSV");
    run->add_option("--config", rf.config_path, "JSON config; keys as the flags below, flags take precedence")
        ->check(CLI::ExistingFile);
    run->add_option("--problem", rf.problem, "affine | lognormal | cookie");
    run->add_option("--M", rf.M, "number of parameters");
    run->add_option("--degree", rf.degree, "polynomial degree per parameter");
    run->add_option("--mesh-n", rf.mesh_n, "cells per side of the unit-square mesh");
    run->add_option("--samples", rf.samples, "increasing sample schedule, e.g. 250,500,1000");
    run->add_option("--max-rank", rf.max_rank);
    run->add_option("--seed", rf.seed)->check(CLI::NonNegativeNumber);
    run->add_option("--ref-samples", rf.ref_samples, "Sobol points for the reference moments");
    run->add_option("--test-samples", rf.test_samples, "held-out samples for the pointwise error");
    run->add_option("--workers", rf.workers, "threads for the FE solves");
    run->add_option("--out", rf.out, "CSV path (default: stdout)");
    run->add_option("--theta", rf.theta, "affine/lognormal amplitude");
    run->add_option("--contrast", rf.contrast, "cookie coefficient contrast");
    run->add_option("--report", rf.report_path, "write the fit reports as JSON");

    BoundFlags bf;
    auto* bounds = app.add_subcommand("bounds", "concentration and generalization bounds as JSON");
    bounds->add_option("--dim", bf.in.dim)->check(CLI::PositiveNumber);
    bounds->add_option("--radius", bf.in.radius);
    bounds->add_option("--C1", bf.in.C1);
    bounds->add_option("--C2", bf.in.C2);
    bounds->add_option("--Gamma", bf.in.Gamma);
    bounds->add_option("--gamma", bf.in.gamma);
    bounds->add_option("--sigma2", bf.in.sigma2);
    bounds->add_option("--E-best", bf.in.E_best);
    bounds->add_option("--eps", bf.eps);
    bounds->add_option("--N", bf.N);
    bounds->add_flag("--invert", bf.invert, "also report the smallest N with bound <= pfail");
    bounds->add_option("--pfail", bf.pfail);
    bounds->add_option("--concentration", bf.concentration)->check(CLI::IsMember({"hoeffding", "bernstein"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kInvalidConfig;
    }

    try {
        if (*run) return run_command(*run, rf);
        return bounds_command(bf);
    } catch (const Error& e) {
        std::cerr << "vmc: " << e.what() << '\n';
        return e.is_numerical() ? kNumericalFailure : kInvalidConfig;
    } catch (const std::exception& e) {
        std::cerr << "vmc: " << e.what() << '\n';
        return kNumericalFailure;
    }
}
