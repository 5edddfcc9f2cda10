#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vmc/errors.hpp"
#include "vmc/normal_dist.hpp"
#include "vmc/param_field.hpp"
#include "vmc/sobol_table.hpp"

namespace vmc {

enum class SampleKind { pseudo, sobol };

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// N parameter vectors of dimension M, one per row. Pseudo-random sets are
/// drawn from the counter range [first_index, first_index + N).
struct SampleSet {
    RowMatrix points;
    std::uint64_t seed = 0;
    std::uint64_t first_index = 0;
    SampleKind kind = SampleKind::pseudo;
    ParameterDomain domain = ParameterDomain::uniform_cube;

    [[nodiscard]] Eigen::Index size() const { return points.rows(); }
    [[nodiscard]] Eigen::Index dimension() const { return points.cols(); }
    [[nodiscard]] std::span<const double> point(Eigen::Index i) const {
        return {points.row(i).data(), std::size_t(points.cols())};
    }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Uniform variate in (0, 1) keyed by (seed, sample index, coordinate).
inline double counter_uniform(std::uint64_t seed, std::uint64_t index, std::uint64_t coordinate) {
    std::uint64_t h = detail::splitmix64(seed ^ 0x243f6a8885a308d3ULL);
    h = detail::splitmix64(h ^ index);
    h = detail::splitmix64(h ^ (coordinate * 0x9e3779b97f4a7c15ULL + 0x13198a2e03707344ULL));
    return (double(h >> 11) + 0.5) * 0x1.0p-53;
}

inline double map_unit_to_domain(double t, ParameterDomain domain) {
    return domain == ParameterDomain::uniform_cube ? 2.0 * t - 1.0 : inverse_normal_cdf(t);
}

inline SampleSet sample_pseudo(int M, std::int64_t N, std::uint64_t seed, ParameterDomain domain,
                               std::uint64_t first_index = 0) {
    if (M < 1 || N < 1) throw InvalidArgument("sample_pseudo: M and N must be >= 1");
    SampleSet set{RowMatrix(N, M), seed, first_index, SampleKind::pseudo, domain};
    for (std::int64_t i = 0; i < N; ++i) {
        for (int m = 0; m < M; ++m) {
            set.points(i, m) = map_unit_to_domain(counter_uniform(seed, first_index + std::uint64_t(i), std::uint64_t(m)), domain);
        }
    }
    return set;
}

/// Sobol generator over 32-bit direction numbers, Gray-code ordering.
class SobolGenerator {
public:
    static constexpr int kBits = 32;

    /// Parses the Joe-Kuo layout: one line "d s a m_1 .. m_s" per dimension
    /// d >= 2; a leading non-numeric header line is skipped.
    static SobolGenerator from_stream(std::istream& in) {
        SobolGenerator gen;
        gen.directions_.push_back(first_dimension());
        std::string line;
        int expected = 2;
        while (std::getline(in, line)) {
            std::istringstream row(line);
            int d = 0, s = 0;
            std::uint64_t a = 0;
            if (!(row >> d)) continue;  // header or blank line
            if (!(row >> s >> a) || d != expected || s < 1 || s > kBits) {
                throw InvalidArgument("malformed direction-number line: '" + line + "'");
            }
            std::vector<std::uint64_t> m(static_cast<std::size_t>(s));
            for (auto& mi : m) {
                if (!(row >> mi)) throw InvalidArgument("malformed direction-number line: '" + line + "'");
            }
            gen.directions_.push_back(expand(s, a, m));
            ++expected;
        }
        return gen;
    }

    static SobolGenerator from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw InvalidArgument("cannot open direction-number file '" + path + "'");
        return from_stream(in);
    }

    /// Generator over the embedded table.
    static const SobolGenerator& standard() {
        static const SobolGenerator gen = [] {
            std::istringstream in(detail::kJoeKuoTable);
            return from_stream(in);
        }();
        return gen;
    }

    [[nodiscard]] int max_dimension() const { return int(directions_.size()); }

    /// Coordinate `dim` (0-based) of base point `index` in [0, 1).
    [[nodiscard]] double base_point(std::uint64_t index, int dim) const {
        const auto& v = directions_.at(std::size_t(dim));
        std::uint64_t gray = index ^ (index >> 1);
        std::uint64_t x = 0;
        for (int bit = 0; gray != 0 && bit < kBits; ++bit, gray >>= 1) {
            if (gray & 1U) x ^= v[std::size_t(bit)];
        }
        return double(x) * 0x1.0p-32;
    }

private:
    using Directions = std::array<std::uint64_t, kBits>;

    static Directions first_dimension() {
        Directions v{};
        for (int i = 0; i < kBits; ++i) v[std::size_t(i)] = std::uint64_t{1} << (kBits - 1 - i);
        return v;
    }

    static Directions expand(int s, std::uint64_t a, const std::vector<std::uint64_t>& m) {
        Directions v{};
        for (int i = 0; i < kBits; ++i) {
            if (i < s) {
                v[std::size_t(i)] = m[std::size_t(i)] << (kBits - 1 - i);
            } else {
                std::uint64_t value = v[std::size_t(i - s)] ^ (v[std::size_t(i - s)] >> s);
                for (int k = 1; k < s; ++k) {
                    if ((a >> (s - 1 - k)) & 1U) value ^= v[std::size_t(i - k)];
                }
                v[std::size_t(i)] = value;
            }
        }
        return v;
    }

    std::vector<Directions> directions_;
};

/// First N Sobol points starting at index 1 (the all-zero point is skipped).
inline SampleSet sample_sobol(int M, std::int64_t N, ParameterDomain domain,
                              const SobolGenerator& gen = SobolGenerator::standard()) {
    if (M < 1 || N < 1) throw InvalidArgument("sample_sobol: M and N must be >= 1");
    if (M > gen.max_dimension()) {
        throw UnsupportedDimension("sample_sobol: dimension " + std::to_string(M) + " exceeds direction table (" +
                                   std::to_string(gen.max_dimension()) + ")");
    }
    if (std::uint64_t(N) >= (std::uint64_t{1} << SobolGenerator::kBits)) {
        throw InvalidArgument("sample_sobol: N exceeds 2^32 - 1");
    }
    SampleSet set{RowMatrix(N, M), 0, 1, SampleKind::sobol, domain};
    for (std::int64_t i = 0; i < N; ++i) {
        for (int m = 0; m < M; ++m) {
            set.points(i, m) = map_unit_to_domain(gen.base_point(std::uint64_t(i) + 1, m), domain);
        }
    }
    return set;
}

}  // namespace vmc
