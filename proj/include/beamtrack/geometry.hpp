#ifndef BEAMTRACK_GEOMETRY_HPP
#define BEAMTRACK_GEOMETRY_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "beamtrack/common.hpp"

namespace beamtrack {

struct MicArrayGeometry {
    std::vector<Vec3> mic_positions;
    double sample_rate = 48000.0;
    double speed_of_sound = 343.0;

    std::size_t num_mics() const { return mic_positions.size(); }
    std::size_t num_pairs() const { return num_mics() * (num_mics() - 1) / 2; }

    /// Samples of propagation per meter.
    double samples_per_meter() const { return sample_rate / speed_of_sound; }

    /// Largest inter-microphone distance, meters.
    double aperture() const {
        double a = 0.0;
        for (std::size_t i = 0; i < mic_positions.size(); ++i)
            for (std::size_t j = i + 1; j < mic_positions.size(); ++j) {
                double d = (mic_positions[i] - mic_positions[j]).norm();
                if (d > a) a = d;
            }
        return a;
    }

    void validate() const {
        if (mic_positions.size() < 2)
            throw ConfigError("geometry: need at least 2 microphones");
        if (sample_rate <= 0.0 || speed_of_sound <= 0.0)
            throw ConfigError("geometry: sample_rate and speed_of_sound must be positive");
        for (std::size_t i = 0; i < mic_positions.size(); ++i)
            for (std::size_t j = i + 1; j < mic_positions.size(); ++j)
                if ((mic_positions[i] - mic_positions[j]).norm() <= 0.0)
                    throw ConfigError("geometry: coincident microphones " + std::to_string(i) +
                                      " and " + std::to_string(j));
    }
};

/// Eight omnidirectional mics on a 60 cm circle in the z=0 plane, 48 kHz.
inline MicArrayGeometry default_circular_array(double diameter_m = 0.6,
                                               double sample_rate = 48000.0,
                                               double speed_of_sound = 343.0) {
    MicArrayGeometry g;
    g.sample_rate = sample_rate;
    g.speed_of_sound = speed_of_sound;
    const double r = diameter_m / 2.0;
    for (int m = 0; m < 8; ++m) {
        double a = 2.0 * kPi * m / 8.0;
        g.mic_positions.push_back({r * std::cos(a), r * std::sin(a), 0.0});
    }
    return g;
}

/// Microphone pairs enumerated as (0,1),(0,2),...,(0,M-1),(1,2),... so that
/// pair order is stable everywhere (correlations, lookup tables, energy sums).
struct MicPair {
    std::size_t i;
    std::size_t j;
};

inline std::vector<MicPair> enumerate_pairs(std::size_t num_mics) {
    std::vector<MicPair> pairs;
    pairs.reserve(num_mics * (num_mics - 1) / 2);
    for (std::size_t i = 0; i < num_mics; ++i)
        for (std::size_t j = i + 1; j < num_mics; ++j) pairs.push_back({i, j});
    return pairs;
}

/// Folds square-grid parameters (u,v) in [-1,1]^2 onto a unit vector on the
/// upper hemisphere. The x component takes v and the y component takes u; the
/// polar angle is pi*max(u^2,v^2)/2. The origin maps to the zenith, which is
/// the limit along the diagonal.
inline Vec3 fold_grid(double u, double v) {
    if (u < -1.0 || u > 1.0 || v < -1.0 || v > 1.0)
        throw std::domain_error("fold_grid: u and v must lie in [-1, 1]");
    double r2 = u * u + v * v;
    if (r2 == 0.0) return {0.0, 0.0, 1.0};
    double phi = kPi * std::max(u * u, v * v) / 2.0;
    double r = std::sqrt(r2);
    double s = std::sin(phi);
    return {v / r * s, u / r * s, std::cos(phi)};
}

struct GridPoint {
    double u = 0.0;
    double v = 0.0;
    Vec3 direction;
    double distance = 0.0; // meters from array centroid

    Vec3 position() const { return direction * distance; }
};

struct SearchGrid {
    std::vector<GridPoint> points;
    std::size_t side = 0; // directions per axis
    std::vector<double> distances;

    std::size_t num_directions() const { return side * side; }

    /// Point index layout: ((iu*side + iv) * |distances|) + idist.
    std::size_t index_of(std::size_t iu, std::size_t iv, std::size_t idist) const {
        return (iu * side + iv) * distances.size() + idist;
    }
};

inline double grid_param(std::size_t i, std::size_t side) {
    return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(side - 1);
}

inline SearchGrid build_search_grid(std::size_t side, const std::vector<double>& distances) {
    if (side < 2) throw ConfigError("build_search_grid: side must be >= 2");
    if (distances.empty()) throw ConfigError("build_search_grid: empty distance list");
    for (std::size_t d = 0; d < distances.size(); ++d) {
        if (distances[d] <= 0.0)
            throw ConfigError("build_search_grid: distances must be positive");
        if (d > 0 && distances[d] <= distances[d - 1])
            throw ConfigError("build_search_grid: distances must be strictly ascending");
    }
    SearchGrid grid;
    grid.side = side;
    grid.distances = distances;
    grid.points.reserve(side * side * distances.size());
    for (std::size_t iu = 0; iu < side; ++iu) {
        double u = grid_param(iu, side);
        for (std::size_t iv = 0; iv < side; ++iv) {
            double v = grid_param(iv, side);
            Vec3 dir = fold_grid(u, v);
            for (double d : distances) grid.points.push_back({u, v, dir, d});
        }
    }
    return grid;
}

/// Log-spaced distance shells, endpoints included.
inline std::vector<double> log_spaced_distances(double lo, double hi, std::size_t count) {
    if (count == 0 || lo <= 0.0 || hi <= lo)
        throw ConfigError("log_spaced_distances: need 0 < lo < hi and count >= 1");
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = lo;
        return out;
    }
    double step = std::log(hi / lo) / static_cast<double>(count - 1);
    for (std::size_t k = 0; k < count; ++k) out[k] = lo * std::exp(step * static_cast<double>(k));
    return out;
}

/// Integer-sample time difference of arrival between mics i and j for a
/// source position: round(fs/c * (|s-mi| - |s-mj|)), ties away from zero.
/// Positive when mic i is farther (its signal lags).
inline int compute_tdoa(const Vec3& source, std::size_t i, std::size_t j,
                        const MicArrayGeometry& geom) {
    double di = (source - geom.mic_positions[i]).norm();
    double dj = (source - geom.mic_positions[j]).norm();
    return static_cast<int>(std::round(geom.samples_per_meter() * (di - dj)));
}

/// Per grid point, the 28 (for M=8) pair delays stored modulo the correlation
/// length L. Lags for one grid point are contiguous so an energy evaluation
/// walks a single short span of the table.
struct TdoaLookupTable {
    std::vector<std::uint16_t> delays; // [point * num_pairs + pair]
    std::size_t num_pairs = 0;
    std::size_t correlation_length = 0;

    const std::uint16_t* row(std::size_t point_index) const {
        return delays.data() + point_index * num_pairs;
    }
};

inline TdoaLookupTable build_lookup_table(const SearchGrid& grid, const MicArrayGeometry& geom,
                                          std::size_t correlation_length) {
    geom.validate();
    const std::size_t L = correlation_length;
    const auto pairs = enumerate_pairs(geom.num_mics());
    TdoaLookupTable table;
    table.num_pairs = pairs.size();
    table.correlation_length = L;
    table.delays.resize(grid.points.size() * pairs.size());

    const double spm = geom.samples_per_meter();
    std::vector<double> mic_dist(geom.num_mics());
    std::size_t out = 0;
    for (const GridPoint& p : grid.points) {
        Vec3 pos = p.position();
        for (std::size_t m = 0; m < geom.num_mics(); ++m)
            mic_dist[m] = (pos - geom.mic_positions[m]).norm();
        for (const MicPair& pr : pairs) {
            int lag = static_cast<int>(std::round(spm * (mic_dist[pr.i] - mic_dist[pr.j])));
            if (std::abs(lag) >= static_cast<int>(L / 2))
                throw ConfigError("build_lookup_table: delay " + std::to_string(lag) +
                                  " exceeds half the correlation length; array too large "
                                  "for this window");
            int wrapped = ((lag % static_cast<int>(L)) + static_cast<int>(L)) % static_cast<int>(L);
            table.delays[out++] = static_cast<std::uint16_t>(wrapped);
        }
    }
    return table;
}

} // namespace beamtrack

#endif // BEAMTRACK_GEOMETRY_HPP
