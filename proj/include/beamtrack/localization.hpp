#ifndef BEAMTRACK_LOCALIZATION_HPP
#define BEAMTRACK_LOCALIZATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "beamtrack/correlation.hpp"
#include "beamtrack/geometry.hpp"

namespace beamtrack {

/// One candidate source location from the steered beamformer.
struct Observation {
    Vec3 direction;       // unit vector
    double distance = 0;  // meters
    double energy = 0;    // pairwise correlation sum
    std::size_t grid_index = 0;

    Vec3 position() const { return direction * distance; }
};

struct BeamformerOutput {
    std::uint64_t frame_index = 0;
    double t_seconds = 0.0;
    std::vector<Observation> observations; // descending energy
};

struct BeamSearchConfig {
    std::size_t num_sources = 2;  // Q; the search always returns this many
    double fine_cells = 1.5;      // half-extent of the fine search, in coarse cells
    bool fine_global = false;     // scan the whole fine grid instead
    std::size_t threads = 1;

    void validate() const {
        if (num_sources < 1 || num_sources > 4)
            throw ConfigError("search: num_sources must be in [1, 4]");
        if (fine_cells <= 0.0) throw ConfigError("search: fine_cells must be positive");
    }
};

/// Operation counters for the scan (test instrumentation).
struct SearchStats {
    std::uint64_t coarse_points = 0;
    std::uint64_t coarse_lookups = 0;
    std::uint64_t fine_points = 0;
};

/// Beamformer output energy at one grid point: the sum of each pair's
/// correlation at that point's looked-up lag. The constant single-microphone
/// energy term and the factor 2 are dropped; they do not move the argmax.
inline double steered_energy(std::size_t k, const CorrelationSet& corr,
                             const TdoaLookupTable& table) {
    const std::uint16_t* lags = table.row(k);
    double e = 0.0;
    for (std::size_t p = 0; p < table.num_pairs; ++p) e += corr.r[p][lags[p]];
    return e;
}

namespace detail {

struct ScanBest {
    double energy = -1e300;
    std::size_t index = 0;
    bool valid = false;
};

/// Deterministic parallel argmax: fixed-size chunks are evaluated into
/// per-chunk slots (scheduling cannot change any result), then reduced in
/// ascending order so ties resolve toward the lowest grid index.
inline ScanBest scan_argmax(const CorrelationSet& corr, const TdoaLookupTable& table,
                            std::size_t num_points, std::size_t threads, SearchStats* stats) {
    constexpr std::size_t kChunk = 4096;
    const std::size_t num_chunks = (num_points + kChunk - 1) / kChunk;

    auto scan_chunk = [&](std::size_t c) {
        const std::size_t begin = c * kChunk;
        const std::size_t end = std::min(begin + kChunk, num_points);
        ScanBest best;
        for (std::size_t k = begin; k < end; ++k) {
            double e = steered_energy(k, corr, table);
            if (!best.valid || e > best.energy) {
                best.energy = e;
                best.index = k;
                best.valid = true;
            }
        }
        return best;
    };

    std::vector<ScanBest> chunk_best(num_chunks);
    if (threads <= 1 || num_chunks <= 1) {
        for (std::size_t c = 0; c < num_chunks; ++c) chunk_best[c] = scan_chunk(c);
    } else {
        const std::size_t nt = std::min(threads, num_chunks);
        std::vector<std::thread> workers;
        workers.reserve(nt);
        for (std::size_t t = 0; t < nt; ++t)
            workers.emplace_back([&, t] {
                for (std::size_t c = t; c < num_chunks; c += nt) chunk_best[c] = scan_chunk(c);
            });
        for (auto& w : workers) w.join();
    }

    ScanBest best;
    for (const ScanBest& cb : chunk_best)
        if (cb.valid && (!best.valid || cb.energy > best.energy)) best = cb;
    if (stats) {
        stats->coarse_points += num_points;
        stats->coarse_lookups += num_points * table.num_pairs;
    }
    return best;
}

} // namespace detail

/// Grid plus its lookup table; both immutable after construction.
struct GridTable {
    const SearchGrid* grid = nullptr;
    const TdoaLookupTable* table = nullptr;
};

/// Coarse/fine steered-beamformer search with iterative source removal.
/// Each round takes the coarse argmax, refines it on the fine grid around the
/// winning cell (or globally), then zeroes the winner's looked-up correlation
/// values so the next round can find another source. Always returns
/// cfg.num_sources observations; rejecting weak ones is the tracker's job.
inline std::vector<Observation> search_sources(const CorrelationSet& corr, const GridTable& coarse,
                                               const GridTable& fine, const BeamSearchConfig& cfg,
                                               SearchStats* stats = nullptr) {
    cfg.validate();
    CorrelationSet work = corr; // removal mutates a private copy

    std::vector<Observation> found;
    found.reserve(cfg.num_sources);

    const SearchGrid& cg = *coarse.grid;
    const bool have_fine = fine.grid != nullptr && fine.table != nullptr;

    for (std::size_t q = 0; q < cfg.num_sources; ++q) {
        detail::ScanBest best =
            detail::scan_argmax(work, *coarse.table, cg.points.size(), cfg.threads, stats);

        const SearchGrid* win_grid = &cg;
        const TdoaLookupTable* win_table = coarse.table;
        std::size_t win_index = best.index;
        double win_energy = best.energy;

        if (have_fine) {
            const SearchGrid& fg = *fine.grid;
            if (cfg.fine_global) {
                detail::ScanBest fb =
                    detail::scan_argmax(work, *fine.table, fg.points.size(), cfg.threads, nullptr);
                if (stats) stats->fine_points += fg.points.size();
                win_grid = &fg;
                win_table = fine.table;
                win_index = fb.index;
                win_energy = fb.energy;
            } else {
                // Fine pass over a box of +/- fine_cells coarse cells around
                // the winner, all fine distances.
                const GridPoint& cw = cg.points[best.index];
                const double coarse_step = 2.0 / static_cast<double>(cg.side - 1);
                const double fine_step = 2.0 / static_cast<double>(fg.side - 1);
                const long half = static_cast<long>(
                    std::floor(cfg.fine_cells * coarse_step / fine_step + 1e-9));
                const long cu = static_cast<long>(std::lround((cw.u + 1.0) / fine_step));
                const long cv = static_cast<long>(std::lround((cw.v + 1.0) / fine_step));
                const long side = static_cast<long>(fg.side);
                const std::size_t ndist = fg.distances.size();

                bool fine_valid = false;
                double fe_best = -1e300;
                std::size_t fk_best = 0;
                for (long iu = std::max(0L, cu - half); iu <= std::min(side - 1, cu + half); ++iu)
                    for (long iv = std::max(0L, cv - half); iv <= std::min(side - 1, cv + half);
                         ++iv) {
                        std::size_t base = (static_cast<std::size_t>(iu) * fg.side +
                                            static_cast<std::size_t>(iv)) *
                                           ndist;
                        for (std::size_t d = 0; d < ndist; ++d) {
                            std::size_t k = base + d;
                            double e = steered_energy(k, work, *fine.table);
                            if (stats) ++stats->fine_points;
                            if (!fine_valid || e > fe_best) {
                                fe_best = e;
                                fk_best = k;
                                fine_valid = true;
                            }
                        }
                    }
                if (fine_valid) {
                    win_grid = &fg;
                    win_table = fine.table;
                    win_index = fk_best;
                    win_energy = fe_best;
                }
            }
        }

        const GridPoint& wp = win_grid->points[win_index];
        found.push_back({wp.direction, wp.distance, win_energy, win_index});

        // Remove this source's contribution: zero exactly the winning lags.
        const std::uint16_t* lags = win_table->row(win_index);
        for (std::size_t p = 0; p < win_table->num_pairs; ++p) work.r[p][lags[p]] = 0.0;
    }

    std::stable_sort(found.begin(), found.end(),
                     [](const Observation& a, const Observation& b) { return a.energy > b.energy; });
    return found;
}

} // namespace beamtrack

#endif // BEAMTRACK_LOCALIZATION_HPP
