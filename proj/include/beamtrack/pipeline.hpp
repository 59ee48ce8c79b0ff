#ifndef BEAMTRACK_PIPELINE_HPP
#define BEAMTRACK_PIPELINE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "beamtrack/config.hpp"
#include "beamtrack/correlation.hpp"
#include "beamtrack/localization.hpp"
#include "beamtrack/simulator.hpp"
#include "beamtrack/spectral.hpp"
#include "beamtrack/tracker.hpp"

namespace beamtrack {

/// Streaming pipeline: samples -> spectral frontend -> pair correlations ->
/// steered-beamformer search -> particle tracker. Memory use is bounded by
/// the analysis window and the prebuilt grids, independent of input length.
class Pipeline {
public:
    using ObservationSink = std::function<void(const BeamformerOutput&)>;
    using EstimateSink = std::function<void(double, const std::vector<SourceEstimate>&)>;

    explicit Pipeline(const PipelineConfig& cfg)
        : cfg_(cfg),
          frontend_(cfg.geometry.num_mics(), cfg.spectral, cfg.geometry.sample_rate),
          accumulator_(cfg.geometry.num_mics(), cfg.spectral.num_bins(),
                       cfg.search.frames_per_update),
          plan_(cfg.spectral.window),
          tracker_(cfg.tracker_config(), cfg.seed),
          buffer_(cfg.geometry.num_mics()) {
        cfg.validate();
        coarse_grid_ = build_search_grid(cfg.search.coarse_side, cfg.search.coarse_distances);
        coarse_table_ = build_lookup_table(coarse_grid_, cfg.geometry, cfg.spectral.window);
        if (cfg.search.fine_enabled) {
            fine_grid_ = build_search_grid(cfg.search.fine_side, cfg.search.fine_distances);
            fine_table_ = build_lookup_table(fine_grid_, cfg.geometry, cfg.spectral.window);
        }
        search_cfg_.num_sources = cfg.search.num_sources;
        search_cfg_.fine_cells = cfg.search.fine_cells;
        search_cfg_.fine_global = cfg.search.fine_global;
        search_cfg_.threads = cfg.threads;
    }

    void set_observation_sink(ObservationSink sink) { obs_sink_ = std::move(sink); }
    void set_estimate_sink(EstimateSink sink) { est_sink_ = std::move(sink); }

    std::size_t num_channels() const { return cfg_.geometry.num_mics(); }

    /// Feed interleaved samples; frames are emitted as windows fill.
    void process_interleaved(const double* samples, std::size_t frames) {
        const std::size_t ch = num_channels();
        for (std::size_t f = 0; f < frames; ++f)
            for (std::size_t c = 0; c < ch; ++c) buffer_[c].push_back(samples[f * ch + c]);
        drain();
    }

    void process_channels(const std::vector<std::vector<double>>& audio) {
        if (audio.size() != num_channels())
            throw InputError("pipeline: channel count mismatch");
        for (std::size_t c = 0; c < audio.size(); ++c)
            buffer_[c].insert(buffer_[c].end(), audio[c].begin(), audio[c].end());
        drain();
    }

    std::uint64_t frames_processed() const { return frame_index_; }
    const SearchStats& search_stats() const { return stats_; }
    const MultiSourceTracker& tracker() const { return tracker_; }

private:
    void drain() {
        const std::size_t window = cfg_.spectral.window;
        const std::size_t hop = cfg_.spectral.hop;
        while (buffer_[0].size() >= window) {
            std::vector<std::vector<double>> frame_samples(num_channels());
            for (std::size_t c = 0; c < num_channels(); ++c) {
                frame_samples[c].assign(buffer_[c].begin(), buffer_[c].begin() + window);
                buffer_[c].erase(buffer_[c].begin(), buffer_[c].begin() + hop);
            }
            auto out = frontend_.process(frame_samples);
            accumulator_.accumulate(out.frame, out.weights);
            if ((frame_index_ + 1) % cfg_.search.frames_per_update == 0) run_update();
            ++frame_index_;
        }
    }

    void run_update() {
        CorrelationSet corr = correlations(accumulator_, plan_);
        GridTable coarse{&coarse_grid_, &coarse_table_};
        GridTable fine{};
        if (cfg_.search.fine_enabled) fine = {&fine_grid_, &fine_table_};

        BeamformerOutput out;
        out.frame_index = frame_index_;
        out.t_seconds = frame_time(frame_index_);
        out.observations = search_sources(corr, coarse, fine, search_cfg_, &stats_);
        if (obs_sink_) obs_sink_(out);

        auto estimates = tracker_.step(out);
        if (est_sink_) est_sink_(out.t_seconds, estimates);
    }

    double frame_time(std::uint64_t frame_index) const {
        return (static_cast<double>(frame_index * cfg_.spectral.hop) +
                static_cast<double>(cfg_.spectral.window) / 2.0) /
               cfg_.geometry.sample_rate;
    }

    PipelineConfig cfg_;
    SpectralFrontend frontend_;
    CrossSpectrumAccumulator accumulator_;
    FftPlan plan_;
    MultiSourceTracker tracker_;
    SearchGrid coarse_grid_;
    TdoaLookupTable coarse_table_;
    SearchGrid fine_grid_;
    TdoaLookupTable fine_table_;
    BeamSearchConfig search_cfg_;
    SearchStats stats_;
    std::vector<std::vector<double>> buffer_;
    std::uint64_t frame_index_ = 0;
    ObservationSink obs_sink_;
    EstimateSink est_sink_;
};

// ---------------------------------------------------------------------------
// Stream records and evaluation

struct TrajectorySource {
    std::uint64_t id = 0;
    Vec3 position;
    double existence = 0.0;
};

struct TrajectoryRecord {
    double t_seconds = 0.0;
    std::vector<TrajectorySource> sources;
};

struct TruthSource {
    std::size_t id = 0;
    Vec3 position;
    bool active = false;
};

struct TruthRecord {
    double t_seconds = 0.0;
    std::vector<TruthSource> sources;
};

inline double azimuth_deg(const Vec3& p) { return rad_to_deg(std::atan2(p.y, p.x)); }
inline double elevation_deg(const Vec3& p) {
    double r = p.norm();
    return r > 0.0 ? rad_to_deg(std::asin(p.z / r)) : 0.0;
}

inline json observation_record_to_json(const BeamformerOutput& out) {
    json obs = json::array();
    for (const Observation& o : out.observations)
        obs.push_back({{"dir", {o.direction.x, o.direction.y, o.direction.z}},
                       {"dist_m", o.distance},
                       {"energy", o.energy}});
    return {{"frame", out.frame_index}, {"t_seconds", out.t_seconds}, {"observations", obs}};
}

inline json trajectory_record_to_json(const TrajectoryRecord& rec) {
    json sources = json::array();
    for (const TrajectorySource& s : rec.sources)
        sources.push_back({{"id", s.id},
                           {"pos_m", {s.position.x, s.position.y, s.position.z}},
                           {"azimuth_deg", azimuth_deg(s.position)},
                           {"elevation_deg", elevation_deg(s.position)},
                           {"distance_m", s.position.norm()},
                           {"existence", s.existence}});
    return {{"t_seconds", rec.t_seconds}, {"sources", sources}};
}

inline TrajectoryRecord trajectory_record_from_json(const json& j) {
    TrajectoryRecord rec;
    rec.t_seconds = j.at("t_seconds").get<double>();
    for (const auto& sj : j.at("sources")) {
        TrajectorySource s;
        s.id = sj.at("id").get<std::uint64_t>();
        const auto& p = sj.at("pos_m");
        s.position = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
        if (sj.contains("existence")) s.existence = sj.at("existence").get<double>();
        rec.sources.push_back(s);
    }
    return rec;
}

inline json truth_record_to_json(std::uint64_t frame, double t,
                                 const std::vector<GroundTruthEntry>& entries) {
    json sources = json::array();
    for (const GroundTruthEntry& e : entries)
        sources.push_back({{"id", e.source},
                           {"pos_m", {e.position.x, e.position.y, e.position.z}},
                           {"active", e.active}});
    return {{"frame", frame}, {"t_seconds", t}, {"sources", sources}};
}

inline TruthRecord truth_record_from_json(const json& j) {
    TruthRecord rec;
    rec.t_seconds = j.at("t_seconds").get<double>();
    for (const auto& sj : j.at("sources")) {
        TruthSource s;
        s.id = sj.at("id").get<std::size_t>();
        const auto& p = sj.at("pos_m");
        s.position = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
        s.active = sj.at("active").get<bool>();
        rec.sources.push_back(s);
    }
    return rec;
}

template <typename Record, typename Parser>
std::vector<Record> read_jsonl(std::istream& in, Parser parse) {
    std::vector<Record> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(parse(json::parse(line)));
    }
    return out;
}

/// Per-scene tracking quality. Errors cover only frames where the matched
/// truth source is active.
struct EvalReport {
    double azimuth_rms_deg = 0.0;
    double azimuth_max_deg = 0.0;
    double distance_rms_rel = 0.0; // fraction, not percent
    double count_accuracy = 0.0;   // fraction of active frames with the right source count
    std::uint64_t id_switches = 0;
    std::uint64_t active_frames = 0;
    std::uint64_t matched_pairs = 0;
    std::uint64_t missed_truths = 0;
    double runtime_s = 0.0;  // filled by callers that timed the run
    double rt_factor = 0.0;  // runtime / audio duration

    json to_json() const {
        return {{"azimuth_rms_deg", azimuth_rms_deg},
                {"azimuth_max_deg", azimuth_max_deg},
                {"distance_rms_rel", distance_rms_rel},
                {"count_accuracy", count_accuracy},
                {"id_switches", id_switches},
                {"active_frames", active_frames},
                {"matched_pairs", matched_pairs},
                {"missed_truths", missed_truths},
                {"runtime_s", runtime_s},
                {"rt_factor", rt_factor}};
    }
};

inline double wrapped_azimuth_error_deg(const Vec3& a, const Vec3& b) {
    double d = std::fmod(azimuth_deg(a) - azimuth_deg(b), 360.0);
    if (d > 180.0) d -= 360.0;
    if (d < -180.0) d += 360.0;
    return std::abs(d);
}

/// Greedy nearest-azimuth matching of estimates to active truth sources per
/// output frame; unmatched truth counts as a miss. Id switches count changes
/// in which estimate id a truth source is matched to.
inline EvalReport evaluate(const std::vector<TrajectoryRecord>& trajectory,
                           const std::vector<TruthRecord>& truth) {
    EvalReport rep;
    if (trajectory.empty() || truth.empty()) return rep;

    double az_sq = 0.0, dist_sq = 0.0;
    std::uint64_t correct_count = 0;
    std::map<std::size_t, std::uint64_t> last_match; // truth id -> estimate id

    for (const TrajectoryRecord& rec : trajectory) {
        // Nearest truth record in time (same frame clock).
        std::size_t best = 0;
        double best_dt = 1e300;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            double dt = std::abs(truth[i].t_seconds - rec.t_seconds);
            if (dt < best_dt) {
                best_dt = dt;
                best = i;
            }
        }
        std::vector<const TruthSource*> actives;
        for (const TruthSource& s : truth[best].sources)
            if (s.active) actives.push_back(&s);

        if (!actives.empty()) {
            ++rep.active_frames;
            if (rec.sources.size() == actives.size()) ++correct_count;
        }

        // Greedy pairing by azimuth distance.
        struct Cand {
            double err;
            std::size_t ei, ti;
        };
        std::vector<Cand> cands;
        for (std::size_t ei = 0; ei < rec.sources.size(); ++ei)
            for (std::size_t ti = 0; ti < actives.size(); ++ti)
                cands.push_back({wrapped_azimuth_error_deg(rec.sources[ei].position,
                                                           actives[ti]->position),
                                 ei, ti});
        std::sort(cands.begin(), cands.end(),
                  [](const Cand& a, const Cand& b) { return a.err < b.err; });
        std::vector<bool> est_used(rec.sources.size(), false);
        std::vector<bool> truth_used(actives.size(), false);
        std::size_t matched_here = 0;
        for (const Cand& c : cands) {
            if (est_used[c.ei] || truth_used[c.ti]) continue;
            est_used[c.ei] = true;
            truth_used[c.ti] = true;
            ++matched_here;
            ++rep.matched_pairs;
            az_sq += c.err * c.err;
            if (c.err > rep.azimuth_max_deg) rep.azimuth_max_deg = c.err;
            double dt = actives[c.ti]->position.norm();
            double de = rec.sources[c.ei].position.norm();
            double rel = dt > 0.0 ? (de - dt) / dt : 0.0;
            dist_sq += rel * rel;
            auto it = last_match.find(actives[c.ti]->id);
            if (it != last_match.end() && it->second != rec.sources[c.ei].id)
                ++rep.id_switches;
            last_match[actives[c.ti]->id] = rec.sources[c.ei].id;
        }
        rep.missed_truths += actives.size() - matched_here;
    }

    if (rep.matched_pairs > 0) {
        az_sq /= static_cast<double>(rep.matched_pairs);
        dist_sq /= static_cast<double>(rep.matched_pairs);
        rep.azimuth_rms_deg = std::sqrt(az_sq);
        rep.distance_rms_rel = std::sqrt(dist_sq);
    }
    rep.count_accuracy = rep.active_frames > 0
                             ? static_cast<double>(correct_count) /
                                   static_cast<double>(rep.active_frames)
                             : 1.0;
    return rep;
}

/// Convenience wrapper used by tests and the CLI: run a whole multichannel
/// buffer through a freshly built pipeline, collecting both streams.
struct PipelineRun {
    std::vector<BeamformerOutput> observations;
    std::vector<TrajectoryRecord> trajectory;
};

inline PipelineRun run_pipeline(const PipelineConfig& cfg,
                                const std::vector<std::vector<double>>& audio) {
    Pipeline pipeline(cfg);
    PipelineRun run;
    pipeline.set_observation_sink(
        [&](const BeamformerOutput& out) { run.observations.push_back(out); });
    pipeline.set_estimate_sink([&](double t, const std::vector<SourceEstimate>& est) {
        TrajectoryRecord rec;
        rec.t_seconds = t;
        for (const SourceEstimate& e : est)
            rec.sources.push_back({e.id, e.position, e.existence});
        run.trajectory.push_back(std::move(rec));
    });
    pipeline.process_channels(audio);
    return run;
}

} // namespace beamtrack

#endif // BEAMTRACK_PIPELINE_HPP
