#ifndef BEAMTRACK_CONFIG_HPP
#define BEAMTRACK_CONFIG_HPP

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "beamtrack/geometry.hpp"
#include "beamtrack/simulator.hpp"
#include "beamtrack/spectral.hpp"
#include "beamtrack/tracker.hpp"

namespace beamtrack {

using json = nlohmann::json;

struct SearchParams {
    std::size_t coarse_side = 41;
    std::vector<double> coarse_distances = log_spaced_distances(0.3, 3.0, 5);
    bool fine_enabled = true;
    std::size_t fine_side = 201;
    std::vector<double> fine_distances = log_spaced_distances(0.3, 3.0, 25);
    double fine_cells = 1.5;
    bool fine_global = false;
    std::size_t frames_per_update = 4;
    std::size_t num_sources = 2; // Q

    bool operator==(const SearchParams&) const = default;

    void validate() const {
        if (coarse_side < 2 || (fine_enabled && fine_side < 2))
            throw ConfigError("search: grid sides must be >= 2");
        if (frames_per_update == 0) throw ConfigError("search: frames_per_update must be >= 1");
        if (num_sources < 1 || num_sources > 4)
            throw ConfigError("search: num_sources must be in [1, 4]");
    }
};

/// Tracker constants as configured; angles in degrees here, converted when
/// building the runtime TrackerConfig.
struct TrackerParams {
    std::size_t particles = 500;
    double damping_rate = 2.0;
    double excitation = 0.04;
    double energy_threshold = 0.6;
    double sigma_dir_deg = 3.0;
    double sigma_dist_rel = 0.15;
    double p_new = 0.02;
    double p_false = 0.05;
    double n_min = 500.0 / 3.0;
    double birth_threshold = 0.3;
    double death_timeout_s = 2.0;
    double markov_stay_active = 0.95;
    double markov_become_active = 0.05;
    double existence_keep_prior = 0.9;
    double report_existence = 0.5;

    bool operator==(const TrackerParams&) const = default;
};

struct PipelineConfig {
    MicArrayGeometry geometry = default_circular_array();
    SpectralParams spectral;
    SearchParams search;
    TrackerParams tracker;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    bool operator==(const PipelineConfig& o) const {
        auto geom_eq = [](const MicArrayGeometry& a, const MicArrayGeometry& b) {
            if (a.sample_rate != b.sample_rate || a.speed_of_sound != b.speed_of_sound ||
                a.mic_positions.size() != b.mic_positions.size())
                return false;
            for (std::size_t i = 0; i < a.mic_positions.size(); ++i) {
                const Vec3& p = a.mic_positions[i];
                const Vec3& q = b.mic_positions[i];
                if (p.x != q.x || p.y != q.y || p.z != q.z) return false;
            }
            return true;
        };
        auto spec_eq = [](const SpectralParams& a, const SpectralParams& b) {
            return a.window == b.window && a.hop == b.hop && a.alpha_dd == b.alpha_dd &&
                   a.rt60 == b.rt60 && a.delta_srr == b.delta_srr &&
                   a.mcra.alpha_noise == b.mcra.alpha_noise &&
                   a.mcra.alpha_smooth == b.mcra.alpha_smooth && a.mcra.kappa == b.mcra.kappa &&
                   a.mcra.window_frames == b.mcra.window_frames;
        };
        return geom_eq(geometry, o.geometry) && spec_eq(spectral, o.spectral) &&
               search == o.search && tracker == o.tracker && seed == o.seed &&
               threads == o.threads;
    }

    void validate() const {
        geometry.validate();
        spectral.validate();
        search.validate();
        tracker_config().validate();
    }

    double tracker_delta_t() const {
        return static_cast<double>(spectral.hop * search.frames_per_update) /
               geometry.sample_rate;
    }

    /// Runtime tracker configuration with derived quantities filled in.
    TrackerConfig tracker_config() const {
        TrackerConfig c;
        c.num_particles = tracker.particles;
        c.damping_rate = tracker.damping_rate;
        c.excitation = tracker.excitation;
        c.delta_t = tracker_delta_t();
        c.energy_threshold = tracker.energy_threshold;
        c.sigma_dir = deg_to_rad(tracker.sigma_dir_deg);
        c.sigma_dist_rel = tracker.sigma_dist_rel;
        c.p_new = tracker.p_new;
        c.p_false = tracker.p_false;
        c.n_min = tracker.n_min;
        c.birth_threshold = tracker.birth_threshold;
        c.death_timeout_s = tracker.death_timeout_s;
        c.markov_stay_active = tracker.markov_stay_active;
        c.markov_become_active = tracker.markov_become_active;
        c.existence_keep_prior = tracker.existence_keep_prior;
        c.report_existence = tracker.report_existence;
        const auto& dists = search.fine_enabled ? search.fine_distances : search.coarse_distances;
        c.dist_min = dists.front();
        c.dist_max = dists.back();
        return c;
    }
};

namespace detail {

inline void require_keys(const json& obj, const std::string& ctx,
                         std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(ctx + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw ConfigError(ctx + ": unknown key \"" + it.key() + "\"");
    }
}

inline Vec3 parse_vec3(const json& j, const std::string& ctx) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(ctx + ": expected [x, y, z]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

} // namespace detail

inline MicArrayGeometry parse_geometry(const json& j) {
    detail::require_keys(j, "geometry", {"mic_positions", "sample_rate", "speed_of_sound"});
    MicArrayGeometry g = default_circular_array();
    if (j.contains("mic_positions")) {
        g.mic_positions.clear();
        for (const auto& p : j.at("mic_positions"))
            g.mic_positions.push_back(detail::parse_vec3(p, "geometry.mic_positions"));
    }
    if (j.contains("sample_rate")) g.sample_rate = j.at("sample_rate").get<double>();
    if (j.contains("speed_of_sound")) g.speed_of_sound = j.at("speed_of_sound").get<double>();
    return g;
}

inline PipelineConfig parse_pipeline_config(const json& j) {
    detail::require_keys(j, "config",
                         {"geometry", "spectral", "search", "tracker", "seed", "threads"});
    PipelineConfig c;
    try {
        if (j.contains("geometry")) c.geometry = parse_geometry(j.at("geometry"));
        if (j.contains("spectral")) {
            const json& s = j.at("spectral");
            detail::require_keys(s, "spectral",
                                 {"window", "hop", "alpha_dd", "rt60", "delta_srr", "mcra"});
            if (s.contains("window")) c.spectral.window = s.at("window").get<std::size_t>();
            if (s.contains("hop")) c.spectral.hop = s.at("hop").get<std::size_t>();
            if (s.contains("alpha_dd")) c.spectral.alpha_dd = s.at("alpha_dd").get<double>();
            if (s.contains("rt60")) c.spectral.rt60 = s.at("rt60").get<double>();
            if (s.contains("delta_srr")) c.spectral.delta_srr = s.at("delta_srr").get<double>();
            if (s.contains("mcra")) {
                const json& m = s.at("mcra");
                detail::require_keys(m, "spectral.mcra",
                                     {"alpha_noise", "alpha_smooth", "kappa", "window_frames"});
                if (m.contains("alpha_noise"))
                    c.spectral.mcra.alpha_noise = m.at("alpha_noise").get<double>();
                if (m.contains("alpha_smooth"))
                    c.spectral.mcra.alpha_smooth = m.at("alpha_smooth").get<double>();
                if (m.contains("kappa")) c.spectral.mcra.kappa = m.at("kappa").get<double>();
                if (m.contains("window_frames"))
                    c.spectral.mcra.window_frames = m.at("window_frames").get<std::size_t>();
            }
        }
        if (j.contains("search")) {
            const json& s = j.at("search");
            detail::require_keys(s, "search",
                                 {"coarse_side", "coarse_distances", "fine_enabled", "fine_side",
                                  "fine_distances", "fine_cells", "fine_global",
                                  "frames_per_update", "num_sources"});
            if (s.contains("coarse_side")) c.search.coarse_side = s.at("coarse_side").get<std::size_t>();
            if (s.contains("coarse_distances"))
                c.search.coarse_distances = s.at("coarse_distances").get<std::vector<double>>();
            if (s.contains("fine_enabled")) c.search.fine_enabled = s.at("fine_enabled").get<bool>();
            if (s.contains("fine_side")) c.search.fine_side = s.at("fine_side").get<std::size_t>();
            if (s.contains("fine_distances"))
                c.search.fine_distances = s.at("fine_distances").get<std::vector<double>>();
            if (s.contains("fine_cells")) c.search.fine_cells = s.at("fine_cells").get<double>();
            if (s.contains("fine_global")) c.search.fine_global = s.at("fine_global").get<bool>();
            if (s.contains("frames_per_update"))
                c.search.frames_per_update = s.at("frames_per_update").get<std::size_t>();
            if (s.contains("num_sources"))
                c.search.num_sources = s.at("num_sources").get<std::size_t>();
        }
        if (j.contains("tracker")) {
            const json& t = j.at("tracker");
            detail::require_keys(
                t, "tracker",
                {"particles", "damping_rate", "excitation", "energy_threshold", "sigma_dir_deg",
                 "sigma_dist_rel", "p_new", "p_false", "n_min", "birth_threshold",
                 "death_timeout_s", "markov_stay_active", "markov_become_active",
                 "existence_keep_prior", "report_existence"});
            TrackerParams& p = c.tracker;
            if (t.contains("particles")) p.particles = t.at("particles").get<std::size_t>();
            if (t.contains("damping_rate")) p.damping_rate = t.at("damping_rate").get<double>();
            if (t.contains("excitation")) p.excitation = t.at("excitation").get<double>();
            if (t.contains("energy_threshold"))
                p.energy_threshold = t.at("energy_threshold").get<double>();
            if (t.contains("sigma_dir_deg")) p.sigma_dir_deg = t.at("sigma_dir_deg").get<double>();
            if (t.contains("sigma_dist_rel"))
                p.sigma_dist_rel = t.at("sigma_dist_rel").get<double>();
            if (t.contains("p_new")) p.p_new = t.at("p_new").get<double>();
            if (t.contains("p_false")) p.p_false = t.at("p_false").get<double>();
            if (t.contains("n_min")) p.n_min = t.at("n_min").get<double>();
            if (t.contains("birth_threshold"))
                p.birth_threshold = t.at("birth_threshold").get<double>();
            if (t.contains("death_timeout_s"))
                p.death_timeout_s = t.at("death_timeout_s").get<double>();
            if (t.contains("markov_stay_active"))
                p.markov_stay_active = t.at("markov_stay_active").get<double>();
            if (t.contains("markov_become_active"))
                p.markov_become_active = t.at("markov_become_active").get<double>();
            if (t.contains("existence_keep_prior"))
                p.existence_keep_prior = t.at("existence_keep_prior").get<double>();
            if (t.contains("report_existence"))
                p.report_existence = t.at("report_existence").get<double>();
        }
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("threads")) c.threads = j.at("threads").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline json geometry_to_json(const MicArrayGeometry& g) {
    json positions = json::array();
    for (const Vec3& p : g.mic_positions) positions.push_back({p.x, p.y, p.z});
    return {{"mic_positions", positions},
            {"sample_rate", g.sample_rate},
            {"speed_of_sound", g.speed_of_sound}};
}

inline json pipeline_config_to_json(const PipelineConfig& c) {
    return {
        {"geometry", geometry_to_json(c.geometry)},
        {"spectral",
         {{"window", c.spectral.window},
          {"hop", c.spectral.hop},
          {"alpha_dd", c.spectral.alpha_dd},
          {"rt60", c.spectral.rt60},
          {"delta_srr", c.spectral.delta_srr},
          {"mcra",
           {{"alpha_noise", c.spectral.mcra.alpha_noise},
            {"alpha_smooth", c.spectral.mcra.alpha_smooth},
            {"kappa", c.spectral.mcra.kappa},
            {"window_frames", c.spectral.mcra.window_frames}}}}},
        {"search",
         {{"coarse_side", c.search.coarse_side},
          {"coarse_distances", c.search.coarse_distances},
          {"fine_enabled", c.search.fine_enabled},
          {"fine_side", c.search.fine_side},
          {"fine_distances", c.search.fine_distances},
          {"fine_cells", c.search.fine_cells},
          {"fine_global", c.search.fine_global},
          {"frames_per_update", c.search.frames_per_update},
          {"num_sources", c.search.num_sources}}},
        {"tracker",
         {{"particles", c.tracker.particles},
          {"damping_rate", c.tracker.damping_rate},
          {"excitation", c.tracker.excitation},
          {"energy_threshold", c.tracker.energy_threshold},
          {"sigma_dir_deg", c.tracker.sigma_dir_deg},
          {"sigma_dist_rel", c.tracker.sigma_dist_rel},
          {"p_new", c.tracker.p_new},
          {"p_false", c.tracker.p_false},
          {"n_min", c.tracker.n_min},
          {"birth_threshold", c.tracker.birth_threshold},
          {"death_timeout_s", c.tracker.death_timeout_s},
          {"markov_stay_active", c.tracker.markov_stay_active},
          {"markov_become_active", c.tracker.markov_become_active},
          {"existence_keep_prior", c.tracker.existence_keep_prior},
          {"report_existence", c.tracker.report_existence}}},
        {"seed", c.seed},
        {"threads", c.threads}};
}

inline SceneSpec parse_scene(const json& j) {
    detail::require_keys(j, "scene",
                         {"duration_s", "geometry", "sources", "snr_db", "rt60", "reverb_gain",
                          "seed", "hop", "window"});
    SceneSpec s;
    try {
        if (j.contains("duration_s")) s.duration_s = j.at("duration_s").get<double>();
        if (j.contains("geometry")) s.geometry = parse_geometry(j.at("geometry"));
        if (j.contains("snr_db")) {
            if (j.at("snr_db").is_null())
                s.snr_db = 1000.0; // no noise
            else
                s.snr_db = j.at("snr_db").get<double>();
        }
        if (j.contains("rt60")) s.rt60 = j.at("rt60").get<double>();
        if (j.contains("reverb_gain")) s.reverb_gain = j.at("reverb_gain").get<double>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("hop")) s.hop = j.at("hop").get<std::size_t>();
        if (j.contains("window")) s.window = j.at("window").get<std::size_t>();
        if (j.contains("sources")) {
            for (const auto& sj : j.at("sources")) {
                detail::require_keys(sj, "scene.sources[]", {"signal", "waypoints", "gain"});
                SourceSpec src;
                if (sj.contains("gain")) src.gain = sj.at("gain").get<double>();
                if (sj.contains("signal")) {
                    const json& sig = sj.at("signal");
                    detail::require_keys(sig, "scene.sources[].signal",
                                         {"type", "burst_period_s", "burst_duty", "ramp_s",
                                          "tone_hz", "hangover_s"});
                    std::string type = sig.value("type", "pink_bursts");
                    if (type == "pink_bursts")
                        src.signal.type = SignalSpec::Type::PinkBursts;
                    else if (type == "pink")
                        src.signal.type = SignalSpec::Type::Pink;
                    else if (type == "white")
                        src.signal.type = SignalSpec::Type::White;
                    else if (type == "tone")
                        src.signal.type = SignalSpec::Type::Tone;
                    else
                        throw ConfigError("scene: unknown signal type \"" + type + "\"");
                    if (sig.contains("burst_period_s"))
                        src.signal.burst_period_s = sig.at("burst_period_s").get<double>();
                    if (sig.contains("burst_duty"))
                        src.signal.burst_duty = sig.at("burst_duty").get<double>();
                    if (sig.contains("ramp_s")) src.signal.ramp_s = sig.at("ramp_s").get<double>();
                    if (sig.contains("tone_hz")) src.signal.tone_hz = sig.at("tone_hz").get<double>();
                    if (sig.contains("hangover_s"))
                        src.signal.hangover_s = sig.at("hangover_s").get<double>();
                }
                if (!sj.contains("waypoints"))
                    throw ConfigError("scene: source without waypoints");
                for (const auto& wj : sj.at("waypoints")) {
                    detail::require_keys(wj, "scene.sources[].waypoints[]", {"t", "pos"});
                    src.waypoints.emplace_back(
                        wj.at("t").get<double>(),
                        detail::parse_vec3(wj.at("pos"), "scene waypoint pos"));
                }
                s.sources.push_back(std::move(src));
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scene: ") + e.what());
    }
    s.validate();
    return s;
}

} // namespace beamtrack

#endif // BEAMTRACK_CONFIG_HPP
