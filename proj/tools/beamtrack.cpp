// beamtrack: localize and track sound sources from multichannel WAV input,
// or synthesize test scenes with known ground truth.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "beamtrack/config.hpp"
#include "beamtrack/pipeline.hpp"
#include "beamtrack/simulator.hpp"
#include "beamtrack/wav.hpp"

namespace {

using namespace beamtrack;

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

PipelineConfig load_config(const std::string& path, std::optional<std::uint64_t> seed,
                           std::optional<std::size_t> threads) {
    PipelineConfig cfg;
    if (!path.empty()) cfg = parse_pipeline_config(load_json_file(path));
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    cfg.validate();
    return cfg;
}

std::vector<std::vector<double>> read_and_check_wav(const std::string& path,
                                                    const PipelineConfig& cfg) {
    WavReader reader(path);
    if (reader.num_channels() != cfg.geometry.num_mics())
        throw InputError("input has " + std::to_string(reader.num_channels()) +
                         " channels but the geometry has " +
                         std::to_string(cfg.geometry.num_mics()) + " microphones");
    if (reader.sample_rate() != cfg.geometry.sample_rate)
        throw InputError("input sample rate " + std::to_string(reader.sample_rate()) +
                         " does not match the configured " +
                         std::to_string(cfg.geometry.sample_rate) + " (no resampler)");
    std::vector<std::vector<double>> audio(reader.num_channels());
    std::vector<double> block;
    while (reader.read(block, 65536) > 0) {
        const std::size_t frames = block.size() / reader.num_channels();
        for (std::size_t f = 0; f < frames; ++f)
            for (std::size_t c = 0; c < reader.num_channels(); ++c)
                audio[c].push_back(block[f * reader.num_channels() + c]);
    }
    return audio;
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw std::runtime_error("cannot open " + path + " for writing");
    return file;
}

int cmd_simulate(const std::string& scene_path, const std::string& out_path,
                 const std::string& truth_path, std::optional<std::uint64_t> seed,
                 const std::string& format) {
    SceneSpec scene = parse_scene(load_json_file(scene_path));
    if (seed) scene.seed = *seed;
    SimulationResult result = synthesize(scene);
    if (result.clipped)
        std::cerr << "warning: output scaled by " << result.clip_scale << " to avoid clipping\n";
    write_wav(out_path, result.audio, scene.geometry.sample_rate,
              format == "wav16" ? WavFormat::Pcm16 : WavFormat::Float32);
    if (!truth_path.empty()) {
        std::ofstream truth(truth_path);
        if (!truth) throw std::runtime_error("cannot open " + truth_path + " for writing");
        for (std::size_t f = 0; f < result.truth.frames.size(); ++f)
            truth << truth_record_to_json(f, result.truth.frame_times[f],
                                          result.truth.frames[f])
                         .dump()
                  << "\n";
    }
    std::cerr << "simulated " << scene.duration_s << " s, " << scene.geometry.num_mics()
              << " channels -> " << out_path << "\n";
    return kExitOk;
}

int cmd_localize(const std::string& config_path, const std::string& input,
                 const std::string& out_path, std::optional<std::uint64_t> seed,
                 std::optional<std::size_t> threads) {
    PipelineConfig cfg = load_config(config_path, seed, threads);
    auto audio = read_and_check_wav(input, cfg);
    std::ofstream file;
    std::ostream& out = open_output(file, out_path);
    Pipeline pipeline(cfg);
    pipeline.set_observation_sink(
        [&](const BeamformerOutput& o) { out << observation_record_to_json(o).dump() << "\n"; });
    pipeline.process_channels(audio);
    return kExitOk;
}

int cmd_track(const std::string& config_path, const std::string& input,
              const std::string& out_path, const std::string& format,
              std::optional<std::uint64_t> seed, std::optional<std::size_t> threads) {
    PipelineConfig cfg = load_config(config_path, seed, threads);
    auto audio = read_and_check_wav(input, cfg);
    std::ofstream file;
    std::ostream& out = open_output(file, out_path);
    if (format == "csv")
        out << "t_seconds,id,x_m,y_m,z_m,azimuth_deg,elevation_deg,distance_m,existence\n";

    Pipeline pipeline(cfg);
    pipeline.set_estimate_sink([&](double t, const std::vector<SourceEstimate>& est) {
        if (format == "csv") {
            char line[256];
            for (const SourceEstimate& e : est) {
                std::snprintf(line, sizeof(line),
                              "%.6f,%llu,%.6f,%.6f,%.6f,%.3f,%.3f,%.4f,%.4f\n", t,
                              static_cast<unsigned long long>(e.id), e.position.x, e.position.y,
                              e.position.z, azimuth_deg(e.position), elevation_deg(e.position),
                              e.position.norm(), e.existence);
                out << line;
            }
        } else {
            TrajectoryRecord rec;
            rec.t_seconds = t;
            for (const SourceEstimate& e : est)
                rec.sources.push_back({e.id, e.position, e.existence});
            out << trajectory_record_to_json(rec).dump() << "\n";
        }
    });

    auto start = std::chrono::steady_clock::now();
    pipeline.process_channels(audio);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    double audio_s = static_cast<double>(audio[0].size()) / cfg.geometry.sample_rate;
    std::cerr << "tracked " << audio_s << " s of audio in " << wall
              << " s (rt factor " << wall / audio_s << ")\n";
    return kExitOk;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Runs a one-speaker scene and a noise-only scene through the beamformer and
/// reports the median top-observation energy of each, plus a threshold that
/// puts the speech median at twice the 50% point.
int cmd_calibrate(const std::string& config_path, std::optional<std::uint64_t> seed,
                  const std::string& out_path) {
    PipelineConfig cfg = load_config(config_path, seed, std::nullopt);

    SceneSpec speech;
    speech.duration_s = 6.0;
    speech.geometry = cfg.geometry;
    speech.snr_db = 7.0;
    speech.rt60 = 0.3;
    speech.seed = cfg.seed + 17;
    SourceSpec spk;
    spk.signal.type = SignalSpec::Type::PinkBursts;
    // Speaker at exactly 1.5 m from the array centroid, 30 degrees azimuth.
    const double ring = std::sqrt(1.5 * 1.5 - 0.25 * 0.25);
    spk.waypoints = {{0.0, {ring * std::cos(deg_to_rad(30.0)), ring * std::sin(deg_to_rad(30.0)),
                            0.25}}};
    speech.sources.push_back(spk);

    SceneSpec noise = speech;
    noise.sources.clear();
    noise.seed = cfg.seed + 18;

    auto top_energies = [&](const SceneSpec& scene, bool active_only,
                            std::vector<double>& out_energies) {
        SimulationResult sim = synthesize(scene);
        auto run = run_pipeline(cfg, sim.audio);
        for (const BeamformerOutput& o : run.observations) {
            if (o.observations.empty()) continue;
            if (active_only) {
                // Frame active in ground truth?
                std::size_t fi = 0;
                double best = 1e300;
                for (std::size_t i = 0; i < sim.truth.frame_times.size(); ++i) {
                    double dt = std::abs(sim.truth.frame_times[i] - o.t_seconds);
                    if (dt < best) {
                        best = dt;
                        fi = i;
                    }
                }
                bool active = false;
                for (const GroundTruthEntry& e : sim.truth.frames[fi]) active |= e.active;
                if (!active) continue;
            }
            out_energies.push_back(o.observations.front().energy);
        }
    };

    std::vector<double> speech_e, noise_e;
    top_energies(speech, true, speech_e);
    top_energies(noise, false, noise_e);

    json report = {{"median_speech_energy", median(speech_e)},
                   {"median_noise_energy", median(noise_e)},
                   {"suggested_energy_threshold", median(speech_e) / 2.0},
                   {"current_energy_threshold", cfg.tracker.energy_threshold}};
    std::ofstream file;
    std::ostream& out = open_output(file, out_path);
    out << report.dump(2) << "\n";
    return kExitOk;
}

int cmd_bench(const std::string& config_path, const std::string& input,
              std::optional<std::size_t> threads) {
    PipelineConfig cfg = load_config(config_path, std::nullopt, threads);
    std::vector<std::vector<double>> audio;
    if (!input.empty()) {
        audio = read_and_check_wav(input, cfg);
    } else {
        SceneSpec scene;
        scene.duration_s = 10.0;
        scene.geometry = cfg.geometry;
        scene.snr_db = 7.0;
        scene.rt60 = 0.3;
        SourceSpec spk;
        spk.waypoints = {{0.0, {1.2, 0.6, 0.3}}, {10.0, {-1.0, 0.9, 0.3}}};
        scene.sources.push_back(spk);
        audio = synthesize(scene).audio;
    }
    Pipeline pipeline(cfg);
    auto start = std::chrono::steady_clock::now();
    pipeline.process_channels(audio);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    double audio_s = static_cast<double>(audio[0].size()) / cfg.geometry.sample_rate;
    json report = {{"audio_s", audio_s},
                   {"wall_s", wall},
                   {"rt_factor", wall / audio_s},
                   {"frames", pipeline.frames_processed()},
                   {"threads", cfg.threads}};
    std::cout << report.dump(2) << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& traj_path, const std::string& truth_path,
             const std::string& out_path) {
    std::ifstream traj_in(traj_path);
    if (!traj_in) throw std::runtime_error("cannot open " + traj_path);
    std::ifstream truth_in(truth_path);
    if (!truth_in) throw std::runtime_error("cannot open " + truth_path);
    auto trajectory = read_jsonl<TrajectoryRecord>(
        traj_in, [](const json& j) { return trajectory_record_from_json(j); });
    auto truth = read_jsonl<TruthRecord>(
        truth_in, [](const json& j) { return truth_record_from_json(j); });
    EvalReport rep = evaluate(trajectory, truth);
    std::ofstream file;
    std::ostream& out = open_output(file, out_path);
    out << rep.to_json().dump(2) << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sound source localization and tracking for microphone arrays"};
    app.require_subcommand(1);

    std::string config_path, input, out_path, truth_path, format;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;

    auto* simulate = app.add_subcommand("simulate", "render a synthetic scene to WAV + truth");
    simulate->add_option("--input", input, "scene spec JSON")->required();
    simulate->add_option("--out", out_path, "output WAV path")->required();
    simulate->add_option("--truth", truth_path, "ground-truth JSONL path");
    simulate->add_option("--seed", seed, "override scene seed");
    simulate->add_option("--format", format, "wav32 (default) or wav16")
        ->check(CLI::IsMember({"wav32", "wav16"}));

    auto* localize = app.add_subcommand("localize", "emit per-frame beamformer observations");
    localize->add_option("--config", config_path, "pipeline config JSON");
    localize->add_option("--input", input, "multichannel WAV")->required();
    localize->add_option("--out", out_path, "observations JSONL ('-' = stdout)");
    localize->add_option("--seed", seed, "override config seed");
    localize->add_option("--threads", threads, "grid-scan worker threads");

    auto* track = app.add_subcommand("track", "emit tracked source trajectories");
    track->add_option("--config", config_path, "pipeline config JSON");
    track->add_option("--input", input, "multichannel WAV")->required();
    track->add_option("--out", out_path, "trajectory output ('-' = stdout)");
    track->add_option("--format", format, "jsonl (default) or csv")
        ->check(CLI::IsMember({"jsonl", "csv"}));
    track->add_option("--seed", seed, "override config seed");
    track->add_option("--threads", threads, "grid-scan worker threads");

    auto* calibrate = app.add_subcommand("calibrate", "suggest an energy threshold");
    calibrate->add_option("--config", config_path, "pipeline config JSON");
    calibrate->add_option("--seed", seed, "override config seed");
    calibrate->add_option("--out", out_path, "report JSON ('-' = stdout)");

    auto* bench = app.add_subcommand("bench", "measure the real-time factor");
    bench->add_option("--config", config_path, "pipeline config JSON");
    bench->add_option("--input", input, "multichannel WAV (default: built-in scene)");
    bench->add_option("--threads", threads, "grid-scan worker threads");

    auto* eval = app.add_subcommand("eval", "score a trajectory against ground truth");
    eval->add_option("--input", input, "trajectory JSONL")->required();
    eval->add_option("--truth", truth_path, "ground-truth JSONL")->required();
    eval->add_option("--out", out_path, "report JSON ('-' = stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed())
            return cmd_simulate(input, out_path, truth_path, seed,
                                format.empty() ? "wav32" : format);
        if (localize->parsed()) return cmd_localize(config_path, input, out_path, seed, threads);
        if (track->parsed())
            return cmd_track(config_path, input, out_path, format.empty() ? "jsonl" : format,
                             seed, threads);
        if (calibrate->parsed()) return cmd_calibrate(config_path, seed, out_path);
        if (bench->parsed()) return cmd_bench(config_path, input, threads);
        if (eval->parsed()) return cmd_eval(input, truth_path, out_path);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}
