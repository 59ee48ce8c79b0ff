#ifndef BEAMTRACK_SIMULATOR_HPP
#define BEAMTRACK_SIMULATOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "beamtrack/common.hpp"
#include "beamtrack/geometry.hpp"
#include "beamtrack/random.hpp"

namespace beamtrack {

namespace detail {

inline constexpr int kSincHalfTaps = 15; // 31-tap interpolator

/// Blackman window over [-16, 16], zero at the ends.
inline double blackman(double t) {
    return 0.42 + 0.5 * std::cos(kPi * t / 16.0) + 0.08 * std::cos(kPi * t / 8.0);
}

inline double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    double px = kPi * x;
    return std::sin(px) / px;
}

/// Band-limited read of x at fractional time t; out-of-range samples are zero.
inline double sinc_interp(const std::vector<double>& x, double t) {
    const double tf = std::floor(t);
    const double frac = t - tf;
    const long ti = static_cast<long>(tf);
    double acc = 0.0;
    for (int k = -kSincHalfTaps; k <= kSincHalfTaps; ++k) {
        long idx = ti - k;
        if (idx < 0 || idx >= static_cast<long>(x.size())) continue;
        double arg = frac + static_cast<double>(k);
        acc += x[static_cast<std::size_t>(idx)] * sinc(arg) * blackman(arg);
    }
    return acc;
}

} // namespace detail

/// Delays a signal by a (possibly fractional) number of samples using a
/// 31-tap Blackman-windowed sinc kernel centered on the target instant, so
/// integer delays reduce to exact shifts.
inline std::vector<double> fractional_delay(const std::vector<double>& signal, double delay) {
    if (std::abs(delay) >= static_cast<double>(signal.size()))
        throw std::invalid_argument("fractional_delay: |delay| must be below the signal length");
    std::vector<double> out(signal.size(), 0.0);
    for (std::size_t n = 0; n < signal.size(); ++n)
        out[n] = detail::sinc_interp(signal, static_cast<double>(n) - delay);
    return out;
}

struct SignalSpec {
    enum class Type { PinkBursts, Pink, White, Tone };
    Type type = Type::PinkBursts;
    double burst_period_s = 2.0;
    double burst_duty = 0.75;
    double ramp_s = 0.02;
    double tone_hz = 440.0;
    double hangover_s = 0.3; // pause length below which the source still counts as active
};

struct SourceSpec {
    SignalSpec signal;
    std::vector<std::pair<double, Vec3>> waypoints; // (time s, position m), ascending
    double gain = 1.0;
};

struct SceneSpec {
    double duration_s = 10.0;
    MicArrayGeometry geometry = default_circular_array();
    std::vector<SourceSpec> sources;
    double snr_db = 7.0;       // array-average SNR; >= 200 disables noise
    double rt60 = 0.0;         // seconds, 0 = anechoic
    double reverb_gain = 0.35; // diffuse tail level relative to the dry source
    std::uint64_t seed = 0;
    std::size_t hop = 512; // position/ground-truth update interval
    std::size_t window = 1024;

    void validate() const {
        if (duration_s <= 0.0) throw ConfigError("scene: duration must be positive");
        geometry.validate();
        if (hop == 0 || window < hop) throw ConfigError("scene: bad hop/window");
        for (const SourceSpec& s : sources) {
            if (s.waypoints.empty()) throw ConfigError("scene: source without waypoints");
            for (std::size_t w = 1; w < s.waypoints.size(); ++w)
                if (s.waypoints[w].first <= s.waypoints[w - 1].first)
                    throw ConfigError("scene: waypoint times must be ascending");
        }
    }
};

struct GroundTruthEntry {
    std::size_t source = 0; // index into SceneSpec::sources
    Vec3 position;
    bool active = false;
};

struct GroundTruth {
    std::vector<double> frame_times;                  // analysis-frame centers
    std::vector<std::vector<GroundTruthEntry>> frames; // one list per frame
};

struct SimulationResult {
    std::vector<std::vector<double>> audio; // [channel][sample]
    GroundTruth truth;
    bool clipped = false;
    double clip_scale = 1.0;
};

namespace detail {

inline Vec3 position_at(const SourceSpec& src, double t) {
    const auto& wp = src.waypoints;
    if (t <= wp.front().first) return wp.front().second;
    if (t >= wp.back().first) return wp.back().second;
    for (std::size_t k = 1; k < wp.size(); ++k)
        if (t <= wp[k].first) {
            double f = (t - wp[k - 1].first) / (wp[k].first - wp[k - 1].first);
            return wp[k - 1].second + f * (wp[k].second - wp[k - 1].second);
        }
    return wp.back().second;
}

/// Burst amplitude envelope with raised-cosine edges; continuous signals
/// return 1 everywhere.
inline double envelope_at(const SignalSpec& sig, double t) {
    if (sig.type != SignalSpec::Type::PinkBursts) return 1.0;
    const double period = sig.burst_period_s;
    const double on = sig.burst_duty * period;
    double phase = std::fmod(t, period);
    if (phase < 0.0) phase += period;
    if (phase >= on) return 0.0;
    double ramp = std::min(sig.ramp_s, on / 2.0);
    if (ramp <= 0.0) return 1.0;
    if (phase < ramp) return 0.5 - 0.5 * std::cos(kPi * phase / ramp);
    if (phase > on - ramp) return 0.5 - 0.5 * std::cos(kPi * (on - phase) / ramp);
    return 1.0;
}

/// Ground-truth activity: on whenever the envelope is up, with a hangover so
/// a short mid-utterance pause does not flip the flag (VAD-style hold).
inline bool active_at(const SignalSpec& sig, double t) {
    if (envelope_at(sig, t) > 0.5) return true;
    const int steps = 6;
    for (int k = 1; k <= steps; ++k) {
        double back = t - sig.hangover_s * static_cast<double>(k) / steps;
        if (back < 0.0) break;
        if (envelope_at(sig, back) > 0.5) return true;
    }
    return false;
}

/// Pink noise (Kellet's filter bank over white noise), normalized to unit RMS.
inline std::vector<double> pink_noise(std::size_t n, Rng& rng) {
    std::vector<double> out(n);
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double w = rng.gaussian();
        b0 = 0.99886 * b0 + w * 0.0555179;
        b1 = 0.99332 * b1 + w * 0.0750759;
        b2 = 0.96900 * b2 + w * 0.1538520;
        b3 = 0.86650 * b3 + w * 0.3104856;
        b4 = 0.55000 * b4 + w * 0.5329522;
        b5 = -0.7616 * b5 - w * 0.0168980;
        out[i] = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
        b6 = w * 0.115926;
    }
    double ms = 0.0;
    for (double v : out) ms += v * v;
    ms /= static_cast<double>(n);
    if (ms > 0.0) {
        double s = 1.0 / std::sqrt(ms);
        for (double& v : out) v *= s;
    }
    return out;
}

inline std::vector<double> source_signal(const SourceSpec& src, std::size_t n, double fs,
                                         std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> s;
    switch (src.signal.type) {
        case SignalSpec::Type::Pink:
        case SignalSpec::Type::PinkBursts:
            s = pink_noise(n, rng);
            break;
        case SignalSpec::Type::White:
            s.resize(n);
            for (double& v : s) v = rng.gaussian();
            break;
        case SignalSpec::Type::Tone:
            s.resize(n);
            for (std::size_t i = 0; i < n; ++i)
                s[i] = std::sqrt(2.0) *
                       std::sin(2.0 * kPi * src.signal.tone_hz * static_cast<double>(i) / fs);
            break;
    }
    for (std::size_t i = 0; i < n; ++i)
        s[i] *= src.gain * envelope_at(src.signal, static_cast<double>(i) / fs);
    return s;
}

struct VelvetTap {
    std::size_t delay;
    double amp; // signed
};

/// Sparse velvet-noise impulse response with an exponential envelope decaying
/// 60 dB over rt60, starting after a short pre-delay. Normalized to unit
/// energy before the caller applies its gain.
inline std::vector<VelvetTap> velvet_ir(double rt60, double fs, Rng& rng,
                                        double density_hz = 500.0, double pre_delay_s = 0.01) {
    std::vector<VelvetTap> taps;
    const double grid = fs / density_hz;
    const std::size_t count = static_cast<std::size_t>(rt60 * density_hz);
    const double decay = 3.0 * std::log(10.0) / rt60; // amplitude rate: 60 dB over rt60
    double energy = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
        double t = (static_cast<double>(k) + rng.uniform()) * grid;
        double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        double amp = sign * std::exp(-decay * t / fs);
        taps.push_back({static_cast<std::size_t>(pre_delay_s * fs + t), amp});
        energy += amp * amp;
    }
    if (energy > 0.0) {
        double s = 1.0 / std::sqrt(energy);
        for (VelvetTap& tp : taps) tp.amp *= s;
    }
    return taps;
}

} // namespace detail

/// Renders the scene: per source and microphone a propagation-delayed
/// (windowed-sinc, delay interpolated sample-by-sample between hop
/// boundaries) and 1/r-attenuated copy, an optional diffuse velvet tail per
/// channel, and per-channel white noise scaled to the requested array SNR.
/// Deterministic for a given spec and seed.
inline SimulationResult synthesize(const SceneSpec& scene) {
    scene.validate();
    const double fs = scene.geometry.sample_rate;
    const std::size_t n = static_cast<std::size_t>(scene.duration_s * fs);
    const std::size_t channels = scene.geometry.num_mics();
    const double spm = scene.geometry.samples_per_meter();

    SimulationResult res;
    res.audio.assign(channels, std::vector<double>(n, 0.0));

    for (std::size_t si = 0; si < scene.sources.size(); ++si) {
        const SourceSpec& src = scene.sources[si];
        const std::vector<double> dry =
            detail::source_signal(src, n, fs, split_seed(scene.seed, si));

        // Hop-boundary positions, then per-sample delay/gain interpolation.
        const std::size_t blocks = (n + scene.hop - 1) / scene.hop;
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const Vec3 mic = scene.geometry.mic_positions[ch];
            auto delay_gain = [&](double t_samples) {
                Vec3 p = detail::position_at(src, t_samples / fs);
                double r = (p - mic).norm();
                return std::pair<double, double>{spm * r, 1.0 / std::max(r, 0.1)};
            };
            auto [d0, g0] = delay_gain(0.0);
            std::vector<double>& out = res.audio[ch];
            for (std::size_t b = 0; b < blocks; ++b) {
                const std::size_t begin = b * scene.hop;
                const std::size_t end = std::min(begin + scene.hop, n);
                auto [d1, g1] = delay_gain(static_cast<double>(end));
                const double span = static_cast<double>(end - begin);
                for (std::size_t i = begin; i < end; ++i) {
                    double f = static_cast<double>(i - begin) / span;
                    double d = d0 + f * (d1 - d0);
                    double g = g0 + f * (g1 - g0);
                    out[i] += g * detail::sinc_interp(dry, static_cast<double>(i) - d);
                }
                d0 = d1;
                g0 = g1;
            }
        }

        if (scene.rt60 > 0.0 && scene.reverb_gain > 0.0) {
            for (std::size_t ch = 0; ch < channels; ++ch) {
                Rng vr(split_seed(scene.seed, 10000 + si * 64 + ch));
                const auto taps = detail::velvet_ir(scene.rt60, fs, vr);
                std::vector<double>& out = res.audio[ch];
                for (const detail::VelvetTap& tap : taps) {
                    const double a = scene.reverb_gain * tap.amp;
                    for (std::size_t i = tap.delay; i < n; ++i)
                        out[i] += a * dry[i - tap.delay];
                }
            }
        }
    }

    // Noise at the requested array-average SNR.
    if (scene.snr_db < 200.0) {
        double sig_power = 0.0;
        for (const auto& chan : res.audio)
            for (double v : chan) sig_power += v * v;
        sig_power /= static_cast<double>(n * channels);
        double noise_power = scene.sources.empty()
                                 ? 0.05 * 0.05
                                 : sig_power / std::pow(10.0, scene.snr_db / 10.0);
        const double std_dev = std::sqrt(noise_power);
        for (std::size_t ch = 0; ch < channels; ++ch) {
            Rng nr(split_seed(scene.seed, 1000 + ch));
            for (double& v : res.audio[ch]) v += std_dev * nr.gaussian();
        }
    }

    // Keep within [-1, 1] for WAV output.
    double peak = 0.0;
    for (const auto& chan : res.audio)
        for (double v : chan) peak = std::max(peak, std::abs(v));
    if (peak > 0.999) {
        res.clipped = true;
        res.clip_scale = 0.999 / peak;
        for (auto& chan : res.audio)
            for (double& v : chan) v *= res.clip_scale;
    }

    // Ground truth on the analysis-frame grid (frame centers).
    const std::size_t num_frames =
        n >= scene.window ? (n - scene.window) / scene.hop + 1 : 0;
    for (std::size_t fidx = 0; fidx < num_frames; ++fidx) {
        double t = (static_cast<double>(fidx * scene.hop) +
                    static_cast<double>(scene.window) / 2.0) /
                   fs;
        res.truth.frame_times.push_back(t);
        std::vector<GroundTruthEntry> entries;
        for (std::size_t si = 0; si < scene.sources.size(); ++si) {
            const SourceSpec& src = scene.sources[si];
            entries.push_back(
                {si, detail::position_at(src, t), detail::active_at(src.signal, t)});
        }
        res.truth.frames.push_back(std::move(entries));
    }
    return res;
}

} // namespace beamtrack

#endif // BEAMTRACK_SIMULATOR_HPP
