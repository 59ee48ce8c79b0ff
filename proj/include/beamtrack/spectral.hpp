#ifndef BEAMTRACK_SPECTRAL_HPP
#define BEAMTRACK_SPECTRAL_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "beamtrack/common.hpp"
#include "beamtrack/fft.hpp"

namespace beamtrack {

/// Noise-floor tracking constants. The noise recursion only runs while the
/// frame power stays within `kappa` times the tracked minimum of the smoothed
/// power, so the estimate adapts in low-energy periods and freezes during
/// speech. The minimum is tracked over two staggered windows of
/// `window_frames` frames.
struct McraParams {
    double alpha_noise = 0.05;  // recursive-average rate for sigma^2
    double alpha_smooth = 0.8;  // power smoothing for the minima tracker
    double kappa = 5.0;         // update gate relative to the minimum
    std::size_t window_frames = 150;
};

struct SpectralParams {
    std::size_t window = 1024;
    std::size_t hop = 512;
    double alpha_dd = 0.97; // decision-directed smoothing
    double rt60 = 0.3;      // seconds; <= 0 means no carry-over between frames
    double delta_srr = 10.0;
    McraParams mcra;

    std::size_t num_bins() const { return window / 2 + 1; }

    /// Per-frame power decay matching an RT60: 10^(-6*hop/(rt60*fs)).
    double reverb_gamma(double sample_rate) const {
        if (rt60 <= 0.0) return 0.0;
        return std::pow(10.0, -6.0 * static_cast<double>(hop) / (rt60 * sample_rate));
    }

    void validate() const {
        if (window < 4 || window % 2 != 0)
            throw ConfigError("spectral: window must be even and >= 4");
        if (hop == 0 || hop > window) throw ConfigError("spectral: hop must be in (0, window]");
        if (alpha_dd < 0.0 || alpha_dd >= 1.0)
            throw ConfigError("spectral: alpha_dd must be in [0, 1)");
        if (delta_srr <= 0.0) throw ConfigError("spectral: delta_srr must be positive");
        if (mcra.alpha_noise <= 0.0 || mcra.alpha_noise > 1.0 || mcra.alpha_smooth < 0.0 ||
            mcra.alpha_smooth >= 1.0 || mcra.kappa <= 0.0 || mcra.window_frames == 0)
            throw ConfigError("spectral: bad mcra parameters");
    }
};

/// One-sided spectra of a single analysis window, all channels.
struct SpectralFrame {
    std::uint64_t frame_index = 0;
    std::vector<std::vector<std::complex<double>>> spectra; // [channel][bin]

    std::size_t num_channels() const { return spectra.size(); }
    std::size_t num_bins() const { return spectra.empty() ? 0 : spectra[0].size(); }
};

struct NoiseState {
    std::vector<std::vector<double>> sigma2;       // noise power estimate
    std::vector<std::vector<double>> smoothed;     // smoothed frame power
    std::vector<std::vector<double>> min_current;  // window minimum in use
    std::vector<std::vector<double>> min_pending;  // staggered next-window minimum
    std::uint64_t frames_seen = 0;

    NoiseState() = default;
    NoiseState(std::size_t channels, std::size_t bins)
        : sigma2(channels, std::vector<double>(bins, 0.0)),
          smoothed(channels, std::vector<double>(bins, 0.0)),
          min_current(channels, std::vector<double>(bins, 0.0)),
          min_pending(channels, std::vector<double>(bins, 0.0)) {}
};

struct ReverbState {
    std::vector<std::vector<double>> lambda; // reverberation power, starts at zero
    double gamma = 0.0;                      // per-frame decay, [0, 1)
    double delta_srr = 10.0;                 // signal-to-reverberant ratio

    ReverbState() = default;
    ReverbState(std::size_t channels, std::size_t bins, double gamma_, double delta_srr_)
        : lambda(channels, std::vector<double>(bins, 0.0)), gamma(gamma_), delta_srr(delta_srr_) {}
};

struct SnrState {
    std::vector<std::vector<double>> prev_clean_power; // |zeta*X|^2 of previous frame
    double alpha_dd = 0.97;

    SnrState() = default;
    SnrState(std::size_t channels, std::size_t bins, double alpha_dd_)
        : prev_clean_power(channels, std::vector<double>(bins, 0.0)), alpha_dd(alpha_dd_) {}
};

struct ReliabilityWeights {
    std::vector<std::vector<double>> zeta; // [channel][bin], each in [0, 1]
};

/// Windowed one-sided DFT of one analysis block per channel.
class StftAnalyzer {
public:
    StftAnalyzer(std::size_t num_channels, std::size_t window)
        : num_channels_(num_channels), plan_(window), window_fn_(window) {
        // Periodic Hann so half-overlapped windows sum to a constant.
        for (std::size_t n = 0; n < window; ++n)
            window_fn_[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(n) /
                                                 static_cast<double>(window));
    }

    std::size_t window() const { return plan_.size(); }
    std::size_t num_bins() const { return plan_.num_bins(); }
    std::size_t num_channels() const { return num_channels_; }

    SpectralFrame stft_frame(const std::vector<std::vector<double>>& channel_windows,
                             std::uint64_t frame_index) const {
        if (channel_windows.size() != num_channels_)
            throw InputError("stft_frame: channel count mismatch");
        SpectralFrame frame;
        frame.frame_index = frame_index;
        frame.spectra.resize(num_channels_);
        std::vector<double> buf(plan_.size());
        for (std::size_t ch = 0; ch < num_channels_; ++ch) {
            if (channel_windows[ch].size() != plan_.size())
                throw InputError("stft_frame: window length mismatch");
            for (std::size_t n = 0; n < plan_.size(); ++n)
                buf[n] = channel_windows[ch][n] * window_fn_[n];
            frame.spectra[ch].resize(plan_.num_bins());
            plan_.forward(buf.data(), frame.spectra[ch].data());
        }
        return frame;
    }

    const std::vector<double>& window_function() const { return window_fn_; }

private:
    std::size_t num_channels_;
    FftPlan plan_;
    std::vector<double> window_fn_;
};

/// Minima-gated recursive noise average. The first frame seeds the estimate
/// with the observed spectrum.
inline void update_noise(NoiseState& state, const SpectralFrame& frame, const McraParams& p) {
    const std::size_t channels = frame.num_channels();
    const std::size_t bins = frame.num_bins();
    if (state.frames_seen == 0) {
        state = NoiseState(channels, bins);
        for (std::size_t ch = 0; ch < channels; ++ch)
            for (std::size_t k = 0; k < bins; ++k) {
                double power = std::norm(frame.spectra[ch][k]);
                state.sigma2[ch][k] = power;
                state.smoothed[ch][k] = power;
                state.min_current[ch][k] = power;
                state.min_pending[ch][k] = power;
            }
        state.frames_seen = 1;
        return;
    }
    const bool reset = (state.frames_seen % p.window_frames) == 0;
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t k = 0; k < bins; ++k) {
            double power = std::norm(frame.spectra[ch][k]);
            double s = p.alpha_smooth * state.smoothed[ch][k] + (1.0 - p.alpha_smooth) * power;
            state.smoothed[ch][k] = s;
            if (reset) {
                state.min_current[ch][k] = std::min(state.min_pending[ch][k], s);
                state.min_pending[ch][k] = s;
            } else {
                state.min_current[ch][k] = std::min(state.min_current[ch][k], s);
                state.min_pending[ch][k] = std::min(state.min_pending[ch][k], s);
            }
            // Gate on both the instantaneous and the smoothed power: the raw
            // test freezes the estimate at burst onsets before the smoother
            // reacts, the smoothed test keeps sustained speech from leaking
            // in through its low-power fluctuations.
            const double gate = p.kappa * state.min_current[ch][k];
            if (power <= gate && s <= gate)
                state.sigma2[ch][k] =
                    (1.0 - p.alpha_noise) * state.sigma2[ch][k] + p.alpha_noise * power;
        }
    }
    ++state.frames_seen;
}

/// Exponential-decay reverberation model, fed by the previous frame's
/// weighted spectrum. Masks bins right after loud content.
inline void update_reverb(ReverbState& state, const ReliabilityWeights& prev_weights,
                          const SpectralFrame& prev_frame) {
    const double g = state.gamma;
    const double inv_delta = 1.0 / state.delta_srr;
    for (std::size_t ch = 0; ch < state.lambda.size(); ++ch)
        for (std::size_t k = 0; k < state.lambda[ch].size(); ++k) {
            double z = prev_weights.zeta[ch][k];
            double clean = z * z * std::norm(prev_frame.spectra[ch][k]);
            state.lambda[ch][k] = g * state.lambda[ch][k] + (1.0 - g) * inv_delta * clean;
        }
}

/// Decision-directed a priori SNR against the combined noise floor
/// sigma^2 + lambda.
inline std::vector<std::vector<double>> a_priori_snr(const SnrState& state,
                                                     const NoiseState& noise,
                                                     const ReverbState& reverb,
                                                     const SpectralFrame& frame) {
    constexpr double kFloor = 1e-20;
    std::vector<std::vector<double>> xi(frame.num_channels(),
                                        std::vector<double>(frame.num_bins(), 0.0));
    for (std::size_t ch = 0; ch < frame.num_channels(); ++ch)
        for (std::size_t k = 0; k < frame.num_bins(); ++k) {
            double den = std::max(noise.sigma2[ch][k] + reverb.lambda[ch][k], kFloor);
            double posterior = std::norm(frame.spectra[ch][k]) / den;
            xi[ch][k] = state.alpha_dd * state.prev_clean_power[ch][k] / den +
                        (1.0 - state.alpha_dd) * std::max(posterior - 1.0, 0.0);
        }
    return xi;
}

/// Wiener gain zeta = xi / (xi + 1).
inline ReliabilityWeights reliability_weights(const std::vector<std::vector<double>>& xi) {
    ReliabilityWeights w;
    w.zeta.resize(xi.size());
    for (std::size_t ch = 0; ch < xi.size(); ++ch) {
        w.zeta[ch].resize(xi[ch].size());
        for (std::size_t k = 0; k < xi[ch].size(); ++k)
            w.zeta[ch][k] = xi[ch][k] / (xi[ch][k] + 1.0);
    }
    return w;
}

inline void store_clean_power(SnrState& state, const ReliabilityWeights& weights,
                              const SpectralFrame& frame) {
    for (std::size_t ch = 0; ch < frame.num_channels(); ++ch)
        for (std::size_t k = 0; k < frame.num_bins(); ++k) {
            double z = weights.zeta[ch][k];
            state.prev_clean_power[ch][k] = z * z * std::norm(frame.spectra[ch][k]);
        }
}

/// Per-frame frontend: STFT, noise and reverberation tracking, reliability
/// weights. Frames must be fed in temporal order.
class SpectralFrontend {
public:
    SpectralFrontend(std::size_t num_channels, const SpectralParams& params, double sample_rate)
        : params_(params),
          analyzer_(num_channels, params.window),
          noise_(num_channels, params.num_bins()),
          reverb_(num_channels, params.num_bins(), params.reverb_gamma(sample_rate),
                  params.delta_srr),
          snr_(num_channels, params.num_bins(), params.alpha_dd) {
        params.validate();
        noise_.frames_seen = 0;
    }

    struct Output {
        SpectralFrame frame;
        ReliabilityWeights weights;
    };

    Output process(const std::vector<std::vector<double>>& channel_windows) {
        Output out;
        out.frame = analyzer_.stft_frame(channel_windows, next_frame_);
        update_noise(noise_, out.frame, params_.mcra);
        if (next_frame_ > 0) update_reverb(reverb_, prev_weights_, prev_frame_);
        auto xi = a_priori_snr(snr_, noise_, reverb_, out.frame);
        out.weights = reliability_weights(xi);
        store_clean_power(snr_, out.weights, out.frame);
        prev_frame_ = out.frame;
        prev_weights_ = out.weights;
        ++next_frame_;
        return out;
    }

    const StftAnalyzer& analyzer() const { return analyzer_; }
    const NoiseState& noise() const { return noise_; }
    const ReverbState& reverb() const { return reverb_; }

private:
    SpectralParams params_;
    StftAnalyzer analyzer_;
    NoiseState noise_;
    ReverbState reverb_;
    SnrState snr_;
    SpectralFrame prev_frame_;
    ReliabilityWeights prev_weights_;
    std::uint64_t next_frame_ = 0;
};

} // namespace beamtrack

#endif // BEAMTRACK_SPECTRAL_HPP
