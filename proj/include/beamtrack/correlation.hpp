#ifndef BEAMTRACK_CORRELATION_HPP
#define BEAMTRACK_CORRELATION_HPP

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "beamtrack/fft.hpp"
#include "beamtrack/geometry.hpp"
#include "beamtrack/spectral.hpp"

namespace beamtrack {

/// Ring buffer of weighted, magnitude-normalized cross-spectra for every
/// microphone pair, kept over a short averaging window (4 frames = 40 ms).
class CrossSpectrumAccumulator {
public:
    CrossSpectrumAccumulator(std::size_t num_mics, std::size_t num_bins,
                             std::size_t window_frames = 4)
        : pairs_(enumerate_pairs(num_mics)),
          num_bins_(num_bins),
          ring_(window_frames,
                std::vector<std::complex<double>>(pairs_.size() * num_bins, {0.0, 0.0})) {}

    std::size_t num_pairs() const { return pairs_.size(); }
    std::size_t num_bins() const { return num_bins_; }
    std::size_t frames_accumulated() const { return count_; }
    const std::vector<MicPair>& pairs() const { return pairs_; }

    /// Pushes zeta_i*X_i * zeta_j*conj(X_j) / (|X_i||X_j|) for every pair.
    /// Bins where either magnitude is zero contribute nothing.
    void accumulate(const SpectralFrame& frame, const ReliabilityWeights& weights) {
        if (frame.num_bins() != num_bins_)
            throw InputError("accumulate: bin count mismatch");
        auto& slot = ring_[count_ % ring_.size()];
        std::size_t out = 0;
        // Normalize each factor to unit magnitude first; the ratio of raw
        // products would underflow for very small spectra.
        for (const MicPair& pr : pairs_) {
            const auto& xi = frame.spectra[pr.i];
            const auto& xj = frame.spectra[pr.j];
            const auto& zi = weights.zeta[pr.i];
            const auto& zj = weights.zeta[pr.j];
            for (std::size_t k = 0; k < num_bins_; ++k, ++out) {
                double mi = std::abs(xi[k]);
                double mj = std::abs(xj[k]);
                if (mi == 0.0 || mj == 0.0) {
                    slot[out] = {0.0, 0.0};
                    continue;
                }
                std::complex<double> ui = xi[k] / mi;
                std::complex<double> uj = xj[k] / mj;
                slot[out] = zi[k] * zj[k] * ui * std::conj(uj);
            }
        }
        ++count_;
    }

    /// Arithmetic mean over the frames currently held (up to the window size).
    std::vector<std::complex<double>> averaged() const {
        if (count_ == 0)
            throw std::logic_error("CrossSpectrumAccumulator: no frames accumulated");
        const std::size_t held = count_ < ring_.size() ? count_ : ring_.size();
        std::vector<std::complex<double>> avg(pairs_.size() * num_bins_, {0.0, 0.0});
        for (std::size_t f = 0; f < held; ++f)
            for (std::size_t n = 0; n < avg.size(); ++n) avg[n] += ring_[f][n];
        const double scale = 1.0 / static_cast<double>(held);
        for (auto& v : avg) v *= scale;
        return avg;
    }

private:
    std::vector<MicPair> pairs_;
    std::size_t num_bins_;
    std::vector<std::vector<std::complex<double>>> ring_;
    std::size_t count_ = 0;
};

/// Real cross-correlation per pair, lag in [0, L), scaled by 1/L so a fully
/// coherent pair peaks at 1.
struct CorrelationSet {
    std::vector<std::vector<double>> r; // [pair][lag]

    std::size_t num_pairs() const { return r.size(); }
    std::size_t length() const { return r.empty() ? 0 : r[0].size(); }
};

/// Inverse transform of the averaged cross-spectra. The one-sided input is
/// expanded Hermitially by the c2r transform, which realizes the full
/// two-sided sum over L bins.
inline CorrelationSet correlations(const CrossSpectrumAccumulator& acc, const FftPlan& plan) {
    if (plan.num_bins() != acc.num_bins())
        throw std::invalid_argument("correlations: plan size does not match accumulator");
    const auto avg = acc.averaged();
    const std::size_t L = plan.size();
    CorrelationSet set;
    set.r.assign(acc.num_pairs(), std::vector<double>(L, 0.0));
    const double scale = 1.0 / static_cast<double>(L);
    for (std::size_t p = 0; p < acc.num_pairs(); ++p) {
        plan.inverse(avg.data() + p * acc.num_bins(), set.r[p].data());
        for (double& v : set.r[p]) v *= scale;
    }
    return set;
}

} // namespace beamtrack

#endif // BEAMTRACK_CORRELATION_HPP
