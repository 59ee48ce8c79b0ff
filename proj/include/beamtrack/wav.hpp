#ifndef BEAMTRACK_WAV_HPP
#define BEAMTRACK_WAV_HPP

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "beamtrack/common.hpp"

// Minimal RIFF/WAVE support: PCM16 and IEEE float32, little-endian host.

namespace beamtrack {

enum class WavFormat { Pcm16, Float32 };

namespace detail {

inline void put_u32(std::ofstream& f, std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
}
inline void put_u16(std::ofstream& f, std::uint16_t v) {
    f.write(reinterpret_cast<const char*>(&v), 2);
}

} // namespace detail

inline void write_wav(const std::string& path, const std::vector<std::vector<double>>& channels,
                      double sample_rate, WavFormat format = WavFormat::Float32) {
    if (channels.empty()) throw InputError("write_wav: no channels");
    const std::size_t frames = channels[0].size();
    for (const auto& ch : channels)
        if (ch.size() != frames) throw InputError("write_wav: channel length mismatch");

    const std::uint16_t nch = static_cast<std::uint16_t>(channels.size());
    const std::uint16_t bytes_per_sample = format == WavFormat::Pcm16 ? 2 : 4;
    const std::uint32_t data_bytes =
        static_cast<std::uint32_t>(frames * nch * bytes_per_sample);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_wav: cannot open " + path);

    f.write("RIFF", 4);
    detail::put_u32(f, 36 + data_bytes);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    detail::put_u32(f, 16);
    detail::put_u16(f, format == WavFormat::Pcm16 ? 1 : 3);
    detail::put_u16(f, nch);
    detail::put_u32(f, static_cast<std::uint32_t>(sample_rate));
    detail::put_u32(f, static_cast<std::uint32_t>(sample_rate) * nch * bytes_per_sample);
    detail::put_u16(f, static_cast<std::uint16_t>(nch * bytes_per_sample));
    detail::put_u16(f, static_cast<std::uint16_t>(8 * bytes_per_sample));
    f.write("data", 4);
    detail::put_u32(f, data_bytes);

    if (format == WavFormat::Pcm16) {
        for (std::size_t i = 0; i < frames; ++i)
            for (std::size_t c = 0; c < nch; ++c) {
                double v = std::clamp(channels[c][i], -1.0, 1.0);
                std::int16_t s = static_cast<std::int16_t>(std::lround(v * 32767.0));
                f.write(reinterpret_cast<const char*>(&s), 2);
            }
    } else {
        for (std::size_t i = 0; i < frames; ++i)
            for (std::size_t c = 0; c < nch; ++c) {
                float s = static_cast<float>(channels[c][i]);
                f.write(reinterpret_cast<const char*>(&s), 4);
            }
    }
    if (!f) throw std::runtime_error("write_wav: write failed for " + path);
}

/// Streaming reader; frames are delivered in blocks so the pipeline never
/// holds the whole file.
class WavReader {
public:
    explicit WavReader(const std::string& path) : file_(path, std::ios::binary) {
        if (!file_) throw std::runtime_error("WavReader: cannot open " + path);
        char tag[4];
        std::uint32_t size;
        read_raw(tag, 4);
        if (std::memcmp(tag, "RIFF", 4) != 0) throw InputError("WavReader: not a RIFF file");
        read_raw(&size, 4);
        read_raw(tag, 4);
        if (std::memcmp(tag, "WAVE", 4) != 0) throw InputError("WavReader: not a WAVE file");

        bool have_fmt = false;
        while (true) {
            if (!file_.read(tag, 4)) throw InputError("WavReader: no data chunk");
            read_raw(&size, 4);
            if (std::memcmp(tag, "fmt ", 4) == 0) {
                std::vector<char> fmt(size);
                read_raw(fmt.data(), size);
                if (size < 16) throw InputError("WavReader: short fmt chunk");
                std::uint16_t code, nch, bits;
                std::uint32_t rate;
                std::memcpy(&code, fmt.data() + 0, 2);
                std::memcpy(&nch, fmt.data() + 2, 2);
                std::memcpy(&rate, fmt.data() + 4, 4);
                std::memcpy(&bits, fmt.data() + 14, 2);
                if (code == 1 && bits == 16)
                    format_ = WavFormat::Pcm16;
                else if (code == 3 && bits == 32)
                    format_ = WavFormat::Float32;
                else
                    throw InputError("WavReader: unsupported format (need PCM16 or float32)");
                num_channels_ = nch;
                sample_rate_ = rate;
                have_fmt = true;
            } else if (std::memcmp(tag, "data", 4) == 0) {
                if (!have_fmt) throw InputError("WavReader: data before fmt");
                data_bytes_ = size;
                break;
            } else {
                file_.seekg(size + (size & 1), std::ios::cur);
            }
        }
        const std::size_t bps = format_ == WavFormat::Pcm16 ? 2 : 4;
        num_frames_ = data_bytes_ / (bps * num_channels_);
    }

    std::size_t num_channels() const { return num_channels_; }
    double sample_rate() const { return sample_rate_; }
    std::size_t num_frames() const { return num_frames_; }

    /// Reads up to max_frames into `dest` (interleaved doubles); returns the
    /// frame count actually read, 0 at end of stream.
    std::size_t read(std::vector<double>& dest, std::size_t max_frames) {
        const std::size_t remaining = num_frames_ - frames_read_;
        const std::size_t want = std::min(max_frames, remaining);
        dest.resize(want * num_channels_);
        if (want == 0) return 0;
        if (format_ == WavFormat::Pcm16) {
            std::vector<std::int16_t> buf(want * num_channels_);
            read_raw(buf.data(), buf.size() * 2);
            for (std::size_t i = 0; i < buf.size(); ++i)
                dest[i] = static_cast<double>(buf[i]) / 32768.0;
        } else {
            std::vector<float> buf(want * num_channels_);
            read_raw(buf.data(), buf.size() * 4);
            for (std::size_t i = 0; i < buf.size(); ++i) dest[i] = buf[i];
        }
        frames_read_ += want;
        return want;
    }

private:
    void read_raw(void* dst, std::size_t bytes) {
        if (!file_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(bytes)))
            throw InputError("WavReader: truncated file");
    }

    std::ifstream file_;
    WavFormat format_ = WavFormat::Float32;
    std::size_t num_channels_ = 0;
    double sample_rate_ = 0.0;
    std::uint32_t data_bytes_ = 0;
    std::size_t num_frames_ = 0;
    std::size_t frames_read_ = 0;
};

} // namespace beamtrack

#endif // BEAMTRACK_WAV_HPP
