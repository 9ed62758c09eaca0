#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sasvfuse/detail/binary_io.hpp"
#include "sasvfuse/detail/file_io.hpp"
#include "sasvfuse/error.hpp"

namespace sasvfuse {

struct Waveform {
    std::vector<double> samples;  ///< in [-1, 1]
    std::uint32_t sample_rate = 16000;

    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
    bool operator==(const Waveform&) const = default;
};

enum class WavEncoding { Pcm16, Float32 };

/// RIFF/WAVE reader: PCM 16-bit or IEEE float 32-bit; only the first channel is kept.
inline Waveform read_wav(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "vad");
    auto tag = [&](const char* what) {
        std::string t(4, '\0');
        for (auto& c : t) c = static_cast<char>(r.u8(what));
        return t;
    };
    if (tag("RIFF tag") != "RIFF") throw LoadError("vad", "not a RIFF file");
    r.u32("RIFF size");
    if (tag("WAVE tag") != "WAVE") throw LoadError("vad", "RIFF file is not WAVE");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    while (!r.at_end()) {
        const std::string id = tag("chunk id");
        const std::uint32_t size = r.u32("chunk size");
        if (id == "fmt ") {
            if (size < 16) throw LoadError("vad", "fmt chunk too short (" + std::to_string(size) + " bytes)");
            format = r.u16("audio format");
            channels = r.u16("channel count");
            rate = r.u32("sample rate");
            r.u32("byte rate");
            r.u16("block align");
            bits = r.u16("bits per sample");
            if (format == 0xFFFE && size >= 40) {  // WAVE_FORMAT_EXTENSIBLE: subformat GUID starts with the tag
                r.u16("cb size");
                r.u16("valid bits");
                r.u32("channel mask");
                format = r.u16("subformat");
                r.bytes(14, "subformat guid");
                r.bytes(size - 40, "fmt padding");
            } else {
                r.bytes(size - 16, "fmt extension");
            }
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw LoadError("vad", "data chunk before fmt chunk");
            if (channels == 0) throw LoadError("vad", "zero channels");
            if (rate == 0) throw LoadError("vad", "sample rate must be positive");
            const bool pcm16 = format == 1 && bits == 16;
            const bool f32 = format == 3 && bits == 32;
            if (!pcm16 && !f32) {
                throw LoadError("vad", "unsupported encoding (format tag " + std::to_string(format) + ", " +
                                           std::to_string(bits) + " bits); need PCM16 or float32");
            }
            if (r.remaining() < size) {
                throw LoadError("vad", "truncated data chunk: expected " + std::to_string(size) + " bytes, got " +
                                           std::to_string(r.remaining()));
            }
            const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
            if (size % frame_bytes != 0) {
                throw LoadError("vad", "data chunk size " + std::to_string(size) + " is not a multiple of the frame size " +
                                           std::to_string(frame_bytes));
            }
            Waveform w;
            w.sample_rate = rate;
            const std::size_t n = size / frame_bytes;
            w.samples.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                double v = 0;
                if (pcm16) {
                    v = static_cast<std::int16_t>(r.u16("sample")) / 32768.0;
                } else {
                    v = r.f32("sample");
                    if (!std::isfinite(v)) throw LoadError("vad", "non-finite sample at index " + std::to_string(i));
                }
                w.samples[i] = v;
                r.bytes(frame_bytes - bits / 8, "other channels");
            }
            return w;
        } else {
            if (r.remaining() < size) {
                throw LoadError("vad", "truncated '" + id + "' chunk: expected " + std::to_string(size) + " bytes, got " +
                                           std::to_string(r.remaining()));
            }
            r.bytes(size + (size & 1u), "chunk body");
        }
        if (size & 1u && (id == "fmt ") && !r.at_end()) r.u8("pad");
    }
    throw LoadError("vad", have_fmt ? "missing data chunk" : "missing fmt chunk");
}

inline std::vector<std::uint8_t> write_wav(const Waveform& w, WavEncoding enc = WavEncoding::Pcm16) {
    const std::uint16_t bits = enc == WavEncoding::Pcm16 ? 16 : 32;
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * (bits / 8));
    detail::ByteWriter out;
    out.bytes("RIFF");
    out.u32(36 + data_bytes);
    out.bytes("WAVE");
    out.bytes("fmt ");
    out.u32(16);
    out.u16(enc == WavEncoding::Pcm16 ? 1 : 3);
    out.u16(1);
    out.u32(w.sample_rate);
    out.u32(w.sample_rate * (bits / 8));
    out.u16(bits / 8);
    out.u16(bits);
    out.bytes("data");
    out.u32(data_bytes);
    for (double s : w.samples) {
        if (enc == WavEncoding::Pcm16) {
            const double q = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
            out.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0))));
        } else {
            out.f32(static_cast<float>(s));
        }
    }
    return out.buffer();
}

inline Waveform load_wav(const std::filesystem::path& path) {
    const auto bytes = detail::read_binary_file(path, "vad");
    try {
        return read_wav(bytes);
    } catch (const LoadError& e) {
        throw LoadError("vad", path.string() + ": " + e.what());
    }
}

inline void save_wav(const std::filesystem::path& path, const Waveform& w, WavEncoding enc = WavEncoding::Pcm16) {
    detail::write_file(path, write_wav(w, enc), "vad");
}

// ---------------------------------------------------------------------------
// Silence trimming

struct VadConfig {
    unsigned frame_ms = 25;
    unsigned hop_ms = 10;
    double threshold_db = -40.0;
    unsigned min_active_frames = 1;  ///< fewer active frames than this counts as all silent
};

inline void validate(const VadConfig& c) {
    if (c.frame_ms == 0 || c.hop_ms == 0) throw ConfigError("vad", "frame_ms and hop_ms must be positive");
    if (c.hop_ms > c.frame_ms) throw ConfigError("vad", "hop_ms must not exceed frame_ms");
    if (!std::isfinite(c.threshold_db)) throw ConfigError("vad", "threshold_db must be finite");
}

struct TrimResult {
    Waveform waveform;
    bool all_silent = false;
};

/// RMS level of samples in dBFS; -inf for digital silence.
inline double rms_dbfs(std::span<const double> x) {
    double acc = 0;
    for (double v : x) acc += v * v;
    if (x.empty() || acc == 0) return -std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(acc / static_cast<double>(x.size()));
}

namespace detail {

/// One pass: frame f covers [f*hop, f*hop+frame); an active frame contributes
/// its hop-aligned range [f*hop, (f+1)*hop), the last frame contributes up to
/// the end of the signal.
inline std::vector<double> trim_once(const std::vector<double>& x, std::size_t frame, std::size_t hop, double threshold,
                                     std::size_t& active) {
    active = 0;
    std::vector<double> out;
    if (x.empty()) return out;
    const std::size_t n_frames = x.size() <= frame ? 1 : 1 + (x.size() - frame + hop - 1) / hop;
    for (std::size_t f = 0; f < n_frames; ++f) {
        const std::size_t start = f * hop;
        const std::size_t end = std::min(x.size(), start + frame);
        const double level = rms_dbfs(std::span(x).subspan(start, end - start));
        if (level < threshold) continue;
        ++active;
        const std::size_t keep_end = f + 1 == n_frames ? x.size() : std::min(x.size(), start + hop);
        out.insert(out.end(), x.begin() + static_cast<std::ptrdiff_t>(start), x.begin() + static_cast<std::ptrdiff_t>(keep_end));
    }
    return out;
}

}  // namespace detail

/// Drops frames whose RMS level is below the threshold. Passes repeat until
/// nothing changes, so trimming a trimmed waveform is the identity.
inline TrimResult trim_silence(const Waveform& w, const VadConfig& cfg = {}) {
    validate(cfg);
    if (w.sample_rate == 0) throw ConfigError("vad", "sample rate must be positive");
    if (w.samples.empty()) throw ConfigError("vad", "cannot trim an empty waveform");
    const std::size_t frame = std::max<std::size_t>(1, std::size_t{w.sample_rate} * cfg.frame_ms / 1000);
    const std::size_t hop = std::max<std::size_t>(1, std::size_t{w.sample_rate} * cfg.hop_ms / 1000);
    TrimResult result;
    result.waveform.sample_rate = w.sample_rate;
    std::vector<double> cur = w.samples;
    for (;;) {
        std::size_t active = 0;
        auto next = detail::trim_once(cur, frame, hop, cfg.threshold_db, active);
        if (active < std::max<unsigned>(1, cfg.min_active_frames) || next.empty()) {
            result.all_silent = true;
            return result;
        }
        if (next.size() == cur.size()) break;
        cur = std::move(next);
    }
    result.waveform.samples = std::move(cur);
    return result;
}

// ---------------------------------------------------------------------------
// Codec augmentation through external commands

struct CodecCommand {
    std::string encode;  ///< placeholders {in}, {out}, {bitrate}
    std::string decode;  ///< placeholders {in}, {out}
    std::string extension = ".bin";
};

inline std::map<std::string, CodecCommand> default_codec_commands() {
    return {
        {"mp3", {"ffmpeg -nostdin -loglevel error -y -i {in} -codec:a libmp3lame -b:a {bitrate} {out}",
                 "ffmpeg -nostdin -loglevel error -y -i {in} -ac 1 -c:a pcm_s16le {out}", ".mp3"}},
        {"aac", {"ffmpeg -nostdin -loglevel error -y -i {in} -c:a aac -b:a {bitrate} {out}",
                 "ffmpeg -nostdin -loglevel error -y -i {in} -ac 1 -c:a pcm_s16le {out}", ".m4a"}},
    };
}

struct CodecRun {
    std::filesystem::path output;
    std::vector<std::string> commands;  ///< exact command lines executed
};

namespace detail {

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

inline std::string expand_template(std::string tpl, const std::map<std::string, std::string>& vars) {
    for (const auto& [key, value] : vars) {
        const std::string ph = "{" + key + "}";
        for (std::size_t pos = tpl.find(ph); pos != std::string::npos; pos = tpl.find(ph, pos + value.size())) {
            tpl.replace(pos, ph.size(), value);
        }
    }
    return tpl;
}

inline void run_command(const std::string& cmd) {
    FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
    if (!pipe) throw LoadError("vad", "could not start command: " + cmd);
    std::string output;
    char buf[512];
    while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) output.append(buf, n);
    const int status = ::pclose(pipe);
    if (status != 0) {
        const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        std::string msg = "command failed (exit " + std::to_string(code) + "): " + cmd;
        if (code == 127) msg += " [tool not found]";
        if (!output.empty()) msg += "\n" + output;
        throw LoadError("vad", msg);
    }
}

}  // namespace detail

/// Encode-then-decode round trip through external tools. Intermediate files
/// live next to out_path.
inline CodecRun augment_codec(const std::filesystem::path& in_path, const CodecCommand& codec, const std::string& bitrate,
                              const std::filesystem::path& out_path) {
    if (codec.encode.empty() || codec.decode.empty()) throw ConfigError("vad", "codec command template is empty");
    if (!std::filesystem::exists(in_path)) throw LoadError("vad", "input not found: " + in_path.string());
    std::filesystem::path mid = out_path;
    mid += ".enc" + codec.extension;
    CodecRun run;
    run.output = out_path;
    run.commands.push_back(detail::expand_template(
        codec.encode, {{"in", detail::shell_quote(in_path.string())}, {"out", detail::shell_quote(mid.string())}, {"bitrate", bitrate}}));
    run.commands.push_back(detail::expand_template(
        codec.decode, {{"in", detail::shell_quote(mid.string())}, {"out", detail::shell_quote(out_path.string())}, {"bitrate", bitrate}}));
    std::error_code ec;
    try {
        for (const auto& cmd : run.commands) detail::run_command(cmd);
    } catch (...) {
        std::filesystem::remove(mid, ec);
        std::filesystem::remove(out_path, ec);
        throw;
    }
    std::filesystem::remove(mid, ec);
    return run;
}

}  // namespace sasvfuse
