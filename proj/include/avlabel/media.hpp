// avlabel/media.hpp

// Copyright 2026  The avlabel Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Media access: 16-bit PCM WAV, the builtin raw A/V container (.avr), and a
// media-tool interface with builtin and ffmpeg-backed implementations.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "avlabel/errors.hpp"
#include "avlabel/hashing.hpp"
#include "avlabel/image.hpp"
#include "avlabel/shot_detect.hpp"
#include "avlabel/subprocess.hpp"

namespace avlabel {

inline constexpr int kTargetSampleRate = 44100;
inline constexpr int kTargetVideoHeight = 720;

struct PcmAudio {
  int sample_rate = 0;
  std::vector<std::int16_t> samples;  // mono
  double duration() const { return sample_rate ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
};

namespace detail {

inline void PutLe(std::string &s, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t GetLe(const std::string &s, std::size_t at, int bytes) {
  if (at + bytes > s.size()) throw IoError("truncated WAV header");
  std::uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_wav(const PcmAudio &a) {
  std::string s;
  std::uint32_t data_bytes = static_cast<std::uint32_t>(a.samples.size() * 2);
  s += "RIFF";
  detail::PutLe(s, 36 + data_bytes, 4);
  s += "WAVEfmt ";
  detail::PutLe(s, 16, 4);
  detail::PutLe(s, 1, 2);  // PCM
  detail::PutLe(s, 1, 2);  // mono
  detail::PutLe(s, static_cast<std::uint32_t>(a.sample_rate), 4);
  detail::PutLe(s, static_cast<std::uint32_t>(a.sample_rate * 2), 4);
  detail::PutLe(s, 2, 2);
  detail::PutLe(s, 16, 2);
  s += "data";
  detail::PutLe(s, data_bytes, 4);
  for (auto v : a.samples) detail::PutLe(s, static_cast<std::uint16_t>(v), 2);
  return s;
}

inline void write_wav(const std::filesystem::path &p, const PcmAudio &a) { write_file_atomic(p, encode_wav(a)); }

// Reads 16-bit PCM; multi-channel input is averaged to mono.
inline PcmAudio read_wav(const std::filesystem::path &p) {
  std::string s = read_file(p);
  if (s.size() < 12 || s.compare(0, 4, "RIFF") != 0 || s.compare(8, 4, "WAVE") != 0)
    throw IoError(p.string() + ": not a RIFF/WAVE file");
  std::size_t at = 12;
  int channels = 0, bits = 0;
  PcmAudio out;
  bool have_fmt = false;
  while (at + 8 <= s.size()) {
    std::string id = s.substr(at, 4);
    std::uint32_t len = detail::GetLe(s, at + 4, 4);
    std::size_t body = at + 8;
    if (body + len > s.size()) throw IoError(p.string() + ": truncated chunk " + id);
    if (id == "fmt ") {
      if (detail::GetLe(s, body, 2) != 1) throw IoError(p.string() + ": only PCM WAV is supported");
      channels = static_cast<int>(detail::GetLe(s, body + 2, 2));
      out.sample_rate = static_cast<int>(detail::GetLe(s, body + 4, 4));
      bits = static_cast<int>(detail::GetLe(s, body + 14, 2));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt || bits != 16 || channels < 1) throw IoError(p.string() + ": need 16-bit PCM");
      std::size_t frames = len / (2 * channels);
      out.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        long acc = 0;
        for (int c = 0; c < channels; ++c)
          acc += static_cast<std::int16_t>(detail::GetLe(s, body + (i * channels + c) * 2, 2));
        out.samples[i] = static_cast<std::int16_t>(acc / channels);
      }
      return out;
    }
    at = body + len + (len & 1);
  }
  throw IoError(p.string() + ": no data chunk");
}

// Linear interpolation; output length floor(n * to / from).
inline PcmAudio resample_linear(const PcmAudio &in, int to_rate) {
  if (in.sample_rate <= 0 || to_rate <= 0) throw ArgumentError("sample rates must be > 0");
  if (in.sample_rate == to_rate) return in;
  PcmAudio out;
  out.sample_rate = to_rate;
  std::size_t n = static_cast<std::size_t>(static_cast<std::uint64_t>(in.samples.size()) * to_rate / in.sample_rate);
  out.samples.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // Exact rational position k * from / to.
    std::uint64_t num = static_cast<std::uint64_t>(k) * in.sample_rate;
    std::size_t i = num / to_rate;
    double frac = static_cast<double>(num % to_rate) / to_rate;
    double a = in.samples[i];
    double b = i + 1 < in.samples.size() ? in.samples[i + 1] : a;
    out.samples[k] = static_cast<std::int16_t>(std::lround(a + (b - a) * frac));
  }
  return out;
}

// Builtin container: "AVRAW 1\n", one JSON header line, frame_count RGB
// frames, then sample_count little-endian int16 mono samples.
struct AvrHeader {
  int width = 0;
  int height = 0;
  double fps = 0.0;
  std::int64_t frame_count = 0;
  int sample_rate = 0;
  std::int64_t sample_count = 0;
};

inline constexpr const char *kAvrMagic = "AVRAW 1\n";

inline void write_avr(const std::filesystem::path &p, const AvrHeader &h, const std::vector<Image> &frames,
                      const std::vector<std::int16_t> &samples) {
  if (static_cast<std::int64_t>(frames.size()) != h.frame_count ||
      static_cast<std::int64_t>(samples.size()) != h.sample_count)
    throw ArgumentError("avr header does not match payload");
  nlohmann::ordered_json j{{"width", h.width}, {"height", h.height}, {"fps", h.fps}, {"frame_count", h.frame_count},
                           {"sample_rate", h.sample_rate}, {"sample_count", h.sample_count}};
  std::string s = kAvrMagic;
  s += j.dump() + "\n";
  for (const auto &f : frames) {
    if (f.width != h.width || f.height != h.height || f.channels != 3) throw ArgumentError("avr frame geometry");
    s.append(reinterpret_cast<const char *>(f.data.data()), f.data.size());
  }
  for (auto v : samples) detail::PutLe(s, static_cast<std::uint16_t>(v), 2);
  write_file_atomic(p, s);
}

class AvrReader {
 public:
  explicit AvrReader(const std::filesystem::path &p) : path_(p), in_(p, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + p.string());
    std::string magic(8, '\0');
    in_.read(magic.data(), 8);
    if (!in_ || magic != kAvrMagic) throw IoError(p.string() + ": not an AVRAW file");
    std::string line;
    std::getline(in_, line);
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError(p.string() + ": bad AVRAW header");
    try {
      h_.width = j.at("width");
      h_.height = j.at("height");
      h_.fps = j.at("fps");
      h_.frame_count = j.at("frame_count");
      h_.sample_rate = j.at("sample_rate");
      h_.sample_count = j.at("sample_count");
    } catch (const nlohmann::json::exception &e) {
      throw IoError(p.string() + ": bad AVRAW header: " + e.what());
    }
    data_start_ = static_cast<std::uint64_t>(in_.tellg());
  }

  const AvrHeader &header() const { return h_; }
  double duration() const { return h_.fps > 0 ? static_cast<double>(h_.frame_count) / h_.fps : 0.0; }

  std::optional<Image> frame(std::int64_t i) {
    if (i < 0 || i >= h_.frame_count) return std::nullopt;
    Image img(h_.width, h_.height, 3);
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(data_start_ + static_cast<std::uint64_t>(i) * img.data.size()));
    in_.read(reinterpret_cast<char *>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (!in_) return std::nullopt;
    return img;
  }

  PcmAudio audio() {
    PcmAudio a;
    a.sample_rate = h_.sample_rate;
    std::uint64_t frame_bytes = static_cast<std::uint64_t>(h_.width) * h_.height * 3;
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(data_start_ + frame_bytes * h_.frame_count));
    std::string raw(static_cast<std::size_t>(h_.sample_count) * 2, '\0');
    in_.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!in_) throw IoError(path_.string() + ": truncated audio");
    a.samples.resize(static_cast<std::size_t>(h_.sample_count));
    for (std::size_t k = 0; k < a.samples.size(); ++k)
      a.samples[k] = static_cast<std::int16_t>(detail::GetLe(raw, 2 * k, 2));
    return a;
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  AvrHeader h_;
  std::uint64_t data_start_ = 0;
};

struct MediaInfo {
  double duration = 0.0;
  double fps = 0.0;
  std::int64_t frame_count = 0;
  int width = 0, height = 0;
};

// Decoding, cutting and audio extraction.
class MediaTool {
 public:
  virtual ~MediaTool() = default;
  virtual std::string name() const = 0;
  virtual MediaInfo probe(const std::filesystem::path &video) = 0;
  // Calls fn for every frame in order with the decoded RGB image.
  virtual void for_each_frame(const std::filesystem::path &video,
                              const std::function<void(std::int64_t, const Image &)> &fn) = 0;
  virtual std::optional<Image> read_frame(const std::filesystem::path &video, std::int64_t index) = 0;
  virtual void cut(const std::filesystem::path &source, const Clip &clip, const std::filesystem::path &out) = 0;
  // Mono 16-bit PCM at kTargetSampleRate.
  virtual void extract_audio(const std::filesystem::path &video, const std::filesystem::path &out_wav) = 0;
  virtual std::string clip_extension() const = 0;
};

// Handles .avr only; no rescaling (sources keep their native size).
class BuiltinMediaTool : public MediaTool {
 public:
  std::string name() const override { return "builtin"; }
  std::string clip_extension() const override { return ".avr"; }

  MediaInfo probe(const std::filesystem::path &video) override {
    AvrReader r(video);
    const auto &h = r.header();
    return MediaInfo{r.duration(), h.fps, h.frame_count, h.width, h.height};
  }

  void for_each_frame(const std::filesystem::path &video,
                      const std::function<void(std::int64_t, const Image &)> &fn) override {
    AvrReader r(video);
    for (std::int64_t i = 0; i < r.header().frame_count; ++i) {
      auto f = r.frame(i);
      if (!f) throw IoError(video.string() + ": cannot decode frame " + std::to_string(i));
      fn(i, *f);
    }
  }

  std::optional<Image> read_frame(const std::filesystem::path &video, std::int64_t index) override {
    AvrReader r(video);
    return r.frame(index);
  }

  void cut(const std::filesystem::path &source, const Clip &clip, const std::filesystem::path &out) override {
    AvrReader r(source);
    AvrHeader h = r.header();
    if (clip.start_frame < 0 || clip.end_frame > h.frame_count || clip.end_frame <= clip.start_frame)
      throw ArgumentError("clip outside source");
    std::vector<Image> frames;
    for (std::int64_t i = clip.start_frame; i < clip.end_frame; ++i) {
      auto f = r.frame(i);
      if (!f) throw IoError(source.string() + ": cannot decode frame " + std::to_string(i));
      frames.push_back(std::move(*f));
    }
    PcmAudio a = r.audio();
    auto s0 = static_cast<std::size_t>(std::llround(clip.start_frame / h.fps * h.sample_rate));
    auto s1 = static_cast<std::size_t>(std::llround(clip.end_frame / h.fps * h.sample_rate));
    s0 = std::min(s0, a.samples.size());
    s1 = std::min(s1, a.samples.size());
    std::vector<std::int16_t> samples(a.samples.begin() + s0, a.samples.begin() + s1);
    AvrHeader oh = h;
    oh.frame_count = clip.end_frame - clip.start_frame;
    oh.sample_count = static_cast<std::int64_t>(samples.size());
    write_avr(out, oh, frames, samples);
  }

  void extract_audio(const std::filesystem::path &video, const std::filesystem::path &out_wav) override {
    AvrReader r(video);
    write_wav(out_wav, resample_linear(r.audio(), kTargetSampleRate));
  }
};

// Delegates to ffmpeg/ffprobe found on PATH (or the given binaries).
class FfmpegMediaTool : public MediaTool {
 public:
  explicit FfmpegMediaTool(std::string ffmpeg = "ffmpeg", std::string ffprobe = "ffprobe")
      : ffmpeg_(std::move(ffmpeg)), ffprobe_(std::move(ffprobe)) {}

  std::string name() const override { return "ffmpeg"; }
  std::string clip_extension() const override { return ".mp4"; }

  std::vector<std::string> probe_argv(const std::filesystem::path &video) const {
    return {ffprobe_, "-v", "error", "-select_streams", "v:0", "-count_packets", "-show_entries",
            "stream=width,height,r_frame_rate,nb_read_packets:format=duration", "-of", "json", video.string()};
  }

  // Re-encodes at cut points; video scaled to 720 lines, audio kept.
  std::vector<std::string> cut_argv(const std::filesystem::path &source, const Clip &clip,
                                    const std::filesystem::path &out) const {
    return {ffmpeg_, "-nostdin", "-y", "-v", "error", "-ss", seconds(clip.start_seconds()),
            "-i", source.string(), "-t", seconds(clip.duration()),
            "-vf", "scale=-2:" + std::to_string(kTargetVideoHeight),
            "-c:v", "libx264", "-preset", "veryfast", "-c:a", "aac", out.string()};
  }

  std::vector<std::string> audio_argv(const std::filesystem::path &video, const std::filesystem::path &out) const {
    return {ffmpeg_, "-nostdin", "-y", "-v", "error", "-i", video.string(), "-vn",
            "-ac", "1", "-ar", std::to_string(kTargetSampleRate), "-c:a", "pcm_s16le", out.string()};
  }

  std::vector<std::string> frames_argv(const std::filesystem::path &video) const {
    return {ffmpeg_, "-nostdin", "-v", "error", "-i", video.string(), "-f", "rawvideo", "-pix_fmt", "rgb24", "-"};
  }

  MediaInfo probe(const std::filesystem::path &video) override {
    auto out = capture(probe_argv(video));
    auto j = nlohmann::json::parse(out, nullptr, false);
    if (j.is_discarded() || !j.contains("streams") || j["streams"].empty())
      throw IoError("ffprobe: no video stream in " + video.string());
    const auto &st = j["streams"][0];
    MediaInfo m;
    m.width = st.value("width", 0);
    m.height = st.value("height", 0);
    std::string rate = st.value("r_frame_rate", "0/1");
    auto slash = rate.find('/');
    double num = std::stod(rate.substr(0, slash)), den = slash == std::string::npos ? 1.0 : std::stod(rate.substr(slash + 1));
    m.fps = den > 0 ? num / den : 0.0;
    m.frame_count = std::stoll(st.value("nb_read_packets", std::string("0")));
    m.duration = std::stod(j["format"].value("duration", std::string("0")));
    return m;
  }

  void for_each_frame(const std::filesystem::path &video,
                      const std::function<void(std::int64_t, const Image &)> &fn) override {
    MediaInfo m = probe(video);
    Subprocess p(ProcessSpec{frames_argv(video), {}, {}, {}});
    p.close_stdin();
    std::size_t bytes = static_cast<std::size_t>(m.width) * m.height * 3;
    std::string buf;
    std::int64_t idx = 0;
    char tmp[1 << 16];
    for (;;) {
      ssize_t n = ::read(p.stdout_fd(), tmp, sizeof tmp);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buf.append(tmp, static_cast<std::size_t>(n));
      while (buf.size() >= bytes) {
        Image img(m.width, m.height, 3);
        std::memcpy(img.data.data(), buf.data(), bytes);
        buf.erase(0, bytes);
        fn(idx++, img);
      }
    }
    check_exit(p, "ffmpeg frame decode");
  }

  std::optional<Image> read_frame(const std::filesystem::path &video, std::int64_t index) override {
    std::optional<Image> out;
    for_each_frame(video, [&](std::int64_t i, const Image &img) {
      if (i == index) out = img;
    });
    return out;
  }

  void cut(const std::filesystem::path &source, const Clip &clip, const std::filesystem::path &out) override {
    run(cut_argv(source, clip, out), "ffmpeg cut");
  }

  void extract_audio(const std::filesystem::path &video, const std::filesystem::path &out_wav) override {
    run(audio_argv(video, out_wav), "ffmpeg audio extraction");
  }

 private:
  static std::string seconds(double s) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    os << s;
    return os.str();
  }

  static void check_exit(Subprocess &p, const std::string &what) {
    int st = p.wait();
    if (!WIFEXITED(st) || WEXITSTATUS(st) != 0) throw IoError(what + " failed");
  }

  static std::string capture(const std::vector<std::string> &argv) {
    Subprocess p(ProcessSpec{argv, {}, {}, {}});
    p.close_stdin();
    std::string out;
    char tmp[4096];
    for (;;) {
      ssize_t n = ::read(p.stdout_fd(), tmp, sizeof tmp);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      out.append(tmp, static_cast<std::size_t>(n));
    }
    check_exit(p, argv[0]);
    return out;
  }

  static void run(const std::vector<std::string> &argv, const std::string &what) {
    Subprocess p(ProcessSpec{argv, {}, {}, {}});
    p.close_stdin();
    char tmp[4096];
    while (::read(p.stdout_fd(), tmp, sizeof tmp) > 0) {
    }
    check_exit(p, what);
  }

  std::string ffmpeg_, ffprobe_;
};

inline std::unique_ptr<MediaTool> make_media_tool(const std::string &kind) {
  if (kind == "builtin") return std::make_unique<BuiltinMediaTool>();
  if (kind == "ffmpeg") return std::make_unique<FfmpegMediaTool>();
  throw ConfigError("unknown media_tool '" + kind + "' (expected builtin or ffmpeg)");
}

}  // namespace avlabel
