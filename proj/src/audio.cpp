// SPDX-License-Identifier: Apache-2.0
#include "cap/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace cap {

void validate_clip(const AudioClip& clip) {
  if (clip.sample_rate != kSampleRate)
    throw Error("clip " + clip.clip_id + ": sample rate must be 16000");
  const double d = clip.duration_s();
  if (d < 0.5 || d > 30.0)
    throw Error("clip " + clip.clip_id + ": duration out of [0.5, 30] s");
}

namespace {

struct RiffReader {
  std::ifstream in;
  explicit RiffReader(const std::string& path)
      : in(path, std::ios::binary) {}

  std::uint32_t u32() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
  }
  std::uint16_t u16() {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return b[0] | (b[1] << 8);
  }
  std::string tag() {
    char t[5] = {};
    in.read(t, 4);
    return std::string(t, 4);
  }
};

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 4);
}

void put_u16(std::ofstream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

std::vector<float> read_wav(const std::string& path, int* sample_rate_out) {
  RiffReader r(path);
  if (!r.in) throw Error("cannot open wav file: " + path);
  if (r.tag() != "RIFF") throw Error(path + ": not a RIFF file");
  r.u32();  // riff size
  if (r.tag() != "WAVE") throw Error(path + ": not a WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::vector<float> samples;
  bool got_fmt = false, got_data = false;

  while (r.in && !r.in.eof()) {
    const std::string chunk = r.tag();
    if (!r.in) break;
    const std::uint32_t size = r.u32();
    if (chunk == "fmt ") {
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      bits = r.u16();
      if (size > 16) r.in.seekg(size - 16, std::ios::cur);
      got_fmt = true;
    } else if (chunk == "data") {
      if (!got_fmt) throw Error(path + ": data chunk before fmt chunk");
      if (format != 1) throw Error(path + ": not PCM");
      if (channels != 1) throw Error(path + ": not mono");
      if (bits != 16) throw Error(path + ": not 16-bit");
      const std::uint32_t n = size / 2;
      samples.resize(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        const std::int16_t s = static_cast<std::int16_t>(r.u16());
        samples[i] = static_cast<float>(s) / 32768.0f;
      }
      got_data = true;
      break;
    } else {
      r.in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!got_data) throw Error(path + ": no data chunk");
  *sample_rate_out = static_cast<int>(rate);
  return samples;
}

void write_wav(const std::string& path, const std::vector<float>& samples,
               int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write wav file: " + path);
  const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate * 2));
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_size);
  for (float s : samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    const auto q = static_cast<std::int16_t>(std::lrintf(c * 32767.0f));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
}

std::vector<float> resample(const std::vector<float>& in, int rate_in,
                            int rate_out) {
  if (rate_in == rate_out) return in;
  if (in.empty()) return {};
  const std::size_t n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(in.size()) * rate_out / rate_in));
  std::vector<float> out(n_out);
  const double step = static_cast<double>(rate_in) / rate_out;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double t = i * step;
    const auto i0 = static_cast<std::size_t>(t);
    const double frac = t - i0;
    const float a = in[std::min(i0, in.size() - 1)];
    const float b = in[std::min(i0 + 1, in.size() - 1)];
    out[i] = static_cast<float>(a + frac * (b - a));
  }
  return out;
}

std::vector<AudioClip> ingest_wav_dir(const std::string& root,
                                      const IngestOptions& opts) {
  std::vector<AudioClip> clips;
  std::vector<std::string> errors;
  for (const char* split : {"train", "dev", "test"}) {
    const fs::path split_dir = fs::path(root) / split;
    if (!fs::is_directory(split_dir))
      throw Error(std::string("split directory missing: ") + split);
    std::size_t split_count = 0;
    std::vector<fs::path> label_dirs;
    for (const auto& e : fs::directory_iterator(split_dir))
      if (e.is_directory()) label_dirs.push_back(e.path());
    std::sort(label_dirs.begin(), label_dirs.end());
    for (const auto& label_dir : label_dirs) {
      std::vector<fs::path> wavs;
      for (const auto& e : fs::directory_iterator(label_dir))
        if (e.path().extension() == ".wav") wavs.push_back(e.path());
      std::sort(wavs.begin(), wavs.end());
      for (const auto& wav : wavs) {
        AudioClip clip;
        clip.clip_id = std::string(split) + "/" +
                       label_dir.filename().string() + "/" +
                       wav.stem().string();
        clip.label = label_dir.filename().string();
        clip.split = split_from_name(split);
        clip.task_id = opts.task_id;
        try {
          int rate = 0;
          clip.samples = read_wav(wav.string(), &rate);
          if (rate != kSampleRate)
            clip.samples = resample(clip.samples, rate, kSampleRate);
          clip.sample_rate = kSampleRate;
          validate_clip(clip);
        } catch (const Error& e) {
          errors.push_back(e.what());
          continue;
        }
        clips.push_back(std::move(clip));
        ++split_count;
      }
    }
    if (split_count == 0 && errors.empty())
      throw Error(std::string("split has no clips: ") + split);
  }
  if (!errors.empty() && !opts.skip_bad) {
    std::string msg = "bad input files:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw Error(msg);
  }
  return clips;
}

void write_manifest(const std::string& path,
                    const std::vector<AudioClip>& clips) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest: " + path);
  for (const auto& c : clips) {
    nlohmann::json j;
    j["clip_id"] = c.clip_id;
    j["task_id"] = c.task_id;
    j["label"] = c.label;
    j["split"] = split_name(c.split);
    j["duration_s"] = c.duration_s();
    out << j.dump() << "\n";
  }
}

}  // namespace cap
