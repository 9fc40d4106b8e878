// SPDX-License-Identifier: Apache-2.0
#include "cap/extract.hpp"

#include <cstdio>
#include <fstream>
#include <future>
#include <set>

#include "json.hpp"

namespace cap {

std::string WindowPolicy::name() const {
  if (mode == Mode::kFull) return "full";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "chunk%gs", chunk_seconds);
  return buf;
}

WindowPolicy WindowPolicy::from_name(const std::string& s) {
  if (s == "full") return full();
  if (s.rfind("chunk", 0) == 0 && s.size() > 6 && s.back() == 's')
    return chunked(std::stod(s.substr(5, s.size() - 6)));
  throw Error("unknown window policy: " + s);
}

namespace {

// Sample ranges of the chunks for a clip; boundaries at multiples of
// chunk_seconds * sample_rate. A tail too short to produce at least four
// mel frames (the featenc minimum) cannot yield encoded frames and is
// folded into nothing; it is dropped.
std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(
    std::size_t n_samples, const WindowPolicy& policy, const MelConfig& mel) {
  if (policy.mode == WindowPolicy::Mode::kFull)
    return {{0, n_samples}};
  const auto chunk = static_cast<std::size_t>(policy.chunk_seconds * kSampleRate);
  if (chunk >= n_samples) return {{0, n_samples}};
  const std::size_t min_samples = mel.window_samples + 3 * mel.hop_samples;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t start = 0; start < n_samples; start += chunk) {
    const std::size_t end = std::min(start + chunk, n_samples);
    if (end - start >= min_samples) out.emplace_back(start, end);
  }
  return out;
}

}  // namespace

std::vector<Vecf> embed_clip_layers(const AudioClip& clip,
                                    ParamStore<float>& store,
                                    const ModelConfig& cfg,
                                    const std::vector<int>& layers,
                                    const WindowPolicy& policy) {
  const MelConfig mel_cfg{.mel_bins = cfg.featenc.mel_bins};
  const auto ranges = chunk_ranges(clip.samples.size(), policy, mel_cfg);
  if (ranges.empty()) throw Error("clip too short for any chunk: " + clip.clip_id);

  std::vector<Vecf> sums(layers.size(),
                         Vecf::Zero(cfg.encoder.model_dim));
  for (const auto& [start, end] : ranges) {
    AudioClip chunk = clip;
    chunk.samples.assign(clip.samples.begin() + start,
                         clip.samples.begin() + end);
    const Matf mel = log_mel(chunk, mel_cfg).frames;
    const ActivationStack<float> acts = run_encoder(store, cfg, mel);
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const Matf& x = acts.layers.at(layers[li]);
      sums[li] += x.colwise().mean().transpose();
    }
  }
  for (auto& v : sums) v /= static_cast<float>(ranges.size());
  return sums;
}

Vecf embed_clip(const AudioClip& clip, ParamStore<float>& store,
                const ModelConfig& cfg, int layer,
                const WindowPolicy& policy) {
  return embed_clip_layers(clip, store, cfg, {layer}, policy)[0];
}

bool EmbeddingTable::has(const std::string& clip_id, int layer,
                         const std::string& policy) const {
  for (const auto& r : rows)
    if (r.layer_index == layer && r.window_policy == policy &&
        r.clip_id == clip_id)
      return true;
  return false;
}

void EmbeddingTable::save(const std::string& store_path,
                          const std::string& manifest_path) const {
  {
    std::ofstream out(store_path + ".tmp", std::ios::binary);
    if (!out) throw Error("cannot write embedding store: " + store_path);
    out.write("EMB1", 4);
    auto put_u32 = [&](std::uint32_t v) {
      unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                            static_cast<unsigned char>((v >> 8) & 0xff),
                            static_cast<unsigned char>((v >> 16) & 0xff),
                            static_cast<unsigned char>((v >> 24) & 0xff)};
      out.write(reinterpret_cast<char*>(b), 4);
    };
    put_u32(static_cast<std::uint32_t>(rows.size()));
    put_u32(static_cast<std::uint32_t>(dim));
    for (const auto& r : rows) {
      if (r.vec.size() != dim) throw Error("embedding dimension mismatch");
      out.write(reinterpret_cast<const char*>(r.vec.data()),
                static_cast<std::streamsize>(sizeof(float) * dim));
    }
  }
  {
    std::ofstream out(manifest_path + ".tmp");
    if (!out) throw Error("cannot write embedding manifest: " + manifest_path);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      nlohmann::json j;
      j["row_index"] = i;
      j["clip_id"] = r.clip_id;
      j["task_id"] = r.task_id;
      j["label"] = r.label;
      j["split"] = split_name(r.split);
      j["layer_index"] = r.layer_index;
      j["window_policy"] = r.window_policy;
      out << j.dump() << "\n";
    }
  }
  if (std::rename((store_path + ".tmp").c_str(), store_path.c_str()) != 0 ||
      std::rename((manifest_path + ".tmp").c_str(), manifest_path.c_str()) != 0)
    throw Error("cannot finalize embedding store");
}

EmbeddingTable EmbeddingTable::load(const std::string& store_path,
                                    const std::string& manifest_path) {
  std::ifstream in(store_path, std::ios::binary);
  if (!in) throw Error("cannot open embedding store: " + store_path);
  char magic[5] = {};
  in.read(magic, 4);
  if (std::string(magic, 4) != "EMB1")
    throw Error("bad embedding store magic: " + store_path);
  auto get_u32 = [&]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
           (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
  };
  EmbeddingTable table;
  const std::uint32_t count = get_u32();
  table.dim = static_cast<int>(get_u32());
  table.rows.resize(count);
  for (auto& r : table.rows) {
    r.vec.resize(table.dim);
    in.read(reinterpret_cast<char*>(r.vec.data()),
            static_cast<std::streamsize>(sizeof(float) * table.dim));
  }
  if (!in) throw Error("truncated embedding store: " + store_path);

  std::ifstream mf(manifest_path);
  if (!mf) throw Error("cannot open embedding manifest: " + manifest_path);
  std::string line;
  std::size_t i = 0;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    if (i >= table.rows.size())
      throw Error("manifest has more rows than store: " + manifest_path);
    const auto j = nlohmann::json::parse(line);
    auto& r = table.rows[i];
    r.clip_id = j.at("clip_id");
    r.task_id = j.at("task_id");
    r.label = j.at("label");
    r.split = split_from_name(j.at("split"));
    r.layer_index = j.at("layer_index");
    r.window_policy = j.at("window_policy");
    ++i;
  }
  if (i != table.rows.size())
    throw Error("manifest/store row count mismatch: " + manifest_path);
  return table;
}

std::size_t extract_all(const std::vector<AudioClip>& corpus,
                        ParamStore<float>& store, const ModelConfig& cfg,
                        const std::vector<int>& layers,
                        const std::vector<WindowPolicy>& policies,
                        EmbeddingTable& table, int num_threads) {
  if (table.dim == 0) table.dim = cfg.encoder.model_dim;
  if (table.dim != cfg.encoder.model_dim)
    throw Error("embedding store dimension mismatch");

  std::set<std::string> existing;
  for (const auto& r : table.rows)
    existing.insert(r.clip_id + "|" + std::to_string(r.layer_index) + "|" +
                    r.window_policy);

  struct Job {
    const AudioClip* clip;
    WindowPolicy policy;
    std::vector<int> needed_layers;
  };
  std::vector<Job> jobs;
  for (const auto& clip : corpus)
    for (const auto& policy : policies) {
      Job job{&clip, policy, {}};
      for (int layer : layers)
        if (!existing.count(clip.clip_id + "|" + std::to_string(layer) + "|" +
                            policy.name()))
          job.needed_layers.push_back(layer);
      if (!job.needed_layers.empty()) jobs.push_back(std::move(job));
    }

  std::vector<std::vector<Vecf>> results(jobs.size());
  auto worker = [&](std::size_t j) {
    results[j] = embed_clip_layers(*jobs[j].clip, store, cfg,
                                   jobs[j].needed_layers, jobs[j].policy);
  };
  if (num_threads <= 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) worker(j);
  } else {
    std::vector<std::future<void>> futs;
    std::size_t next = 0;
    while (next < jobs.size()) {
      futs.clear();
      const std::size_t batch =
          std::min<std::size_t>(num_threads, jobs.size() - next);
      for (std::size_t b = 0; b < batch; ++b)
        futs.push_back(std::async(std::launch::async, worker, next + b));
      for (auto& f : futs) f.get();
      next += batch;
    }
  }

  std::size_t added = 0;
  for (std::size_t j = 0; j < jobs.size(); ++j)
    for (std::size_t li = 0; li < jobs[j].needed_layers.size(); ++li) {
      EmbeddingRow row;
      row.clip_id = jobs[j].clip->clip_id;
      row.task_id = jobs[j].clip->task_id;
      row.label = jobs[j].clip->label;
      row.split = jobs[j].clip->split;
      row.layer_index = jobs[j].needed_layers[li];
      row.window_policy = jobs[j].policy.name();
      row.vec = results[j][li];
      table.rows.push_back(std::move(row));
      ++added;
    }
  return added;
}

}  // namespace cap
