// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cap/audio.hpp"
#include "cap/model.hpp"

namespace cap {

struct WindowPolicy {
  enum class Mode { kFull, kChunked };
  Mode mode = Mode::kFull;
  double chunk_seconds = 0.0;  // typical values: 0.5, 1, 2, 3, 4

  static WindowPolicy full() { return {Mode::kFull, 0.0}; }
  static WindowPolicy chunked(double seconds) {
    if (seconds <= 0) throw Error("chunk_seconds must be > 0");
    return {Mode::kChunked, seconds};
  }
  // "full" or "chunk<seconds>s", e.g. "chunk2s", "chunk0.5s".
  std::string name() const;
  static WindowPolicy from_name(const std::string& s);
  bool operator==(const WindowPolicy&) const = default;
};

struct EmbeddingRow {
  std::string clip_id, task_id, label;
  Split split = Split::kTrain;
  int layer_index = 0;
  std::string window_policy;
  Vecf vec;
};

struct EmbeddingTable {
  int dim = 0;
  std::vector<EmbeddingRow> rows;

  bool has(const std::string& clip_id, int layer,
           const std::string& policy) const;
  // Binary store (magic "EMB1") + JSONL manifest keyed by row index.
  void save(const std::string& store_path,
            const std::string& manifest_path) const;
  static EmbeddingTable load(const std::string& store_path,
                             const std::string& manifest_path);
};

// Time-averaged layer-l embedding of one clip. Chunked mode runs each
// sample-aligned chunk through the encoder independently (no cross-chunk
// attention), time-averages within the chunk, then averages over chunks.
Vecf embed_clip(const AudioClip& clip, ParamStore<float>& store,
                const ModelConfig& cfg, int layer, const WindowPolicy& policy);

// One forward pass per (clip, policy), all requested layers at once.
std::vector<Vecf> embed_clip_layers(const AudioClip& clip,
                                    ParamStore<float>& store,
                                    const ModelConfig& cfg,
                                    const std::vector<int>& layers,
                                    const WindowPolicy& policy);

// Fills in any (clip, layer, policy) rows missing from `table`.
// Returns the number of rows computed.
std::size_t extract_all(const std::vector<AudioClip>& corpus,
                        ParamStore<float>& store, const ModelConfig& cfg,
                        const std::vector<int>& layers,
                        const std::vector<WindowPolicy>& policies,
                        EmbeddingTable& table, int num_threads = 1);

}  // namespace cap
