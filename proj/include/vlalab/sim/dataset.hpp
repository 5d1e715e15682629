#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlalab/model/vocab.hpp"
#include "vlalab/sim/env.hpp"

namespace vlalab::sim {

// Demonstration dataset with a byte-exact file format: a fixed header
// followed by fixed-size little-endian records, one per trajectory step.
struct DatasetHeader {
    uint32_t version = 1;
    uint32_t n_episodes = 0;
    uint32_t n_records = 0;
    uint16_t img_h = kImageSize, img_w = kImageSize;
    uint8_t channels = 3, n_views = 2;
    uint16_t action_dim = 4;
    uint16_t chunk_t = 8;
    uint16_t proprio_dim = 4;
    uint16_t proprio_hist = 8;
    uint16_t max_instr_len = 12;
    uint16_t suite = 0;
    uint64_t vocab_hash = 0;
    uint64_t seed = 0;

    size_t view_bytes() const { return static_cast<size_t>(img_h) * img_w * channels; }
    size_t record_bytes() const {
        return 4 + 4 + 1 + 1 + static_cast<size_t>(n_views) * view_bytes() +
               static_cast<size_t>(max_instr_len) * 2 +
               static_cast<size_t>(proprio_hist) * proprio_dim * 4 +
               static_cast<size_t>(chunk_t) * action_dim * 4;
    }
};

struct Dataset {
    DatasetHeader header;

    // column storage, one entry per record
    std::vector<uint32_t> episode_idx, step_idx;
    std::vector<uint8_t> success, instr_len;
    std::vector<uint8_t> views;      // n_records * n_views * view_bytes
    std::vector<uint16_t> instr;     // n_records * max_instr_len
    std::vector<float> proprio;      // n_records * proprio_hist * proprio_dim
    std::vector<float> chunks;       // n_records * chunk_t * action_dim

    // derived per-episode index
    std::vector<uint32_t> episode_start, episode_len;

    size_t n_records() const { return episode_idx.size(); }

    const uint8_t* view_ptr(size_t record, int view) const {
        return views.data() +
               (record * header.n_views + static_cast<size_t>(view)) * header.view_bytes();
    }
    const float* proprio_ptr(size_t record) const {
        return proprio.data() + record * header.proprio_hist * header.proprio_dim;
    }
    const float* chunk_ptr(size_t record) const {
        return chunks.data() + record * header.chunk_t * header.action_dim;
    }
    std::vector<int> instruction_ids(size_t record) const;

    // record index of the frame `horizon` steps ahead within the same episode,
    // clamped to the episode end
    size_t future_record(size_t record, int horizon) const;

    void rebuild_episode_index();

    std::vector<uint8_t> serialize() const;
    static Dataset deserialize(const std::vector<uint8_t>& bytes);
    void save(const std::string& path) const;
    static Dataset load(const std::string& path);
};

struct DatasetOptions {
    int episodes = 200;
    uint64_t seed = 0;
    int chunk_horizon = 8;
    int proprio_hist = 8;
    int max_instr_len = 12;
    bool bimanual = false;
};

// Rolls the scripted expert through seeded scenes with the canonical
// appearance. Failed episodes are excluded; a failure rate above 5% aborts.
Dataset generate_dataset(Suite suite, const DatasetOptions& opt, const model::Vocab& vocab);

}  // namespace vlalab::sim
