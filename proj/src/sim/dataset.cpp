#include "vlalab/sim/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <deque>

#include "vlalab/core/io.hpp"

namespace vlalab::sim {

namespace {
constexpr char kMagic[8] = {'V', 'L', 'A', 'D', 'S', 'E', 'T', '1'};
}

std::vector<int> Dataset::instruction_ids(size_t record) const {
    int len = instr_len[record];
    std::vector<int> ids(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i)
        ids[static_cast<size_t>(i)] = instr[record * header.max_instr_len + i];
    return ids;
}

size_t Dataset::future_record(size_t record, int horizon) const {
    uint32_t ep = episode_idx[record];
    uint32_t start = episode_start[ep];
    uint32_t len = episode_len[ep];
    size_t target = record + static_cast<size_t>(horizon);
    size_t last = start + len - 1;
    return std::min(target, static_cast<size_t>(last));
}

void Dataset::rebuild_episode_index() {
    episode_start.assign(header.n_episodes, 0);
    episode_len.assign(header.n_episodes, 0);
    for (size_t i = 0; i < n_records(); ++i) {
        uint32_t ep = episode_idx[i];
        if (episode_len[ep] == 0) episode_start[ep] = static_cast<uint32_t>(i);
        episode_len[ep] += 1;
    }
}

std::vector<uint8_t> Dataset::serialize() const {
    ByteWriter w;
    w.raw(kMagic, 8);
    w.u32(header.version);
    w.u32(header.n_episodes);
    w.u32(header.n_records);
    w.u16(header.img_h);
    w.u16(header.img_w);
    w.u8(header.channels);
    w.u8(header.n_views);
    w.u16(header.action_dim);
    w.u16(header.chunk_t);
    w.u16(header.proprio_dim);
    w.u16(header.proprio_hist);
    w.u16(header.max_instr_len);
    w.u16(header.suite);
    w.u64(header.vocab_hash);
    w.u64(header.seed);

    size_t vb = header.view_bytes();
    size_t pd = static_cast<size_t>(header.proprio_hist) * header.proprio_dim;
    size_t cd = static_cast<size_t>(header.chunk_t) * header.action_dim;
    for (size_t i = 0; i < n_records(); ++i) {
        w.u32(episode_idx[i]);
        w.u32(step_idx[i]);
        w.u8(success[i]);
        w.u8(instr_len[i]);
        w.raw(views.data() + i * header.n_views * vb, header.n_views * vb);
        for (int j = 0; j < header.max_instr_len; ++j)
            w.u16(instr[i * header.max_instr_len + j]);
        w.f32s(proprio.data() + i * pd, pd);
        w.f32s(chunks.data() + i * cd, cd);
    }
    return std::move(w.bytes);
}

Dataset Dataset::deserialize(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes);
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw IoError("dataset: bad magic");
    Dataset d;
    d.header.version = r.u32();
    if (d.header.version != 1) throw IoError("dataset: unsupported version");
    d.header.n_episodes = r.u32();
    d.header.n_records = r.u32();
    d.header.img_h = r.u16();
    d.header.img_w = r.u16();
    d.header.channels = r.u8();
    d.header.n_views = r.u8();
    d.header.action_dim = r.u16();
    d.header.chunk_t = r.u16();
    d.header.proprio_dim = r.u16();
    d.header.proprio_hist = r.u16();
    d.header.max_instr_len = r.u16();
    d.header.suite = r.u16();
    d.header.vocab_hash = r.u64();
    d.header.seed = r.u64();

    size_t n = d.header.n_records;
    size_t vb = d.header.view_bytes();
    size_t pd = static_cast<size_t>(d.header.proprio_hist) * d.header.proprio_dim;
    size_t cd = static_cast<size_t>(d.header.chunk_t) * d.header.action_dim;
    d.episode_idx.resize(n);
    d.step_idx.resize(n);
    d.success.resize(n);
    d.instr_len.resize(n);
    d.views.resize(n * d.header.n_views * vb);
    d.instr.resize(n * d.header.max_instr_len);
    d.proprio.resize(n * pd);
    d.chunks.resize(n * cd);
    for (size_t i = 0; i < n; ++i) {
        d.episode_idx[i] = r.u32();
        d.step_idx[i] = r.u32();
        d.success[i] = r.u8();
        d.instr_len[i] = r.u8();
        r.raw(d.views.data() + i * d.header.n_views * vb, d.header.n_views * vb);
        for (int j = 0; j < d.header.max_instr_len; ++j)
            d.instr[i * d.header.max_instr_len + j] = r.u16();
        r.f32s(d.proprio.data() + i * pd, pd);
        r.f32s(d.chunks.data() + i * cd, cd);
    }
    if (r.remaining() != 0) throw IoError("dataset: trailing bytes");
    d.rebuild_episode_index();
    return d;
}

void Dataset::save(const std::string& path) const { write_file(path, serialize()); }

Dataset Dataset::load(const std::string& path) { return deserialize(read_file(path)); }

Dataset generate_dataset(Suite suite, const DatasetOptions& opt, const model::Vocab& vocab) {
    if (opt.episodes < 1) throw SimError("generate_dataset: need at least one episode");

    Dataset d;
    d.header.n_episodes = static_cast<uint32_t>(opt.episodes);
    d.header.action_dim = static_cast<uint16_t>(opt.bimanual ? 8 : 4);
    d.header.proprio_dim = static_cast<uint16_t>(opt.bimanual ? 8 : 4);
    d.header.chunk_t = static_cast<uint16_t>(opt.chunk_horizon);
    d.header.proprio_hist = static_cast<uint16_t>(opt.proprio_hist);
    d.header.max_instr_len = static_cast<uint16_t>(opt.max_instr_len);
    d.header.suite = static_cast<uint16_t>(suite);
    d.header.vocab_hash = vocab.hash();
    d.header.seed = opt.seed;

    const int pdim = d.header.proprio_dim;
    const int adim = d.header.action_dim;

    int collected = 0;
    int attempts = 0;
    int failures = 0;
    while (collected < opt.episodes) {
        attempts += 1;
        Env env = make_env(suite, derive_seed(opt.seed, "episode", attempts - 1), opt.bimanual);

        std::vector<std::vector<uint8_t>> ep_views;   // per step: both views
        std::vector<std::vector<float>> ep_proprio;   // per step: history snapshot
        std::vector<std::vector<double>> ep_actions;  // per step
        std::deque<std::vector<double>> history;

        bool done = false;
        for (int t = 0; t < env.task.max_steps && !done; ++t) {
            // proprio history: most recent `hist` snapshots, oldest first
            std::vector<double> now;
            for (const auto& g : env.state.grippers) {
                auto p = proprio_of(g);
                now.insert(now.end(), p.begin(), p.end());
            }
            history.push_back(now);
            while (static_cast<int>(history.size()) > opt.proprio_hist) history.pop_front();

            std::vector<float> snapshot(static_cast<size_t>(opt.proprio_hist) * pdim);
            for (int h = 0; h < opt.proprio_hist; ++h) {
                int src = std::max(0, static_cast<int>(history.size()) - opt.proprio_hist + h);
                for (int j = 0; j < pdim; ++j)
                    snapshot[static_cast<size_t>(h) * pdim + j] =
                        static_cast<float>(history[static_cast<size_t>(src)][static_cast<size_t>(j)]);
            }

            std::vector<uint8_t> both;
            auto third = quantize(env.observe(CameraKind::third_person));
            auto wrist = quantize(env.observe(CameraKind::wrist));
            both.insert(both.end(), third.begin(), third.end());
            both.insert(both.end(), wrist.begin(), wrist.end());

            std::vector<double> action = scripted_expert(env.state, env.task);
            step(env.state, action);

            ep_views.push_back(std::move(both));
            ep_proprio.push_back(std::move(snapshot));
            ep_actions.push_back(std::move(action));

            done = check_success(env.state, env.task);
        }

        if (!done) {
            failures += 1;
            if (attempts >= 20 &&
                static_cast<double>(failures) > 0.05 * static_cast<double>(attempts))
                throw SimError("generate_dataset: expert failure rate above 5% (" +
                               std::to_string(failures) + "/" + std::to_string(attempts) + ")");
            continue;
        }

        // chunk extraction with tail padding by repeating the final action
        std::vector<int> ids = vocab.tokenize(env.task.instruction);
        uint8_t ilen = static_cast<uint8_t>(
            std::min<size_t>(ids.size(), static_cast<size_t>(opt.max_instr_len)));
        size_t steps = ep_actions.size();
        for (size_t t = 0; t < steps; ++t) {
            d.episode_idx.push_back(static_cast<uint32_t>(collected));
            d.step_idx.push_back(static_cast<uint32_t>(t));
            d.success.push_back(1);
            d.instr_len.push_back(ilen);
            d.views.insert(d.views.end(), ep_views[t].begin(), ep_views[t].end());
            for (int j = 0; j < opt.max_instr_len; ++j)
                d.instr.push_back(j < ilen ? static_cast<uint16_t>(ids[static_cast<size_t>(j)])
                                           : 0);
            d.proprio.insert(d.proprio.end(), ep_proprio[t].begin(), ep_proprio[t].end());
            for (int h = 0; h < opt.chunk_horizon; ++h) {
                size_t src = std::min(t + static_cast<size_t>(h), steps - 1);
                for (int j = 0; j < adim; ++j)
                    d.chunks.push_back(static_cast<float>(ep_actions[src][static_cast<size_t>(j)]));
            }
        }
        collected += 1;
    }

    d.header.n_records = static_cast<uint32_t>(d.episode_idx.size());
    d.rebuild_episode_index();
    return d;
}

}  // namespace vlalab::sim
