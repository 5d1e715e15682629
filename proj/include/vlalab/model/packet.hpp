#pragma once

#include <deque>
#include <vector>

#include "vlalab/model/config.hpp"
#include "vlalab/sim/env.hpp"

namespace vlalab::model {

// Everything the trunk consumes for one decision.
struct ObservationPacket {
    std::vector<sim::Image> views;                     // current frames: third[, wrist]
    std::vector<std::vector<sim::Image>> past_frames;  // per view, oldest first
    std::vector<int> instruction_ids;
    std::vector<float> proprio;  // proprio_hist * proprio_dim, oldest first
    int proprio_hist = 8;
    int proprio_dim = 4;
};

// Builds packets during a rollout, mirroring dataset semantics: observations
// pass through the dataset's 8-bit quantization, proprioception history is
// oldest-first and padded by repeating the earliest entry.
class ObservationAssembler {
public:
    ObservationAssembler(const DesignConfig& cfg, std::vector<int> instruction_ids)
        : cfg_(cfg), instr_(std::move(instruction_ids)) {
        frames_.resize(cfg.multi_view ? 2 : 1);
    }

    void observe(const sim::Env& env) {
        auto push_view = [&](size_t slot, sim::CameraKind cam) {
            sim::Image img = env.observe(cam);
            auto q = sim::quantize(img);
            frames_[slot].push_back(sim::dequantize(q.data(), q.size()));
            while (static_cast<int>(frames_[slot].size()) > cfg_.history_frames + 1)
                frames_[slot].pop_front();
        };
        push_view(0, sim::CameraKind::third_person);
        if (cfg_.multi_view) push_view(1, sim::CameraKind::wrist);

        std::vector<double> now;
        for (const auto& g : env.state.grippers) {
            auto p = sim::proprio_of(g);
            now.insert(now.end(), p.begin(), p.end());
        }
        proprio_.push_back(std::move(now));
        while (static_cast<int>(proprio_.size()) > cfg_.history_proprioception_size)
            proprio_.pop_front();
    }

    ObservationPacket packet() const {
        ObservationPacket pkt;
        pkt.proprio_hist = cfg_.history_proprioception_size;
        pkt.proprio_dim = cfg_.proprio_dim();
        pkt.instruction_ids = instr_;

        for (const auto& dq : frames_) {
            pkt.views.push_back(dq.back());
            std::vector<sim::Image> past;
            for (int i = cfg_.history_frames; i >= 1; --i) {
                int idx = static_cast<int>(dq.size()) - 1 - i;
                past.push_back(dq[static_cast<size_t>(std::max(idx, 0))]);
            }
            pkt.past_frames.push_back(std::move(past));
        }

        int hist = cfg_.history_proprioception_size;
        int pdim = cfg_.proprio_dim();
        pkt.proprio.resize(static_cast<size_t>(hist) * pdim);
        for (int h = 0; h < hist; ++h) {
            int src = std::max(0, static_cast<int>(proprio_.size()) - hist + h);
            for (int j = 0; j < pdim; ++j)
                pkt.proprio[static_cast<size_t>(h) * pdim + j] =
                    static_cast<float>(proprio_[static_cast<size_t>(src)][static_cast<size_t>(j)]);
        }
        return pkt;
    }

private:
    DesignConfig cfg_;
    std::vector<int> instr_;
    std::vector<std::deque<sim::Image>> frames_;
    std::deque<std::vector<double>> proprio_;
};

}  // namespace vlalab::model
