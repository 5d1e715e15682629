#pragma once

#include <map>
#include <string>
#include <vector>

#include "vlalab/ag/tape.hpp"
#include "vlalab/ag/tensor.hpp"
#include "vlalab/core/rng.hpp"

namespace vlalab::ag {

enum class Init { zero, one, trunc_normal };

// Named parameter set. Initialization streams are keyed by (seed, name), so a
// parameter's initial values do not depend on what else exists in the store.
template <typename T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor<T> tensor;
    };

    explicit ParamStore(uint64_t init_seed = 0) : seed_(init_seed) {}

    int add(const std::string& name, Shape shape, Init init, double std = 0.02) {
        if (index_.count(name)) throw GraphError("duplicate parameter: " + name);
        Tensor<T> t = Tensor<T>::zeros(shape, true);
        switch (init) {
            case Init::zero:
                break;
            case Init::one:
                for (auto& x : t.values()) x = T(1);
                break;
            case Init::trunc_normal: {
                Rng rng(derive_seed(seed_, "param.init", fnv1a64(name)));
                for (auto& x : t.values()) x = static_cast<T>(rng.truncated_normal(std));
                break;
            }
        }
        entries_.push_back({name, std::move(t)});
        int id = static_cast<int>(entries_.size()) - 1;
        index_[name] = id;
        return id;
    }

    int id(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw GraphError("unknown parameter: " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<T>& tensor(int id) { return entries_[id].tensor; }
    const Tensor<T>& tensor(int id) const { return entries_[id].tensor; }
    Tensor<T>& tensor(const std::string& name) { return entries_[id(name)].tensor; }
    const Tensor<T>& tensor(const std::string& name) const { return entries_[id(name)].tensor; }
    const std::string& name(int id) const { return entries_[id].name; }

    int count() const { return static_cast<int>(entries_.size()); }

    int64_t total_scalars() const {
        int64_t n = 0;
        for (const auto& e : entries_) n += e.tensor.size();
        return n;
    }

    int64_t total_scalars_with_prefix(const std::string& prefix) const {
        int64_t n = 0;
        for (const auto& e : entries_)
            if (e.name.rfind(prefix, 0) == 0) n += e.tensor.size();
        return n;
    }

    // Binds the parameter as a tape leaf; one node per parameter per tape.
    Var<T> use(Tape<T>& tape, int id) const {
        auto key = std::make_pair(&tape, id);
        // parameters are few; linear scan of tape-local cache
        for (const auto& [pid, nidx] : tape.param_nodes())
            if (pid == id) return Var<T>{&tape, nidx};
        return tape.leaf(entries_[id].tensor, id);
    }

    Var<T> use(Tape<T>& tape, const std::string& name) const { return use(tape, id(name)); }

    uint64_t init_seed() const { return seed_; }

private:
    uint64_t seed_;
    std::vector<Entry> entries_;
    std::map<std::string, int> index_;
};

// Per-parameter gradient accumulator matching a store's layout.
template <typename T>
struct GradBuffer {
    std::vector<std::vector<T>> grads;

    explicit GradBuffer(const ParamStore<T>& ps) {
        grads.resize(ps.count());
        for (int i = 0; i < ps.count(); ++i)
            grads[i].assign(static_cast<size_t>(ps.tensor(i).size()), T(0));
    }

    void zero() {
        for (auto& g : grads) std::fill(g.begin(), g.end(), T(0));
    }

    // Collects leaf gradients from a tape after backward, scaled by `scale`.
    void accumulate_from(const Tape<T>& tape, double scale) {
        for (const auto& [pid, nidx] : tape.param_nodes()) {
            const auto& node = tape.node(Var<T>{const_cast<Tape<T>*>(&tape), nidx});
            if (node.grad.empty()) continue;
            auto& dst = grads[pid];
            for (size_t i = 0; i < dst.size(); ++i)
                dst[i] += static_cast<T>(static_cast<double>(node.grad[i]) * scale);
        }
    }

    void add(const GradBuffer& other) {
        for (size_t p = 0; p < grads.size(); ++p)
            for (size_t i = 0; i < grads[p].size(); ++i) grads[p][i] += other.grads[p][i];
    }
};

}  // namespace vlalab::ag
