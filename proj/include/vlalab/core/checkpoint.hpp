#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vlalab/core/io.hpp"

namespace vlalab {

// Named-tensor container with a byte-exact file representation:
// a text manifest (name, shape, element offset per tensor) followed by a
// contiguous little-endian float32 payload.
struct Checkpoint {
    struct Item {
        std::string name;
        std::vector<int> shape;
        std::vector<float> data;
    };

    std::vector<Item> items;

    static constexpr const char* kMagic = "agckpt 1";

    void add(const std::string& name, std::vector<int> shape, std::vector<float> data) {
        int64_t n = 1;
        for (int d : shape) n *= d;
        if (n != static_cast<int64_t>(data.size()))
            throw IoError("checkpoint: shape/data mismatch for " + name);
        if (name.find(' ') != std::string::npos || name.find('\n') != std::string::npos)
            throw IoError("checkpoint: tensor name contains whitespace: " + name);
        items.push_back({name, std::move(shape), std::move(data)});
    }

    const Item* find(const std::string& name) const {
        for (const auto& it : items)
            if (it.name == name) return &it;
        return nullptr;
    }

    std::vector<uint8_t> serialize() const {
        std::ostringstream manifest;
        manifest << kMagic << "\n";
        uint64_t offset = 0;
        for (const auto& it : items) {
            manifest << "tensor " << it.name << " " << it.shape.size();
            for (int d : it.shape) manifest << " " << d;
            manifest << " " << offset << "\n";
            offset += it.data.size();
        }
        manifest << "end\n";
        ByteWriter w;
        w.str(manifest.str());
        for (const auto& it : items) w.f32s(it.data.data(), it.data.size());
        return std::move(w.bytes);
    }

    static Checkpoint deserialize(const std::vector<uint8_t>& bytes) {
        // split manifest (up to and including "end\n") from payload
        const std::string end_tag = "\nend\n";
        std::string head(reinterpret_cast<const char*>(bytes.data()),
                         std::min<size_t>(bytes.size(), 1 << 22));
        size_t end_pos = head.find(end_tag);
        if (end_pos == std::string::npos) throw IoError("checkpoint: manifest end not found");
        size_t payload_start = end_pos + end_tag.size();
        std::istringstream manifest(head.substr(0, end_pos + 1));

        std::string magic_line;
        std::getline(manifest, magic_line);
        if (magic_line != kMagic) throw IoError("checkpoint: bad magic");

        Checkpoint ck;
        std::string tok;
        while (manifest >> tok) {
            if (tok != "tensor") throw IoError("checkpoint: unexpected token " + tok);
            Item it;
            size_t rank = 0;
            uint64_t offset = 0;
            manifest >> it.name >> rank;
            int64_t n = 1;
            for (size_t i = 0; i < rank; ++i) {
                int d = 0;
                manifest >> d;
                it.shape.push_back(d);
                n *= d;
            }
            manifest >> offset;
            if (!manifest) throw IoError("checkpoint: truncated manifest");
            size_t byte_off = payload_start + offset * 4;
            if (byte_off + static_cast<size_t>(n) * 4 > bytes.size())
                throw IoError("checkpoint: payload out of range for " + it.name);
            it.data.resize(static_cast<size_t>(n));
            std::memcpy(it.data.data(), bytes.data() + byte_off, static_cast<size_t>(n) * 4);
            ck.items.push_back(std::move(it));
        }
        return ck;
    }

    void save(const std::string& path) const { write_file(path, serialize()); }

    static Checkpoint load(const std::string& path) { return deserialize(read_file(path)); }
};

}  // namespace vlalab
