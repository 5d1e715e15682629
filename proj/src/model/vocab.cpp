#include "vlalab/model/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "vlalab/core/io.hpp"
#include "vlalab/sim/env.hpp"

namespace vlalab::model {

Vocab Vocab::build_default() {
    std::vector<std::string> tokens = {"<unk>", "<cls>"};
    for (const auto& w : sim::grammar_words()) tokens.push_back(w);
    return from_tokens(std::move(tokens));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
    Vocab v;
    v.tokens_ = std::move(tokens);
    for (size_t i = 0; i < v.tokens_.size(); ++i)
        v.index_[v.tokens_[i]] = static_cast<int>(i);
    return v;
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
    std::string lowered = text;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::istringstream in(lowered);
    std::vector<int> ids;
    std::string w;
    while (in >> w) {
        auto it = index_.find(w);
        ids.push_back(it == index_.end() ? kUnkId : it->second);
    }
    return ids;
}

std::string Vocab::file_text() const {
    std::string out;
    for (const auto& t : tokens_) {
        out += t;
        out += "\n";
    }
    return out;
}

void Vocab::save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("vocab: cannot write " + path);
    f << file_text();
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("vocab: cannot read " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(f, line)) tokens.push_back(line);
    if (tokens.size() < 2 || tokens[0] != "<unk>" || tokens[1] != "<cls>")
        throw IoError("vocab: reserved ids 0/1 must be <unk>/<cls>");
    return from_tokens(std::move(tokens));
}

uint64_t Vocab::hash() const {
    std::string text = file_text();
    return fnv1a64_bytes(reinterpret_cast<const uint8_t*>(text.data()), text.size());
}

}  // namespace vlalab::model
