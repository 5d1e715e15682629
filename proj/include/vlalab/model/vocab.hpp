#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vlalab::model {

// Word-level vocabulary. File format: one token per line, the line number is
// the id. Id 0 is the reserved unknown token, id 1 the class-token sentinel.
class Vocab {
public:
    static constexpr int kUnkId = 0;
    static constexpr int kClsId = 1;

    // Vocabulary over the simulator task grammar.
    static Vocab build_default();

    static Vocab from_tokens(std::vector<std::string> tokens);

    // Lowercased whitespace tokenization; unknown words map to the UNK id.
    std::vector<int> tokenize(const std::string& text) const;

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_.at(static_cast<size_t>(id)); }

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

    std::string file_text() const;
    uint64_t hash() const;  // FNV-1a over the file text

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
};

}  // namespace vlalab::model
