#pragma once

#include <map>
#include <string>
#include <vector>

namespace coe {

// Closed token alphabet for protocol-formatted responses: section tags,
// MM:SS time tokens covering the world horizon, range/list separators,
// template words and answer words. At most 256 tokens.
class Vocab {
public:
    static constexpr const char* kBosToken = "<bos>";
    static constexpr const char* kEosToken = "<eos>";

    // horizon_seconds is the largest representable time token (anchor ends
    // reach n_frames / fps).
    static Vocab build(int horizon_seconds);

    // Arbitrary alphabet; must contain <bos> and <eos>, stay unique and not
    // exceed 256 tokens.
    static Vocab from_tokens(const std::vector<std::string>& tokens);

    int size() const { return static_cast<int>(tokens_.size()); }
    int bos() const { return bos_; }
    int eos() const { return eos_; }

    bool has(const std::string& token) const { return index_.count(token) > 0; }
    int id(const std::string& token) const;  // throws DataError when unknown
    const std::string& token(int id) const;  // throws DataError when out of range

    // Protocol-aware scan: section tags, MM:SS tokens, '-', ';' and
    // whitespace-separated words. Throws DataError on out-of-alphabet text.
    std::vector<int> tokenize(const std::string& text) const;

    // Joins tokens with single spaces, skipping BOS/EOS. The result is
    // parse-equivalent (the protocol parser is whitespace-insensitive
    // between tokens).
    std::string detokenize(const std::vector<int>& ids) const;

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
    int bos_ = 0;
    int eos_ = 0;

    void add(const std::string& token);
};

}  // namespace coe
