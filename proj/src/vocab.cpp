#include "coe/vocab.hpp"

#include <cctype>

#include "coe/errors.hpp"
#include "coe/protocol.hpp"

namespace coe {

namespace {

// Words used by the question/guidance templates plus the closed answer sets.
const char* kWords[] = {
    "the",       "a",        "red",      "blue",    "green",   "yellow",  "square",
    "circle",    "triangle", "first",    "appears", "appear",  "disappears",
    "disappear", "moves",    "move",     "collides", "collide", "at",      "and",
    "they",      "never",    "with",     "then",    "event",   "events",  "follows",
    "occur",     "what",     "when",     "how",     "many",    "does",    "happens",
    "immediately", "after",  "are",      "seen",    ".",       "?",       "Yes",     "No",      "0",
    "1",         "2",        "3",        "4",       "5",       "6",       "7",
    "8",         "9",
};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

void Vocab::add(const std::string& token) {
    if (index_.count(token)) return;
    index_[token] = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
}

Vocab Vocab::build(int horizon_seconds) {
    Vocab v;
    v.add(kBosToken);
    v.add(kEosToken);
    v.bos_ = v.id(kBosToken);
    v.eos_ = v.id(kEosToken);
    for (const char* tag : {kAnchorsOpen, kAnchorsClose, kDraftOpen, kDraftClose, kAnswerOpen, kAnswerClose})
        v.add(tag);
    v.add("-");
    v.add(";");
    // Time tokens plus composite range-end tokens ("-MM:SS" and "-MM:SS;").
    // The composites keep the previous anchor time visible to a
    // previous-token decoder across range and list boundaries.
    for (int s = 0; s <= horizon_seconds; ++s) {
        const std::string t = format_mmss(s);
        v.add(t);
        v.add("-" + t);
        v.add("-" + t + ";");
    }
    for (const char* w : kWords) v.add(w);
    if (v.size() > 256)
        throw ConfigError("vocab: " + std::to_string(v.size()) +
                          " tokens exceeds the 256-token budget (horizon too long)");
    return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    for (const std::string& t : tokens) {
        if (v.index_.count(t)) throw ConfigError("vocab: duplicate token '" + t + "'");
        v.add(t);
    }
    if (!v.has(kBosToken) || !v.has(kEosToken))
        throw ConfigError("vocab: alphabet must include <bos> and <eos>");
    if (v.size() > 256) throw ConfigError("vocab: alphabet exceeds the 256-token budget");
    v.bos_ = v.id(kBosToken);
    v.eos_ = v.id(kEosToken);
    return v;
}

int Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw DataError("vocab: unknown token '" + token + "'");
    return it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw DataError("vocab: token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
    std::vector<int> ids;
    std::size_t i = 0;
    while (i < text.size()) {
        if (is_space(text[i])) {
            ++i;
            continue;
        }
        if (text[i] == '<') {
            bool matched = false;
            for (const char* tag :
                 {kAnchorsOpen, kAnchorsClose, kDraftOpen, kDraftClose, kAnswerOpen, kAnswerClose}) {
                const std::size_t len = std::string_view(tag).size();
                if (text.compare(i, len, tag) == 0) {
                    ids.push_back(id(tag));
                    i += len;
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
            throw DataError("tokenize: unknown '<...' sequence at offset " + std::to_string(i));
        }
        if (text[i] == '-') {
            // longest match: "-MM:SS;" then "-MM:SS" then bare '-'
            for (std::size_t len : {std::size_t{7}, std::size_t{6}, std::size_t{1}}) {
                if (i + len <= text.size() && has(text.substr(i, len))) {
                    ids.push_back(id(text.substr(i, len)));
                    i += len;
                    break;
                }
            }
            continue;
        }
        if (text[i] == ';') {
            ids.push_back(id(";"));
            ++i;
            continue;
        }
        // Time token or plain word: read to the next delimiter.
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j]) && text[j] != '-' && text[j] != ';' && text[j] != '<')
            ++j;
        ids.push_back(id(text.substr(i, j - i)));
        i = j;
    }
    return ids;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int t : ids) {
        if (t == bos_ || t == eos_) continue;
        if (!out.empty()) out += ' ';
        out += token(t);
    }
    return out;
}

}  // namespace coe
