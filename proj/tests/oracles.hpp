// Independent brute-force oracles used by the unit and acceptance suites.
// These deliberately re-derive results through different code paths than the
// library implementations they check.
#pragma once

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "coe/datagen.hpp"
#include "coe/protocol.hpp"
#include "coe/rng.hpp"

namespace oracles {

// Per-frame sweep computing the measure of overlap between the frame's time
// span and each interval (length-based, unlike the inequality test in the
// implementation).
inline std::vector<int> frames_by_sweep(const std::vector<coe::TimeInterval>& intervals, double fps,
                                        int n_frames) {
    std::vector<int> out;
    for (int i = 0; i < n_frames; ++i) {
        const double lo = i / fps, hi = (i + 1) / fps;
        for (const coe::TimeInterval& iv : intervals) {
            const double overlap = std::min(hi, iv.end_s) - std::max(lo, iv.start_s);
            if (overlap > 0.0) {
                out.push_back(i);
                break;
            }
        }
    }
    return out;
}

// Set metrics by dense membership enumeration over [0, n).
inline double f1_by_enumeration(const coe::FrameSet& a, const coe::FrameSet& b, int n) {
    std::vector<bool> in_a(n, false), in_b(n, false);
    for (int i : a.indices) in_a[i] = true;
    for (int i : b.indices) in_b[i] = true;
    int inter = 0, na = 0, nb = 0;
    for (int i = 0; i < n; ++i) {
        na += in_a[i];
        nb += in_b[i];
        inter += in_a[i] && in_b[i];
    }
    if (na + nb == 0) return 0.0;
    return 2.0 * inter / static_cast<double>(na + nb);
}

inline double iou_by_enumeration(const coe::FrameSet& a, const coe::FrameSet& b, int n) {
    std::vector<bool> in_a(n, false), in_b(n, false);
    for (int i : a.indices) in_a[i] = true;
    for (int i : b.indices) in_b[i] = true;
    int inter = 0, uni = 0;
    for (int i = 0; i < n; ++i) {
        inter += in_a[i] && in_b[i];
        uni += in_a[i] || in_b[i];
    }
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / uni;
}

// O(P*N) pairwise-comparison AUROC with half credit on ties.
inline double auroc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    long pairs = 0;
    for (std::size_t p = 0; p < scores.size(); ++p) {
        if (labels[p] == 0) continue;
        for (std::size_t q = 0; q < scores.size(); ++q) {
            if (labels[q] != 0) continue;
            ++pairs;
            if (scores[p] > scores[q])
                wins += 1.0;
            else if (scores[p] == scores[q])
                wins += 0.5;
        }
    }
    return pairs == 0 ? 0.5 : wins / pairs;
}

// Random canonical protocol responses for round-trip properties.
inline coe::CoEResponse random_response(coe::Rng& rng) {
    coe::CoEResponse r;
    const int n_anchors = static_cast<int>(rng.below(5));
    int cursor = static_cast<int>(rng.below(60));
    for (int a = 0; a < n_anchors && cursor < 3500; ++a) {
        const int start = cursor;
        const int end = start + 1 + static_cast<int>(rng.below(50));
        if (end >= 3600) break;
        r.anchors.push_back({static_cast<double>(start), static_cast<double>(end)});
        cursor = end + 1 + static_cast<int>(rng.below(40));  // strict gap keeps it canonical
    }
    static const char* words[] = {"based", "on", "the", "entry", "we", "see", "result", "evidence"};
    std::string draft;
    const int n_words = 1 + static_cast<int>(rng.below(8));
    for (int i = 0; i < n_words; ++i) {
        if (!draft.empty()) draft += ' ';
        if (rng.uniform() < 0.3) {
            draft += "at " + coe::format_mmss(static_cast<int>(rng.below(3600)));
        } else {
            draft += words[rng.below(8)];
        }
    }
    r.draft = draft;
    static const char* answers[] = {"Yes", "No", "3", "00:07", "move"};
    r.answer = answers[rng.below(5)];
    return r;
}

// Independent interpreter: re-derives the answer and key frames for an
// emitted question directly from the world script, by parsing the question
// text. Separate logic from the template instantiation it audits.
struct Interpretation {
    std::string answer;
    std::vector<int> key_frames;
};

inline std::optional<int> object_by_phrase(const coe::WorldSpec& w, const std::string& color,
                                           const std::string& shape) {
    for (std::size_t o = 0; o < w.objects.size(); ++o)
        if (color == coe::color_word(w.objects[o].color) && shape == coe::shape_word(w.objects[o].shape))
            return static_cast<int>(o);
    return std::nullopt;
}

inline std::optional<Interpretation> interpret_question(const coe::WorldSpec& w,
                                                        const std::string& question) {
    std::vector<std::string> tok;
    {
        std::istringstream iss(question);
        std::string t;
        while (iss >> t) tok.push_back(t);
    }
    const int spf = static_cast<int>(std::lround(1.0 / w.fps));
    auto mmss = [&](int frame) { return coe::format_mmss(frame * spf); };
    auto appear_of = [&](int obj) -> std::optional<int> {
        for (const coe::Event& e : w.events)
            if (e.kind == coe::EventKind::Appear && e.subject == obj) return e.frame;
        return std::nullopt;
    };

    // "when does the C S first appear ?"
    if (tok.size() == 8 && tok[0] == "when") {
        auto obj = object_by_phrase(w, tok[3], tok[4]);
        if (!obj) return std::nullopt;
        auto f = appear_of(*obj);
        if (!f) return std::nullopt;
        return Interpretation{mmss(*f), {*f}};
    }
    // "does the C1 S1 collide with the C2 S2 ?" -- evidence is the pair's
    // joint event history
    if (tok.size() == 10 && tok[0] == "does") {
        auto a = object_by_phrase(w, tok[2], tok[3]);
        auto b = object_by_phrase(w, tok[7], tok[8]);
        if (!a || !b) return std::nullopt;
        std::vector<int> frames, collisions;
        for (const coe::Event& e : w.events) {
            const bool ia = e.subject == *a || (e.partner && *e.partner == *a);
            const bool ib = e.subject == *b || (e.partner && *e.partner == *b);
            if (!ia && !ib) continue;
            frames.push_back(e.frame);
            if (e.kind == coe::EventKind::Collide && ia && ib) collisions.push_back(e.frame);
        }
        std::vector<int>& key = collisions.empty() ? frames : collisions;
        std::sort(key.begin(), key.end());
        key.erase(std::unique(key.begin(), key.end()), key.end());
        return Interpretation{collisions.empty() ? "No" : "Yes", key};
    }
    // "how many K events occur ?"
    if (tok.size() == 6 && tok[0] == "how") {
        auto kind = coe::kind_from_word(tok[2]);
        if (!kind) return std::nullopt;
        int count = 0;
        std::vector<int> frames;
        for (const coe::Event& e : w.events)
            if (e.kind == *kind) {
                ++count;
                frames.push_back(e.frame);
            }
        if (count == 0) return std::nullopt;
        std::sort(frames.begin(), frames.end());
        frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
        return Interpretation{std::to_string(count), frames};
    }
    // "what happens immediately after the C S appears ?" -- the subject's
    // own (unique) next participation
    if (tok.size() == 9 && tok[0] == "what") {
        auto obj = object_by_phrase(w, tok[5], tok[6]);
        if (!obj) return std::nullopt;
        auto fa = appear_of(*obj);
        if (!fa) return std::nullopt;
        const coe::Event* next = nullptr;
        int participations = 0;
        for (const coe::Event& e : w.events) {
            if (e.frame <= *fa) continue;
            if (e.subject != *obj && !(e.partner && *e.partner == *obj)) continue;
            ++participations;
            if (next == nullptr || e.frame < next->frame) next = &e;
        }
        if (next == nullptr || participations != 1) return std::nullopt;
        std::vector<int> key = {*fa, next->frame};
        std::sort(key.begin(), key.end());
        return Interpretation{coe::kind_word(next->kind), key};
    }
    return std::nullopt;
}

}  // namespace oracles
