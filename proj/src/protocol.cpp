#include "coe/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace coe {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

bool whitespace_only(const std::string& s, std::size_t from, std::size_t to) {
    for (std::size_t i = from; i < to; ++i)
        if (!is_space(s[i])) return false;
    return true;
}

// Parses exactly "MM:SS" at s[pos..pos+5). Returns seconds or -1.
int parse_mmss_at(const std::string& s, std::size_t pos) {
    if (pos + 5 > s.size()) return -1;
    auto digit = [&](std::size_t i) { return s[i] >= '0' && s[i] <= '9'; };
    if (!digit(pos) || !digit(pos + 1) || s[pos + 2] != ':' || !digit(pos + 3) || !digit(pos + 4))
        return -1;
    const int mm = (s[pos] - '0') * 10 + (s[pos + 1] - '0');
    const int ss = (s[pos + 3] - '0') * 10 + (s[pos + 4] - '0');
    if (mm > 59 || ss > 59) return -1;
    return mm * 60 + ss;
}

// One anchor segment: "MM:SS-MM:SS" with optional whitespace between tokens.
TimeInterval parse_anchor_segment(const std::string& raw) {
    const std::string t = trim(raw);
    std::size_t pos = 0;
    const int start = parse_mmss_at(t, pos);
    if (start < 0) throw MalformedTimestampError(raw);
    pos += 5;
    while (pos < t.size() && is_space(t[pos])) ++pos;
    if (pos >= t.size() || t[pos] != '-') throw MalformedTimestampError(raw);
    ++pos;
    while (pos < t.size() && is_space(t[pos])) ++pos;
    const int end = parse_mmss_at(t, pos);
    if (end < 0) throw MalformedTimestampError(raw);
    pos += 5;
    if (pos != t.size()) throw MalformedTimestampError(raw);
    if (start >= end) throw MalformedTimestampError(raw);
    return {static_cast<double>(start), static_cast<double>(end)};
}

std::vector<TimeInterval> parse_anchor_list(const std::string& content) {
    std::vector<TimeInterval> out;
    if (trim(content).empty()) return out;
    std::size_t begin = 0;
    while (true) {
        const std::size_t semi = content.find(';', begin);
        const std::string segment =
            content.substr(begin, semi == std::string::npos ? std::string::npos : semi - begin);
        out.push_back(parse_anchor_segment(segment));
        if (semi == std::string::npos) break;
        begin = semi + 1;
    }
    return out;
}

void canonicalize_anchors(std::vector<TimeInterval>& anchors) {
    std::sort(anchors.begin(), anchors.end(),
              [](const TimeInterval& a, const TimeInterval& b) { return a.start_s < b.start_s; });
    // merge overlaps; touching half-open ranges are disjoint and stay apart
    std::vector<TimeInterval> merged;
    for (const TimeInterval& iv : anchors) {
        if (!merged.empty() && iv.start_s < merged.back().end_s)
            merged.back().end_s = std::max(merged.back().end_s, iv.end_s);
        else
            merged.push_back(iv);
    }
    anchors = std::move(merged);
}

struct Section {
    const char* open;
    const char* close;
    const char* name;
};

constexpr Section kSections[3] = {
    {kAnchorsOpen, kAnchorsClose, "TemporalAnchors"},
    {kDraftOpen, kDraftClose, "ReasoningDraft"},
    {kAnswerOpen, kAnswerClose, "Answer"},
};

}  // namespace

bool FrameSet::contains(int frame) const {
    return std::binary_search(indices.begin(), indices.end(), frame);
}

std::string format_mmss(int seconds) {
    if (seconds < 0 || seconds >= 3600)
        throw SerializeError("time " + std::to_string(seconds) + "s not representable as MM:SS");
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%02d:%02d", seconds / 60, seconds % 60);
    return buf;
}

CoEResponse parse_response(const std::string& text) {
    std::size_t open_pos[3], close_pos[3], open_len[3], close_len[3];
    for (int s = 0; s < 3; ++s) {
        const std::string open = kSections[s].open;
        const std::string close = kSections[s].close;
        const std::size_t op = text.find(open);
        const std::size_t cp = text.find(close);
        if (op == std::string::npos || cp == std::string::npos)
            throw MissingSectionError(kSections[s].name);
        open_pos[s] = op;
        close_pos[s] = cp;
        open_len[s] = open.size();
        close_len[s] = close.size();
    }
    // Tags must appear in strict order with nothing but whitespace between
    // sections or outside them.
    std::size_t order[6] = {open_pos[0], close_pos[0], open_pos[1],
                            close_pos[1], open_pos[2], close_pos[2]};
    for (int i = 0; i + 1 < 6; ++i)
        if (order[i] >= order[i + 1]) throw SectionOrderError("protocol tags out of order");
    if (!whitespace_only(text, 0, open_pos[0]) ||
        !whitespace_only(text, close_pos[0] + close_len[0], open_pos[1]) ||
        !whitespace_only(text, close_pos[1] + close_len[1], open_pos[2]) ||
        !whitespace_only(text, close_pos[2] + close_len[2], text.size()))
        throw SectionOrderError("content outside protocol sections");

    auto content = [&](int s) {
        const std::size_t from = open_pos[s] + open_len[s];
        return text.substr(from, close_pos[s] - from);
    };

    CoEResponse r;
    r.anchors = parse_anchor_list(content(0));
    canonicalize_anchors(r.anchors);
    r.draft = trim(content(1));
    r.answer = trim(content(2));
    return r;
}

std::string serialize_response(const CoEResponse& r) {
    for (std::size_t i = 0; i < r.anchors.size(); ++i) {
        const TimeInterval& iv = r.anchors[i];
        const double si = std::round(iv.start_s), ei = std::round(iv.end_s);
        if (si != iv.start_s || ei != iv.end_s)
            throw SerializeError("anchor endpoints must be whole seconds");
        if (iv.start_s < 0 || iv.end_s >= 3600 || iv.start_s >= iv.end_s)
            throw SerializeError("anchor [" + std::to_string(iv.start_s) + ", " +
                                 std::to_string(iv.end_s) + ") not representable");
        if (i > 0 && r.anchors[i].start_s < r.anchors[i - 1].end_s)
            throw SerializeError("anchors not in canonical (sorted, merged) form");
    }
    if (r.answer.empty()) throw SerializeError("answer must be nonempty");
    for (const std::string* payload : {&r.draft, &r.answer})
        for (const char* tag : {kAnchorsOpen, kAnchorsClose, kDraftOpen, kDraftClose, kAnswerOpen, kAnswerClose})
            if (payload->find(tag) != std::string::npos)
                throw SerializeError("section tag embedded in payload");

    std::string out = kAnchorsOpen;
    for (std::size_t i = 0; i < r.anchors.size(); ++i) {
        out += ' ';
        out += format_mmss(static_cast<int>(r.anchors[i].start_s));
        out += '-';
        out += format_mmss(static_cast<int>(r.anchors[i].end_s));
        if (i + 1 < r.anchors.size()) out += ';';
    }
    out += ' ';
    out += kAnchorsClose;
    out += ' ';
    out += kDraftOpen;
    if (!r.draft.empty()) {
        out += ' ';
        out += r.draft;
    }
    out += ' ';
    out += kDraftClose;
    out += ' ';
    out += kAnswerOpen;
    out += ' ';
    out += r.answer;
    out += ' ';
    out += kAnswerClose;
    return out;
}

std::vector<double> extract_draft_timestamps(const std::string& draft) {
    // Locate maximal MM:SS tokens: not preceded/followed by a digit or ':'.
    struct Token {
        std::size_t begin, end;
        int seconds;
    };
    auto boundary = [&](std::size_t i) {
        if (i >= draft.size()) return true;
        const char c = draft[i];
        return !(c >= '0' && c <= '9') && c != ':';
    };
    std::vector<Token> tokens;
    for (std::size_t i = 0; i + 5 <= draft.size(); ++i) {
        const int sec = parse_mmss_at(draft, i);
        if (sec < 0) continue;
        if ((i == 0 || boundary(i - 1)) && boundary(i + 5)) {
            tokens.push_back({i, i + 5, sec});
            i += 4;
        }
    }
    // Drop tokens joined by '-' into a range.
    std::vector<bool> in_range(tokens.size(), false);
    for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
        std::size_t i = tokens[t].end;
        while (i < draft.size() && is_space(draft[i])) ++i;
        if (i < draft.size() && draft[i] == '-') {
            ++i;
            while (i < draft.size() && is_space(draft[i])) ++i;
            if (i == tokens[t + 1].begin) {
                in_range[t] = true;
                in_range[t + 1] = true;
            }
        }
    }
    std::vector<double> points;
    for (std::size_t t = 0; t < tokens.size(); ++t)
        if (!in_range[t]) points.push_back(static_cast<double>(tokens[t].seconds));
    return points;
}

FrameSet intervals_to_frames(const std::vector<TimeInterval>& intervals, double fps, int n_frames) {
    FrameSet out;
    out.fps = fps;
    out.n_frames = n_frames;
    for (int i = 0; i < n_frames; ++i) {
        const double frame_begin = i / fps;
        const double frame_end = (i + 1) / fps;
        for (const TimeInterval& iv : intervals) {
            if (frame_begin < iv.end_s && frame_end > iv.start_s) {
                out.indices.push_back(i);
                break;
            }
        }
    }
    return out;
}

std::optional<int> point_to_frame(double t_seconds, double fps, int n_frames) {
    const int frame = static_cast<int>(std::floor(t_seconds * fps));
    if (frame < 0 || frame >= n_frames) return std::nullopt;
    return frame;
}

FrameSet points_to_frames(const std::vector<double>& points, double fps, int n_frames) {
    FrameSet out;
    out.fps = fps;
    out.n_frames = n_frames;
    for (double p : points)
        if (auto f = point_to_frame(p, fps, n_frames)) out.indices.push_back(*f);
    std::sort(out.indices.begin(), out.indices.end());
    out.indices.erase(std::unique(out.indices.begin(), out.indices.end()), out.indices.end());
    return out;
}

FrameSet frame_set_from_indices(std::vector<int> indices, double fps, int n_frames) {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    FrameSet out;
    out.indices = std::move(indices);
    out.fps = fps;
    out.n_frames = n_frames;
    return out;
}

std::vector<TimeInterval> frames_to_intervals(const FrameSet& frames) {
    std::vector<TimeInterval> out;
    const double spf = 1.0 / frames.fps;
    for (std::size_t i = 0; i < frames.indices.size();) {
        std::size_t j = i;
        while (j + 1 < frames.indices.size() && frames.indices[j + 1] == frames.indices[j] + 1) ++j;
        out.push_back({frames.indices[i] * spf, (frames.indices[j] + 1) * spf});
        i = j + 1;
    }
    return out;
}

std::vector<TimeInterval> frames_to_unit_intervals(const FrameSet& frames) {
    std::vector<TimeInterval> out;
    const double spf = 1.0 / frames.fps;
    for (int f : frames.indices) out.push_back({f * spf, (f + 1) * spf});
    return out;
}

}  // namespace coe
