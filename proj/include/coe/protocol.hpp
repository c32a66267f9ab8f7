#pragma once

#include <optional>
#include <string>
#include <vector>

#include "coe/errors.hpp"

namespace coe {

// Half-open time range [start_s, end_s) in seconds. Serialized form is
// MM:SS-MM:SS, so a representable interval has whole-second endpoints
// below one hour.
struct TimeInterval {
    double start_s = 0.0;
    double end_s = 0.0;

    bool operator==(const TimeInterval&) const = default;
};

// A parsed three-section response: Temporal Anchors, Reasoning Draft, Answer.
// Canonical form: anchors sorted by start and strictly separated (overlapping
// or touching ranges are merged by the parser), draft and answer trimmed.
struct CoEResponse {
    std::vector<TimeInterval> anchors;
    std::string draft;
    std::string answer;
    bool truncated = false;

    bool operator==(const CoEResponse&) const = default;
};

// Sorted, de-duplicated frame indices together with the fps / frame-count
// context they were derived under.
struct FrameSet {
    std::vector<int> indices;
    double fps = 1.0;
    int n_frames = 0;

    std::size_t size() const { return indices.size(); }
    bool empty() const { return indices.empty(); }
    bool contains(int frame) const;

    bool operator==(const FrameSet&) const = default;
};

struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

struct MissingSectionError : ParseError {
    explicit MissingSectionError(const std::string& section_name)
        : ParseError("missing section: " + section_name), section(section_name) {}
    std::string section;
};

struct MalformedTimestampError : ParseError {
    explicit MalformedTimestampError(const std::string& raw_text)
        : ParseError("malformed timestamp: '" + raw_text + "'"), raw(raw_text) {}
    std::string raw;
};

struct SectionOrderError : ParseError {
    explicit SectionOrderError(const std::string& msg) : ParseError("section order violation: " + msg) {}
};

struct SerializeError : Error {
    explicit SerializeError(const std::string& msg) : Error(msg) {}
};

// Section delimiters, in required order.
inline constexpr const char* kAnchorsOpen = "<Temporal Anchors>";
inline constexpr const char* kAnchorsClose = "</Temporal Anchors>";
inline constexpr const char* kDraftOpen = "<Reasoning Draft>";
inline constexpr const char* kDraftClose = "</Reasoning Draft>";
inline constexpr const char* kAnswerOpen = "<Answer>";
inline constexpr const char* kAnswerClose = "</Answer>";

// Formats whole seconds in [0, 3600) as MM:SS.
std::string format_mmss(int seconds);

// Strict parse of the three-section protocol. Anchors are canonicalized
// (sorted by start, overlapping/touching ranges merged). An empty anchor list
// is valid. Only whitespace may appear outside the sections.
CoEResponse parse_response(const std::string& text);

// Canonical single-space-delimited serialization; parse(serialize(r)) == r
// for any response satisfying the canonical invariants. Throws SerializeError
// on non-whole-second or out-of-range endpoints, degenerate intervals,
// non-canonical anchor order, an empty answer, or section tags embedded in
// the draft/answer payloads.
std::string serialize_response(const CoEResponse& r);

// Every maximal MM:SS substring in the draft that is not an endpoint of a
// MM:SS-MM:SS range, in order of appearance, duplicates kept, as seconds.
std::vector<double> extract_draft_timestamps(const std::string& draft);

// Frame i is included iff [i/fps, (i+1)/fps) intersects any interval;
// result clipped to [0, n_frames).
FrameSet intervals_to_frames(const std::vector<TimeInterval>& intervals, double fps, int n_frames);

// Frame containing time point t, or nullopt when out of [0, n_frames).
std::optional<int> point_to_frame(double t_seconds, double fps, int n_frames);

FrameSet points_to_frames(const std::vector<double>& points, double fps, int n_frames);

FrameSet frame_set_from_indices(std::vector<int> indices, double fps, int n_frames);

// Minimal canonical intervals covering exactly the given frames (consecutive
// frames collapse into one range).
std::vector<TimeInterval> frames_to_intervals(const FrameSet& frames);

// One [f/fps, (f+1)/fps) interval per frame; covers the same frame set with
// a fixed-shape range per anchor.
std::vector<TimeInterval> frames_to_unit_intervals(const FrameSet& frames);

}  // namespace coe
