#include <doctest.h>

#include <string>

#include "coe/protocol.hpp"
#include "coe/rng.hpp"
#include "oracles.hpp"

using namespace coe;

namespace {
const std::string kBoxString =
    "<Temporal Anchors> 00:05-00:10; 00:45-00:50 </Temporal Anchors> "
    "<Reasoning Draft> Based on the entry at 00:05 and the result at 00:45... </Reasoning Draft> "
    "<Answer> Yes </Answer>";
}

TEST_CASE("reference protocol string parses") {
    const CoEResponse r = parse_response(kBoxString);
    REQUIRE(r.anchors.size() == 2);
    CHECK(r.anchors[0] == TimeInterval{5, 10});
    CHECK(r.anchors[1] == TimeInterval{45, 50});
    CHECK(r.answer == "Yes");
    CHECK(r.draft == "Based on the entry at 00:05 and the result at 00:45...");
}

TEST_CASE("empty anchors section is valid") {
    const CoEResponse r = parse_response(
        "<Temporal Anchors></Temporal Anchors><Reasoning Draft>x</Reasoning Draft><Answer>A</Answer>");
    CHECK(r.anchors.empty());
    CHECK(r.draft == "x");
    CHECK(r.answer == "A");
}

TEST_CASE("missing sections are typed") {
    try {
        parse_response("<Answer>Yes</Answer>");
        FAIL("expected MissingSectionError");
    } catch (const MissingSectionError& e) {
        CHECK(e.section == "TemporalAnchors");
    }
    CHECK_THROWS_AS(parse_response("<Temporal Anchors></Temporal Anchors><Answer>Y</Answer>"),
                    MissingSectionError);
}

TEST_CASE("section order and stray content are violations") {
    CHECK_THROWS_AS(
        parse_response("<Reasoning Draft>x</Reasoning Draft><Temporal Anchors></Temporal Anchors>"
                       "<Answer>Y</Answer>"),
        SectionOrderError);
    CHECK_THROWS_AS(parse_response("junk " + kBoxString), SectionOrderError);
    CHECK_THROWS_AS(parse_response(kBoxString + " trailing"), SectionOrderError);
}

TEST_CASE("malformed timestamps carry the raw text") {
    const std::string tmpl =
        "<Temporal Anchors> %s </Temporal Anchors><Reasoning Draft>d</Reasoning Draft>"
        "<Answer>A</Answer>";
    for (const char* bad : {"0:05-00:10", "00:65-00:70", "00:10-00:05", "00:05-00:05", "00:05",
                            "00:05-00:10;;00:20-00:25", "00:05 -", "aa:bb-cc:dd"}) {
        std::string text = tmpl;
        text.replace(text.find("%s"), 2, bad);
        CHECK_THROWS_AS(parse_response(text), MalformedTimestampError);
    }
}

TEST_CASE("anchors are canonicalized on parse") {
    const CoEResponse r = parse_response(
        "<Temporal Anchors> 00:45-00:50; 00:05-00:08; 00:07 - 00:10 </Temporal Anchors>"
        "<Reasoning Draft>d</Reasoning Draft><Answer>A</Answer>");
    REQUIRE(r.anchors.size() == 2);
    CHECK(r.anchors[0] == TimeInterval{5, 10});  // overlap merged
    CHECK(r.anchors[1] == TimeInterval{45, 50});

    // touching half-open ranges are disjoint and stay separate
    const CoEResponse t = parse_response(
        "<Temporal Anchors> 00:05-00:08; 00:08-00:10 </Temporal Anchors>"
        "<Reasoning Draft>d</Reasoning Draft><Answer>A</Answer>");
    REQUIRE(t.anchors.size() == 2);
    CHECK(t.anchors[0] == TimeInterval{5, 8});
    CHECK(t.anchors[1] == TimeInterval{8, 10});
}

TEST_CASE("serialization is canonical and sorted") {
    CoEResponse r;
    r.anchors = {{5, 10}, {45, 50}};
    r.draft = "d";
    r.answer = "A";
    CHECK(serialize_response(r).find("00:05-00:10; 00:45-00:50") != std::string::npos);

    CoEResponse unsorted = r;
    std::swap(unsorted.anchors[0], unsorted.anchors[1]);
    CHECK_THROWS_AS(serialize_response(unsorted), SerializeError);
}

TEST_CASE("degenerate and unrepresentable intervals are rejected") {
    CoEResponse r;
    r.draft = "d";
    r.answer = "A";
    r.anchors = {{5, 5}};
    CHECK_THROWS_AS(serialize_response(r), SerializeError);
    r.anchors = {{5.5, 7}};
    CHECK_THROWS_AS(serialize_response(r), SerializeError);
    r.anchors = {{10, 3700}};
    CHECK_THROWS_AS(serialize_response(r), SerializeError);
    r.anchors = {};
    r.answer = "";
    CHECK_THROWS_AS(serialize_response(r), SerializeError);
}

TEST_CASE("round trip of the reference response") {
    const CoEResponse r = parse_response(kBoxString);
    CHECK(parse_response(serialize_response(r)) == r);
}

TEST_CASE("draft timestamp extraction") {
    CHECK(extract_draft_timestamps("Based on the entry at 00:05 and the result at 00:45...") ==
          std::vector<double>{5, 45});
    CHECK(extract_draft_timestamps("no times here").empty());
    CHECK(extract_draft_timestamps("at 00:05, then 00:05 again") == std::vector<double>{5, 5});
    // range endpoints inside the draft are not point citations
    CHECK(extract_draft_timestamps("between 00:05-00:10 and at 00:20") == std::vector<double>{20});
    CHECK(extract_draft_timestamps("between 00:05 - 00:10, then 00:12") == std::vector<double>{12});
    // malformed time-like text is skipped, not an error
    CHECK(extract_draft_timestamps("costs 00:99 or 000:05 or 1:05").empty());
    CHECK(extract_draft_timestamps("12:34:56 is not a time token").empty());
}

TEST_CASE("interval to frame conversion") {
    const FrameSet f = intervals_to_frames({{5, 10}}, 1.0, 32);
    CHECK(f.indices == std::vector<int>{5, 6, 7, 8, 9});

    CHECK(point_to_frame(5.0, 1.0, 32) == 5);
    CHECK(point_to_frame(40.0, 1.0, 32) == std::nullopt);

    const FrameSet clipped = intervals_to_frames({{30, 50}}, 1.0, 32);
    CHECK(clipped.indices == std::vector<int>{30, 31});
    CHECK(intervals_to_frames({{40, 50}}, 1.0, 32).indices.empty());

    // half-open semantics: touching boundary contributes nothing
    CHECK(intervals_to_frames({{4, 5}}, 1.0, 32).indices == std::vector<int>{4});
}

TEST_CASE("frames round trip through intervals") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 4 + static_cast<int>(rng.below(60));
        std::vector<int> indices;
        for (int i = 0; i < n; ++i)
            if (rng.uniform() < 0.3) indices.push_back(i);
        const FrameSet fs = frame_set_from_indices(indices, 1.0, n);
        CHECK(intervals_to_frames(frames_to_intervals(fs), 1.0, n).indices == fs.indices);
        CHECK(intervals_to_frames(frames_to_unit_intervals(fs), 1.0, n).indices == fs.indices);
    }
}

TEST_CASE("interval conversion matches the sweep oracle") {
    Rng rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        const double fps = 1.0 / (1 + rng.below(4));
        const int n = 4 + static_cast<int>(rng.below(60));
        std::vector<TimeInterval> intervals;
        const int count = static_cast<int>(rng.below(4));
        for (int i = 0; i < count; ++i) {
            const double start = rng.uniform() * n / fps;
            intervals.push_back({start, start + rng.uniform() * 30.0});
        }
        CHECK(intervals_to_frames(intervals, fps, n).indices ==
              oracles::frames_by_sweep(intervals, fps, n));
    }
}

TEST_CASE("parse-serialize identity on random canonical responses") {
    Rng rng(5150);
    for (int trial = 0; trial < 2000; ++trial) {
        const CoEResponse r = oracles::random_response(rng);
        const std::string text = serialize_response(r);
        CHECK(parse_response(text) == r);
        // serialize(parse(.)) is a fixed point on parseable strings
        CHECK(serialize_response(parse_response(text)) == text);
    }
}

TEST_CASE("parser never crashes on arbitrary bytes") {
    Rng rng(616);
    int parsed = 0, rejected = 0;
    for (int trial = 0; trial < 20000; ++trial) {
        std::string s;
        if (trial % 3 == 0) {
            // mutated valid string
            s = serialize_response(oracles::random_response(rng));
            const int edits = 1 + static_cast<int>(rng.below(6));
            for (int e = 0; e < edits && !s.empty(); ++e) {
                const std::size_t pos = rng.below(s.size());
                switch (rng.below(3)) {
                    case 0: s[pos] = static_cast<char>(rng.below(256)); break;
                    case 1: s.erase(pos, 1); break;
                    default: s.insert(pos, 1, static_cast<char>(32 + rng.below(95))); break;
                }
            }
        } else {
            const std::size_t len = rng.below(160);
            for (std::size_t i = 0; i < len; ++i) s += static_cast<char>(rng.below(256));
        }
        try {
            parse_response(s);
            ++parsed;
        } catch (const ParseError&) {
            ++rejected;
        }
    }
    CHECK(parsed + rejected == 20000);
}
