#include "coe/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coe/errors.hpp"

namespace coe {

using nlohmann::json;

const char* kind_word(EventKind k) {
    switch (k) {
        case EventKind::Appear: return "appear";
        case EventKind::Disappear: return "disappear";
        case EventKind::Move: return "move";
        case EventKind::Collide: return "collide";
    }
    return "?";
}

const char* kind_verb(EventKind k) {
    switch (k) {
        case EventKind::Appear: return "appears";
        case EventKind::Disappear: return "disappears";
        case EventKind::Move: return "moves";
        case EventKind::Collide: return "collides";
    }
    return "?";
}

const char* color_word(ObjColor c) {
    switch (c) {
        case ObjColor::Red: return "red";
        case ObjColor::Blue: return "blue";
        case ObjColor::Green: return "green";
        case ObjColor::Yellow: return "yellow";
    }
    return "?";
}

const char* shape_word(ObjShape s) {
    switch (s) {
        case ObjShape::Square: return "square";
        case ObjShape::Circle: return "circle";
        case ObjShape::Triangle: return "triangle";
    }
    return "?";
}

std::optional<EventKind> kind_from_word(const std::string& w) {
    for (EventKind k : {EventKind::Appear, EventKind::Disappear, EventKind::Move, EventKind::Collide})
        if (w == kind_word(k)) return k;
    return std::nullopt;
}

namespace {

std::optional<ObjColor> color_from_word(const std::string& w) {
    for (ObjColor c : {ObjColor::Red, ObjColor::Blue, ObjColor::Green, ObjColor::Yellow})
        if (w == color_word(c)) return c;
    return std::nullopt;
}

std::optional<ObjShape> shape_from_word(const std::string& w) {
    for (ObjShape s : {ObjShape::Square, ObjShape::Circle, ObjShape::Triangle})
        if (w == shape_word(s)) return s;
    return std::nullopt;
}

std::string object_phrase(const WorldSpec& w, int obj) {
    return std::string(color_word(w.objects[obj].color)) + " " + shape_word(w.objects[obj].shape);
}

std::string time_of_frame(const WorldSpec& w, int frame) {
    const int spf = static_cast<int>(std::lround(1.0 / w.fps));
    return format_mmss(frame * spf);
}

std::optional<int> appear_frame(const WorldSpec& w, int obj) {
    for (const Event& e : w.events)
        if (e.kind == EventKind::Appear && e.subject == obj) return e.frame;
    return std::nullopt;
}

// times listed adjacently so a previous-token decoder can chain them
std::string joined_times(const WorldSpec& w, const std::vector<int>& frames) {
    std::string out;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (i > 0) out += ' ';
        out += time_of_frame(w, frames[i]);
    }
    return out;
}

void normalize_rows(Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double norm = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) norm += m.at(r, c) * m.at(r, c);
        norm = std::sqrt(norm);
        for (std::size_t c = 0; c < m.cols(); ++c) m.at(r, c) /= norm;
    }
}

bool cosines_below(const Matrix& m, double bound) {
    for (std::size_t a = 0; a < m.rows(); ++a)
        for (std::size_t b = a + 1; b < m.rows(); ++b) {
            double cos = 0.0;
            for (std::size_t c = 0; c < m.cols(); ++c) cos += m.at(a, c) * m.at(b, c);
            if (std::fabs(cos) >= bound) return false;
        }
    return true;
}

}  // namespace

int DatagenConfig::seconds_per_frame() const {
    const double spf = 1.0 / fps;
    const int whole = static_cast<int>(std::lround(spf));
    if (fps <= 0.0 || whole < 1 || std::fabs(spf - whole) > 1e-9)
        throw ConfigError("datagen: 1/fps must be a whole number of seconds (got fps=" +
                          std::to_string(fps) + ")");
    return whole;
}

int DatagenConfig::horizon_seconds() const { return n_frames * seconds_per_frame(); }

void DatagenConfig::validate() const {
    if (n_frames < 2) throw ConfigError("datagen: need at least 2 frames");
    if (min_objects < 1 || max_objects < min_objects || max_objects > 12)
        throw ConfigError("datagen: object count bounds must satisfy 1 <= min <= max <= 12");
    if (min_events < 0 || max_events < min_events || max_events > 9)
        throw ConfigError("datagen: event count bounds must satisfy 0 <= min <= max <= 9");
    if (d_v < 4 || d_l < 4) throw ConfigError("datagen: feature dims too small");
    if (sigma_noise < 0.0) throw ConfigError("datagen: sigma_noise must be >= 0");
    if (horizon_seconds() >= 3600) throw ConfigError("datagen: horizon exceeds MM:SS range");
}

EmbeddingTable EmbeddingTable::build(int d_v, Rng rng) {
    if (d_v < 12) throw ConfigError("embedding table: d_v must be at least 12");
    for (int attempt = 0; attempt < 1000; ++attempt) {
        // Draw the 12 concept vectors (4 kinds, 4 colors, 3 shapes,
        // background) jointly and orthonormalize them: concepts then carry
        // zero cross-talk, which trivially meets the pairwise-cosine bound.
        Matrix all = Matrix::gaussian(12, d_v, rng);
        bool degenerate = false;
        for (std::size_t r = 0; r < 12 && !degenerate; ++r) {
            for (std::size_t p = 0; p < r; ++p) {
                double dot = 0.0;
                for (int c = 0; c < d_v; ++c) dot += all.at(r, c) * all.at(p, c);
                for (int c = 0; c < d_v; ++c) all.at(r, c) -= dot * all.at(p, c);
            }
            double norm = 0.0;
            for (int c = 0; c < d_v; ++c) norm += all.at(r, c) * all.at(r, c);
            norm = std::sqrt(norm);
            if (norm < 1e-9) {
                degenerate = true;
                break;
            }
            for (int c = 0; c < d_v; ++c) all.at(r, c) /= norm;
        }
        if (degenerate) continue;
        EmbeddingTable t;
        t.kind_vecs = Matrix(4, d_v);
        t.color_vecs = Matrix(4, d_v);
        t.shape_vecs = Matrix(3, d_v);
        t.background = Matrix(1, d_v);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < d_v; ++c) t.kind_vecs.at(r, c) = all.at(r, c);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < d_v; ++c) t.color_vecs.at(r, c) = all.at(4 + r, c);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < d_v; ++c) t.shape_vecs.at(r, c) = all.at(8 + r, c);
        for (int c = 0; c < d_v; ++c) t.background.at(0, c) = all.at(11, c);
        if (cosines_below(t.kind_vecs, 0.3) && cosines_below(t.color_vecs, 0.3) &&
            cosines_below(t.shape_vecs, 0.3))
            return t;
    }
    throw NumericError("embedding table: could not draw vectors with pairwise cosine < 0.3");
}

WorldSpec generate_world(const DatagenConfig& cfg, Rng& rng) {
    WorldSpec w;
    w.n_frames = cfg.n_frames;
    w.fps = cfg.fps;

    // Distinct (color, shape) pairs so questions identify objects uniquely.
    std::vector<ObjectSpec> pool;
    for (ObjColor c : {ObjColor::Red, ObjColor::Blue, ObjColor::Green, ObjColor::Yellow})
        for (ObjShape s : {ObjShape::Square, ObjShape::Circle, ObjShape::Triangle})
            pool.push_back({c, s});
    for (std::size_t i = pool.size(); i > 1; --i)
        std::swap(pool[i - 1], pool[rng.below(i)]);
    const int n_objects = rng.range_int(cfg.min_objects, cfg.max_objects);
    w.objects.assign(pool.begin(), pool.begin() + n_objects);

    std::vector<int> appear(n_objects);
    std::vector<int> gone(n_objects, -1);        // disappear frame or -1
    std::vector<int> last_event(n_objects, -1);  // latest frame the object participates in
    std::vector<std::vector<bool>> busy(n_objects, std::vector<bool>(cfg.n_frames, false));
    for (int o = 0; o < n_objects; ++o) {
        appear[o] = rng.range_int(0, std::max(0, cfg.n_frames / 2 - 1));
        busy[o][appear[o]] = true;
        last_event[o] = appear[o];
        w.events.push_back({EventKind::Appear, o, std::nullopt, appear[o]});
    }

    auto alive_at = [&](int o, int f) {
        return appear[o] < f && (gone[o] < 0 || f < gone[o]) && !busy[o][f];
    };

    const int target = rng.range_int(cfg.min_events, cfg.max_events);
    int placed = 0;
    for (int tries = 0; placed < target && tries < 400; ++tries) {
        const int f = rng.range_int(1, cfg.n_frames - 1);
        const double u = rng.uniform();
        const EventKind kind =
            u < 0.50 ? EventKind::Move : (u < 0.80 ? EventKind::Collide : EventKind::Disappear);
        std::vector<int> candidates;
        for (int o = 0; o < n_objects; ++o)
            if (alive_at(o, f)) candidates.push_back(o);
        if (kind == EventKind::Collide) {
            if (candidates.size() < 2) continue;
            const int a = candidates[rng.below(candidates.size())];
            int b = a;
            while (b == a) b = candidates[rng.below(candidates.size())];
            w.events.push_back({EventKind::Collide, a, b, f});
            busy[a][f] = busy[b][f] = true;
            last_event[a] = std::max(last_event[a], f);
            last_event[b] = std::max(last_event[b], f);
        } else {
            if (candidates.empty()) continue;
            const int o = candidates[rng.below(candidates.size())];
            // a disappear must postdate everything the object already does
            if (kind == EventKind::Disappear && f < last_event[o]) continue;
            w.events.push_back({kind, o, std::nullopt, f});
            busy[o][f] = true;
            last_event[o] = std::max(last_event[o], f);
            if (kind == EventKind::Disappear) gone[o] = f;
        }
        ++placed;
    }

    std::sort(w.events.begin(), w.events.end(), [](const Event& a, const Event& b) {
        if (a.frame != b.frame) return a.frame < b.frame;
        if (a.subject != b.subject) return a.subject < b.subject;
        return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    });
    return w;
}

std::vector<double> frame_content(const WorldSpec& w, const EmbeddingTable& table, int frame) {
    const std::size_t d_v = table.background.cols();
    std::vector<double> row(d_v, 0.0);
    bool any = false;
    for (const Event& e : w.events) {
        if (e.frame != frame) continue;
        any = true;
        const ObjectSpec& subj = w.objects[e.subject];
        for (std::size_t c = 0; c < d_v; ++c) {
            row[c] += table.kind_vecs.at(static_cast<std::size_t>(e.kind), c);
            row[c] += table.color_vecs.at(static_cast<std::size_t>(subj.color), c);
            row[c] += table.shape_vecs.at(static_cast<std::size_t>(subj.shape), c);
        }
        if (e.partner) {
            const ObjectSpec& part = w.objects[*e.partner];
            for (std::size_t c = 0; c < d_v; ++c) {
                row[c] += table.color_vecs.at(static_cast<std::size_t>(part.color), c);
                row[c] += table.shape_vecs.at(static_cast<std::size_t>(part.shape), c);
            }
        }
    }
    if (!any)
        for (std::size_t c = 0; c < d_v; ++c) row[c] = table.background.at(0, c);
    return row;
}

FrameFeatures render_features(const WorldSpec& w, const EmbeddingTable& table, double sigma_noise,
                              Rng& rng) {
    FrameFeatures out;
    out.fps = w.fps;
    out.features = Matrix(w.n_frames, table.background.cols());
    for (int i = 0; i < w.n_frames; ++i) {
        const std::vector<double> content = frame_content(w, table, i);
        for (std::size_t c = 0; c < content.size(); ++c)
            out.features.at(i, c) = content[c] + sigma_noise * rng.gauss();
    }
    return out;
}

std::optional<Annotation> instantiate_question(const WorldSpec& w, int template_id, Rng& rng) {
    const int n_objects = static_cast<int>(w.objects.size());
    Annotation a;

    switch (template_id) {
        case 0: {  // when does X first appear
            const int o = static_cast<int>(rng.below(n_objects));
            const int f = *appear_frame(w, o);
            a.question = "when does the " + object_phrase(w, o) + " first appear ?";
            a.key_frames = frame_set_from_indices({f}, w.fps, w.n_frames);
            a.guidance = "the " + object_phrase(w, o) + " first appears at " + time_of_frame(w, f) + " .";
            a.answer = time_of_frame(w, f);
            return a;
        }
        case 1: {  // does X collide with Y
            if (n_objects < 2) return std::nullopt;
            std::vector<const Event*> collides;
            for (const Event& e : w.events)
                if (e.kind == EventKind::Collide) collides.push_back(&e);
            if (collides.empty()) return std::nullopt;  // nothing causal to ask about
            int x, y;
            if (rng.uniform() < 0.5) {  // ask about a colliding pair
                const Event* e = collides[rng.below(collides.size())];
                x = e->subject;
                y = *e->partner;
            } else {  // ask about any pair; the answer may be No
                x = static_cast<int>(rng.below(n_objects));
                y = x;
                while (y == x) y = static_cast<int>(rng.below(n_objects));
            }
            // Evidence: the pair's collisions when they exist (a sharp,
            // strongly matched signal), otherwise the pair's joint event
            // history (same attribute-driven retrieval, no collide content).
            std::vector<int> collide_frames, pair_frames;
            for (const Event& e : w.events) {
                const bool involves_x = e.subject == x || (e.partner && *e.partner == x);
                const bool involves_y = e.subject == y || (e.partner && *e.partner == y);
                if (!involves_x && !involves_y) continue;
                pair_frames.push_back(e.frame);
                if (e.kind == EventKind::Collide && involves_x && involves_y)
                    collide_frames.push_back(e.frame);
            }
            a.question = "does the " + object_phrase(w, x) + " collide with the " + object_phrase(w, y) + " ?";
            if (!collide_frames.empty()) {
                a.key_frames = frame_set_from_indices(collide_frames, w.fps, w.n_frames);
                a.guidance = "the " + object_phrase(w, x) + " and the " + object_phrase(w, y) +
                             " collide at " + joined_times(w, a.key_frames.indices) + " .";
                a.answer = "Yes";
            } else {
                a.key_frames = frame_set_from_indices(pair_frames, w.fps, w.n_frames);
                a.guidance = "the " + object_phrase(w, x) + " and the " + object_phrase(w, y) +
                             " are seen at " + joined_times(w, a.key_frames.indices) +
                             " and they never collide .";
                a.answer = "No";
            }
            return a;
        }
        case 2: {  // how many <kind> events occur
            std::vector<EventKind> kinds = {EventKind::Move, EventKind::Collide, EventKind::Disappear};
            for (std::size_t i = kinds.size(); i > 1; --i) std::swap(kinds[i - 1], kinds[rng.below(i)]);
            for (EventKind kind : kinds) {
                int count = 0;
                std::vector<int> frames;
                for (const Event& e : w.events)
                    if (e.kind == kind) {
                        ++count;
                        frames.push_back(e.frame);
                    }
                if (count == 0 || count > 3) continue;  // small closed answer set
                // one event per frame keeps the count identical to the
                // anchor count; simultaneous same-kind events are skipped
                if (static_cast<int>(frame_set_from_indices(frames, w.fps, w.n_frames).size()) != count)
                    continue;
                a.question = std::string("how many ") + kind_word(kind) + " events occur ?";
                a.key_frames = frame_set_from_indices(frames, w.fps, w.n_frames);
                a.guidance = std::string(kind_word(kind)) + " events occur at " +
                             joined_times(w, a.key_frames.indices) + " .";
                a.answer = std::to_string(count);
                return a;
            }
            return std::nullopt;
        }
        case 3: {  // what happens immediately after X appears
            // Asks about the subject's own next participation, and applies
            // only when that participation is unique, so the evidence is
            // exactly the subject's appear + follow-up frames.
            struct Candidate {
                int object;
                int appear;
                const Event* next;
            };
            std::vector<Candidate> candidates;
            for (int o = 0; o < n_objects; ++o) {
                const int fa = *appear_frame(w, o);
                const Event* next = nullptr;
                int later_participations = 0;
                for (const Event& e : w.events) {
                    if (e.frame <= fa) continue;
                    if (e.subject != o && !(e.partner && *e.partner == o)) continue;
                    ++later_participations;
                    if (next == nullptr || e.frame < next->frame) next = &e;
                }
                if (next != nullptr && later_participations == 1) candidates.push_back({o, fa, next});
            }
            if (candidates.empty()) return std::nullopt;
            const Candidate& c = candidates[rng.below(candidates.size())];
            a.question = "what happens immediately after the " + object_phrase(w, c.object) + " appears ?";
            a.key_frames = frame_set_from_indices({c.appear, c.next->frame}, w.fps, w.n_frames);
            a.guidance = "the " + object_phrase(w, c.object) + " appears at " +
                         joined_times(w, a.key_frames.indices) + " then a " +
                         kind_word(c.next->kind) + " event follows .";
            a.answer = kind_word(c.next->kind);
            return a;
        }
        default:
            throw ConfigError("instantiate_question: unknown template " + std::to_string(template_id));
    }
}

TrainingSample make_sample(const DatagenConfig& cfg, const EmbeddingTable& table, long sample_id,
                           const std::string& split, std::uint64_t dataset_seed, WorldSpec* world_out) {
    Rng base(dataset_seed);
    Rng rng = base.fork("sample/" + std::to_string(sample_id));
    const WorldSpec world = generate_world(cfg, rng);

    std::vector<int> order = {0, 1, 2, 3};
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::optional<Annotation> ann;
    for (int t : order) {
        ann = instantiate_question(world, t, rng);
        if (ann) break;
    }
    // template 0 applies to every world, so ann is always set

    Rng frng = base.fork("features/" + std::to_string(sample_id));
    TrainingSample s;
    s.sample_id = sample_id;
    s.split = split;
    s.question = ann->question;
    s.key_frames = ann->key_frames;
    s.guidance = ann->guidance;
    s.answer = ann->answer;
    s.features = render_features(world, table, cfg.sigma_noise, frng);
    if (world_out != nullptr) *world_out = world;
    return s;
}

CoEResponse ground_truth_response(const TrainingSample& s) {
    CoEResponse r;
    // one unit range per key frame keeps the target token grammar
    // position-regular, which the positional decoder depends on
    r.anchors = frames_to_unit_intervals(s.key_frames);
    r.draft = s.guidance;
    r.answer = s.answer;
    return r;
}

QuestionEmbedding question_embedding(const std::string& question, int d_l, std::uint64_t dataset_seed) {
    std::vector<std::string> words;
    std::istringstream iss(question);
    std::string word;
    while (iss >> word) words.push_back(word);
    if (words.empty()) throw DataError("question_embedding: empty question");
    QuestionEmbedding q;
    q.tokens = Matrix(words.size(), d_l);
    Rng base(dataset_seed);
    for (std::size_t t = 0; t < words.size(); ++t) {
        Rng wr = base.fork("word-embedding/" + words[t]);
        double norm = 0.0;
        for (int c = 0; c < d_l; ++c) {
            q.tokens.at(t, c) = wr.gauss();
            norm += q.tokens.at(t, c) * q.tokens.at(t, c);
        }
        norm = std::sqrt(norm);
        for (int c = 0; c < d_l; ++c) q.tokens.at(t, c) /= norm;
    }
    return q;
}

namespace {

json world_to_json(long sample_id, const WorldSpec& w) {
    json objs = json::array();
    for (const ObjectSpec& o : w.objects)
        objs.push_back({{"color", color_word(o.color)}, {"shape", shape_word(o.shape)}});
    json events = json::array();
    for (const Event& e : w.events) {
        json je = {{"kind", kind_word(e.kind)}, {"subject", e.subject}, {"frame", e.frame}};
        if (e.partner) je["partner"] = *e.partner;
        events.push_back(je);
    }
    return {{"sample_id", sample_id}, {"n_frames", w.n_frames}, {"fps", w.fps},
            {"objects", objs},       {"events", events}};
}

WorldSpec world_from_json(const json& j) {
    WorldSpec w;
    w.n_frames = j.at("n_frames").get<int>();
    w.fps = j.at("fps").get<double>();
    for (const json& jo : j.at("objects")) {
        auto color = color_from_word(jo.at("color").get<std::string>());
        auto shape = shape_from_word(jo.at("shape").get<std::string>());
        if (!color || !shape) throw DataError("worlds.jsonl: unknown color/shape word");
        w.objects.push_back({*color, *shape});
    }
    for (const json& je : j.at("events")) {
        Event e;
        auto kind = kind_from_word(je.at("kind").get<std::string>());
        if (!kind) throw DataError("worlds.jsonl: unknown event kind");
        e.kind = *kind;
        e.subject = je.at("subject").get<int>();
        e.frame = je.at("frame").get<int>();
        if (je.contains("partner")) e.partner = je.at("partner").get<int>();
        w.events.push_back(e);
    }
    return w;
}

void write_lines(const std::string& path, const std::vector<json>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    for (const json& j : lines) out << j.dump() << "\n";
    if (!out) throw DataError("write failed for " + path);
}

std::vector<json> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw DataError(path + ":" + std::to_string(lineno) + ": invalid JSON record");
        out.push_back(std::move(j));
    }
    return out;
}

constexpr char kFeatureMagic[8] = {'C', 'O', 'E', 'F', 'E', 'A', 'T', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("truncated feature file: " + path);
    return v;
}

}  // namespace

void emit_dataset(const DatagenConfig& cfg, long n_sft, long n_rl, std::uint64_t seed,
                  const std::string& out_dir) {
    cfg.validate();
    if (n_sft < 0 || n_rl < 0) throw ConfigError("emit_dataset: counts must be >= 0");
    Rng base(seed);
    const EmbeddingTable table = EmbeddingTable::build(cfg.d_v, base.fork("embeddings"));

    std::vector<json> sft_lines, rl_lines, ref_lines, world_lines;
    std::ofstream feat(out_dir + "/features.bin", std::ios::binary);
    if (!feat) throw DataError("cannot open " + out_dir + "/features.bin for writing");
    feat.write(kFeatureMagic, sizeof(kFeatureMagic));
    write_pod<std::uint32_t>(feat, 1);  // version
    write_pod<std::uint32_t>(feat, static_cast<std::uint32_t>(cfg.d_v));
    write_pod<std::uint64_t>(feat, static_cast<std::uint64_t>(n_sft + n_rl));

    for (long id = 0; id < n_sft + n_rl; ++id) {
        const bool is_sft = id < n_sft;
        WorldSpec world;
        const TrainingSample s = make_sample(cfg, table, id, is_sft ? "sft" : "rl", seed, &world);
        if (is_sft) {
            sft_lines.push_back({{"sample_id", s.sample_id},
                                 {"split", "sft"},
                                 {"question", s.question},
                                 {"key_frame_indices", s.key_frames.indices},
                                 {"reasoning_guidance", s.guidance},
                                 {"answer", s.answer}});
        } else {
            // Withholding contract: the rl record carries no ground truth.
            rl_lines.push_back({{"sample_id", s.sample_id}, {"split", "rl"}, {"question", s.question}});
            ref_lines.push_back({{"sample_id", s.sample_id},
                                 {"key_frame_indices", s.key_frames.indices},
                                 {"answer", s.answer}});
        }
        world_lines.push_back(world_to_json(s.sample_id, world));
        write_pod<std::uint64_t>(feat, static_cast<std::uint64_t>(s.sample_id));
        write_pod<std::uint32_t>(feat, static_cast<std::uint32_t>(s.features.features.rows()));
        feat.write(reinterpret_cast<const char*>(s.features.features.data().data()),
                   static_cast<std::streamsize>(sizeof(double) * s.features.features.size()));
    }
    if (!feat) throw DataError("write failed for " + out_dir + "/features.bin");
    feat.close();

    json meta = {{"version", 1},
                 {"seed", seed},
                 {"n_frames", cfg.n_frames},
                 {"fps", cfg.fps},
                 {"d_v", cfg.d_v},
                 {"d_l", cfg.d_l},
                 {"sigma_noise", cfg.sigma_noise},
                 {"n_sft", n_sft},
                 {"n_rl", n_rl},
                 {"horizon_seconds", cfg.horizon_seconds()}};
    {
        std::ofstream out(out_dir + "/meta.json", std::ios::binary);
        if (!out) throw DataError("cannot open " + out_dir + "/meta.json for writing");
        out << meta.dump(2) << "\n";
    }
    write_lines(out_dir + "/sft.jsonl", sft_lines);
    write_lines(out_dir + "/rl.jsonl", rl_lines);
    write_lines(out_dir + "/rl_ref.jsonl", ref_lines);
    write_lines(out_dir + "/worlds.jsonl", world_lines);
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    {
        std::ifstream in(dir + "/meta.json", std::ios::binary);
        if (!in) throw DataError("cannot open " + dir + "/meta.json");
        json meta = json::parse(in, nullptr, false);
        if (meta.is_discarded()) throw DataError(dir + "/meta.json: invalid JSON");
        ds.meta.version = meta.at("version").get<int>();
        if (ds.meta.version != 1)
            throw DataError(dir + "/meta.json: unsupported dataset version " +
                            std::to_string(ds.meta.version));
        ds.meta.seed = meta.at("seed").get<std::uint64_t>();
        ds.meta.n_frames = meta.at("n_frames").get<int>();
        ds.meta.fps = meta.at("fps").get<double>();
        ds.meta.d_v = meta.at("d_v").get<int>();
        ds.meta.d_l = meta.at("d_l").get<int>();
        ds.meta.sigma_noise = meta.at("sigma_noise").get<double>();
        ds.meta.n_sft = meta.at("n_sft").get<long>();
        ds.meta.n_rl = meta.at("n_rl").get<long>();
        ds.meta.horizon_seconds = meta.at("horizon_seconds").get<int>();
    }

    std::map<long, Matrix> features;
    {
        const std::string path = dir + "/features.bin";
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open " + path);
        char magic[8];
        in.read(magic, 8);
        if (!in || std::string(magic, 8) != std::string(kFeatureMagic, 8))
            throw DataError(path + ": bad magic");
        const auto version = read_pod<std::uint32_t>(in, path);
        if (version != 1) throw DataError(path + ": unsupported version " + std::to_string(version));
        const auto d_v = read_pod<std::uint32_t>(in, path);
        if (static_cast<int>(d_v) != ds.meta.d_v) throw DataError(path + ": d_v mismatch with meta.json");
        const auto count = read_pod<std::uint64_t>(in, path);
        for (std::uint64_t i = 0; i < count; ++i) {
            const auto sample_id = read_pod<std::uint64_t>(in, path);
            const auto n = read_pod<std::uint32_t>(in, path);
            Matrix m(n, d_v);
            in.read(reinterpret_cast<char*>(m.data().data()),
                    static_cast<std::streamsize>(sizeof(double) * m.size()));
            if (!in) throw DataError("truncated feature file: " + path);
            features[static_cast<long>(sample_id)] = std::move(m);
        }
    }

    auto features_for = [&](long id) {
        auto it = features.find(id);
        if (it == features.end())
            throw DataError(dir + ": sample " + std::to_string(id) + " missing from features.bin");
        FrameFeatures f;
        f.features = it->second;
        f.fps = ds.meta.fps;
        return f;
    };

    for (const json& j : read_lines(dir + "/sft.jsonl")) {
        TrainingSample s;
        s.sample_id = j.at("sample_id").get<long>();
        s.split = j.at("split").get<std::string>();
        if (s.split != "sft") throw DataError(dir + "/sft.jsonl: record with split '" + s.split + "'");
        s.question = j.at("question").get<std::string>();
        s.key_frames = frame_set_from_indices(j.at("key_frame_indices").get<std::vector<int>>(),
                                              ds.meta.fps, ds.meta.n_frames);
        s.guidance = j.at("reasoning_guidance").get<std::string>();
        s.answer = j.at("answer").get<std::string>();
        s.features = features_for(s.sample_id);
        ds.sft.push_back(std::move(s));
    }
    for (const json& j : read_lines(dir + "/rl.jsonl")) {
        if (j.contains("answer") || j.contains("key_frame_indices") || j.contains("reasoning_guidance"))
            throw DataError(dir + "/rl.jsonl: record leaks withheld ground truth");
        TrainingSample s;
        s.sample_id = j.at("sample_id").get<long>();
        s.split = j.at("split").get<std::string>();
        s.question = j.at("question").get<std::string>();
        s.features = features_for(s.sample_id);
        ds.rl.push_back(std::move(s));
    }
    for (const json& j : read_lines(dir + "/rl_ref.jsonl")) {
        RlReference ref;
        ref.key_frames = frame_set_from_indices(j.at("key_frame_indices").get<std::vector<int>>(),
                                                ds.meta.fps, ds.meta.n_frames);
        ref.answer = j.at("answer").get<std::string>();
        ds.rl_ref[j.at("sample_id").get<long>()] = std::move(ref);
    }
    for (const json& j : read_lines(dir + "/worlds.jsonl"))
        ds.worlds[j.at("sample_id").get<long>()] = world_from_json(j);
    return ds;
}

}  // namespace coe
