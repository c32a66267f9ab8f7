#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coe/egm.hpp"
#include "coe/matrix.hpp"
#include "coe/protocol.hpp"
#include "coe/rng.hpp"

namespace coe {

enum class EventKind { Appear, Disappear, Move, Collide };
enum class ObjColor { Red, Blue, Green, Yellow };
enum class ObjShape { Square, Circle, Triangle };

const char* kind_word(EventKind k);      // "appear", "disappear", ...
const char* kind_verb(EventKind k);      // "appears", ...
const char* color_word(ObjColor c);
const char* shape_word(ObjShape s);
std::optional<EventKind> kind_from_word(const std::string& w);

struct ObjectSpec {
    ObjColor color;
    ObjShape shape;
};

struct Event {
    EventKind kind;
    int subject = 0;
    std::optional<int> partner;  // collide only
    int frame = 0;
};

// Ground-truth state of one synthetic video: objects with attributes and a
// frame-stamped event script. Invariants: frames in [0, n_frames); at most
// one event per (object, frame); every object's appear precedes its other
// events; collide partners are distinct and both alive.
struct WorldSpec {
    int n_frames = 32;
    double fps = 1.0;
    std::vector<ObjectSpec> objects;
    std::vector<Event> events;  // sorted by (frame, subject)
};

struct DatagenConfig {
    int n_frames = 32;
    double fps = 1.0;  // 1/fps must be whole seconds so anchors serialize as MM:SS
    int min_objects = 3;
    int max_objects = 5;
    int min_events = 2;  // action events (move/collide/disappear); appears are extra
    int max_events = 6;
    int d_v = 32;
    int d_l = 16;
    double sigma_noise = 0.1;

    int seconds_per_frame() const;     // validates fps
    int horizon_seconds() const;       // n_frames * seconds_per_frame
    void validate() const;
};

// Fixed random embeddings standing in for the ViT encoder: one unit vector
// per event kind, color and shape, plus a background vector. Redrawn at
// construction until all within-table pairwise |cosines| are below 0.3.
struct EmbeddingTable {
    Matrix kind_vecs;   // 4 x d_v, indexed by EventKind
    Matrix color_vecs;  // 4 x d_v
    Matrix shape_vecs;  // 3 x d_v
    Matrix background;  // 1 x d_v

    static EmbeddingTable build(int d_v, Rng rng);
};

// Question/annotation tuple produced by one template instantiation.
struct Annotation {
    std::string question;
    FrameSet key_frames;
    std::string guidance;  // reasoning draft citing exactly the key frames
    std::string answer;
};

struct TrainingSample {
    long sample_id = 0;
    std::string split;  // "sft" or "rl"
    std::string question;
    FrameSet key_frames;   // empty for rl records (withheld)
    std::string guidance;  // empty for rl records
    std::string answer;    // empty for rl records
    FrameFeatures features;
};

inline constexpr int kNumTemplates = 4;

// Random but invariant-consistent event script (rejection sampling with
// bounded retries; may settle for fewer action events on crowded scripts).
WorldSpec generate_world(const DatagenConfig& cfg, Rng& rng);

// feature(i) = sum of event embeddings at frame i (background embedding when
// no event) + sigma_noise * gaussian noise.
FrameFeatures render_features(const WorldSpec& w, const EmbeddingTable& table, double sigma_noise,
                              Rng& rng);

// Sum of the table embeddings for one frame, noise-free (shared by
// render_features and its reconstruction tests).
std::vector<double> frame_content(const WorldSpec& w, const EmbeddingTable& table, int frame);

// Template families: 0 when-first-appear, 1 does-X-collide-Y,
// 2 how-many-events-of-kind, 3 what-happens-after-appear.
// Returns nullopt when the template does not apply to this world.
std::optional<Annotation> instantiate_question(const WorldSpec& w, int template_id, Rng& rng);

// World + first applicable template (template order shuffled per sample).
TrainingSample make_sample(const DatagenConfig& cfg, const EmbeddingTable& table, long sample_id,
                           const std::string& split, std::uint64_t dataset_seed, WorldSpec* world_out = nullptr);

// The annotation as a protocol response: anchors covering exactly the key
// frames, the guidance as draft, the stored answer.
CoEResponse ground_truth_response(const TrainingSample& s);

// Deterministic per-word question embedding (L tokens x d_l), seeded from
// the dataset seed.
QuestionEmbedding question_embedding(const std::string& question, int d_l, std::uint64_t dataset_seed);

struct DatasetMeta {
    int version = 1;
    std::uint64_t seed = 0;
    int n_frames = 32;
    double fps = 1.0;
    int d_v = 32;
    int d_l = 16;
    double sigma_noise = 0.1;
    long n_sft = 0;
    long n_rl = 0;
    int horizon_seconds = 32;
};

struct RlReference {
    FrameSet key_frames;
    std::string answer;
};

struct Dataset {
    DatasetMeta meta;
    std::vector<TrainingSample> sft;
    std::vector<TrainingSample> rl;
    std::map<long, RlReference> rl_ref;       // withheld ground truth, reward-only
    std::map<long, WorldSpec> worlds;         // simulator state, audit-only
};

// Writes meta.json, sft.jsonl, rl.jsonl (question-only records),
// rl_ref.jsonl, worlds.jsonl and features.bin under out_dir.
void emit_dataset(const DatagenConfig& cfg, long n_sft, long n_rl, std::uint64_t seed,
                  const std::string& out_dir);

Dataset load_dataset(const std::string& dir);

}  // namespace coe
