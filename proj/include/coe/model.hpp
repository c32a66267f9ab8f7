#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "coe/datagen.hpp"
#include "coe/decoder.hpp"
#include "coe/egm.hpp"
#include "coe/vocab.hpp"

namespace coe {

struct ModelConfig {
    int n_frames = 32;
    double fps = 1.0;
    int d_v = 32;
    int d_l = 16;
    int horizon_seconds = 32;
    int egm_layers = 2;
    int egm_queries = 4;
    int d_embed = 32;
    int d_pos = 16;
    int hidden = 64;
    int t_max = 64;

    int d_cond() const { return d_v + d_l; }
};

// The full policy: evidence grounding module + protocol decoder, with the
// vocabulary derived from the dataset horizon.
struct Model {
    ModelConfig config;
    Vocab vocab;
    EgmParams egm;
    DecoderParams decoder;

    static Model init(const ModelConfig& config, std::uint64_t seed);

    std::vector<std::pair<std::string, Matrix*>> named_params();
    std::vector<std::pair<std::string, const Matrix*>> named_params() const;
    std::vector<Matrix*> egm_param_ptrs();
    std::vector<Matrix*> decoder_param_ptrs();
};

// Fixed per-frame temporal position codes (unit rows). Derived from a fixed
// internal seed, so every process recomputes identical codes for a given
// shape; checkpoints stay portable.
Matrix temporal_codes(int n_frames, int d_v);

// Model input transform applied before the EGM: adds the frame's temporal
// code to its content features and L2-normalizes each row. The position code
// is what lets the decoder read times (anchors, when-answers) out of E_g;
// normalization keeps untrained attention from ranking frames by feature
// norm alone.
FrameFeatures prepare_features(const FrameFeatures& raw);

// Versioned container of named parameter arrays plus a config echo; byte
// layout documented in docs/formats.md.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace coe
