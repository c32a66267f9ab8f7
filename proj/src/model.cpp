#include "coe/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "coe/errors.hpp"

namespace coe {

using nlohmann::json;

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
    Model m{config, Vocab::build(config.horizon_seconds), EgmParams{}, DecoderParams{}};
    Rng rng(seed);
    m.egm = EgmParams::init(config.egm_layers, config.egm_queries, config.d_v, config.d_l, rng);
    m.decoder = DecoderParams::init(m.vocab.size(), config.d_embed, config.d_cond(), config.d_pos,
                                    config.hidden, config.t_max, rng);
    return m;
}

std::vector<std::pair<std::string, Matrix*>> Model::named_params() {
    return {{"egm.base_queries", &egm.base_queries},
            {"egm.question_proj", &egm.question_proj},
            {"decoder.embeddings", &decoder.embeddings},
            {"decoder.w_hidden", &decoder.w_hidden},
            {"decoder.w_out", &decoder.w_out},
            {"decoder.pos_enc", &decoder.pos_enc}};
}

std::vector<std::pair<std::string, const Matrix*>> Model::named_params() const {
    auto mutable_list = const_cast<Model*>(this)->named_params();
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (auto& [name, ptr] : mutable_list) out.emplace_back(name, ptr);
    return out;
}

std::vector<Matrix*> Model::egm_param_ptrs() { return {&egm.base_queries, &egm.question_proj}; }

std::vector<Matrix*> Model::decoder_param_ptrs() {
    return {&decoder.embeddings, &decoder.w_hidden, &decoder.w_out, &decoder.pos_enc};
}

Matrix temporal_codes(int n_frames, int d_v) {
    // Near-orthogonal random unit codes give each frame a distinct identity
    // for exact time readout. Seeded by a fixed tag: the codes are part of
    // the model definition, not of any run.
    Rng rng = Rng(0x5EC0DE5).fork("temporal-codes");
    Matrix codes = Matrix::gaussian(n_frames, d_v, rng);
    for (int i = 0; i < n_frames; ++i) {
        double norm = 0.0;
        for (int c = 0; c < d_v; ++c) norm += codes.at(i, c) * codes.at(i, c);
        norm = std::sqrt(norm);
        for (int c = 0; c < d_v; ++c) codes.at(i, c) /= norm;
    }
    return codes;
}

FrameFeatures prepare_features(const FrameFeatures& raw) {
    const int n = static_cast<int>(raw.features.rows());
    const int d_v = static_cast<int>(raw.features.cols());
    const Matrix codes = temporal_codes(n, d_v);
    FrameFeatures out;
    out.fps = raw.fps;
    out.features = Matrix(n, d_v);
    // center across frames: a direction shared by every frame carries no
    // evidence and would otherwise dominate the attention logits
    std::vector<double> mean(d_v, 0.0);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < d_v; ++c) mean[c] += raw.features.at(i, c) / n;
    // rows are normalized to norm sqrt(d_v), i.e. unit variance per
    // coordinate, the convention the 1/sqrt(D_v) attention scaling assumes
    const double target_norm = std::sqrt(static_cast<double>(d_v));
    for (int i = 0; i < n; ++i) {
        double norm = 0.0;
        for (int c = 0; c < d_v; ++c) {
            const double v = raw.features.at(i, c) - mean[c] + codes.at(i, c);
            out.features.at(i, c) = v;
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (int c = 0; c < d_v; ++c) out.features.at(i, c) *= target_norm / norm;
    }
    return out;
}

namespace {

constexpr char kCkptMagic[8] = {'C', 'O', 'E', 'C', 'K', 'P', 'T', '1'};

json config_to_json(const ModelConfig& c) {
    return {{"n_frames", c.n_frames}, {"fps", c.fps},
            {"d_v", c.d_v},           {"d_l", c.d_l},
            {"horizon_seconds", c.horizon_seconds}, {"egm_layers", c.egm_layers},
            {"egm_queries", c.egm_queries},         {"d_embed", c.d_embed},
            {"d_pos", c.d_pos},       {"hidden", c.hidden},
            {"t_max", c.t_max}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.n_frames = j.at("n_frames").get<int>();
    c.fps = j.at("fps").get<double>();
    c.d_v = j.at("d_v").get<int>();
    c.d_l = j.at("d_l").get<int>();
    c.horizon_seconds = j.at("horizon_seconds").get<int>();
    c.egm_layers = j.at("egm_layers").get<int>();
    c.egm_queries = j.at("egm_queries").get<int>();
    c.d_embed = j.at("d_embed").get<int>();
    c.d_pos = j.at("d_pos").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.t_max = j.at("t_max").get<int>();
    return c;
}

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("truncated checkpoint: " + path);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out.write(kCkptMagic, sizeof(kCkptMagic));
    write_pod<std::uint32_t>(out, 1);  // version
    const std::string config = config_to_json(model.config).dump();
    write_pod<std::uint64_t>(out, config.size());
    out.write(config.data(), static_cast<std::streamsize>(config.size()));
    const auto params = model.named_params();
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, mat] : params) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(out, 2);
        write_pod<std::uint64_t>(out, mat->rows());
        write_pod<std::uint64_t>(out, mat->cols());
        out.write(reinterpret_cast<const char*>(mat->data().data()),
                  static_cast<std::streamsize>(sizeof(double) * mat->size()));
    }
    if (!out) throw DataError("write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCkptMagic, 8) != 0) throw DataError(path + ": not a checkpoint file");
    const auto version = read_pod<std::uint32_t>(in, path);
    if (version != 1) throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
    const auto config_len = read_pod<std::uint64_t>(in, path);
    std::string config_str(config_len, '\0');
    in.read(config_str.data(), static_cast<std::streamsize>(config_len));
    if (!in) throw DataError("truncated checkpoint: " + path);
    json jconfig = json::parse(config_str, nullptr, false);
    if (jconfig.is_discarded()) throw DataError(path + ": corrupt config echo");

    Model model = Model::init(config_from_json(jconfig), 0);
    auto params = model.named_params();
    const auto n_records = read_pod<std::uint32_t>(in, path);
    if (n_records != params.size())
        throw DataError(path + ": expected " + std::to_string(params.size()) + " parameter records, found " +
                        std::to_string(n_records));
    for (std::uint32_t r = 0; r < n_records; ++r) {
        const auto name_len = read_pod<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto ndim = read_pod<std::uint32_t>(in, path);
        if (ndim != 2) throw DataError(path + ": parameter '" + name + "' has unsupported rank");
        const auto rows = read_pod<std::uint64_t>(in, path);
        const auto cols = read_pod<std::uint64_t>(in, path);
        Matrix* target = nullptr;
        for (auto& [pname, ptr] : params)
            if (pname == name) target = ptr;
        if (target == nullptr) throw DataError(path + ": unknown parameter record '" + name + "'");
        if (target->rows() != rows || target->cols() != cols)
            throw DataError(path + ": parameter '" + name + "' shape mismatch with config echo");
        in.read(reinterpret_cast<char*>(target->data().data()),
                static_cast<std::streamsize>(sizeof(double) * target->size()));
        if (!in) throw DataError("truncated checkpoint: " + path);
    }
    return model;
}

}  // namespace coe
