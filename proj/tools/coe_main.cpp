#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "coe/datagen.hpp"
#include "coe/errors.hpp"
#include "coe/gradient_suite.hpp"
#include "coe/grpo.hpp"
#include "coe/model.hpp"
#include "coe/protocol.hpp"
#include "coe/reward.hpp"
#include "coe/trainer.hpp"

namespace {

using coe::TrainConfig;
using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

TrainConfig config_from(const std::string& config_path, std::optional<std::uint64_t> seed) {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : coe::load_config_file(config_path);
    if (seed) cfg.seed = *seed;
    return cfg;
}

void check_compatible(const coe::Model& model, const coe::DatasetMeta& meta) {
    if (model.config.d_v != meta.d_v || model.config.d_l != meta.d_l ||
        model.config.n_frames != meta.n_frames || model.config.horizon_seconds != meta.horizon_seconds)
        throw coe::DataError("checkpoint was trained for a different dataset geometry");
}

const coe::TrainingSample* find_sample(const coe::Dataset& ds, long sample_id) {
    for (const coe::TrainingSample& s : ds.sft)
        if (s.sample_id == sample_id) return &s;
    for (const coe::TrainingSample& s : ds.rl)
        if (s.sample_id == sample_id) return &s;
    throw coe::DataError("sample " + std::to_string(sample_id) + " not found in dataset");
}

std::string greedy_response(const coe::Model& model, const coe::PreparedSample& item, int max_len) {
    const coe::EgmTrace trace = coe::egm_forward(item.features, item.question, model.egm);
    const std::vector<double> cond = coe::condition_vector(trace.state, item.question);
    coe::Rng rng(0);
    const coe::TokenSequence seq =
        coe::sample_response(model.decoder, cond, 0.0, rng, max_len, model.vocab);
    return model.vocab.detokenize(seq.ids);
}

json breakdown_record(long sample_id, const coe::RewardBreakdown& b) {
    return {{"sample_id", sample_id},
            {"f1", b.f1_grounding},
            {"iou", b.iou_process},
            {"answer", b.answer_correct},
            {"reward", b.total}};
}

int run(int argc, char** argv) {
    CLI::App app{"Evidence-grounded video reasoning pipeline"};
    app.require_subcommand(1);

    std::string config_path, dataset_dir, out_path, checkpoint_path, responses_path, reference_path;
    std::optional<std::uint64_t> seed;
    std::optional<long> n_sft_override, n_rl_override;
    long sample_id = 0;
    int instances = 20;
    bool pretty = false;

    auto add_common = [&](CLI::App* cmd, bool with_config = true) {
        if (with_config) cmd->add_option("--config", config_path, "key = value config file");
        cmd->add_option("--seed", seed, "base RNG seed (overrides config)");
    };

    CLI::App* cmd_datagen = app.add_subcommand("datagen", "generate the synthetic dataset");
    add_common(cmd_datagen);
    cmd_datagen->add_option("--out", out_path, "output directory")->required();
    cmd_datagen->add_option("--n-sft", n_sft_override, "number of sft samples");
    cmd_datagen->add_option("--n-rl", n_rl_override, "number of rl samples");

    CLI::App* cmd_sft = app.add_subcommand("train-sft", "phase-1 supervised training");
    add_common(cmd_sft);
    cmd_sft->add_option("--dataset", dataset_dir, "dataset directory")->required();
    cmd_sft->add_option("--out", out_path, "output directory")->required();

    CLI::App* cmd_rl = app.add_subcommand("train-rl", "phase-2 preference refinement");
    add_common(cmd_rl);
    cmd_rl->add_option("--dataset", dataset_dir, "dataset directory")->required();
    cmd_rl->add_option("--checkpoint", checkpoint_path, "sft checkpoint (policy init + frozen reference)")
        ->required();
    cmd_rl->add_option("--out", out_path, "output directory")->required();

    CLI::App* cmd_eval = app.add_subcommand("eval", "score a checkpoint on the held-out split");
    add_common(cmd_eval);
    cmd_eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
    cmd_eval->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate")->required();
    cmd_eval->add_option("--out", out_path, "write the summary report here");
    cmd_eval->add_flag("--pretty", pretty, "indent the per-sample records");

    CLI::App* cmd_infer = app.add_subcommand("infer", "print the response for one sample");
    add_common(cmd_infer);
    cmd_infer->add_option("--dataset", dataset_dir, "dataset directory")->required();
    cmd_infer->add_option("--checkpoint", checkpoint_path, "checkpoint")->required();
    cmd_infer->add_option("--sample-id", sample_id, "sample to answer")->required();
    cmd_infer->add_flag("--pretty", pretty, "print the parsed sections");

    CLI::App* cmd_attn = app.add_subcommand("inspect-attention", "export the temporal attention curve");
    add_common(cmd_attn);
    cmd_attn->add_option("--dataset", dataset_dir, "dataset directory")->required();
    cmd_attn->add_option("--checkpoint", checkpoint_path, "checkpoint")->required();
    cmd_attn->add_option("--sample-id", sample_id, "sample to inspect")->required();
    cmd_attn->add_option("--out", out_path, "CSV output path (default stdout)");

    CLI::App* cmd_grad = app.add_subcommand("grad-check", "run the finite-difference gradient suite");
    add_common(cmd_grad, false);
    cmd_grad->add_option("--instances", instances, "random instances per check");

    CLI::App* cmd_score = app.add_subcommand("reward-score", "score candidate responses against references");
    add_common(cmd_score);
    cmd_score->add_option("--responses", responses_path, "jsonl with {sample_id, response}")->required();
    cmd_score->add_option("--reference", reference_path, "jsonl with {sample_id, key_frame_indices, answer}")
        ->required();
    cmd_score->add_option("--dataset", dataset_dir, "dataset directory (fps / frame context)")->required();
    cmd_score->add_flag("--pretty", pretty, "indent the per-sample records");

    CLI11_PARSE(app, argc, argv);

    if (cmd_datagen->parsed()) {
        TrainConfig cfg = config_from(config_path, seed);
        const long n_sft = n_sft_override.value_or(cfg.n_sft);
        const long n_rl = n_rl_override.value_or(cfg.n_rl);
        coe::emit_dataset(cfg.datagen, n_sft, n_rl, cfg.seed, out_path);
        std::fprintf(stderr, "wrote %ld sft + %ld rl samples to %s\n", n_sft, n_rl, out_path.c_str());
        return 0;
    }

    if (cmd_sft->parsed()) {
        TrainConfig cfg = config_from(config_path, seed);
        const coe::Dataset ds = coe::load_dataset(dataset_dir);
        coe::ModelConfig mc;
        mc.n_frames = ds.meta.n_frames;
        mc.fps = ds.meta.fps;
        mc.d_v = ds.meta.d_v;
        mc.d_l = ds.meta.d_l;
        mc.horizon_seconds = ds.meta.horizon_seconds;
        mc.egm_layers = cfg.egm_layers;
        mc.egm_queries = cfg.egm_queries;
        mc.d_embed = cfg.d_embed;
        mc.d_pos = cfg.d_pos;
        mc.hidden = cfg.hidden;
        mc.t_max = cfg.t_max;
        coe::Model model = coe::Model::init(mc, cfg.seed);
        const coe::EvalReport report = coe::train_sft(cfg, ds, model, out_path);
        std::cout << report.to_json_line("sft") << "\n";
        return 0;
    }

    if (cmd_rl->parsed()) {
        TrainConfig cfg = config_from(config_path, seed);
        const coe::Dataset ds = coe::load_dataset(dataset_dir);
        coe::Model policy = coe::load_checkpoint(checkpoint_path);
        const coe::Model reference = coe::load_checkpoint(checkpoint_path);
        check_compatible(policy, ds.meta);
        const coe::EvalReport report = coe::train_rl(cfg, ds, policy, reference, out_path);
        std::cout << report.to_json_line("rl") << "\n";
        return 0;
    }

    if (cmd_eval->parsed()) {
        TrainConfig cfg = config_from(config_path, seed);
        const coe::Dataset ds = coe::load_dataset(dataset_dir);
        const coe::Model model = coe::load_checkpoint(checkpoint_path);
        check_compatible(model, ds.meta);
        auto [train_ptrs, eval_ptrs] = coe::split_sft(ds, cfg.eval_fraction);
        (void)train_ptrs;
        std::vector<coe::PreparedSample> eval_set;
        for (const coe::TrainingSample* s : eval_ptrs)
            eval_set.push_back(coe::prepare_sample(*s, model, ds.meta.seed, true));
        std::vector<coe::PerSampleEval> per_sample;
        const coe::EvalReport report = coe::evaluate(model, eval_set, cfg, nullptr, &per_sample);
        for (const coe::PerSampleEval& p : per_sample)
            std::cout << breakdown_record(p.sample_id, p.reward).dump(pretty ? 2 : -1) << "\n";
        std::fprintf(stderr, "%s\n", report.to_json_line("eval").c_str());
        if (!out_path.empty()) {
            std::ofstream out(out_path);
            if (!out) throw coe::DataError("cannot open " + out_path + " for writing");
            out << report.to_json_line("eval") << "\n";
        }
        return 0;
    }

    if (cmd_infer->parsed()) {
        TrainConfig cfg = config_from(config_path, seed);
        const coe::Dataset ds = coe::load_dataset(dataset_dir);
        const coe::Model model = coe::load_checkpoint(checkpoint_path);
        check_compatible(model, ds.meta);
        const coe::TrainingSample* s = find_sample(ds, sample_id);
        const coe::PreparedSample item = coe::prepare_sample(*s, model, ds.meta.seed, false);
        const std::string text = greedy_response(model, item, cfg.max_gen_len);
        if (pretty) {
            const coe::CoEResponse r = coe::parse_response(text);
            std::cout << "question: " << s->question << "\n";
            std::cout << "anchors:";
            for (const coe::TimeInterval& iv : r.anchors)
                std::cout << " " << coe::format_mmss(static_cast<int>(iv.start_s)) << "-"
                          << coe::format_mmss(static_cast<int>(iv.end_s));
            std::cout << "\ndraft: " << r.draft << "\nanswer: " << r.answer << "\n";
        } else {
            std::cout << text << "\n";
        }
        return 0;
    }

    if (cmd_attn->parsed()) {
        TrainConfig cfg = config_from(config_path, seed);
        (void)cfg;
        const coe::Dataset ds = coe::load_dataset(dataset_dir);
        const coe::Model model = coe::load_checkpoint(checkpoint_path);
        check_compatible(model, ds.meta);
        const coe::TrainingSample* s = find_sample(ds, sample_id);
        const coe::PreparedSample item = coe::prepare_sample(*s, model, ds.meta.seed, false);
        const coe::EgmTrace trace = coe::egm_forward(item.features, item.question, model.egm);
        const std::string csv = coe::attention_curve_csv(trace.state, ds.meta.fps);
        if (out_path.empty()) {
            std::cout << csv;
        } else {
            std::ofstream out(out_path);
            if (!out) throw coe::DataError("cannot open " + out_path + " for writing");
            out << csv;
        }
        return 0;
    }

    if (cmd_grad->parsed()) {
        const auto results = coe::run_gradient_suite(seed.value_or(42), instances);
        double worst = 0.0;
        for (const auto& r : results) {
            std::printf("%-28s instances=%d max_rel_err=%.3e\n", r.name.c_str(), r.instances,
                        r.max_rel_err);
            worst = std::max(worst, r.max_rel_err);
        }
        std::printf("max_rel_err=%.3e\n", worst);
        if (worst >= 1e-4) throw coe::NumericError("gradient suite exceeded 1e-4 relative error");
        return 0;
    }

    if (cmd_score->parsed()) {
        TrainConfig cfg = config_from(config_path, seed);
        const coe::Dataset ds = coe::load_dataset(dataset_dir);

        std::map<long, coe::RlReference> refs;
        {
            std::ifstream in(reference_path);
            if (!in) throw coe::DataError("cannot open " + reference_path);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                json j = json::parse(line, nullptr, false);
                if (j.is_discarded()) throw coe::DataError(reference_path + ": invalid JSON record");
                coe::RlReference ref;
                ref.key_frames = coe::frame_set_from_indices(
                    j.at("key_frame_indices").get<std::vector<int>>(), ds.meta.fps, ds.meta.n_frames);
                ref.answer = j.at("answer").get<std::string>();
                refs[j.at("sample_id").get<long>()] = std::move(ref);
            }
        }

        std::ifstream in(responses_path);
        if (!in) throw coe::DataError("cannot open " + responses_path);
        std::string line;
        double total = 0.0;
        long count = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded()) throw coe::DataError(responses_path + ": invalid JSON record");
            const long id = j.at("sample_id").get<long>();
            auto it = refs.find(id);
            if (it == refs.end())
                throw coe::DataError("sample " + std::to_string(id) + " missing from reference file");
            coe::RewardBreakdown b;
            try {
                const coe::CoEResponse r = coe::parse_response(j.at("response").get<std::string>());
                b = coe::composite_reward(r, it->second.key_frames, it->second.answer, cfg.weights,
                                          ds.meta.fps, ds.meta.n_frames);
            } catch (const coe::ParseError&) {
                b = coe::zero_reward();
            }
            std::cout << breakdown_record(id, b).dump(pretty ? 2 : -1) << "\n";
            total += b.total;
            ++count;
        }
        std::fprintf(stderr, "mean_reward=%.6f over %ld responses\n", count ? total / count : 0.0, count);
        return 0;
    }

    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const coe::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const coe::DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const coe::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const coe::Error& e) {  // numeric, dimension, divergence
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    }
}
