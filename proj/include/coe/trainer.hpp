#pragma once

#include <functional>
#include <string>
#include <vector>

#include "coe/datagen.hpp"
#include "coe/grpo.hpp"
#include "coe/model.hpp"
#include "coe/optimizer.hpp"

namespace coe {

struct TrainConfig {
    std::uint64_t seed = 42;
    DatagenConfig datagen;
    long n_sft = 2000;
    long n_rl = 200;  // 10:1 sft:rl by default

    int egm_layers = 2;
    int egm_queries = 4;
    int d_embed = 32;
    int d_pos = 16;
    int hidden = 64;
    int t_max = 64;

    double lambda = 1.0;  // weight of the reasoning loss in the joint SFT objective
    // Grounding-first curriculum: lambda is held at 0 for this many initial
    // steps so the attention imprints on key frames before the reasoning
    // gradient starts shaping the evidence it reads. Joint training from
    // scratch settles into a degenerate equilibrium (diffuse attention +
    // marginal decoding) without it.
    int lambda_warmup_steps = 2000;
    int batch_size = 16;
    int sft_steps = 2000;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    std::string grounding_loss_mode = "literal";  // or "logit"
    int eval_cadence = 500;
    double eval_fraction = 0.1;  // tail of the sft split held out, never trained

    int rl_steps = 300;
    double rl_learning_rate = 3e-4;
    double temperature = 0.8;
    GrpoConfig grpo;
    RewardWeights weights;
    int max_gen_len = 64;
    bool rl_train_egm = false;
};

// Key-value config file: one `key = value` per line, '#' comments. Unknown
// keys are a DataError. See docs/formats.md for the key list.
TrainConfig load_config_file(const std::string& path);
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);

// Per-sample tensors precomputed once per run.
struct PreparedSample {
    const TrainingSample* sample = nullptr;
    FrameFeatures features;  // after prepare_features
    QuestionEmbedding question;
    KeyFrameTarget target;        // empty for rl records
    TokenSequence target_tokens;  // tokenized ground-truth response + EOS
};

PreparedSample prepare_sample(const TrainingSample& s, const Model& model, std::uint64_t dataset_seed,
                              bool with_target);

struct SftStepStats {
    double total = 0.0;      // mean(L_g) + lambda * mean(L_r)
    double grounding = 0.0;  // mean(L_g)
    double reasoning = 0.0;  // mean(L_r)
};

// One joint EGM+decoder update on a batch: total = mean(L_g + lambda * L_r).
SftStepStats sft_step(Model& model, Optimizer& optimizer,
                      const std::vector<const PreparedSample*>& batch, const TrainConfig& cfg);

struct EvalReport {
    double auroc = 0.5;
    double topk_recall = 0.0;
    double answer_acc = 0.0;
    double mean_reward = 0.0;
    double mean_f1 = 0.0;
    double mean_iou = 0.0;
    double mean_length = 0.0;
    double validity = 0.0;  // fraction of generations the parser accepts
    long n_samples = 0;

    std::string to_json_line(const std::string& phase) const;
};

struct PerSampleEval {
    long sample_id = 0;
    RewardBreakdown reward;
    bool valid = false;
    std::string text;
};

// Greedy decoding over a held-out split: protocol validity, answer accuracy,
// composite reward, pooled grounding AUROC and per-sample top-k recall.
// generator, when given, replaces the model's decoder (oracle policies in
// tests); it still runs the EGM for the grounding metrics.
EvalReport evaluate(const Model& model, const std::vector<PreparedSample>& eval_set,
                    const TrainConfig& cfg,
                    const std::function<std::string(const PreparedSample&)>* generator = nullptr,
                    std::vector<PerSampleEval>* per_sample = nullptr);

// Mann-Whitney AUROC with average-rank tie handling.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct PipelineResult {
    EvalReport sft_report;
    EvalReport rl_report;
    std::string sft_checkpoint;
    std::string rl_checkpoint;
};

// SFT to completion -> sft.ckpt -> RL with the frozen SFT model as reference
// -> rl.ckpt; eval reports for both phases land in out_dir/reports.jsonl and
// per-step RL metrics in out_dir/rl_log.csv.
PipelineResult run_pipeline(const TrainConfig& cfg, const std::string& dataset_dir,
                            const std::string& out_dir);

// The two pipeline halves, also exposed for the CLI subcommands.
EvalReport train_sft(const TrainConfig& cfg, const Dataset& ds, Model& model,
                     const std::string& out_dir);
EvalReport train_rl(const TrainConfig& cfg, const Dataset& ds, Model& policy, const Model& reference,
                    const std::string& out_dir);

// Deterministic train/eval partition: the last eval_fraction of the sft
// records (by position) are held out.
std::pair<std::vector<const TrainingSample*>, std::vector<const TrainingSample*>> split_sft(
    const Dataset& ds, double eval_fraction);

}  // namespace coe
