#include "coe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coe/errors.hpp"
#include "coe/protocol.hpp"
#include "coe/reward.hpp"

namespace coe {

using nlohmann::json;

namespace {

std::string trim_copy(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw DataError("config: expected boolean, got '" + v + "'");
}

ModelConfig model_config_for(const TrainConfig& cfg, const DatasetMeta& meta) {
    ModelConfig mc;
    mc.n_frames = meta.n_frames;
    mc.fps = meta.fps;
    mc.d_v = meta.d_v;
    mc.d_l = meta.d_l;
    mc.horizon_seconds = meta.horizon_seconds;
    mc.egm_layers = cfg.egm_layers;
    mc.egm_queries = cfg.egm_queries;
    mc.d_embed = cfg.d_embed;
    mc.d_pos = cfg.d_pos;
    mc.hidden = cfg.hidden;
    mc.t_max = cfg.t_max;
    return mc;
}

std::vector<double> grounding_scores(const EgmTrace& trace, const std::string& mode) {
    if (mode == "literal") return trace.state.importance;
    if (mode == "logit") return frame_importance(trace.final_logits);
    throw ConfigError("grounding_loss_mode must be 'literal' or 'logit', got '" + mode + "'");
}

}  // namespace

TrainConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path);
    TrainConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim_copy(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        apply_config_entry(cfg, trim_copy(line.substr(0, eq)), trim_copy(line.substr(eq + 1)));
    }
    return cfg;
}

void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "n_frames") cfg.datagen.n_frames = std::stoi(value);
        else if (key == "fps") cfg.datagen.fps = std::stod(value);
        else if (key == "min_objects") cfg.datagen.min_objects = std::stoi(value);
        else if (key == "max_objects") cfg.datagen.max_objects = std::stoi(value);
        else if (key == "min_events") cfg.datagen.min_events = std::stoi(value);
        else if (key == "max_events") cfg.datagen.max_events = std::stoi(value);
        else if (key == "d_v") cfg.datagen.d_v = std::stoi(value);
        else if (key == "d_l") cfg.datagen.d_l = std::stoi(value);
        else if (key == "sigma_noise") cfg.datagen.sigma_noise = std::stod(value);
        else if (key == "n_sft") cfg.n_sft = std::stol(value);
        else if (key == "n_rl") cfg.n_rl = std::stol(value);
        else if (key == "egm_layers") cfg.egm_layers = std::stoi(value);
        else if (key == "egm_queries") cfg.egm_queries = std::stoi(value);
        else if (key == "d_embed") cfg.d_embed = std::stoi(value);
        else if (key == "d_pos") cfg.d_pos = std::stoi(value);
        else if (key == "hidden") cfg.hidden = std::stoi(value);
        else if (key == "t_max") cfg.t_max = std::stoi(value);
        else if (key == "lambda") cfg.lambda = std::stod(value);
        else if (key == "lambda_warmup_steps") cfg.lambda_warmup_steps = std::stoi(value);
        else if (key == "batch_size") cfg.batch_size = std::stoi(value);
        else if (key == "sft_steps") cfg.sft_steps = std::stoi(value);
        else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
        else if (key == "adam_beta1") cfg.adam_beta1 = std::stod(value);
        else if (key == "adam_beta2") cfg.adam_beta2 = std::stod(value);
        else if (key == "grounding_loss_mode") cfg.grounding_loss_mode = value;
        else if (key == "eval_cadence") cfg.eval_cadence = std::stoi(value);
        else if (key == "eval_fraction") cfg.eval_fraction = std::stod(value);
        else if (key == "rl_steps") cfg.rl_steps = std::stoi(value);
        else if (key == "rl_learning_rate") cfg.rl_learning_rate = std::stod(value);
        else if (key == "temperature") cfg.temperature = std::stod(value);
        else if (key == "grpo_beta") cfg.grpo.beta = std::stod(value);
        else if (key == "tie_epsilon") cfg.grpo.tie_epsilon = std::stod(value);
        else if (key == "samples_per_prompt") cfg.grpo.samples_per_prompt = std::stoi(value);
        else if (key == "w_grounding") cfg.weights.grounding = std::stod(value);
        else if (key == "w_process") cfg.weights.process = std::stod(value);
        else if (key == "w_answer") cfg.weights.answer = std::stod(value);
        else if (key == "max_gen_len") cfg.max_gen_len = std::stoi(value);
        else if (key == "rl_train_egm") cfg.rl_train_egm = parse_bool(value);
        else throw DataError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw DataError("config: bad value '" + value + "' for key '" + key + "'");
    } catch (const std::out_of_range&) {
        throw DataError("config: value '" + value + "' out of range for key '" + key + "'");
    }
}

PreparedSample prepare_sample(const TrainingSample& s, const Model& model, std::uint64_t dataset_seed,
                              bool with_target) {
    PreparedSample p;
    p.sample = &s;
    p.features = prepare_features(s.features);
    p.question = question_embedding(s.question, model.config.d_l, dataset_seed);
    if (with_target) {
        p.target.y.assign(s.features.features.rows(), 0.0);
        for (int f : s.key_frames.indices) {
            if (f < 0 || f >= static_cast<int>(p.target.y.size()))
                throw DataError("sample " + std::to_string(s.sample_id) + ": key frame out of range");
            p.target.y[f] = 1.0;
        }
        p.target_tokens.ids = model.vocab.tokenize(serialize_response(ground_truth_response(s)));
        p.target_tokens.ids.push_back(model.vocab.eos());
        if (static_cast<int>(p.target_tokens.ids.size()) > model.config.t_max)
            throw DataError("sample " + std::to_string(s.sample_id) + ": target sequence length " +
                            std::to_string(p.target_tokens.ids.size()) + " exceeds t_max");
    }
    return p;
}

SftStepStats sft_step(Model& model, Optimizer& optimizer,
                      const std::vector<const PreparedSample*>& batch, const TrainConfig& cfg) {
    if (batch.empty()) throw ConfigError("sft_step: empty batch");
    for (const PreparedSample* p : batch)
        if (p->sample != nullptr && p->sample->split != "sft")
            throw DataError("sft_step: sample " + std::to_string(p->sample->sample_id) +
                            " is not from the sft split");

    const int k = model.config.egm_queries;
    const int d_v = model.config.d_v;
    EgmGrads egm_acc{Matrix(model.egm.base_queries.rows(), model.egm.base_queries.cols()),
                     Matrix(model.egm.question_proj.rows(), model.egm.question_proj.cols())};
    DecoderGrads dec_acc = DecoderGrads::zeros_like(model.decoder);
    SftStepStats stats;

    for (const PreparedSample* item : batch) {
        const EgmTrace trace = egm_forward(item->features, item->question, model.egm);
        const GroundingLoss gl = grounding_loss(grounding_scores(trace, cfg.grounding_loss_mode),
                                                item->target);
        stats.grounding += gl.loss;

        Matrix d_attention, d_logits;
        if (cfg.grounding_loss_mode == "literal")
            d_attention = frame_importance_backward(trace.state.attention, gl.grad_scores);
        else
            d_logits = frame_importance_backward(trace.final_logits, gl.grad_scores);

        const std::vector<double> cond = condition_vector(trace.state, item->question);
        ReasoningLoss rl = reasoning_loss(model.decoder, cond, item->target_tokens, model.vocab);
        stats.reasoning += rl.loss;

        std::vector<double> d_cond_scaled = rl.d_cond;
        for (double& v : d_cond_scaled) v *= cfg.lambda;
        const Matrix d_grounded = condition_backward_to_grounded(d_cond_scaled, k, d_v);
        const EgmGrads g = egm_backward(trace, item->features, model.egm, d_attention, d_grounded,
                                        d_logits);
        egm_acc.base_queries += g.base_queries;
        egm_acc.question_proj += g.question_proj;
        rl.grads *= cfg.lambda;
        dec_acc += rl.grads;
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    egm_acc.base_queries *= inv_n;
    egm_acc.question_proj *= inv_n;
    dec_acc *= inv_n;
    stats.grounding *= inv_n;
    stats.reasoning *= inv_n;
    stats.total = stats.grounding + cfg.lambda * stats.reasoning;

    std::vector<Matrix*> params = {&model.egm.base_queries, &model.egm.question_proj,
                                   &model.decoder.embeddings, &model.decoder.w_hidden,
                                   &model.decoder.w_out, &model.decoder.pos_enc};
    std::vector<Matrix> grads = {std::move(egm_acc.base_queries), std::move(egm_acc.question_proj),
                                 std::move(dec_acc.embeddings), std::move(dec_acc.w_hidden),
                                 std::move(dec_acc.w_out), std::move(dec_acc.pos_enc)};
    optimizer.step(params, grads);
    return stats;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DimensionError("auroc: scores/labels size mismatch");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // average ranks over tie groups
    std::vector<double> rank(scores.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    long n_pos = 0, n_neg = 0;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        if (labels[t] != 0) {
            pos_rank_sum += rank[t];
            ++n_pos;
        } else {
            ++n_neg;
        }
    }
    if (n_pos == 0 || n_neg == 0) return 0.5;
    const double u = pos_rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::string EvalReport::to_json_line(const std::string& phase) const {
    json j = {{"phase", phase},
              {"auroc", auroc},
              {"topk_recall", topk_recall},
              {"answer_acc", answer_acc},
              {"mean_reward", mean_reward},
              {"mean_f1", mean_f1},
              {"mean_iou", mean_iou},
              {"mean_length", mean_length},
              {"validity", validity},
              {"n_samples", n_samples}};
    return j.dump();
}

EvalReport evaluate(const Model& model, const std::vector<PreparedSample>& eval_set,
                    const TrainConfig& cfg,
                    const std::function<std::string(const PreparedSample&)>* generator,
                    std::vector<PerSampleEval>* per_sample) {
    EvalReport report;
    report.n_samples = static_cast<long>(eval_set.size());
    if (eval_set.empty()) return report;

    std::vector<double> pooled_scores;
    std::vector<int> pooled_labels;
    double topk_sum = 0.0;
    Rng greedy_rng(0);  // unused by argmax decoding

    for (const PreparedSample& item : eval_set) {
        const TrainingSample& s = *item.sample;
        const EgmTrace trace = egm_forward(item.features, item.question, model.egm);
        const std::vector<double>& imp = trace.state.importance;
        for (std::size_t f = 0; f < imp.size(); ++f) {
            pooled_scores.push_back(imp[f]);
            pooled_labels.push_back(s.key_frames.contains(static_cast<int>(f)) ? 1 : 0);
        }
        // top-k recall with k = |GT key frames|, ties broken by frame index
        const std::size_t kk = s.key_frames.size();
        std::vector<std::size_t> idx(imp.size());
        for (std::size_t f = 0; f < idx.size(); ++f) idx[f] = f;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (imp[a] != imp[b]) return imp[a] > imp[b];
            return a < b;
        });
        std::size_t hit = 0;
        for (std::size_t t = 0; t < kk && t < idx.size(); ++t)
            if (s.key_frames.contains(static_cast<int>(idx[t]))) ++hit;
        topk_sum += kk == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(kk);

        std::string text;
        double gen_len = 0.0;
        if (generator != nullptr) {
            text = (*generator)(item);
            std::istringstream iss(text);
            std::string tok;
            while (iss >> tok) gen_len += 1.0;
        } else {
            const std::vector<double> cond = condition_vector(trace.state, item.question);
            const TokenSequence seq =
                sample_response(model.decoder, cond, 0.0, greedy_rng, cfg.max_gen_len, model.vocab);
            text = model.vocab.detokenize(seq.ids);
            gen_len = static_cast<double>(seq.ids.size());
        }
        report.mean_length += gen_len;

        PerSampleEval pse;
        pse.sample_id = s.sample_id;
        pse.text = text;
        try {
            const CoEResponse parsed = parse_response(text);
            pse.valid = true;
            pse.reward = composite_reward(parsed, s.key_frames, s.answer, cfg.weights, item.features.fps,
                                          static_cast<int>(item.features.features.rows()));
        } catch (const ParseError&) {
            pse.valid = false;
            pse.reward = zero_reward();
        }
        report.validity += pse.valid ? 1.0 : 0.0;
        report.answer_acc += pse.reward.answer_correct;
        report.mean_reward += pse.reward.total;
        report.mean_f1 += pse.reward.f1_grounding;
        report.mean_iou += pse.reward.iou_process;
        if (per_sample != nullptr) per_sample->push_back(std::move(pse));
    }

    const double inv_n = 1.0 / static_cast<double>(eval_set.size());
    report.topk_recall = topk_sum * inv_n;
    report.answer_acc *= inv_n;
    report.mean_reward *= inv_n;
    report.mean_f1 *= inv_n;
    report.mean_iou *= inv_n;
    report.mean_length *= inv_n;
    report.validity *= inv_n;
    report.auroc = auroc(pooled_scores, pooled_labels);
    return report;
}

std::pair<std::vector<const TrainingSample*>, std::vector<const TrainingSample*>> split_sft(
    const Dataset& ds, double eval_fraction) {
    if (eval_fraction < 0.0 || eval_fraction >= 1.0)
        throw ConfigError("eval_fraction must be in [0, 1)");
    const std::size_t n = ds.sft.size();
    const std::size_t n_eval = static_cast<std::size_t>(std::floor(n * eval_fraction));
    std::vector<const TrainingSample*> train, eval;
    for (std::size_t i = 0; i < n; ++i)
        (i < n - n_eval ? train : eval).push_back(&ds.sft[i]);
    return {std::move(train), std::move(eval)};
}

EvalReport train_sft(const TrainConfig& cfg, const Dataset& ds, Model& model,
                     const std::string& out_dir) {
    auto [train_ptrs, eval_ptrs] = split_sft(ds, cfg.eval_fraction);
    if (train_ptrs.empty()) throw DataError("train_sft: no training samples");

    std::vector<PreparedSample> train_set, eval_set;
    train_set.reserve(train_ptrs.size());
    for (const TrainingSample* s : train_ptrs)
        train_set.push_back(prepare_sample(*s, model, ds.meta.seed, true));
    for (const TrainingSample* s : eval_ptrs)
        eval_set.push_back(prepare_sample(*s, model, ds.meta.seed, true));

    Optimizer optimizer(OptimizerKind::Adam, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);
    Rng rng = Rng(cfg.seed).fork("sft/order");
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();  // trigger shuffle on first use

    std::ofstream log(out_dir + "/sft_log.csv");
    log << "step,total,grounding,reasoning\n";
    for (int step = 1; step <= cfg.sft_steps; ++step) {
        std::vector<const PreparedSample*> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[rng.below(i)]);
                cursor = 0;
            }
            batch.push_back(&train_set[order[cursor++]]);
        }
        TrainConfig step_cfg = cfg;
        if (step <= cfg.lambda_warmup_steps) step_cfg.lambda = 0.0;
        const SftStepStats stats = sft_step(model, optimizer, batch, step_cfg);
        log << step << ',' << stats.total << ',' << stats.grounding << ',' << stats.reasoning << "\n";
        if (cfg.eval_cadence > 0 && step % cfg.eval_cadence == 0)
            std::fprintf(stderr, "[sft] step %d/%d total=%.4f grounding=%.4f reasoning=%.4f\n", step,
                         cfg.sft_steps, stats.total, stats.grounding, stats.reasoning);
    }
    save_checkpoint(out_dir + "/sft.ckpt", model);
    return evaluate(model, eval_set, cfg);
}

EvalReport train_rl(const TrainConfig& cfg, const Dataset& ds, Model& policy, const Model& reference,
                    const std::string& out_dir) {
    if (ds.rl.empty()) throw DataError("train_rl: dataset has no rl split");
    std::vector<RlPrompt> prompts;
    prompts.reserve(ds.rl.size());
    for (const TrainingSample& s : ds.rl) {
        auto ref_it = ds.rl_ref.find(s.sample_id);
        if (ref_it == ds.rl_ref.end())
            throw DataError("train_rl: sample " + std::to_string(s.sample_id) +
                            " missing from rl_ref.jsonl");
        RlPrompt p;
        p.sample_id = s.sample_id;
        p.features = prepare_features(s.features);
        p.question = question_embedding(s.question, policy.config.d_l, ds.meta.seed);
        p.gt_key_frames = ref_it->second.key_frames;
        p.gt_answer = ref_it->second.answer;
        prompts.push_back(std::move(p));
    }

    RlStepConfig step_cfg;
    step_cfg.grpo = cfg.grpo;
    step_cfg.weights = cfg.weights;
    step_cfg.temperature = cfg.temperature;
    step_cfg.max_gen_len = cfg.max_gen_len;
    step_cfg.train_egm = cfg.rl_train_egm;

    Optimizer optimizer(OptimizerKind::Adam, cfg.rl_learning_rate, cfg.adam_beta1, cfg.adam_beta2);
    Rng rng = Rng(cfg.seed).fork("rl");
    std::vector<std::size_t> order(prompts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();

    std::ofstream log(out_dir + "/rl_log.csv");
    log << "step,mean_reward,mean_f1,mean_iou,answer_acc,grpo_loss,pair_yield\n";
    int skipped = 0;
    for (int step = 1; step <= cfg.rl_steps; ++step) {
        std::vector<const RlPrompt*> batch;
        for (int b = 0; b < cfg.batch_size && b < static_cast<int>(prompts.size()); ++b) {
            if (cursor >= order.size()) {
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[rng.below(i)]);
                cursor = 0;
            }
            batch.push_back(&prompts[order[cursor++]]);
        }
        const RlStepMetrics m = rl_step(policy, reference, optimizer, batch, step_cfg, rng);
        if (!m.stepped) ++skipped;
        log << step << ',' << m.mean_reward << ',' << m.mean_f1 << ',' << m.mean_iou << ','
            << m.answer_acc << ',' << m.grpo_loss << ',' << m.pair_yield << "\n";
        if (cfg.eval_cadence > 0 && step % cfg.eval_cadence == 0)
            std::fprintf(stderr, "[rl] step %d/%d reward=%.4f loss=%.4f yield=%.2f\n", step,
                         cfg.rl_steps, m.mean_reward, m.grpo_loss, m.pair_yield);
    }
    if (skipped > 0) std::fprintf(stderr, "[rl] %d step(s) skipped (all pairs tied)\n", skipped);

    save_checkpoint(out_dir + "/rl.ckpt", policy);
    auto [train_ptrs, eval_ptrs] = split_sft(ds, cfg.eval_fraction);
    (void)train_ptrs;
    std::vector<PreparedSample> eval_set;
    for (const TrainingSample* s : eval_ptrs)
        eval_set.push_back(prepare_sample(*s, policy, ds.meta.seed, true));
    return evaluate(policy, eval_set, cfg);
}

PipelineResult run_pipeline(const TrainConfig& cfg, const std::string& dataset_dir,
                            const std::string& out_dir) {
    const Dataset ds = load_dataset(dataset_dir);
    Model model = Model::init(model_config_for(cfg, ds.meta), cfg.seed);

    PipelineResult result;
    result.sft_report = train_sft(cfg, ds, model, out_dir);
    result.sft_checkpoint = out_dir + "/sft.ckpt";

    Model policy = load_checkpoint(result.sft_checkpoint);
    const Model reference = load_checkpoint(result.sft_checkpoint);
    result.rl_report = train_rl(cfg, ds, policy, reference, out_dir);
    result.rl_checkpoint = out_dir + "/rl.ckpt";

    std::ofstream reports(out_dir + "/reports.jsonl");
    if (!reports) throw DataError("cannot open " + out_dir + "/reports.jsonl for writing");
    reports << result.sft_report.to_json_line("sft") << "\n";
    reports << result.rl_report.to_json_line("rl") << "\n";
    return result;
}

}  // namespace coe
