#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bridgelab/evalkit.hpp"
#include "bridgelab/nets.hpp"
#include "bridgelab/synthlang.hpp"

namespace bridgelab::pipeline {

// ---------------------------------------------------------------------------
// Generic mini-batch training.
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::string label;  // shows up in stage results and logs
    double lr = 1e-3;
    int batch_size = 32;
    int epochs = 3;
    uint64_t seed = 0;  // drives the per-epoch shuffle and position jitter
};

struct StageResult {
    std::string stage;
    int steps = 0;
    int examples = 0;
    double initial_loss = 0, final_loss = 0;
    std::vector<double> step_losses;  // mean batch loss per optimizer step
    std::vector<std::string> touched; // every parameter the optimizer updated
};

// Builds the per-example scalar loss on a fresh graph.
using LossBuilder = std::function<ValueId(Graph&, int example_index)>;

// Shuffled mini-batch loop: gradients accumulate example by example, are
// scaled by the true batch size, and each gradient entry must belong to
// exactly one of the given stores (anything else is a freezing leak).
StageResult train_loop(const TrainConfig& cfg, int n_examples, const LossBuilder& build_loss,
                       const std::vector<ParamStore*>& stores);

// ---------------------------------------------------------------------------
// Token id plumbing between the synthetic world and the models.
// ---------------------------------------------------------------------------

std::vector<int> encoder_ids(const synth::World& world, const std::vector<std::string>& toks);
// Query-side LM ids: out-of-vocabulary surfaces (low-tier content) become unk.
std::vector<int> llm_ids_lossy(const synth::World& world, const std::vector<std::string>& toks);
// Target-side LM ids with the trailing eos; an unknown target token is a data
// bug, never something to paper over with unk.
std::vector<int> llm_target_ids(const synth::World& world, const std::vector<std::string>& toks);

// ---------------------------------------------------------------------------
// Base-model production (everything that happens before any merging).
// ---------------------------------------------------------------------------

struct ModelConfig {
    int enc_dim = 64, enc_layers = 2, enc_heads = 4;
    int llm_dim = 96, llm_layers = 4, llm_heads = 4;
    int max_positions = 128;
};

EncoderModel init_encoder(const ModelConfig& mc, const synth::World& world, uint64_t seed);
Seq2SeqDecoderModel init_seq2seq_decoder(const ModelConfig& mc, const synth::World& world,
                                         uint64_t seed);
LMModel init_lm(const ModelConfig& mc, const synth::World& world, uint64_t seed);

// Next-token training on raw text lines. Returns the weights frozen; every
// downstream consumer merges against a frozen reader.
StageResult pretrain_lm(LMModel& lm, const synth::World& world,
                        const std::vector<synth::TextLine>& lines, const TrainConfig& cfg);

// Supervised finetuning on English task data; the result (frozen again) is
// the reasoning reader every merged variant builds on.
StageResult finetune_english_task(LMModel& lm, const synth::World& world,
                                  const std::vector<synth::TaskExample>& tasks,
                                  const TrainConfig& cfg);

// Translation-to-English pretraining of the multilingual encoder through a
// throwaway cross-attending decoder. Both stores train here and both come
// back frozen; only the encoder is kept downstream.
StageResult pretrain_encoder(EncoderModel& enc, Seq2SeqDecoderModel& dec,
                             const synth::World& world,
                             const std::vector<synth::TaskExample>& pairs,
                             const TrainConfig& cfg);

// Token-weighted mean NLL of raw lines under the LM (forward only).
double lm_mean_nll(const LMModel& lm, const synth::World& world,
                   const std::vector<synth::TextLine>& lines);

// ---------------------------------------------------------------------------
// The two merge-training stages. Both require theta and phi frozen, verify
// them bitwise around the loop, and verify the optimizer touched exactly the
// bridge parameters.
// ---------------------------------------------------------------------------

// Stage one: replacement composition on parallel pairs. The bridge learns to
// write encoder states into the reader's embedding space well enough that the
// frozen reader can reproduce the English side.
StageResult train_mapping_stage(BridgeModel& bridge, const EncoderModel& enc, const LMModel& lm,
                                const synth::World& world,
                                const std::vector<synth::TaskExample>& pairs,
                                const TrainConfig& cfg);

// Stage two: task training on query translations, by default with augmented
// composition ([bos; mapped; sep; query embeddings] before the target). An
// empty task map is a no-op that leaves the bridge untouched.
StageResult train_augmentation_stage(
    BridgeModel& bridge, const EncoderModel& enc, const LMModel& lm, const synth::World& world,
    const std::map<std::string, std::vector<synth::TaskExample>>& tasks, const TrainConfig& cfg,
    ComposeMode mode = ComposeMode::augmented);

// ---------------------------------------------------------------------------
// Eval-time decoding.
// ---------------------------------------------------------------------------

// Decodes through the merged stack. The encoder forward and the mapping run
// once per example; the frozen reader then decodes greedily. Captures the
// models by reference; callers keep them alive.
evalkit::DecodeFn merged_decoder(const synth::World& world, const EncoderModel& enc,
                                 const BridgeModel& bridge, const LMModel& lm, ComposeMode mode,
                                 int max_new);

// Decodes with the bare LM over [bos; query embeddings].
evalkit::DecodeFn native_decoder(const synth::World& world, const LMModel& lm, int max_new);

// ---------------------------------------------------------------------------
// Alignment probe pools: one pooled vector per sentence per language, same
// English source sentence at every index.
// ---------------------------------------------------------------------------

// Distinct English grammar sentences for probing (resamples duplicates).
std::vector<std::vector<std::string>> sample_pool_sentences(const synth::World& world, int n,
                                                            uint64_t seed);

evalkit::PoolMap build_alignment_pools(const synth::World& world, const EncoderModel& enc,
                                       const BridgeModel* bridge, const LMModel* lm,
                                       evalkit::ProbeLocation probe,
                                       const std::vector<std::vector<std::string>>& english_pool,
                                       const std::vector<std::string>& langs);

// ---------------------------------------------------------------------------
// Variants. Every variant evaluates on the same eval sets; they differ only
// in which stages run and which composition feeds the reader.
// ---------------------------------------------------------------------------

enum class Variant {
    full,                  // mapping stage, then augmentation stage
    no_mapping_stage,      // augmentation stage only, from a fresh bridge
    no_augmentation_stage, // mapping stage only
    replacement_only,      // both stages, but no query embeddings anywhere
    monoreason,            // the bare English-tuned reader
    multireason_sft,       // full-parameter finetune of the reader instead of merging
};

Variant variant_from_string(const std::string& s);
const char* variant_name(Variant v);

struct VariantInputs {
    const synth::World* world = nullptr;
    const synth::CorpusBundle* bundle = nullptr;
    const EncoderModel* enc = nullptr; // frozen, pretrained
    const LMModel* mono_lm = nullptr;  // frozen, pretrained + English-tuned
    MapVariant map_variant = MapVariant::mlp2;
    uint64_t seed = 0;
    int eval_max_new = 36;
    double mapping_lr = 1e-3, augmentation_lr = 1e-3, sft_lr = 3e-4;
    int batch_size = 32;
    int mapping_epochs = 3, augmentation_epochs = 3, sft_epochs = 3;
    // Optional bridge that already went through the mapping stage under this
    // seed; variants that need stage one copy it instead of retraining.
    const BridgeModel* cached_stage1 = nullptr;
};

struct VariantResult {
    std::string variant;
    uint64_t seed = 0;
    evalkit::MetricsRecord metrics;
    std::vector<StageResult> stages;
    std::vector<std::string> provenance; // stage names applied, oldest first
    bool used_bridge = false;
    BridgeModel bridge; // meaningful only when used_bridge
    LMModel lm;         // the reader actually evaluated (tuned copy for sft)
};

// Fresh bridge for this seed; identical across variants so stage-one output
// can be shared.
BridgeModel init_bridge(const VariantInputs& in);
// Runs the mapping stage on a fresh bridge (the shareable stage-one result).
BridgeModel train_stage1_bridge(const VariantInputs& in, StageResult* result = nullptr);

VariantResult run_variant(Variant v, const VariantInputs& in);

} // namespace bridgelab::pipeline
