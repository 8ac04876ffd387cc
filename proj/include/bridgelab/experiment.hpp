#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bridgelab/checkpoint.hpp"
#include "bridgelab/pipeline.hpp"

namespace bridgelab::experiment {

// Configuration problems (parse, schema, validation) are a distinct failure
// class from runtime faults so the command line can exit differently.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StageHyper {
    double lr = 1e-3;
    int batch_size = 32;
    int epochs = 3;
};

struct ExperimentConfig {
    int version = 1;
    uint64_t base_seed = 4242;
    std::vector<uint64_t> seeds = {1, 2, 3};
    std::vector<std::string> variants = {"full",
                                         "no_mapping_stage",
                                         "no_augmentation_stage",
                                         "replacement_only",
                                         "monoreason",
                                         "multireason_sft"};
    synth::WorldConfig world;
    synth::CorpusConfig corpus;
    pipeline::ModelConfig model;
    MapVariant map_variant = MapVariant::mlp2;
    StageHyper lm_pretrain{3e-4, 32, 3};
    StageHyper english_sft{3e-4, 32, 3};
    StageHyper encoder_pretrain{1e-3, 32, 3};
    StageHyper mapping{1e-3, 32, 3};
    StageHyper augmentation{1e-3, 32, 3};
    StageHyper multilingual_sft{3e-4, 32, 3};
    int eval_max_new = 36;
    int pool_size = 200;
    int workers = 1;
};

ExperimentConfig default_config();

// Strict schema: unknown keys are errors, the version must match, and every
// invariant (positive quotas, valid variants, frozen bridge stages) is
// checked before any compute.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);
void validate(const ExperimentConfig& cfg);

// Normalized dump with every default materialized, in a fixed field order;
// the fingerprint is a stable hash of these bytes. The workers count is an
// execution detail that cannot change any output byte, so it is excluded.
std::string canonical_config(const ExperimentConfig& cfg);
uint64_t config_fingerprint(const ExperimentConfig& cfg);

// Hash over only the fields that influence the base checkpoints (world,
// base corpora, model dims, base-stage hyperparameters, base seed). Sweeps
// over stage-two data size or the mapping variant keep this constant, which
// is what lets them share one cached base.
std::string canonical_base_config(const ExperimentConfig& cfg);
uint64_t base_fingerprint(const ExperimentConfig& cfg);

struct BaseModels {
    EncoderModel enc;
    Seq2SeqDecoderModel dec;
    LMModel mono; // frozen reader after pretraining + English tuning
    uint64_t fingerprint = 0;
    bool from_cache = false;
    std::vector<pipeline::StageResult> stages; // empty when loaded from cache
};

// Trains the base models or reloads them from the fingerprint-keyed cache.
// A cache directory whose stored config differs from the current one under
// the same fingerprint is a collision and a hard error.
BaseModels prepare_base(const ExperimentConfig& cfg, const synth::World& world,
                        const synth::CorpusBundle& bundle, const std::string& cache_dir);

struct RunOutput {
    std::string run_dir;
    uint64_t fingerprint = 0;
    uint64_t base_fp = 0;
    bool base_from_cache = false;
    std::vector<pipeline::VariantResult> results; // variant-major, seed-minor
    std::vector<evalkit::MetricsRecord> records;
};

// End-to-end: corpora, base models (cached), shared stage-one bridges per
// seed, every (variant x seed), evaluation, and report files under out_dir.
// Everything written is a pure function of the config, so a rerun is
// byte-identical.
RunOutput run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                         const std::string& cache_dir);

// Re-evaluates a finished run purely from its saved checkpoints, writing a
// fresh report into eval_dir. Metrics must come out byte-identical to the
// original run's.
RunOutput eval_only(const std::string& run_dir, const std::string& eval_dir);

struct SweepOutput {
    std::string axis;
    std::vector<std::string> values;
    std::vector<RunOutput> runs;
    std::string table_path;
    bool shared_base = false; // every run reused one base fingerprint
};

// axis "stage2-size" (per-language stage-two example counts) or
// "mapping-variant" ({linear, mlp2, mlp3}).
SweepOutput sweep(const ExperimentConfig& cfg, const std::string& axis,
                  const std::vector<std::string>& values, const std::string& out_dir,
                  const std::string& cache_dir);

struct CompareCell {
    std::string run;
    std::string variant;
    uint64_t seed = 0;
    std::map<std::string, double> lang_delta;
    double lrl_delta = 0, hrl_delta = 0, avg_delta = 0;
};

struct CompareOutput {
    std::string baseline;
    std::vector<CompareCell> cells;
    // per (run, variant): seeds where the low-tier delta is +, 0, -
    std::map<std::string, std::array<int, 3>> lrl_signs;
};

// First run dir is the baseline; deltas are other minus baseline, matched on
// (variant, seed). Mismatched language sets are an error.
CompareOutput compare_runs(const std::vector<std::string>& run_dirs,
                           const std::string& out_csv);

struct GradSuiteReport {
    double max_rel_err = 0;
    int checks = 0;
    bool pass = false;
    std::vector<std::string> lines;
};

// Finite-difference audit of every differentiable primitive plus the two
// composed merge losses (replacement and augmented paths), repeated across
// seeds. Threshold 1e-3 relative error.
GradSuiteReport gradcheck_suite(int n_seeds = 5);

} // namespace bridgelab::experiment
