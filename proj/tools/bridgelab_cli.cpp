#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bridgelab/experiment.hpp"

namespace fs = std::filesystem;
using namespace bridgelab;
namespace experiment = bridgelab::experiment;

namespace {

// 0 = success; config/schema problems and bad usage exit 2, everything that
// blew up at runtime exits 3.
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

experiment::ExperimentConfig make_config(const std::string& config_path,
                                         const std::vector<uint64_t>& seeds,
                                         const std::vector<std::string>& variants, int workers) {
    experiment::ExperimentConfig cfg = config_path.empty()
                                           ? experiment::default_config()
                                           : experiment::load_config_file(config_path);
    if (!seeds.empty()) cfg.seeds = seeds;
    if (!variants.empty()) cfg.variants = variants;
    if (workers > 0) cfg.workers = workers;
    experiment::validate(cfg);
    return cfg;
}

std::string pick_cache(const std::string& cache_flag, const std::string& out_dir) {
    if (!cache_flag.empty()) return cache_flag;
    return (fs::path(out_dir) / "cache").string();
}

void print_records(const std::vector<evalkit::MetricsRecord>& records) {
    std::printf("%-24s %6s %8s %8s %8s\n", "variant", "seed", "lrl", "hrl", "avg");
    for (const auto& r : records)
        std::printf("%-24s %6llu %8.4f %8.4f %8.4f\n", r.variant.c_str(),
                    static_cast<unsigned long long>(r.seed), r.lrl, r.hrl, r.avg);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read file: " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale laboratory for merging a frozen multilingual encoder with a "
                 "frozen reasoning reader through a small trainable bridge"};
    app.require_subcommand(1);

    std::string config_path, out_dir, cache_dir, run_dir, axis;
    std::vector<std::string> variants, values, run_dirs;
    std::vector<uint64_t> seeds;
    int workers = 0;
    int gc_seeds = 5;

    auto add_config_opts = [&](CLI::App* cmd, bool with_out) {
        cmd->add_option("--config", config_path, "config file (JSON); defaults when omitted");
        cmd->add_option("--seeds", seeds, "override the config's seed list");
        cmd->add_option("--variants", variants, "override the config's variant list");
        cmd->add_option("--workers", workers, "parallel worker count (never changes results)");
        if (with_out) {
            cmd->add_option("--out", out_dir, "output directory")->required();
            cmd->add_option("--cache", cache_dir,
                            "base-checkpoint cache directory (default <out>/cache)")
                ->envname("BRIDGELAB_CACHE");
        }
    };

    CLI::App* run_cmd = app.add_subcommand("run", "train and evaluate every (variant x seed)");
    add_config_opts(run_cmd, true);

    CLI::App* sweep_cmd =
        app.add_subcommand("sweep", "one full run per axis value, sharing the cached base");
    add_config_opts(sweep_cmd, true);
    sweep_cmd->add_option("axis", axis, "stage2-size or mapping-variant")->required();
    sweep_cmd->add_option("values", values, "axis values, one run each")->required();

    CLI::App* compare_cmd =
        app.add_subcommand("compare", "per-language deltas of runs against a baseline run");
    compare_cmd->add_option("runs", run_dirs, "run directories; the first is the baseline")
        ->required()
        ->expected(2, -1);
    compare_cmd->add_option("--out", out_dir, "directory for the delta table")->required();

    CLI::App* corpus_cmd = app.add_subcommand("gen-corpus", "generate and save the corpora only");
    add_config_opts(corpus_cmd, false);
    corpus_cmd->add_option("--out", out_dir, "output directory")->required();

    CLI::App* eval_cmd = app.add_subcommand(
        "eval-only", "re-evaluate a finished run purely from its saved checkpoints");
    eval_cmd->add_option("run", run_dir, "run directory to re-evaluate")->required();
    eval_cmd->add_option("--out", out_dir, "directory for the fresh report")->required();

    CLI::App* gc_cmd = app.add_subcommand(
        "gradcheck", "finite-difference audit of every primitive and both merge losses");
    gc_cmd->add_option("--seeds", gc_seeds, "number of random seeds")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (*run_cmd) {
            auto cfg = make_config(config_path, seeds, variants, workers);
            auto out = experiment::run_experiment(cfg, out_dir, pick_cache(cache_dir, out_dir));
            std::printf("run %s\nconfig fingerprint %016llx\nbase fingerprint   %016llx (%s)\n",
                        out.run_dir.c_str(), static_cast<unsigned long long>(out.fingerprint),
                        static_cast<unsigned long long>(out.base_fp),
                        out.base_from_cache ? "cached" : "trained");
            print_records(out.records);
        } else if (*sweep_cmd) {
            auto cfg = make_config(config_path, seeds, variants, workers);
            auto out =
                experiment::sweep(cfg, axis, values, out_dir, pick_cache(cache_dir, out_dir));
            for (size_t i = 0; i < out.runs.size(); ++i)
                std::printf("%s=%s -> %s\n", axis.c_str(), out.values[i].c_str(),
                            out.runs[i].run_dir.c_str());
            std::printf("table %s\nshared base %s\n", out.table_path.c_str(),
                        out.shared_base ? "yes" : "no");
            if (!out.shared_base) throw std::runtime_error("sweep runs did not share one base");
        } else if (*compare_cmd) {
            fs::create_directories(out_dir);
            const std::string csv = (fs::path(out_dir) / "compare.csv").string();
            auto out = experiment::compare_runs(run_dirs, csv);
            std::printf("baseline %s\n", out.baseline.c_str());
            for (const auto& [key, signs] : out.lrl_signs) {
                const auto colon = key.rfind(':');
                std::printf("%-48s low-tier delta per seed: +%d =%d -%d\n",
                            (key.substr(colon + 1) + " vs " + key.substr(0, colon)).c_str(),
                            signs[0], signs[1], signs[2]);
            }
            std::printf("table %s\n", csv.c_str());
        } else if (*corpus_cmd) {
            auto cfg = make_config(config_path, seeds, variants, workers);
            synth::World world(cfg.world);
            RngStream rng = RngStream(cfg.base_seed).child("corpus");
            auto bundle = synth::build_corpora(world, cfg.corpus, rng);
            fs::create_directories(out_dir);
            synth::save_bundle(bundle, out_dir);
            int eval_n = 0, query_n = 0;
            for (const auto& [lang, v] : bundle.eval_sets) eval_n += static_cast<int>(v.size());
            for (const auto& [lang, v] : bundle.query_task) query_n += static_cast<int>(v.size());
            std::printf("corpus %s\nlm lines %zu, parallel pairs %zu, english tasks %zu, "
                        "query tasks %d, eval %d\n",
                        out_dir.c_str(), bundle.lm_pretrain.size(), bundle.encoder_pairs.size(),
                        bundle.english_task.size(), query_n, eval_n);
        } else if (*eval_cmd) {
            auto out = experiment::eval_only(run_dir, out_dir);
            print_records(out.records);
            const std::string fresh = slurp(fs::path(out_dir) / "metrics.json");
            const std::string original = slurp(fs::path(run_dir) / "metrics.json");
            if (fresh != original)
                throw std::runtime_error("re-evaluated metrics differ from the original run");
            std::printf("metrics match the original run byte for byte\n");
        } else if (*gc_cmd) {
            auto report = experiment::gradcheck_suite(gc_seeds);
            for (const auto& line : report.lines) std::printf("%s\n", line.c_str());
            std::printf("%d checks, max relative error %.3e -> %s\n", report.checks,
                        report.max_rel_err, report.pass ? "pass" : "FAIL");
            if (!report.pass) return kExitRuntime;
        }
    } catch (const experiment::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}
