#pragma once

#include <array>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bridgelab/synthlang.hpp"
#include "bridgelab/tensor.hpp"

namespace bridgelab::evalkit {

// ---------------------------------------------------------------------------
// Accuracy.
// ---------------------------------------------------------------------------

// The answer is the token span after the last "#### The answer is:" marker.
// Compare answers may be bare labels, so a marker-free compare decode falls
// back to the whole string; a marker-free math decode can never be correct.
std::string extract_final_answer(const std::vector<std::string>& decoded, synth::TaskKind kind);

struct MetricsRecord {
    std::string variant;
    uint64_t seed = 0;
    std::vector<std::string> lang_order;    // column order for export
    std::map<std::string, double> accuracy; // per language, in [0, 1]
    std::map<std::string, int> counts;      // eval examples per language
    double lrl = 0, hrl = 0, avg = 0;
};

// Produces decoded target tokens for one example.
using DecodeFn = std::function<std::vector<std::string>(const synth::TaskExample&)>;

MetricsRecord eval_accuracy(
    const DecodeFn& decode,
    const std::map<std::string, std::vector<synth::TaskExample>>& eval_sets,
    const std::vector<std::string>& lang_order);

// Lrl = mean over low-tier languages, Hrl = mean over the rest (English
// included), Avg = mean over all.
void aggregate_groups(MetricsRecord& rec, const std::set<std::string>& low_tier);

// Blind-guess accuracy per task kind, from the answer space.
double chance_accuracy(synth::TaskKind kind);

// ---------------------------------------------------------------------------
// Representation alignment.
// ---------------------------------------------------------------------------

enum class ProbeLocation { encoder_last, mapping_output, llm_embedding };
const char* probe_name(ProbeLocation p);

struct AlignmentReport {
    ProbeLocation probe = ProbeLocation::encoder_last;
    int pool_size = 0;
    std::map<std::string, double> cosine;  // mean same-sentence cosine vs English
    std::map<std::string, double> recall1; // nearest-English-neighbor hit rate
};

// One pooled vector per sentence per language; every language must hold the
// same sentences in the same order, with "en" present.
using PoolMap = std::map<std::string, std::vector<std::vector<double>>>;

AlignmentReport rep_alignment(const PoolMap& pools, ProbeLocation probe);

double cosine_sim(const std::vector<double>& a, const std::vector<double>& b);
std::vector<double> mean_pool_rows(const Tensor& m);

// ---------------------------------------------------------------------------
// Translation probe.
// ---------------------------------------------------------------------------

// Multiset token overlap: harmonic mean of precision and recall.
double token_f1(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);

struct TranslationScore {
    double f1 = 0, exact = 0;
    int count = 0;
};

std::map<std::string, TranslationScore> translation_eval(
    const DecodeFn& decode,
    const std::map<std::string, std::vector<synth::TaskExample>>& pairs_by_lang);

// ---------------------------------------------------------------------------
// Deterministic 2D principal-component projection (for external plotting).
// ---------------------------------------------------------------------------

struct Pca2d {
    std::vector<std::array<double, 2>> coords;
    std::vector<double> mean;
    std::array<std::vector<double>, 2> axes; // orthonormal components
    std::array<double, 2> variance;          // eigenvalues along the axes
};

Pca2d pca_project_2d(const std::vector<std::vector<double>>& vectors);

// ---------------------------------------------------------------------------
// Report export: a delimited accuracy table, a structured metrics file, an
// alignment table, and (when pools are given) projected 2D coordinates.
// Everything is a pure function of its inputs, so re-export is byte-identical.
// ---------------------------------------------------------------------------

void export_report(const std::vector<MetricsRecord>& records,
                   const std::vector<AlignmentReport>& alignments, const PoolMap& pools,
                   const std::string& out_dir);

std::vector<MetricsRecord> load_metrics_json(const std::string& path);

} // namespace bridgelab::evalkit
