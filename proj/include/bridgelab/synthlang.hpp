#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "bridgelab/rng.hpp"

namespace bridgelab::synth {

// ---------------------------------------------------------------------------
// Synthetic multilingual world. Every language shares one content vocabulary;
// a language is a bijective relabeling of it. Digits, operator symbols,
// punctuation, and the answer-marker words are invariant in every language.
// ---------------------------------------------------------------------------

enum class Tier { english, high, low };
enum class TaskKind { math, compare, translate };

const char* tier_name(Tier t);
Tier tier_from_string(const std::string& s);
const char* task_kind_name(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

struct SynthLanguage {
    std::string name;
    Tier tier = Tier::low;
    std::vector<int> perm;    // content index -> relabeled content index
    std::vector<int> inverse; // relabeled index -> content index
};

// Deterministic language from a seed; English is always the identity.
SynthLanguage make_language(const std::string& name, Tier tier, uint64_t seed, int n_content);

struct LangSpec {
    std::string name;
    Tier tier;
};

struct WorldConfig {
    std::vector<LangSpec> langs = {{"en", Tier::english}, {"ga", Tier::high}, {"ha", Tier::high},
                                   {"ka", Tier::high},    {"xa", Tier::low}, {"ya", Tier::low},
                                   {"za", Tier::low}};
    uint64_t lang_seed = 9001;
};

// Word-level vocabulary with the four reserved specials in fixed slots.
struct Vocab {
    std::vector<std::string> id_to_word;
    std::unordered_map<std::string, int> word_to_id;
    int pad = 0, unk = 1, bos = 2, eos = 3;

    int size() const { return static_cast<int>(id_to_word.size()); }
    bool has(const std::string& w) const { return word_to_id.count(w) != 0; }
    int id_strict(const std::string& w) const;     // throws on unknown word
    int id_or_unk(const std::string& w) const;     // unknown word -> unk
    std::vector<int> ids_strict(const std::vector<std::string>& ws) const;
    std::vector<int> ids_or_unk(const std::vector<std::string>& ws) const;
    std::vector<std::string> words(const std::vector<int>& ids) const; // throws on bad id
};

class World {
  public:
    explicit World(const WorldConfig& cfg = WorldConfig{});

    const WorldConfig& config() const { return cfg_; }
    const std::vector<SynthLanguage>& languages() const { return langs_; }
    const SynthLanguage& language(const std::string& name) const;

    const std::vector<std::string>& content_words() const { return content_; }
    const std::vector<std::string>& invariant_words() const { return invariant_; }
    bool is_content(const std::string& w) const { return content_index_.count(w) != 0; }
    bool is_invariant(const std::string& w) const;

    // Surface form of one content word in a language ("xa:cat" style for
    // non-English languages, the bare word for English).
    std::string surface(int content_index, const SynthLanguage& lang) const;

    // Relabel an English sentence into a language and back. Invariant tokens
    // pass through; anything outside the shared vocabulary is an error.
    std::vector<std::string> render(const std::vector<std::string>& tokens_en,
                                    const SynthLanguage& lang) const;
    std::vector<std::string> inverse_render(const std::vector<std::string>& tokens_l,
                                            const SynthLanguage& lang) const;

    // Encoder vocabulary covers every language's surfaces; the LM vocabulary
    // covers English, high-tier surfaces, and invariants only, so low-tier
    // content tokenizes to unk for the LM.
    const Vocab& encoder_vocab() const { return enc_vocab_; }
    const Vocab& llm_vocab() const { return llm_vocab_; }

  private:
    WorldConfig cfg_;
    std::vector<std::string> content_;
    std::unordered_map<std::string, int> content_index_;
    std::vector<std::string> invariant_;
    std::unordered_map<std::string, int> invariant_index_;
    std::vector<SynthLanguage> langs_;
    Vocab enc_vocab_, llm_vocab_;
};

// ---------------------------------------------------------------------------
// Task generation. Examples are generated in English and relabeled into a
// language afterwards; targets always stay in English.
// ---------------------------------------------------------------------------

struct TaskExample {
    std::string lang = "en";
    TaskKind kind = TaskKind::math;
    std::vector<std::string> q; // surface tokens in `lang`
    std::vector<std::string> y; // English target tokens
    std::string gold;           // final answer string; empty for translate
};

// Arithmetic word problem over +,-,* in number words; the target is a digit
// and symbol derivation in precedence order ending with the answer marker.
// Difficulty 1..3 sets operand count 2..4 and operand range 10/15/20; every
// intermediate and the final answer stay within [0, 60].
TaskExample gen_math_example(const World& world, RngStream& rng, int difficulty);

// "is <a> greater|less than <b> ?" with answer label yes/no/equal, drawn to
// match the configured label mix.
TaskExample gen_compare_example(const World& world, RngStream& rng,
                                const std::array<double, 3>& label_mix = {0.4, 0.4, 0.2});

// One template-grammar English sentence paired with its relabeled form in
// `lang` (kind=translate, q in lang, y in English). English gives q == y.
TaskExample gen_bilingual_pair(const World& world, RngStream& rng, const SynthLanguage& lang);

// A raw English grammar sentence (reused for LM pretraining text).
std::vector<std::string> gen_grammar_sentence(const World& world, RngStream& rng);

// A digit-space arithmetic fact line like "12 + 7 = 19 .".
std::vector<std::string> gen_arith_fact(RngStream& rng);

// Relabel the query of an English-language example into `lang`.
TaskExample to_language(const World& world, const TaskExample& en_example,
                        const SynthLanguage& lang);

// ---------------------------------------------------------------------------
// Corpus bundle.
// ---------------------------------------------------------------------------

struct TextLine {
    std::string lang;
    std::vector<std::string> tokens;
};

struct CorpusConfig {
    int lm_grammar_lines = 1600;  // grammar text lines in the LM pretrain mix
    double lm_high_fraction = 0.10; // fraction of grammar lines in high-tier languages
    int lm_arith_lines = 700;     // digit-space fact lines (language-invariant)
    int lm_echo_lines = 1200;     // sentence-repeated-twice lines; train in-context copying
    int encoder_pairs_per_lang = 350; // parallel pairs per language, English included
    double pair_query_fraction = 0.5; // fraction of parallel pairs that are task queries
    int english_task_n = 1300;
    int query_task_per_lang = 150; // task rows per language for the second stage
    int eval_per_lang = 32;
    double task_compare_fraction = 0.30;
    double eval_compare_fraction = 0.0;
    std::array<double, 3> compare_mix = {0.4, 0.4, 0.2};
    std::array<double, 3> difficulty_mix = {0.34, 0.33, 0.33};
};

struct CorpusBundle {
    std::vector<TextLine> lm_pretrain;
    std::vector<TaskExample> encoder_pairs;
    std::vector<TaskExample> english_task;
    std::map<std::string, std::vector<TaskExample>> query_task; // per language
    std::map<std::string, std::vector<TaskExample>> eval_sets;  // per language
};

// Pure function of (world, config, seed): exact quotas, zero low-tier text in
// lm_pretrain, eval sets disjoint from every training set by exact string
// comparison (training draws that collide with eval are resampled).
CorpusBundle build_corpora(const World& world, const CorpusConfig& cfg, RngStream& rng);

// ---------------------------------------------------------------------------
// Serialization: one record per line, "<lang> <kind> <src tokens>\t<tgt
// tokens>" (kind "text" with an empty target for raw pretrain lines), plus a
// JSON manifest with counts.
// ---------------------------------------------------------------------------

std::string task_to_line(const TaskExample& ex);
TaskExample task_from_line(const std::string& line);

void save_bundle(const CorpusBundle& bundle, const std::string& dir);
CorpusBundle load_bundle(const std::string& dir);

} // namespace bridgelab::synth
