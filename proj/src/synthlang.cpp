#include "bridgelab/synthlang.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace bridgelab::synth {

namespace {

// Content vocabulary, grouped by grammatical slot. The groups concatenate to
// exactly 180 words; every word is reachable from some sentence template.
const std::vector<std::string> kNumberWords = {
    "zero", "one",     "two",     "three",    "four",     "five",    "six",
    "seven", "eight",  "nine",    "ten",      "eleven",   "twelve",  "thirteen",
    "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty"};

const std::vector<std::string> kOpWords = {"plus", "minus", "times"};

const std::vector<std::string> kCompareWords = {"greater", "less", "than", "equal", "yes",
                                                "no",      "is",   "it",   "what"};

const std::vector<std::string> kMiscWords = {"the", "a",  "and", "near", "with", "compute",
                                             "tell", "me", "how", "many", "of",   "very"};

const std::vector<std::string> kNouns = {
    "cat",   "dog",   "bird",  "fish",   "horse", "sheep",  "cow",    "fox",    "wolf",
    "bear",  "apple", "pear",  "plum",   "grape", "lemon",  "stone",  "river",  "hill",
    "tree",  "leaf",  "house", "door",   "roof",  "wall",   "floor",  "table",  "chair",
    "lamp",  "book",  "page",  "pen",    "cup",   "plate",  "spoon",  "knife",  "boat",
    "wheel", "road",  "bridge", "tower", "cloud", "rain",   "snow",   "wind",   "star",
    "moon",  "sun",   "field", "grass",  "flower", "seed",  "root",   "branch", "nest",
    "egg",   "milk",  "bread", "salt",   "sugar", "corn"};

const std::vector<std::string> kVerbsT = {"sees",   "finds",  "takes",  "holds", "lifts",
                                          "carries", "pushes", "pulls",  "opens", "closes",
                                          "breaks", "builds", "paints", "cleans", "counts",
                                          "keeps",  "gives",  "buys",   "sells", "wants"};

const std::vector<std::string> kVerbsI = {"runs",  "walks",  "jumps", "sleeps", "waits",
                                          "falls", "rises",  "turns", "spins",  "floats",
                                          "sinks", "grows",  "shines", "fades", "sings",
                                          "dances", "rests", "moves", "stops",  "stays"};

const std::vector<std::string> kAdjectives = {
    "big",  "small", "old",    "new",   "red",   "blue",  "green", "white", "black",
    "tall", "short", "wide",   "narrow", "warm", "cold",  "bright", "dark", "heavy",
    "light", "quick", "slow",  "soft",  "hard",  "clean", "round"};

const std::vector<std::string> kAdverbs = {"quickly", "slowly", "gently", "loudly", "quietly",
                                           "early",   "late",   "often",  "never",  "again"};

std::vector<std::string> build_content() {
    std::vector<std::string> all;
    for (const auto* group : {&kNumberWords, &kOpWords, &kCompareWords, &kMiscWords, &kNouns,
                              &kVerbsT, &kVerbsI, &kAdjectives, &kAdverbs})
        all.insert(all.end(), group->begin(), group->end());
    if (all.size() != 180)
        throw std::runtime_error("content vocabulary must have 180 words, got " +
                                 std::to_string(all.size()));
    return all;
}

std::vector<std::string> build_invariants() {
    std::vector<std::string> inv;
    for (int d = 0; d <= 60; ++d) inv.push_back(std::to_string(d));
    for (const char* s : {"+", "-", "*", "=", ">", "<"}) inv.push_back(s);
    for (const char* s : {".", "?", ":", ","}) inv.push_back(s);
    for (const char* s : {"####", "The", "answer", "is:"}) inv.push_back(s);
    return inv;
}

const std::string& pick(const std::vector<std::string>& v, RngStream& rng) {
    return v[rng.uniform_int(static_cast<int>(v.size()))];
}

void vocab_add(Vocab& v, const std::string& w) {
    auto [it, fresh] = v.word_to_id.emplace(w, v.size());
    if (!fresh) throw std::runtime_error("duplicate vocabulary word: " + w);
    v.id_to_word.push_back(w);
}

Vocab make_vocab_base() {
    Vocab v;
    for (const char* s : {"<pad>", "<unk>", "<bos>", "<eos>"}) vocab_add(v, s);
    return v;
}

constexpr int kMaxResample = 200000;
constexpr int kAnswerCeiling = 60;

const std::array<std::string, 3> kCompareLabels = {"yes", "no", "equal"};

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += v[i];
    }
    return out;
}

} // namespace

const char* tier_name(Tier t) {
    switch (t) {
        case Tier::english: return "english";
        case Tier::high: return "high";
        case Tier::low: return "low";
    }
    return "?";
}

Tier tier_from_string(const std::string& s) {
    if (s == "english") return Tier::english;
    if (s == "high") return Tier::high;
    if (s == "low") return Tier::low;
    throw std::runtime_error("unknown tier: " + s);
}

const char* task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::math: return "math";
        case TaskKind::compare: return "compare";
        case TaskKind::translate: return "translate";
    }
    return "?";
}

TaskKind task_kind_from_string(const std::string& s) {
    if (s == "math") return TaskKind::math;
    if (s == "compare") return TaskKind::compare;
    if (s == "translate") return TaskKind::translate;
    throw std::runtime_error("unknown task kind: " + s);
}

SynthLanguage make_language(const std::string& name, Tier tier, uint64_t seed, int n_content) {
    SynthLanguage l;
    l.name = name;
    l.tier = tier;
    if (tier == Tier::english) {
        l.perm.resize(n_content);
        for (int i = 0; i < n_content; ++i) l.perm[i] = i;
    } else {
        RngStream rng(seed);
        l.perm = rng.permutation(n_content);
    }
    l.inverse.resize(n_content);
    for (int i = 0; i < n_content; ++i) l.inverse[l.perm[i]] = i;
    return l;
}

int Vocab::id_strict(const std::string& w) const {
    auto it = word_to_id.find(w);
    if (it == word_to_id.end()) throw std::runtime_error("word not in vocabulary: " + w);
    return it->second;
}

int Vocab::id_or_unk(const std::string& w) const {
    auto it = word_to_id.find(w);
    return it == word_to_id.end() ? unk : it->second;
}

std::vector<int> Vocab::ids_strict(const std::vector<std::string>& ws) const {
    std::vector<int> out;
    out.reserve(ws.size());
    for (const auto& w : ws) out.push_back(id_strict(w));
    return out;
}

std::vector<int> Vocab::ids_or_unk(const std::vector<std::string>& ws) const {
    std::vector<int> out;
    out.reserve(ws.size());
    for (const auto& w : ws) out.push_back(id_or_unk(w));
    return out;
}

std::vector<std::string> Vocab::words(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= size())
            throw std::runtime_error("token id out of range: " + std::to_string(id));
        out.push_back(id_to_word[id]);
    }
    return out;
}

World::World(const WorldConfig& cfg) : cfg_(cfg) {
    content_ = build_content();
    for (size_t i = 0; i < content_.size(); ++i)
        content_index_[content_[i]] = static_cast<int>(i);
    invariant_ = build_invariants();
    for (size_t i = 0; i < invariant_.size(); ++i)
        invariant_index_[invariant_[i]] = static_cast<int>(i);

    int n_english = 0;
    std::set<std::string> names;
    RngStream seeds(cfg_.lang_seed);
    for (const auto& spec : cfg_.langs) {
        if (!names.insert(spec.name).second)
            throw std::runtime_error("duplicate language name: " + spec.name);
        if (spec.tier == Tier::english) ++n_english;
        RngStream child = seeds.child(spec.name);
        langs_.push_back(make_language(spec.name, spec.tier, child.seed(),
                                       static_cast<int>(content_.size())));
    }
    if (n_english != 1) throw std::runtime_error("world needs exactly one english language");

    enc_vocab_ = make_vocab_base();
    llm_vocab_ = make_vocab_base();
    for (const auto& w : invariant_) {
        vocab_add(enc_vocab_, w);
        vocab_add(llm_vocab_, w);
    }
    for (const auto& lang : langs_) {
        for (const auto& lemma : content_) {
            const std::string s =
                lang.tier == Tier::english ? lemma : lang.name + ":" + lemma;
            vocab_add(enc_vocab_, s);
            if (lang.tier != Tier::low) vocab_add(llm_vocab_, s);
        }
    }
}

const SynthLanguage& World::language(const std::string& name) const {
    for (const auto& l : langs_)
        if (l.name == name) return l;
    throw std::runtime_error("unknown language: " + name);
}

bool World::is_invariant(const std::string& w) const { return invariant_index_.count(w) != 0; }

std::string World::surface(int content_index, const SynthLanguage& lang) const {
    if (content_index < 0 || content_index >= static_cast<int>(content_.size()))
        throw std::runtime_error("content index out of range");
    const std::string& lemma = content_[lang.perm[content_index]];
    return lang.tier == Tier::english ? lemma : lang.name + ":" + lemma;
}

std::vector<std::string> World::render(const std::vector<std::string>& tokens_en,
                                       const SynthLanguage& lang) const {
    std::vector<std::string> out;
    out.reserve(tokens_en.size());
    for (const auto& tok : tokens_en) {
        if (is_invariant(tok)) {
            out.push_back(tok);
            continue;
        }
        auto it = content_index_.find(tok);
        if (it == content_index_.end())
            throw std::runtime_error("token outside shared vocabulary: " + tok);
        out.push_back(surface(it->second, lang));
    }
    return out;
}

std::vector<std::string> World::inverse_render(const std::vector<std::string>& tokens_l,
                                               const SynthLanguage& lang) const {
    std::vector<std::string> out;
    out.reserve(tokens_l.size());
    const std::string prefix = lang.name + ":";
    for (const auto& tok : tokens_l) {
        if (is_invariant(tok)) {
            out.push_back(tok);
            continue;
        }
        std::string lemma = tok;
        if (lang.tier != Tier::english) {
            if (tok.rfind(prefix, 0) != 0)
                throw std::runtime_error("token is not in language " + lang.name + ": " + tok);
            lemma = tok.substr(prefix.size());
        }
        auto it = content_index_.find(lemma);
        if (it == content_index_.end())
            throw std::runtime_error("token outside shared vocabulary: " + tok);
        out.push_back(content_[lang.inverse[it->second]]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Generators.
// ---------------------------------------------------------------------------

std::vector<std::string> gen_grammar_sentence(const World& world, RngStream& rng) {
    (void)world;
    const auto& nw = kNumberWords;
    switch (rng.uniform_int(13)) {
        case 0:
            return {"the", pick(kAdjectives, rng), pick(kNouns, rng), pick(kVerbsT, rng),
                    "the", pick(kNouns, rng), "."};
        case 1:
            return {"a", pick(kNouns, rng), pick(kVerbsI, rng), "near", "the",
                    pick(kAdjectives, rng), pick(kNouns, rng), "."};
        case 2:
            return {"the", pick(kNouns, rng), pick(kVerbsI, rng), pick(kAdverbs, rng), "."};
        case 3:
            return {nw[rng.uniform_int(21)], pick(kNouns, rng), "and", nw[rng.uniform_int(21)],
                    pick(kNouns, rng), pick(kVerbsI, rng), pick(kAdverbs, rng), "."};
        case 4: {
            int a = rng.uniform_int(21);
            int b = rng.uniform_int(21 - a);
            return {nw[a], "plus", nw[b], "is", nw[a + b], ",", "the",
                    pick(kAdjectives, rng), pick(kNouns, rng), pick(kVerbsI, rng), "."};
        }
        case 5: {
            int a, b;
            do {
                a = rng.uniform_int(21);
                b = rng.uniform_int(21);
            } while (a * b > 20);
            return {nw[a], "times", nw[b], "is", nw[a * b], ",", "a",
                    pick(kAdjectives, rng), pick(kNouns, rng), pick(kVerbsI, rng), "."};
        }
        case 6: {
            int a = rng.uniform_int(21);
            int b = rng.uniform_int(a + 1);
            return {nw[a], "minus", nw[b], "is", nw[a - b], ",", pick(kAdverbs, rng),
                    "the", pick(kNouns, rng), pick(kVerbsI, rng), "."};
        }
        case 7: {
            int a = rng.uniform_int(21), b = rng.uniform_int(21);
            const char* label = a > b ? "yes" : (a < b ? "no" : "equal");
            return {"is", nw[a], "greater", "than", nw[b], "?", label, ",",
                    pick(kNouns, rng), pick(kVerbsI, rng), pick(kAdverbs, rng), "."};
        }
        case 8: {
            int a = rng.uniform_int(21), b = rng.uniform_int(21);
            const char* label = a < b ? "yes" : (a > b ? "no" : "equal");
            return {"is", nw[a], "less", "than", nw[b], "?", label, ",",
                    pick(kNouns, rng), pick(kVerbsT, rng), pick(kNouns, rng), "."};
        }
        case 9: {
            int a = rng.uniform_int(21);
            int b = rng.uniform_int(21 - a);
            return {"what", "is", nw[a], "plus", nw[b], "?", "it", "is", nw[a + b], ",",
                    pick(kAdjectives, rng), pick(kNouns, rng), "."};
        }
        case 10:
            return {"tell", "me", "how", "many", pick(kNouns, rng), "the",
                    pick(kAdjectives, rng), pick(kNouns, rng), pick(kVerbsT, rng), "."};
        case 11:
            return {"compute", nw[rng.uniform_int(21)], pick(kOpWords, rng),
                    nw[rng.uniform_int(21)], ",", "the", pick(kNouns, rng),
                    pick(kVerbsT, rng), "the", pick(kNouns, rng), "."};
        default:
            return {"a", "very", pick(kAdjectives, rng), pick(kNouns, rng), pick(kVerbsI, rng),
                    "with", "the", pick(kNouns, rng), "of", pick(kNouns, rng), "."};
    }
}

std::vector<std::string> gen_arith_fact(RngStream& rng) {
    for (;;) {
        // First operand spans the full accumulator range a derivation step can
        // produce; the second matches the word-number operand range.
        const int a = rng.uniform_int(kAnswerCeiling + 1), b = rng.uniform_int(31);
        const int op = rng.uniform_int(3);
        int r;
        const char* sym;
        if (op == 0) {
            r = a + b;
            sym = "+";
        } else if (op == 1) {
            r = a - b;
            sym = "-";
        } else {
            r = a * b;
            sym = "*";
        }
        if (r < 0 || r > kAnswerCeiling) continue;
        return {std::to_string(a), sym, std::to_string(b), "=", std::to_string(r), "."};
    }
}

TaskExample gen_math_example(const World& world, RngStream& rng, int difficulty) {
    (void)world;
    if (difficulty < 1 || difficulty > 3)
        throw std::runtime_error("math difficulty must be 1, 2, or 3");
    const int n_ops = difficulty + 1;             // operand count 2..4
    const int range = 5 + 5 * difficulty;         // operand max value 10/15/20

    for (int attempt = 0; attempt < kMaxResample; ++attempt) {
        std::vector<int64_t> vals(n_ops);
        std::vector<int> ops(n_ops - 1);
        for (auto& v : vals) v = rng.uniform_int(range + 1);
        for (auto& o : ops) o = rng.uniform_int(3); // 0:+ 1:- 2:*

        // Reduce with standard precedence, recording each step; reject any
        // run whose intermediate or final value leaves [0, 60] so the whole
        // derivation stays inside the digit token inventory.
        std::vector<std::string> step_tokens;
        std::vector<int64_t> v = vals;
        std::vector<int> o = ops;
        bool ok = true;
        auto reduce_at = [&](size_t i) {
            const int64_t a = v[i], b = v[i + 1];
            const int op = o[i];
            const int64_t r = op == 0 ? a + b : (op == 1 ? a - b : a * b);
            const char* sym = op == 0 ? "+" : (op == 1 ? "-" : "*");
            if (r < 0 || r > kAnswerCeiling) {
                ok = false;
                return;
            }
            for (const auto& t : {std::to_string(a), std::string(sym), std::to_string(b),
                                  std::string("="), std::to_string(r), std::string(".")})
                step_tokens.push_back(t);
            v[i] = r;
            v.erase(v.begin() + i + 1);
            o.erase(o.begin() + i);
        };
        for (size_t i = 0; ok && i < o.size();) {
            if (o[i] == 2)
                reduce_at(i);
            else
                ++i;
        }
        while (ok && !o.empty()) reduce_at(0);
        if (!ok) continue;
        const int64_t final_v = v[0];

        std::vector<std::string> expr;
        for (int i = 0; i < n_ops; ++i) {
            expr.push_back(kNumberWords[vals[i]]);
            if (i + 1 < n_ops) expr.push_back(kOpWords[ops[i]]);
        }
        TaskExample ex;
        ex.kind = TaskKind::math;
        switch (rng.uniform_int(3)) {
            case 0:
                ex.q = {"what", "is"};
                ex.q.insert(ex.q.end(), expr.begin(), expr.end());
                ex.q.push_back("?");
                break;
            case 1:
                ex.q = {"compute"};
                ex.q.insert(ex.q.end(), expr.begin(), expr.end());
                ex.q.push_back(".");
                break;
            default:
                ex.q = {"tell", "me"};
                ex.q.insert(ex.q.end(), expr.begin(), expr.end());
                ex.q.push_back(".");
                break;
        }
        ex.y = step_tokens;
        for (const char* t : {"####", "The", "answer", "is:"}) ex.y.push_back(t);
        ex.gold = std::to_string(final_v);
        ex.y.push_back(ex.gold);
        return ex;
    }
    throw std::runtime_error("math generator exceeded resample budget");
}

TaskExample gen_compare_example(const World& world, RngStream& rng,
                                const std::array<double, 3>& label_mix) {
    (void)world;
    const int label = rng.categorical({label_mix[0], label_mix[1], label_mix[2]});
    const bool greater = rng.uniform_int(2) == 0;
    int a, b;
    if (label == 2) {
        a = b = rng.uniform_int(21);
    } else {
        do {
            a = rng.uniform_int(21);
            b = rng.uniform_int(21);
        } while (a == b);
        // label 0 means the stated relation holds, label 1 means it fails.
        const bool want_a_bigger = greater == (label == 0);
        if ((a < b) == want_a_bigger) std::swap(a, b);
    }
    TaskExample ex;
    ex.kind = TaskKind::compare;
    ex.q = {"is", kNumberWords[a], greater ? "greater" : "less", "than", kNumberWords[b], "?"};
    ex.gold = kCompareLabels[label];
    ex.y = {"####", "The", "answer", "is:", ex.gold};
    return ex;
}

TaskExample gen_bilingual_pair(const World& world, RngStream& rng, const SynthLanguage& lang) {
    TaskExample ex;
    ex.kind = TaskKind::translate;
    ex.lang = lang.name;
    ex.y = gen_grammar_sentence(world, rng);
    ex.q = world.render(ex.y, lang);
    return ex;
}

TaskExample to_language(const World& world, const TaskExample& en_example,
                        const SynthLanguage& lang) {
    if (en_example.lang != "en")
        throw std::runtime_error("to_language expects an english-language example");
    TaskExample out = en_example;
    out.lang = lang.name;
    out.q = world.render(en_example.q, lang);
    return out;
}

// ---------------------------------------------------------------------------
// Corpus assembly.
// ---------------------------------------------------------------------------

namespace {

TaskExample gen_task(const World& world, RngStream& rng, const CorpusConfig& cfg,
                     double compare_fraction) {
    if (rng.uniform() < compare_fraction) return gen_compare_example(world, rng, cfg.compare_mix);
    const int difficulty =
        1 + rng.categorical({cfg.difficulty_mix[0], cfg.difficulty_mix[1], cfg.difficulty_mix[2]});
    return gen_math_example(world, rng, difficulty);
}

} // namespace

CorpusBundle build_corpora(const World& world, const CorpusConfig& cfg, RngStream& rng) {
    if (cfg.lm_grammar_lines < 0 || cfg.lm_arith_lines < 0 || cfg.lm_echo_lines < 0 ||
        cfg.encoder_pairs_per_lang < 0 || cfg.english_task_n < 0 ||
        cfg.query_task_per_lang < 0 || cfg.eval_per_lang < 0)
        throw std::runtime_error("corpus quotas must be non-negative");
    for (double f : {cfg.lm_high_fraction, cfg.task_compare_fraction, cfg.eval_compare_fraction,
                     cfg.pair_query_fraction})
        if (f < 0.0 || f > 1.0) throw std::runtime_error("corpus fractions must lie in [0, 1]");

    CorpusBundle bundle;

    // Eval sets come first so every training draw can be checked against
    // them. Keys are the exact query strings per (language, kind); eval_qs
    // additionally bans the bare question strings from text-only corpora.
    std::map<std::string, std::set<std::string>> eval_keys;
    std::map<std::string, std::set<std::string>> eval_qs;
    auto key_of = [](const TaskExample& ex) {
        return ex.lang + "|" + task_kind_name(ex.kind) + "|" + join(ex.q);
    };
    for (const auto& lang : world.languages()) {
        RngStream er = rng.child("eval:" + lang.name);
        std::vector<TaskExample>& evs = bundle.eval_sets[lang.name];
        // Cap repeats of one gold answer so a majority-class guesser scores
        // at chance level on the eval sets.
        const int cap = std::max(1, cfg.eval_per_lang / 16);
        std::map<std::string, int> gold_count;
        std::set<std::string> seen;
        int attempts = 0;
        while (static_cast<int>(evs.size()) < cfg.eval_per_lang) {
            if (++attempts > kMaxResample)
                throw std::runtime_error("eval generator exceeded resample budget");
            TaskExample en = gen_task(world, er, cfg, cfg.eval_compare_fraction);
            TaskExample ex = to_language(world, en, lang);
            if (ex.kind == TaskKind::math && gold_count[ex.gold] >= cap) continue;
            if (!seen.insert(key_of(ex)).second) continue;
            gold_count[ex.gold] += 1;
            eval_keys[lang.name].insert(key_of(ex));
            eval_qs[lang.name].insert(join(ex.q));
            evs.push_back(std::move(ex));
        }
    }

    // LM pretrain text: English grammar lines, a configurable slice of
    // high-tier lines (round-robin across high languages), zero low-tier
    // lines, plus language-invariant digit arithmetic facts.
    {
        RngStream lr = rng.child("lm-pretrain");
        std::vector<const SynthLanguage*> high;
        for (const auto& l : world.languages())
            if (l.tier == Tier::high) high.push_back(&l);
        int n_high = static_cast<int>(cfg.lm_grammar_lines * cfg.lm_high_fraction + 0.5);
        if (high.empty()) n_high = 0;
        const int n_en = cfg.lm_grammar_lines - n_high;
        for (int i = 0; i < n_en; ++i)
            bundle.lm_pretrain.push_back({"en", gen_grammar_sentence(world, lr)});
        for (int i = 0; i < n_high; ++i) {
            const SynthLanguage& l = *high[i % high.size()];
            bundle.lm_pretrain.push_back({l.name, world.render(gen_grammar_sentence(world, lr), l)});
        }
        for (int i = 0; i < cfg.lm_arith_lines; ++i)
            bundle.lm_pretrain.push_back({"en", gen_arith_fact(lr)});

        // Echo lines: the same sentence twice in one row, alternating between
        // grammar text and task questions. A frozen reader can only be steered
        // by a soft prefix if it learned to read content back from earlier
        // positions; these rows are where that copying circuitry comes from.
        const std::set<std::string>& en_eval_qs = eval_qs["en"];
        int placed = 0, attempts = 0;
        while (placed < cfg.lm_echo_lines) {
            if (++attempts > kMaxResample)
                throw std::runtime_error("echo generator exceeded resample budget");
            const std::vector<std::string> s =
                placed % 2 == 0 ? gen_grammar_sentence(world, lr)
                                : gen_task(world, lr, cfg, cfg.task_compare_fraction).q;
            if (en_eval_qs.count(join(s)) != 0) continue;
            std::vector<std::string> row = s;
            row.insert(row.end(), s.begin(), s.end());
            bundle.lm_pretrain.push_back({"en", std::move(row)});
            ++placed;
        }
    }

    // Parallel pairs for the encoder, English included as identity pairs.
    // A configurable slice of the pairs are task queries so question text is
    // inside the encoder's training distribution; answers appear on neither
    // side, and pair questions never collide with eval questions.
    for (const auto& lang : world.languages()) {
        RngStream pr = rng.child("enc:" + lang.name);
        const std::set<std::string>& banned_q = eval_qs[lang.name];
        int placed = 0, attempts = 0;
        while (placed < cfg.encoder_pairs_per_lang) {
            if (++attempts > kMaxResample)
                throw std::runtime_error("pair generator exceeded resample budget");
            TaskExample ex;
            if (pr.uniform() < cfg.pair_query_fraction) {
                TaskExample en = gen_task(world, pr, cfg, cfg.task_compare_fraction);
                ex.kind = TaskKind::translate;
                ex.lang = lang.name;
                ex.y = en.q;
                ex.q = world.render(en.q, lang);
            } else {
                ex = gen_bilingual_pair(world, pr, lang);
            }
            if (banned_q.count(join(ex.q)) != 0) continue;
            bundle.encoder_pairs.push_back(std::move(ex));
            ++placed;
        }
    }

    auto fill_tasks = [&](std::vector<TaskExample>& out, const std::string& lang_name, int n,
                          RngStream& tr) {
        const SynthLanguage& lang = world.language(lang_name);
        const std::set<std::string>& banned = eval_keys[lang_name];
        int attempts = 0;
        while (static_cast<int>(out.size()) < n) {
            if (++attempts > kMaxResample)
                throw std::runtime_error("task generator exceeded resample budget");
            TaskExample ex = to_language(world, gen_task(world, tr, cfg,
                                                         cfg.task_compare_fraction), lang);
            if (banned.count(key_of(ex)) != 0) continue;
            out.push_back(ex);
        }
    };

    {
        RngStream tr = rng.child("english-task");
        fill_tasks(bundle.english_task, "en", cfg.english_task_n, tr);
    }
    for (const auto& lang : world.languages()) {
        RngStream tr = rng.child("query-task:" + lang.name);
        fill_tasks(bundle.query_task[lang.name], lang.name, cfg.query_task_per_lang, tr);
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

namespace {

struct ParsedLine {
    std::string lang, kind;
    std::vector<std::string> src, tgt;
};

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

ParsedLine parse_line(const std::string& line) {
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("corpus line has no tab separator");
    std::vector<std::string> head = split_words(line.substr(0, tab));
    if (head.size() < 2)
        throw std::runtime_error("corpus line needs a language and a kind: " + line);
    ParsedLine p;
    p.lang = head[0];
    p.kind = head[1];
    p.src.assign(head.begin() + 2, head.end());
    p.tgt = split_words(line.substr(tab + 1));
    return p;
}

std::string gold_from_target(const std::vector<std::string>& y) {
    for (size_t i = y.size(); i-- > 0;)
        if (y[i] == "is:") return i + 1 < y.size() ? y[i + 1] : "";
    return "";
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& l : lines) out << l << '\n';
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::vector<std::string> lines;
    std::string l;
    while (std::getline(in, l))
        if (!l.empty()) lines.push_back(l);
    return lines;
}

} // namespace

std::string task_to_line(const TaskExample& ex) {
    return ex.lang + " " + task_kind_name(ex.kind) + " " + join(ex.q) + "\t" + join(ex.y);
}

TaskExample task_from_line(const std::string& line) {
    ParsedLine p = parse_line(line);
    TaskExample ex;
    ex.lang = p.lang;
    ex.kind = task_kind_from_string(p.kind);
    ex.q = p.src;
    ex.y = p.tgt;
    ex.gold = ex.kind == TaskKind::translate ? "" : gold_from_target(ex.y);
    return ex;
}

void save_bundle(const CorpusBundle& bundle, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;

    std::vector<std::string> lm;
    for (const auto& t : bundle.lm_pretrain) lm.push_back(t.lang + " text " + join(t.tokens) + "\t");
    write_lines(dir + "/lm_pretrain.txt", lm);
    manifest["lm_pretrain"] = lm.size();

    auto dump_tasks = [&](const std::string& name, const std::vector<TaskExample>& v) {
        std::vector<std::string> lines;
        for (const auto& ex : v) lines.push_back(task_to_line(ex));
        write_lines(dir + "/" + name + ".txt", lines);
        manifest[name] = lines.size();
    };
    dump_tasks("encoder_pairs", bundle.encoder_pairs);
    dump_tasks("english_task", bundle.english_task);
    for (const auto& [lang, v] : bundle.query_task) dump_tasks("query_task_" + lang, v);
    for (const auto& [lang, v] : bundle.eval_sets) dump_tasks("eval_" + lang, v);

    std::vector<std::string> langs;
    for (const auto& [lang, v] : bundle.query_task) langs.push_back(lang);
    manifest["languages"] = langs;

    std::ofstream out(dir + "/manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in " + dir);
    out << manifest.dump(2) << '\n';
}

CorpusBundle load_bundle(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw std::runtime_error("cannot read manifest in " + dir);
    nlohmann::json manifest = nlohmann::json::parse(in);

    CorpusBundle bundle;
    for (const auto& line : read_lines(dir + "/lm_pretrain.txt")) {
        ParsedLine p = parse_line(line);
        if (p.kind != "text") throw std::runtime_error("lm_pretrain must contain text lines");
        bundle.lm_pretrain.push_back({p.lang, p.src});
    }
    auto load_tasks = [&](const std::string& name) {
        std::vector<TaskExample> v;
        for (const auto& line : read_lines(dir + "/" + name + ".txt"))
            v.push_back(task_from_line(line));
        if (manifest.contains(name) && manifest[name].get<size_t>() != v.size())
            throw std::runtime_error("manifest count mismatch for " + name);
        return v;
    };
    bundle.encoder_pairs = load_tasks("encoder_pairs");
    bundle.english_task = load_tasks("english_task");
    for (const auto& lang : manifest["languages"].get<std::vector<std::string>>()) {
        bundle.query_task[lang] = load_tasks("query_task_" + lang);
        bundle.eval_sets[lang] = load_tasks("eval_" + lang);
    }
    if (manifest["lm_pretrain"].get<size_t>() != bundle.lm_pretrain.size())
        throw std::runtime_error("manifest count mismatch for lm_pretrain");
    return bundle;
}

} // namespace bridgelab::synth
