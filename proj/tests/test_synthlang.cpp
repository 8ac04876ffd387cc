#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "bridgelab/synthlang.hpp"

using namespace bridgelab;
using namespace bridgelab::synth;

namespace {

// Independent math oracle: its own number table and a recursive-descent
// evaluator, deliberately a different algorithm from the generator's
// reduction loop.
int oracle_num(const std::string& w) {
    static const std::vector<std::string> words = {
        "zero", "one", "two",  "three", "four",    "five",    "six",       "seven",
        "eight", "nine", "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen",
        "sixteen", "seventeen", "eighteen", "nineteen", "twenty"};
    for (size_t i = 0; i < words.size(); ++i)
        if (words[i] == w) return static_cast<int>(i);
    throw std::runtime_error("oracle: not a number word: " + w);
}

long long oracle_term(const std::vector<std::string>& w, size_t& pos) {
    long long v = oracle_num(w.at(pos++));
    while (pos < w.size() && w[pos] == "times") {
        ++pos;
        v *= oracle_num(w.at(pos++));
    }
    return v;
}

long long oracle_expr(const std::vector<std::string>& w, size_t& pos) {
    long long v = oracle_term(w, pos);
    while (pos < w.size() && (w[pos] == "plus" || w[pos] == "minus")) {
        const bool add = w[pos] == "plus";
        ++pos;
        const long long t = oracle_term(w, pos);
        v = add ? v + t : v - t;
    }
    return v;
}

// Strip the question template and evaluate what remains.
long long oracle_eval_query(const std::vector<std::string>& q_en) {
    size_t begin = 0, end = q_en.size() - 1; // all templates end with ? or .
    if (q_en.at(0) == "what")
        begin = 2;
    else if (q_en.at(0) == "compute")
        begin = 1;
    else if (q_en.at(0) == "tell")
        begin = 2;
    else
        throw std::runtime_error("oracle: unknown math template");
    std::vector<std::string> expr(q_en.begin() + begin, q_en.begin() + end);
    size_t pos = 0;
    const long long v = oracle_expr(expr, pos);
    if (pos != expr.size()) throw std::runtime_error("oracle: trailing tokens in expression");
    return v;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += v[i];
    }
    return out;
}

} // namespace

TEST_CASE("world has the pinned shape: 180 content words, 7 languages, two vocabularies") {
    World world;
    CHECK(world.content_words().size() == 180);
    CHECK(world.languages().size() == 7);
    CHECK(world.invariant_words().size() == 61 + 6 + 4 + 4);

    // encoder: specials + invariants + one surface set per language
    CHECK(world.encoder_vocab().size() == 4 + 75 + 7 * 180);
    // lm: specials + invariants + english + high-tier surfaces only
    CHECK(world.llm_vocab().size() == 4 + 75 + 4 * 180);

    CHECK(world.encoder_vocab().has("xa:cat"));
    CHECK(!world.llm_vocab().has("xa:cat"));
    CHECK(world.llm_vocab().has("ga:cat"));
    CHECK(world.llm_vocab().has("cat"));
    for (const auto& w : world.invariant_words()) {
        CHECK(world.encoder_vocab().has(w));
        CHECK(world.llm_vocab().has(w));
    }
    CHECK(world.language("en").tier == Tier::english);
    CHECK_THROWS_AS(world.language("fr"), std::runtime_error);
}

TEST_CASE("english is the identity language and permutations are bijections") {
    World world;
    const auto& en = world.language("en");
    for (size_t i = 0; i < world.content_words().size(); ++i)
        CHECK(en.perm[i] == static_cast<int>(i));

    for (const auto& lang : world.languages()) {
        std::vector<int> sorted = lang.perm;
        std::sort(sorted.begin(), sorted.end());
        for (size_t i = 0; i < sorted.size(); ++i) REQUIRE(sorted[i] == static_cast<int>(i));
        for (size_t i = 0; i < lang.perm.size(); ++i)
            REQUIRE(lang.inverse[lang.perm[i]] == static_cast<int>(i));
    }
}

TEST_CASE("languages from distinct seeds relabel more than 90% of content words") {
    SynthLanguage a = make_language("p", Tier::low, 111, 180);
    SynthLanguage b = make_language("q", Tier::low, 222, 180);
    int same_a_id = 0, same_ab = 0;
    for (int i = 0; i < 180; ++i) {
        if (a.perm[i] == i) ++same_a_id;
        if (a.perm[i] == b.perm[i]) ++same_ab;
    }
    CHECK(same_a_id < 18);
    CHECK(same_ab < 18);
}

TEST_CASE("render keeps invariants fixed, preserves length, and inverts exactly") {
    World world;
    RngStream rng(5);
    const std::vector<std::string> digits = {"2", "+", "3", "=", "5", "."};
    for (const auto& lang : world.languages()) {
        CHECK(world.render(digits, lang) == digits);
        for (int i = 0; i < 50; ++i) {
            std::vector<std::string> s = gen_grammar_sentence(world, rng);
            std::vector<std::string> r = world.render(s, lang);
            REQUIRE(r.size() == s.size());
            REQUIRE(world.inverse_render(r, lang) == s);
        }
    }
    CHECK_THROWS_WITH_AS(world.render({"banana"}, world.language("xa")),
                         "token outside shared vocabulary: banana", std::runtime_error);
    CHECK_THROWS_AS(world.inverse_render({"ya:cat"}, world.language("xa")), std::runtime_error);
}

TEST_CASE("10,000 math examples all agree with an independent evaluator") {
    World world;
    RngStream rng(1234);
    std::set<std::string> golds;
    for (int i = 0; i < 10000; ++i) {
        const int difficulty = 1 + rng.uniform_int(3);
        TaskExample ex = gen_math_example(world, rng, difficulty);
        REQUIRE(ex.kind == TaskKind::math);
        REQUIRE(ex.lang == "en");
        const long long want = oracle_eval_query(ex.q);
        REQUIRE(std::to_string(want) == ex.gold);
        REQUIRE(want >= 0);
        REQUIRE(want <= 60);
        REQUIRE(ex.y.size() <= 30);

        // Target format: 6-token step equations, then the 5-token marker.
        REQUIRE(ex.y.size() >= 11);
        REQUIRE((ex.y.size() - 5) % 6 == 0);
        for (size_t s = 0; s + 5 < ex.y.size() - 5; s += 6) {
            const long long a = std::stoll(ex.y[s]), b = std::stoll(ex.y[s + 2]);
            const long long r = std::stoll(ex.y[s + 4]);
            REQUIRE(ex.y[s + 3] == "=");
            REQUIRE(ex.y[s + 5] == ".");
            if (ex.y[s + 1] == "+") REQUIRE(r == a + b);
            else if (ex.y[s + 1] == "-") REQUIRE(r == a - b);
            else if (ex.y[s + 1] == "*") REQUIRE(r == a * b);
            else REQUIRE(false);
            REQUIRE(r >= 0);
            REQUIRE(r <= 60);
        }
        const size_t m = ex.y.size() - 5;
        REQUIRE(ex.y[m] == "####");
        REQUIRE(ex.y[m + 1] == "The");
        REQUIRE(ex.y[m + 2] == "answer");
        REQUIRE(ex.y[m + 3] == "is:");
        REQUIRE(ex.y[m + 4] == ex.gold);
        // The last derivation step must produce the gold answer.
        REQUIRE(ex.y[m - 2] == ex.gold);
        golds.insert(ex.gold);
    }
    CHECK(golds.size() > 30); // answers spread over the 0..60 space
    CHECK_THROWS_AS(gen_math_example(world, rng, 0), std::runtime_error);
    CHECK_THROWS_AS(gen_math_example(world, rng, 4), std::runtime_error);
}

TEST_CASE("10,000 compare examples match the comparison oracle and the label mix") {
    World world;
    RngStream rng(77);
    std::map<std::string, int> counts;
    for (int i = 0; i < 10000; ++i) {
        TaskExample ex = gen_compare_example(world, rng);
        REQUIRE(ex.q.size() == 6);
        REQUIRE(ex.q[0] == "is");
        REQUIRE(ex.q[3] == "than");
        REQUIRE(ex.q[5] == "?");
        const int a = oracle_num(ex.q[1]), b = oracle_num(ex.q[4]);
        std::string want;
        if (a == b)
            want = "equal";
        else if (ex.q[2] == "greater")
            want = a > b ? "yes" : "no";
        else
            want = a < b ? "yes" : "no";
        REQUIRE(want == ex.gold);
        REQUIRE(ex.y == std::vector<std::string>({"####", "The", "answer", "is:", ex.gold}));
        counts[ex.gold] += 1;
    }
    CHECK(std::abs(counts["yes"] / 10000.0 - 0.4) < 0.05);
    CHECK(std::abs(counts["no"] / 10000.0 - 0.4) < 0.05);
    CHECK(std::abs(counts["equal"] / 10000.0 - 0.2) < 0.05);
}

TEST_CASE("bilingual pairs are exactly parallel and rarely duplicate") {
    World world;
    RngStream rng(31);
    const auto& xa = world.language("xa");
    std::set<std::string> english_sides;
    for (int i = 0; i < 1000; ++i) {
        TaskExample ex = gen_bilingual_pair(world, rng, xa);
        REQUIRE(ex.kind == TaskKind::translate);
        REQUIRE(ex.q.size() == ex.y.size());
        REQUIRE(world.inverse_render(ex.q, xa) == ex.y);
        english_sides.insert(join(ex.y));
    }
    CHECK(english_sides.size() >= 990); // at most 1% duplicates

    // English bilingual pairs are identity pairs.
    TaskExample en = gen_bilingual_pair(world, rng, world.language("en"));
    CHECK(en.q == en.y);
}

TEST_CASE("the grammar reaches every content word") {
    World world;
    RngStream rng(99);
    std::set<std::string> seen;
    for (int i = 0; i < 6000; ++i)
        for (const auto& w : gen_grammar_sentence(world, rng))
            if (world.is_content(w)) seen.insert(w);
    for (const auto& w : world.content_words()) {
        INFO("missing content word: ", w);
        CHECK(seen.count(w) == 1);
    }
}

TEST_CASE("low-tier queries collapse to unk for the lm but not for the encoder") {
    World world;
    RngStream rng(42);
    TaskExample en = gen_math_example(world, rng, 2);
    TaskExample lo = to_language(world, en, world.language("xa"));
    TaskExample hi = to_language(world, en, world.language("ga"));

    const Vocab& lv = world.llm_vocab();
    int unk_content = 0, content_total = 0;
    for (const auto& w : lo.q) {
        if (world.is_invariant(w)) {
            CHECK(lv.id_or_unk(w) != lv.unk);
            continue;
        }
        ++content_total;
        if (lv.id_or_unk(w) == lv.unk) ++unk_content;
    }
    CHECK(content_total > 0);
    CHECK(unk_content == content_total);

    for (const auto& w : hi.q) CHECK(lv.id_or_unk(w) != lv.unk);

    // The encoder tokenizes every language strictly.
    CHECK(world.encoder_vocab().ids_strict(lo.q).size() == lo.q.size());
    CHECK_THROWS_AS(world.encoder_vocab().ids_strict({"banana"}), std::runtime_error);
}

TEST_CASE("corpus bundle meets exact quotas with zero low-tier pretrain text") {
    World world;
    CorpusConfig cfg;
    cfg.lm_grammar_lines = 60;
    cfg.lm_high_fraction = 0.2;
    cfg.lm_arith_lines = 15;
    cfg.encoder_pairs_per_lang = 20;
    cfg.english_task_n = 40;
    cfg.query_task_per_lang = 10;
    cfg.eval_per_lang = 16;
    RngStream rng(7001);
    CorpusBundle b = build_corpora(world, cfg, rng);

    CHECK(b.lm_pretrain.size() == 60 + 15);
    std::map<std::string, int> lm_langs;
    for (const auto& t : b.lm_pretrain) lm_langs[t.lang] += 1;
    CHECK(lm_langs["en"] == 48 + 15);
    CHECK(lm_langs["ga"] + lm_langs["ha"] + lm_langs["ka"] == 12);
    CHECK(lm_langs.count("xa") == 0);
    CHECK(lm_langs.count("ya") == 0);
    CHECK(lm_langs.count("za") == 0);

    CHECK(b.encoder_pairs.size() == 7u * 20u);
    CHECK(b.english_task.size() == 40);
    REQUIRE(b.query_task.size() == 7);
    REQUIRE(b.eval_sets.size() == 7);
    for (const auto& [lang, v] : b.query_task) CHECK(v.size() == 10);
    for (const auto& [lang, v] : b.eval_sets) {
        CHECK(v.size() == 16);
        for (const auto& ex : v) CHECK(ex.lang == lang);
    }

    // Eval is disjoint from every training set by exact line comparison.
    std::set<std::string> train_lines;
    for (const auto& ex : b.encoder_pairs) train_lines.insert(task_to_line(ex));
    for (const auto& ex : b.english_task) train_lines.insert(task_to_line(ex));
    for (const auto& [lang, v] : b.query_task)
        for (const auto& ex : v) train_lines.insert(task_to_line(ex));
    for (const auto& [lang, v] : b.eval_sets)
        for (const auto& ex : v) CHECK(train_lines.count(task_to_line(ex)) == 0);

    // No repeated gold answer dominates an eval set (majority guessing stays
    // at chance).
    for (const auto& [lang, v] : b.eval_sets) {
        std::map<std::string, int> gold_counts;
        for (const auto& ex : v) gold_counts[ex.gold] += 1;
        for (const auto& [gold, n] : gold_counts) CHECK(n <= 1);
    }
}

TEST_CASE("corpus generation is a pure function of config and seed") {
    World world;
    CorpusConfig cfg;
    cfg.lm_grammar_lines = 30;
    cfg.lm_arith_lines = 5;
    cfg.encoder_pairs_per_lang = 5;
    cfg.english_task_n = 8;
    cfg.query_task_per_lang = 4;
    cfg.eval_per_lang = 6;

    auto dump = [&](uint64_t seed) {
        RngStream rng(seed);
        CorpusBundle b = build_corpora(world, cfg, rng);
        std::string all;
        for (const auto& t : b.lm_pretrain) all += t.lang + " " + join(t.tokens) + "\n";
        for (const auto& ex : b.encoder_pairs) all += task_to_line(ex) + "\n";
        for (const auto& ex : b.english_task) all += task_to_line(ex) + "\n";
        for (const auto& [lang, v] : b.query_task)
            for (const auto& ex : v) all += task_to_line(ex) + "\n";
        for (const auto& [lang, v] : b.eval_sets)
            for (const auto& ex : v) all += task_to_line(ex) + "\n";
        return all;
    };
    CHECK(dump(11) == dump(11));
    CHECK(dump(11) != dump(12));
}

TEST_CASE("bundles serialize to lines and reload identically") {
    World world;
    CorpusConfig cfg;
    cfg.lm_grammar_lines = 12;
    cfg.lm_arith_lines = 4;
    cfg.encoder_pairs_per_lang = 4;
    cfg.english_task_n = 6;
    cfg.query_task_per_lang = 3;
    cfg.eval_per_lang = 4;
    RngStream rng(501);
    CorpusBundle b = build_corpora(world, cfg, rng);

    const std::string dir = "/tmp/bridgelab_test_bundle";
    std::filesystem::remove_all(dir);
    save_bundle(b, dir);
    CorpusBundle r = load_bundle(dir);

    REQUIRE(r.lm_pretrain.size() == b.lm_pretrain.size());
    for (size_t i = 0; i < b.lm_pretrain.size(); ++i) {
        CHECK(r.lm_pretrain[i].lang == b.lm_pretrain[i].lang);
        CHECK(r.lm_pretrain[i].tokens == b.lm_pretrain[i].tokens);
    }
    REQUIRE(r.english_task.size() == b.english_task.size());
    for (size_t i = 0; i < b.english_task.size(); ++i) {
        CHECK(task_to_line(r.english_task[i]) == task_to_line(b.english_task[i]));
        CHECK(r.english_task[i].gold == b.english_task[i].gold);
    }
    for (const auto& [lang, v] : b.eval_sets) {
        REQUIRE(r.eval_sets.count(lang) == 1);
        REQUIRE(r.eval_sets[lang].size() == v.size());
        for (size_t i = 0; i < v.size(); ++i)
            CHECK(task_to_line(r.eval_sets[lang][i]) == task_to_line(v[i]));
    }

    // A tampered file no longer matches the manifest count.
    {
        std::ifstream in(dir + "/english_task.txt");
        std::string line, keep;
        std::getline(in, line);
        while (std::getline(in, line)) keep += line + "\n";
        in.close();
        std::ofstream out(dir + "/english_task.txt");
        out << keep;
    }
    CHECK_THROWS_WITH_AS(load_bundle(dir), "manifest count mismatch for english_task",
                         std::runtime_error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("task lines parse back with gold answers recovered") {
    TaskExample ex = task_from_line("xa math xa:cat xa:dog ?\t2 + 3 = 5 . #### The answer is: 5");
    CHECK(ex.lang == "xa");
    CHECK(ex.kind == TaskKind::math);
    CHECK(ex.q == std::vector<std::string>({"xa:cat", "xa:dog", "?"}));
    CHECK(ex.gold == "5");

    TaskExample tr = task_from_line("ya translate ya:cat .\tcat .");
    CHECK(tr.kind == TaskKind::translate);
    CHECK(tr.gold.empty());

    CHECK_THROWS_AS(task_from_line("no tab here"), std::runtime_error);
    CHECK_THROWS_AS(task_from_line("xa bogus a b\tc"), std::runtime_error);
}

TEST_CASE("invalid corpus configs are rejected") {
    World world;
    RngStream rng(1);
    CorpusConfig bad;
    bad.eval_per_lang = -1;
    CHECK_THROWS_WITH_AS(build_corpora(world, bad, rng), "corpus quotas must be non-negative",
                         std::runtime_error);
    CorpusConfig frac;
    frac.lm_high_fraction = 1.5;
    CHECK_THROWS_WITH_AS(build_corpora(world, frac, rng), "corpus fractions must lie in [0, 1]",
                         std::runtime_error);
}
