#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "bridgelab/evalkit.hpp"
#include "bridgelab/rng.hpp"

using namespace bridgelab;
using namespace bridgelab::evalkit;
using bridgelab::synth::TaskExample;
using bridgelab::synth::TaskKind;

namespace {

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string t;
    while (in >> t) out.push_back(t);
    return out;
}

TaskExample make_task(const std::string& lang, TaskKind kind, const std::string& q,
                      const std::string& y, const std::string& gold) {
    TaskExample ex;
    ex.lang = lang;
    ex.kind = kind;
    ex.q = split_ws(q);
    ex.y = split_ws(y);
    ex.gold = gold;
    return ex;
}

std::vector<std::vector<double>> random_pool(RngStream& rng, int n, int d) {
    std::vector<std::vector<double>> pool(n, std::vector<double>(d));
    for (auto& v : pool)
        for (auto& x : v) x = rng.normal();
    return pool;
}

// Gram-Schmidt on a random square matrix gives a deterministic orthogonal map.
std::vector<std::vector<double>> random_rotation(RngStream& rng, int d) {
    std::vector<std::vector<double>> q(d, std::vector<double>(d));
    for (auto& row : q)
        for (auto& x : row) x = rng.normal();
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < i; ++j) {
            double dot = 0;
            for (int k = 0; k < d; ++k) dot += q[i][k] * q[j][k];
            for (int k = 0; k < d; ++k) q[i][k] -= dot * q[j][k];
        }
        double norm = 0;
        for (int k = 0; k < d; ++k) norm += q[i][k] * q[i][k];
        norm = std::sqrt(norm);
        REQUIRE(norm > 1e-8);
        for (int k = 0; k < d; ++k) q[i][k] /= norm;
    }
    return q;
}

std::vector<double> rotate(const std::vector<std::vector<double>>& r,
                           const std::vector<double>& v) {
    std::vector<double> out(v.size(), 0.0);
    for (size_t i = 0; i < v.size(); ++i)
        for (size_t k = 0; k < v.size(); ++k) out[i] += r[i][k] * v[k];
    return out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("the final answer is whatever follows the last marker") {
    auto toks = split_ws("3 + 4 = 7 . #### The answer is: 7");
    CHECK(extract_final_answer(toks, TaskKind::math) == "7");

    // A decoy marker earlier in the stream must lose to the last one.
    auto decoy = split_ws("#### The answer is: 3 . #### The answer is: 12");
    CHECK(extract_final_answer(decoy, TaskKind::math) == "12");

    // Multi-token tails are preserved verbatim, so sloppy decodes cannot
    // accidentally equal a clean gold answer.
    auto messy = split_ws("#### The answer is: 7 .");
    CHECK(extract_final_answer(messy, TaskKind::math) == "7 .");

    // Marker-free math output can never be correct.
    CHECK(extract_final_answer(split_ws("3 + 4 = 7"), TaskKind::math) == "");
    CHECK(extract_final_answer({}, TaskKind::math) == "");

    // Compare falls back to the raw string when the marker is missing.
    CHECK(extract_final_answer(split_ws("yes"), TaskKind::compare) == "yes");
    CHECK(extract_final_answer(split_ws("#### The answer is: no"), TaskKind::compare) == "no");

    // A partial marker is not a marker.
    CHECK(extract_final_answer(split_ws("#### The answer 9"), TaskKind::math) == "");
}

TEST_CASE("accuracy counts exact extracted-answer matches per language") {
    std::map<std::string, std::vector<TaskExample>> sets;
    sets["en"] = {
        make_task("en", TaskKind::math, "q one", "#### The answer is: 4", "4"),
        make_task("en", TaskKind::math, "q two", "#### The answer is: 9", "9"),
        make_task("en", TaskKind::compare, "q three", "#### The answer is: yes", "yes"),
        make_task("en", TaskKind::math, "q four", "#### The answer is: 11", "11"),
    };
    sets["xa"] = {
        make_task("xa", TaskKind::math, "q five", "#### The answer is: 2", "2"),
        make_task("xa", TaskKind::math, "q six", "#### The answer is: 8", "8"),
    };

    // Stub decoder: perfect on English, wrong on one xa example, and it emits
    // a decoy marker that extraction must see through.
    auto decode = [](const TaskExample& ex) -> std::vector<std::string> {
        if (ex.lang == "en") return ex.y;
        if (ex.gold == "2") return split_ws("#### The answer is: 2");
        return split_ws("#### The answer is: 2 . #### The answer is: 59");
    };

    auto rec = eval_accuracy(decode, sets, {"en", "xa"});
    CHECK(rec.lang_order == std::vector<std::string>{"en", "xa"});
    CHECK(rec.counts.at("en") == 4);
    CHECK(rec.counts.at("xa") == 2);
    CHECK(rec.accuracy.at("en") == doctest::Approx(1.0));
    CHECK(rec.accuracy.at("xa") == doctest::Approx(0.5));

    CHECK_THROWS_WITH(eval_accuracy(decode, sets, {"en", "zz"}),
                      "no eval set for language: zz");
}

TEST_CASE("group aggregates are plain means over the tier members") {
    MetricsRecord rec;
    rec.lang_order = {"en", "ga", "ha", "xa", "ya", "za"};
    rec.accuracy = {{"en", 71.0}, {"ga", 64.0}, {"ha", 62.0},
                    {"xa", 50.4}, {"ya", 52.8}, {"za", 57.2}};
    aggregate_groups(rec, {"xa", "ya", "za"});

    // Frozen cross-check: (50.4 + 52.8 + 57.2) / 3 rounds to 53.5 at one
    // decimal, and matches the hand-computed mean to double precision.
    CHECK(rec.lrl == doctest::Approx((50.4 + 52.8 + 57.2) / 3.0).epsilon(1e-12));
    CHECK(std::round(rec.lrl * 10.0) / 10.0 == doctest::Approx(53.5));
    CHECK(rec.hrl == doctest::Approx((71.0 + 64.0 + 62.0) / 3.0).epsilon(1e-12));
    CHECK(rec.avg ==
          doctest::Approx((71.0 + 64.0 + 62.0 + 50.4 + 52.8 + 57.2) / 6.0).epsilon(1e-12));

    MetricsRecord missing;
    missing.lang_order = {"en", "xa"};
    missing.accuracy = {{"en", 1.0}};
    CHECK_THROWS_WITH(aggregate_groups(missing, {"xa"}), "language missing from record: xa");

    MetricsRecord nolow;
    nolow.lang_order = {"en"};
    nolow.accuracy = {{"en", 1.0}};
    CHECK_THROWS_WITH(aggregate_groups(nolow, {"xa"}), "aggregate group is empty: low-tier");
}

TEST_CASE("chance accuracy follows the answer spaces") {
    CHECK(chance_accuracy(TaskKind::math) == doctest::Approx(1.0 / 61.0).epsilon(1e-12));
    CHECK(chance_accuracy(TaskKind::compare) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(chance_accuracy(TaskKind::translate) == 0.0);
}

TEST_CASE("a pool compared against itself aligns perfectly") {
    RngStream rng(41);
    PoolMap pools;
    pools["en"] = random_pool(rng, 24, 12);
    auto rep = rep_alignment(pools, ProbeLocation::encoder_last);
    CHECK(rep.pool_size == 24);
    CHECK(rep.cosine.at("en") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.recall1.at("en") == doctest::Approx(1.0));
}

TEST_CASE("alignment agrees with an exhaustive nearest-neighbor oracle") {
    RngStream rng(42);
    PoolMap pools;
    pools["en"] = random_pool(rng, 40, 16);
    pools["xa"] = random_pool(rng, 40, 16);
    // Plant a few genuinely close pairs so recall is not all-or-nothing.
    for (int i = 0; i < 10; ++i) {
        pools["xa"][static_cast<size_t>(i)] = pools["en"][static_cast<size_t>(i)];
        pools["xa"][static_cast<size_t>(i)][0] += 0.01;
    }
    auto rep = rep_alignment(pools, ProbeLocation::mapping_output);

    double cos_sum = 0;
    int hits = 0;
    const auto& en = pools["en"];
    const auto& xa = pools["xa"];
    for (size_t i = 0; i < xa.size(); ++i) {
        cos_sum += cosine_sim(xa[i], en[i]);
        size_t best = 0;
        double best_sim = cosine_sim(xa[i], en[0]);
        for (size_t j = 1; j < en.size(); ++j) {
            double s = cosine_sim(xa[i], en[j]);
            if (s > best_sim) {
                best_sim = s;
                best = j;
            }
        }
        if (best == i) ++hits;
    }
    CHECK(rep.cosine.at("xa") == doctest::Approx(cos_sum / 40.0).epsilon(1e-12));
    CHECK(rep.recall1.at("xa") == doctest::Approx(hits / 40.0).epsilon(1e-12));
    CHECK(rep.recall1.at("xa") >= 10.0 / 40.0);
}

TEST_CASE("unrelated random pools retrieve at chance level") {
    RngStream rng(43);
    double total = 0;
    const int trials = 10, n = 200;
    for (int t = 0; t < trials; ++t) {
        PoolMap pools;
        pools["en"] = random_pool(rng, n, 32);
        pools["xa"] = random_pool(rng, n, 32);
        total += rep_alignment(pools, ProbeLocation::encoder_last).recall1.at("xa");
    }
    double mean = total / trials;
    // Chance is 1/200; two percentage points of slack over 2000 draws.
    CHECK(mean <= 1.0 / n + 0.02);
}

TEST_CASE("alignment metrics survive a common orthogonal rotation") {
    RngStream rng(44);
    PoolMap pools;
    pools["en"] = random_pool(rng, 30, 10);
    pools["xa"] = random_pool(rng, 30, 10);
    auto base = rep_alignment(pools, ProbeLocation::encoder_last);

    auto rot = random_rotation(rng, 10);
    PoolMap turned;
    for (const auto& [lang, pool] : pools)
        for (const auto& v : pool) turned[lang].push_back(rotate(rot, v));
    auto spun = rep_alignment(turned, ProbeLocation::encoder_last);

    CHECK(spun.cosine.at("xa") == doctest::Approx(base.cosine.at("xa")).epsilon(1e-5));
    CHECK(spun.recall1.at("xa") == doctest::Approx(base.recall1.at("xa")));
    CHECK(spun.cosine.at("en") == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("malformed pools are rejected") {
    RngStream rng(45);
    PoolMap no_en;
    no_en["xa"] = random_pool(rng, 5, 4);
    CHECK_THROWS_WITH(rep_alignment(no_en, ProbeLocation::encoder_last),
                      "alignment pools require an english reference");

    PoolMap ragged;
    ragged["en"] = random_pool(rng, 5, 4);
    ragged["xa"] = random_pool(rng, 4, 4);
    CHECK_THROWS_WITH(rep_alignment(ragged, ProbeLocation::encoder_last),
                      "pool-size mismatch across languages: xa");

    CHECK_THROWS_WITH(cosine_sim({1.0, 2.0}, {1.0}), "cosine dimension mismatch");
    CHECK(cosine_sim({0.0, 0.0}, {1.0, 2.0}) == 0.0);
}

TEST_CASE("token overlap scores use multiset counts") {
    CHECK(token_f1(split_ws("a b c"), split_ws("a b d")) == doctest::Approx(2.0 / 3.0));
    CHECK(token_f1(split_ws("a b c"), split_ws("a b c")) == doctest::Approx(1.0));
    CHECK(token_f1(split_ws("x y"), split_ws("a b")) == 0.0);
    // Duplicates only match as many times as both sides provide.
    CHECK(token_f1(split_ws("a a b"), split_ws("a b b")) == doctest::Approx(2.0 / 3.0));
    CHECK(token_f1({}, split_ws("a")) == 0.0);
    CHECK(token_f1({}, {}) == doctest::Approx(1.0));

    std::map<std::string, std::vector<TaskExample>> pairs;
    pairs["xa"] = {
        make_task("xa", TaskKind::translate, "xa:big xa:cat", "the big cat", "the big cat"),
        make_task("xa", TaskKind::translate, "xa:small xa:dog", "the small dog", "the small dog"),
    };
    auto decode = [](const TaskExample& ex) -> std::vector<std::string> {
        if (ex.gold == "the big cat") return split_ws("the big cat");
        return split_ws("the small cow");
    };
    auto scores = translation_eval(decode, pairs);
    CHECK(scores.at("xa").count == 2);
    CHECK(scores.at("xa").exact == doctest::Approx(0.5));
    CHECK(scores.at("xa").f1 == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
}

TEST_CASE("rank-2 data is reconstructed exactly from two components") {
    RngStream rng(46);
    const int d = 8, n = 40;
    std::vector<double> u(d), w(d), mu(d);
    for (auto& x : u) x = rng.normal();
    for (auto& x : w) x = rng.normal();
    for (auto& x : mu) x = rng.normal();
    // Orthonormalize the two generating directions.
    double nu = 0;
    for (double x : u) nu += x * x;
    for (auto& x : u) x /= std::sqrt(nu);
    double dot = 0;
    for (int k = 0; k < d; ++k) dot += w[static_cast<size_t>(k)] * u[static_cast<size_t>(k)];
    for (int k = 0; k < d; ++k) w[static_cast<size_t>(k)] -= dot * u[static_cast<size_t>(k)];
    double nw = 0;
    for (double x : w) nw += x * x;
    for (auto& x : w) x /= std::sqrt(nw);

    std::vector<std::vector<double>> data;
    for (int i = 0; i < n; ++i) {
        double a = rng.normal(0.0, 3.0), b = rng.normal(0.0, 1.5);
        std::vector<double> v(d);
        for (int k = 0; k < d; ++k)
            v[static_cast<size_t>(k)] =
                mu[static_cast<size_t>(k)] + a * u[static_cast<size_t>(k)] + b * w[static_cast<size_t>(k)];
        data.push_back(std::move(v));
    }

    auto proj = pca_project_2d(data);
    CHECK(proj.variance[0] >= proj.variance[1]);

    // The two axes must be orthonormal.
    double a00 = 0, a11 = 0, a01 = 0;
    for (int k = 0; k < d; ++k) {
        a00 += proj.axes[0][static_cast<size_t>(k)] * proj.axes[0][static_cast<size_t>(k)];
        a11 += proj.axes[1][static_cast<size_t>(k)] * proj.axes[1][static_cast<size_t>(k)];
        a01 += proj.axes[0][static_cast<size_t>(k)] * proj.axes[1][static_cast<size_t>(k)];
    }
    CHECK(a00 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(a11 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::fabs(a01) < 1e-9);

    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) {
            double rebuilt = proj.mean[static_cast<size_t>(k)] +
                             proj.coords[static_cast<size_t>(i)][0] * proj.axes[0][static_cast<size_t>(k)] +
                             proj.coords[static_cast<size_t>(i)][1] * proj.axes[1][static_cast<size_t>(k)];
            CHECK(std::fabs(rebuilt - data[static_cast<size_t>(i)][static_cast<size_t>(k)]) < 1e-6);
        }
    }

    CHECK_THROWS_WITH(pca_project_2d({}), "projection needs at least one vector");
    CHECK_THROWS_WITH(pca_project_2d({{1.0}}), "projection requires dimension >= 2");
    CHECK_THROWS_WITH(pca_project_2d({{1.0, 2.0}, {1.0}}), "projection input dimension mismatch");
}

TEST_CASE("reports round-trip and re-export byte-identically") {
    MetricsRecord a;
    a.variant = "full";
    a.seed = 1;
    a.lang_order = {"en", "ga", "xa"};
    a.accuracy = {{"en", 0.71875}, {"ga", 0.59375}, {"xa", 1.0 / 3.0}};
    a.counts = {{"en", 32}, {"ga", 32}, {"xa", 32}};
    aggregate_groups(a, {"xa"});
    MetricsRecord b = a;
    b.variant = "monoreason";
    b.seed = 2;
    b.accuracy["xa"] = 0.0625;
    aggregate_groups(b, {"xa"});

    RngStream rng(47);
    PoolMap pools;
    pools["en"] = random_pool(rng, 6, 5);
    pools["xa"] = random_pool(rng, 6, 5);
    auto align = rep_alignment(pools, ProbeLocation::mapping_output);

    auto dir1 = std::filesystem::temp_directory_path() / "bl_evalkit_report1";
    auto dir2 = std::filesystem::temp_directory_path() / "bl_evalkit_report2";
    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir2);
    export_report({a, b}, {align}, pools, dir1.string());
    export_report({a, b}, {align}, pools, dir2.string());

    for (const char* name : {"table.csv", "metrics.json", "alignment.csv", "projection.csv"}) {
        CAPTURE(name);
        std::string one = slurp(dir1 / name);
        CHECK(one == slurp(dir2 / name));
        CHECK(!one.empty());
    }

    // The structured file reproduces every field bit-for-bit.
    auto back = load_metrics_json((dir1 / "metrics.json").string());
    REQUIRE(back.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        const auto& orig = (i == 0) ? a : b;
        CHECK(back[i].variant == orig.variant);
        CHECK(back[i].seed == orig.seed);
        CHECK(back[i].lang_order == orig.lang_order);
        for (const auto& lang : orig.lang_order) {
            CHECK(back[i].accuracy.at(lang) == orig.accuracy.at(lang));
            CHECK(back[i].counts.at(lang) == orig.counts.at(lang));
        }
        CHECK(back[i].lrl == orig.lrl);
        CHECK(back[i].hrl == orig.hrl);
        CHECK(back[i].avg == orig.avg);
    }

    // The delimited table re-parses to the same doubles.
    std::ifstream table(dir1 / "table.csv");
    std::string header, row;
    std::getline(table, header);
    CHECK(header == "variant,seed,en,ga,xa,lrl,hrl,avg");
    std::getline(table, row);
    std::vector<std::string> cells;
    std::istringstream rs(row);
    std::string cell;
    while (std::getline(rs, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 8);
    CHECK(cells[0] == "full");
    CHECK(std::stod(cells[2]) == a.accuracy.at("en"));
    CHECK(std::stod(cells[4]) == a.accuracy.at("xa"));
    CHECK(std::stod(cells[5]) == a.lrl);

    MetricsRecord odd = a;
    odd.lang_order = {"xa", "ga", "en"};
    CHECK_THROWS_WITH(export_report({a, odd}, {}, {}, dir1.string()),
                      "records disagree on language order");

    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("row pooling averages each column") {
    Tensor m = Tensor::zeros(2, 3);
    m.at(0, 0) = 1.0f;
    m.at(0, 1) = 2.0f;
    m.at(0, 2) = 3.0f;
    m.at(1, 0) = 3.0f;
    m.at(1, 1) = 6.0f;
    m.at(1, 2) = 9.0f;
    auto v = mean_pool_rows(m);
    REQUIRE(v.size() == 3);
    CHECK(v[0] == doctest::Approx(2.0));
    CHECK(v[1] == doctest::Approx(4.0));
    CHECK(v[2] == doctest::Approx(6.0));
}
