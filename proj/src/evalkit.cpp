#include "bridgelab/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace bridgelab::evalkit {

namespace {

const std::vector<std::string> kMarker = {"####", "The", "answer", "is:"};

std::string join_tokens(const std::vector<std::string>& toks, size_t from, size_t to) {
    std::string out;
    for (size_t i = from; i < to; ++i) {
        if (!out.empty()) out += ' ';
        out += toks[i];
    }
    return out;
}

double mean_of(const std::vector<double>& xs, const char* what) {
    if (xs.empty()) throw std::runtime_error(std::string("aggregate group is empty: ") + what);
    double s = 0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write file: " + p.string());
    return f;
}

} // namespace

std::string extract_final_answer(const std::vector<std::string>& decoded, synth::TaskKind kind) {
    size_t last = std::string::npos;
    if (decoded.size() >= kMarker.size()) {
        for (size_t i = 0; i + kMarker.size() <= decoded.size(); ++i) {
            bool hit = true;
            for (size_t j = 0; j < kMarker.size(); ++j) {
                if (decoded[i + j] != kMarker[j]) {
                    hit = false;
                    break;
                }
            }
            if (hit) last = i;
        }
    }
    if (last == std::string::npos) {
        // Compare answers are bare labels, so tolerate a missing marker there.
        if (kind == synth::TaskKind::compare) return join_tokens(decoded, 0, decoded.size());
        return "";
    }
    return join_tokens(decoded, last + kMarker.size(), decoded.size());
}

MetricsRecord eval_accuracy(
    const DecodeFn& decode,
    const std::map<std::string, std::vector<synth::TaskExample>>& eval_sets,
    const std::vector<std::string>& lang_order) {
    MetricsRecord rec;
    rec.lang_order = lang_order;
    for (const auto& lang : lang_order) {
        auto it = eval_sets.find(lang);
        if (it == eval_sets.end()) throw std::runtime_error("no eval set for language: " + lang);
        if (it->second.empty()) throw std::runtime_error("empty eval set for language: " + lang);
        int correct = 0;
        for (const auto& ex : it->second) {
            std::string pred = extract_final_answer(decode(ex), ex.kind);
            if (pred == ex.gold) ++correct;
        }
        rec.counts[lang] = static_cast<int>(it->second.size());
        rec.accuracy[lang] = static_cast<double>(correct) / static_cast<double>(it->second.size());
    }
    return rec;
}

void aggregate_groups(MetricsRecord& rec, const std::set<std::string>& low_tier) {
    std::vector<double> low, high, all;
    for (const auto& lang : rec.lang_order) {
        auto it = rec.accuracy.find(lang);
        if (it == rec.accuracy.end())
            throw std::runtime_error("language missing from record: " + lang);
        all.push_back(it->second);
        if (low_tier.count(lang))
            low.push_back(it->second);
        else
            high.push_back(it->second);
    }
    rec.lrl = mean_of(low, "low-tier");
    rec.hrl = mean_of(high, "high-tier");
    rec.avg = mean_of(all, "all languages");
}

double chance_accuracy(synth::TaskKind kind) {
    switch (kind) {
        case synth::TaskKind::math: return 1.0 / 61.0; // answers span 0..60
        case synth::TaskKind::compare: return 1.0 / 3.0;
        case synth::TaskKind::translate: return 0.0;
    }
    throw std::runtime_error("unknown task kind");
}

const char* probe_name(ProbeLocation p) {
    switch (p) {
        case ProbeLocation::encoder_last: return "encoder_last";
        case ProbeLocation::mapping_output: return "mapping_output";
        case ProbeLocation::llm_embedding: return "llm_embedding";
    }
    throw std::runtime_error("unknown probe location");
}

double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::runtime_error("cosine dimension mismatch");
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> mean_pool_rows(const Tensor& m) {
    if (m.shape.size() != 2 || m.rows() < 1) throw std::runtime_error("mean pool needs a matrix");
    std::vector<double> out(static_cast<size_t>(m.cols()), 0.0);
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) out[static_cast<size_t>(c)] += m.at(r, c);
    for (auto& v : out) v /= static_cast<double>(m.rows());
    return out;
}

AlignmentReport rep_alignment(const PoolMap& pools, ProbeLocation probe) {
    auto en_it = pools.find("en");
    if (en_it == pools.end())
        throw std::runtime_error("alignment pools require an english reference");
    const auto& en = en_it->second;
    if (en.empty()) throw std::runtime_error("alignment pools are empty");
    for (const auto& [lang, pool] : pools)
        if (pool.size() != en.size())
            throw std::runtime_error("pool-size mismatch across languages: " + lang);

    AlignmentReport rep;
    rep.probe = probe;
    rep.pool_size = static_cast<int>(en.size());
    for (const auto& [lang, pool] : pools) {
        double cos_sum = 0;
        int hits = 0;
        for (size_t i = 0; i < pool.size(); ++i) {
            cos_sum += cosine_sim(pool[i], en[i]);
            // Nearest English neighbor; ties resolve to the lowest index.
            size_t best = 0;
            double best_sim = cosine_sim(pool[i], en[0]);
            for (size_t j = 1; j < en.size(); ++j) {
                double s = cosine_sim(pool[i], en[j]);
                if (s > best_sim) {
                    best_sim = s;
                    best = j;
                }
            }
            if (best == i) ++hits;
        }
        rep.cosine[lang] = cos_sum / static_cast<double>(pool.size());
        rep.recall1[lang] = static_cast<double>(hits) / static_cast<double>(pool.size());
    }
    return rep;
}

double token_f1(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
    if (hyp.empty() && ref.empty()) return 1.0;
    if (hyp.empty() || ref.empty()) return 0.0;
    std::map<std::string, int> want;
    for (const auto& t : ref) ++want[t];
    int common = 0;
    for (const auto& t : hyp) {
        auto it = want.find(t);
        if (it != want.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    double p = static_cast<double>(common) / static_cast<double>(hyp.size());
    double r = static_cast<double>(common) / static_cast<double>(ref.size());
    return 2.0 * p * r / (p + r);
}

std::map<std::string, TranslationScore> translation_eval(
    const DecodeFn& decode,
    const std::map<std::string, std::vector<synth::TaskExample>>& pairs_by_lang) {
    std::map<std::string, TranslationScore> out;
    for (const auto& [lang, pairs] : pairs_by_lang) {
        if (pairs.empty()) throw std::runtime_error("empty translation set for language: " + lang);
        TranslationScore sc;
        sc.count = static_cast<int>(pairs.size());
        for (const auto& ex : pairs) {
            auto hyp = decode(ex);
            sc.f1 += token_f1(hyp, ex.y);
            if (hyp == ex.y) sc.exact += 1.0;
        }
        sc.f1 /= sc.count;
        sc.exact /= sc.count;
        out[lang] = sc;
    }
    return out;
}

// ---------------------------------------------------------------------------
// 2D principal components via cyclic Jacobi rotation on the covariance,
// which is deterministic: no iteration-order or pivot-choice ambiguity.
// ---------------------------------------------------------------------------

namespace {

void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& vecs) {
    vecs.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) vecs[static_cast<size_t>(i) * n + i] = 1.0;
    auto A = [&](int r, int c) -> double& { return a[static_cast<size_t>(r) * n + c]; };
    auto V = [&](int r, int c) -> double& { return vecs[static_cast<size_t>(r) * n + c]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::fabs(A(p, q)) < 1e-30) continue;
                double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
}

} // namespace

Pca2d pca_project_2d(const std::vector<std::vector<double>>& vectors) {
    if (vectors.empty()) throw std::runtime_error("projection needs at least one vector");
    const int d = static_cast<int>(vectors[0].size());
    if (d < 2) throw std::runtime_error("projection requires dimension >= 2");
    for (const auto& v : vectors)
        if (static_cast<int>(v.size()) != d)
            throw std::runtime_error("projection input dimension mismatch");
    const int n = static_cast<int>(vectors.size());

    Pca2d out;
    out.mean.assign(static_cast<size_t>(d), 0.0);
    for (const auto& v : vectors)
        for (int c = 0; c < d; ++c) out.mean[static_cast<size_t>(c)] += v[static_cast<size_t>(c)];
    for (auto& m : out.mean) m /= n;

    std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
    for (const auto& v : vectors) {
        for (int r = 0; r < d; ++r) {
            double xr = v[static_cast<size_t>(r)] - out.mean[static_cast<size_t>(r)];
            for (int c = r; c < d; ++c) {
                double xc = v[static_cast<size_t>(c)] - out.mean[static_cast<size_t>(c)];
                cov[static_cast<size_t>(r) * d + c] += xr * xc / n;
            }
        }
    }
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < r; ++c)
            cov[static_cast<size_t>(r) * d + c] = cov[static_cast<size_t>(c) * d + r];

    std::vector<double> vecs;
    jacobi_eigen(cov, d, vecs);

    std::vector<int> order(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) order[static_cast<size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        return cov[static_cast<size_t>(x) * d + x] > cov[static_cast<size_t>(y) * d + y];
    });

    for (int k = 0; k < 2; ++k) {
        int col = order[static_cast<size_t>(k)];
        out.variance[static_cast<size_t>(k)] = cov[static_cast<size_t>(col) * d + col];
        std::vector<double> axis(static_cast<size_t>(d));
        for (int r = 0; r < d; ++r) axis[static_cast<size_t>(r)] = vecs[static_cast<size_t>(r) * d + col];
        // Sign convention: the largest-magnitude component points positive.
        int arg = 0;
        for (int r = 1; r < d; ++r)
            if (std::fabs(axis[static_cast<size_t>(r)]) > std::fabs(axis[static_cast<size_t>(arg)]))
                arg = r;
        if (axis[static_cast<size_t>(arg)] < 0)
            for (auto& x : axis) x = -x;
        out.axes[static_cast<size_t>(k)] = std::move(axis);
    }

    out.coords.reserve(vectors.size());
    for (const auto& v : vectors) {
        std::array<double, 2> xy{0.0, 0.0};
        for (int k = 0; k < 2; ++k)
            for (int c = 0; c < d; ++c)
                xy[static_cast<size_t>(k)] += (v[static_cast<size_t>(c)] - out.mean[static_cast<size_t>(c)]) *
                                              out.axes[static_cast<size_t>(k)][static_cast<size_t>(c)];
        out.coords.push_back(xy);
    }
    return out;
}

void export_report(const std::vector<MetricsRecord>& records,
                   const std::vector<AlignmentReport>& alignments, const PoolMap& pools,
                   const std::string& out_dir) {
    if (records.empty()) throw std::runtime_error("nothing to export");
    const auto& order = records[0].lang_order;
    for (const auto& rec : records)
        if (rec.lang_order != order)
            throw std::runtime_error("records disagree on language order");
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);

    {
        auto f = open_out(dir / "table.csv");
        f << "variant,seed";
        for (const auto& lang : order) f << ',' << lang;
        f << ",lrl,hrl,avg\n";
        for (const auto& rec : records) {
            f << rec.variant << ',' << rec.seed;
            for (const auto& lang : order) f << ',' << fmt_double(rec.accuracy.at(lang));
            f << ',' << fmt_double(rec.lrl) << ',' << fmt_double(rec.hrl) << ','
              << fmt_double(rec.avg) << '\n';
        }
    }
    {
        nlohmann::ordered_json root;
        root["version"] = 1;
        root["records"] = nlohmann::ordered_json::array();
        for (const auto& rec : records) {
            nlohmann::ordered_json jr;
            jr["variant"] = rec.variant;
            jr["seed"] = rec.seed;
            nlohmann::ordered_json acc, cnt;
            for (const auto& lang : rec.lang_order) {
                acc[lang] = rec.accuracy.at(lang);
                cnt[lang] = rec.counts.at(lang);
            }
            jr["accuracy"] = acc;
            jr["counts"] = cnt;
            jr["lrl"] = rec.lrl;
            jr["hrl"] = rec.hrl;
            jr["avg"] = rec.avg;
            root["records"].push_back(jr);
        }
        auto f = open_out(dir / "metrics.json");
        f << root.dump(2) << '\n';
    }
    {
        auto f = open_out(dir / "alignment.csv");
        f << "probe,language,cosine,recall_at_1,pool_size\n";
        for (const auto& rep : alignments)
            for (const auto& [lang, cos] : rep.cosine)
                f << probe_name(rep.probe) << ',' << lang << ',' << fmt_double(cos) << ','
                  << fmt_double(rep.recall1.at(lang)) << ',' << rep.pool_size << '\n';
    }
    if (!pools.empty()) {
        std::vector<std::vector<double>> all;
        std::vector<std::pair<std::string, size_t>> tags;
        for (const auto& [lang, pool] : pools)
            for (size_t i = 0; i < pool.size(); ++i) {
                all.push_back(pool[i]);
                tags.emplace_back(lang, i);
            }
        Pca2d proj = pca_project_2d(all);
        auto f = open_out(dir / "projection.csv");
        f << "language,index,x,y\n";
        for (size_t i = 0; i < tags.size(); ++i)
            f << tags[i].first << ',' << tags[i].second << ',' << fmt_double(proj.coords[i][0])
              << ',' << fmt_double(proj.coords[i][1]) << '\n';
    }
}

std::vector<MetricsRecord> load_metrics_json(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read metrics file: " + path);
    nlohmann::ordered_json root = nlohmann::ordered_json::parse(f);
    if (!root.contains("version") || root["version"].get<int>() != 1)
        throw std::runtime_error("unsupported metrics version");
    std::vector<MetricsRecord> out;
    for (const auto& jr : root.at("records")) {
        MetricsRecord rec;
        rec.variant = jr.at("variant").get<std::string>();
        rec.seed = jr.at("seed").get<uint64_t>();
        for (const auto& [lang, v] : jr.at("accuracy").items()) {
            rec.lang_order.push_back(lang);
            rec.accuracy[lang] = v.get<double>();
        }
        for (const auto& [lang, v] : jr.at("counts").items()) rec.counts[lang] = v.get<int>();
        rec.lrl = jr.at("lrl").get<double>();
        rec.hrl = jr.at("hrl").get<double>();
        rec.avg = jr.at("avg").get<double>();
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace bridgelab::evalkit
