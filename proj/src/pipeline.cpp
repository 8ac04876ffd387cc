#include "bridgelab/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "bridgelab/checkpoint.hpp"
#include "bridgelab/optim.hpp"

namespace bridgelab::pipeline {

namespace {

HiddenSeq hidden_from_tensor(Graph& g, const Tensor& t, Space space, Role role) {
    HiddenSeq h;
    h.len = t.rows();
    h.dim = t.cols();
    h.space = space;
    h.role = role;
    h.value = g.input(t);
    return h;
}

void require_frozen(const ParamStore& ps, const char* stage) {
    for (const auto& [name, p] : ps)
        if (p.trainable)
            throw std::runtime_error(std::string(stage) + " requires frozen encoder and lm");
}

// Pools the per-language task map in deterministic map order.
std::vector<const synth::TaskExample*> pool_tasks(
    const std::map<std::string, std::vector<synth::TaskExample>>& tasks) {
    std::vector<const synth::TaskExample*> flat;
    for (const auto& [lang, list] : tasks)
        for (const auto& ex : list) flat.push_back(&ex);
    return flat;
}

} // namespace

// ---------------------------------------------------------------------------
// Generic loop.
// ---------------------------------------------------------------------------

StageResult train_loop(const TrainConfig& cfg, int n_examples, const LossBuilder& build_loss,
                       const std::vector<ParamStore*>& stores) {
    if (cfg.batch_size <= 0) throw std::runtime_error("batch size must be positive");
    if (cfg.epochs < 0) throw std::runtime_error("epochs must be non-negative");
    if (cfg.lr <= 0) throw std::runtime_error("learning rate must be positive");
    if (stores.empty()) throw std::runtime_error("training needs at least one store");

    StageResult res;
    res.stage = cfg.label;
    res.examples = n_examples;
    if (n_examples == 0 || cfg.epochs == 0) return res;

    RngStream shuffle_rng = RngStream(cfg.seed).child("shuffle:" + cfg.label);
    std::vector<AdamState> states(stores.size());
    AdamConfig adam;
    adam.lr = cfg.lr;

    std::vector<int> order(static_cast<size_t>(n_examples));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (int start = 0; start < n_examples; start += cfg.batch_size) {
            int bs = std::min(cfg.batch_size, n_examples - start);
            GradMap total;
            double loss_sum = 0;
            for (int i = start; i < start + bs; ++i) {
                Graph g;
                ValueId loss = build_loss(g, order[static_cast<size_t>(i)]);
                loss_sum += g.scalar(loss);
                GradMap grads = g.backward(loss);
                for (auto& [name, t] : grads) {
                    auto it = total.find(name);
                    if (it == total.end()) {
                        total.emplace(name, std::move(t));
                    } else {
                        if (!it->second.same_shape(t))
                            throw std::runtime_error("gradient shape drift for " + name);
                        for (size_t k = 0; k < t.data.size(); ++k) it->second.data[k] += t.data[k];
                    }
                }
            }
            const float inv = 1.0f / static_cast<float>(bs);
            for (auto& [name, t] : total)
                for (auto& x : t.data) x *= inv;

            // Route every gradient to exactly one store; an orphan gradient
            // means some supposedly frozen parameter reached the tape.
            for (size_t s = 0; s < stores.size(); ++s) {
                GradMap part;
                for (auto& [name, t] : total)
                    if (stores[s]->has(name)) part.emplace(name, t);
                if (!part.empty()) adam_step(*stores[s], part, states[s], adam);
            }
            for (const auto& [name, t] : total) {
                int owners = 0;
                for (const auto* st : stores) owners += st->has(name) ? 1 : 0;
                if (owners != 1)
                    throw std::runtime_error("gradient outside the training stores: " + name);
            }
            res.step_losses.push_back(loss_sum / bs);
        }
    }

    res.steps = static_cast<int>(res.step_losses.size());
    res.initial_loss = res.step_losses.front();
    res.final_loss = res.step_losses.back();
    std::set<std::string> touched;
    for (const auto& st : states) touched.insert(st.touched().begin(), st.touched().end());
    res.touched.assign(touched.begin(), touched.end());
    return res;
}

// ---------------------------------------------------------------------------
// Token plumbing.
// ---------------------------------------------------------------------------

namespace {

// Random positional offsets for mono LM training rows. Merged composition
// shifts the native segment off position zero, so the frozen reader must not
// bind behaviour to absolute positions; jittered pretraining buys that.
// Offsets are fixed per row up front so loss builders stay pure.
std::vector<int> position_jitter(const std::vector<int>& row_lens, int max_positions,
                                 uint64_t seed) {
    RngStream rng = RngStream(seed).child("pos-jitter");
    std::vector<int> offsets(row_lens.size(), 0);
    for (size_t i = 0; i < row_lens.size(); ++i) {
        const int cap = std::min(48, max_positions - row_lens[i]);
        if (cap > 0) offsets[i] = rng.uniform_int(cap + 1);
    }
    return offsets;
}

} // namespace

std::vector<int> encoder_ids(const synth::World& world, const std::vector<std::string>& toks) {
    return world.encoder_vocab().ids_strict(toks);
}

std::vector<int> llm_ids_lossy(const synth::World& world, const std::vector<std::string>& toks) {
    return world.llm_vocab().ids_or_unk(toks);
}

std::vector<int> llm_target_ids(const synth::World& world, const std::vector<std::string>& toks) {
    auto ids = world.llm_vocab().ids_strict(toks);
    ids.push_back(world.llm_vocab().eos);
    return ids;
}

// ---------------------------------------------------------------------------
// Base models.
// ---------------------------------------------------------------------------

EncoderModel init_encoder(const ModelConfig& mc, const synth::World& world, uint64_t seed) {
    TransformerConfig cfg;
    cfg.vocab = world.encoder_vocab().size();
    cfg.dim = mc.enc_dim;
    cfg.layers = mc.enc_layers;
    cfg.heads = mc.enc_heads;
    cfg.max_positions = mc.max_positions;
    RngStream rng = RngStream(seed).child("encoder-init");
    return make_encoder(cfg, world.encoder_vocab().pad, rng);
}

Seq2SeqDecoderModel init_seq2seq_decoder(const ModelConfig& mc, const synth::World& world,
                                         uint64_t seed) {
    TransformerConfig cfg;
    cfg.vocab = world.encoder_vocab().size();
    cfg.dim = mc.enc_dim;
    cfg.layers = mc.enc_layers;
    cfg.heads = mc.enc_heads;
    cfg.max_positions = mc.max_positions;
    RngStream rng = RngStream(seed).child("decoder-init");
    return make_seq2seq_decoder(cfg, rng);
}

LMModel init_lm(const ModelConfig& mc, const synth::World& world, uint64_t seed) {
    TransformerConfig cfg;
    cfg.vocab = world.llm_vocab().size();
    cfg.dim = mc.llm_dim;
    cfg.layers = mc.llm_layers;
    cfg.heads = mc.llm_heads;
    cfg.max_positions = mc.max_positions;
    RngStream rng = RngStream(seed).child("lm-init");
    return make_lm(cfg, rng);
}

StageResult pretrain_lm(LMModel& lm, const synth::World& world,
                        const std::vector<synth::TextLine>& lines, const TrainConfig& cfg) {
    if (lines.empty()) throw std::runtime_error("pretraining corpus is empty");
    std::vector<std::vector<int>> ys;
    ys.reserve(lines.size());
    for (const auto& line : lines) ys.push_back(llm_target_ids(world, line.tokens));
    std::vector<int> lens;
    lens.reserve(ys.size());
    for (const auto& y : ys) lens.push_back(static_cast<int>(y.size()));
    const auto offsets = position_jitter(lens, lm.cfg.max_positions, cfg.seed);
    auto build = [&](Graph& g, int i) {
        auto prefix = compose_native(g, lm, {});
        return lm_loss(g, lm, prefix, ys[static_cast<size_t>(i)],
                       offsets[static_cast<size_t>(i)]);
    };
    lm.params.set_trainable(true);
    auto res = train_loop(cfg, static_cast<int>(lines.size()), build, {&lm.params});
    lm.params.set_trainable(false); // downstream consumers merge against a frozen reader
    return res;
}

StageResult finetune_english_task(LMModel& lm, const synth::World& world,
                                  const std::vector<synth::TaskExample>& tasks,
                                  const TrainConfig& cfg) {
    std::vector<std::vector<int>> qs, ys;
    qs.reserve(tasks.size());
    ys.reserve(tasks.size());
    for (const auto& ex : tasks) {
        qs.push_back(llm_ids_lossy(world, ex.q));
        ys.push_back(llm_target_ids(world, ex.y));
    }
    std::vector<int> lens;
    lens.reserve(tasks.size());
    for (size_t i = 0; i < tasks.size(); ++i)
        lens.push_back(static_cast<int>(qs[i].size() + ys[i].size()));
    const auto offsets = position_jitter(lens, lm.cfg.max_positions, cfg.seed);
    auto build = [&](Graph& g, int i) {
        auto prefix = compose_native(g, lm, qs[static_cast<size_t>(i)]);
        return lm_loss(g, lm, prefix, ys[static_cast<size_t>(i)],
                       offsets[static_cast<size_t>(i)]);
    };
    lm.params.set_trainable(true);
    auto res = train_loop(cfg, static_cast<int>(tasks.size()), build, {&lm.params});
    lm.params.set_trainable(false);
    return res;
}

StageResult pretrain_encoder(EncoderModel& enc, Seq2SeqDecoderModel& dec,
                             const synth::World& world,
                             const std::vector<synth::TaskExample>& pairs,
                             const TrainConfig& cfg) {
    std::vector<std::vector<int>> srcs, tgts;
    srcs.reserve(pairs.size());
    tgts.reserve(pairs.size());
    for (const auto& ex : pairs) {
        srcs.push_back(encoder_ids(world, ex.q));
        auto y = world.encoder_vocab().ids_strict(ex.y);
        y.push_back(world.encoder_vocab().eos);
        tgts.push_back(std::move(y));
    }
    auto build = [&](Graph& g, int i) {
        HiddenSeq src = encode(g, enc, srcs[static_cast<size_t>(i)]);
        return seq2seq_loss(g, dec, src, tgts[static_cast<size_t>(i)]);
    };
    enc.params.set_trainable(true);
    dec.params.set_trainable(true);
    auto res = train_loop(cfg, static_cast<int>(pairs.size()), build, {&enc.params, &dec.params});
    enc.params.set_trainable(false);
    dec.params.set_trainable(false);
    return res;
}

double lm_mean_nll(const LMModel& lm, const synth::World& world,
                   const std::vector<synth::TextLine>& lines) {
    if (lines.empty()) throw std::runtime_error("mean nll of an empty set");
    double total = 0;
    int64_t tokens = 0;
    for (const auto& line : lines) {
        auto ids = llm_ids_lossy(world, line.tokens);
        ids.push_back(world.llm_vocab().eos);
        Graph g;
        auto prefix = compose_native(g, lm, {});
        double nll = g.scalar(lm_loss(g, lm, prefix, ids));
        total += nll * static_cast<double>(ids.size());
        tokens += static_cast<int64_t>(ids.size());
    }
    return total / static_cast<double>(tokens);
}

// ---------------------------------------------------------------------------
// Merge stages.
// ---------------------------------------------------------------------------

namespace {

// Shared guts of the two merge stages: cached frozen-encoder outputs feed the
// bridge, the loss reads out through the frozen reader, and the frozen stores
// are hash-checked around the whole loop.
StageResult run_bridge_stage(BridgeModel& bridge, const EncoderModel& enc, const LMModel& lm,
                             const std::vector<Tensor>& enc_out,
                             const std::vector<std::vector<int>>& t_ids,
                             const std::vector<std::vector<int>>& y_ids, ComposeMode mode,
                             const TrainConfig& cfg, const char* stage) {
    require_frozen(enc.params, stage);
    require_frozen(lm.params, stage);
    const uint64_t h_enc = params_hash(enc.params);
    const uint64_t h_lm = params_hash(lm.params);

    auto build = [&](Graph& g, int i) {
        auto idx = static_cast<size_t>(i);
        HiddenSeq x = hidden_from_tensor(g, enc_out[idx], Space::encoder, Role::source_states);
        HiddenSeq mapped = map_states(g, bridge, x);
        ComposedSequence prefix;
        if (mode == ComposeMode::augmented) {
            HiddenSeq native = embed(g, lm, t_ids[idx]);
            prefix = compose_augmented(g, lm, bridge, mapped, native);
        } else {
            prefix = compose_replacement(g, lm, bridge, mapped);
        }
        return lm_loss(g, lm, prefix, y_ids[idx]);
    };
    StageResult res = train_loop(cfg, static_cast<int>(enc_out.size()), build, {&bridge.params});

    if (params_hash(enc.params) != h_enc || params_hash(lm.params) != h_lm)
        throw std::runtime_error(std::string("frozen weights changed during ") + stage);
    return res;
}

} // namespace

StageResult train_mapping_stage(BridgeModel& bridge, const EncoderModel& enc, const LMModel& lm,
                                const synth::World& world,
                                const std::vector<synth::TaskExample>& pairs,
                                const TrainConfig& cfg) {
    std::vector<Tensor> enc_out;
    std::vector<std::vector<int>> y_ids;
    enc_out.reserve(pairs.size());
    y_ids.reserve(pairs.size());
    for (const auto& ex : pairs) {
        enc_out.push_back(encode_to_tensor(enc, encoder_ids(world, ex.q)));
        y_ids.push_back(llm_target_ids(world, ex.y));
    }
    return run_bridge_stage(bridge, enc, lm, enc_out, {}, y_ids, ComposeMode::replacement, cfg,
                            "mapping stage");
}

StageResult train_augmentation_stage(
    BridgeModel& bridge, const EncoderModel& enc, const LMModel& lm, const synth::World& world,
    const std::map<std::string, std::vector<synth::TaskExample>>& tasks, const TrainConfig& cfg,
    ComposeMode mode) {
    auto flat = pool_tasks(tasks);
    if (flat.empty()) {
        StageResult res;
        res.stage = cfg.label;
        return res;
    }
    std::vector<Tensor> enc_out;
    std::vector<std::vector<int>> t_ids, y_ids;
    enc_out.reserve(flat.size());
    t_ids.reserve(flat.size());
    y_ids.reserve(flat.size());
    for (const auto* ex : flat) {
        enc_out.push_back(encode_to_tensor(enc, encoder_ids(world, ex->q)));
        t_ids.push_back(llm_ids_lossy(world, ex->q));
        y_ids.push_back(llm_target_ids(world, ex->y));
    }
    return run_bridge_stage(bridge, enc, lm, enc_out, t_ids, y_ids, mode, cfg,
                            "augmentation stage");
}

// ---------------------------------------------------------------------------
// Decoders.
// ---------------------------------------------------------------------------

evalkit::DecodeFn merged_decoder(const synth::World& world, const EncoderModel& enc,
                                 const BridgeModel& bridge, const LMModel& lm, ComposeMode mode,
                                 int max_new) {
    return [&world, &enc, &bridge, &lm, mode, max_new](const synth::TaskExample& ex) {
        Tensor x = encode_to_tensor(enc, encoder_ids(world, ex.q));
        Tensor mapped = map_states_tensor(bridge, x);
        std::vector<int> t_ids = llm_ids_lossy(world, ex.q);
        PrefixBuilder prefix = [&](Graph& g) {
            HiddenSeq m = hidden_from_tensor(g, mapped, Space::llm, Role::mapped_states);
            if (mode == ComposeMode::augmented) {
                HiddenSeq native = embed(g, lm, t_ids);
                return compose_augmented(g, lm, bridge, m, native);
            }
            return compose_replacement(g, lm, bridge, m);
        };
        return world.llm_vocab().words(greedy_decode(lm, prefix, max_new));
    };
}

evalkit::DecodeFn native_decoder(const synth::World& world, const LMModel& lm, int max_new) {
    return [&world, &lm, max_new](const synth::TaskExample& ex) {
        std::vector<int> q_ids = llm_ids_lossy(world, ex.q);
        PrefixBuilder prefix = [&](Graph& g) { return compose_native(g, lm, q_ids); };
        return world.llm_vocab().words(greedy_decode(lm, prefix, max_new));
    };
}

// ---------------------------------------------------------------------------
// Alignment pools.
// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> sample_pool_sentences(const synth::World& world, int n,
                                                            uint64_t seed) {
    if (n <= 0) throw std::runtime_error("pool size must be positive");
    RngStream rng = RngStream(seed).child("probe-pool");
    std::vector<std::vector<std::string>> out;
    std::set<std::string> seen;
    int attempts = 0;
    while (static_cast<int>(out.size()) < n) {
        if (++attempts > 200000) throw std::runtime_error("pool sampling stalled");
        auto s = gen_grammar_sentence(world, rng);
        std::string key;
        for (const auto& t : s) key += t + ' ';
        if (seen.insert(key).second) out.push_back(std::move(s));
    }
    return out;
}

evalkit::PoolMap build_alignment_pools(const synth::World& world, const EncoderModel& enc,
                                       const BridgeModel* bridge, const LMModel* lm,
                                       evalkit::ProbeLocation probe,
                                       const std::vector<std::vector<std::string>>& english_pool,
                                       const std::vector<std::string>& langs) {
    using evalkit::ProbeLocation;
    if (probe == ProbeLocation::mapping_output && bridge == nullptr)
        throw std::runtime_error("mapping probe requires a bridge");
    if (probe == ProbeLocation::llm_embedding && lm == nullptr)
        throw std::runtime_error("embedding probe requires an lm");

    evalkit::PoolMap pools;
    for (const auto& lang : langs) {
        const auto& L = world.language(lang);
        auto& pool = pools[lang];
        pool.reserve(english_pool.size());
        for (const auto& sent : english_pool) {
            auto rendered = world.render(sent, L);
            if (probe == ProbeLocation::llm_embedding) {
                const Tensor& wte = lm->params.get("llm.wte").value;
                auto ids = llm_ids_lossy(world, rendered);
                std::vector<double> v(static_cast<size_t>(wte.cols()), 0.0);
                for (int id : ids)
                    for (int c = 0; c < wte.cols(); ++c)
                        v[static_cast<size_t>(c)] += wte.at(id, c);
                for (auto& x : v) x /= static_cast<double>(ids.size());
                pool.push_back(std::move(v));
                continue;
            }
            Tensor h = encode_to_tensor(enc, encoder_ids(world, rendered));
            if (probe == ProbeLocation::mapping_output) h = map_states_tensor(*bridge, h);
            pool.push_back(evalkit::mean_pool_rows(h));
        }
    }
    return pools;
}

// ---------------------------------------------------------------------------
// Variants.
// ---------------------------------------------------------------------------

Variant variant_from_string(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "no_mapping_stage") return Variant::no_mapping_stage;
    if (s == "no_augmentation_stage") return Variant::no_augmentation_stage;
    if (s == "replacement_only") return Variant::replacement_only;
    if (s == "monoreason") return Variant::monoreason;
    if (s == "multireason_sft") return Variant::multireason_sft;
    throw std::runtime_error("unknown variant: " + s);
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_mapping_stage: return "no_mapping_stage";
        case Variant::no_augmentation_stage: return "no_augmentation_stage";
        case Variant::replacement_only: return "replacement_only";
        case Variant::monoreason: return "monoreason";
        case Variant::multireason_sft: return "multireason_sft";
    }
    throw std::runtime_error("unknown variant");
}

namespace {

void check_inputs(const VariantInputs& in) {
    if (!in.world || !in.bundle || !in.enc || !in.mono_lm)
        throw std::runtime_error("variant inputs are incomplete");
}

TrainConfig stage_cfg(const VariantInputs& in, const char* label, double lr, int epochs) {
    TrainConfig cfg;
    cfg.label = label;
    cfg.lr = lr;
    cfg.batch_size = in.batch_size;
    cfg.epochs = epochs;
    cfg.seed = in.seed;
    return cfg;
}

} // namespace

BridgeModel init_bridge(const VariantInputs& in) {
    check_inputs(in);
    RngStream rng = RngStream(in.seed).child("bridge-init");
    return make_bridge(in.map_variant, in.enc->cfg.dim, in.mono_lm->cfg.dim, *in.mono_lm, rng);
}

BridgeModel train_stage1_bridge(const VariantInputs& in, StageResult* result) {
    check_inputs(in);
    BridgeModel bridge = init_bridge(in);
    auto cfg = stage_cfg(in, "mapping_stage", in.mapping_lr, in.mapping_epochs);
    StageResult res = train_mapping_stage(bridge, *in.enc, *in.mono_lm, *in.world,
                                          in.bundle->encoder_pairs, cfg);
    if (result) *result = res;
    return bridge;
}

VariantResult run_variant(Variant v, const VariantInputs& in) {
    check_inputs(in);
    const synth::World& world = *in.world;

    VariantResult out;
    out.variant = variant_name(v);
    out.seed = in.seed;

    std::vector<std::string> lang_order;
    std::set<std::string> low_tier;
    for (const auto& spec : world.config().langs) {
        lang_order.push_back(spec.name);
        if (spec.tier == synth::Tier::low) low_tier.insert(spec.name);
    }
    auto evaluate = [&](const evalkit::DecodeFn& decode) {
        auto rec = evalkit::eval_accuracy(decode, in.bundle->eval_sets, lang_order);
        evalkit::aggregate_groups(rec, low_tier);
        rec.variant = out.variant;
        rec.seed = in.seed;
        return rec;
    };

    if (v == Variant::monoreason) {
        out.lm = *in.mono_lm;
        out.metrics = evaluate(native_decoder(world, out.lm, in.eval_max_new));
        return out;
    }

    if (v == Variant::multireason_sft) {
        out.lm = *in.mono_lm;
        out.lm.params.set_trainable(true);
        auto flat = pool_tasks(in.bundle->query_task);
        std::vector<std::vector<int>> qs, ys;
        for (const auto* ex : flat) {
            qs.push_back(llm_ids_lossy(world, ex->q));
            ys.push_back(llm_target_ids(world, ex->y));
        }
        auto cfg = stage_cfg(in, "multilingual_sft", in.sft_lr, in.sft_epochs);
        std::vector<int> lens;
        lens.reserve(flat.size());
        for (size_t i = 0; i < flat.size(); ++i)
            lens.push_back(static_cast<int>(qs[i].size() + ys[i].size()));
        const auto offsets = position_jitter(lens, out.lm.cfg.max_positions, cfg.seed);
        auto build = [&](Graph& g, int i) {
            auto prefix = compose_native(g, out.lm, qs[static_cast<size_t>(i)]);
            return lm_loss(g, out.lm, prefix, ys[static_cast<size_t>(i)],
                           offsets[static_cast<size_t>(i)]);
        };
        out.stages.push_back(
            train_loop(cfg, static_cast<int>(flat.size()), build, {&out.lm.params}));
        out.lm.params.set_trainable(false);
        out.provenance.push_back("multilingual_sft");
        out.metrics = evaluate(native_decoder(world, out.lm, in.eval_max_new));
        return out;
    }

    // Bridge variants share the frozen reader; they differ in stages and in
    // the composition used at eval time.
    out.lm = *in.mono_lm;
    const bool wants_stage1 = (v != Variant::no_mapping_stage);
    if (wants_stage1) {
        if (in.cached_stage1) {
            out.bridge = *in.cached_stage1;
        } else {
            StageResult sr;
            out.bridge = train_stage1_bridge(in, &sr);
            out.stages.push_back(sr);
        }
        out.provenance.push_back("mapping_stage");
    } else {
        out.bridge = init_bridge(in);
    }

    if (v == Variant::full || v == Variant::no_mapping_stage) {
        auto cfg = stage_cfg(in, "augmentation_stage", in.augmentation_lr, in.augmentation_epochs);
        out.stages.push_back(train_augmentation_stage(out.bridge, *in.enc, out.lm, world,
                                                      in.bundle->query_task, cfg,
                                                      ComposeMode::augmented));
        out.provenance.push_back("augmentation_stage");
    } else if (v == Variant::replacement_only) {
        auto cfg = stage_cfg(in, "replacement_task_stage", in.augmentation_lr,
                             in.augmentation_epochs);
        out.stages.push_back(train_augmentation_stage(out.bridge, *in.enc, out.lm, world,
                                                      in.bundle->query_task, cfg,
                                                      ComposeMode::replacement));
        out.provenance.push_back("replacement_task_stage");
    }

    const ComposeMode eval_mode =
        (v == Variant::replacement_only) ? ComposeMode::replacement : ComposeMode::augmented;
    out.used_bridge = true;
    out.metrics =
        evaluate(merged_decoder(world, *in.enc, out.bridge, out.lm, eval_mode, in.eval_max_new));
    return out;
}

} // namespace bridgelab::pipeline
