#include "bridgelab/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace bridgelab {

namespace {

constexpr float kInitStd = 0.02f;
constexpr float kMaskFill = -1e9f;

Tensor normal_tensor(int r, int c, RngStream& rng, float std_dev) {
    Tensor t = Tensor::zeros(r, c);
    for (float& v : t.data) v = static_cast<float>(rng.normal(0.0, std_dev));
    return t;
}

void add_linear(ParamStore& ps, const std::string& name, int in, int out, RngStream& rng) {
    ps.add(name + ".w", normal_tensor(in, out, rng, kInitStd));
    ps.add(name + ".b", Tensor::zeros(1, out));
}

// Fan-in-scaled init for the standalone bridge layers. Unlike the residual
// transformer stacks, the bridge has no layer norms around it, and its output
// must land at the scale of trained embedding rows within a short stage; the
// tiny transformer init would start it orders of magnitude too small.
void add_linear_fan_in(ParamStore& ps, const std::string& name, int in, int out, RngStream& rng,
                       double gain) {
    ps.add(name + ".w", normal_tensor(in, out, rng, gain / std::sqrt(double(in))));
    ps.add(name + ".b", Tensor::zeros(1, out));
}

void add_layer_norm(ParamStore& ps, const std::string& name, int dim) {
    Tensor ones = Tensor::zeros(1, dim);
    for (float& v : ones.data) v = 1.0f;
    ps.add(name + ".g", std::move(ones));
    ps.add(name + ".b", Tensor::zeros(1, dim));
}

void add_attention(ParamStore& ps, const std::string& name, int dim, RngStream& rng) {
    add_linear(ps, name + ".q", dim, dim, rng);
    add_linear(ps, name + ".k", dim, dim, rng);
    add_linear(ps, name + ".v", dim, dim, rng);
    add_linear(ps, name + ".o", dim, dim, rng);
}

void add_ffn(ParamStore& ps, const std::string& name, int dim, RngStream& rng) {
    add_linear(ps, name + ".w1", dim, 4 * dim, rng);
    add_linear(ps, name + ".w2", 4 * dim, dim, rng);
}

ValueId linear(Graph& g, const ParamStore& ps, const std::string& name, ValueId x) {
    return g.add(g.matmul(x, g.param(ps.get(name + ".w"))), g.param(ps.get(name + ".b")));
}

ValueId layer_norm_affine(Graph& g, const ParamStore& ps, const std::string& name, ValueId x) {
    return g.add(g.mul(g.layer_norm(x), g.param(ps.get(name + ".g"))),
                 g.param(ps.get(name + ".b")));
}

ValueId ffn(Graph& g, const ParamStore& ps, const std::string& name, ValueId x) {
    return linear(g, ps, name + ".w2", g.relu(linear(g, ps, name + ".w1", x)));
}

// Multi-head attention. q comes from x [q_len, dim]; keys/values from kv
// [kv_len, dim]. A nonzero mask byte at (i, j) hides key j from query i.
ValueId attention(Graph& g, const ParamStore& ps, const std::string& name, ValueId x, int q_len,
                  ValueId kv, int kv_len, int dim, int heads,
                  const std::vector<uint8_t>& mask) {
    ValueId q = linear(g, ps, name + ".q", x);
    ValueId k = linear(g, ps, name + ".k", kv);
    ValueId v = linear(g, ps, name + ".v", kv);
    const int dh = dim / heads;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));

    std::vector<ValueId> outs;
    for (int h = 0; h < heads; ++h) {
        ValueId qh = g.cols(q, h * dh, dh);
        ValueId kh = g.cols(k, h * dh, dh);
        ValueId vh = g.cols(v, h * dh, dh);
        ValueId scores = g.scale(g.matmul(qh, g.apply(OpKind::transpose, {kh})), inv_sqrt);
        if (!mask.empty()) {
            OpAttrs at;
            at.mask = mask;
            at.fill = kMaskFill;
            scores = g.apply(OpKind::masked_fill, {scores}, at);
        }
        ValueId attn = g.apply(OpKind::softmax, {scores});
        outs.push_back(g.matmul(attn, vh));
    }
    OpAttrs cat;
    cat.axis = 1;
    ValueId merged = g.apply(OpKind::concat, outs, cat);
    (void)q_len;
    (void)kv_len;
    return linear(g, ps, name + ".o", merged);
}

std::vector<uint8_t> causal_mask(int n) {
    std::vector<uint8_t> m(static_cast<size_t>(n) * n, 0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m[static_cast<size_t>(i) * n + j] = 1;
    return m;
}

void check_token_ids(const std::vector<int>& tokens, int vocab, const char* who) {
    if (tokens.empty()) throw std::runtime_error(std::string(who) + ": empty token sequence");
    for (int t : tokens)
        if (t < 0 || t >= vocab)
            throw std::runtime_error(std::string(who) + ": out-of-vocab id " + std::to_string(t));
}

ValueId add_positions(Graph& g, const ParamStore& ps, const std::string& wpe, ValueId rows,
                      int len, int max_positions, int offset = 0) {
    if (offset < 0 || offset + len > max_positions)
        throw std::runtime_error("sequence length " + std::to_string(len) + " at offset " +
                                 std::to_string(offset) + " exceeds max positions " +
                                 std::to_string(max_positions));
    return g.add(rows, g.rows(g.param(ps.get(wpe)), offset, len));
}

} // namespace

MapVariant map_variant_from_string(const std::string& s) {
    if (s == "linear") return MapVariant::linear;
    if (s == "mlp2") return MapVariant::mlp2;
    if (s == "mlp3") return MapVariant::mlp3;
    throw std::runtime_error("unknown mapping variant: " + s);
}

const char* map_variant_name(MapVariant v) {
    switch (v) {
        case MapVariant::linear: return "linear";
        case MapVariant::mlp2: return "mlp2";
        case MapVariant::mlp3: return "mlp3";
    }
    return "?";
}

EncoderModel make_encoder(const TransformerConfig& cfg, int pad_id, RngStream& rng) {
    if (cfg.dim % cfg.heads != 0)
        throw std::runtime_error("encoder dim must be divisible by head count");
    EncoderModel m;
    m.cfg = cfg;
    m.pad_id = pad_id;
    m.params.add("enc.wte", normal_tensor(cfg.vocab, cfg.dim, rng, kInitStd));
    m.params.add("enc.wpe", normal_tensor(cfg.max_positions, cfg.dim, rng, kInitStd));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "enc.l" + std::to_string(l);
        add_layer_norm(m.params, p + ".ln1", cfg.dim);
        add_attention(m.params, p + ".attn", cfg.dim, rng);
        add_layer_norm(m.params, p + ".ln2", cfg.dim);
        add_ffn(m.params, p + ".ffn", cfg.dim, rng);
    }
    add_layer_norm(m.params, "enc.lnf", cfg.dim);
    return m;
}

LMModel make_lm(const TransformerConfig& cfg, RngStream& rng) {
    if (cfg.dim % cfg.heads != 0)
        throw std::runtime_error("lm dim must be divisible by head count");
    LMModel m;
    m.cfg = cfg;
    m.params.add("llm.wte", normal_tensor(cfg.vocab, cfg.dim, rng, kInitStd));
    m.params.add("llm.wpe", normal_tensor(cfg.max_positions, cfg.dim, rng, kInitStd));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "llm.l" + std::to_string(l);
        add_layer_norm(m.params, p + ".ln1", cfg.dim);
        add_attention(m.params, p + ".attn", cfg.dim, rng);
        add_layer_norm(m.params, p + ".ln2", cfg.dim);
        add_ffn(m.params, p + ".ffn", cfg.dim, rng);
    }
    add_layer_norm(m.params, "llm.lnf", cfg.dim);
    add_linear(m.params, "llm.head", cfg.dim, cfg.vocab, rng);
    return m;
}

Seq2SeqDecoderModel make_seq2seq_decoder(const TransformerConfig& cfg, RngStream& rng) {
    if (cfg.dim % cfg.heads != 0)
        throw std::runtime_error("decoder dim must be divisible by head count");
    Seq2SeqDecoderModel m;
    m.cfg = cfg;
    m.params.add("dec.wte", normal_tensor(cfg.vocab, cfg.dim, rng, kInitStd));
    m.params.add("dec.wpe", normal_tensor(cfg.max_positions, cfg.dim, rng, kInitStd));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "dec.l" + std::to_string(l);
        add_layer_norm(m.params, p + ".ln1", cfg.dim);
        add_attention(m.params, p + ".attn", cfg.dim, rng);
        add_layer_norm(m.params, p + ".lnx", cfg.dim);
        add_attention(m.params, p + ".cross", cfg.dim, rng);
        add_layer_norm(m.params, p + ".ln2", cfg.dim);
        add_ffn(m.params, p + ".ffn", cfg.dim, rng);
    }
    add_layer_norm(m.params, "dec.lnf", cfg.dim);
    add_linear(m.params, "dec.head", cfg.dim, cfg.vocab, rng);
    return m;
}

BridgeModel make_bridge(MapVariant variant, int d1, int d2, const LMModel& lm, RngStream& rng) {
    BridgeModel b;
    b.variant = variant;
    b.d1 = d1;
    b.d2 = d2;
    b.hidden = (d1 + d2 + 1) / 2;
    const double relu_gain = std::sqrt(2.0);
    switch (variant) {
        case MapVariant::linear:
            add_linear_fan_in(b.params, "bridge.map1", d1, d2, rng, 1.0);
            break;
        case MapVariant::mlp2:
            add_linear_fan_in(b.params, "bridge.map1", d1, b.hidden, rng, relu_gain);
            add_linear_fan_in(b.params, "bridge.map2", b.hidden, d2, rng, 1.0);
            break;
        case MapVariant::mlp3:
            add_linear_fan_in(b.params, "bridge.map1", d1, b.hidden, rng, relu_gain);
            add_linear_fan_in(b.params, "bridge.map2", b.hidden, b.hidden, rng, relu_gain);
            add_linear_fan_in(b.params, "bridge.map3", b.hidden, d2, rng, 1.0);
            break;
    }

    const Tensor& wte = lm.params.get("llm.wte").value;
    Tensor sep = Tensor::zeros(1, d2);
    for (int c = 0; c < d2; ++c) {
        double acc = 0.0;
        for (int r = 0; r < wte.rows(); ++r) acc += wte.at(r, c);
        sep.data[c] = static_cast<float>(acc / wte.rows() + rng.normal(0.0, kInitStd));
    }
    b.params.add("bridge.sep", std::move(sep));
    return b;
}

HiddenSeq encode(Graph& g, const EncoderModel& enc, const std::vector<int>& tokens) {
    check_token_ids(tokens, enc.cfg.vocab, "encode");
    const int len = static_cast<int>(tokens.size());

    // Pad keys are hidden from every query so padding can never change the
    // states of real tokens.
    std::vector<uint8_t> mask;
    bool has_pad = false;
    for (int t : tokens) has_pad = has_pad || (t == enc.pad_id);
    if (has_pad) {
        mask.assign(static_cast<size_t>(len) * len, 0);
        for (int i = 0; i < len; ++i)
            for (int j = 0; j < len; ++j)
                if (tokens[j] == enc.pad_id) mask[static_cast<size_t>(i) * len + j] = 1;
    }

    ValueId x = g.gather(g.param(enc.params.get("enc.wte")), tokens);
    x = add_positions(g, enc.params, "enc.wpe", x, len, enc.cfg.max_positions);
    for (int l = 0; l < enc.cfg.layers; ++l) {
        const std::string p = "enc.l" + std::to_string(l);
        ValueId h = layer_norm_affine(g, enc.params, p + ".ln1", x);
        x = g.add(x, attention(g, enc.params, p + ".attn", h, len, h, len, enc.cfg.dim,
                               enc.cfg.heads, mask));
        ValueId f = layer_norm_affine(g, enc.params, p + ".ln2", x);
        x = g.add(x, ffn(g, enc.params, p + ".ffn", f));
    }
    x = layer_norm_affine(g, enc.params, "enc.lnf", x);

    HiddenSeq out;
    out.value = x;
    out.len = len;
    out.dim = enc.cfg.dim;
    out.space = Space::encoder;
    out.role = Role::source_states;
    return out;
}

HiddenSeq map_states(Graph& g, const BridgeModel& bridge, const HiddenSeq& x) {
    if (x.space != Space::encoder || x.role != Role::source_states)
        throw std::runtime_error("map_states: input must be raw encoder states");
    if (x.dim != bridge.d1)
        throw std::runtime_error("map_states: dimension mismatch, got " + std::to_string(x.dim) +
                                 " want " + std::to_string(bridge.d1));
    ValueId h = x.value;
    switch (bridge.variant) {
        case MapVariant::linear:
            h = linear(g, bridge.params, "bridge.map1", h);
            break;
        case MapVariant::mlp2:
            h = g.relu(linear(g, bridge.params, "bridge.map1", h));
            h = linear(g, bridge.params, "bridge.map2", h);
            break;
        case MapVariant::mlp3:
            h = g.relu(linear(g, bridge.params, "bridge.map1", h));
            h = g.relu(linear(g, bridge.params, "bridge.map2", h));
            h = linear(g, bridge.params, "bridge.map3", h);
            break;
    }
    HiddenSeq out;
    out.value = h;
    out.len = x.len;
    out.dim = bridge.d2;
    out.space = Space::llm;
    out.role = Role::mapped_states;
    return out;
}

HiddenSeq embed(Graph& g, const LMModel& lm, const std::vector<int>& tokens) {
    check_token_ids(tokens, lm.cfg.vocab, "embed");
    HiddenSeq out;
    out.value = g.gather(g.param(lm.params.get("llm.wte")), tokens);
    out.len = static_cast<int>(tokens.size());
    out.dim = lm.cfg.dim;
    out.space = Space::llm;
    out.role = Role::token_embeddings;
    return out;
}

namespace {
ComposedSequence compose_impl(Graph& g, const LMModel& lm, const BridgeModel& bridge,
                              const HiddenSeq& mapped, const HiddenSeq* native) {
    if (mapped.space != Space::llm || mapped.role != Role::mapped_states)
        throw std::runtime_error("compose: first block must be mapped encoder states");
    if (mapped.dim != lm.cfg.dim)
        throw std::runtime_error("compose: mapped dim does not match lm dim");
    if (native) {
        if (native->space != Space::llm || native->role != Role::token_embeddings)
            throw std::runtime_error("compose: second block must be token embeddings");
        if (native->dim != lm.cfg.dim)
            throw std::runtime_error("compose: native dim does not match lm dim");
    }
    const int total = 2 + mapped.len + (native ? native->len : 0);
    if (total > lm.cfg.max_positions)
        throw std::runtime_error("compose: length " + std::to_string(total) +
                                 " exceeds max positions " +
                                 std::to_string(lm.cfg.max_positions));

    ValueId bos = g.gather(g.param(lm.params.get("llm.wte")), {lm.bos_id});
    ValueId sep = g.param(bridge.params.get("bridge.sep"));
    std::vector<ValueId> parts = {bos, mapped.value, sep};
    if (native) parts.push_back(native->value);

    ComposedSequence seq;
    seq.value = g.concat_rows(parts);
    seq.total = total;
    seq.mode = native ? ComposeMode::augmented : ComposeMode::replacement;
    seq.segments = {{SegmentKind::bos, 0, 1},
                    {SegmentKind::mapped, 1, mapped.len},
                    {SegmentKind::sep, 1 + mapped.len, 1}};
    if (native) seq.segments.push_back({SegmentKind::native, 2 + mapped.len, native->len});
    return seq;
}
} // namespace

ComposedSequence compose_augmented(Graph& g, const LMModel& lm, const BridgeModel& bridge,
                                   const HiddenSeq& mapped, const HiddenSeq& native) {
    return compose_impl(g, lm, bridge, mapped, &native);
}

ComposedSequence compose_replacement(Graph& g, const LMModel& lm, const BridgeModel& bridge,
                                     const HiddenSeq& mapped) {
    return compose_impl(g, lm, bridge, mapped, nullptr);
}

ComposedSequence compose_native(Graph& g, const LMModel& lm, const std::vector<int>& tokens) {
    std::vector<int> with_bos;
    with_bos.reserve(tokens.size() + 1);
    with_bos.push_back(lm.bos_id);
    for (int t : tokens) with_bos.push_back(t);
    check_token_ids(with_bos, lm.cfg.vocab, "compose_native");
    if (static_cast<int>(with_bos.size()) > lm.cfg.max_positions)
        throw std::runtime_error("compose_native: sequence exceeds max positions");

    ComposedSequence seq;
    seq.value = g.gather(g.param(lm.params.get("llm.wte")), with_bos);
    seq.total = static_cast<int>(with_bos.size());
    seq.mode = ComposeMode::replacement;
    seq.segments = {{SegmentKind::bos, 0, 1},
                    {SegmentKind::native, 1, static_cast<int>(tokens.size())}};
    return seq;
}

ValueId lm_logits(Graph& g, const LMModel& lm, ValueId rows, int len, int pos_offset) {
    ValueId x = add_positions(g, lm.params, "llm.wpe", rows, len, lm.cfg.max_positions, pos_offset);
    const std::vector<uint8_t> mask = causal_mask(len);
    for (int l = 0; l < lm.cfg.layers; ++l) {
        const std::string p = "llm.l" + std::to_string(l);
        ValueId h = layer_norm_affine(g, lm.params, p + ".ln1", x);
        x = g.add(x, attention(g, lm.params, p + ".attn", h, len, h, len, lm.cfg.dim,
                               lm.cfg.heads, mask));
        ValueId f = layer_norm_affine(g, lm.params, p + ".ln2", x);
        x = g.add(x, ffn(g, lm.params, p + ".ffn", f));
    }
    x = layer_norm_affine(g, lm.params, "llm.lnf", x);
    return linear(g, lm.params, "llm.head", x);
}

ValueId lm_loss(Graph& g, const LMModel& lm, const ComposedSequence& prefix,
                const std::vector<int>& y, int pos_offset) {
    check_token_ids(y, lm.cfg.vocab, "lm_loss targets");
    ValueId rows = prefix.value;
    int len = prefix.total;
    if (y.size() > 1) {
        std::vector<int> teacher(y.begin(), y.end() - 1);
        rows = g.concat_rows({rows, g.gather(g.param(lm.params.get("llm.wte")), teacher)});
        len += static_cast<int>(teacher.size());
    }
    ValueId logits = lm_logits(g, lm, rows, len, pos_offset);
    // Row prefix.total - 1 predicts y[0]; the teacher-forced rows predict the
    // rest. Only these |y| rows enter the loss.
    ValueId target_logits = g.rows(logits, prefix.total - 1, static_cast<int>(y.size()));
    ValueId logp = g.apply(OpKind::log_softmax, {target_logits});
    OpAttrs at;
    at.ids = y;
    ValueId picked = g.apply(OpKind::pick, {logp}, at);
    return g.scale(g.apply(OpKind::mean_all, {picked}), -1.0f);
}

std::vector<int> greedy_decode(const LMModel& lm, const PrefixBuilder& prefix, int max_new) {
    std::vector<int> out;
    for (int step = 0; step < max_new; ++step) {
        Graph g;
        ComposedSequence p = prefix(g);
        ValueId rows = p.value;
        int len = p.total;
        if (!out.empty()) {
            rows = g.concat_rows({rows, g.gather(g.param(lm.params.get("llm.wte")), out)});
            len += static_cast<int>(out.size());
        }
        if (len + 1 > lm.cfg.max_positions) break;
        ValueId logits = lm_logits(g, lm, rows, len);
        const Tensor& t = g.value(logits);
        int best = 0;
        float best_v = t.at(len - 1, 0);
        for (int j = 1; j < t.cols(); ++j) {
            const float v = t.at(len - 1, j);
            if (v > best_v) {
                best_v = v;
                best = j;
            }
        }
        if (best == lm.eos_id) break;
        out.push_back(best);
    }
    return out;
}

ValueId seq2seq_loss(Graph& g, const Seq2SeqDecoderModel& dec, const HiddenSeq& source,
                     const std::vector<int>& y) {
    check_token_ids(y, dec.cfg.vocab, "seq2seq targets");
    if (source.space != Space::encoder)
        throw std::runtime_error("seq2seq_loss: source must be encoder states");
    std::vector<int> teacher;
    teacher.push_back(dec.bos_id);
    for (size_t i = 0; i + 1 < y.size(); ++i) teacher.push_back(y[i]);
    const int len = static_cast<int>(teacher.size());

    ValueId x = g.gather(g.param(dec.params.get("dec.wte")), teacher);
    x = add_positions(g, dec.params, "dec.wpe", x, len, dec.cfg.max_positions);
    const std::vector<uint8_t> mask = causal_mask(len);
    for (int l = 0; l < dec.cfg.layers; ++l) {
        const std::string p = "dec.l" + std::to_string(l);
        ValueId h = layer_norm_affine(g, dec.params, p + ".ln1", x);
        x = g.add(x, attention(g, dec.params, p + ".attn", h, len, h, len, dec.cfg.dim,
                               dec.cfg.heads, mask));
        ValueId c = layer_norm_affine(g, dec.params, p + ".lnx", x);
        x = g.add(x, attention(g, dec.params, p + ".cross", c, len, source.value, source.len,
                               dec.cfg.dim, dec.cfg.heads, {}));
        ValueId f = layer_norm_affine(g, dec.params, p + ".ln2", x);
        x = g.add(x, ffn(g, dec.params, p + ".ffn", f));
    }
    x = layer_norm_affine(g, dec.params, "dec.lnf", x);
    ValueId logits = linear(g, dec.params, "dec.head", x);
    ValueId logp = g.apply(OpKind::log_softmax, {logits});
    OpAttrs at;
    at.ids = y;
    ValueId picked = g.apply(OpKind::pick, {logp}, at);
    return g.scale(g.apply(OpKind::mean_all, {picked}), -1.0f);
}

std::vector<int> seq2seq_greedy(const Seq2SeqDecoderModel& dec, const Tensor& source_states,
                                int max_new) {
    std::vector<int> out;
    for (int step = 0; step < max_new; ++step) {
        Graph g;
        HiddenSeq src;
        src.value = g.input(source_states);
        src.len = source_states.rows();
        src.dim = source_states.cols();
        src.space = Space::encoder;
        src.role = Role::source_states;

        std::vector<int> teacher;
        teacher.push_back(dec.bos_id);
        for (int t : out) teacher.push_back(t);
        const int len = static_cast<int>(teacher.size());
        if (len + 1 > dec.cfg.max_positions) break;

        ValueId x = g.gather(g.param(dec.params.get("dec.wte")), teacher);
        x = add_positions(g, dec.params, "dec.wpe", x, len, dec.cfg.max_positions);
        const std::vector<uint8_t> mask = causal_mask(len);
        for (int l = 0; l < dec.cfg.layers; ++l) {
            const std::string p = "dec.l" + std::to_string(l);
            ValueId h = layer_norm_affine(g, dec.params, p + ".ln1", x);
            x = g.add(x, attention(g, dec.params, p + ".attn", h, len, h, len, dec.cfg.dim,
                                   dec.cfg.heads, mask));
            ValueId c = layer_norm_affine(g, dec.params, p + ".lnx", x);
            x = g.add(x, attention(g, dec.params, p + ".cross", c, len, src.value, src.len,
                                   dec.cfg.dim, dec.cfg.heads, {}));
            ValueId f = layer_norm_affine(g, dec.params, p + ".ln2", x);
            x = g.add(x, ffn(g, dec.params, p + ".ffn", f));
        }
        x = layer_norm_affine(g, dec.params, "dec.lnf", x);
        ValueId logits = linear(g, dec.params, "dec.head", x);
        const Tensor& t = g.value(logits);
        int best = 0;
        float best_v = t.at(len - 1, 0);
        for (int j = 1; j < t.cols(); ++j) {
            const float v = t.at(len - 1, j);
            if (v > best_v) {
                best_v = v;
                best = j;
            }
        }
        if (best == dec.eos_id) break;
        out.push_back(best);
    }
    return out;
}

Tensor encode_to_tensor(const EncoderModel& enc, const std::vector<int>& tokens) {
    Graph g;
    HiddenSeq h = encode(g, enc, tokens);
    return g.value(h.value);
}

Tensor map_states_tensor(const BridgeModel& bridge, const Tensor& x) {
    Graph g;
    HiddenSeq h;
    h.value = g.input(x);
    h.len = x.rows();
    h.dim = x.cols();
    h.space = Space::encoder;
    h.role = Role::source_states;
    HiddenSeq m = map_states(g, bridge, h);
    return g.value(m.value);
}

} // namespace bridgelab
