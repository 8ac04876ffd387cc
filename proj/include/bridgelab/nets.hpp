#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bridgelab/graph.hpp"
#include "bridgelab/rng.hpp"

namespace bridgelab {

// ---------------------------------------------------------------------------
// Model containers. The encoder weights are called theta, the language model
// weights phi, and the bridge weights sigma throughout the pipeline; only
// sigma is ever trainable while the two big models are merged.
// ---------------------------------------------------------------------------

struct TransformerConfig {
    int vocab = 0;
    int dim = 0;
    int layers = 0;
    int heads = 0;
    int max_positions = 128;
};

// Bidirectional text encoder (theta).
struct EncoderModel {
    TransformerConfig cfg;
    int pad_id = 0;
    ParamStore params;
};

// Decoder-only causal language model (phi).
struct LMModel {
    TransformerConfig cfg;
    int pad_id = 0, unk_id = 1, bos_id = 2, eos_id = 3;
    ParamStore params;
};

// Throwaway seq2seq decoder used only to pretrain the encoder; it shares the
// encoder vocabulary and cross-attends into encoder states.
struct Seq2SeqDecoderModel {
    TransformerConfig cfg;
    int bos_id = 2, eos_id = 3;
    ParamStore params;
};

enum class MapVariant { linear, mlp2, mlp3 };
MapVariant map_variant_from_string(const std::string& s);
const char* map_variant_name(MapVariant v);

// The bridge (sigma): a per-position mapping from encoder space (d1) into
// LM embedding space (d2) plus one trainable separator row.
struct BridgeModel {
    MapVariant variant = MapVariant::mlp2;
    int d1 = 0, d2 = 0, hidden = 0;
    ParamStore params;
};

EncoderModel make_encoder(const TransformerConfig& cfg, int pad_id, RngStream& rng);
LMModel make_lm(const TransformerConfig& cfg, RngStream& rng);
Seq2SeqDecoderModel make_seq2seq_decoder(const TransformerConfig& cfg, RngStream& rng);
// The separator row is seeded at the mean LM token embedding plus noise, so
// it starts in-distribution for the frozen reader.
BridgeModel make_bridge(MapVariant variant, int d1, int d2, const LMModel& lm, RngStream& rng);

// ---------------------------------------------------------------------------
// Tape-level sequence handles.
// ---------------------------------------------------------------------------

enum class Space { encoder, llm };
enum class Role { source_states, mapped_states, token_embeddings };

struct HiddenSeq {
    ValueId value = -1; // [len, dim]
    int len = 0;
    int dim = 0;
    Space space = Space::encoder;
    Role role = Role::source_states;
};

enum class SegmentKind { bos, mapped, sep, native };
enum class ComposeMode { augmented, replacement };

struct Segment {
    SegmentKind kind;
    int offset;
    int len;
};

struct ComposedSequence {
    ValueId value = -1; // [total, d2] embedding-space rows, no positions yet
    int total = 0;
    ComposeMode mode = ComposeMode::augmented;
    std::vector<Segment> segments;
};

// ---------------------------------------------------------------------------
// Graph builders.
// ---------------------------------------------------------------------------

// Bidirectional encode; trailing pad tokens are masked out of attention keys
// so they cannot influence the real positions. len counts non-pad tokens.
HiddenSeq encode(Graph& g, const EncoderModel& enc, const std::vector<int>& tokens);

// Applies the bridge mapping position-wise: X tilde = f_sigma(X).
HiddenSeq map_states(Graph& g, const BridgeModel& bridge, const HiddenSeq& x);

// Pure embedding lookup (no positions; those are assigned fresh over the
// composed sequence inside lm forward).
HiddenSeq embed(Graph& g, const LMModel& lm, const std::vector<int>& tokens);

// [bos; X~; sep; T] and [bos; X~; sep]. The replacement rows are bitwise the
// prefix of the augmented rows for identical inputs.
ComposedSequence compose_augmented(Graph& g, const LMModel& lm, const BridgeModel& bridge,
                                   const HiddenSeq& mapped, const HiddenSeq& native);
ComposedSequence compose_replacement(Graph& g, const LMModel& lm, const BridgeModel& bridge,
                                     const HiddenSeq& mapped);
// Plain [bos; T] rows for the un-merged baseline LM.
ComposedSequence compose_native(Graph& g, const LMModel& lm, const std::vector<int>& tokens);

// Causal LM forward over embedding rows; returns logits [len, vocab].
// pos_offset shifts which positional rows the sequence occupies; merged
// compositions and decoding always sit at offset 0.
ValueId lm_logits(Graph& g, const LMModel& lm, ValueId rows, int len, int pos_offset = 0);

// Teacher-forced mean NLL of y given the prefix rows. Only the |y| target
// positions contribute to the average; the prefix is context, not target.
ValueId lm_loss(Graph& g, const LMModel& lm, const ComposedSequence& prefix,
                const std::vector<int>& y, int pos_offset = 0);

// Greedy argmax decoding (ties break to the lowest token id). The prefix is
// rebuilt through the callback each step on a fresh graph; generation stops
// at eos or after max_new tokens. Returned ids exclude eos.
using PrefixBuilder = std::function<ComposedSequence(Graph&)>;
std::vector<int> greedy_decode(const LMModel& lm, const PrefixBuilder& prefix, int max_new);

// Seq2seq pieces for encoder pretraining.
ValueId seq2seq_loss(Graph& g, const Seq2SeqDecoderModel& dec, const HiddenSeq& source,
                     const std::vector<int>& y);
std::vector<int> seq2seq_greedy(const Seq2SeqDecoderModel& dec, const Tensor& source_states,
                                int max_new);

// Materialized-state helpers: run a forward in a scratch graph and keep the
// result as a plain tensor (used by eval paths that reuse a frozen forward).
Tensor encode_to_tensor(const EncoderModel& enc, const std::vector<int>& tokens);
Tensor map_states_tensor(const BridgeModel& bridge, const Tensor& x);

} // namespace bridgelab
