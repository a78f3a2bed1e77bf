#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedtrace/nn.hpp"
#include "fedtrace/tensor.hpp"
#include "fedtrace/tokenizer.hpp"
#include "fedtrace/trace.hpp"

namespace fedtrace {

enum class View { Conv, Struct, Gated };

const char* view_name(View v);
View view_from_name(const std::string& name);

// A trace tokenized once under both schemes; all training and scoring works
// from these, so tokenization cost is paid once per dataset.
struct Example {
  TokenSeq conv;
  TokenSeq strct;
  int label = 0;
  int org_id = 1;
};

Example make_example(const AgentTrace& trace, const RuleTable& rules);
std::vector<Example> make_examples(const std::vector<AgentTrace>& traces,
                                   const RuleTable& rules);

// Tensor layout of one encoder stack (embedding through projection), used at
// offset 0 in single-view models and offsets 0/kEncoderTensors in gated ones.
namespace enc {
enum : size_t {
  kEmbedding = 0,
  kFwdWx,
  kFwdWh,
  kFwdB,
  kBwdWx,
  kBwdWh,
  kBwdB,
  kProjW,
  kProjB,
  kCount
};
} // namespace enc
inline constexpr size_t kEncoderTensors = enc::kCount;

// One detector model. Single-view layouts hold one encoder stack plus the
// classifier head; the gated layout holds a conversational stack, a structural
// stack, the gate, and the shared head:
//   single: enc[0..8], cls_w1, cls_b1, cls_w2, cls_b2                 (13)
//   gated:  conv.enc[0..8], struct.enc[0..8], gate_w, gate_b, cls...  (24)
struct Model {
  View view = View::Struct;
  ParamSet params;

  static Model init(View view, uint64_t seed);
};

// Number of scalar parameters a freshly built model of this view holds.
size_t param_count(View view);

// Intermediate state captured by a forward pass so the backward pass can run.
struct EncoderCache {
  int len = 0;
  TokenSeq seq;
  std::vector<double> x; // len × kEmbDim embedded input
  BiLstmCache bilstm;
  double h[2 * kHidden] = {};       // concatenated final hidden states
  double latent[kLatentDim] = {};   // post-projection
};

struct ForwardCache {
  EncoderCache conv, strct; // single-view models use only the matching one
  double gate[kLatentDim] = {};
  double fused[kLatentDim] = {};
  double cls_hidden[kClsHidden] = {};
  double logit = 0.0;
  double prob = 0.5;
};

// Probability that the trace is an attack. Single-view entry point; the model
// view must be Conv or Struct and the sequence scheme must match.
double forward_single(const Model& m, const TokenSeq& seq, ForwardCache* cache = nullptr);

// Gated entry point: both sequences must come from the same trace.
double forward_gated(const Model& m, const TokenSeq& conv_seq, const TokenSeq& struct_seq,
                     ForwardCache* cache = nullptr);

// View-dispatching convenience over the two entry points above.
double model_forward(const Model& m, const Example& ex, ForwardCache* cache = nullptr);

// BCE loss of one example; accumulates d(loss)/d(params) into grads (layout of
// m.params). Returns the loss.
double model_loss_grad(const Model& m, const Example& ex, ParamSet& grads);

// Deterministic, order-preserving scores; no cross-sample interaction.
std::vector<double> predict_batch(const Model& m, const std::vector<Example>& batch);

} // namespace fedtrace
