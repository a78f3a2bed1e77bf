#include "fedtrace/detector.hpp"

#include <cstring>

#include "fedtrace/errors.hpp"

namespace fedtrace {

namespace {

int vocab_rows(Scheme scheme) {
  return (scheme == Scheme::Conversational ? kConversationalTokens : kStructuralTokens) + 1;
}

void add_encoder_tensors(ParamSet& p, const std::string& prefix, Scheme scheme) {
  p.add(prefix + "embedding", Tensor({vocab_rows(scheme), kEmbDim}));
  p.add(prefix + "lstm_fwd_wx", Tensor({kGateRows, kEmbDim}));
  p.add(prefix + "lstm_fwd_wh", Tensor({kGateRows, kHidden}));
  p.add(prefix + "lstm_fwd_b", Tensor({kGateRows}));
  p.add(prefix + "lstm_bwd_wx", Tensor({kGateRows, kEmbDim}));
  p.add(prefix + "lstm_bwd_wh", Tensor({kGateRows, kHidden}));
  p.add(prefix + "lstm_bwd_b", Tensor({kGateRows}));
  p.add(prefix + "proj_w", Tensor({kLatentDim, 2 * kHidden}));
  p.add(prefix + "proj_b", Tensor({kLatentDim}));
}

void add_classifier_tensors(ParamSet& p) {
  p.add("cls_w1", Tensor({kClsHidden, kLatentDim}));
  p.add("cls_b1", Tensor({kClsHidden}));
  p.add("cls_w2", Tensor({1, kClsHidden}));
  p.add("cls_b2", Tensor({1}));
}

void init_encoder(ParamSet& p, size_t base, int vocab, Rng& rng) {
  glorot_fill(p[base + enc::kEmbedding], vocab, kEmbDim, rng);
  lstm_init(p[base + enc::kFwdWx], p[base + enc::kFwdWh], p[base + enc::kFwdB], rng);
  lstm_init(p[base + enc::kBwdWx], p[base + enc::kBwdWh], p[base + enc::kBwdB], rng);
  glorot_fill(p[base + enc::kProjW], 2 * kHidden, kLatentDim, rng);
  p[base + enc::kProjB].fill(0.0);
}

void init_classifier(ParamSet& p, size_t base, Rng& rng) {
  glorot_fill(p[base + 0], kLatentDim, kClsHidden, rng);
  p[base + 1].fill(0.0);
  glorot_fill(p[base + 2], kClsHidden, 1, rng);
  p[base + 3].fill(0.0);
}

void encoder_forward(const ParamSet& p, size_t base, const TokenSeq& seq, EncoderCache& c) {
  c.seq = seq;
  c.len = std::max(1, seq.true_length);
  c.x.assign(static_cast<size_t>(c.len) * kEmbDim, 0.0);
  embed_forward(p[base + enc::kEmbedding], seq, c.len, c.x.data());
  LstmRef fwd{p[base + enc::kFwdWx], p[base + enc::kFwdWh], p[base + enc::kFwdB]};
  LstmRef bwd{p[base + enc::kBwdWx], p[base + enc::kBwdWh], p[base + enc::kBwdB]};
  bilstm_forward(fwd, bwd, c.x.data(), c.len, c.bilstm, c.h);
  dense_forward(p[base + enc::kProjW], p[base + enc::kProjB], c.h, c.latent, Act::None);
}

void encoder_backward(const ParamSet& p, size_t base, const EncoderCache& c,
                      const double* dlatent, ParamSet& g) {
  double dh[2 * kHidden];
  dense_backward(p[base + enc::kProjW], c.h, c.latent, dlatent, Act::None,
                 g[base + enc::kProjW], g[base + enc::kProjB], dh);
  std::vector<double> dx(static_cast<size_t>(c.len) * kEmbDim, 0.0);
  LstmRef fwd{p[base + enc::kFwdWx], p[base + enc::kFwdWh], p[base + enc::kFwdB]};
  LstmRef bwd{p[base + enc::kBwdWx], p[base + enc::kBwdWh], p[base + enc::kBwdB]};
  LstmGrad gfwd{g[base + enc::kFwdWx], g[base + enc::kFwdWh], g[base + enc::kFwdB]};
  LstmGrad gbwd{g[base + enc::kBwdWx], g[base + enc::kBwdWh], g[base + enc::kBwdB]};
  bilstm_backward(fwd, bwd, c.bilstm, dh, gfwd, gbwd, dx.data());
  embed_backward(c.seq, c.len, dx.data(), g[base + enc::kEmbedding]);
}

// Classifier head: latent → ReLU hidden → logit → sigmoid.
double classify_forward(const ParamSet& p, size_t base, const double* latent,
                        ForwardCache& c) {
  dense_forward(p[base + 0], p[base + 1], latent, c.cls_hidden, Act::Relu);
  double logit;
  dense_forward(p[base + 2], p[base + 3], c.cls_hidden, &logit, Act::None);
  c.logit = logit;
  c.prob = sigmoid(logit);
  return c.prob;
}

// Returns d(loss)/d(latent) into dlatent given d(loss)/d(logit).
void classify_backward(const ParamSet& p, size_t base, const ForwardCache& c,
                       const double* latent, double dlogit, ParamSet& g, double* dlatent) {
  double dhidden[kClsHidden];
  dense_backward(p[base + 2], c.cls_hidden, &c.logit, &dlogit, Act::None, g[base + 2],
                 g[base + 3], dhidden);
  dense_backward(p[base + 0], latent, c.cls_hidden, dhidden, Act::Relu, g[base + 0],
                 g[base + 1], dlatent);
}

constexpr size_t kSingleClsBase = kEncoderTensors;           // 9
constexpr size_t kGatedStructBase = kEncoderTensors;         // 9
constexpr size_t kGatedGateW = 2 * kEncoderTensors;          // 18
constexpr size_t kGatedGateB = kGatedGateW + 1;              // 19
constexpr size_t kGatedClsBase = kGatedGateW + 2;            // 20

Scheme single_view_scheme(View v) {
  if (v == View::Conv) return Scheme::Conversational;
  if (v == View::Struct) return Scheme::Structural;
  throw ConfigError("gated model has no single scheme");
}

} // namespace

const char* view_name(View v) {
  switch (v) {
    case View::Conv: return "conv";
    case View::Struct: return "struct";
    case View::Gated: return "gated";
  }
  return "?";
}

View view_from_name(const std::string& name) {
  if (name == "conv") return View::Conv;
  if (name == "struct") return View::Struct;
  if (name == "gated") return View::Gated;
  throw ConfigError("unknown view: " + name + " (want conv|struct|gated)");
}

Example make_example(const AgentTrace& trace, const RuleTable& rules) {
  Example ex;
  ex.conv = tokenize_conversational(trace, rules);
  ex.strct = tokenize_structural(trace);
  ex.label = trace.label;
  ex.org_id = trace.org_id;
  return ex;
}

std::vector<Example> make_examples(const std::vector<AgentTrace>& traces,
                                   const RuleTable& rules) {
  std::vector<Example> out;
  out.reserve(traces.size());
  for (const AgentTrace& t : traces) out.push_back(make_example(t, rules));
  return out;
}

Model Model::init(View view, uint64_t seed) {
  Model m;
  m.view = view;
  Rng rng = Rng(seed).fork(0x6d6f64656cULL); // model-init stream
  if (view == View::Gated) {
    add_encoder_tensors(m.params, "conv.", Scheme::Conversational);
    add_encoder_tensors(m.params, "struct.", Scheme::Structural);
    m.params.add("gate_w", Tensor({kLatentDim, 2 * kLatentDim}));
    m.params.add("gate_b", Tensor({kLatentDim}));
    add_classifier_tensors(m.params);
    init_encoder(m.params, 0, vocab_rows(Scheme::Conversational), rng);
    init_encoder(m.params, kGatedStructBase, vocab_rows(Scheme::Structural), rng);
    glorot_fill(m.params[kGatedGateW], 2 * kLatentDim, kLatentDim, rng);
    m.params[kGatedGateB].fill(0.0);
    init_classifier(m.params, kGatedClsBase, rng);
  } else {
    const Scheme scheme = single_view_scheme(view);
    add_encoder_tensors(m.params, "", scheme);
    add_classifier_tensors(m.params);
    init_encoder(m.params, 0, vocab_rows(scheme), rng);
    init_classifier(m.params, kSingleClsBase, rng);
  }
  return m;
}

size_t param_count(View view) {
  return Model::init(view, 0).params.flat_size();
}

double forward_single(const Model& m, const TokenSeq& seq, ForwardCache* cache) {
  if (m.view == View::Gated) throw ConfigError("forward_single called on a gated model");
  if (seq.scheme != single_view_scheme(m.view))
    throw ConfigError("sequence scheme does not match the model view");
  ForwardCache local;
  ForwardCache& c = cache != nullptr ? *cache : local;
  EncoderCache& ec = m.view == View::Conv ? c.conv : c.strct;
  encoder_forward(m.params, 0, seq, ec);
  return classify_forward(m.params, kSingleClsBase, ec.latent, c);
}

double forward_gated(const Model& m, const TokenSeq& conv_seq, const TokenSeq& struct_seq,
                     ForwardCache* cache) {
  if (m.view != View::Gated) throw ConfigError("forward_gated called on a single-view model");
  if (conv_seq.scheme != Scheme::Conversational || struct_seq.scheme != Scheme::Structural)
    throw ConfigError("gated forward needs one conversational and one structural sequence");
  ForwardCache local;
  ForwardCache& c = cache != nullptr ? *cache : local;
  encoder_forward(m.params, 0, conv_seq, c.conv);
  encoder_forward(m.params, kGatedStructBase, struct_seq, c.strct);
  double z[2 * kLatentDim];
  std::memcpy(z, c.conv.latent, sizeof(double) * kLatentDim);
  std::memcpy(z + kLatentDim, c.strct.latent, sizeof(double) * kLatentDim);
  dense_forward(m.params[kGatedGateW], m.params[kGatedGateB], z, c.gate, Act::Sigmoid);
  for (int k = 0; k < kLatentDim; ++k)
    c.fused[k] = c.gate[k] * c.conv.latent[k] + (1.0 - c.gate[k]) * c.strct.latent[k];
  return classify_forward(m.params, kGatedClsBase, c.fused, c);
}

double model_forward(const Model& m, const Example& ex, ForwardCache* cache) {
  switch (m.view) {
    case View::Conv: return forward_single(m, ex.conv, cache);
    case View::Struct: return forward_single(m, ex.strct, cache);
    case View::Gated: return forward_gated(m, ex.conv, ex.strct, cache);
  }
  throw InternalError("unreachable view");
}

double model_loss_grad(const Model& m, const Example& ex, ParamSet& grads) {
  if (!grads.same_layout(m.params)) throw InternalError("gradient layout mismatch");
  ForwardCache c;
  const double prob = model_forward(m, ex, &c);
  const double loss = bce_loss(prob, ex.label);
  const double dlogit = bce_dlogit(prob, ex.label);

  if (m.view != View::Gated) {
    const EncoderCache& ec = m.view == View::Conv ? c.conv : c.strct;
    double dlatent[kLatentDim];
    classify_backward(m.params, kSingleClsBase, c, ec.latent, dlogit, grads, dlatent);
    encoder_backward(m.params, 0, ec, dlatent, grads);
    return loss;
  }

  double dfused[kLatentDim];
  classify_backward(m.params, kGatedClsBase, c, c.fused, dlogit, grads, dfused);
  // fused = g ⊙ conv + (1−g) ⊙ struct
  double dgate[kLatentDim];
  double dconv[kLatentDim];
  double dstruct[kLatentDim];
  for (int k = 0; k < kLatentDim; ++k) {
    dgate[k] = dfused[k] * (c.conv.latent[k] - c.strct.latent[k]);
    dconv[k] = dfused[k] * c.gate[k];
    dstruct[k] = dfused[k] * (1.0 - c.gate[k]);
  }
  double z[2 * kLatentDim];
  std::memcpy(z, c.conv.latent, sizeof(double) * kLatentDim);
  std::memcpy(z + kLatentDim, c.strct.latent, sizeof(double) * kLatentDim);
  double dz[2 * kLatentDim];
  dense_backward(m.params[kGatedGateW], z, c.gate, dgate, Act::Sigmoid,
                 grads[kGatedGateW], grads[kGatedGateB], dz);
  for (int k = 0; k < kLatentDim; ++k) {
    dconv[k] += dz[k];
    dstruct[k] += dz[kLatentDim + k];
  }
  encoder_backward(m.params, 0, c.conv, dconv, grads);
  encoder_backward(m.params, kGatedStructBase, c.strct, dstruct, grads);
  return loss;
}

std::vector<double> predict_batch(const Model& m, const std::vector<Example>& batch) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const Example& ex : batch) out.push_back(model_forward(m, ex));
  return out;
}

} // namespace fedtrace
