#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "fedtrace/rng.hpp"
#include "fedtrace/tensor.hpp"
#include "fedtrace/tokenizer.hpp"

namespace fedtrace {

inline constexpr int kEmbDim = 64;
inline constexpr int kHidden = 64;
inline constexpr int kGateRows = 4 * kHidden; // i, f, g, o stacked in that order
inline constexpr int kLatentDim = 32;
inline constexpr int kClsHidden = 64;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---- embedding ----

// Writes rows table[seq.indices[t]] for t in [0, len) into x (len × kEmbDim).
void embed_forward(const Tensor& table, const TokenSeq& seq, int len, double* x);
void embed_backward(const TokenSeq& seq, int len, const double* dx, Tensor& dtable);

// ---- LSTM ----

// Non-owning views over the three tensors of one cell. Gate rows are stacked
// (input, forget, candidate, output), kHidden each: wx is kGateRows × kEmbDim,
// wh is kGateRows × kHidden, b is kGateRows.
struct LstmRef {
  const Tensor& wx;
  const Tensor& wh;
  const Tensor& b;
};
struct LstmGrad {
  Tensor& wx;
  Tensor& wh;
  Tensor& b;
};

// Everything the backward pass needs, stored per step.
struct LstmCache {
  int len = 0;
  std::vector<double> x;     // len × kEmbDim (input copy)
  std::vector<double> h;     // (len+1) × kHidden, row 0 = initial zeros
  std::vector<double> c;     // (len+1) × kHidden
  std::vector<double> gi, gf, gg, go, tanhc; // len × kHidden
};

// Runs steps 0..len-1 with zero initial states; final hidden is
// cache.h row len. len must be ≥ 1.
void lstm_forward(LstmRef p, const double* x, int len, LstmCache& cache);

// Backprop from a gradient on the final hidden state only. Accumulates into
// grad; accumulates d(loss)/d(input) into dx (len × kEmbDim) when non-null.
void lstm_backward(LstmRef p, const LstmCache& cache, const double* dh_final,
                   LstmGrad grad, double* dx);

// Bidirectional wrapper: forward over x[0..len), backward over the reversed
// prefix; out is concat(final fwd hidden, final bwd hidden), 2×kHidden.
// All-PAD sequences (true_length 0) run as length 1 over the PAD row.
struct BiLstmCache {
  int len = 0;
  LstmCache fwd, bwd;
  std::vector<double> x_rev; // reversed input copy for the backward cell
};
void bilstm_forward(LstmRef fwd, LstmRef bwd, const double* x, int true_length,
                    BiLstmCache& cache, double* out);
void bilstm_backward(LstmRef fwd, LstmRef bwd, const BiLstmCache& cache, const double* dout,
                     LstmGrad gfwd, LstmGrad gbwd, double* dx);

// ---- dense ----

enum class Act { None, Relu, Sigmoid };

// y = act(W x + b); W is m×n, x is n, y is m.
void dense_forward(const Tensor& w, const Tensor& b, const double* x, double* y, Act act);
// Backprop given cached input x and post-activation output y. Accumulates into
// dw/db; writes dx (n) when non-null.
void dense_backward(const Tensor& w, const double* x, const double* y, const double* dy,
                    Act act, Tensor& dw, Tensor& db, double* dx);

// ---- loss ----

inline constexpr double kProbClamp = 1e-7;

double bce_loss(double p, int label);
// d(loss)/dp with the same clamping as bce_loss.
double bce_dp(double p, int label);
// d(loss)/d(logit) for p = sigmoid(logit): the fused, numerically stable form.
inline double bce_dlogit(double p, int label) { return p - static_cast<double>(label); }

// ---- Adam ----

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long long step = 0;
  ParamSet m, v; // first/second moments, mirroring the parameter layout

  static AdamState init(const ParamSet& params) {
    AdamState s;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    return s;
  }
};

// Standard bias-corrected Adam update, in place.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamConfig& cfg);

// ---- initialization ----

// Uniform ±sqrt(6/(fan_in+fan_out)).
void glorot_fill(Tensor& t, int fan_in, int fan_out, Rng& rng);
// Glorot weights; forget-gate bias rows set to +1, other biases 0.
void lstm_init(Tensor& wx, Tensor& wh, Tensor& b, Rng& rng);

// ---- finite-difference gradient checking ----

struct FdResult {
  double max_rel_err = 0.0;
  int coords_checked = 0;
};

// Central finite differences on randomly sampled coordinates of each tensor.
// `loss` must recompute the full objective from current parameter values;
// `analytic` holds d(loss)/d(param) in the same layout. Relative error uses
// a denominator floor so near-zero gradients compare absolutely. A coordinate
// whose error exceeds `tol` is retried at step/8 and step/64 before counting:
// a wrong analytic gradient stays wrong as the step shrinks, while artifacts
// from crossing a ReLU kink at finite step disappear.
FdResult fd_check(const std::function<double()>& loss, ParamSet& params,
                  const ParamSet& analytic, double step, int coords_per_tensor, Rng& rng,
                  double tol = 1e-4);

} // namespace fedtrace
