#include "fedtrace/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace fedtrace {

void axpy(double a, const ParamSet& x, ParamSet& y) {
  if (!x.same_layout(y)) throw InternalError("axpy: parameter layout mismatch");
  for (size_t i = 0; i < x.count(); ++i) {
    const auto& src = x[i].data;
    auto& dst = y[i].data;
    for (size_t k = 0; k < src.size(); ++k) dst[k] += a * src[k];
  }
}

void scale(double a, ParamSet& x) {
  for (size_t i = 0; i < x.count(); ++i)
    for (double& v : x[i].data) v *= a;
}

double l2_norm(const ParamSet& x) {
  double sq = 0.0;
  for (size_t i = 0; i < x.count(); ++i)
    for (double v : x[i].data) sq += v * v;
  return std::sqrt(sq);
}

void embed_forward(const Tensor& table, const TokenSeq& seq, int len, double* x) {
  const int vocab = table.dim(0);
  for (int t = 0; t < len; ++t) {
    const int idx = seq.indices[static_cast<size_t>(t)];
    if (idx < 0 || idx >= vocab) throw InternalError("embedding index out of range");
    std::memcpy(x + static_cast<size_t>(t) * kEmbDim,
                table.data.data() + static_cast<size_t>(idx) * kEmbDim,
                sizeof(double) * kEmbDim);
  }
}

void embed_backward(const TokenSeq& seq, int len, const double* dx, Tensor& dtable) {
  for (int t = 0; t < len; ++t) {
    const int idx = seq.indices[static_cast<size_t>(t)];
    double* row = dtable.data.data() + static_cast<size_t>(idx) * kEmbDim;
    const double* src = dx + static_cast<size_t>(t) * kEmbDim;
    for (int k = 0; k < kEmbDim; ++k) row[k] += src[k];
  }
}

void lstm_forward(LstmRef p, const double* x, int len, LstmCache& cache) {
  if (len < 1) throw InternalError("lstm_forward: len must be >= 1");
  cache.len = len;
  cache.x.assign(static_cast<size_t>(len) * kEmbDim, 0.0);
  std::memcpy(cache.x.data(), x, sizeof(double) * static_cast<size_t>(len) * kEmbDim);
  cache.h.assign(static_cast<size_t>(len + 1) * kHidden, 0.0);
  cache.c.assign(static_cast<size_t>(len + 1) * kHidden, 0.0);
  const size_t step_sz = static_cast<size_t>(len) * kHidden;
  cache.gi.assign(step_sz, 0.0);
  cache.gf.assign(step_sz, 0.0);
  cache.gg.assign(step_sz, 0.0);
  cache.go.assign(step_sz, 0.0);
  cache.tanhc.assign(step_sz, 0.0);

  double pre[kGateRows];
  for (int t = 0; t < len; ++t) {
    const double* xt = x + static_cast<size_t>(t) * kEmbDim;
    const double* hprev = cache.h.data() + static_cast<size_t>(t) * kHidden;
    for (int r = 0; r < kGateRows; ++r) {
      const double* wxr = p.wx.data.data() + static_cast<size_t>(r) * kEmbDim;
      const double* whr = p.wh.data.data() + static_cast<size_t>(r) * kHidden;
      double acc = p.b.data[static_cast<size_t>(r)];
      for (int k = 0; k < kEmbDim; ++k) acc += wxr[k] * xt[k];
      for (int k = 0; k < kHidden; ++k) acc += whr[k] * hprev[k];
      pre[r] = acc;
    }
    double* gi = cache.gi.data() + static_cast<size_t>(t) * kHidden;
    double* gf = cache.gf.data() + static_cast<size_t>(t) * kHidden;
    double* gg = cache.gg.data() + static_cast<size_t>(t) * kHidden;
    double* go = cache.go.data() + static_cast<size_t>(t) * kHidden;
    double* tc = cache.tanhc.data() + static_cast<size_t>(t) * kHidden;
    const double* cprev = cache.c.data() + static_cast<size_t>(t) * kHidden;
    double* cnow = cache.c.data() + static_cast<size_t>(t + 1) * kHidden;
    double* hnow = cache.h.data() + static_cast<size_t>(t + 1) * kHidden;
    for (int k = 0; k < kHidden; ++k) {
      gi[k] = sigmoid(pre[k]);
      gf[k] = sigmoid(pre[kHidden + k]);
      gg[k] = std::tanh(pre[2 * kHidden + k]);
      go[k] = sigmoid(pre[3 * kHidden + k]);
      cnow[k] = gf[k] * cprev[k] + gi[k] * gg[k];
      tc[k] = std::tanh(cnow[k]);
      hnow[k] = go[k] * tc[k];
    }
  }
}

void lstm_backward(LstmRef p, const LstmCache& cache, const double* dh_final,
                   LstmGrad grad, double* dx) {
  const int len = cache.len;
  double dh[kHidden];
  double dc[kHidden];
  std::memcpy(dh, dh_final, sizeof(dh));
  std::fill(dc, dc + kHidden, 0.0);

  double da[kGateRows];
  for (int t = len - 1; t >= 0; --t) {
    const double* gi = cache.gi.data() + static_cast<size_t>(t) * kHidden;
    const double* gf = cache.gf.data() + static_cast<size_t>(t) * kHidden;
    const double* gg = cache.gg.data() + static_cast<size_t>(t) * kHidden;
    const double* go = cache.go.data() + static_cast<size_t>(t) * kHidden;
    const double* tc = cache.tanhc.data() + static_cast<size_t>(t) * kHidden;
    const double* cprev = cache.c.data() + static_cast<size_t>(t) * kHidden;
    const double* hprev = cache.h.data() + static_cast<size_t>(t) * kHidden;
    const double* xt = cache.x.data() + static_cast<size_t>(t) * kEmbDim;

    for (int k = 0; k < kHidden; ++k) {
      const double d_out = dh[k] * tc[k];
      const double dct = dc[k] + dh[k] * go[k] * (1.0 - tc[k] * tc[k]);
      const double d_in = dct * gg[k];
      const double d_forget = dct * cprev[k];
      const double d_cand = dct * gi[k];
      da[k] = d_in * gi[k] * (1.0 - gi[k]);
      da[kHidden + k] = d_forget * gf[k] * (1.0 - gf[k]);
      da[2 * kHidden + k] = d_cand * (1.0 - gg[k] * gg[k]);
      da[3 * kHidden + k] = d_out * go[k] * (1.0 - go[k]);
      dc[k] = dct * gf[k]; // becomes dc_{t-1}
    }
    for (int r = 0; r < kGateRows; ++r) {
      const double a = da[r];
      double* gwx = grad.wx.data.data() + static_cast<size_t>(r) * kEmbDim;
      double* gwh = grad.wh.data.data() + static_cast<size_t>(r) * kHidden;
      for (int k = 0; k < kEmbDim; ++k) gwx[k] += a * xt[k];
      for (int k = 0; k < kHidden; ++k) gwh[k] += a * hprev[k];
      grad.b.data[static_cast<size_t>(r)] += a;
    }
    // dh_{t-1} = wh^T da; dx_t = wx^T da
    std::fill(dh, dh + kHidden, 0.0);
    for (int r = 0; r < kGateRows; ++r) {
      const double a = da[r];
      const double* whr = p.wh.data.data() + static_cast<size_t>(r) * kHidden;
      for (int k = 0; k < kHidden; ++k) dh[k] += a * whr[k];
    }
    if (dx != nullptr) {
      double* dxt = dx + static_cast<size_t>(t) * kEmbDim;
      for (int r = 0; r < kGateRows; ++r) {
        const double a = da[r];
        const double* wxr = p.wx.data.data() + static_cast<size_t>(r) * kEmbDim;
        for (int k = 0; k < kEmbDim; ++k) dxt[k] += a * wxr[k];
      }
    }
  }
}

void bilstm_forward(LstmRef fwd, LstmRef bwd, const double* x, int true_length,
                    BiLstmCache& cache, double* out) {
  const int len = std::max(1, true_length);
  cache.len = len;
  lstm_forward(fwd, x, len, cache.fwd);
  cache.x_rev.assign(static_cast<size_t>(len) * kEmbDim, 0.0);
  for (int t = 0; t < len; ++t)
    std::memcpy(cache.x_rev.data() + static_cast<size_t>(t) * kEmbDim,
                x + static_cast<size_t>(len - 1 - t) * kEmbDim, sizeof(double) * kEmbDim);
  lstm_forward(bwd, cache.x_rev.data(), len, cache.bwd);
  std::memcpy(out, cache.fwd.h.data() + static_cast<size_t>(len) * kHidden,
              sizeof(double) * kHidden);
  std::memcpy(out + kHidden, cache.bwd.h.data() + static_cast<size_t>(len) * kHidden,
              sizeof(double) * kHidden);
}

void bilstm_backward(LstmRef fwd, LstmRef bwd, const BiLstmCache& cache, const double* dout,
                     LstmGrad gfwd, LstmGrad gbwd, double* dx) {
  const int len = cache.len;
  lstm_backward(fwd, cache.fwd, dout, gfwd, dx);
  std::vector<double> dx_rev;
  double* dx_rev_ptr = nullptr;
  if (dx != nullptr) {
    dx_rev.assign(static_cast<size_t>(len) * kEmbDim, 0.0);
    dx_rev_ptr = dx_rev.data();
  }
  lstm_backward(bwd, cache.bwd, dout + kHidden, gbwd, dx_rev_ptr);
  if (dx != nullptr) {
    for (int t = 0; t < len; ++t) {
      const double* src = dx_rev.data() + static_cast<size_t>(t) * kEmbDim;
      double* dst = dx + static_cast<size_t>(len - 1 - t) * kEmbDim;
      for (int k = 0; k < kEmbDim; ++k) dst[k] += src[k];
    }
  }
}

void dense_forward(const Tensor& w, const Tensor& b, const double* x, double* y, Act act) {
  const int m = w.dim(0);
  const int n = w.dim(1);
  if (b.dim(0) != m) throw InternalError("dense_forward: bias shape mismatch");
  for (int r = 0; r < m; ++r) {
    const double* wr = w.data.data() + static_cast<size_t>(r) * n;
    double acc = b.data[static_cast<size_t>(r)];
    for (int k = 0; k < n; ++k) acc += wr[k] * x[k];
    switch (act) {
      case Act::None: y[r] = acc; break;
      case Act::Relu: y[r] = acc > 0.0 ? acc : 0.0; break;
      case Act::Sigmoid: y[r] = sigmoid(acc); break;
    }
  }
}

void dense_backward(const Tensor& w, const double* x, const double* y, const double* dy,
                    Act act, Tensor& dw, Tensor& db, double* dx) {
  const int m = w.dim(0);
  const int n = w.dim(1);
  if (dx != nullptr) std::fill(dx, dx + n, 0.0);
  for (int r = 0; r < m; ++r) {
    double dpre = dy[r];
    switch (act) {
      case Act::None: break;
      case Act::Relu: dpre = y[r] > 0.0 ? dpre : 0.0; break;
      case Act::Sigmoid: dpre = dpre * y[r] * (1.0 - y[r]); break;
    }
    if (dpre == 0.0) continue;
    double* dwr = dw.data.data() + static_cast<size_t>(r) * n;
    const double* wr = w.data.data() + static_cast<size_t>(r) * n;
    for (int k = 0; k < n; ++k) dwr[k] += dpre * x[k];
    db.data[static_cast<size_t>(r)] += dpre;
    if (dx != nullptr)
      for (int k = 0; k < n; ++k) dx[k] += dpre * wr[k];
  }
}

double bce_loss(double p, int label) {
  const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return label == 1 ? -std::log(q) : -std::log(1.0 - q);
}

double bce_dp(double p, int label) {
  const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return label == 1 ? -1.0 / q : 1.0 / (1.0 - q);
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamConfig& cfg) {
  if (!params.same_layout(grads) || !params.same_layout(state.m))
    throw InternalError("adam_step: layout mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.count(); ++i) {
    auto& p = params[i].data;
    const auto& g = grads[i].data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    for (size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void glorot_fill(Tensor& t, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
  for (double& v : t.data) v = (rng.uniform() * 2.0 - 1.0) * bound;
}

void lstm_init(Tensor& wx, Tensor& wh, Tensor& b, Rng& rng) {
  glorot_fill(wx, kEmbDim, kHidden, rng);
  glorot_fill(wh, kHidden, kHidden, rng);
  b.fill(0.0);
  for (int k = 0; k < kHidden; ++k) b.data[static_cast<size_t>(kHidden + k)] = 1.0;
}

FdResult fd_check(const std::function<double()>& loss, ParamSet& params,
                  const ParamSet& analytic, double step, int coords_per_tensor, Rng& rng,
                  double tol) {
  if (!params.same_layout(analytic)) throw InternalError("fd_check: layout mismatch");
  FdResult result;
  for (size_t i = 0; i < params.count(); ++i) {
    auto& data = params[i].data;
    const auto& grad = analytic[i].data;
    const int probes = std::min<int>(coords_per_tensor, static_cast<int>(data.size()));
    for (int n = 0; n < probes; ++n) {
      const size_t k = static_cast<size_t>(rng.uniform_int(data.size()));
      double best = 0.0;
      for (double h : {step, step / 8.0, step / 64.0}) {
        const double saved = data[k];
        data[k] = saved + h;
        const double up = loss();
        data[k] = saved - h;
        const double down = loss();
        data[k] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad[k]), 1e-2});
        best = std::abs(fd - grad[k]) / denom;
        if (best < tol) break;
      }
      result.max_rel_err = std::max(result.max_rel_err, best);
      result.coords_checked += 1;
    }
  }
  return result;
}

} // namespace fedtrace
