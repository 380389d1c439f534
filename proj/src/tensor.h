// Copyright 2026 The bwx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Minimal dense-tensor kernel library with tape-based reverse-mode gradients.
// The op set is exactly what the WaveNet needs: dilated (transpose)
// convolutions over [T x C] sequences, the gated activation, pointwise
// nonlinearities, sums, and the fused discretized-logistic-mixture NLL.
// Everything is templated on the scalar so the gradient checker can run the
// identical graph in 64-bit shadow mode.

#ifndef BWX_TENSOR_H_
#define BWX_TENSOR_H_

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "error.h"

namespace bwx::tensor {

template <typename S>
struct TensorT {
  std::vector<int64_t> dims;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> d) : dims(std::move(d)) {
    data.assign(static_cast<size_t>(element_count(dims)), S(0));
  }

  static int64_t element_count(const std::vector<int64_t> &d) {
    int64_t n = 1;
    for (int64_t x : d) {
      if (x <= 0) raise(ErrorCode::kInvalidArgument, "tensor dims must be positive");
      n *= x;
    }
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(size_t i) const { return dims[i]; }
  int64_t rows() const { return dims[0]; }
  int64_t cols() const { return dims.size() > 1 ? dims[1] : 1; }

  S *ptr() { return data.data(); }
  const S *ptr() const { return data.data(); }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }

  bool same_dims(const TensorT &o) const { return dims == o.dims; }
};

using Tensor = TensorT<float>;

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using StridedMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                              0, Eigen::OuterStride<>>;
template <typename S>
using ConstStridedMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
               Eigen::OuterStride<>>;

// ------------------------------------------------------------- parameters

template <typename S>
struct ParameterT {
  std::string name;
  TensorT<S> value;
  TensorT<S> grad;    // sized lazily on first accumulation
  TensorT<S> adam_m;  // sized lazily by the optimizer
  TensorT<S> adam_v;

  ParameterT(std::string n, TensorT<S> v) : name(std::move(n)), value(std::move(v)) {}

  void ensure_grad() {
    if (grad.dims != value.dims) {
      grad = TensorT<S>(value.dims);
    }
  }
  void zero_grad() {
    if (!grad.data.empty()) grad.fill(S(0));
  }
};

using Parameter = ParameterT<float>;

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (learning_rate < 0) raise(ErrorCode::kInvalidArgument, "adam: lr must be >= 0");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      raise(ErrorCode::kInvalidArgument, "adam: betas must be in [0, 1)");
    if (epsilon <= 0) raise(ErrorCode::kInvalidArgument, "adam: epsilon must be > 0");
  }
};

// Bias-corrected Adam update over a parameter set; clears grads afterwards.
template <typename S>
void adam_step(std::vector<ParameterT<S> *> &params, const AdamConfig &config,
               int64_t step) {
  config.validate();
  if (step < 1) raise(ErrorCode::kInvalidArgument, "adam: step must be >= 1");
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  for (ParameterT<S> *p : params) {
    p->ensure_grad();
    if (p->adam_m.dims != p->value.dims) p->adam_m = TensorT<S>(p->value.dims);
    if (p->adam_v.dims != p->value.dims) p->adam_v = TensorT<S>(p->value.dims);
    for (int64_t i = 0; i < p->value.size(); ++i) {
      const double g = static_cast<double>(p->grad.data[i]);
      double m = static_cast<double>(p->adam_m.data[i]);
      double v = static_cast<double>(p->adam_v.data[i]);
      m = config.beta1 * m + (1.0 - config.beta1) * g;
      v = config.beta2 * v + (1.0 - config.beta2) * g * g;
      p->adam_m.data[i] = static_cast<S>(m);
      p->adam_v.data[i] = static_cast<S>(v);
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      p->value.data[i] -=
          static_cast<S>(config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
    }
    p->zero_grad();
  }
}

// ----------------------------------------------------------------- kernels
//
// Sequence tensors are [T x C] row-major. Convolution weights are
// [K x Cin x Cout]; tap k of a causal conv reads input[t - dilation*k], tap k
// of a centered conv reads input[t + dilation*(k - (K-1)/2)].

template <typename S>
void conv1d_forward(const TensorT<S> &in, const TensorT<S> &w, const TensorT<S> *bias,
                    int64_t dilation, bool causal, TensorT<S> &out) {
  const int64_t t_len = in.dim(0), cin = in.dim(1);
  const int64_t k_taps = w.dim(0), cout = w.dim(2);
  if (w.dim(1) != cin)
    raise(ErrorCode::kInvalidArgument, "conv1d: weight Cin mismatch");
  if (bias && bias->size() != cout)
    raise(ErrorCode::kInvalidArgument, "conv1d: bias size mismatch");
  if (dilation < 1) raise(ErrorCode::kInvalidArgument, "conv1d: dilation must be >= 1");
  if (!causal && k_taps % 2 == 0)
    raise(ErrorCode::kInvalidArgument, "conv1d: centered mode needs odd filter size");

  out = TensorT<S>({t_len, cout});
  MatMap<S> o(out.ptr(), t_len, cout);
  if (bias) {
    ConstMatMap<S> b(bias->ptr(), 1, cout);
    o.rowwise() = b.row(0);
  }
  ConstMatMap<S> x(in.ptr(), t_len, cin);
  const int64_t half = causal ? 0 : (k_taps - 1) / 2;
  for (int64_t k = 0; k < k_taps; ++k) {
    // out[t] += in[t + shift] * Wk, with shift = -d*k (causal) or d*(k-half)
    const int64_t shift = causal ? -dilation * k : dilation * (k - half);
    ConstMatMap<S> wk(w.ptr() + k * cin * cout, cin, cout);
    const int64_t t0 = std::max<int64_t>(0, -shift);
    const int64_t t1 = std::min<int64_t>(t_len, t_len - shift);
    if (t0 >= t1) continue;
    o.middleRows(t0, t1 - t0).noalias() +=
        x.middleRows(t0 + shift, t1 - t0) * wk;
  }
}

template <typename S>
void conv1d_backward(const TensorT<S> &in, const TensorT<S> &w, int64_t dilation,
                     bool causal, const TensorT<S> &gout, TensorT<S> *gin,
                     TensorT<S> *gw, TensorT<S> *gbias) {
  const int64_t t_len = in.dim(0), cin = in.dim(1);
  const int64_t k_taps = w.dim(0), cout = w.dim(2);
  ConstMatMap<S> x(in.ptr(), t_len, cin);
  ConstMatMap<S> go(gout.ptr(), t_len, cout);
  const int64_t half = causal ? 0 : (k_taps - 1) / 2;
  for (int64_t k = 0; k < k_taps; ++k) {
    const int64_t shift = causal ? -dilation * k : dilation * (k - half);
    const int64_t t0 = std::max<int64_t>(0, -shift);
    const int64_t t1 = std::min<int64_t>(t_len, t_len - shift);
    if (t0 >= t1) continue;
    ConstMatMap<S> wk(w.ptr() + k * cin * cout, cin, cout);
    if (gin) {
      MatMap<S> gx(gin->ptr(), t_len, cin);
      gx.middleRows(t0 + shift, t1 - t0).noalias() +=
          go.middleRows(t0, t1 - t0) * wk.transpose();
    }
    if (gw) {
      MatMap<S> gwk(gw->ptr() + k * cin * cout, cin, cout);
      gwk.noalias() += x.middleRows(t0 + shift, t1 - t0).transpose() *
                       go.middleRows(t0, t1 - t0);
    }
  }
  if (gbias) {
    MatMap<S> gb(gbias->ptr(), 1, cout);
    gb.row(0) += go.colwise().sum();
  }
}

// Fractionally-strided convolution: zero-stuff by `stride`, then causal conv.
// Output length is exactly T * stride.
template <typename S>
void conv1d_transpose_forward(const TensorT<S> &in, const TensorT<S> &w,
                              const TensorT<S> *bias, int64_t stride, TensorT<S> &out) {
  const int64_t t_len = in.dim(0), cin = in.dim(1);
  const int64_t k_taps = w.dim(0), cout = w.dim(2);
  if (w.dim(1) != cin)
    raise(ErrorCode::kInvalidArgument, "conv1d_transpose: weight Cin mismatch");
  if (stride < 1) raise(ErrorCode::kInvalidArgument, "conv1d_transpose: stride must be >= 1");

  const int64_t out_len = t_len * stride;
  out = TensorT<S>({out_len, cout});
  MatMap<S> o(out.ptr(), out_len, cout);
  if (bias) {
    ConstMatMap<S> b(bias->ptr(), 1, cout);
    o.rowwise() = b.row(0);
  }
  ConstMatMap<S> x(in.ptr(), t_len, cin);
  for (int64_t k = 0; k < k_taps; ++k) {
    // out[t*stride + k] += in[t] * Wk for all t with t*stride + k < out_len
    const int64_t n_rows = t_len - k / stride;
    if (n_rows <= 0) continue;
    StridedMap<S> oview(out.ptr() + k * cout, n_rows, cout,
                        Eigen::OuterStride<>(stride * cout));
    ConstMatMap<S> wk(w.ptr() + k * cin * cout, cin, cout);
    oview.noalias() += x.topRows(n_rows) * wk;
  }
}

template <typename S>
void conv1d_transpose_backward(const TensorT<S> &in, const TensorT<S> &w, int64_t stride,
                               const TensorT<S> &gout, TensorT<S> *gin, TensorT<S> *gw,
                               TensorT<S> *gbias) {
  const int64_t t_len = in.dim(0), cin = in.dim(1);
  const int64_t k_taps = w.dim(0), cout = w.dim(2);
  ConstMatMap<S> x(in.ptr(), t_len, cin);
  for (int64_t k = 0; k < k_taps; ++k) {
    const int64_t n_rows = t_len - k / stride;
    if (n_rows <= 0) continue;
    ConstStridedMap<S> goview(gout.ptr() + k * cout, n_rows, cout,
                              Eigen::OuterStride<>(stride * cout));
    ConstMatMap<S> wk(w.ptr() + k * cin * cout, cin, cout);
    if (gin) {
      MatMap<S> gx(gin->ptr(), t_len, cin);
      gx.topRows(n_rows).noalias() += goview * wk.transpose();
    }
    if (gw) {
      MatMap<S> gwk(gw->ptr() + k * cin * cout, cin, cout);
      gwk.noalias() += x.topRows(n_rows).transpose() * goview;
    }
  }
  if (gbias) {
    MatMap<S> gb(gbias->ptr(), 1, cout);
    ConstMatMap<S> go(gout.ptr(), t_len * stride, cout);
    gb.row(0) += go.colwise().sum();
  }
}

// --------------------------------------------------------------- MoL math
//
// Discretized logistic mixture over 16-bit quantization bins of [-1, 1].
// Per timestep the parameter row is [logits | means | log_scales], K each.
// All per-bin math runs in double regardless of the graph scalar; the stable
// form never subtracts sigmoids directly:
//   log(sig(b) - sig(a)) = -a - softplus(-a) - softplus(-b) + log(-expm1(-(b-a)))

namespace detail {

inline double softplus(double t) {
  if (t > 30.0) return t;
  if (t < -30.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

inline double log_sigmoid(double t) { return -softplus(-t); }

struct BinLogProb {
  double logp;
  double dlogp_da;  // 0 for the lower edge bin
  double dlogp_db;  // 0 for the upper edge bin
  bool edge_lo, edge_hi;
};

// log probability of the width-delta bin centered at x under Logistic(mu, s),
// with edge bins integrating to the infinite tails.
inline BinLogProb bin_log_prob(double x, double mu, double s, double delta) {
  BinLogProb r{};
  const double a = (x - mu - delta / 2.0) / s;
  const double b = (x - mu + delta / 2.0) / s;
  r.edge_lo = x <= -1.0 + delta / 2.0;
  r.edge_hi = x >= 1.0 - delta / 2.0;
  if (r.edge_lo) {
    r.logp = log_sigmoid(b);
    r.dlogp_da = 0.0;
    r.dlogp_db = std::exp(log_sigmoid(-b));  // 1 - sigmoid(b)
    return r;
  }
  if (r.edge_hi) {
    r.logp = log_sigmoid(-a);
    r.dlogp_da = -std::exp(log_sigmoid(a));
    r.dlogp_db = 0.0;
    return r;
  }
  const double width = b - a;  // delta / s > 0
  r.logp = -a - softplus(-a) - softplus(-b) + std::log(-std::expm1(-width));
  // d logP / da = -pdf(a)/P, d logP / db = +pdf(b)/P, with
  // log pdf(t) = log_sigmoid(t) + log_sigmoid(-t)
  const double log_pdf_a = log_sigmoid(a) + log_sigmoid(-a);
  const double log_pdf_b = log_sigmoid(b) + log_sigmoid(-b);
  r.dlogp_da = -std::exp(log_pdf_a - r.logp);
  r.dlogp_db = std::exp(log_pdf_b - r.logp);
  return r;
}

}  // namespace detail

constexpr double kMolBinWidth = 2.0 / 65535.0;  // 16-bit quantization of [-1, 1]
constexpr double kLogScaleMin = -7.0;

// log probability of the quantization bin containing x, for one timestep of
// mixture parameters laid out as [logits K | means K | log_scales K].
double mol_log_prob(double x, std::span<const double> params, int components);

// ------------------------------------------------------------------ tape

template <typename S>
class TapeT {
 public:
  // Leaf holding a copy of a constant input.
  int input(TensorT<S> v) {
    slots_.push_back(Slot{});
    Slot &s = slots_.back();
    s.storage = std::move(v);
    s.v = &s.storage;
    s.needs_grad = false;
    return last_id();
  }

  // Leaf bound to a parameter; gradients accumulate into p->grad.
  int parameter(ParameterT<S> *p) {
    p->ensure_grad();
    slots_.push_back(Slot{});
    Slot &s = slots_.back();
    s.v = &p->value;
    s.gsink = &p->grad;
    s.needs_grad = true;
    return last_id();
  }

  const TensorT<S> &value(int id) const { return *slots_[id].v; }

  // Gradient of the last backward() call w.r.t. slot `id`.
  const TensorT<S> &grad(int id) const {
    const Slot &s = slots_[id];
    return s.gsink ? *s.gsink : s.gstore;
  }

  int conv1d(int in, int w, int bias, int64_t dilation, bool causal) {
    TensorT<S> out;
    conv1d_forward(value(in), value(w), bias >= 0 ? &value(bias) : nullptr, dilation,
                   causal, out);
    const int id = emit(std::move(out), {in, w, bias});
    record([this, in, w, bias, dilation, causal, id] {
      TensorT<S> *gi = wants(in) ? &grad_buf(in) : nullptr;
      TensorT<S> *gw = wants(w) ? &grad_buf(w) : nullptr;
      TensorT<S> *gb = bias >= 0 && wants(bias) ? &grad_buf(bias) : nullptr;
      conv1d_backward(value(in), value(w), dilation, causal, grad_buf(id), gi, gw, gb);
    });
    return id;
  }

  int conv1d_transpose(int in, int w, int bias, int64_t stride) {
    TensorT<S> out;
    conv1d_transpose_forward(value(in), value(w), bias >= 0 ? &value(bias) : nullptr,
                             stride, out);
    const int id = emit(std::move(out), {in, w, bias});
    record([this, in, w, bias, stride, id] {
      TensorT<S> *gi = wants(in) ? &grad_buf(in) : nullptr;
      TensorT<S> *gw = wants(w) ? &grad_buf(w) : nullptr;
      TensorT<S> *gb = bias >= 0 && wants(bias) ? &grad_buf(bias) : nullptr;
      conv1d_transpose_backward(value(in), value(w), stride, grad_buf(id), gi, gw, gb);
    });
    return id;
  }

  // tanh(a) * sigmoid(b), elementwise. The activations are cached for the
  // backward pass; recomputing 4M transcendentals per step dominates the
  // training profile otherwise.
  int gated(int a, int b) {
    const TensorT<S> &ta = value(a), &tb = value(b);
    if (!ta.same_dims(tb)) raise(ErrorCode::kInvalidArgument, "gated: dims mismatch");
    const int64_t n = ta.size();
    auto cache = std::make_shared<std::vector<S>>(2 * n);
    TensorT<S> out(ta.dims);
    S *th_c = cache->data();
    S *sg_c = cache->data() + n;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
      const double th = std::tanh(static_cast<double>(ta.data[i]));
      const double sg = 1.0 / (1.0 + std::exp(-static_cast<double>(tb.data[i])));
      th_c[i] = static_cast<S>(th);
      sg_c[i] = static_cast<S>(sg);
      out.data[i] = static_cast<S>(th * sg);
    }
    const int id = emit(std::move(out), {a, b});
    record([this, a, b, id, cache] {
      const TensorT<S> &go = grad_buf(id);
      TensorT<S> *ga = wants(a) ? &grad_buf(a) : nullptr;
      TensorT<S> *gb = wants(b) ? &grad_buf(b) : nullptr;
      const int64_t n2 = go.size();
      const S *th2 = cache->data();
      const S *sg2 = cache->data() + n2;
      for (int64_t i = 0; i < n2; ++i) {
        const double th = static_cast<double>(th2[i]);
        const double sg = static_cast<double>(sg2[i]);
        const double g = static_cast<double>(go.data[i]);
        if (ga) ga->data[i] += static_cast<S>(g * (1.0 - th * th) * sg);
        if (gb) gb->data[i] += static_cast<S>(g * th * sg * (1.0 - sg));
      }
    });
    return id;
  }

  int add(int a, int b) {
    const TensorT<S> &ta = value(a), &tb = value(b);
    if (!ta.same_dims(tb)) raise(ErrorCode::kInvalidArgument, "add: dims mismatch");
    TensorT<S> out(ta.dims);
    for (int64_t i = 0; i < ta.size(); ++i) out.data[i] = ta.data[i] + tb.data[i];
    const int id = emit(std::move(out), {a, b});
    record([this, a, b, id] {
      const TensorT<S> &go = grad_buf(id);
      if (wants(a)) {
        TensorT<S> &ga = grad_buf(a);
        for (int64_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i];
      }
      if (wants(b)) {
        TensorT<S> &gb = grad_buf(b);
        for (int64_t i = 0; i < go.size(); ++i) gb.data[i] += go.data[i];
      }
    });
    return id;
  }

  int relu(int a) {
    const TensorT<S> &ta = value(a);
    TensorT<S> out(ta.dims);
    // std::max keeps NaN, so structural dependency tracing survives the head
    for (int64_t i = 0; i < ta.size(); ++i) out.data[i] = std::max(ta.data[i], S(0));
    const int id = emit(std::move(out), {a});
    record([this, a, id] {
      if (!wants(a)) return;
      const TensorT<S> &ta2 = value(a), &go = grad_buf(id);
      TensorT<S> &ga = grad_buf(a);
      for (int64_t i = 0; i < ta2.size(); ++i)
        if (ta2.data[i] > S(0)) ga.data[i] += go.data[i];
    });
    return id;
  }

  int tanh_act(int a) {
    const TensorT<S> &ta = value(a);
    TensorT<S> out(ta.dims);
    for (int64_t i = 0; i < ta.size(); ++i)
      out.data[i] = static_cast<S>(std::tanh(static_cast<double>(ta.data[i])));
    const int id = emit(std::move(out), {a});
    record([this, a, id] {
      if (!wants(a)) return;
      const TensorT<S> &to = value(id), &go = grad_buf(id);
      TensorT<S> &ga = grad_buf(a);
      for (int64_t i = 0; i < to.size(); ++i) {
        const double th = static_cast<double>(to.data[i]);
        ga.data[i] += static_cast<S>(static_cast<double>(go.data[i]) * (1.0 - th * th));
      }
    });
    return id;
  }

  // Repeats every row `factor` times: [T x C] -> [T*factor x C].
  int repeat_rows(int a, int64_t factor) {
    const TensorT<S> &ta = value(a);
    if (factor < 1) raise(ErrorCode::kInvalidArgument, "repeat_rows: factor must be >= 1");
    const int64_t t_len = ta.dim(0), c = ta.dim(1);
    TensorT<S> out({t_len * factor, c});
    for (int64_t t = 0; t < t_len; ++t)
      for (int64_t r = 0; r < factor; ++r)
        std::copy_n(ta.ptr() + t * c, c, out.ptr() + (t * factor + r) * c);
    const int id = emit(std::move(out), {a});
    record([this, a, factor, id] {
      if (!wants(a)) return;
      const TensorT<S> &go = grad_buf(id);
      TensorT<S> &ga = grad_buf(a);
      const int64_t t_len2 = ga.dim(0), c2 = ga.dim(1);
      for (int64_t t = 0; t < t_len2; ++t)
        for (int64_t r = 0; r < factor; ++r)
          for (int64_t j = 0; j < c2; ++j)
            ga.data[t * c2 + j] += go.data[(t * factor + r) * c2 + j];
    });
    return id;
  }

  int scale(int a, double k) {
    const TensorT<S> &ta = value(a);
    TensorT<S> out(ta.dims);
    for (int64_t i = 0; i < ta.size(); ++i)
      out.data[i] = static_cast<S>(static_cast<double>(ta.data[i]) * k);
    const int id = emit(std::move(out), {a});
    record([this, a, k, id] {
      if (!wants(a)) return;
      const TensorT<S> &go = grad_buf(id);
      TensorT<S> &ga = grad_buf(a);
      for (int64_t i = 0; i < go.size(); ++i)
        ga.data[i] += static_cast<S>(static_cast<double>(go.data[i]) * k);
    });
    return id;
  }

  // Sum of all elements, as a [1] tensor (accumulated in double).
  int sum(int a) {
    const TensorT<S> &ta = value(a);
    double acc = 0.0;
    for (int64_t i = 0; i < ta.size(); ++i) acc += static_cast<double>(ta.data[i]);
    TensorT<S> out({1});
    out.data[0] = static_cast<S>(acc);
    const int id = emit(std::move(out), {a});
    record([this, a, id] {
      if (!wants(a)) return;
      const S g = grad_buf(id).data[0];
      TensorT<S> &ga = grad_buf(a);
      for (int64_t i = 0; i < ga.size(); ++i) ga.data[i] += g;
    });
    return id;
  }

  // Mean negative log-likelihood of `targets` under per-timestep discretized
  // logistic mixtures. params: [T x 3K]; returns a [1] tensor.
  int mol_nll(int params, std::vector<double> targets, int components) {
    const TensorT<S> &tp = value(params);
    const int64_t t_len = tp.dim(0);
    if (tp.dim(1) != 3 * components)
      raise(ErrorCode::kInvalidArgument, "mol_nll: params row must be 3*components");
    if (static_cast<int64_t>(targets.size()) != t_len)
      raise(ErrorCode::kInvalidArgument, "mol_nll: target length mismatch");

    auto shared = std::make_shared<std::vector<double>>(std::move(targets));
    TensorT<S> out({1});
    out.data[0] = static_cast<S>(mol_nll_forward(tp, *shared, components));
    const int id = emit(std::move(out), {params});
    record([this, params, shared, components, id] {
      if (!wants(params)) return;
      mol_nll_backward(value(params), *shared, components,
                       static_cast<double>(grad_buf(id).data[0]), grad_buf(params));
    });
    return id;
  }

  // Runs reverse-mode accumulation from `loss` (must be a [1] tensor).
  void backward(int loss) {
    if (nodes_.empty() && slots_.empty())
      raise(ErrorCode::kState, "backward: no forward pass recorded");
    if (value(loss).size() != 1)
      raise(ErrorCode::kInvalidArgument, "backward: loss must be scalar");
    grad_buf(loss).data[0] = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  size_t num_slots() const { return slots_.size(); }

 private:
  struct Slot {
    const TensorT<S> *v = nullptr;
    TensorT<S> storage;
    TensorT<S> *gsink = nullptr;  // parameter grad, shared across tapes
    TensorT<S> gstore;
    bool needs_grad = false;
  };

  int last_id() const { return static_cast<int>(slots_.size()) - 1; }

  bool wants(int id) const { return id >= 0 && slots_[id].needs_grad; }

  TensorT<S> &grad_buf(int id) {
    Slot &s = slots_[id];
    if (s.gsink) return *s.gsink;
    if (s.gstore.dims != s.v->dims) s.gstore = TensorT<S>(s.v->dims);
    return s.gstore;
  }

  int emit(TensorT<S> out, std::initializer_list<int> inputs) {
    slots_.push_back(Slot{});
    Slot &s = slots_.back();
    s.storage = std::move(out);
    s.v = &s.storage;
    for (int i : inputs)
      if (i >= 0 && slots_[i].needs_grad) s.needs_grad = true;
    return last_id();
  }

  void record(std::function<void()> fn) {
    if (slots_.back().needs_grad) nodes_.push_back(std::move(fn));
  }

  static double mol_nll_forward(const TensorT<S> &params,
                                const std::vector<double> &targets, int k);
  static void mol_nll_backward(const TensorT<S> &params,
                               const std::vector<double> &targets, int k,
                               double upstream, TensorT<S> &gparams);

  // slots_ grows only via push_back on a deque-like usage pattern; Slot
  // holds its own storage, and `v` pointers into storage stay valid because
  // we never erase. std::deque avoids reallocation moving the storage.
  std::deque<Slot> slots_;
  std::vector<std::function<void()>> nodes_;
};

// Per-timestep mixture evaluation shared by the tape op and the standalone
// mol_log_prob entry point.
struct MolStepScratch {
  std::vector<double> log_w;   // log softmax of logits
  std::vector<double> logp_i;  // per-component bin log prob
  std::vector<detail::BinLogProb> bins;
};

double mol_step_log_prob(const double *row, int k, double x, MolStepScratch &scratch);

template <typename S>
double TapeT<S>::mol_nll_forward(const TensorT<S> &params,
                                 const std::vector<double> &targets, int k) {
  const int64_t t_len = params.dim(0);
  MolStepScratch scratch;
  std::vector<double> row(3 * k);
  double acc = 0.0;
  for (int64_t t = 0; t < t_len; ++t) {
    for (int j = 0; j < 3 * k; ++j)
      row[j] = static_cast<double>(params.data[t * 3 * k + j]);
    acc += mol_step_log_prob(row.data(), k, targets[t], scratch);
  }
  return -acc / static_cast<double>(t_len);
}

template <typename S>
void TapeT<S>::mol_nll_backward(const TensorT<S> &params,
                                const std::vector<double> &targets, int k,
                                double upstream, TensorT<S> &gparams) {
  const int64_t t_len = params.dim(0);
  const double scale = -upstream / static_cast<double>(t_len);
  MolStepScratch scratch;
  std::vector<double> row(3 * k);
  for (int64_t t = 0; t < t_len; ++t) {
    const S *prow = params.data.data() + t * 3 * k;
    for (int j = 0; j < 3 * k; ++j) row[j] = static_cast<double>(prow[j]);
    const double logp = mol_step_log_prob(row.data(), k, targets[t], scratch);

    const std::vector<double> &log_w = scratch.log_w;
    S *g = gparams.data.data() + t * 3 * k;
    for (int i = 0; i < k; ++i) {
      const double r_i = std::exp(log_w[i] + scratch.logp_i[i] - logp);  // posterior
      const double w_i = std::exp(log_w[i]);                             // prior weight
      // d logp / d logit_i = r_i - w_i
      g[i] += static_cast<S>(scale * (r_i - w_i));
      const double s = std::exp(std::max(row[2 * k + i], kLogScaleMin));
      const detail::BinLogProb &bp = scratch.bins[i];
      const double da = bp.dlogp_da, db = bp.dlogp_db;
      // a = (x - mu - d/2)/s, b = (x - mu + d/2)/s
      const double dmu = (da + db) * (-1.0 / s);
      g[k + i] += static_cast<S>(scale * r_i * dmu);
      if (row[2 * k + i] > kLogScaleMin) {
        const double a = (targets[t] - row[k + i] - kMolBinWidth / 2.0) / s;
        const double b = (targets[t] - row[k + i] + kMolBinWidth / 2.0) / s;
        const double dls = da * (-a) + db * (-b);
        g[2 * k + i] += static_cast<S>(scale * r_i * dls);
      }
    }
  }
}

// --------------------------------------------------------------- helpers

// Fan-in scaled uniform init, +-sqrt(1 / (K * Cin)) for conv weights.
template <typename S>
void init_fan_in(TensorT<S> &w, std::mt19937_64 &rng, double gain = 1.0) {
  double fan_in = 1.0;
  if (w.dims.size() == 3) fan_in = static_cast<double>(w.dim(0) * w.dim(1));
  else if (w.dims.size() == 2) fan_in = static_cast<double>(w.dim(0));
  const double bound = gain * std::sqrt(1.0 / fan_in);
  for (auto &v : w.data) {
    // uniform in [-bound, bound) from the top 53 bits
    const double u = static_cast<double>(rng() >> 11) * 0x1p-53;
    v = static_cast<S>((2.0 * u - 1.0) * bound);
  }
}

}  // namespace bwx::tensor

#endif  // BWX_TENSOR_H_
