#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <limits>

#include "m2a/tensor.hpp"

namespace m2a {

namespace detail {

/// Wire `out` into the graph when grad recording is on and at least one
/// input requires grad. Inputs that do not require grad are still kept so
/// backprop closures can read their values.
template <class S>
void attach(TensorT<S>& out, const char* op,
            std::initializer_list<const TensorT<S>*> ins,
            std::function<void(Node<S>&)> fn) {
  if (!grad_enabled()) return;
  bool any = false;
  for (const TensorT<S>* t : ins)
    if (t->requires_grad()) any = true;
  if (!any) return;
  auto& n = *out.node();
  n.op = op;
  n.inputs.reserve(ins.size());
  for (const TensorT<S>* t : ins) n.inputs.push_back(t->node());
  n.backprop = std::move(fn);
  out.set_requires_grad(true);
}

template <class S>
void check_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
  if (a.shape() != b.shape())
    fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
}

inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape(a, b, "add");
  auto out = TensorT<S>::zeros(a.shape());
  const S* av = a.data();
  const S* bv = b.data();
  S* ov = out.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
  detail::attach<S>(out, "add", {&a, &b}, [](detail::Node<S>& nd) {
    for (int k = 0; k < 2; ++k) {
      auto& in = *nd.inputs[k];
      if (!in.requires_grad) continue;
      for (std::size_t i = 0; i < nd.grad.size(); ++i) in.grad[i] += nd.grad[i];
    }
  });
  return out;
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape(a, b, "sub");
  auto out = TensorT<S>::zeros(a.shape());
  const S* av = a.data();
  const S* bv = b.data();
  S* ov = out.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] - bv[i];
  detail::attach<S>(out, "sub", {&a, &b}, [](detail::Node<S>& nd) {
    auto& ia = *nd.inputs[0];
    auto& ib = *nd.inputs[1];
    if (ia.requires_grad)
      for (std::size_t i = 0; i < nd.grad.size(); ++i) ia.grad[i] += nd.grad[i];
    if (ib.requires_grad)
      for (std::size_t i = 0; i < nd.grad.size(); ++i) ib.grad[i] -= nd.grad[i];
  });
  return out;
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape(a, b, "mul");
  auto out = TensorT<S>::zeros(a.shape());
  const S* av = a.data();
  const S* bv = b.data();
  S* ov = out.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
  detail::attach<S>(out, "mul", {&a, &b}, [](detail::Node<S>& nd) {
    auto& ia = *nd.inputs[0];
    auto& ib = *nd.inputs[1];
    if (ia.requires_grad)
      for (std::size_t i = 0; i < nd.grad.size(); ++i) ia.grad[i] += nd.grad[i] * ib.value[i];
    if (ib.requires_grad)
      for (std::size_t i = 0; i < nd.grad.size(); ++i) ib.grad[i] += nd.grad[i] * ia.value[i];
  });
  return out;
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, double s) {
  auto out = TensorT<S>::zeros(a.shape());
  const S* av = a.data();
  S* ov = out.data();
  const S sv = static_cast<S>(s);
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] * sv;
  detail::attach<S>(out, "scale", {&a}, [sv](detail::Node<S>& nd) {
    auto& in = *nd.inputs[0];
    for (std::size_t i = 0; i < nd.grad.size(); ++i) in.grad[i] += nd.grad[i] * sv;
  });
  return out;
}

template <class S>
TensorT<S> sigmoid(const TensorT<S>& a) {
  auto out = TensorT<S>::zeros(a.shape());
  const S* av = a.data();
  S* ov = out.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    const S x = av[i];
    // branch keeps exp() argument non-positive for stability
    ov[i] = x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                      : std::exp(x) / (S(1) + std::exp(x));
  }
  detail::attach<S>(out, "sigmoid", {&a}, [](detail::Node<S>& nd) {
    auto& in = *nd.inputs[0];
    for (std::size_t i = 0; i < nd.grad.size(); ++i) {
      const S y = nd.value[i];
      in.grad[i] += nd.grad[i] * y * (S(1) - y);
    }
  });
  return out;
}

template <class S>
TensorT<S> relu(const TensorT<S>& a) {
  auto out = TensorT<S>::zeros(a.shape());
  const S* av = a.data();
  S* ov = out.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] > S(0) ? av[i] : S(0);
  detail::attach<S>(out, "relu", {&a}, [](detail::Node<S>& nd) {
    auto& in = *nd.inputs[0];
    for (std::size_t i = 0; i < nd.grad.size(); ++i)
      if (in.value[i] > S(0)) in.grad[i] += nd.grad[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> reshape(const TensorT<S>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    fail("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto out = TensorT<S>::from(std::move(shape), a.values());
  detail::attach<S>(out, "reshape", {&a}, [](detail::Node<S>& nd) {
    auto& in = *nd.inputs[0];
    for (std::size_t i = 0; i < nd.grad.size(); ++i) in.grad[i] += nd.grad[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

namespace detail {

// C[m,n] += A[m,k] * B[k,n], row-major, j innermost for contiguous FMA.
template <class S>
void gemm_acc(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    S* crow = c + static_cast<std::int64_t>(i) * n;
    const S* arow = a + static_cast<std::int64_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const S aik = arow[p];
      const S* brow = b + static_cast<std::int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

// C[m,k] += A[m,n] * B[k,n]^T  (i.e. dot products of rows)
template <class S>
void gemm_nt_acc(const S* a, const S* b, S* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<std::int64_t>(i) * n;
    S* crow = c + static_cast<std::int64_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const S* brow = b + static_cast<std::int64_t>(p) * n;
      S acc = S(0);
      for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
template <class S>
void gemm_tn_acc(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<std::int64_t>(i) * k;
    const S* brow = b + static_cast<std::int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const S aik = arow[p];
      S* crow = c + static_cast<std::int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

}  // namespace detail

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0))
    fail("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int m = a.extent(0), k = a.extent(1), n = b.extent(1);
  auto out = TensorT<S>::zeros({m, n});
  detail::gemm_acc(a.data(), b.data(), out.data(), m, k, n);
  detail::attach<S>(out, "matmul", {&a, &b}, [m, k, n](detail::Node<S>& nd) {
    auto& ia = *nd.inputs[0];
    auto& ib = *nd.inputs[1];
    if (ia.requires_grad) detail::gemm_nt_acc(nd.grad.data(), ib.value.data(), ia.grad.data(), m, n, k);
    if (ib.requires_grad) detail::gemm_tn_acc(ia.value.data(), nd.grad.data(), ib.grad.data(), m, k, n);
  });
  return out;
}

template <class S>
TensorT<S> transpose2d(const TensorT<S>& a) {
  if (a.rank() != 2) fail("transpose2d: rank-2 tensor required, got " + shape_str(a.shape()));
  const int m = a.extent(0), n = a.extent(1);
  auto out = TensorT<S>::zeros({n, m});
  const S* av = a.data();
  S* ov = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) ov[j * m + i] = av[i * n + j];
  detail::attach<S>(out, "transpose2d", {&a}, [m, n](detail::Node<S>& nd) {
    auto& in = *nd.inputs[0];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) in.grad[i * n + j] += nd.grad[j * m + i];
  });
  return out;
}

/// Batched matmul: (B,m,k) x (B,k,n) -> (B,m,n).
template <class S>
TensorT<S> bmm(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.extent(0) != b.extent(0) || a.extent(2) != b.extent(1))
    fail("bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int B = a.extent(0), m = a.extent(1), k = a.extent(2), n = b.extent(2);
  auto out = TensorT<S>::zeros({B, m, n});
  for (int q = 0; q < B; ++q)
    detail::gemm_acc(a.data() + std::int64_t(q) * m * k, b.data() + std::int64_t(q) * k * n,
                     out.data() + std::int64_t(q) * m * n, m, k, n);
  detail::attach<S>(out, "bmm", {&a, &b}, [B, m, k, n](detail::Node<S>& nd) {
    auto& ia = *nd.inputs[0];
    auto& ib = *nd.inputs[1];
    for (int q = 0; q < B; ++q) {
      const S* g = nd.grad.data() + std::int64_t(q) * m * n;
      if (ia.requires_grad)
        detail::gemm_nt_acc(g, ib.value.data() + std::int64_t(q) * k * n,
                            ia.grad.data() + std::int64_t(q) * m * k, m, n, k);
      if (ib.requires_grad)
        detail::gemm_tn_acc(ia.value.data() + std::int64_t(q) * m * k, g,
                            ib.grad.data() + std::int64_t(q) * k * n, m, k, n);
    }
  });
  return out;
}

/// Batched transpose of the trailing two axes: (B,m,n) -> (B,n,m).
template <class S>
TensorT<S> btranspose(const TensorT<S>& a) {
  if (a.rank() != 3) fail("btranspose: rank-3 tensor required, got " + shape_str(a.shape()));
  const int B = a.extent(0), m = a.extent(1), n = a.extent(2);
  auto out = TensorT<S>::zeros({B, n, m});
  const S* av = a.data();
  S* ov = out.data();
  for (int q = 0; q < B; ++q)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        ov[(std::int64_t(q) * n + j) * m + i] = av[(std::int64_t(q) * m + i) * n + j];
  detail::attach<S>(out, "btranspose", {&a}, [B, m, n](detail::Node<S>& nd) {
    auto& in = *nd.inputs[0];
    for (int q = 0; q < B; ++q)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          in.grad[(std::int64_t(q) * m + i) * n + j] += nd.grad[(std::int64_t(q) * n + j) * m + i];
  });
  return out;
}

/// Broadcast-add a rank-1 bias over the last axis.
template <class S>
TensorT<S> add_channel_bias(const TensorT<S>& x, const TensorT<S>& b) {
  if (b.rank() != 1 || x.extent(x.rank() - 1) != b.extent(0))
    fail("add_channel_bias: bias " + shape_str(b.shape()) + " does not match last axis of " +
         shape_str(x.shape()));
  const int c = b.extent(0);
  const std::int64_t rows = x.numel() / c;
  auto out = TensorT<S>::zeros(x.shape());
  const S* xv = x.data();
  const S* bv = b.data();
  S* ov = out.data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j) ov[r * c + j] = xv[r * c + j] + bv[j];
  detail::attach<S>(out, "add_channel_bias", {&x, &b}, [rows, c](detail::Node<S>& nd) {
    auto& ix = *nd.inputs[0];
    auto& ib = *nd.inputs[1];
    if (ix.requires_grad)
      for (std::size_t i = 0; i < nd.grad.size(); ++i) ix.grad[i] += nd.grad[i];
    if (ib.requires_grad)
      for (std::int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) ib.grad[j] += nd.grad[r * c + j];
  });
  return out;
}

/// x (N,in) * w (in,out) + b.
template <class S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
  return add_channel_bias(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// 2D cross-correlation over the trailing (H,W,Cin) axes; all leading axes
/// are treated as a batch of frames. Weights are (kh,kw,Cin,Cout).
template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, int stride = 1, int pad = 0) {
  if (x.rank() < 3) fail("conv2d: input rank must be >= 3, got " + shape_str(x.shape()));
  if (w.rank() != 4) fail("conv2d: weights must be (kh,kw,Cin,Cout), got " + shape_str(w.shape()));
  if (stride < 1) fail("conv2d: stride must be >= 1");
  if (pad < 0) fail("conv2d: padding must be >= 0");
  const int H = x.extent(x.rank() - 3), W = x.extent(x.rank() - 2), CI = x.extent(x.rank() - 1);
  const int KH = w.extent(0), KW = w.extent(1), CO = w.extent(3);
  if (w.extent(2) != CI)
    fail("conv2d: channel mismatch, input " + shape_str(x.shape()) + " vs weights " +
         shape_str(w.shape()));
  if (KH > H + 2 * pad || KW > W + 2 * pad)
    fail("conv2d: kernel does not fit padded input");
  const int F = static_cast<int>(x.numel() / (std::int64_t(H) * W * CI));
  const int HO = (H + 2 * pad - KH) / stride + 1;
  const int WO = (W + 2 * pad - KW) / stride + 1;

  Shape oshape(x.shape());
  oshape[oshape.size() - 3] = HO;
  oshape[oshape.size() - 2] = WO;
  oshape[oshape.size() - 1] = CO;
  auto out = TensorT<S>::zeros(oshape);

  const S* xv = x.data();
  const S* wv = w.data();
  S* ov = out.data();
  for (int f = 0; f < F; ++f)
    for (int ho = 0; ho < HO; ++ho)
      for (int kh = 0; kh < KH; ++kh) {
        const int hi = ho * stride - pad + kh;
        if (hi < 0 || hi >= H) continue;
        for (int kw = 0; kw < KW; ++kw) {
          // wi = wo*stride - pad + kw must land in [0,W)
          const int wo_lo = std::max(0, detail::ceil_div(pad - kw, stride));
          const int wo_hi = std::min(WO, (W - 1 + pad - kw) / stride + 1);
          const S* wbase = wv + (std::int64_t(kh) * KW + kw) * CI * CO;
          for (int wo = wo_lo; wo < wo_hi; ++wo) {
            const int wi = wo * stride - pad + kw;
            const S* xrow = xv + ((std::int64_t(f) * H + hi) * W + wi) * CI;
            S* orow = ov + ((std::int64_t(f) * HO + ho) * WO + wo) * CO;
            for (int ci = 0; ci < CI; ++ci) {
              const S a = xrow[ci];
              const S* wrow = wbase + std::int64_t(ci) * CO;
              for (int co = 0; co < CO; ++co) orow[co] += a * wrow[co];
            }
          }
        }
      }

  detail::attach<S>(out, "conv2d", {&x, &w},
                    [F, H, W, CI, KH, KW, CO, HO, WO, stride, pad](detail::Node<S>& nd) {
    auto& ix = *nd.inputs[0];
    auto& iw = *nd.inputs[1];
    const S* g = nd.grad.data();
    const S* xv = ix.value.data();
    const S* wv = iw.value.data();
    for (int f = 0; f < F; ++f)
      for (int ho = 0; ho < HO; ++ho)
        for (int kh = 0; kh < KH; ++kh) {
          const int hi = ho * stride - pad + kh;
          if (hi < 0 || hi >= H) continue;
          for (int kw = 0; kw < KW; ++kw) {
            const int wo_lo = std::max(0, detail::ceil_div(pad - kw, stride));
            const int wo_hi = std::min(WO, (W - 1 + pad - kw) / stride + 1);
            const std::int64_t wofs = (std::int64_t(kh) * KW + kw) * CI * CO;
            for (int wo = wo_lo; wo < wo_hi; ++wo) {
              const int wi = wo * stride - pad + kw;
              const std::int64_t xofs = ((std::int64_t(f) * H + hi) * W + wi) * CI;
              const S* grow = g + ((std::int64_t(f) * HO + ho) * WO + wo) * CO;
              if (ix.requires_grad) {
                S* dxrow = ix.grad.data() + xofs;
                for (int ci = 0; ci < CI; ++ci) {
                  const S* wrow = wv + wofs + std::int64_t(ci) * CO;
                  S acc = S(0);
                  for (int co = 0; co < CO; ++co) acc += grow[co] * wrow[co];
                  dxrow[ci] += acc;
                }
              }
              if (iw.requires_grad) {
                const S* xrow = xv + xofs;
                S* dwbase = iw.grad.data() + wofs;
                for (int ci = 0; ci < CI; ++ci) {
                  const S a = xrow[ci];
                  S* dwrow = dwbase + std::int64_t(ci) * CO;
                  for (int co = 0; co < CO; ++co) dwrow[co] += a * grow[co];
                }
              }
            }
          }
        }
  });
  return out;
}

template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias,
                  int stride = 1, int pad = 0) {
  return add_channel_bias(conv2d(x, w, stride, pad), bias);
}

// ---------------------------------------------------------------------------
// Softmax / layer norm
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> softmax(const TensorT<S>& x, int axis) {
  if (axis < 0 || axis >= x.rank())
    fail("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  const int len = x.extent(axis);
  std::int64_t inner = 1, outer = 1;
  for (int a = axis + 1; a < x.rank(); ++a) inner *= x.extent(a);
  for (int a = 0; a < axis; ++a) outer *= x.extent(a);

  auto out = TensorT<S>::zeros(x.shape());
  const S* xv = x.data();
  S* ov = out.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      const std::int64_t base = o * len * inner + i;
      S mx = xv[base];
      for (int t = 1; t < len; ++t) mx = std::max(mx, xv[base + t * inner]);
      if (std::isnan(static_cast<double>(mx))) fail("softmax: NaN input");
      S sum = S(0);
      for (int t = 0; t < len; ++t) {
        const S e = std::exp(xv[base + t * inner] - mx);
        ov[base + t * inner] = e;
        sum += e;
      }
      for (int t = 0; t < len; ++t) ov[base + t * inner] /= sum;
    }

  detail::attach<S>(out, "softmax", {&x}, [len, inner, outer](detail::Node<S>& nd) {
    auto& in = *nd.inputs[0];
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t i = 0; i < inner; ++i) {
        const std::int64_t base = o * len * inner + i;
        S dot = S(0);
        for (int t = 0; t < len; ++t) dot += nd.grad[base + t * inner] * nd.value[base + t * inner];
        for (int t = 0; t < len; ++t) {
          const std::int64_t k = base + t * inner;
          in.grad[k] += nd.value[k] * (nd.grad[k] - dot);
        }
      }
  });
  return out;
}

/// Normalize over the trailing `normalized_axes` (must be the contiguous
/// trailing run of axes). gamma/beta either span the full normalized extent
/// or are per-channel over the last axis.
template <class S>
TensorT<S> layer_norm(const TensorT<S>& x, const std::vector<int>& normalized_axes,
                      const TensorT<S>& gamma, const TensorT<S>& beta, double eps = 1e-5) {
  const int r = x.rank();
  if (normalized_axes.empty()) fail("layer_norm: empty normalized axis list");
  for (std::size_t i = 0; i < normalized_axes.size(); ++i)
    if (normalized_axes[i] != r - static_cast<int>(normalized_axes.size()) + static_cast<int>(i))
      fail("layer_norm: normalized axes must be the trailing axes of " + shape_str(x.shape()));
  std::int64_t inner = 1;
  for (int a : normalized_axes) inner *= x.extent(a);
  if (inner == 0) fail("layer_norm: zero normalized extent");
  const std::int64_t rows = x.numel() / inner;
  const int C = x.extent(r - 1);
  const bool per_channel = gamma.numel() == C && inner != C;
  if (!(gamma.numel() == inner || per_channel) || gamma.shape() != beta.shape())
    fail("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
         " do not match normalized extent " + std::to_string(inner));
  const std::int64_t gmod = per_channel ? C : inner;

  auto out = TensorT<S>::zeros(x.shape());
  const S* xv = x.data();
  const S* gv = gamma.data();
  const S* bv = beta.data();
  S* ov = out.data();
  const S epsd = static_cast<S>(eps);
  for (std::int64_t rr = 0; rr < rows; ++rr) {
    const S* row = xv + rr * inner;
    S* orow = ov + rr * inner;
    S mean = S(0);
    for (std::int64_t j = 0; j < inner; ++j) mean += row[j];
    mean /= static_cast<S>(inner);
    S var = S(0);
    for (std::int64_t j = 0; j < inner; ++j) {
      const S d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<S>(inner);
    const S inv = S(1) / std::sqrt(var + epsd);
    for (std::int64_t j = 0; j < inner; ++j)
      orow[j] = gv[j % gmod] * (row[j] - mean) * inv + bv[j % gmod];
  }

  detail::attach<S>(out, "layer_norm", {&x, &gamma, &beta},
                    [rows, inner, gmod, epsd](detail::Node<S>& nd) {
    auto& ix = *nd.inputs[0];
    auto& ig = *nd.inputs[1];
    auto& ib = *nd.inputs[2];
    std::vector<S> xhat(static_cast<std::size_t>(inner));
    for (std::int64_t rr = 0; rr < rows; ++rr) {
      const S* row = ix.value.data() + rr * inner;
      const S* grow = nd.grad.data() + rr * inner;
      S mean = S(0);
      for (std::int64_t j = 0; j < inner; ++j) mean += row[j];
      mean /= static_cast<S>(inner);
      S var = S(0);
      for (std::int64_t j = 0; j < inner; ++j) {
        const S d = row[j] - mean;
        var += d * d;
      }
      var /= static_cast<S>(inner);
      const S inv = S(1) / std::sqrt(var + epsd);
      for (std::int64_t j = 0; j < inner; ++j) xhat[j] = (row[j] - mean) * inv;
      if (ig.requires_grad)
        for (std::int64_t j = 0; j < inner; ++j) ig.grad[j % gmod] += grow[j] * xhat[j];
      if (ib.requires_grad)
        for (std::int64_t j = 0; j < inner; ++j) ib.grad[j % gmod] += grow[j];
      if (ix.requires_grad) {
        // dxhat = g*gamma; dx = inv*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
        S m1 = S(0), m2 = S(0);
        for (std::int64_t j = 0; j < inner; ++j) {
          const S dxh = grow[j] * ig.value[j % gmod];
          m1 += dxh;
          m2 += dxh * xhat[j];
        }
        m1 /= static_cast<S>(inner);
        m2 /= static_cast<S>(inner);
        S* dxrow = ix.grad.data() + rr * inner;
        for (std::int64_t j = 0; j < inner; ++j) {
          const S dxh = grow[j] * ig.value[j % gmod];
          dxrow[j] += inv * (dxh - m1 - xhat[j] * m2);
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

enum class ReduceKind { Mean, Sum, Max };

template <class S>
TensorT<S> reduce(const TensorT<S>& x, std::vector<int> axes, ReduceKind kind) {
  if (axes.empty()) {  // identity per contract
    auto out = TensorT<S>::from(x.shape(), x.values());
    detail::attach<S>(out, "reduce_id", {&x}, [](detail::Node<S>& nd) {
      auto& in = *nd.inputs[0];
      for (std::size_t i = 0; i < nd.grad.size(); ++i) in.grad[i] += nd.grad[i];
    });
    return out;
  }
  std::sort(axes.begin(), axes.end());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] < 0 || axes[i] >= x.rank())
      fail("reduce: axis " + std::to_string(axes[i]) + " out of range for " + shape_str(x.shape()));
    if (i && axes[i] == axes[i - 1]) fail("reduce: duplicate axis " + std::to_string(axes[i]));
  }

  const int r = x.rank();
  Shape oshape;
  std::vector<bool> reduced(static_cast<std::size_t>(r), false);
  for (int a : axes) reduced[static_cast<std::size_t>(a)] = true;
  for (int a = 0; a < r; ++a)
    if (!reduced[static_cast<std::size_t>(a)]) oshape.push_back(x.extent(a));
  if (oshape.empty()) oshape.push_back(1);

  // Per-axis strides into the flattened output (0 for reduced axes).
  std::vector<std::int64_t> ostride(static_cast<std::size_t>(r), 0);
  {
    std::int64_t s = 1;
    for (int a = r - 1; a >= 0; --a) {
      if (!reduced[static_cast<std::size_t>(a)]) {
        ostride[static_cast<std::size_t>(a)] = s;
        s *= x.extent(a);
      }
    }
  }

  std::int64_t n_red = 1;
  for (int a : axes) n_red *= x.extent(a);

  const std::int64_t onumel = shape_numel(oshape);
  auto out = TensorT<S>::zeros(oshape);
  S* ov = out.data();
  const S* xv = x.data();

  // Shared iteration: walk every input element, maintaining its output slot.
  std::vector<int> idx(static_cast<std::size_t>(r), 0);
  std::vector<std::int64_t> argmax;
  if (kind == ReduceKind::Max) {
    argmax.assign(static_cast<std::size_t>(onumel), -1);
    for (std::int64_t i = 0; i < onumel; ++i) ov[i] = -std::numeric_limits<S>::infinity();
  }
  std::int64_t oidx = 0;
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    switch (kind) {
      case ReduceKind::Mean:
      case ReduceKind::Sum:
        ov[oidx] += xv[i];
        break;
      case ReduceKind::Max:
        if (xv[i] > ov[oidx]) {
          ov[oidx] = xv[i];
          argmax[static_cast<std::size_t>(oidx)] = i;
        }
        break;
    }
    // advance the multi-index and the output slot together
    for (int a = r - 1; a >= 0; --a) {
      auto ua = static_cast<std::size_t>(a);
      if (++idx[ua] < x.extent(a)) {
        oidx += ostride[ua];
        break;
      }
      oidx -= ostride[ua] * (x.extent(a) - 1);
      idx[ua] = 0;
    }
  }
  if (kind == ReduceKind::Mean)
    for (std::int64_t i = 0; i < onumel; ++i) ov[i] /= static_cast<S>(n_red);

  detail::attach<S>(out, "reduce", {&x},
                    [kind, ostride, n_red, r, xshape = x.shape(),
                     argmax = std::move(argmax)](detail::Node<S>& nd) {
    auto& in = *nd.inputs[0];
    if (kind == ReduceKind::Max) {
      for (std::size_t o = 0; o < argmax.size(); ++o)
        if (argmax[o] >= 0) in.grad[static_cast<std::size_t>(argmax[o])] += nd.grad[o];
      return;
    }
    const S w = kind == ReduceKind::Mean ? S(1) / static_cast<S>(n_red) : S(1);
    std::vector<int> idx(static_cast<std::size_t>(r), 0);
    std::int64_t oidx = 0;
    const std::int64_t n = static_cast<std::int64_t>(in.value.size());
    for (std::int64_t i = 0; i < n; ++i) {
      in.grad[i] += nd.grad[oidx] * w;
      for (int a = r - 1; a >= 0; --a) {
        auto ua = static_cast<std::size_t>(a);
        if (++idx[ua] < xshape[ua]) {
          oidx += ostride[ua];
          break;
        }
        oidx -= ostride[ua] * (xshape[ua] - 1);
        idx[ua] = 0;
      }
    }
  });
  return out;
}

template <class S>
TensorT<S> reduce_mean(const TensorT<S>& x, std::vector<int> axes) {
  return reduce(x, std::move(axes), ReduceKind::Mean);
}
template <class S>
TensorT<S> reduce_sum(const TensorT<S>& x, std::vector<int> axes) {
  return reduce(x, std::move(axes), ReduceKind::Sum);
}
template <class S>
TensorT<S> reduce_max(const TensorT<S>& x, std::vector<int> axes) {
  return reduce(x, std::move(axes), ReduceKind::Max);
}

template <class S>
TensorT<S> sum_all(const TensorT<S>& x) {
  std::vector<int> axes(static_cast<std::size_t>(x.rank()));
  for (int a = 0; a < x.rank(); ++a) axes[static_cast<std::size_t>(a)] = a;
  return reduce_sum(x, std::move(axes));
}
template <class S>
TensorT<S> mean_all(const TensorT<S>& x) {
  std::vector<int> axes(static_cast<std::size_t>(x.rank()));
  for (int a = 0; a < x.rank(); ++a) axes[static_cast<std::size_t>(a)] = a;
  return reduce_mean(x, std::move(axes));
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Mean of -log softmax(logits)[label], computed in log space.
template <class S>
TensorT<S> cross_entropy(const TensorT<S>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) fail("cross_entropy: logits must be (N,K), got " + shape_str(logits.shape()));
  const int N = logits.extent(0), K = logits.extent(1);
  if (static_cast<int>(labels.size()) != N)
    fail("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(N) +
         " rows");
  for (int lb : labels)
    if (lb < 0 || lb >= K) fail("cross_entropy: label " + std::to_string(lb) + " out of range [0," +
                                std::to_string(K) + ")");
  const S* zv = logits.data();
  S loss = S(0);
  for (int i = 0; i < N; ++i) {
    const S* row = zv + std::int64_t(i) * K;
    S mx = row[0];
    for (int j = 1; j < K; ++j) mx = std::max(mx, row[j]);
    S lse = S(0);
    for (int j = 0; j < K; ++j) lse += std::exp(row[j] - mx);
    loss += std::log(lse) + mx - row[labels[static_cast<std::size_t>(i)]];
  }
  loss /= static_cast<S>(N);

  auto out = TensorT<S>::scalar(loss);
  detail::attach<S>(out, "cross_entropy", {&logits}, [N, K, labels](detail::Node<S>& nd) {
    auto& in = *nd.inputs[0];
    const S g = nd.grad[0] / static_cast<S>(N);
    for (int i = 0; i < N; ++i) {
      const S* row = in.value.data() + std::int64_t(i) * K;
      S* drow = in.grad.data() + std::int64_t(i) * K;
      S mx = row[0];
      for (int j = 1; j < K; ++j) mx = std::max(mx, row[j]);
      S lse = S(0);
      for (int j = 0; j < K; ++j) lse += std::exp(row[j] - mx);
      for (int j = 0; j < K; ++j) {
        const S p = std::exp(row[j] - mx) / lse;
        drow[j] += g * (p - (j == labels[static_cast<std::size_t>(i)] ? S(1) : S(0)));
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Non-graph helpers
// ---------------------------------------------------------------------------

/// Index of the largest element in row `r` of a (N,K) buffer; first maximal
/// index on ties.
template <class S>
int argmax_row(const S* row, int k) {
  int best = 0;
  for (int j = 1; j < k; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

}  // namespace m2a
