#pragma once

#include <optional>
#include <string>

#include "m2a/ops.hpp"

namespace m2a {

enum class MechanismVariant { None, M2AAttention, M2AMotion, M2AFull, TSM, M2APlusTSM };

/// Canonical lowercase names, also the CLI spellings.
const char* variant_name(MechanismVariant v);
std::optional<MechanismVariant> parse_variant(const std::string& s);
/// All canonical names, comma separated (for help/error text).
std::string variant_names_joined();

inline bool variant_has_m2a(MechanismVariant v) {
  return v == MechanismVariant::M2AAttention || v == MechanismVariant::M2AMotion ||
         v == MechanismVariant::M2AFull || v == MechanismVariant::M2APlusTSM;
}
inline bool variant_has_shift(MechanismVariant v) {
  return v == MechanismVariant::TSM || v == MechanismVariant::M2APlusTSM;
}

/// Parameters of one mechanism instance at a C-channel insertion point:
/// 1x1 down conv C -> C/R, layer norm affine over C/R channels, and a 1x1 up
/// conv C/R -> C feeding the sigmoid gate.
template <class S>
struct M2AParamsT {
  int channels = 0;
  int reduction = 8;
  TensorT<S> w_down, b_down;  // (1,1,C,C/R), (C/R)
  TensorT<S> gamma, beta;     // (C/R)
  TensorT<S> w_up, b_up;      // (1,1,C/R,C), (C)

  static M2AParamsT init(int channels, int reduction, Rng& rng) {
    if (reduction <= 0 || channels % reduction != 0)
      fail("m2a params: reduction " + std::to_string(reduction) + " must divide channel count " +
           std::to_string(channels));
    const int cr = channels / reduction;
    M2AParamsT p;
    p.channels = channels;
    p.reduction = reduction;
    p.w_down = TensorT<S>::kaiming_uniform({1, 1, channels, cr}, channels, rng);
    p.b_down = TensorT<S>::zeros({cr}, true);
    p.gamma = TensorT<S>::filled({cr}, S(1), true);
    p.beta = TensorT<S>::zeros({cr}, true);
    p.w_up = TensorT<S>::kaiming_uniform({1, 1, cr, channels}, cr, rng);
    p.b_up = TensorT<S>::zeros({channels}, true);
    return p;
  }

  std::int64_t param_count() const {
    const std::int64_t c = channels, cr = channels / reduction;
    return 2 * c * cr + cr + c + 2 * cr;
  }

  /// Stable ordering used by optimizers and checkpoints.
  template <class Fn>
  void visit(Fn&& fn) {
    fn("w_down", w_down);
    fn("b_down", b_down);
    fn("gamma", gamma);
    fn("beta", beta);
    fn("w_up", w_up);
    fn("b_up", b_up);
  }
};

using M2AParams = M2AParamsT<double>;

namespace detail {

// (outer, T, inner) view of a video activation: rank 4 = (T,H,W,C),
// rank 5 = (N,T,H,W,C).
template <class S>
void time_view(const TensorT<S>& x, std::int64_t& outer, int& T, std::int64_t& inner) {
  if (x.rank() == 4) {
    outer = 1;
    T = x.extent(0);
    inner = x.numel() / T;
  } else if (x.rank() == 5) {
    outer = x.extent(0);
    T = x.extent(1);
    inner = x.numel() / (outer * T);
  } else {
    fail("expected a (T,H,W,C) or (N,T,H,W,C) activation, got " + shape_str(x.shape()));
  }
}

}  // namespace detail

/// Circular shift along time: out[t] = x[t+1], out[T-1] = x[0].
template <class S>
TensorT<S> temporal_shift_left(const TensorT<S>& x) {
  std::int64_t outer, inner;
  int T;
  detail::time_view(x, outer, T, inner);
  auto out = TensorT<S>::zeros(x.shape());
  const S* xv = x.data();
  S* ov = out.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (int t = 0; t < T; ++t) {
      const int src = (t + 1) % T;
      std::memcpy(ov + (o * T + t) * inner, xv + (o * T + src) * inner,
                  sizeof(S) * static_cast<std::size_t>(inner));
    }
  detail::attach<S>(out, "temporal_shift_left", {&x}, [outer, T, inner](detail::Node<S>& nd) {
    auto& in = *nd.inputs[0];
    for (std::int64_t o = 0; o < outer; ++o)
      for (int t = 0; t < T; ++t) {
        const int src = (t + 1) % T;
        const S* g = nd.grad.data() + (o * T + t) * inner;
        S* dx = in.grad.data() + (o * T + src) * inner;
        for (std::int64_t i = 0; i < inner; ++i) dx[i] += g[i];
      }
  });
  return out;
}

/// D[t] = x[t+1] - x[t] with circular wrap, the inter-frame motion signal.
template <class S>
TensorT<S> motion_difference(const TensorT<S>& x) {
  return sub(temporal_shift_left(x), x);
}

/// Parameter-free scaled dot-product attention across time. Each frame is
/// flattened to a d = H*W*C vector; rows attend over all T frames.
template <class S>
TensorT<S> temporal_self_attention(const TensorT<S>& z) {
  std::int64_t outer, inner;
  int T;
  detail::time_view(z, outer, T, inner);
  auto zf = reshape(z, {static_cast<int>(outer), T, static_cast<int>(inner)});
  auto scores = scale(bmm(zf, btranspose(zf)), 1.0 / std::sqrt(static_cast<double>(inner)));
  auto attn = softmax(scores, 2);
  return reshape(bmm(attn, zf), z.shape());
}

/// Motion aware attention block. X_t = layer_norm(down(x)); branch B is the
/// variant's temporal signal; Z = B + X_t; Y = x + x * sigmoid(up(Z)).
template <class S>
TensorT<S> m2a_forward(const TensorT<S>& x, M2AParamsT<S>& p, MechanismVariant v) {
  if (!(v == MechanismVariant::M2AAttention || v == MechanismVariant::M2AMotion ||
        v == MechanismVariant::M2AFull))
    fail(std::string("m2a_forward: variant ") + variant_name(v) +
         " is not an m2a ablation (use apply_mechanism)");
  if (x.rank() != 4 && x.rank() != 5)
    fail("m2a_forward: expected (T,H,W,C) or (N,T,H,W,C), got " + shape_str(x.shape()));
  if (x.extent(x.rank() - 1) != p.channels)
    fail("m2a_forward: input channels " + std::to_string(x.extent(x.rank() - 1)) +
         " do not match params C=" + std::to_string(p.channels));

  const int r = x.rank();
  auto xt = layer_norm(conv2d(x, p.w_down, p.b_down), {r - 3, r - 2, r - 1}, p.gamma, p.beta);
  TensorT<S> b;
  switch (v) {
    case MechanismVariant::M2AFull:
      b = temporal_self_attention(motion_difference(xt));
      break;
    case MechanismVariant::M2AAttention:
      b = temporal_self_attention(xt);
      break;
    default:  // M2AMotion
      b = motion_difference(xt);
      break;
  }
  auto z = add(b, xt);
  auto gate = sigmoid(conv2d(z, p.w_up, p.b_up));
  return add(x, mul(x, gate));
}

/// Temporal shift module: the first C/f channels move one step toward t+1,
/// the next C/f one step toward t-1, zero-filled at the clip boundaries;
/// remaining channels pass through.
template <class S>
TensorT<S> tsm_shift(const TensorT<S>& x, int fold_div = 8) {
  std::int64_t outer, inner;
  int T;
  detail::time_view(x, outer, T, inner);
  const int C = x.extent(x.rank() - 1);
  if (fold_div <= 0 || C < fold_div)
    fail("tsm_shift: fold divisor " + std::to_string(fold_div) + " needs at least " +
         std::to_string(fold_div) + " channels, got " + std::to_string(C));
  const int fold = C / fold_div;
  const std::int64_t spots = inner / C;  // spatial positions per frame

  auto out = TensorT<S>::zeros(x.shape());
  const S* xv = x.data();
  S* ov = out.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (int t = 0; t < T; ++t)
      for (std::int64_t s = 0; s < spots; ++s) {
        const std::int64_t dst = ((o * T + t) * spots + s) * C;
        for (int c = 0; c < fold; ++c)
          if (t > 0) ov[dst + c] = xv[dst + c - static_cast<std::int64_t>(spots) * C];
        for (int c = fold; c < 2 * fold; ++c)
          if (t < T - 1) ov[dst + c] = xv[dst + c + static_cast<std::int64_t>(spots) * C];
        for (int c = 2 * fold; c < C; ++c) ov[dst + c] = xv[dst + c];
      }
  detail::attach<S>(out, "tsm_shift", {&x}, [outer, T, spots, C, fold](detail::Node<S>& nd) {
    auto& in = *nd.inputs[0];
    const std::int64_t frame = spots * C;
    for (std::int64_t o = 0; o < outer; ++o)
      for (int t = 0; t < T; ++t)
        for (std::int64_t s = 0; s < spots; ++s) {
          const std::int64_t dst = ((o * T + t) * spots + s) * C;
          for (int c = 0; c < fold; ++c)
            if (t > 0) in.grad[dst + c - frame] += nd.grad[dst + c];
          for (int c = fold; c < 2 * fold; ++c)
            if (t < T - 1) in.grad[dst + c + frame] += nd.grad[dst + c];
          for (int c = 2 * fold; c < C; ++c) in.grad[dst + c] += nd.grad[dst + c];
        }
  });
  return out;
}

/// One insertion point's effect on an activation. `params` may be null for
/// the parameter-free variants.
template <class S>
TensorT<S> apply_mechanism(const TensorT<S>& x, MechanismVariant v, M2AParamsT<S>* params) {
  switch (v) {
    case MechanismVariant::None:
      return x;
    case MechanismVariant::TSM:
      return tsm_shift(x);
    case MechanismVariant::M2APlusTSM:
      return m2a_forward(tsm_shift(x), *params, MechanismVariant::M2AFull);
    default:
      return m2a_forward(x, *params, v);
  }
}

}  // namespace m2a
