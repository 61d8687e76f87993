#pragma once

#include <optional>
#include <string>
#include <vector>

#include "m2a/mechanisms.hpp"

namespace m2a {

/// Frame-independent residual CNN: stem conv, one or more stages of basic
/// blocks (first block of each later stage downsamples by 2), spatial GAP,
/// temporal mean, linear head. Mechanisms slot in after each block's first
/// convolution.
struct BackboneConfig {
  int in_channels = 1;
  int stem_channels = 8;
  int stem_stride = 2;
  std::vector<int> stage_channels{8, 16, 32};
  int blocks_per_stage = 1;
  int frames = 8;
  int side = 32;
  int num_classes = 5;
  // The residual add makes "scale one activation by k" propagate inexactly;
  // tests of exact scaling behaviour turn it off.
  bool residual_skip = true;
};

struct InsertionPoint {
  int stage = 0;
  int block = 0;
  int channels = 0;
};

template <class S>
struct ConvLayerT {
  TensorT<S> w, b;
  int stride = 1;
  int pad = 1;
};

template <class S>
struct BlockT {
  ConvLayerT<S> conv1, conv2;
  std::optional<ConvLayerT<S>> proj;     // 1x1 skip projection when shape changes
  std::optional<M2AParamsT<S>> mech;     // attached by insert_mechanism
};

template <class S>
struct ModelT {
  BackboneConfig cfg;
  MechanismVariant variant = MechanismVariant::None;
  ConvLayerT<S> stem;
  std::vector<std::vector<BlockT<S>>> stages;
  TensorT<S> head_w, head_b;
  std::vector<InsertionPoint> insertion_points;

  /// Visits every parameter in a stable order (backbone first, then
  /// mechanism params per insertion point). fn(name, TensorT<S>&).
  template <class Fn>
  void visit_params(Fn&& fn) {
    fn("stem.w", stem.w);
    fn("stem.b", stem.b);
    for (std::size_t s = 0; s < stages.size(); ++s)
      for (std::size_t b = 0; b < stages[s].size(); ++b) {
        const std::string pre = "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
        auto& blk = stages[s][b];
        fn(pre + "conv1.w", blk.conv1.w);
        fn(pre + "conv1.b", blk.conv1.b);
        fn(pre + "conv2.w", blk.conv2.w);
        fn(pre + "conv2.b", blk.conv2.b);
        if (blk.proj) {
          fn(pre + "proj.w", blk.proj->w);
          fn(pre + "proj.b", blk.proj->b);
        }
      }
    fn("head.w", head_w);
    fn("head.b", head_b);
    for (std::size_t s = 0; s < stages.size(); ++s)
      for (std::size_t b = 0; b < stages[s].size(); ++b)
        if (stages[s][b].mech) {
          const std::string pre =
              "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".mech.";
          stages[s][b].mech->visit(
              [&](const char* n, TensorT<S>& t) { fn(pre + n, t); });
        }
  }

  std::vector<std::pair<std::string, TensorT<S>*>> named_parameters() {
    std::vector<std::pair<std::string, TensorT<S>*>> out;
    visit_params([&](const std::string& n, TensorT<S>& t) { out.emplace_back(n, &t); });
    return out;
  }

  std::int64_t param_count() {
    std::int64_t n = 0;
    visit_params([&](const std::string&, TensorT<S>& t) { n += t.numel(); });
    return n;
  }

  void zero_grads() {
    visit_params([](const std::string&, TensorT<S>& t) { t.zero_grad(); });
  }
};

using Model = ModelT<double>;
using Model32 = ModelT<float>;

namespace detail {

template <class S>
ConvLayerT<S> make_conv(int kh, int kw, int cin, int cout, int stride, int pad, Rng& rng) {
  ConvLayerT<S> l;
  l.w = TensorT<S>::kaiming_uniform({kh, kw, cin, cout}, std::int64_t(kh) * kw * cin, rng);
  l.b = TensorT<S>::zeros({cout}, true);
  l.stride = stride;
  l.pad = pad;
  return l;
}

}  // namespace detail

template <class S>
ModelT<S> build_backbone(const BackboneConfig& cfg, Rng& rng) {
  if (cfg.in_channels < 1 || cfg.stem_channels < 1 || cfg.stage_channels.empty() ||
      cfg.blocks_per_stage < 1 || cfg.frames < 1 || cfg.num_classes < 1)
    fail("backbone config: all sizes must be positive");
  if (cfg.stem_stride != 1 && cfg.stem_stride != 2)
    fail("backbone config: stem stride must be 1 or 2");
  const int downsamples =
      static_cast<int>(cfg.stage_channels.size()) - 1 + (cfg.stem_stride == 2 ? 1 : 0);
  if (cfg.side % (1 << downsamples) != 0)
    fail("backbone config: side " + std::to_string(cfg.side) + " must be divisible by " +
         std::to_string(1 << downsamples));

  ModelT<S> m;
  m.cfg = cfg;
  m.stem = detail::make_conv<S>(3, 3, cfg.in_channels, cfg.stem_channels, cfg.stem_stride, 1, rng);
  int cin = cfg.stem_channels;
  for (std::size_t s = 0; s < cfg.stage_channels.size(); ++s) {
    std::vector<BlockT<S>> blocks;
    const int cout = cfg.stage_channels[s];
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      BlockT<S> blk;
      blk.conv1 = detail::make_conv<S>(3, 3, cin, cout, stride, 1, rng);
      blk.conv2 = detail::make_conv<S>(3, 3, cout, cout, 1, 1, rng);
      if (cfg.residual_skip && (stride != 1 || cin != cout))
        blk.proj = detail::make_conv<S>(1, 1, cin, cout, stride, 0, rng);
      blocks.push_back(std::move(blk));
      m.insertion_points.push_back({static_cast<int>(s), b, cout});
      cin = cout;
    }
    m.stages.push_back(std::move(blocks));
  }
  m.head_w = TensorT<S>::kaiming_uniform({cin, cfg.num_classes}, cin, rng);
  m.head_b = TensorT<S>::zeros({cfg.num_classes}, true);
  return m;
}

/// Attach a mechanism (and its parameters, for the m2a family) at every
/// insertion point. Parameters are drawn from `rng` in insertion order.
template <class S>
void insert_mechanism(ModelT<S>& m, MechanismVariant v, Rng& rng, int reduction = 8) {
  m.variant = v;
  for (auto& stage : m.stages)
    for (auto& blk : stage) blk.mech.reset();
  if (!variant_has_m2a(v)) return;
  for (const auto& ip : m.insertion_points) {
    if (ip.channels % reduction != 0)
      fail("insert_mechanism: reduction " + std::to_string(reduction) +
           " does not divide channel count " + std::to_string(ip.channels) + " at stage" +
           std::to_string(ip.stage) + ".block" + std::to_string(ip.block));
    m.stages[static_cast<std::size_t>(ip.stage)][static_cast<std::size_t>(ip.block)].mech =
        M2AParamsT<S>::init(ip.channels, reduction, rng);
  }
}

/// Forward pass over clips (N,T,H,W,Cin) -> logits (N,K). When `capture`
/// names an activation ("stem", "stageS.blockB.post_mech",
/// "stageS.blockB.out") the matching tensor handle is stored in *captured.
template <class S>
TensorT<S> forward(ModelT<S>& m, const TensorT<S>& clips,
                   const std::string* capture = nullptr, TensorT<S>* captured = nullptr) {
  const auto& cfg = m.cfg;
  if (clips.rank() != 5 || clips.extent(1) != cfg.frames || clips.extent(2) != cfg.side ||
      clips.extent(3) != cfg.side || clips.extent(4) != cfg.in_channels)
    fail("forward: clips " + shape_str(clips.shape()) + " do not match config (N," +
         std::to_string(cfg.frames) + "," + std::to_string(cfg.side) + "," +
         std::to_string(cfg.side) + "," + std::to_string(cfg.in_channels) + ")");

  bool want_capture = capture != nullptr;
  auto maybe_capture = [&](const std::string& name, const TensorT<S>& t) {
    if (want_capture && *capture == name) {
      *captured = t;
      want_capture = false;
    }
  };

  auto x = relu(conv2d(clips, m.stem.w, m.stem.b, m.stem.stride, m.stem.pad));
  maybe_capture("stem", x);
  for (std::size_t s = 0; s < m.stages.size(); ++s)
    for (std::size_t b = 0; b < m.stages[s].size(); ++b) {
      auto& blk = m.stages[s][b];
      const std::string pre = "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
      auto h = conv2d(x, blk.conv1.w, blk.conv1.b, blk.conv1.stride, blk.conv1.pad);
      h = apply_mechanism(h, m.variant, blk.mech ? &*blk.mech : nullptr);
      maybe_capture(pre + "post_mech", h);
      h = relu(h);
      h = conv2d(h, blk.conv2.w, blk.conv2.b, blk.conv2.stride, blk.conv2.pad);
      if (cfg.residual_skip) {
        auto skip = blk.proj ? conv2d(x, blk.proj->w, blk.proj->b, blk.proj->stride, blk.proj->pad)
                             : x;
        h = add(h, skip);
      }
      x = relu(h);
      maybe_capture(pre + "out", x);
    }
  if (want_capture) fail("forward: layer selector '" + *capture + "' matches nothing");

  auto pooled = reduce_mean(x, {2, 3});   // (N,T,C) spatial GAP
  auto temporal = reduce_mean(pooled, {1});  // (N,C)
  return linear(temporal, m.head_w, m.head_b);
}

/// Text table of the architecture: layers, output extents, parameter counts.
template <class S>
std::string model_summary(ModelT<S>& m) {
  std::ostringstream os;
  const auto& cfg = m.cfg;
  int side = cfg.side;
  os << "layer                        output (T,H,W,C)        params\n";
  auto row = [&](const std::string& name, int t, int h, int w, int c, std::int64_t params) {
    os << name;
    for (std::size_t i = name.size(); i < 29; ++i) os << ' ';
    std::string shp = "(" + std::to_string(t) + "," + std::to_string(h) + "," +
                      std::to_string(w) + "," + std::to_string(c) + ")";
    os << shp;
    for (std::size_t i = shp.size(); i < 24; ++i) os << ' ';
    os << params << "\n";
  };
  row("stem 3x3", cfg.frames, side, side, cfg.stem_channels,
      m.stem.w.numel() + m.stem.b.numel());
  for (std::size_t s = 0; s < m.stages.size(); ++s)
    for (std::size_t b = 0; b < m.stages[s].size(); ++b) {
      auto& blk = m.stages[s][b];
      if (blk.conv1.stride == 2) side /= 2;
      const int c = cfg.stage_channels[s];
      std::int64_t p = blk.conv1.w.numel() + blk.conv1.b.numel() + blk.conv2.w.numel() +
                       blk.conv2.b.numel();
      if (blk.proj) p += blk.proj->w.numel() + blk.proj->b.numel();
      std::string name = "stage" + std::to_string(s) + ".block" + std::to_string(b);
      if (blk.mech) {
        name += " +" + std::string(variant_name(m.variant));
        p += blk.mech->param_count();
      } else if (variant_has_shift(m.variant) && !variant_has_m2a(m.variant)) {
        name += " +tsm";
      }
      row(name, cfg.frames, side, side, c, p);
      if (blk.mech)
        row("  insertion point", cfg.frames, side, side, c, blk.mech->param_count());
    }
  row("head", 1, 1, 1, cfg.num_classes, m.head_w.numel() + m.head_b.numel());
  os << "total params: " << m.param_count() << "\n";
  return os.str();
}

}  // namespace m2a
