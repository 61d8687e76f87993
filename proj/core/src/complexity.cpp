#include "m2a/complexity.hpp"

#include <cstdio>
#include <sstream>

namespace m2a {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Conv3d: return "conv3d";
    case LayerKind::Linear: return "linear";
    case LayerKind::Elementwise: return "elementwise";
    case LayerKind::SoftmaxAttentionTemporal: return "softmax_attention_temporal";
    case LayerKind::LayerNorm: return "layernorm";
    case LayerKind::Pool: return "pool";
  }
  return "?";
}

namespace {

std::int64_t layer_macs(const LayerDesc& l) {
  const std::int64_t in_elems = std::int64_t(l.t) * l.h * l.w * l.cin;
  switch (l.kind) {
    case LayerKind::Conv2d:
      return std::int64_t(l.out_t) * l.out_h * l.out_w * l.out_c * l.kh * l.kw * l.cin / l.groups;
    case LayerKind::Conv3d:
      return std::int64_t(l.out_t) * l.out_h * l.out_w * l.out_c * l.kt * l.kh * l.kw * l.cin /
             l.groups;
    case LayerKind::Linear:
      return std::int64_t(l.out_t) * l.cin * l.cout;
    case LayerKind::Elementwise:
    case LayerKind::LayerNorm:
      return std::int64_t(l.out_t) * l.out_h * l.out_w * l.out_c;
    case LayerKind::SoftmaxAttentionTemporal:
      return 2 * std::int64_t(l.t) * l.t * (std::int64_t(l.h) * l.w * l.cin);
    case LayerKind::Pool:
      return in_elems;
  }
  return 0;
}

std::string shape_of(const LayerDesc& l) {
  return "(" + std::to_string(l.out_t) + "," + std::to_string(l.out_h) + "," +
         std::to_string(l.out_w) + "," + std::to_string(l.out_c) + ")";
}

/// Chains layer descriptors, checking extent consistency as it goes.
class ArchBuilder {
 public:
  ArchBuilder(std::string name, int frames, int side, int channels) {
    arch_.name = std::move(name);
    arch_.frames = frames;
    t_ = frames;
    h_ = w_ = side;
    c_ = channels;
  }

  ArchBuilder& conv2d(const std::string& name, int k, int cout, int stride, int pad,
                      int groups = 1) {
    LayerDesc l = base(name, LayerKind::Conv2d);
    l.kh = l.kw = k;
    l.stride = stride;
    l.pad = pad;
    l.cout = cout;
    l.groups = groups;
    l.out_t = t_;
    l.out_h = (h_ + 2 * pad - k) / stride + 1;
    l.out_w = (w_ + 2 * pad - k) / stride + 1;
    l.out_c = cout;
    return push(l);
  }

  ArchBuilder& conv3d(const std::string& name, int kt, int k, int cout, int stride_t, int stride,
                      int pad_t, int pad) {
    LayerDesc l = base(name, LayerKind::Conv3d);
    l.kt = kt;
    l.kh = l.kw = k;
    l.stride_t = stride_t;
    l.stride = stride;
    l.pad_t = pad_t;
    l.pad = pad;
    l.cout = cout;
    l.out_t = (t_ + 2 * pad_t - kt) / stride_t + 1;
    l.out_h = (h_ + 2 * pad - k) / stride + 1;
    l.out_w = (w_ + 2 * pad - k) / stride + 1;
    l.out_c = cout;
    return push(l);
  }

  /// One MAC per output element (relu, residual add, sigmoid, bn as norm...).
  ArchBuilder& elementwise(const std::string& name) {
    LayerDesc l = base(name, LayerKind::Elementwise);
    l.out_t = t_; l.out_h = h_; l.out_w = w_; l.out_c = c_;
    return push(l);
  }

  ArchBuilder& norm(const std::string& name) {
    LayerDesc l = base(name, LayerKind::LayerNorm);
    l.out_t = t_; l.out_h = h_; l.out_w = w_; l.out_c = c_;
    return push(l);
  }

  ArchBuilder& pool(const std::string& name, int k, int stride, int pad) {
    LayerDesc l = base(name, LayerKind::Pool);
    l.kh = l.kw = k;
    l.stride = stride;
    l.pad = pad;
    l.out_t = t_;
    l.out_h = (h_ + 2 * pad - k) / stride + 1;
    l.out_w = (w_ + 2 * pad - k) / stride + 1;
    l.out_c = c_;
    return push(l);
  }

  ArchBuilder& global_pool(const std::string& name) {
    LayerDesc l = base(name, LayerKind::Pool);
    l.kh = h_; l.kw = w_;
    l.out_t = t_; l.out_h = 1; l.out_w = 1; l.out_c = c_;
    return push(l);
  }

  /// Mean over frames; after this, per-clip layers run once (t = 1).
  ArchBuilder& temporal_mean(const std::string& name) {
    LayerDesc l = base(name, LayerKind::Pool);
    l.kt = t_;
    l.out_t = 1; l.out_h = h_; l.out_w = w_; l.out_c = c_;
    return push(l);
  }

  ArchBuilder& linear(const std::string& name, int out) {
    if (h_ != 1 || w_ != 1) fail("arch builder: linear after spatial extent " +
                                 std::to_string(h_) + "x" + std::to_string(w_));
    LayerDesc l = base(name, LayerKind::Linear);
    l.cout = out;
    l.out_t = t_; l.out_h = 1; l.out_w = 1; l.out_c = out;
    return push(l);
  }

  /// Records a mechanism insertion slot at the current activation extents.
  ArchBuilder& insertion(const std::string& at) {
    arch_.insertions.push_back({at, t_, h_, w_, c_});
    return *this;
  }

  /// 1x1 projection conv on a remembered input (residual shortcut); does
  /// not advance the main chain.
  ArchBuilder& branch_conv1x1(const std::string& name, int in_side, int cin, int cout,
                              int stride) {
    LayerDesc l;
    l.name = name;
    l.kind = LayerKind::Conv2d;
    l.t = t_;
    l.h = l.w = in_side;
    l.cin = cin;
    l.kh = l.kw = 1;
    l.stride = stride;
    l.cout = cout;
    l.out_t = t_;
    l.out_h = l.out_w = (in_side - 1) / stride + 1;
    l.out_c = cout;
    l.side_branch = true;
    if (l.out_h < 1) fail("arch builder: branch " + name + " produces empty extents");
    arch_.layers.push_back(l);
    return *this;
  }

  int channels() const { return c_; }
  int side() const { return h_; }

  ArchDescription build() { return std::move(arch_); }

 private:
  LayerDesc base(const std::string& name, LayerKind kind) {
    LayerDesc l;
    l.name = name;
    l.kind = kind;
    l.t = t_; l.h = h_; l.w = w_; l.cin = c_;
    return l;
  }
  ArchBuilder& push(const LayerDesc& l) {
    if (l.out_t < 1 || l.out_h < 1 || l.out_w < 1 || l.out_c < 1)
      fail("arch builder: layer " + l.name + " produces empty extents");
    arch_.layers.push_back(l);
    t_ = l.out_t; h_ = l.out_h; w_ = l.out_w; c_ = l.out_c;
    return *this;
  }

  ArchDescription arch_;
  int t_, h_, w_, c_;
};

}  // namespace

MacReport count_macs(const ArchDescription& arch) {
  MacReport r;
  r.arch = arch.name;
  r.frames = arch.frames;
  int t = -1, h = -1, w = -1, c = -1;
  for (const auto& l : arch.layers) {
    if (!l.side_branch && t >= 0 && (l.t != t || l.h != h || l.w != w || l.cin != c))
      fail("count_macs: layer " + l.name + " expects (" + std::to_string(l.t) + "," +
           std::to_string(l.h) + "," + std::to_string(l.w) + "," + std::to_string(l.cin) +
           ") but previous layer produced (" + std::to_string(t) + "," + std::to_string(h) + "," +
           std::to_string(w) + "," + std::to_string(c) + ")");
    if (l.t < 1 || l.h < 1 || l.w < 1 || l.cin < 1)
      fail("count_macs: layer " + l.name + " has non-positive extents");
    const std::int64_t macs = layer_macs(l);
    r.lines.push_back({l.name, layer_kind_name(l.kind), shape_of(l), macs});
    r.total += macs;
    if (!l.side_branch) {
      t = l.out_t; h = l.out_h; w = l.out_w; c = l.out_c;
    }
  }
  return r;
}

MacReport m2a_overhead(const ArchDescription& arch, int reduction, MechanismVariant v) {
  MacReport r;
  r.arch = arch.name + "+" + variant_name(v);
  r.frames = arch.frames;
  if (v == MechanismVariant::None) return r;
  if (v == MechanismVariant::TSM) {
    for (const auto& ip : arch.insertions)
      r.lines.push_back({ip.at + " +tsm", "elementwise",
                         "(" + std::to_string(ip.t) + "," + std::to_string(ip.h) + "," +
                             std::to_string(ip.w) + "," + std::to_string(ip.c) + ")",
                         0});
    return r;  // pure data movement
  }
  const bool attention =
      v == MechanismVariant::M2AFull || v == MechanismVariant::M2AAttention ||
      v == MechanismVariant::M2APlusTSM;
  const bool motion = v == MechanismVariant::M2AFull || v == MechanismVariant::M2AMotion ||
                      v == MechanismVariant::M2APlusTSM;
  for (const auto& ip : arch.insertions) {
    if (ip.c % reduction != 0)
      fail("m2a_overhead: reduction " + std::to_string(reduction) +
           " does not divide channels " + std::to_string(ip.c) + " at " + ip.at);
    const std::int64_t spatial = std::int64_t(ip.h) * ip.w;
    const std::int64_t cr = ip.c / reduction;
    const std::int64_t full = std::int64_t(ip.t) * spatial * ip.c;   // per elementwise pass at C
    const std::int64_t red = std::int64_t(ip.t) * spatial * cr;      // ... at C/R
    std::int64_t macs = 0;
    macs += 2 * std::int64_t(ip.t) * spatial * cr * ip.c;  // down + up 1x1 convs
    macs += red;                                           // layer norm
    macs += red;                                           // branch + X_t add
    if (motion) macs += red;                               // temporal difference
    if (attention) macs += 2 * std::int64_t(ip.t) * ip.t * (spatial * cr);
    macs += 3 * full;  // sigmoid, gate multiply, outer skip add
    r.lines.push_back({ip.at + " +" + variant_name(v), "mechanism",
                       "(" + std::to_string(ip.t) + "," + std::to_string(ip.h) + "," +
                           std::to_string(ip.w) + "," + std::to_string(ip.c) + ")",
                       macs});
    r.total += macs;
  }
  return r;
}

MacReport combined_macs(const ArchDescription& arch, int reduction, MechanismVariant v) {
  MacReport base = count_macs(arch);
  if (v == MechanismVariant::None) return base;
  MacReport extra = m2a_overhead(arch, reduction, v);
  MacReport r = std::move(base);
  r.arch = extra.arch;
  for (auto& line : extra.lines) r.lines.push_back(std::move(line));
  r.total += extra.total;
  return r;
}

ArchDescription describe_resnet18(int frames, int side) {
  if (side < 32) fail("describe_resnet18: side must be >= 32");
  ArchBuilder b("resnet18", frames, side, 3);
  b.conv2d("conv1", 7, 64, 2, 3).norm("bn1").elementwise("relu1");
  b.pool("maxpool", 3, 2, 1);
  const int stage_channels[4] = {64, 128, 256, 512};
  for (int s = 0; s < 4; ++s) {
    const int c = stage_channels[s];
    for (int blk = 0; blk < 2; ++blk) {
      const std::string pre = "layer" + std::to_string(s + 1) + "." + std::to_string(blk) + ".";
      const int stride = (s > 0 && blk == 0) ? 2 : 1;
      const int cin = b.channels();
      const int side_in = b.side();
      const bool project = stride != 1 || cin != c;
      // basic block; mechanisms insert after conv1
      b.conv2d(pre + "conv1", 3, c, stride, 1).norm(pre + "bn1");
      b.insertion(pre + "conv1");
      b.elementwise(pre + "relu1");
      b.conv2d(pre + "conv2", 3, c, 1, 1).norm(pre + "bn2");
      if (project) {
        b.branch_conv1x1(pre + "downsample", side_in, cin, c, stride);
        b.norm(pre + "bn_downsample");
      }
      b.elementwise(pre + "skip_add");
      b.elementwise(pre + "relu2");
    }
  }
  b.global_pool("avgpool");
  b.linear("fc", 1000);
  return b.build();
}

ArchDescription describe_mobilenetv2(int frames, int side) {
  if (side < 32) fail("describe_mobilenetv2: side must be >= 32");
  ArchBuilder b("mobilenetv2", frames, side, 3);
  b.conv2d("conv_stem", 3, 32, 2, 1).norm("bn_stem").elementwise("relu_stem");
  // (expansion, channels, repeats, first stride)
  const int cfg[7][4] = {{1, 16, 1, 1}, {6, 24, 2, 2},  {6, 32, 3, 2}, {6, 64, 4, 2},
                         {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
  int block_idx = 0;
  for (const auto& row : cfg) {
    const int expand = row[0], cout = row[1], repeats = row[2];
    for (int rep = 0; rep < repeats; ++rep) {
      const int stride = rep == 0 ? row[3] : 1;
      const int cin = b.channels();
      const std::string pre = "block" + std::to_string(block_idx) + ".";
      const bool residual = stride == 1 && cin == cout;
      // mechanisms insert on the block input activation
      b.insertion(pre + "in");
      const int hidden = cin * expand;
      if (expand != 1) {
        b.conv2d(pre + "expand", 1, hidden, 1, 0).norm(pre + "bn_expand")
            .elementwise(pre + "relu_expand");
      }
      b.conv2d(pre + "dw", 3, hidden, stride, 1, hidden).norm(pre + "bn_dw")
          .elementwise(pre + "relu_dw");
      b.conv2d(pre + "project", 1, cout, 1, 0).norm(pre + "bn_project");
      if (residual) b.elementwise(pre + "skip_add");
      ++block_idx;
    }
  }
  b.conv2d("conv_last", 1, 1280, 1, 0).norm("bn_last").elementwise("relu_last");
  b.global_pool("avgpool");
  b.linear("fc", 1000);
  return b.build();
}

ArchDescription describe_i3d_resnet18(int frames, int side) {
  if (side < 32) fail("describe_i3d_resnet18: side must be >= 32");
  // Inflation recipe (the source tables leave it unspecified, hence the
  // unverified flag): stem 5x7x7, first conv of each stage's first block
  // 3x3x3, all other convs 1x3x3, no temporal striding or pooling.
  ArchBuilder b("i3d-resnet18-unverified", frames, side, 3);
  b.conv3d("conv1", 5, 7, 64, 1, 2, 2, 3).norm("bn1").elementwise("relu1");
  b.pool("maxpool", 3, 2, 1);
  const int stage_channels[4] = {64, 128, 256, 512};
  for (int s = 0; s < 4; ++s) {
    const int c = stage_channels[s];
    for (int blk = 0; blk < 2; ++blk) {
      const std::string pre = "layer" + std::to_string(s + 1) + "." + std::to_string(blk) + ".";
      const int stride = (s > 0 && blk == 0) ? 2 : 1;
      const int kt1 = blk == 0 ? 3 : 1;
      const int cin = b.channels();
      const int side_in = b.side();
      b.conv3d(pre + "conv1", kt1, 3, c, 1, stride, kt1 / 2, 1).norm(pre + "bn1");
      b.insertion(pre + "conv1");
      b.elementwise(pre + "relu1");
      b.conv3d(pre + "conv2", 1, 3, c, 1, 1, 0, 1).norm(pre + "bn2");
      if (stride != 1 || cin != c) {
        // 1x1x1 projection, counted per frame like a 1x1 2D conv
        b.branch_conv1x1(pre + "downsample", side_in, cin, c, stride);
        b.norm(pre + "bn_downsample");
      }
      b.elementwise(pre + "skip_add");
      b.elementwise(pre + "relu2");
    }
  }
  b.global_pool("avgpool");
  b.temporal_mean("temporal_mean");
  b.linear("fc", 1000);
  auto arch = b.build();
  arch.unverified = true;
  arch.note = "inflation recipe assumed (stem 5x7x7, stage-entry convs 3x3x3, no temporal "
              "stride); totals are best-effort, not verified against the source tables";
  return arch;
}

ArchDescription describe_toy(const BackboneConfig& cfg) {
  ArchBuilder b("toy", cfg.frames, cfg.side, cfg.in_channels);
  b.conv2d("stem", 3, cfg.stem_channels, cfg.stem_stride, 1).elementwise("stem_relu");
  for (std::size_t s = 0; s < cfg.stage_channels.size(); ++s) {
    const int c = cfg.stage_channels[s];
    for (int blk = 0; blk < cfg.blocks_per_stage; ++blk) {
      const std::string pre = "stage" + std::to_string(s) + ".block" + std::to_string(blk) + ".";
      const int stride = (s > 0 && blk == 0) ? 2 : 1;
      const bool project = cfg.residual_skip && (stride != 1 || b.channels() != c);
      const int cin = b.channels();
      const int side_in = b.side();
      b.conv2d(pre + "conv1", 3, c, stride, 1);
      b.insertion(pre + "conv1");
      b.elementwise(pre + "relu1");
      b.conv2d(pre + "conv2", 3, c, 1, 1);
      if (project) b.branch_conv1x1(pre + "proj", side_in, cin, c, stride);
      if (cfg.residual_skip) b.elementwise(pre + "skip_add");
      b.elementwise(pre + "relu2");
    }
  }
  b.global_pool("gap");
  b.temporal_mean("temporal_mean");
  b.linear("head", cfg.num_classes);
  return b.build();
}

std::string macs_table(const MacReport& r) {
  std::ostringstream os;
  os << "arch: " << r.arch << "   frames: " << r.frames << "\n";
  os << "layer                            kind                        out shape           MACs\n";
  for (const auto& l : r.lines) {
    os << l.name;
    for (std::size_t i = l.name.size(); i < 33; ++i) os << ' ';
    os << l.kind;
    for (std::size_t i = l.kind.size(); i < 28; ++i) os << ' ';
    os << l.out_shape;
    for (std::size_t i = l.out_shape.size(); i < 18; ++i) os << ' ';
    os << l.macs << "\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", r.gmacs());
  os << "total MACs: " << r.total << "  (" << buf << " GMACs)\n";
  return os.str();
}

std::string macs_csv(const MacReport& r) {
  std::ostringstream os;
  os << "layer,kind,out_shape,macs\n";
  for (const auto& l : r.lines)
    os << l.name << ',' << l.kind << ",\"" << l.out_shape << "\"," << l.macs << "\n";
  os << "total,,," << r.total << "\n";
  return os.str();
}

}  // namespace m2a
