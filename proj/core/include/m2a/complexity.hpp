#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m2a/backbone.hpp"

namespace m2a {

enum class LayerKind {
  Conv2d,
  Conv3d,
  Linear,
  Elementwise,
  SoftmaxAttentionTemporal,
  LayerNorm,
  Pool,
};
const char* layer_kind_name(LayerKind k);

/// Symbolic layer: geometry plus the activation extents flowing in. MACs are
/// computed from these, never from weights.
struct LayerDesc {
  std::string name;
  LayerKind kind = LayerKind::Elementwise;
  // incoming activation extents; t is the frame count this layer processes
  int t = 1, h = 1, w = 1, cin = 1;
  // geometry
  int kt = 1, kh = 1, kw = 1;
  int stride_t = 1, stride = 1;
  int pad_t = 0, pad = 0;
  int cout = 1, groups = 1;
  // derived
  int out_t = 1, out_h = 1, out_w = 1, out_c = 1;
  // side branches (residual projections) run in parallel with the main
  // chain: counted, but excluded from extent chaining
  bool side_branch = false;
};

/// Where a temporal mechanism would insert, and the activation extents there.
struct MechInsertion {
  std::string at;
  int t = 1, h = 1, w = 1, c = 1;
};

struct ArchDescription {
  std::string name;
  int frames = 1;
  bool unverified = false;  // best-effort recipe, excluded from any gate
  std::string note;
  std::vector<LayerDesc> layers;
  std::vector<MechInsertion> insertions;
};

struct MacReport {
  struct Line {
    std::string name;
    std::string kind;
    std::string out_shape;
    std::int64_t macs = 0;
  };
  std::string arch;
  int frames = 1;
  std::vector<Line> lines;
  std::int64_t total = 0;
  double gmacs() const { return static_cast<double>(total) / 1e9; }
};

/// Convention: conv = Hout*Wout*Cout*kh*kw*Cin/groups per frame (3D adds the
/// temporal factors); linear = in*out per application; elementwise and norm
/// = 1 MAC per output element; pool = 1 per input element; temporal
/// attention = 2*T^2*d.
MacReport count_macs(const ArchDescription& arch);

/// Extra MACs a mechanism adds at every insertion point: down/up 1x1 convs,
/// layer norm, branch adds, gate elementwise work, and the attention term
/// for the attention-carrying variants. TSM costs nothing.
MacReport m2a_overhead(const ArchDescription& arch, int reduction, MechanismVariant v);

/// Base report plus overhead lines, as printed by the CLI for a non-None
/// variant.
MacReport combined_macs(const ArchDescription& arch, int reduction, MechanismVariant v);

ArchDescription describe_resnet18(int frames, int side);
ArchDescription describe_mobilenetv2(int frames, int side);
/// Inflated-3D recipe the source tables do not fully specify; marked
/// unverified and excluded from acceptance checks.
ArchDescription describe_i3d_resnet18(int frames, int side);
ArchDescription describe_toy(const BackboneConfig& cfg);

std::string macs_table(const MacReport& r);
std::string macs_csv(const MacReport& r);

}  // namespace m2a
