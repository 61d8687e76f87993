#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m2a/rng.hpp"

namespace m2a {

enum class SpriteKind { Square, Disc, Bar };

/// Class indices are frozen: the binary format and all reports rely on them.
enum MotionClass : int {
  kMoveLeft = 0,
  kMoveRight = 1,
  kApproach = 2,
  kRecede = 3,
  kStatic = 4,
};
inline constexpr int kNumClasses = 5;
const std::vector<std::string>& motion_class_names();

/// Per-clip generation parameters. move_right and recede clips are never
/// rendered directly: they are exact time reversals of a paired move_left /
/// approach clip, which is what makes the pairs indistinguishable to any
/// frame-order-invariant model.
struct ClipSpec {
  int frames = 8;
  int side = 32;
  SpriteKind sprite = SpriteKind::Square;
  int label = kStatic;
  double velocity = 2.0;     // px per frame for the move classes
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;
};

/// Generation knobs shared by a whole dataset. sprite may be "square",
/// "disc", "bar" or "mixed" (cycles per sample).
struct DatasetOptions {
  int frames = 8;
  int side = 32;
  double velocity = 2.0;
  double noise_sigma = 0.02;
  std::string sprite = "square";
};

struct ClipDataset {
  int frames = 0;
  int side = 0;
  int channels = 1;
  std::vector<std::string> class_names;
  std::vector<std::uint16_t> labels;
  std::vector<float> values;  // N * T * H * W * C in [0,1]

  std::size_t size() const { return labels.size(); }
  std::int64_t clip_elems() const {
    return std::int64_t(frames) * side * side * channels;
  }
  std::int64_t frame_elems() const { return std::int64_t(side) * side * channels; }
  const float* clip(std::size_t i) const { return values.data() + clip_elems() * std::int64_t(i); }
  float* clip(std::size_t i) { return values.data() + clip_elems() * std::int64_t(i); }
};

/// Renders one clip into `out` (frames*side*side floats). Only move_left,
/// approach and static labels render; the reversed classes are built by
/// time_reverse on their pair.
void render_clip(const ClipSpec& spec, Rng& rng, float* out);

/// Balanced dataset: n_per_class clips for each of the 5 classes, label
/// pattern 0,1,2,3,4 repeating. Every move_right clip is the exact frame
/// reversal of the move_left clip generated alongside it, likewise
/// recede/approach. Static clips are constant in time.
ClipDataset generate_dataset(int n_per_class, const DatasetOptions& opt, Rng& rng);

/// out[t] = in[T-1-t] for one clip.
void time_reverse_clip(const float* in, float* out, int frames, std::int64_t frame_elems);

/// Whole-dataset reversal (labels kept as-is).
ClipDataset time_reverse_dataset(const ClipDataset& d);

/// Binary container "M2AV": version, N,T,H,W,C,K, class names, u16 labels,
/// raw little-endian 32-bit floats.
void save_dataset(const ClipDataset& d, const std::string& path);
ClipDataset load_dataset(const std::string& path);

}  // namespace m2a
