#include "m2a/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "m2a/tensor.hpp"  // fail()

namespace m2a {

const std::vector<std::string>& motion_class_names() {
  static const std::vector<std::string> names{"move_left", "move_right", "approach", "recede",
                                              "static"};
  return names;
}

namespace {

double overlap1d(double lo, double hi, int cell) {
  return std::max(0.0, std::min(hi, cell + 1.0) - std::max(lo, double(cell)));
}

// Horizontal and vertical half extents of a sprite at a given size knob;
// used both for coverage and for keeping trajectories in-frame.
void sprite_extents(SpriteKind kind, double size, double& ex, double& ey) {
  switch (kind) {
    case SpriteKind::Square:
      ex = ey = size;
      break;
    case SpriteKind::Disc:
      ex = ey = size + 0.5;
      break;
    case SpriteKind::Bar:
      ex = std::max(0.6, 0.4 * size);
      ey = 1.8 * size;
      break;
  }
}

double coverage(SpriteKind kind, double cx, double cy, double size, int px, int py) {
  switch (kind) {
    case SpriteKind::Square:
      return overlap1d(cx - size, cx + size, px) * overlap1d(cy - size, cy + size, py);
    case SpriteKind::Disc: {
      const double dx = px + 0.5 - cx;
      const double dy = py + 0.5 - cy;
      const double d = std::sqrt(dx * dx + dy * dy);
      return std::clamp(size + 0.5 - d, 0.0, 1.0);
    }
    case SpriteKind::Bar: {
      double ex, ey;
      sprite_extents(kind, size, ex, ey);
      return overlap1d(cx - ex, cx + ex, px) * overlap1d(cy - ey, cy + ey, py);
    }
  }
  return 0.0;
}

void render_frame(float* f, int side, SpriteKind kind, double cx, double cy, double size,
                  double intensity, double sigma, Rng& rng) {
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double v = coverage(kind, cx, cy, size, x, y) * intensity;
      if (sigma > 0) v += rng.normal() * sigma;
      f[y * side + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
}

}  // namespace

void render_clip(const ClipSpec& spec, Rng& rng, float* out) {
  const int T = spec.frames, side = spec.side;
  const std::int64_t frame = std::int64_t(side) * side;
  const double margin = 1.0;
  const double intensity = rng.uniform(0.65, 1.0);

  auto center_range = [&](double ext, double lo_extra, double& lo, double& hi) {
    lo = margin + ext + lo_extra;
    hi = side - margin - ext;
    if (hi < lo)
      fail("sprite cannot fit trajectory in-frame (side " + std::to_string(side) + ", frames " +
           std::to_string(T) + ", velocity " + std::to_string(spec.velocity) + ")");
  };

  switch (spec.label) {
    case kMoveLeft: {
      const double size = rng.uniform(2.5, 4.0);
      double ex, ey;
      sprite_extents(spec.sprite, size, ex, ey);
      const double travel = spec.velocity * (T - 1);
      double xlo, xhi, ylo, yhi;
      center_range(ex, travel, xlo, xhi);  // start far enough right to move left
      center_range(ey, 0.0, ylo, yhi);
      const double x0 = rng.uniform(xlo, xhi);
      const double cy = rng.uniform(ylo, yhi);
      for (int t = 0; t < T; ++t)
        render_frame(out + t * frame, side, spec.sprite, x0 - spec.velocity * t, cy, size,
                     intensity, spec.noise_sigma, rng);
      break;
    }
    case kApproach: {
      const double s0 = rng.uniform(1.5, 2.5);
      const double s1 = rng.uniform(5.0, 7.0);
      double ex, ey;
      sprite_extents(spec.sprite, s1, ex, ey);
      double xlo, xhi, ylo, yhi;
      center_range(ex, 0.0, xlo, xhi);
      center_range(ey, 0.0, ylo, yhi);
      const double cx = rng.uniform(xlo, xhi);
      const double cy = rng.uniform(ylo, yhi);
      for (int t = 0; t < T; ++t) {
        const double size = s0 + (s1 - s0) * (T > 1 ? double(t) / (T - 1) : 0.0);
        render_frame(out + t * frame, side, spec.sprite, cx, cy, size, intensity,
                     spec.noise_sigma, rng);
      }
      break;
    }
    case kStatic: {
      const double size = rng.uniform(2.5, 5.0);
      double ex, ey;
      sprite_extents(spec.sprite, size, ex, ey);
      double xlo, xhi, ylo, yhi;
      center_range(ex, 0.0, xlo, xhi);
      center_range(ey, 0.0, ylo, yhi);
      const double cx = rng.uniform(xlo, xhi);
      const double cy = rng.uniform(ylo, yhi);
      // one frame, replicated: a static clip is exactly its own reversal
      render_frame(out, side, spec.sprite, cx, cy, size, intensity, spec.noise_sigma, rng);
      for (int t = 1; t < T; ++t)
        std::memcpy(out + t * frame, out, sizeof(float) * static_cast<std::size_t>(frame));
      break;
    }
    default:
      fail("render_clip renders move_left, approach and static; reversed classes are built by "
           "time_reverse");
  }
}

void time_reverse_clip(const float* in, float* out, int frames, std::int64_t frame_elems) {
  for (int t = 0; t < frames; ++t)
    std::memcpy(out + t * frame_elems, in + (frames - 1 - t) * frame_elems,
                sizeof(float) * static_cast<std::size_t>(frame_elems));
}

ClipDataset time_reverse_dataset(const ClipDataset& d) {
  ClipDataset r = d;
  for (std::size_t i = 0; i < d.size(); ++i)
    time_reverse_clip(d.clip(i), r.clip(i), d.frames, d.frame_elems());
  return r;
}

ClipDataset generate_dataset(int n_per_class, const DatasetOptions& opt, Rng& rng) {
  if (n_per_class < 1) fail("generate_dataset: n_per_class must be >= 1");
  SpriteKind base = SpriteKind::Square;
  bool mixed = false;
  if (opt.sprite == "square")
    base = SpriteKind::Square;
  else if (opt.sprite == "disc")
    base = SpriteKind::Disc;
  else if (opt.sprite == "bar")
    base = SpriteKind::Bar;
  else if (opt.sprite == "mixed")
    mixed = true;
  else
    fail("generate_dataset: unknown sprite '" + opt.sprite + "' (square, disc, bar, mixed)");

  ClipDataset d;
  d.frames = opt.frames;
  d.side = opt.side;
  d.channels = 1;
  d.class_names = motion_class_names();
  const std::size_t n = static_cast<std::size_t>(n_per_class) * kNumClasses;
  d.labels.resize(n);
  d.values.assign(n * static_cast<std::size_t>(d.clip_elems()), 0.f);

  ClipSpec spec;
  spec.frames = opt.frames;
  spec.side = opt.side;
  spec.velocity = opt.velocity;
  spec.noise_sigma = opt.noise_sigma;

  const std::int64_t ce = d.clip_elems();
  for (int i = 0; i < n_per_class; ++i) {
    spec.sprite = mixed ? static_cast<SpriteKind>(i % 3) : base;
    float* base_ptr = d.values.data() + std::int64_t(i) * kNumClasses * ce;

    spec.label = kMoveLeft;
    render_clip(spec, rng, base_ptr + kMoveLeft * ce);
    time_reverse_clip(base_ptr + kMoveLeft * ce, base_ptr + kMoveRight * ce, d.frames,
                      d.frame_elems());
    spec.label = kApproach;
    render_clip(spec, rng, base_ptr + kApproach * ce);
    time_reverse_clip(base_ptr + kApproach * ce, base_ptr + kRecede * ce, d.frames,
                      d.frame_elems());
    spec.label = kStatic;
    render_clip(spec, rng, base_ptr + kStatic * ce);

    for (int c = 0; c < kNumClasses; ++c)
      d.labels[static_cast<std::size_t>(i) * kNumClasses + static_cast<std::size_t>(c)] =
          static_cast<std::uint16_t>(c);
  }
  return d;
}

namespace {

void write_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    fail(std::string("truncated dataset file reading ") + what);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

}  // namespace

void save_dataset(const ClipDataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("cannot open dataset for writing: " + path);
  os.write("M2AV", 4);
  write_u32le(os, 1);  // format version
  write_u32le(os, static_cast<std::uint32_t>(d.size()));
  write_u32le(os, static_cast<std::uint32_t>(d.frames));
  write_u32le(os, static_cast<std::uint32_t>(d.side));
  write_u32le(os, static_cast<std::uint32_t>(d.side));
  write_u32le(os, static_cast<std::uint32_t>(d.channels));
  write_u32le(os, static_cast<std::uint32_t>(d.class_names.size()));
  for (const auto& name : d.class_names) os.write(name.c_str(), static_cast<std::streamsize>(name.size() + 1));
  for (std::uint16_t lb : d.labels) {
    unsigned char b[2] = {static_cast<unsigned char>(lb), static_cast<unsigned char>(lb >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
  }
  os.write(reinterpret_cast<const char*>(d.values.data()),
           static_cast<std::streamsize>(d.values.size() * 4));
  if (!os) fail("write failure on dataset: " + path);
}

ClipDataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open dataset: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "M2AV") fail("bad magic in dataset: " + path);
  const auto version = read_u32le(is, "version");
  if (version != 1)
    fail("dataset version " + std::to_string(version) + " unsupported (expected 1)");
  ClipDataset d;
  const auto n = read_u32le(is, "clip count");
  d.frames = static_cast<int>(read_u32le(is, "frames"));
  const auto h = read_u32le(is, "height");
  const auto w = read_u32le(is, "width");
  if (h != w) fail("dataset height " + std::to_string(h) + " != width " + std::to_string(w));
  d.side = static_cast<int>(h);
  d.channels = static_cast<int>(read_u32le(is, "channels"));
  const auto k = read_u32le(is, "class count");
  for (std::uint32_t i = 0; i < k; ++i) {
    std::string name;
    if (!std::getline(is, name, '\0')) fail("truncated dataset file reading class names");
    d.class_names.push_back(std::move(name));
  }
  d.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2)) fail("truncated dataset file reading labels");
    d.labels[i] = static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    if (d.labels[i] >= k) fail("dataset label " + std::to_string(d.labels[i]) + " out of range");
  }
  d.values.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(d.clip_elems()));
  if (!is.read(reinterpret_cast<char*>(d.values.data()),
               static_cast<std::streamsize>(d.values.size() * 4)))
    fail("truncated dataset file reading clip values");
  return d;
}

}  // namespace m2a
