#include "m2a/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "m2a/tensor.hpp"  // fail()

namespace m2a {

int EvalReport::total_count() const {
  int n = 0;
  for (const auto& row : confusion)
    for (int c : row) n += c;
  return n;
}

double EvalReport::subset_accuracy(const std::vector<int>& classes) const {
  int correct = 0, total = 0;
  for (int c : classes) {
    const auto& row = confusion[static_cast<std::size_t>(c)];
    for (std::size_t p = 0; p < row.size(); ++p) {
      total += row[p];
      if (static_cast<int>(p) == c) correct += row[p];
    }
  }
  return total ? double(correct) / total : 0.0;
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%6.2f", v * 100.0);
  return buf;
}

}  // namespace

std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  os << "top-1: " << pct(r.top1) << "%   top-" << r.k << ": " << pct(r.topk) << "%\n";
  os << "class            acc%   predictions (row = true class)\n";
  for (std::size_t c = 0; c < r.class_names.size(); ++c) {
    os << "  " << r.class_names[c];
    for (std::size_t i = r.class_names[c].size(); i < 12; ++i) os << ' ';
    os << pct(r.per_class[c]) << "  ";
    for (int v : r.confusion[c]) {
      char buf[16];
      std::snprintf(buf, sizeof buf, " %4d", v);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "metric,value\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "top1,%.6f\n", r.top1);
  os << buf;
  std::snprintf(buf, sizeof buf, "top%d,%.6f\n", r.k, r.topk);
  os << buf;
  for (std::size_t c = 0; c < r.class_names.size(); ++c) {
    std::snprintf(buf, sizeof buf, ",%.6f\n", r.per_class[c]);
    os << "acc_" << r.class_names[c] << buf;
  }
  return os.str();
}

std::vector<std::pair<std::string, double>> per_class_delta(const EvalReport& a,
                                                            const EvalReport& b) {
  if (a.class_names != b.class_names)
    fail("per_class_delta: reports cover different class sets");
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t c = 0; c < a.class_names.size(); ++c)
    out.emplace_back(a.class_names[c], (a.per_class[c] - b.per_class[c]) * 100.0);
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  return out;
}

std::string per_class_delta_csv(const EvalReport& a, const EvalReport& b) {
  std::ostringstream os;
  os << "class,delta_percentage_points\n";
  for (const auto& [name, d] : per_class_delta(a, b)) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f\n", d);
    os << name << ',' << buf;
  }
  return os.str();
}

void write_pgm(const std::string& path, const std::vector<int>& pixels, int width, int height) {
  if (static_cast<std::size_t>(width) * static_cast<std::size_t>(height) != pixels.size())
    fail("write_pgm: " + std::to_string(pixels.size()) + " pixels for " + std::to_string(width) +
         "x" + std::to_string(height));
  std::ofstream os(path);
  if (!os) fail("cannot open for writing: " + path);
  os << "P2\n" << width << " " << height << "\n255\n";
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (x) os << ' ';
      os << pixels[static_cast<std::size_t>(y) * width + x];
    }
    os << '\n';
  }
  if (!os) fail("write failure: " + path);
}

std::vector<int> read_pgm(const std::string& path, int* width, int* height) {
  std::ifstream is(path);
  if (!is) fail("cannot open: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P2") fail("not an ASCII PGM: " + path);
  int w, h, maxval;
  if (!(is >> w >> h >> maxval)) fail("malformed PGM header: " + path);
  std::vector<int> px(static_cast<std::size_t>(w) * h);
  for (auto& p : px)
    if (!(is >> p)) fail("truncated PGM: " + path);
  *width = w;
  *height = h;
  return px;
}

void export_heatmaps(const std::vector<float>& maps, int t_frames, int map_h, int map_w,
                     const std::vector<float>& clip, int side, int channels,
                     const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::size_t map_sz = static_cast<std::size_t>(map_h) * map_w;
  const std::size_t frame_sz = static_cast<std::size_t>(side) * side * channels;
  if (maps.size() != map_sz * t_frames) fail("export_heatmaps: map size mismatch");
  if (clip.size() != frame_sz * t_frames) fail("export_heatmaps: clip size mismatch");

  auto quantize = [](float v) {
    return std::clamp(static_cast<int>(std::lround(double(v) * 255.0)), 0, 255);
  };
  for (int t = 0; t < t_frames; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%02d_cam.pgm", t);
    std::vector<int> px(map_sz);
    for (std::size_t i = 0; i < map_sz; ++i) px[i] = quantize(maps[t * map_sz + i]);
    write_pgm((fs::path(out_dir) / name).string(), px, map_w, map_h);

    std::snprintf(name, sizeof name, "frame_%02d_input.pgm", t);
    std::vector<int> ipx(static_cast<std::size_t>(side) * side);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        ipx[static_cast<std::size_t>(y) * side + x] =
            quantize(clip[t * frame_sz + (static_cast<std::size_t>(y) * side + x) * channels]);
    write_pgm((fs::path(out_dir) / name).string(), ipx, side, side);
  }
}

}  // namespace m2a
