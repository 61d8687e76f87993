#pragma once

#include <string>
#include <vector>

namespace m2a {

struct EvalReport {
  int k = 2;  // the k of top-k
  double top1 = 0.0;
  double topk = 0.0;
  std::vector<std::string> class_names;
  std::vector<double> per_class;             // per-class accuracy, fractions
  std::vector<std::vector<int>> confusion;   // [true][predicted]

  int total_count() const;
  /// Accuracy restricted to a subset of class indices.
  double subset_accuracy(const std::vector<int>& classes) const;
};

std::string report_table(const EvalReport& r);
std::string report_csv(const EvalReport& r);

/// a.per_class - b.per_class in percentage points, sorted descending.
std::vector<std::pair<std::string, double>> per_class_delta(const EvalReport& a,
                                                            const EvalReport& b);
std::string per_class_delta_csv(const EvalReport& a, const EvalReport& b);

/// ASCII PGM (P2, maxval 255).
void write_pgm(const std::string& path, const std::vector<int>& pixels, int width, int height);
std::vector<int> read_pgm(const std::string& path, int* width, int* height);

/// Writes frame_{t:02}_cam.pgm (heatmap, hxw) and frame_{t:02}_input.pgm
/// (first input channel, side x side) per frame. maps holds T*h*w values in
/// [0,1]; clip holds T*side*side*channels values in [0,1].
void export_heatmaps(const std::vector<float>& maps, int t_frames, int map_h, int map_w,
                     const std::vector<float>& clip, int side, int channels,
                     const std::string& out_dir);

}  // namespace m2a
