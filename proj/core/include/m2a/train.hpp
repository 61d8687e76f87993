#pragma once

#include <cstdio>
#include <ostream>
#include <numeric>

#include "m2a/backbone.hpp"
#include "m2a/checkpoint.hpp"
#include "m2a/dataset.hpp"
#include "m2a/metrics.hpp"

namespace m2a {

enum class OptimizerKind { SGD, SGDMomentum, Adam };

inline const char* optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::SGD: return "sgd";
    case OptimizerKind::SGDMomentum: return "sgd_momentum";
    case OptimizerKind::Adam: return "adam";
  }
  return "?";
}

inline std::optional<OptimizerKind> parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::SGD;
  if (s == "sgd_momentum") return OptimizerKind::SGDMomentum;
  if (s == "adam") return OptimizerKind::Adam;
  return std::nullopt;
}

struct TrainConfig {
  MechanismVariant variant = MechanismVariant::M2AFull;
  int epochs = 30;
  int batch = 16;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;
  int reduction = 8;
  int topk = 2;

  void validate(std::size_t dataset_size) const {
    if (epochs < 1 || batch < 1 || lr < 0)
      fail("train config: epochs/batch must be positive, lr non-negative");
    if (static_cast<std::size_t>(batch) > dataset_size)
      fail("train config: batch " + std::to_string(batch) + " exceeds dataset size " +
           std::to_string(dataset_size));
  }
};

/// Plain SGD, SGD with 0.9 momentum, or Adam (0.9, 0.999, 1e-8).
template <class S>
class Optimizer {
 public:
  Optimizer(std::vector<TensorT<S>*> params, OptimizerKind kind, double lr)
      : params_(std::move(params)), kind_(kind), lr_(lr) {
    if (kind_ != OptimizerKind::SGD) {
      m_.resize(params_.size());
      for (std::size_t i = 0; i < params_.size(); ++i)
        m_[i].assign(static_cast<std::size_t>(params_[i]->numel()), S(0));
    }
    if (kind_ == OptimizerKind::Adam) {
      v_.resize(params_.size());
      for (std::size_t i = 0; i < params_.size(); ++i)
        v_[i].assign(static_cast<std::size_t>(params_[i]->numel()), S(0));
    }
  }

  void step() {
    ++t_;
    const S lr = static_cast<S>(lr_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      TensorT<S>& p = *params_[i];
      S* w = p.data();
      const S* g = p.grad();
      const std::int64_t n = p.numel();
      switch (kind_) {
        case OptimizerKind::SGD:
          for (std::int64_t j = 0; j < n; ++j) w[j] -= lr * g[j];
          break;
        case OptimizerKind::SGDMomentum: {
          S* mv = m_[i].data();
          for (std::int64_t j = 0; j < n; ++j) {
            mv[j] = S(0.9) * mv[j] + g[j];
            w[j] -= lr * mv[j];
          }
          break;
        }
        case OptimizerKind::Adam: {
          S* mv = m_[i].data();
          S* vv = v_[i].data();
          const S b1 = S(0.9), b2 = S(0.999), eps = S(1e-8);
          const S c1 = S(1) - static_cast<S>(std::pow(0.9, t_));
          const S c2 = S(1) - static_cast<S>(std::pow(0.999, t_));
          for (std::int64_t j = 0; j < n; ++j) {
            mv[j] = b1 * mv[j] + (S(1) - b1) * g[j];
            vv[j] = b2 * vv[j] + (S(1) - b2) * g[j] * g[j];
            const S mhat = mv[j] / c1;
            const S vhat = vv[j] / c2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
          }
          break;
        }
      }
    }
  }

 private:
  std::vector<TensorT<S>*> params_;
  OptimizerKind kind_;
  double lr_;
  std::int64_t t_ = 0;
  std::vector<std::vector<S>> m_, v_;
};

namespace detail {

/// Copies dataset clips into a batch tensor (B,T,H,W,C).
template <class S>
TensorT<S> make_batch(const ClipDataset& d, const std::vector<int>& order, std::size_t begin,
                      std::size_t count) {
  auto t = TensorT<S>::zeros({static_cast<int>(count), d.frames, d.side, d.side, d.channels});
  const std::int64_t ce = d.clip_elems();
  for (std::size_t i = 0; i < count; ++i) {
    const float* src = d.clip(static_cast<std::size_t>(order[begin + i]));
    S* dst = t.data() + static_cast<std::int64_t>(i) * ce;
    for (std::int64_t j = 0; j < ce; ++j) dst[j] = static_cast<S>(src[j]);
  }
  return t;
}

/// Rank of `label` among logits: # classes strictly above it plus equal
/// scores at lower index. rank 0 = top-1 prediction; ties go to the lower
/// class index.
template <class S>
int label_rank(const S* row, int k_classes, int label) {
  int rank = 0;
  for (int j = 0; j < k_classes; ++j) {
    if (row[j] > row[label]) ++rank;
    else if (row[j] == row[label] && j < label) ++rank;
  }
  return rank;
}

}  // namespace detail

/// Deterministic minibatch training; writes one CSV row per epoch
/// (epoch,step,loss,top1,topk over the training batches) and returns the
/// trained model. Aborts with a diagnostic if the loss goes NaN.
template <class S>
ModelT<S> train_model(const TrainConfig& cfg, const BackboneConfig& arch,
                      const ClipDataset& data, std::ostream* metrics) {
  cfg.validate(data.size());
  if (arch.frames != data.frames || arch.side != data.side || arch.in_channels != data.channels)
    fail("train: backbone geometry does not match dataset (" + std::to_string(data.frames) + "," +
         std::to_string(data.side) + "," + std::to_string(data.channels) + ")");

  Rng init_rng(cfg.seed);
  auto model = build_backbone<S>(arch, init_rng);
  insert_mechanism(model, cfg.variant, init_rng, cfg.reduction);

  Optimizer<S> opt(
      [&] {
        std::vector<TensorT<S>*> ps;
        model.visit_params([&](const std::string&, TensorT<S>& t) { ps.push_back(&t); });
        return ps;
      }(),
      cfg.optimizer, cfg.lr);

  Rng shuffle_rng = init_rng.fork(1);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  if (metrics) *metrics << "epoch,step,loss,top1,topk\n";
  std::int64_t global_step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Fisher-Yates with the run's own stream keeps epochs reproducible.
    for (std::size_t i = data.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    std::int64_t batches = 0, correct1 = 0, correctk = 0, seen = 0;
    for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t count = std::min<std::size_t>(cfg.batch, data.size() - begin);
      auto batch = detail::make_batch<S>(data, order, begin, count);
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i)
        labels[i] = data.labels[static_cast<std::size_t>(order[begin + i])];

      auto logits = forward(model, batch);
      auto loss = cross_entropy(logits, labels);
      const double loss_val = static_cast<double>(loss.item());
      ++global_step;
      if (std::isnan(loss_val))
        fail("training diverged: loss is NaN at step " + std::to_string(global_step));
      loss_sum += loss_val;
      ++batches;
      const int K = logits.extent(1);
      for (std::size_t i = 0; i < count; ++i) {
        const int rank = detail::label_rank(logits.data() + static_cast<std::int64_t>(i) * K, K,
                                            labels[i]);
        correct1 += rank < 1;
        correctk += rank < cfg.topk;
        ++seen;
      }
      loss.backward();
      opt.step();
      model.zero_grads();
    }
    if (metrics) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%d,%lld,%.6f,%.6f,%.6f\n", epoch,
                    static_cast<long long>(global_step), loss_sum / double(batches),
                    double(correct1) / double(seen), double(correctk) / double(seen));
      *metrics << buf;
    }
  }
  return model;
}

/// Evaluation over a dataset. Ties in the logit ranking resolve to the
/// lower class index.
template <class S>
EvalReport evaluate(ModelT<S>& model, const ClipDataset& data, int k, int eval_batch = 25) {
  if (data.size() == 0) fail("evaluate: empty dataset");
  if (k < 1 || k > static_cast<int>(data.class_names.size()))
    fail("evaluate: top-k k=" + std::to_string(k) + " out of range");
  NoGradGuard ng;
  EvalReport r;
  r.k = k;
  r.class_names = data.class_names;
  const int K = static_cast<int>(data.class_names.size());
  r.confusion.assign(K, std::vector<int>(K, 0));

  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::int64_t correct1 = 0, correctk = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(eval_batch)) {
    const std::size_t count = std::min<std::size_t>(eval_batch, data.size() - begin);
    auto batch = detail::make_batch<S>(data, order, begin, count);
    auto logits = forward(model, batch);
    const int KL = logits.extent(1);
    for (std::size_t i = 0; i < count; ++i) {
      const int label = data.labels[begin + i];
      const S* row = logits.data() + static_cast<std::int64_t>(i) * KL;
      const int pred = argmax_row(row, KL);
      const int rank = detail::label_rank(row, KL, label);
      correct1 += rank < 1;
      correctk += rank < k;
      r.confusion[static_cast<std::size_t>(label)][static_cast<std::size_t>(pred)]++;
    }
  }
  r.top1 = double(correct1) / double(data.size());
  r.topk = double(correctk) / double(data.size());
  r.per_class.assign(static_cast<std::size_t>(K), 0.0);
  for (int c = 0; c < K; ++c) {
    int row_total = 0;
    for (int p = 0; p < K; ++p) row_total += r.confusion[c][p];
    r.per_class[static_cast<std::size_t>(c)] =
        row_total ? double(r.confusion[c][c]) / row_total : 0.0;
  }
  return r;
}

namespace detail {

/// The Grad-CAM arithmetic on a raw activation/gradient pair laid out as
/// (T,h,w,ch): per frame, channel weights are the spatial mean of the
/// gradient; the map is the relu of the weighted channel sum, normalized
/// by the global max over all frames (an all-zero map stays zero).
template <class S>
std::vector<float> gradcam_maps(const S* a, const S* g, int T, int h, int w, int ch) {
  std::vector<float> maps(static_cast<std::size_t>(T) * h * w, 0.f);
  std::vector<double> alpha(static_cast<std::size_t>(ch));
  double global_max = 0.0;
  for (int t = 0; t < T; ++t) {
    const std::int64_t base = std::int64_t(t) * h * w * ch;
    std::fill(alpha.begin(), alpha.end(), 0.0);
    for (std::int64_t i = 0; i < std::int64_t(h) * w; ++i)
      for (int c = 0; c < ch; ++c) alpha[static_cast<std::size_t>(c)] += g[base + i * ch + c];
    for (int c = 0; c < ch; ++c) alpha[static_cast<std::size_t>(c)] /= double(h) * w;
    for (std::int64_t i = 0; i < std::int64_t(h) * w; ++i) {
      double v = 0.0;
      for (int c = 0; c < ch; ++c)
        v += alpha[static_cast<std::size_t>(c)] * double(a[base + i * ch + c]);
      v = std::max(v, 0.0);
      maps[static_cast<std::size_t>(t) * h * w + static_cast<std::size_t>(i)] =
          static_cast<float>(v);
      global_max = std::max(global_max, v);
    }
  }
  if (global_max > 0)
    for (auto& v : maps) v = static_cast<float>(v / global_max);
  return maps;
}

}  // namespace detail

/// Grad-CAM over the selected activation; see detail::gradcam_maps for the
/// arithmetic. Returns T maps of map_h x map_w.
template <class S>
std::vector<float> grad_cam(ModelT<S>& model, const TensorT<S>& clip, const std::string& selector,
                            int target_class, int* map_h, int* map_w) {
  if (clip.rank() != 5 || clip.extent(0) != 1)
    fail("grad_cam: expected a single clip (1,T,H,W,C), got " + shape_str(clip.shape()));
  if (target_class < 0 || target_class >= model.cfg.num_classes)
    fail("grad_cam: target class " + std::to_string(target_class) + " out of range");

  TensorT<S> act;
  auto logits = forward(model, clip, &selector, &act);
  if (act.rank() != 5)
    fail("grad_cam: selector '" + selector + "' does not name a spatial activation");
  auto mask = TensorT<S>::zeros(logits.shape());
  mask.data()[target_class] = S(1);
  sum_all(mul(logits, mask)).backward();

  const S* g = act.grad();
  if (!g) fail("grad_cam: selected activation has no gradient");
  auto maps = detail::gradcam_maps(act.data(), g, act.extent(1), act.extent(2), act.extent(3),
                                   act.extent(4));
  model.zero_grads();
  *map_h = act.extent(2);
  *map_w = act.extent(3);
  return maps;
}

}  // namespace m2a
