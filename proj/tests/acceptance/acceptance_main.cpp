// Release gate: one pass/fail line per criterion, exit code = number of
// failures. Drives both the library and the CLI binary (passed as --cli).
// Tolerances are pinned here on purpose; loosening them is a release
// decision, not a test fix.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "m2a/backbone.hpp"
#include "m2a/complexity.hpp"
#include "m2a/dataset.hpp"
#include "m2a/gradcheck.hpp"
#include "m2a/mechanisms.hpp"
#include "m2a/metrics.hpp"
#include "m2a/train.hpp"
#include "reference.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace m2a;
using testutil::max_rel_err;
using testutil::rand_tensor;
using testutil::to_vec;

namespace {

std::string g_cli;
const fs::path g_work = "/tmp/m2a_acceptance";
int g_failures = 0;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void report(int idx, const std::string& what, bool ok, const std::string& detail, double secs) {
  std::printf("[%s] criterion %d: %s (%s) [%.2fs]\n", ok ? "PASS" : "FAIL", idx, what.c_str(),
              detail.c_str(), secs);
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const std::string capture = (g_work / ("cli_" + std::to_string(counter++) + ".txt")).string();
  const int status = std::system((g_cli + " " + args + " > " + capture + " 2>&1").c_str());
  RunResult r;
  if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
  std::ifstream is(capture);
  std::ostringstream os;
  os << is.rdbuf();
  r.output = os.str();
  std::remove(capture.c_str());
  return r;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) return "<missing:" + p.string() + ">";
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// pulls the number right after `key` out of CLI output, -1 if absent
double number_after(const std::string& text, const std::string& key) {
  const auto pos = text.find(key);
  if (pos == std::string::npos) return -1.0;
  return std::atof(text.c_str() + pos + key.size());
}

std::string fmt1(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.1f", v);
  return b;
}

// ------------------------------------------------------------- criterion 1

void criterion_macs() {
  Timer timer;
  auto rn = run_cli("macs --arch resnet18 --frames 8 --side 224 --variant m2a");
  auto mb = run_cli("macs --arch mobilenetv2 --frames 8 --side 224 --variant none");
  const double rn_base = number_after(rn.output, "base total: ");
  const double rn_pct = number_after(rn.output, "GMACs  (+");
  const double mb_base = number_after(mb.output, "base total: ");

  const bool ok = rn.code == 0 && mb.code == 0 && rn_base >= 14.42 && rn_base <= 14.72 &&
                  mb_base >= 2.47 && mb_base <= 2.63 && rn_pct >= 1.2 && rn_pct <= 2.0 &&
                  timer.seconds() < 1.0;
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "resnet18 %.4f GMACs, m2a overhead +%.2f%%, mobilenetv2 %.4f GMACs", rn_base,
                rn_pct, mb_base);
  report(1, "analytic MAC bands", ok, detail, timer.seconds());
}

// ------------------------------------------------------------- criterion 2

using ScalarFn = std::function<Tensor(std::vector<Tensor>&)>;

Tensor rand_away_from_zero(Rng& rng, Shape shape, double gap = 0.1) {
  auto t = rand_tensor(rng, std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    double& v = *(t.data() + i);
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  }
  return t;
}

void criterion_gradients() {
  Timer timer;
  const double kTol = 1e-4;
  Rng rng(20);
  double worst = 0.0;
  std::string worst_op = "none";
  int checks = 0;
  bool ok = true;

  auto check = [&](const std::string& op, const ScalarFn& f, std::vector<Tensor> inputs) {
    const double err = grad_check(f, std::move(inputs), 1e-5);
    ++checks;
    if (std::isnan(err) || err >= kTol) ok = false;
    if (std::isnan(err) || err > worst) {
      worst = err;
      worst_op = op;
    }
  };

  auto probe_sum = [&](const Tensor& y) {
    Rng prng(99);
    auto p = rand_tensor(prng, y.shape());
    return sum_all(mul(y, p.detached()));
  };

  check("add", [](std::vector<Tensor>& in) { return sum_all(add(in[0], in[1])); },
        {rand_tensor(rng, {2, 3, 4}), rand_tensor(rng, {2, 3, 4})});
  check("sub", [](std::vector<Tensor>& in) { return sum_all(mul(sub(in[0], in[1]), in[0])); },
        {rand_tensor(rng, {3, 4}), rand_tensor(rng, {3, 4})});
  check("mul", [](std::vector<Tensor>& in) { return sum_all(mul(in[0], in[1])); },
        {rand_tensor(rng, {2, 4, 4, 3}), rand_tensor(rng, {2, 4, 4, 3})});
  check("scale", [](std::vector<Tensor>& in) { return sum_all(scale(mul(in[0], in[0]), -1.7)); },
        {rand_tensor(rng, {3, 4, 2})});
  check("sigmoid", [](std::vector<Tensor>& in) { return sum_all(sigmoid(in[0])); },
        {rand_tensor(rng, {3, 4, 4}, -3, 3)});
  check("relu", [](std::vector<Tensor>& in) { return sum_all(mul(relu(in[0]), in[0])); },
        {rand_away_from_zero(rng, {3, 4, 4})});
  check("reshape",
        [](std::vector<Tensor>& in) { return sum_all(mul(reshape(in[0], {4, 6}), reshape(in[0], {4, 6}))); },
        {rand_tensor(rng, {2, 3, 4})});
  check("transpose2d",
        [](std::vector<Tensor>& in) { return sum_all(mul(transpose2d(in[0]), transpose2d(in[0]))); },
        {rand_tensor(rng, {3, 4})});
  check("btranspose",
        [](std::vector<Tensor>& in) { return sum_all(mul(btranspose(in[0]), btranspose(in[0]))); },
        {rand_tensor(rng, {2, 3, 4})});
  check("matmul", [](std::vector<Tensor>& in) { return sum_all(matmul(in[0], in[1])); },
        {rand_tensor(rng, {3, 4}), rand_tensor(rng, {4, 2})});
  check("bmm", [](std::vector<Tensor>& in) { return sum_all(bmm(in[0], in[1])); },
        {rand_tensor(rng, {2, 3, 4}), rand_tensor(rng, {2, 4, 2})});
  check("linear", [](std::vector<Tensor>& in) { return sum_all(linear(in[0], in[1], in[2])); },
        {rand_tensor(rng, {3, 4}), rand_tensor(rng, {4, 2}), rand_tensor(rng, {2})});
  check("add_channel_bias",
        [](std::vector<Tensor>& in) { return sum_all(mul(add_channel_bias(in[0], in[1]), in[0])); },
        {rand_tensor(rng, {2, 3, 3, 4}), rand_tensor(rng, {4})});
  check("conv2d s1p1",
        [](std::vector<Tensor>& in) { return sum_all(conv2d(in[0], in[1], in[2], 1, 1)); },
        {rand_tensor(rng, {2, 4, 4, 3}), rand_tensor(rng, {3, 3, 3, 2}), rand_tensor(rng, {2})});
  check("conv2d s2p0",
        [](std::vector<Tensor>& in) { return sum_all(conv2d(in[0], in[1], 2, 0)); },
        {rand_tensor(rng, {2, 4, 4, 2}), rand_tensor(rng, {2, 2, 2, 3})});
  check("conv2d batched 1x1",
        [](std::vector<Tensor>& in) { return sum_all(conv2d(in[0], in[1], 1, 0)); },
        {rand_tensor(rng, {2, 2, 4, 4, 2}), rand_tensor(rng, {1, 1, 2, 3})});
  for (int axis = 0; axis < 3; ++axis)
    check("softmax axis " + std::to_string(axis),
          [axis, &probe_sum](std::vector<Tensor>& in) { return probe_sum(softmax(in[0], axis)); },
          {rand_tensor(rng, {2, 3, 4}, -2, 2)});
  check("layer_norm",
        [&probe_sum](std::vector<Tensor>& in) {
          return probe_sum(layer_norm(in[0], {1, 2, 3}, in[1], in[2]));
        },
        {rand_tensor(rng, {3, 4, 4, 2}), rand_tensor(rng, {2}, 0.5, 1.5),
         rand_tensor(rng, {2}, -0.5, 0.5)});
  check("reduce_mean",
        [&probe_sum](std::vector<Tensor>& in) { return probe_sum(reduce_mean(in[0], {1, 2})); },
        {rand_tensor(rng, {3, 4, 4, 2})});
  check("reduce_sum",
        [&probe_sum](std::vector<Tensor>& in) { return probe_sum(reduce_sum(in[0], {0, 3})); },
        {rand_tensor(rng, {3, 4, 4, 2})});
  {
    // spread values so the max location is insensitive to the probe step
    auto t = rand_tensor(rng, {3, 4, 4});
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] += 0.01 * double(i);
    check("reduce_max",
          [&probe_sum](std::vector<Tensor>& in) { return probe_sum(reduce_max(in[0], {1})); },
          {t});
  }
  check("cross_entropy",
        [](std::vector<Tensor>& in) { return cross_entropy(in[0], {1, 0, 2}); },
        {rand_tensor(rng, {3, 4}, -2, 2)});
  check("temporal_shift_left",
        [&probe_sum](std::vector<Tensor>& in) { return probe_sum(temporal_shift_left(in[0])); },
        {rand_tensor(rng, {3, 4, 4, 2})});
  check("motion_difference",
        [&probe_sum](std::vector<Tensor>& in) { return probe_sum(motion_difference(in[0])); },
        {rand_tensor(rng, {2, 3, 4, 4, 2})});
  check("temporal_self_attention",
        [&probe_sum](std::vector<Tensor>& in) {
          return probe_sum(temporal_self_attention(in[0]));
        },
        {rand_tensor(rng, {3, 2, 2, 2})});
  check("tsm_shift",
        [&probe_sum](std::vector<Tensor>& in) { return probe_sum(tsm_shift(in[0])); },
        {rand_tensor(rng, {3, 2, 2, 8})});

  // the full block, each branch, with every parameter as a checked input.
  // R=4 so the bottleneck keeps 2 channels; a 1-channel bottleneck makes
  // b_down exactly invisible to the norm and FD can only measure roundoff.
  const int C = 8, R = 4, cr = C / R;
  for (auto v : {MechanismVariant::M2AFull, MechanismVariant::M2AAttention,
                 MechanismVariant::M2AMotion}) {
    std::vector<Tensor> inputs = {
        rand_tensor(rng, {3, 4, 4, C}),
        rand_tensor(rng, {1, 1, C, cr}),
        rand_tensor(rng, {cr}, -0.3, 0.3),
        rand_tensor(rng, {cr}, 0.7, 1.3),
        rand_tensor(rng, {cr}, -0.3, 0.3),
        rand_tensor(rng, {1, 1, cr, C}),
        rand_tensor(rng, {C}, -0.3, 0.3),
    };
    check(std::string("m2a_forward ") + variant_name(v),
          [v, C, R, &probe_sum](std::vector<Tensor>& in) {
            M2AParams p;
            p.channels = C;
            p.reduction = R;
            p.w_down = in[1];
            p.b_down = in[2];
            p.gamma = in[3];
            p.beta = in[4];
            p.w_up = in[5];
            p.b_up = in[6];
            return probe_sum(m2a_forward(in[0], p, v));
          },
          std::move(inputs));
  }

  ok = ok && timer.seconds() < 60.0;
  char detail[120];
  std::snprintf(detail, sizeof detail, "worst rel err %.2e at %s across %d checks, tol 1e-4",
                worst, worst_op.c_str(), checks);
  report(2, "finite-difference gradients", ok, detail, timer.seconds());
}

// ------------------------------------------------------------- criterion 3

Tensor f32_grid_tensor(Rng& rng, Shape shape) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& e : v) e = double(float(rng.uniform(0.001, 1.0)));
  return Tensor::from(std::move(shape), std::move(v));
}

void criterion_identities() {
  Timer timer;
  const int kCases = 100;
  bool ok = true;
  std::string first_bad;
  auto flag = [&](bool cond, const char* what) {
    if (!cond && first_bad.empty()) first_bad = what;
    ok = ok && cond;
  };

  Rng rng(30);
  NoGradGuard ng;
  for (int c = 0; c < kCases; ++c) {
    const int T = 1 + int(rng.uniform_int(0, 5));
    const int h = 1 + int(rng.uniform_int(0, 2));
    const int w = 1 + int(rng.uniform_int(0, 2));
    const int ch = 1 + int(rng.uniform_int(0, 3));

    // circular shift has period exactly T
    auto x = rand_tensor(rng, {T, h, w, ch});
    auto shifted = x;
    for (int i = 0; i < T; ++i) shifted = temporal_shift_left(shifted);
    flag(std::memcmp(shifted.data(), x.data(), sizeof(double) * std::size_t(x.numel())) == 0,
         "shift period");

    // motion differences telescope to exactly zero on f32-grid data
    auto grid = f32_grid_tensor(rng, {T, h, w, ch});
    auto md = motion_difference(grid);
    const std::int64_t inner = std::int64_t(h) * w * ch;
    for (std::int64_t i = 0; i < inner; ++i) {
      double sum = 0.0;
      for (int t = 0; t < T; ++t) sum += md.data()[t * inner + i];
      flag(sum == 0.0, "motion telescoping");
    }

    // a single frame attends only to itself
    auto z1 = rand_tensor(rng, {1, h, w, ch});
    auto a1 = temporal_self_attention(z1);
    flag(std::memcmp(a1.data(), z1.data(), sizeof(double) * std::size_t(z1.numel())) == 0,
         "T=1 attention identity");

    // zeroed up-projection gives a half-open gate: y = 1.5 x
    {
      const int C = 8;
      Rng prng(300 + c);
      auto params = M2AParams::init(C, 8, prng);
      for (std::int64_t i = 0; i < params.w_up.numel(); ++i) params.w_up.data()[i] = 0.0;
      auto xin = rand_tensor(rng, {T, h, w, C});
      const auto variant = c % 3 == 0   ? MechanismVariant::M2AFull
                           : c % 3 == 1 ? MechanismVariant::M2AAttention
                                        : MechanismVariant::M2AMotion;
      auto y = m2a_forward(xin, params, variant);
      for (std::int64_t i = 0; i < y.numel(); ++i) {
        const double want = 1.5 * xin.data()[i];
        flag(std::abs(y.data()[i] - want) <= 1e-6 * std::max(1.0, std::abs(want)),
             "zero w_up gate");
      }
    }

    // softmax rows sum to one on every axis
    auto s = rand_tensor(rng, {2, 3, 4}, -5, 5);
    const int axis = int(rng.uniform_int(0, 2));
    auto sm = softmax(s, axis);
    auto sums = reduce_sum(sm, {axis});
    for (std::int64_t i = 0; i < sums.numel(); ++i)
      flag(std::abs(sums.data()[i] - 1.0) <= 1e-6, "softmax row sum");
  }

  char detail[120];
  std::snprintf(detail, sizeof detail, "%d seeded cases per identity%s%s", kCases,
                first_bad.empty() ? "" : ", first failure: ",
                first_bad.c_str());
  report(3, "algebraic identities", ok, detail, timer.seconds());
}

// ------------------------------------------------------- criteria 4 and 5

struct QuartetResult {
  EvalReport none, attn, motion, full;
  double none_logit_gap = 0.0;  // worst |logit| difference vs time reversal
  double train_seconds = 0.0;
  bool trained = false;
};

QuartetResult run_quartet() {
  QuartetResult q;
  const fs::path data_dir = g_work / "dataset";
  auto gen = run_cli("gen-data --out " + data_dir.string() + " --seed 0");
  if (gen.code != 0) {
    std::fprintf(stderr, "gen-data failed:\n%s", gen.output.c_str());
    return q;
  }
  auto train_set = load_dataset((data_dir / "train.m2av").string());
  auto test_set = load_dataset((data_dir / "test.m2av").string());

  BackboneConfig arch;
  arch.frames = train_set.frames;
  arch.side = train_set.side;

  Timer train_timer;
  auto train_variant = [&](MechanismVariant v) {
    TrainConfig cfg;  // the default recipe: adam, lr 1e-3, batch 16, 30 epochs
    cfg.variant = v;
    cfg.seed = 0;
    auto model = train_model<float>(cfg, arch, train_set, nullptr);
    if (v == MechanismVariant::None) {
      // worst logit difference between each clip and its reversal
      NoGradGuard ng;
      auto reversed = time_reverse_dataset(test_set);
      std::vector<int> order(test_set.size());
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t begin = 0; begin < test_set.size(); begin += 25) {
        const std::size_t count = std::min<std::size_t>(25, test_set.size() - begin);
        auto fwd = forward(model, detail::make_batch<float>(test_set, order, begin, count));
        auto rev = forward(model, detail::make_batch<float>(reversed, order, begin, count));
        for (std::int64_t i = 0; i < fwd.numel(); ++i)
          q.none_logit_gap =
              std::max(q.none_logit_gap, double(std::abs(fwd.data()[i] - rev.data()[i])));
      }
    }
    return evaluate(model, test_set, 2);
  };

  q.none = train_variant(MechanismVariant::None);
  q.attn = train_variant(MechanismVariant::M2AAttention);
  q.motion = train_variant(MechanismVariant::M2AMotion);
  q.full = train_variant(MechanismVariant::M2AFull);
  q.train_seconds = train_timer.seconds();
  q.trained = true;
  return q;
}

void criterion_order_invariance(const QuartetResult& q) {
  Timer timer;
  const std::vector<int> paired = {kMoveLeft, kMoveRight, kApproach, kRecede};
  const double none_paired = q.none.subset_accuracy(paired);
  const bool ok = q.trained && q.none_logit_gap <= 1e-5 && none_paired <= 0.55;
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "plain backbone: reversal logit gap %.2e (tol 1e-5), paired top-1 %s%% (cap 55%%)",
                q.none_logit_gap, fmt1(100 * none_paired).c_str());
  report(4, "order-invariance oracle", ok, detail, timer.seconds());
}

void criterion_ablation(const QuartetResult& q) {
  const std::vector<int> paired = {kMoveLeft, kMoveRight, kApproach, kRecede};
  const double full_paired = q.full.subset_accuracy(paired);
  const double none_paired = q.none.subset_accuracy(paired);
  const bool ok = q.trained && q.full.top1 >= 0.90 && full_paired >= none_paired + 0.25 &&
                  q.full.top1 >= q.attn.top1 - 0.02 && q.full.top1 >= q.motion.top1 - 0.02 &&
                  q.train_seconds < 600.0;
  char detail[220];
  std::snprintf(detail, sizeof detail,
                "full %s%% overall (floor 90%%), paired %s%% vs plain %s%% (gap >= 25pp), "
                "attention-only %s%%, motion-only %s%%, quartet %.0fs (cap 600s)",
                fmt1(100 * q.full.top1).c_str(), fmt1(100 * full_paired).c_str(),
                fmt1(100 * none_paired).c_str(), fmt1(100 * q.attn.top1).c_str(),
                fmt1(100 * q.motion.top1).c_str(), q.train_seconds);
  report(5, "ablation separation", ok, detail, q.train_seconds);
}

// ------------------------------------------------------------- criterion 6

void criterion_oracles() {
  Timer timer;
  const double kTol = 1e-6;
  Rng rng(60);
  double worst = 0.0;
  std::string worst_op = "none";
  bool ok = true;
  auto track = [&](const char* op, double err) {
    if (err > worst) {
      worst = err;
      worst_op = op;
    }
    ok = ok && err <= kTol;
  };

  NoGradGuard ng;
  for (int c = 0; c < 20; ++c) {
    {
      const int m = 1 + int(rng.uniform_int(0, 5)), k = 1 + int(rng.uniform_int(0, 5)),
                n = 1 + int(rng.uniform_int(0, 5));
      auto a = rand_tensor(rng, {m, k});
      auto b = rand_tensor(rng, {k, n});
      track("matmul", max_rel_err(to_vec(matmul(a, b)), ref::matmul(to_vec(a), to_vec(b), m, k, n)));
    }
    {
      const int n = 1 + int(rng.uniform_int(0, 2)), h = 3 + int(rng.uniform_int(0, 3)),
                w = 3 + int(rng.uniform_int(0, 3)), cin = 1 + int(rng.uniform_int(0, 2)),
                cout = 1 + int(rng.uniform_int(0, 2)), kk = 1 + int(rng.uniform_int(0, 2)),
                stride = 1 + int(rng.uniform_int(0, 1)), pad = int(rng.uniform_int(0, 1));
      auto x = rand_tensor(rng, {n, h, w, cin});
      auto wgt = rand_tensor(rng, {kk, kk, cin, cout});
      auto bias = rand_tensor(rng, {cout});
      int oh = 0, ow = 0;
      auto want = ref::conv2d(to_vec(x), n, h, w, cin, to_vec(wgt), kk, kk, cout, stride, pad,
                              to_vec(bias), &oh, &ow);
      track("conv2d", max_rel_err(to_vec(conv2d(x, wgt, bias, stride, pad)), want));
    }
    {
      const int outer = 2 + int(rng.uniform_int(0, 2)), chn = 1 + int(rng.uniform_int(0, 3));
      const int reps = 1 + int(rng.uniform_int(0, 3));
      const int inner = chn * reps;
      auto x = rand_tensor(rng, {outer, reps, chn});
      auto gamma = rand_tensor(rng, {chn}, 0.5, 1.5);
      auto beta = rand_tensor(rng, {chn}, -0.5, 0.5);
      auto got = layer_norm(x, {1, 2}, gamma, beta);
      track("layer_norm", max_rel_err(to_vec(got), ref::layer_norm(to_vec(x), outer, inner,
                                                                   to_vec(gamma), to_vec(beta),
                                                                   chn, 1e-5)));
    }
    {
      const int b = 1 + int(rng.uniform_int(0, 1)), T = 1 + int(rng.uniform_int(0, 3)),
                h = 1 + int(rng.uniform_int(0, 1)), w = 1 + int(rng.uniform_int(0, 1)),
                chn = 1 + int(rng.uniform_int(0, 2));
      auto z = rand_tensor(rng, {b, T, h, w, chn});
      track("temporal_self_attention",
            max_rel_err(to_vec(temporal_self_attention(z)),
                        ref::attention(to_vec(z), b, T, h * w * chn)));
    }
    {
      const int T = 2 + int(rng.uniform_int(0, 2)), H = 1 + int(rng.uniform_int(0, 2)),
                W = 1 + int(rng.uniform_int(0, 2));
      const int C = c % 2 ? 16 : 8, R = 8, cr = C / R;
      const int branch = c % 3;
      Rng prng(600 + c);
      auto p = M2AParams::init(C, R, prng);
      for (auto* t : {&p.b_down, &p.beta, &p.b_up})
        for (std::int64_t i = 0; i < t->numel(); ++i)
          t->data()[i] = prng.uniform(-0.3, 0.3);
      auto x = rand_tensor(rng, {T, H, W, C});
      const auto v = branch == 0   ? MechanismVariant::M2AFull
                     : branch == 1 ? MechanismVariant::M2AAttention
                                   : MechanismVariant::M2AMotion;
      auto want = ref::m2a_forward(to_vec(x), T, H, W, C, cr, to_vec(p.w_down), to_vec(p.b_down),
                                   to_vec(p.gamma), to_vec(p.beta), to_vec(p.w_up), to_vec(p.b_up),
                                   branch);
      track("m2a_forward", max_rel_err(to_vec(m2a_forward(x, p, v)), want));
    }
  }

  char detail[120];
  std::snprintf(detail, sizeof detail,
                "20 instances per op, worst rel err %.2e at %s, tol 1e-6", worst,
                worst_op.c_str());
  report(6, "scalar-loop oracle agreement", ok, detail, timer.seconds());
}

// ------------------------------------------------------------- criterion 7

void criterion_gradcam() {
  Timer timer;
  bool ok = true;
  std::string note;

  // handcrafted two-channel frame, worked out by hand:
  // A0=[1 2;3 4], A1=[0 1;0 -1], G0 uniform 0.5, G1 one-hot at (0,0)
  // alphas 0.5/0.25, weighted sums {0.5,1.25,1.5,1.75}, max 1.75
  {
    const double a[8] = {1, 0, 2, 1, 3, 0, 4, -1};
    const double g[8] = {0.5, 1, 0.5, 0, 0.5, 0, 0.5, 0};
    auto maps = m2a::detail::gradcam_maps(a, g, 1, 2, 2, 2);
    const double want[4] = {0.5 / 1.75, 1.25 / 1.75, 1.5 / 1.75, 1.0};
    for (int i = 0; i < 4; ++i)
      if (std::abs(maps[std::size_t(i)] - want[i]) > 1e-6) {
        ok = false;
        note = "handcrafted map mismatch";
      }
  }

  // live model: maps in [0,1], global max saturates unless degenerate
  {
    DatasetOptions opt;
    opt.frames = 4;
    opt.side = 16;
    opt.velocity = 1.0;
    Rng drng(7);
    auto data = generate_dataset(1, opt, drng);
    BackboneConfig arch;
    arch.frames = 4;
    arch.side = 16;
    arch.stage_channels = {8, 16};
    Rng mrng(8);
    auto model = build_backbone<float>(arch, mrng);
    insert_mechanism(model, MechanismVariant::M2AFull, mrng, 8);
    auto clip = Tensor32::zeros({1, 4, 16, 16, 1});
    for (std::int64_t i = 0; i < data.clip_elems(); ++i) clip.data()[i] = data.values[i];
    int h = 0, w = 0;
    auto maps = grad_cam(model, clip, "stage1.block0.post_mech", 0, &h, &w);
    float mx = 0.f;
    for (float v : maps) {
      if (v < 0.f || v > 1.f) {
        ok = false;
        note = "map out of range";
      }
      mx = std::max(mx, v);
    }
    if (!(mx == 0.f || std::abs(mx - 1.f) <= 1e-6f)) {
      ok = false;
      note = "max not normalized";
    }
  }

  // quantized image files survive a write/read cycle untouched
  {
    const fs::path p = g_work / "gate.pgm";
    std::vector<int> px = {0, 255, 31, 128, 64, 7};
    write_pgm(p.string(), px, 2, 3);
    int w = 0, h = 0;
    auto back = read_pgm(p.string(), &w, &h);
    if (back != px || w != 2 || h != 3) {
      ok = false;
      note = "pgm round trip changed pixels";
    }
  }

  report(7, "saliency map contract", ok,
         ok ? "handcrafted oracle, live-model normalization, pgm round trip" : note,
         timer.seconds());
}

// ------------------------------------------------------------- criterion 8

void criterion_determinism() {
  Timer timer;
  bool ok = true;
  std::string first_bad;
  auto expect_same = [&](const fs::path& a, const fs::path& b, const char* what) {
    if (file_bytes(a) != file_bytes(b)) {
      ok = false;
      if (first_bad.empty()) first_bad = what;
    }
  };
  auto must_run = [&](const std::string& args, const char* what) {
    auto r = run_cli(args);
    if (r.code != 0) {
      ok = false;
      if (first_bad.empty()) first_bad = std::string(what) + " exited " + std::to_string(r.code);
    }
  };

  const fs::path a = g_work / "det_a", b = g_work / "det_b";
  const std::string gen_flags =
      " --train-per-class 2 --test-per-class 1 --frames 4 --side 16 --velocity 1 --seed 11";
  must_run("gen-data --out " + (a / "data").string() + gen_flags, "gen-data");
  must_run("gen-data --out " + (b / "data").string() + gen_flags, "gen-data");
  expect_same(a / "data/train.m2av", b / "data/train.m2av", "gen-data train split");
  expect_same(a / "data/test.m2av", b / "data/test.m2av", "gen-data test split");

  for (const auto& side : {a, b}) {
    const std::string data = (side / "data/train.m2av").string();
    must_run("train --data " + data + " --out " + (side / "model.m2ac").string() + " --metrics " +
                 (side / "metrics.csv").string() + " --variant m2a --epochs 2 --batch 5 --seed 1",
             "train");
    must_run("eval --checkpoint " + (side / "model.m2ac").string() + " --data " +
                 (side / "data/test.m2av").string() +
                 " --variant m2a --seed 1 --format csv --out " + (side / "eval.csv").string(),
             "eval");
    must_run("macs --arch toy --variant m2a --format csv --out " + (side / "macs.csv").string(),
             "macs");
    must_run("saliency --checkpoint " + (side / "model.m2ac").string() + " --data " +
                 (side / "data/test.m2av").string() + " --out " + (side / "cams").string() +
                 " --variant m2a --layer stage1.block0.post_mech --index 2",
             "saliency");
    must_run("ablate --data " + (side / "data").string() +
                 " --variants none,tsm --epochs 1 --batch 5 --seed 1 --out " +
                 (side / "ablation").string(),
             "ablate");
  }
  expect_same(a / "model.m2ac", b / "model.m2ac", "train checkpoint");
  expect_same(a / "metrics.csv", b / "metrics.csv", "train metrics");
  expect_same(a / "eval.csv", b / "eval.csv", "eval report");
  expect_same(a / "macs.csv", b / "macs.csv", "macs audit");
  for (int t = 0; t < 4; ++t) {
    char cam[32], input[32];
    std::snprintf(cam, sizeof cam, "frame_%02d_cam.pgm", t);
    std::snprintf(input, sizeof input, "frame_%02d_input.pgm", t);
    expect_same(a / "cams" / cam, b / "cams" / cam, "saliency cam");
    expect_same(a / "cams" / input, b / "cams" / input, "saliency input");
  }
  expect_same(a / "ablation/summary.csv", b / "ablation/summary.csv", "ablate summary");
  expect_same(a / "ablation/none.m2ac", b / "ablation/none.m2ac", "ablate checkpoint");

  report(8, "repeated runs are byte-identical", ok,
         ok ? "gen-data, train, eval, macs, saliency, ablate" : "first mismatch: " + first_bad,
         timer.seconds());
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--cli") g_cli = argv[i + 1];
  if (g_cli.empty()) {
    std::fprintf(stderr, "usage: acceptance_gate --cli <path-to-m2a-binary>\n");
    return 64;
  }
  fs::remove_all(g_work);
  fs::create_directories(g_work);
  std::printf("release gate, cli: %s\n\n", g_cli.c_str());

  criterion_macs();
  criterion_gradients();
  criterion_identities();
  const auto quartet = run_quartet();
  criterion_order_invariance(quartet);
  criterion_ablation(quartet);
  criterion_oracles();
  criterion_gradcam();
  criterion_determinism();

  std::printf("\ngate: %d/8 criteria passed\n", 8 - g_failures);
  fs::remove_all(g_work);
  return g_failures;
}
