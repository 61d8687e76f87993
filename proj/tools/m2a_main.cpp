// m2a: one binary for the whole lab. Subcommands generate synthetic motion
// clips, train/evaluate the toy video backbone with a chosen temporal
// mechanism, sweep ablations, audit MACs analytically, and export Grad-CAM
// heatmaps. Every command echoes its resolved configuration and is
// deterministic under fixed flags, so repeated runs produce byte-identical
// artifacts.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "m2a/backbone.hpp"
#include "m2a/checkpoint.hpp"
#include "m2a/complexity.hpp"
#include "m2a/dataset.hpp"
#include "m2a/mechanisms.hpp"
#include "m2a/metrics.hpp"
#include "m2a/rng.hpp"
#include "m2a/train.hpp"

namespace fs = std::filesystem;
using namespace m2a;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void echo_header(const std::string& command) {
  std::cout << "config:\n  command = " << command << "\n";
}
template <class T>
void echo_kv(const char* key, const T& value) {
  std::cout << "  " << key << " = " << value << "\n";
}
void echo_end() { std::cout << "\n"; }

std::string fmt(double v, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << v;
  return os.str();
}

MechanismVariant variant_or_throw(const std::string& s) {
  auto v = parse_variant(s);
  if (!v) throw UsageError("--variant/--variants: unknown value '" + s + "' (expected one of " +
                           variant_names_joined() + ")");
  return *v;
}

OptimizerKind optimizer_or_throw(const std::string& s) {
  auto o = parse_optimizer(s);
  if (!o) throw UsageError("--optimizer: unknown value '" + s + "'");
  return *o;
}

BackboneConfig arch_for_dataset(const ClipDataset& d) {
  BackboneConfig cfg;
  cfg.frames = d.frames;
  cfg.side = d.side;
  cfg.in_channels = d.channels;
  cfg.num_classes = static_cast<int>(d.class_names.size());
  return cfg;
}

Model32 build_model(const BackboneConfig& arch, MechanismVariant v, int reduction,
                    std::uint64_t seed) {
  Rng rng(seed);
  auto model = build_backbone<float>(arch, rng);
  insert_mechanism(model, v, rng, reduction);
  return model;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("cannot open '" + path + "' for writing");
  f << text;
}

std::string trimmed(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// CLI11 only processes config files attached to the root command, so each
// subcommand applies its own key=value file here. Flags given on the command
// line keep priority; unknown keys are an error.
void apply_config_file(CLI::App* cmd, const CLI::Option* cfg_opt) {
  if (cfg_opt->count() == 0) return;
  const auto path = cfg_opt->as<std::string>();
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  std::string line;
  while (std::getline(in, line)) {
    line = trimmed(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CLI::ConfigError(path + ": expected key=value, got '" + line + "'");
    const std::string key = trimmed(line.substr(0, eq));
    std::string value = trimmed(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    auto* opt = cmd->get_option_no_throw("--" + key);
    if (!opt) throw CLI::ConfigError(path + ": no such option '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string out;
  int train_per_class = 100;
  int test_per_class = 50;
  int frames = 8;
  int side = 32;
  std::string sprite = "square";
  double noise = 0.02;
  double velocity = 2.0;
  std::uint64_t seed = 0;
};

int run_gen_data(const GenDataArgs& a) {
  echo_header("gen-data");
  echo_kv("out", a.out);
  echo_kv("train-per-class", a.train_per_class);
  echo_kv("test-per-class", a.test_per_class);
  echo_kv("frames", a.frames);
  echo_kv("side", a.side);
  echo_kv("sprite", a.sprite);
  echo_kv("noise", a.noise);
  echo_kv("velocity", a.velocity);
  echo_kv("seed", a.seed);
  echo_end();

  DatasetOptions opt;
  opt.frames = a.frames;
  opt.side = a.side;
  opt.sprite = a.sprite;
  opt.noise_sigma = a.noise;
  opt.velocity = a.velocity;

  Rng root(a.seed);
  Rng train_rng = root.fork(0);
  Rng test_rng = root.fork(1);
  auto train = generate_dataset(a.train_per_class, opt, train_rng);
  auto test = generate_dataset(a.test_per_class, opt, test_rng);

  fs::create_directories(a.out);
  const std::string train_path = (fs::path(a.out) / "train.m2av").string();
  const std::string test_path = (fs::path(a.out) / "test.m2av").string();
  save_dataset(train, train_path);
  save_dataset(test, test_path);

  std::cout << "wrote " << train_path << " (" << train.size() << " clips, "
            << train.class_names.size() << " classes)\n";
  std::cout << "wrote " << test_path << " (" << test.size() << " clips, "
            << test.class_names.size() << " classes)\n";
  return 0;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string out = "model.m2ac";
  std::string metrics = "metrics.csv";
  std::string variant = "m2a";
  std::string optimizer = "adam";
  int reduction = 8;
  int epochs = 30;
  int batch = 16;
  double lr = 1e-3;
  int topk = 2;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  echo_header("train");
  echo_kv("data", a.data);
  echo_kv("out", a.out);
  echo_kv("metrics", a.metrics);
  echo_kv("variant", a.variant);
  echo_kv("optimizer", a.optimizer);
  echo_kv("reduction", a.reduction);
  echo_kv("epochs", a.epochs);
  echo_kv("batch", a.batch);
  echo_kv("lr", a.lr);
  echo_kv("topk", a.topk);
  echo_kv("seed", a.seed);
  echo_end();

  auto data = load_dataset(a.data);
  TrainConfig cfg;
  cfg.variant = variant_or_throw(a.variant);
  cfg.optimizer = optimizer_or_throw(a.optimizer);
  cfg.reduction = a.reduction;
  cfg.epochs = a.epochs;
  cfg.batch = a.batch;
  cfg.lr = a.lr;
  cfg.topk = a.topk;
  cfg.seed = a.seed;

  std::ofstream metrics(a.metrics, std::ios::binary);
  if (!metrics) fail("cannot open '" + a.metrics + "' for writing");
  auto model = train_model<float>(cfg, arch_for_dataset(data), data, &metrics);
  metrics.close();
  save_checkpoint(model, a.out);

  auto rep = evaluate(model, data, cfg.topk);
  std::cout << "train top-1 " << fmt(100.0 * rep.top1, 1) << "%  top-" << cfg.topk << " "
            << fmt(100.0 * rep.topk, 1) << "%\n";
  std::cout << "wrote " << a.out << "\n";
  std::cout << "wrote " << a.metrics << "\n";
  return 0;
}

// --------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;  // optional report file
  std::string variant = "m2a";
  std::string format = "table";
  int reduction = 8;
  int topk = 2;
  std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a) {
  echo_header("eval");
  echo_kv("checkpoint", a.checkpoint);
  echo_kv("data", a.data);
  echo_kv("variant", a.variant);
  echo_kv("format", a.format);
  echo_kv("reduction", a.reduction);
  echo_kv("topk", a.topk);
  echo_kv("seed", a.seed);
  echo_kv("out", a.out.empty() ? std::string("(stdout)") : a.out);
  echo_end();

  auto data = load_dataset(a.data);
  auto model = build_model(arch_for_dataset(data), variant_or_throw(a.variant), a.reduction,
                           a.seed);
  load_checkpoint(model, a.checkpoint);
  auto rep = evaluate(model, data, a.topk);
  const std::string text = a.format == "csv" ? report_csv(rep) : report_table(rep);
  std::cout << text;
  if (!a.out.empty()) {
    write_text_file(a.out, text);
    std::cout << "wrote " << a.out << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------- ablate

struct AblateArgs {
  std::string data;
  std::string out;  // optional artifact dir
  std::vector<std::string> variants{"none", "m2a-attn", "m2a-motion", "m2a"};
  std::string optimizer = "adam";
  int reduction = 8;
  int epochs = 30;
  int batch = 16;
  double lr = 1e-3;
  int topk = 2;
  std::uint64_t seed = 0;
};

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += v[i];
  }
  return s;
}

int run_ablate(const AblateArgs& a) {
  echo_header("ablate");
  echo_kv("data", a.data);
  echo_kv("variants", join(a.variants, ","));
  echo_kv("optimizer", a.optimizer);
  echo_kv("reduction", a.reduction);
  echo_kv("epochs", a.epochs);
  echo_kv("batch", a.batch);
  echo_kv("lr", a.lr);
  echo_kv("topk", a.topk);
  echo_kv("seed", a.seed);
  echo_kv("out", a.out.empty() ? std::string("(none)") : a.out);
  echo_end();

  if (a.variants.empty()) throw UsageError("--variants: need at least one variant");
  std::vector<MechanismVariant> variants;
  for (const auto& s : a.variants) variants.push_back(variant_or_throw(s));

  auto train_set = load_dataset((fs::path(a.data) / "train.m2av").string());
  auto test_set = load_dataset((fs::path(a.data) / "test.m2av").string());
  const auto arch = arch_for_dataset(train_set);
  if (!a.out.empty()) fs::create_directories(a.out);

  struct Row {
    std::string name;
    double mmacs = 0, top1 = 0, topk = 0;
  };
  std::vector<Row> rows;
  int none_index = -1;
  const auto toy_desc = describe_toy(arch);

  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto v = variants[i];
    TrainConfig cfg;
    cfg.variant = v;
    cfg.optimizer = optimizer_or_throw(a.optimizer);
    cfg.reduction = a.reduction;
    cfg.epochs = a.epochs;
    cfg.batch = a.batch;
    cfg.lr = a.lr;
    cfg.topk = a.topk;
    cfg.seed = a.seed;

    std::cout << "[" << (i + 1) << "/" << variants.size() << "] training " << variant_name(v)
              << "\n";
    std::ostringstream metrics;
    auto model = train_model<float>(cfg, arch, train_set, &metrics);
    auto rep = evaluate(model, test_set, a.topk);

    Row row;
    row.name = variant_name(v);
    row.top1 = 100.0 * rep.top1;
    row.topk = 100.0 * rep.topk;
    const auto mac_rep = v == MechanismVariant::None
                             ? count_macs(toy_desc)
                             : combined_macs(toy_desc, a.reduction, v);
    row.mmacs = static_cast<double>(mac_rep.total) / 1e6;
    if (v == MechanismVariant::None) none_index = static_cast<int>(rows.size());
    rows.push_back(row);

    if (!a.out.empty()) {
      save_checkpoint(model, (fs::path(a.out) / (row.name + ".m2ac")).string());
      write_text_file((fs::path(a.out) / ("metrics_" + row.name + ".csv")).string(),
                      metrics.str());
    }
  }

  auto cell = [&](double value, double base, bool have_base) {
    std::string s = fmt(value, 1) + "%";
    if (have_base) {
      const double d = value - base;
      s += " (" + std::string(d >= 0 ? "+" : "") + fmt(d, 1) + ")";
    }
    return s;
  };

  std::ostringstream table;
  table << "variant       macs/clip   top-1            top-" << a.topk << "\n";
  for (const auto& r : rows) {
    const bool have_base = none_index >= 0 && r.name != "none";
    const std::string t1 = cell(r.top1, none_index >= 0 ? rows[none_index].top1 : 0, have_base);
    const std::string tk = cell(r.topk, none_index >= 0 ? rows[none_index].topk : 0, have_base);
    table << std::left << std::setw(14) << r.name << std::right << std::setw(8)
          << fmt(r.mmacs, 2) << "M   " << std::left << std::setw(17) << t1 << tk << "\n";
  }
  std::cout << "\n" << table.str();

  if (!a.out.empty()) {
    std::ostringstream csv;
    csv << "variant,macs,top1,top" << a.topk << ",delta_top1,delta_top" << a.topk << "\n";
    for (const auto& r : rows) {
      csv << r.name << ',' << fmt(r.mmacs * 1e6, 0) << ',' << fmt(r.top1, 4) << ','
          << fmt(r.topk, 4);
      if (none_index >= 0 && r.name != "none")
        csv << ',' << fmt(r.top1 - rows[none_index].top1, 4) << ','
            << fmt(r.topk - rows[none_index].topk, 4);
      else
        csv << ",,";
      csv << "\n";
    }
    const std::string path = (fs::path(a.out) / "summary.csv").string();
    write_text_file(path, csv.str());
    std::cout << "wrote " << path << "\n";
  }
  return 0;
}

// --------------------------------------------------------------------- macs

struct MacsArgs {
  std::string arch = "resnet18";
  std::string variant = "m2a";
  std::string format = "table";
  std::string out;
  int frames = 8;
  int side = 224;
  int reduction = 8;
};

int run_macs(const MacsArgs& a) {
  echo_header("macs");
  echo_kv("arch", a.arch);
  echo_kv("frames", a.frames);
  echo_kv("side", a.side);
  echo_kv("variant", a.variant);
  echo_kv("reduction", a.reduction);
  echo_kv("format", a.format);
  echo_kv("out", a.out.empty() ? std::string("(stdout)") : a.out);
  echo_end();

  ArchDescription desc;
  if (a.arch == "toy") {
    BackboneConfig cfg;
    cfg.frames = a.frames;
    cfg.side = a.side;
    desc = describe_toy(cfg);
  } else if (a.arch == "resnet18") {
    desc = describe_resnet18(a.frames, a.side);
  } else if (a.arch == "mobilenetv2") {
    desc = describe_mobilenetv2(a.frames, a.side);
  } else if (a.arch == "i3d-resnet18-unverified") {
    desc = describe_i3d_resnet18(a.frames, a.side);
  } else {
    throw UsageError("--arch: unknown value '" + a.arch + "'");
  }

  const auto v = variant_or_throw(a.variant);
  const auto base = count_macs(desc);
  std::ostringstream out;
  if (v == MechanismVariant::None) {
    out << (a.format == "csv" ? macs_csv(base) : macs_table(base));
    out << "\nbase total: " << fmt(base.gmacs(), 4) << " GMACs\n";
  } else {
    const auto overhead = m2a_overhead(desc, a.reduction, v);
    const auto combined = combined_macs(desc, a.reduction, v);
    out << (a.format == "csv" ? macs_csv(combined) : macs_table(combined));
    const double pct = base.total ? 100.0 * double(overhead.total) / double(base.total) : 0.0;
    out << "\nbase total: " << fmt(base.gmacs(), 4) << " GMACs\n";
    out << variant_name(v) << " overhead: " << fmt(overhead.gmacs(), 4) << " GMACs  (+"
        << fmt(pct, 2) << "%)\n";
    out << "total with " << variant_name(v) << ": " << fmt(combined.gmacs(), 4) << " GMACs\n";
  }
  if (desc.unverified) out << "note: " << desc.note << "\n";

  std::cout << out.str();
  if (!a.out.empty()) {
    write_text_file(a.out, out.str());
    std::cout << "wrote " << a.out << "\n";
  }
  return 0;
}

// ----------------------------------------------------------------- saliency

struct SaliencyArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string layer = "stage1.block0.post_mech";
  std::string variant = "m2a";
  int index = 0;
  int target_class = -1;
  int reduction = 8;
  std::uint64_t seed = 0;
};

int run_saliency(const SaliencyArgs& a) {
  echo_header("saliency");
  echo_kv("checkpoint", a.checkpoint);
  echo_kv("data", a.data);
  echo_kv("index", a.index);
  echo_kv("layer", a.layer);
  echo_kv("class", a.target_class);
  echo_kv("variant", a.variant);
  echo_kv("reduction", a.reduction);
  echo_kv("seed", a.seed);
  echo_kv("out", a.out);
  echo_end();

  auto data = load_dataset(a.data);
  if (a.index < 0 || static_cast<std::size_t>(a.index) >= data.size())
    fail("--index: " + std::to_string(a.index) + " out of range (dataset has " +
         std::to_string(data.size()) + " clips)");
  auto model = build_model(arch_for_dataset(data), variant_or_throw(a.variant), a.reduction,
                           a.seed);
  load_checkpoint(model, a.checkpoint);

  const int target = a.target_class >= 0 ? a.target_class : data.labels[a.index];
  std::vector<float> clip_values(data.clip(a.index), data.clip(a.index) + data.clip_elems());
  auto clip = Tensor32::from({1, data.frames, data.side, data.side, data.channels}, clip_values);

  int map_h = 0, map_w = 0;
  auto maps = grad_cam(model, clip, a.layer, target, &map_h, &map_w);

  fs::create_directories(a.out);
  export_heatmaps(maps, data.frames, map_h, map_w, clip_values, data.side, data.channels, a.out);
  std::cout << "clip " << a.index << " (label " << data.labels[a.index] << " '"
            << data.class_names[data.labels[a.index]] << "'), target class " << target << " '"
            << data.class_names[target] << "'\n";
  std::cout << "layer " << a.layer << " -> " << map_h << "x" << map_w << " maps\n";
  std::cout << "wrote " << 2 * data.frames << " pgm files to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"motion-aware attention laboratory"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic motion-clip dataset");
  gen->set_config("--config", "", "Read defaults from a key=value file");
  gen->add_option("--out", gd.out, "Output directory for train.m2av/test.m2av")->required();
  gen->add_option("--train-per-class", gd.train_per_class, "Training clips per class")
      ->capture_default_str();
  gen->add_option("--test-per-class", gd.test_per_class, "Test clips per class")
      ->capture_default_str();
  gen->add_option("--frames", gd.frames, "Frames per clip")->capture_default_str();
  gen->add_option("--side", gd.side, "Frame height and width")->capture_default_str();
  gen->add_option("--sprite", gd.sprite, "Sprite shape")
      ->check(CLI::IsMember({"square", "disc", "bar", "mixed"}))
      ->capture_default_str();
  gen->add_option("--noise", gd.noise, "Gaussian pixel noise sigma")->capture_default_str();
  gen->add_option("--velocity", gd.velocity, "Sprite speed, px per frame")
      ->capture_default_str();
  gen->add_option("--seed", gd.seed, "Random seed")->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the toy backbone on a dataset");
  train->set_config("--config", "", "Read defaults from a key=value file");
  train->add_option("--data", tr.data, "Training dataset (.m2av)")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", tr.out, "Checkpoint output path")->capture_default_str();
  train->add_option("--metrics", tr.metrics, "Per-epoch metrics CSV path")
      ->capture_default_str();
  train->add_option("--variant", tr.variant, "Temporal mechanism variant")
      ->check(CLI::IsMember({"none", "m2a-attn", "m2a-motion", "m2a", "tsm", "m2a+tsm"}))
      ->capture_default_str();
  train->add_option("--optimizer", tr.optimizer, "Optimizer")
      ->check(CLI::IsMember({"sgd", "sgd_momentum", "adam"}))
      ->capture_default_str();
  train->add_option("--reduction", tr.reduction, "Mechanism channel reduction R")
      ->capture_default_str();
  train->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
  train->add_option("--batch", tr.batch, "Minibatch size")->capture_default_str();
  train->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  train->add_option("--topk", tr.topk, "k for top-k accuracy")->capture_default_str();
  train->add_option("--seed", tr.seed, "Random seed")->capture_default_str();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->set_config("--config", "", "Read defaults from a key=value file");
  eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint path (.m2ac)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--data", ev.data, "Dataset (.m2av)")->required()->check(CLI::ExistingFile);
  eval->add_option("--variant", ev.variant, "Variant the checkpoint was trained with")
      ->check(CLI::IsMember({"none", "m2a-attn", "m2a-motion", "m2a", "tsm", "m2a+tsm"}))
      ->capture_default_str();
  eval->add_option("--reduction", ev.reduction, "Mechanism channel reduction R")
      ->capture_default_str();
  eval->add_option("--topk", ev.topk, "k for top-k accuracy")->capture_default_str();
  eval->add_option("--format", ev.format, "Report format")
      ->check(CLI::IsMember({"table", "csv"}))
      ->capture_default_str();
  eval->add_option("--out", ev.out, "Also write the report to this path");
  eval->add_option("--seed", ev.seed, "Random seed (model init before load)")
      ->capture_default_str();

  AblateArgs ab;
  auto* ablate = app.add_subcommand("ablate", "Train and compare mechanism variants");
  ablate->set_config("--config", "", "Read defaults from a key=value file");
  ablate->add_option("--data", ab.data, "Dataset directory with train.m2av/test.m2av")
      ->required()
      ->check(CLI::ExistingDirectory);
  ablate->add_option("--variants", ab.variants, "Comma-separated variant list")
      ->delimiter(',')
      ->capture_default_str();
  ablate->add_option("--out", ab.out, "Directory for checkpoints/metrics/summary.csv");
  ablate->add_option("--optimizer", ab.optimizer, "Optimizer")
      ->check(CLI::IsMember({"sgd", "sgd_momentum", "adam"}))
      ->capture_default_str();
  ablate->add_option("--reduction", ab.reduction, "Mechanism channel reduction R")
      ->capture_default_str();
  ablate->add_option("--epochs", ab.epochs, "Training epochs")->capture_default_str();
  ablate->add_option("--batch", ab.batch, "Minibatch size")->capture_default_str();
  ablate->add_option("--lr", ab.lr, "Learning rate")->capture_default_str();
  ablate->add_option("--topk", ab.topk, "k for top-k accuracy")->capture_default_str();
  ablate->add_option("--seed", ab.seed, "Random seed")->capture_default_str();

  MacsArgs mc;
  auto* macs = app.add_subcommand("macs", "Analytic MAC audit of an architecture");
  macs->set_config("--config", "", "Read defaults from a key=value file");
  macs->add_option("--arch", mc.arch, "Architecture")
      ->check(CLI::IsMember({"toy", "resnet18", "mobilenetv2", "i3d-resnet18-unverified"}))
      ->capture_default_str();
  macs->add_option("--frames", mc.frames, "Sampled frames per clip")->capture_default_str();
  auto* side_opt =
      macs->add_option("--side", mc.side, "Input height and width")->capture_default_str();
  macs->add_option("--variant", mc.variant, "Mechanism variant for the overhead lines")
      ->check(CLI::IsMember({"none", "m2a-attn", "m2a-motion", "m2a", "tsm", "m2a+tsm"}))
      ->capture_default_str();
  macs->add_option("--reduction", mc.reduction, "Mechanism channel reduction R")
      ->capture_default_str();
  macs->add_option("--format", mc.format, "Output format")
      ->check(CLI::IsMember({"table", "csv"}))
      ->capture_default_str();
  macs->add_option("--out", mc.out, "Also write the audit to this path");

  SaliencyArgs sa;
  auto* saliency = app.add_subcommand("saliency", "Export Grad-CAM heatmaps for one clip");
  saliency->set_config("--config", "", "Read defaults from a key=value file");
  saliency->add_option("--checkpoint", sa.checkpoint, "Checkpoint path (.m2ac)")
      ->required()
      ->check(CLI::ExistingFile);
  saliency->add_option("--data", sa.data, "Dataset (.m2av)")
      ->required()
      ->check(CLI::ExistingFile);
  saliency->add_option("--out", sa.out, "Output directory for PGM files")->required();
  saliency->add_option("--index", sa.index, "Clip index within the dataset")
      ->capture_default_str();
  saliency->add_option("--layer", sa.layer, "Activation selector")->capture_default_str();
  saliency->add_option("--class", sa.target_class, "Target class (-1 = clip label)")
      ->capture_default_str();
  saliency->add_option("--variant", sa.variant, "Variant the checkpoint was trained with")
      ->check(CLI::IsMember({"none", "m2a-attn", "m2a-motion", "m2a", "tsm", "m2a+tsm"}))
      ->capture_default_str();
  saliency->add_option("--reduction", sa.reduction, "Mechanism channel reduction R")
      ->capture_default_str();
  saliency->add_option("--seed", sa.seed, "Random seed (model init before load)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
    for (auto* sub : {gen, train, eval, ablate, macs, saliency})
      apply_config_file(sub, sub->get_option("--config"));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return run_gen_data(gd);
    if (*train) return run_train(tr);
    if (*eval) {
      return run_eval(ev);
    }
    if (*ablate) return run_ablate(ab);
    if (*macs) {
      // the toy backbone defaults to 32x32 inputs
      if (mc.arch == "toy" && side_opt->count() == 0) mc.side = 32;
      return run_macs(mc);
    }
    if (*saliency) return run_saliency(sa);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
