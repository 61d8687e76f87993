// Exercises the installed binary end to end. The binary path arrives as
// argv[1]; remaining args go to doctest.
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string g_cli;
const fs::path g_work = "/tmp/m2a_cli_test";

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  static int counter = 0;
  const std::string capture = (g_work / ("out_" + std::to_string(counter++) + ".txt")).string();
  const std::string cmd = g_cli + " " + args + " > " + capture + " 2>&1";
  const int status = std::system(cmd.c_str());
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
  REQUIRE(bool(is));
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

// tiny fixtures shared across cases; generated once on first use
const std::string kGenFlags =
    "--train-per-class 2 --test-per-class 1 --frames 4 --side 16 --velocity 1 --seed 3";

fs::path dataset_dir() {
  static fs::path dir = [] {
    const fs::path d = g_work / "data";
    auto r = run("gen-data --out " + d.string() + " " + kGenFlags);
    REQUIRE(r.code == 0);
    REQUIRE(contains(r.output, "wrote " + (d / "train.m2av").string() + " (10 clips, 5 classes)"));
    REQUIRE(contains(r.output, "wrote " + (d / "test.m2av").string() + " (5 clips, 5 classes)"));
    return d;
  }();
  return dir;
}

const std::string kTrainFlags = "--variant m2a --epochs 2 --batch 5 --seed 1";

fs::path model_path() {
  static fs::path path = [] {
    const fs::path ckpt = g_work / "model.m2ac";
    const fs::path metrics = g_work / "metrics.csv";
    auto r = run("train --data " + (dataset_dir() / "train.m2av").string() + " --out " +
                 ckpt.string() + " --metrics " + metrics.string() + " " + kTrainFlags);
    REQUIRE(r.code == 0);
    REQUIRE(contains(r.output, "train top-1 "));
    REQUIRE(fs::exists(ckpt));
    REQUIRE(fs::exists(metrics));
    return ckpt;
  }();
  return path;
}

}  // namespace

TEST_CASE("no arguments is a usage error") {
  auto r = run("");
  CHECK(r.code == 2);
}

TEST_CASE("help exits cleanly and lists every subcommand") {
  auto r = run("--help");
  CHECK(r.code == 0);
  for (const char* sub : {"gen-data", "train", "eval", "ablate", "macs", "saliency"})
    CHECK(contains(r.output, sub));

  auto sub_help = run("train --help");
  CHECK(sub_help.code == 0);
  for (const char* flag : {"--data", "--out", "--metrics", "--variant", "--optimizer",
                           "--epochs", "--batch", "--lr", "--seed", "--config"})
    CHECK(contains(sub_help.output, flag));
}

TEST_CASE("unknown subcommands and flags are usage errors") {
  CHECK(run("frobnicate").code == 2);
  CHECK(run("macs --no-such-flag").code == 2);
  CHECK(run("macs --arch vgg16").code == 2);
  CHECK(run("train").code == 2);  // --data is required
  CHECK(run("eval --checkpoint /nonexistent.m2ac --data /nonexistent.m2av").code == 2);
}

TEST_CASE("macs reproduces the audit summary") {
  auto r = run("macs --arch resnet18 --variant m2a");
  CHECK(r.code == 0);
  CHECK(contains(r.output, "config:"));
  CHECK(contains(r.output, "  command = macs"));
  CHECK(contains(r.output, "  arch = resnet18"));
  CHECK(contains(r.output, "base total: 14.5636 GMACs"));
  CHECK(contains(r.output, "m2a overhead: 0.2379 GMACs  (+1.63%)"));
  CHECK(contains(r.output, "total with m2a: 14.8014 GMACs"));

  auto none = run("macs --arch resnet18 --variant none");
  CHECK(none.code == 0);
  CHECK(contains(none.output, "base total: 14.5636 GMACs"));
  CHECK(!contains(none.output, "overhead"));

  auto mobile = run("macs --arch mobilenetv2 --variant m2a");
  CHECK(contains(mobile.output, "base total: 2.5107 GMACs"));

  auto i3d = run("macs --arch i3d-resnet18-unverified --variant none");
  CHECK(i3d.code == 0);
  CHECK(contains(i3d.output, "note: "));

  auto csv = run("macs --arch toy --variant none --format csv");
  CHECK(csv.code == 0);
  CHECK(contains(csv.output, "layer,kind,out_shape,macs"));
  CHECK(contains(csv.output, "  side = 32"));  // toy defaults to its native side

  const fs::path out = g_work / "macs.csv";
  auto to_file = run("macs --arch toy --variant m2a --format csv --out " + out.string());
  CHECK(to_file.code == 0);
  CHECK(file_bytes(out).rfind("layer,kind,out_shape,macs\n", 0) == 0);
}

TEST_CASE("gen-data is deterministic and echoes its config") {
  dataset_dir();
  const fs::path again = g_work / "data_again";
  auto r = run("gen-data --out " + again.string() + " " + kGenFlags);
  CHECK(r.code == 0);
  CHECK(contains(r.output, "  command = gen-data"));
  CHECK(contains(r.output, "  seed = 3"));
  CHECK(file_bytes(again / "train.m2av") == file_bytes(dataset_dir() / "train.m2av"));
  CHECK(file_bytes(again / "test.m2av") == file_bytes(dataset_dir() / "test.m2av"));

  const fs::path other = g_work / "data_other";
  auto r2 = run("gen-data --out " + other.string() +
                " --train-per-class 2 --test-per-class 1 --frames 4 --side 16 --velocity 1 "
                "--seed 4");
  CHECK(r2.code == 0);
  CHECK(file_bytes(other / "train.m2av") != file_bytes(dataset_dir() / "train.m2av"));

  CHECK(run("gen-data --out " + (g_work / "bad").string() + " --sprite pyramid").code == 2);
}

TEST_CASE("train writes a checkpoint and metrics, deterministically") {
  model_path();
  const fs::path ckpt2 = g_work / "model2.m2ac";
  const fs::path metrics2 = g_work / "metrics2.csv";
  auto r = run("train --data " + (dataset_dir() / "train.m2av").string() + " --out " +
               ckpt2.string() + " --metrics " + metrics2.string() + " " + kTrainFlags);
  CHECK(r.code == 0);
  CHECK(file_bytes(ckpt2) == file_bytes(model_path()));
  CHECK(file_bytes(metrics2) == file_bytes(g_work / "metrics.csv"));

  const std::string metrics = file_bytes(g_work / "metrics.csv");
  CHECK(metrics.rfind("epoch,step,loss,top1,topk\n", 0) == 0);

  CHECK(run("train --data " + (dataset_dir() / "train.m2av").string() +
            " --optimizer newton").code == 2);
  CHECK(run("train --data " + (dataset_dir() / "train.m2av").string() +
            " --variant superattention").code == 2);
}

TEST_CASE("eval prints a report and honors the format switch") {
  auto r = run("eval --checkpoint " + model_path().string() + " --data " +
               (dataset_dir() / "test.m2av").string() + " --variant m2a --seed 1");
  CHECK(r.code == 0);
  CHECK(contains(r.output, "top-1:"));
  CHECK(contains(r.output, "move_left"));

  const fs::path out = g_work / "eval.csv";
  auto csv = run("eval --checkpoint " + model_path().string() + " --data " +
                 (dataset_dir() / "test.m2av").string() +
                 " --variant m2a --seed 1 --format csv --out " + out.string());
  CHECK(csv.code == 0);
  CHECK(file_bytes(out).rfind("metric,value\n", 0) == 0);

  // a checkpoint trained with m2a cannot be read into a plain backbone
  auto wrong = run("eval --checkpoint " + model_path().string() + " --data " +
                   (dataset_dir() / "test.m2av").string() + " --variant none --seed 1");
  CHECK(wrong.code == 1);
  CHECK(contains(wrong.output, "error: "));
}

TEST_CASE("saliency exports one cam and one input image per frame") {
  const fs::path out = g_work / "cams";
  auto r = run("saliency --checkpoint " + model_path().string() + " --data " +
               (dataset_dir() / "test.m2av").string() + " --out " + out.string() +
               " --variant m2a --layer stage1.block0.post_mech --index 1");
  CHECK(r.code == 0);
  CHECK(contains(r.output, "clip 1 (label 1 'move_right')"));
  CHECK(contains(r.output, "layer stage1.block0.post_mech -> 4x4 maps"));
  CHECK(contains(r.output, "wrote 8 pgm files to " + out.string()));
  int files = 0;
  for (int t = 0; t < 4; ++t) {
    char cam[32], input[32];
    std::snprintf(cam, sizeof cam, "frame_%02d_cam.pgm", t);
    std::snprintf(input, sizeof input, "frame_%02d_input.pgm", t);
    files += fs::exists(out / cam) + fs::exists(out / input);
  }
  CHECK(files == 8);

  auto bad_layer = run("saliency --checkpoint " + model_path().string() + " --data " +
                       (dataset_dir() / "test.m2av").string() + " --out " + out.string() +
                       " --variant m2a --layer stage9.block9.out");
  CHECK(bad_layer.code == 1);
  CHECK(contains(bad_layer.output, "error: "));

  auto bad_index = run("saliency --checkpoint " + model_path().string() + " --data " +
                       (dataset_dir() / "test.m2av").string() + " --out " + out.string() +
                       " --variant m2a --index 99");
  CHECK(bad_index.code == 1);
}

TEST_CASE("ablate compares variants against the plain backbone") {
  const fs::path out = g_work / "ablation";
  auto r = run("ablate --data " + dataset_dir().string() +
               " --variants none,m2a --epochs 1 --batch 5 --seed 1 --out " + out.string());
  CHECK(r.code == 0);
  CHECK(contains(r.output, "[1/2] training none"));
  CHECK(contains(r.output, "[2/2] training m2a"));
  CHECK(contains(r.output, "variant       macs/clip   top-1"));
  CHECK(contains(r.output, "none"));
  // the m2a row carries a signed delta against the none row
  CHECK((contains(r.output, "% (+") || contains(r.output, "% (-")));

  CHECK(fs::exists(out / "none.m2ac"));
  CHECK(fs::exists(out / "m2a.m2ac"));
  CHECK(fs::exists(out / "metrics_none.csv"));
  CHECK(fs::exists(out / "metrics_m2a.csv"));
  const std::string summary = file_bytes(out / "summary.csv");
  CHECK(summary.rfind("variant,macs,top1,top2,delta_top1,delta_top2\n", 0) == 0);
  CHECK(contains(summary, "none,"));
  CHECK(contains(summary, "m2a,"));

  CHECK(run("ablate --data " + dataset_dir().string() + " --variants none,warp").code == 2);
}

TEST_CASE("config files provide defaults that flags override") {
  const fs::path cfg = g_work / "macs.cfg";
  std::ofstream(cfg) << "arch=mobilenetv2\nframes=16\n";

  auto from_file = run("macs --config " + cfg.string() + " --variant none");
  CHECK(from_file.code == 0);
  CHECK(contains(from_file.output, "  arch = mobilenetv2"));
  CHECK(contains(from_file.output, "  frames = 16"));

  auto overridden = run("macs --config " + cfg.string() + " --variant none --arch resnet18");
  CHECK(overridden.code == 0);
  CHECK(contains(overridden.output, "  arch = resnet18"));
  CHECK(contains(overridden.output, "  frames = 16"));
}

int main(int argc, char** argv) {
  if (argc < 2 || argv[1][0] == '-') {
    std::fprintf(stderr, "usage: test_cli <path-to-m2a-binary> [doctest args]\n");
    return 64;
  }
  g_cli = argv[1];
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  std::vector<char*> pass;
  pass.push_back(argv[0]);
  for (int i = 2; i < argc; ++i) pass.push_back(argv[i]);
  doctest::Context ctx(static_cast<int>(pass.size()), pass.data());
  const int rc = ctx.run();
  fs::remove_all(g_work);
  return rc;
}
