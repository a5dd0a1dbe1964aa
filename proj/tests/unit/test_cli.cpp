#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ecn/arch_spec.hpp"
#include "ecn/checkpoint.hpp"
#include "ecn/image_io.hpp"
#include "ecn/losses.hpp"
#include "ecn/manifest.hpp"

#ifndef ECN_CLI_PATH
#error "ECN_CLI_PATH must point at the ecn executable"
#endif

namespace fs = std::filesystem;
using namespace ecn;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  static int counter = 0;
  const fs::path log = fs::path(::testing::TempDir()) / ("ecn_cli_" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(ECN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::path(::testing::TempDir()) / ("ecn_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// One shared dataset and training run; the individual tests inspect its outputs.
class CliWorkflow : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fresh_dir("workflow");
    gen_ = run("gen-synth --synthetic 6 --val-count 2 --test-count 2 --input-size 48 --seed 7 --out " +
               (root_ / "data").string());
    train_ = run("train --manifest " + (root_ / "data/manifest.tsv").string() +
                 " --input-size 32 --epochs 40 --batch 2 --lr 0.01 --seed 7 --out " + (root_ / "run").string());
  }
  static fs::path root_;
  static CliRun gen_, train_;
};

fs::path CliWorkflow::root_;
CliRun CliWorkflow::gen_;
CliRun CliWorkflow::train_;

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("train --synthetic 4").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("analyze --disable transformer").code, 2);
  const fs::path dir = fresh_dir("usage");
  EXPECT_EQ(run("train --synthetic 2 --batch 5 --input-size 32 --out " + dir.string()).code, 2);
}

TEST(Cli, MissingFilesExitOne) {
  const fs::path dir = fresh_dir("missing");
  CliRun r = run("eval --checkpoint " + (dir / "nope.ckpt").string() + " --synthetic 2");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("nope.ckpt"), std::string::npos) << r.out;
}

TEST(Cli, AnalyzeToySpec) {
  const fs::path dir = fresh_dir("analyze");
  std::ofstream(dir / "toy.spec") << "[input]\nchannels = 3\nheight = 8\nwidth = 8\n\n"
                                     "[layer]\nkind = conv\nname = conv\nc_out = 16\nkernel = 3\n";
  CliRun r = run("analyze --spec " + (dir / "toy.spec").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("57344"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("448"), std::string::npos) << r.out;
  CliRun csv = run("analyze --csv --spec " + (dir / "toy.spec").string());
  EXPECT_NE(csv.out.find("total,"), std::string::npos) << csv.out;
}

TEST(Cli, AnalyzeDefaultIsWithinBudget) {
  CliRun r = run("analyze");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("OUTSIDE"), std::string::npos) << r.out;
}

TEST_F(CliWorkflow, GenSynthWritesManifest) {
  ASSERT_EQ(gen_.code, 0) << gen_.out;
  Manifest m = load_manifest((root_ / "data/manifest.tsv").string());
  EXPECT_EQ(m.train.size(), 6u);
  EXPECT_EQ(m.val.size(), 2u);
  EXPECT_EQ(m.test.size(), 2u);
  Sample s = load_sample(m.train[0].image, m.train[0].mask);
  EXPECT_EQ(s.image.shape(), (Shape4{1, 3, 48, 48}));
}

TEST_F(CliWorkflow, TrainConvergesAndWritesArtifacts) {
  ASSERT_EQ(train_.code, 0) << train_.out;
  for (const char* f : {"best.ckpt", "final.ckpt", "train.log", "spec.txt"}) {
    EXPECT_TRUE(fs::exists(root_ / "run" / f)) << f;
  }
  const auto pos = train_.out.find("final_train_loss=");
  ASSERT_NE(pos, std::string::npos) << train_.out;
  EXPECT_LT(std::stod(train_.out.substr(pos + 17)), 0.1) << train_.out;
  EXPECT_NE(slurp(root_ / "run/train.log").find("epoch=40"), std::string::npos);
}

TEST_F(CliWorkflow, InferPreservesNamesAndSize) {
  ASSERT_EQ(train_.code, 0) << train_.out;
  const fs::path out = root_ / "masks";
  CliRun r = run("infer --checkpoint " + (root_ / "run/final.ckpt").string() + " --input " +
              (root_ / "data/images").string() + " --probabilities --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  Manifest m = load_manifest((root_ / "data/manifest.tsv").string());
  for (const auto& e : m.train) {
    const fs::path mask = out / (e.id + ".png");
    ASSERT_TRUE(fs::exists(mask)) << mask;
    EXPECT_TRUE(fs::exists(out / (e.id + "_prob.png")));
    Tensor4 pred = load_mask(mask.string());
    Tensor4 truth = load_mask(e.mask);
    ASSERT_EQ(pred.shape(), truth.shape());
    // The model was trained on these images at a lower resolution.
    Tensor<double> p(pred.shape()), g(truth.shape());
    for (std::size_t i = 0; i < pred.numel(); ++i) {
      p[i] = pred[i];
      g[i] = truth[i];
    }
    EXPECT_GE(1.0 - dice_loss_value(p, g, 0.0), 0.6) << e.id;
  }
}

TEST_F(CliWorkflow, EvalReportsMetrics) {
  ASSERT_EQ(train_.code, 0) << train_.out;
  CliRun r = run("eval --checkpoint " + (root_ / "run/best.ckpt").string() + " --manifest " +
              (root_ / "data/manifest.tsv").string() + " --split train");
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* key : {"split=train", "samples=6", "re=", "pr=", "f1=", "miou="}) {
    EXPECT_NE(r.out.find(key), std::string::npos) << key << "\n" << r.out;
  }
}

TEST(Cli, DisableIsRecordedAndRerunsAreIdentical) {
  const fs::path a = fresh_dir("rerun_a"), b = fresh_dir("rerun_b");
  const std::string args = "train --synthetic 2 --input-size 32 --epochs 2 --batch 1 --augment --disable eem --seed 11";
  ASSERT_EQ(run(args + " --out " + a.string()).code, 0);
  ASSERT_EQ(run(args + " --out " + b.string()).code, 0);
  EXPECT_EQ(slurp(a / "final.ckpt"), slurp(b / "final.ckpt"));
  EXPECT_EQ(slurp(a / "train.log"), slurp(b / "train.log"));

  Checkpoint c = load_checkpoint((a / "final.ckpt").string());
  EXPECT_FALSE(c.model.spec().ablation.eem);
  EXPECT_TRUE(c.model.spec().ablation.ulsam);
}

TEST(Cli, DefaultResolutionOverfitRun) {
  const fs::path out = fresh_dir("run1");
  CliRun r = run("train --synthetic 8 --epochs 40 --seed 7 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(out / "best.ckpt"));
  const auto pos = r.out.find("final_train_loss=");
  ASSERT_NE(pos, std::string::npos) << r.out;
  EXPECT_LT(std::stod(r.out.substr(pos + 17)), 0.1) << r.out;
}
