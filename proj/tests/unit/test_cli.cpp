#include <algorithm>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "doctest.h"
#include "netrecast/cost_model.hpp"
#include "test_util.hpp"

using netrecast::cli::run_cli;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

const std::vector<std::string> kTinyData = {"--data",  "synth", "--synth-train", "96", "--synth-val", "48",
                                            "--classes", "2",   "--size",        "8"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

// Small teacher trained for one epoch into dir/name.
std::string train_tiny(testutil::TempDir& dir, const std::string& name) {
  testutil::write_bytes(dir.file("tiny.arch"), "input 3 8 8\nstem 4\nbasic 4\nclassifier 2\n");
  const Run r = cli(with({"train", "--arch", dir.file("tiny.arch"), "--epochs", "1", "--batch", "16", "--out",
                          dir.file(name)},
                         kTinyData));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  return dir.file(name);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("missing or unknown command exits 2 with one line") {
    for (const auto& args : std::vector<std::vector<std::string>>{{}, {"fly"}, {"train"}}) {
      const Run r = cli(args);
      CHECK(r.code == 2);
      CHECK(r.err.find("error") != std::string::npos);
      CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
    }
  }

  TEST_CASE("invalid data path exits 2 before writing") {
    testutil::TempDir dir("cli_badpath");
    const Run r = cli({"train", "--arch", "mini-resnet", "--data", dir.file("nope.bin"), "--val-data",
                       dir.file("nope2.bin"), "--out", dir.file("o")});
    CHECK(r.code == 2);
    CHECK(r.err.find("nope.bin") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(dir.file("o")));
  }

  TEST_CASE("validation errors exit 2") {
    testutil::TempDir dir("cli_valid");
    CHECK(cli(with({"train", "--arch", "mini-resnet", "--lr", "-1", "--out", dir.file("a")}, kTinyData)).code == 2);
    CHECK(cli(with({"train", "--arch", "no-such-preset", "--out", dir.file("b")}, kTinyData)).code == 2);
    CHECK(cli({"analyze", "--arch", "resnet56", "--convention", "sideways", "--out", dir.file("c")}).code == 2);
    CHECK(cli({"analyze", "--arch", "resnet56", "--input", "1x32x32", "--out", dir.file("d")}).code == 2);
  }

  TEST_CASE("unwritable output exits 3") {
    const Run r = cli({"analyze", "--arch", "resnet56", "--out", "/proc/netrecast/out"});
    CHECK(r.code == 3);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  }

  TEST_CASE("analyze resnet56") {
    testutil::TempDir dir("cli_analyze");
    const Run r = cli({"analyze", "--arch", "resnet56", "--out", dir.path()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("850864") != std::string::npos);
    const auto kv = netrecast::parse_kv(testutil::read_bytes(dir.file("cost.kv")));
    CHECK(kv.at("params") == "850864");
    CHECK(kv.at("mults") == "125747200");
    CHECK(kv.at("act_load") == "556032");
    CHECK(testutil::read_bytes(dir.file("cost.txt")) == r.out);
  }

  TEST_CASE("same seed gives byte-identical artifacts") {
    testutil::TempDir dir("cli_det");
    const std::string a = train_tiny(dir, "a"), b = train_tiny(dir, "b");
    CHECK(testutil::read_bytes(a + "/teacher.nrb") == testutil::read_bytes(b + "/teacher.nrb"));
    CHECK(testutil::read_bytes(a + "/metrics.csv") == testutil::read_bytes(b + "/metrics.csv"));
    CHECK(testutil::read_bytes(a + "/metrics.csv").rfind("epoch,train_loss,val_acc,lr\n", 0) == 0);
  }

  TEST_CASE("all-keep recast reproduces the teacher; eval, plot data, input safety") {
    testutil::TempDir dir("cli_keep");
    const std::string t = train_tiny(dir, "t");
    const std::string teacher = t + "/teacher.nrb";
    const std::string before = testutil::read_bytes(teacher);
    testutil::write_bytes(dir.file("keep.plan"), "block 0: keep\n");

    const Run r = cli(with({"recast", "--teacher", teacher, "--plan", dir.file("keep.plan"), "--out", dir.file("r")},
                           kTinyData));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(testutil::read_bytes(dir.file("r/student.nrb")) == before);
    CHECK(testutil::read_bytes(dir.file("r/cost_before.kv")) == testutil::read_bytes(dir.file("r/cost_after.kv")));
    CHECK(testutil::read_bytes(teacher) == before);

    const Run e1 = cli(with({"eval", "--checkpoint", teacher, "--out", dir.file("e1")}, kTinyData));
    const Run e2 = cli(with({"eval", "--checkpoint", dir.file("r/student.nrb"), "--out", dir.file("e2")}, kTinyData));
    REQUIRE(e1.code == 0);
    REQUIRE(e2.code == 0);
    CHECK(testutil::read_bytes(dir.file("e1/eval.kv")) == testutil::read_bytes(dir.file("e2/eval.kv")));

    const Run p = cli({"export-plotdata", "--runs", dir.file("r"), "--out", dir.file("p")});
    REQUIRE_MESSAGE(p.code == 0, p.err);
    const std::string table = testutil::read_bytes(dir.file("p/plotdata.csv"));
    CHECK(table.rfind("run,model,val_error,params,mults,act_load\n", 0) == 0);
    CHECK(std::count(table.begin(), table.end(), '\n') == 3);
    CHECK(table.find("r,baseline,") != std::string::npos);
    CHECK(table.find("r,recast,") != std::string::npos);

    // Fine-tuning into the student's own directory would overwrite it.
    const std::string student = testutil::read_bytes(dir.file("r/student.nrb"));
    const Run f = cli(with({"finetune", "--teacher", teacher, "--student", dir.file("r/student.nrb"), "--epochs", "1",
                            "--out", dir.file("r")},
                           kTinyData));
    CHECK(f.code == 2);
    CHECK(f.err.find("overwrite") != std::string::npos);
    CHECK(testutil::read_bytes(dir.file("r/student.nrb")) == student);
  }

  TEST_CASE("recast needs exactly one plan source") {
    testutil::TempDir dir("cli_plan");
    const std::string teacher = train_tiny(dir, "t") + "/teacher.nrb";
    CHECK(cli(with({"recast", "--teacher", teacher, "--out", dir.file("a")}, kTinyData)).code == 2);
    CHECK(cli(with({"recast", "--teacher", teacher, "--transform", "basic", "--compress", "0.5", "--out",
                    dir.file("b")},
                   kTinyData))
              .code == 2);
    const Run r = cli(with({"recast", "--teacher", teacher, "--transform", "dense", "--out", dir.file("c")}, kTinyData));
    CHECK(r.code == 2);
  }

  TEST_CASE("config file values are overridden by flags") {
    testutil::TempDir dir("cli_config");
    testutil::write_bytes(dir.file("run.ini"), "[analyze]\narch=resnet56\nconvention=full\nclasses=7\n");
    const Run r = cli({"--config", dir.file("run.ini"), "analyze", "--classes", "5", "--out", dir.path()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto kv = netrecast::parse_kv(testutil::read_bytes(dir.file("cost.kv")));
    // Full convention, 5-way classifier: 64 * 5 weights + 5 biases on top.
    CHECK(kv.at("params") == std::to_string(850864 + 64 * 5 + 5));
    const std::string resolved = testutil::read_bytes(dir.file("config.ini"));
    CHECK(resolved.find("classes=5") != std::string::npos);
    CHECK(resolved.find("convention=\"full\"") != std::string::npos);
  }

  TEST_CASE("train mini-resnet on the synthetic benchmark") {
    testutil::TempDir dir("cli_mini");
    const Run r = cli({"train", "--arch", "mini-resnet", "--epochs", "6", "--milestones", "3:10,5:10", "--out",
                       dir.path()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(std::filesystem::exists(dir.file("teacher.nrb")));
    const auto kv = netrecast::parse_kv(testutil::read_bytes(dir.file("summary.kv")));
    MESSAGE("val_acc " << kv.at("val_acc"));
    CHECK(std::stod(kv.at("val_acc")) >= 0.95);
  }
}
