// End-to-end acceptance checks. One PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance A4 A8      run the named ones
//
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "netrecast/autograd.hpp"
#include "netrecast/checkpoint.hpp"
#include "netrecast/cost_model.hpp"
#include "netrecast/ops.hpp"
#include "netrecast/recast.hpp"

using namespace netrecast;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char b[64];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

std::string pct(double acc) { return fmt("%.2f%%", acc * 100.0); }

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void progress(const std::string& line) {
  std::fprintf(stderr, "  .. %s\n", line.c_str());
  std::fflush(stderr);
}

std::function<void(const EpochRecord&)> log_epochs(const std::string& tag) {
  return [tag](const EpochRecord& r) {
    progress(tag + " epoch " + std::to_string(r.epoch) + " loss " + fmt("%.4f", r.train_loss) + " val " +
             pct(r.val_acc));
  };
}

// ---- desk benchmark ------------------------------------------------------------

struct Bench {
  Dataset train, val;
  NormStats norm;
};

const Bench& desk() {
  static const Bench b = [] {
    Bench d;
    d.train = synth_dataset(11, 10000, 10, 16, Split::train);
    d.val = synth_dataset(12, 2000, 10, 16, Split::val);
    d.norm = compute_norm_stats(d.train);
    return d;
  }();
  return b;
}

double accuracy(Network& net) { return evaluate(net, desk().val, desk().norm).accuracy; }

Network train_teacher(const std::string& preset, int epochs, std::uint64_t seed) {
  Network net = build_network(preset, 10, seed);
  TrainConfig c;
  c.epochs = epochs;
  c.optimizer = OptimizerConfig::sgd(0.05, 0.9, 5e-4);
  c.optimizer.schedule = {{epochs / 2, 10.0}, {epochs * 5 / 6, 10.0}};
  c.seed = seed;
  c.on_epoch = log_epochs(preset + " teacher");
  train_supervised(net, desk().train, desk().val, desk().norm, c);
  return net;
}

// Desk-scale recasting schedule: Adam without decay inside the short
// per-block runs, then distillation fine-tuning with step decay.
RecastConfig desk_recast(int epochs_per_block) {
  RecastConfig c;
  c.epochs_per_block = epochs_per_block;
  c.optimizer = OptimizerConfig::adam(2e-3);
  c.on_record = [](int step, int epoch, double loss, double) {
    progress("recast step " + std::to_string(step) + " epoch " + std::to_string(epoch) + " loss " +
             fmt("%.5f", loss));
  };
  return c;
}

FinetuneConfig desk_finetune(int epochs, double lr, const std::string& tag) {
  FinetuneConfig c;
  c.epochs = epochs;
  c.optimizer = OptimizerConfig::adam(lr);
  c.optimizer.schedule = {{epochs / 2, 10.0}, {epochs * 5 / 6, 10.0}};
  c.on_epoch = log_epochs(tag);
  return c;
}

// Recast then fine-tune; returns the student's validation accuracy.
double recast_and_finetune(const Network& teacher, const RecastPlan& plan, Network* out, int epochs_per_block,
                           int finetune_epochs) {
  RecastResult r = sequential_recast(teacher, plan, desk().train, desk().norm, desk_recast(epochs_per_block));
  progress("recast only " + pct(accuracy(r.student)));
  kd_finetune(teacher, r.student, desk().train, desk().val, desk().norm,
              desk_finetune(finetune_epochs, 1e-3, "fine-tune"));
  const double acc = accuracy(r.student);
  if (out) *out = std::move(r.student);
  return acc;
}

// ---- A1 ---------------------------------------------------------------------

bool within(double v, double expected, double rel) { return std::abs(v - expected) <= rel * expected; }

std::map<std::string, std::string> cli_analyze(const std::string& preset) {
  const fs::path dir = fs::temp_directory_path() / ("netrecast_accept_a1_" + preset);
  std::ostringstream out, err;
  const int code = cli::run_cli({"analyze", "--arch", preset, "--out", dir.string()}, out, err);
  if (code != 0) throw std::runtime_error("analyze " + preset + " failed: " + err.str());
  std::ifstream f(dir / "cost.kv");
  std::stringstream ss;
  ss << f.rdbuf();
  fs::remove_all(dir);
  return parse_kv(ss.str());
}

Verdict a1() {
  const auto r56 = cli_analyze("resnet56");
  const auto wrn = cli_analyze("wrn-28-10");
  const double p = std::stod(r56.at("params")), m = std::stod(r56.at("mults")), a = std::stod(r56.at("act_load"));
  const double wp = std::stod(wrn.at("params")), wm = std::stod(wrn.at("mults"));
  const bool ok = within(p, 0.85e6, 0.02) && within(m, 125.75e6, 0.02) && within(a, 0.56e6, 0.15) &&
                  within(wp, 36.45e6, 0.02) && within(wm, 5.24e9, 0.02);
  return {ok, "resnet56 params " + fmt("%.4gM", p / 1e6) + " mults " + fmt("%.5gM", m / 1e6) + " act_load " +
                  fmt("%.4gM", a / 1e6) + "; wrn-28-10 params " + fmt("%.4gM", wp / 1e6) + " mults " +
                  fmt("%.4gB", wm / 1e9)};
}

// ---- A2 ---------------------------------------------------------------------

struct FdStats {
  int cases = 0;
  int failed_cases = 0;
  std::string first_failure;
};

void fd_check(FdStats& st, const std::string& label, const std::function<Tensor<double>()>& loss,
              std::vector<Tensor<double>> leaves) {
  constexpr double h = 1e-6, rtol = 1e-3, atol = 1e-8;
  ++st.cases;
  for (auto& l : leaves) {
    l.set_requires_grad(true);
    l.zero_grad();
  }
  {
    Tape<double> tape;
    tape.backward(loss());
  }
  std::vector<std::vector<double>> analytic;
  for (auto& l : leaves) analytic.emplace_back(l.grad().begin(), l.grad().end());
  NoGradScope<double> off;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto v = leaves[k].mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + h;
      const double up = loss().item();
      v[i] = saved - h;
      const double down = loss().item();
      v[i] = saved;
      const double numeric = (up - down) / (2 * h), a = analytic[k][i];
      if (std::abs(a - numeric) > rtol * std::max(std::abs(a), std::abs(numeric)) + atol) {
        if (st.failed_cases == 0) st.first_failure = label;
        ++st.failed_cases;
        return;
      }
    }
  }
}

Tensor<double> uniform(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

// Signs random, magnitudes >= 0.05: relu kinks stay far from the step.
Tensor<double> off_zero(Shape s, Rng& rng) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.mutable_data()) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.05, 1.0);
  return t;
}

Tensor<double> spread(Shape s, Rng& rng) {
  Tensor<double> t(std::move(s));
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.01 * static_cast<double>(i);
  rng.shuffle(d);
  return t;
}

std::vector<Tensor<double>> params_of(BlockT<double>& b) {
  std::vector<Tensor<double>> out;
  for (auto& e : b.params()) out.push_back(e.value);
  return out;
}

Verdict a2() {
  FdStats st;
  Rng rng(2024);
  auto weights = [&](const Tensor<double>& y) {
    NoGradScope<double> off;
    return uniform(y.shape(), rng);
  };
  auto weighted = [](const Tensor<double>& y, const Tensor<double>& w) { return mse_loss(y, w); };

  for (int t = 0; t < 16; ++t) {
    const std::int64_t b = 1 + rng.below(2), ci = 1 + rng.below(3), co = 1 + rng.below(3), hw = 3 + rng.below(3);
    const int k = rng.bernoulli(0.5) ? 3 : 1, stride = 1 + static_cast<int>(rng.below(2)), pad = k / 2;
    auto x = uniform({b, ci, hw, hw}, rng), w = uniform({co, ci, k, k}, rng), bias = uniform({co}, rng);
    auto target = weights(conv2d(x, w, bias, stride, pad));
    fd_check(st, "conv2d", [&] { return weighted(conv2d(x, w, bias, stride, pad), target); }, {x, w, bias});
  }
  for (int t = 0; t < 10; ++t) {
    const std::int64_t c = 1 + rng.below(3);
    auto x = uniform({2 + static_cast<std::int64_t>(rng.below(2)), c, 3, 3}, rng);
    auto g = uniform({c}, rng, 0.5, 1.5), be = uniform({c}, rng);
    BatchNormStats<double> run{Tensor<double>(Shape{c}), Tensor<double>(Shape{c})};
    const Mode mode = t % 3 == 2 ? Mode::eval : Mode::train;
    if (mode == Mode::eval) {
      for (auto& v : run.var.mutable_data()) v = 1.3;
    }
    auto target = weights(x);
    fd_check(st, "batchnorm2d", [&] { return weighted(batchnorm2d(x, g, be, run, mode), target); }, {x, g, be});
  }
  for (int t = 0; t < 6; ++t) {
    auto a = off_zero({2, 2, 3, 3}, rng), b = uniform({2, 2, 3, 3}, rng);
    auto target = weights(a);
    const double f = rng.uniform(-2.0, 2.0);
    fd_check(st, "add", [&] { return weighted(add(a, b), target); }, {a, b});
    fd_check(st, "scale", [&] { return weighted(scale(a, f), target); }, {a});
    fd_check(st, "relu", [&] { return weighted(relu(a), target); }, {a});
    fd_check(st, "sum", [&] { return sum(scale(a, f)); }, {a});
  }
  for (int t = 0; t < 6; ++t) {
    auto a = uniform({2, 1 + static_cast<std::int64_t>(rng.below(3)), 4, 4}, rng);
    auto b = uniform({2, 1 + static_cast<std::int64_t>(rng.below(3)), 4, 4}, rng);
    std::vector<Tensor<double>> parts{a, b};
    auto target = weights(concat_channels<double>(parts));
    fd_check(st, "concat", [&] { return weighted(concat_channels<double>(std::vector<Tensor<double>>{a, b}), target); },
             {a, b});
    auto p = spread({2, 2, 4, 4}, rng);
    auto tp = weights(avgpool2d(p, 2, 2));
    fd_check(st, "avgpool2d", [&] { return weighted(avgpool2d(p, 2, 2), tp); }, {p});
    fd_check(st, "maxpool2d", [&] { return weighted(maxpool2d(p, 2, 2), tp); }, {p});
    auto tg = weights(global_avgpool(p));
    fd_check(st, "global_avgpool", [&] { return weighted(global_avgpool(p), tg); }, {p});
  }
  for (int t = 0; t < 6; ++t) {
    const std::int64_t n = 2 + rng.below(3), in = 2 + rng.below(4), out = 2 + rng.below(4);
    auto x = uniform({n, in}, rng), w = uniform({out, in}, rng), b = uniform({out}, rng);
    std::vector<int> labels;
    for (std::int64_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.below(out)));
    auto teacher = uniform({n, out}, rng);
    auto tl = weights(linear(x, w, b));
    fd_check(st, "linear", [&] { return weighted(linear(x, w, b), tl); }, {x, w, b});
    fd_check(st, "cross_entropy", [&] { return cross_entropy<double>(linear(x, w, b), labels); }, {x, w, b});
    fd_check(st, "mse_activation_loss", [&] { return mse_activation_loss(linear(x, w, b), teacher); }, {w, b});
    fd_check(st, "kd_loss", [&] { return kd_loss<double>(linear(x, w, b), teacher, labels); }, {w, b});
  }
  const std::vector<BlockSpec> kinds{
      BlockSpec::convolution(2, 3),      BlockSpec::convolution(3, 2, 2),  BlockSpec::convolution(2, 3, 1, true),
      BlockSpec::basic(3, 3),            BlockSpec::basic(2, 4, 2),        BlockSpec::bottleneck(4, 8, 1, 2),
      BlockSpec::bottleneck(8, 8, 2, 2), BlockSpec::dense(3, 2, 2, 2),     BlockSpec::transition(4, 2),
      BlockSpec::classifier(3, 4),       BlockSpec::classifier(3, 4, 5),
  };
  for (const auto& spec : kinds) {
    Rng init = rng.split(7);
    BlockT<double> blk(spec, init);
    auto x = uniform({2, spec.in_channels, 4, 4}, rng);
    auto target = weights(blk.forward(x, Mode::train));
    auto leaves = params_of(blk);
    leaves.push_back(x);
    fd_check(st, describe(spec), [&] { return weighted(blk.forward(x, Mode::train), target); }, leaves);
  }
  for (int chain = 0; chain < 3; ++chain) {
    std::vector<BlockT<double>> blocks;
    int c = 1 + static_cast<int>(rng.below(3));
    const int c_in = c;
    for (int d = 0; d < 3; ++d) {
      const int out = 2 + static_cast<int>(rng.below(3));
      BlockSpec spec;
      switch (rng.below(4)) {
        case 0: spec = BlockSpec::convolution(c, out); break;
        case 1: spec = BlockSpec::basic(c, out); break;
        case 2: spec = BlockSpec::bottleneck(c, 2 * out, 1, out / 2 + 1); break;
        default: spec = BlockSpec::dense(c, 2, 1, 2); break;
      }
      Rng init = rng.split(100 + d);
      blocks.emplace_back(spec, init);
      c = spec.out_channels;
    }
    Rng init = rng.split(200);
    blocks.emplace_back(BlockSpec::classifier(c, 3), init);
    auto x = uniform({2, c_in, 4, 4}, rng);
    auto target = uniform({2, 3}, rng);
    std::vector<Tensor<double>> leaves{x};
    std::string label = "chain";
    for (auto& b : blocks) {
      label += " / " + describe(b.spec());
      for (auto& l : params_of(b)) leaves.push_back(l);
    }
    fd_check(st, label, [&] {
      Tensor<double> h = x;
      for (auto& b : blocks) h = b.forward(h, Mode::train);
      return mse_loss(h, target);
    }, leaves);
  }
  const bool ok = st.failed_cases == 0 && st.cases >= 100;
  std::string detail = std::to_string(st.cases) + " cases, " + std::to_string(st.failed_cases) + " failed";
  if (!st.first_failure.empty()) detail += " (first: " + st.first_failure + ")";
  return {ok, detail};
}

// ---- A3 ---------------------------------------------------------------------

Verdict a3() {
  const Bench& d = desk();
  Network teacher = build_network("mini-resnet", 10, 3);
  {
    TrainConfig c;
    c.epochs = 1;
    c.optimizer = OptimizerConfig::sgd(0.05, 0.9, 5e-4);
    train_supervised(teacher, d.train.slice(0, 2000), d.val, d.norm, c);
  }
  const std::size_t n = teacher.num_blocks();
  RecastResult keep = sequential_recast(teacher, RecastPlan::all_keep(n), d.train, d.norm, RecastConfig{});

  Dataset probe = d.val.slice(0, 256);
  Tensor<float> x = probe.images.clone();
  normalize(x.mutable_data(), probe.channels(), probe.height() * probe.width(), d.norm);
  Network t2 = teacher.clone();
  const Tensor<float> lt = t2.logits(x, Mode::eval), ls = keep.student.logits(x, Mode::eval);
  const bool identical = lt.shape() == ls.shape() &&
                         std::memcmp(lt.data().data(), ls.data().data(), lt.data().size_bytes()) == 0;

  RecastPlan same = RecastPlan::all_keep(n);
  for (std::size_t i = 0; i < n; ++i) {
    const BlockSpec& b = teacher.spec().blocks[i];
    same.blocks[i] = PlanEntry{RecastAction::recast, b.kind, b.out_channels};
  }
  RecastConfig c;
  c.epochs_per_block = 1;
  c.init_from_teacher = true;
  c.trainable_mode = Mode::eval;
  RecastResult copy = sequential_recast(teacher, same, d.train.slice(0, 512), d.norm, c);
  double worst = 0.0;
  for (const auto& s : copy.log.steps) {
    worst = std::max(worst, s.initial_loss);
    for (double l : s.epoch_loss) worst = std::max(worst, l);
  }
  return {identical && worst == 0.0, std::string("all-keep logits ") + (identical ? "bit-identical" : "DIFFER") +
                                         "; teacher-copied targets: max activation loss " + fmt("%g", worst) + " over " +
                                         std::to_string(copy.log.steps.size()) + " steps"};
}

// ---- A4 ---------------------------------------------------------------------

constexpr int kTeacherEpochs = 6;
constexpr int kEpochsPerBlock = 2;
constexpr int kFinetuneEpochs = 6;
constexpr int kBaselineEpochs = kTeacherEpochs;

Verdict a4() {
  const auto t0 = std::chrono::steady_clock::now();
  const Bench& d = desk();
  Network teacher = train_teacher("mini-resnet", kTeacherEpochs, 1);
  const double t_acc = accuracy(teacher);
  const RecastPlan plan = make_transform_plan(teacher.spec(), BlockKind::convolution);
  Network student = teacher.clone();
  const double r_acc = recast_and_finetune(teacher, plan, &student, kEpochsPerBlock, kFinetuneEpochs);

  const NetworkSpec sspec = student.spec();
  Network bp = build_network(sspec, 2);
  {
    TrainConfig c;
    c.epochs = kBaselineEpochs;
    c.optimizer = OptimizerConfig::sgd(0.05, 0.9, 5e-4);
    c.optimizer.schedule = {{kBaselineEpochs / 2, 10.0}, {kBaselineEpochs * 5 / 6, 10.0}};
    c.seed = 2;
    c.on_epoch = log_epochs("backprop");
    train_supervised(bp, d.train, d.val, d.norm, c);
  }
  const double bp_acc = accuracy(bp);
  Network kd = build_network(sspec, 3);
  kd_finetune(teacher, kd, d.train, d.val, d.norm, desk_finetune(kBaselineEpochs, 1e-3, "kd-only"));
  const double kd_acc = accuracy(kd);
  const double secs = elapsed_since(t0);

  const bool ok = t_acc >= 0.95 && r_acc >= t_acc - 0.02 && bp_acc <= r_acc + 0.005 && kd_acc <= r_acc + 0.005 &&
                  secs <= 1800.0;
  return {ok, "teacher " + pct(t_acc) + ", recast+KD " + pct(r_acc) + ", backprop " + pct(bp_acc) + ", KD-only " +
                  pct(kd_acc) + ", " + fmt("%.0f s", secs)};
}

// ---- A5 ---------------------------------------------------------------------

Verdict a5() {
  const auto t0 = std::chrono::steady_clock::now();
  Network teacher = train_teacher("mini-densenet", 5, 1);
  const double t_acc = accuracy(teacher);
  const RecastPlan plan = make_transform_plan(teacher.spec(), BlockKind::basic);
  Network student = teacher.clone();
  const double s_acc = recast_and_finetune(teacher, plan, &student, 2, 4);
  const double load_ratio = static_cast<double>(analyze_cost(teacher.spec()).act_load) /
                            static_cast<double>(analyze_cost(student.spec()).act_load);
  const double secs = elapsed_since(t0);
  const bool ok = s_acc >= t_acc - 0.02 && load_ratio >= 2.0 && secs <= 1800.0;
  return {ok, "teacher " + pct(t_acc) + ", basic student " + pct(s_acc) + ", act_load reduced " +
                  fmt("%.2fx", load_ratio) + ", " + fmt("%.0f s", secs)};
}

// ---- A6 ---------------------------------------------------------------------

Verdict a6() {
  const auto t0 = std::chrono::steady_clock::now();
  Network teacher = train_teacher("mini-convnet", 6, 1);
  const double t_acc = accuracy(teacher);
  const RecastPlan plan = make_compression_plan(teacher.spec(), 0.5);
  Network student = teacher.clone();
  const double s_acc = recast_and_finetune(teacher, plan, &student, 2, 4);
  const double ratio =
      static_cast<double>(count_params(teacher.spec())) / static_cast<double>(count_params(student.spec()));
  const NetworkSpec wrn = preset_spec("wrn-28-10", 10);
  const double wrn_ratio = static_cast<double>(count_params(wrn)) /
                           static_cast<double>(count_params(apply_plan(wrn, make_compression_plan(wrn, 0.2))));
  const bool ok = s_acc >= t_acc - 0.03 && within(ratio, 4.0, 0.15) && within(wrn_ratio, 24.9, 0.10);
  return {ok, "teacher " + pct(t_acc) + ", r=0.5 student " + pct(s_acc) + ", params " + fmt("%.2fx", ratio) +
                  " smaller; wrn-28-10 at r=0.2: " + fmt("%.1fx", wrn_ratio) + ", " +
                  fmt("%.0f s", elapsed_since(t0))};
}

// ---- A7 ---------------------------------------------------------------------

Verdict a7() {
  const auto t0 = std::chrono::steady_clock::now();
  const Bench& d = desk();
  Network teacher = train_teacher("deep-resnet", 6, 1);
  const RecastPlan plan = make_transform_plan(teacher.spec(), BlockKind::convolution);
  int convs = 0;
  const NetworkSpec sspec = apply_plan(teacher.spec(), plan);
  for (const auto& b : sspec.blocks) convs += b.kind == BlockKind::convolution;
  const double seq_err = 1.0 - recast_and_finetune(teacher, plan, nullptr, 1, 4);

  Network scratch = build_network(sspec, 2);
  TrainConfig c;
  c.epochs = 6;
  c.optimizer = OptimizerConfig::sgd(0.05, 0.9, 5e-4);
  c.optimizer.schedule = {{3, 10.0}, {5, 10.0}};
  c.seed = 2;
  c.on_epoch = log_epochs("scratch");
  train_supervised(scratch, d.train, d.val, d.norm, c);
  const double scratch_err = 1.0 - accuracy(scratch);
  const bool ok = convs >= 10 && seq_err < scratch_err + 0.005;
  return {ok, std::to_string(convs) + " conv blocks: sequential " + pct(seq_err) + " error, scratch backprop " +
                  pct(scratch_err) + " error, " + fmt("%.0f s", elapsed_since(t0))};
}

// ---- A8 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Verdict a8() {
  const fs::path root = fs::temp_directory_path() / "netrecast_accept_a8";
  fs::remove_all(root);
  const std::vector<std::string> data = {"--data",      "synth", "--synth-train", "1000", "--synth-val",
                                         "400",         "--classes", "4",          "--size", "16"};
  auto run = [&](std::vector<std::string> args) {
    args.insert(args.end(), data.begin(), data.end());
    std::ostringstream out, err;
    if (cli::run_cli(args, out, err) != 0) throw std::runtime_error(err.str());
  };
  for (const char* tag : {"a", "b"}) {
    const fs::path dir = root / tag;
    run({"train", "--arch", "mini-resnet", "--epochs", "2", "--out", (dir / "train").string()});
    run({"recast", "--teacher", (dir / "train" / "teacher.nrb").string(), "--transform", "convolution",
         "--epochs-per-block", "1", "--finetune-epochs", "1", "--out", (dir / "recast").string()});
  }
  std::vector<std::string> differ;
  int compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root / "a");
    if (rel.filename() == "config.ini") continue;  // records the output path
    ++compared;
    if (slurp(e.path()) != slurp(root / "b" / rel)) differ.push_back(rel.string());
  }
  fs::remove_all(root);
  std::string detail = std::to_string(compared) + " artifacts compared";
  for (const auto& f : differ) detail += ", differs: " + f;
  return {differ.empty() && compared >= 10, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::pair<std::string, std::function<Verdict()>>>> all = {
      {"A1", {"cost-model reproduction", a1}},
      {"A2", {"gradient correctness", a2}},
      {"A3", {"identity fixed point", a3}},
      {"A4", {"desk-scale resnet -> conv transformation", a4}},
      {"A5", {"desk-scale dense -> basic", a5}},
      {"A6", {"compression r=0.5", a6}},
      {"A7", {"sequential vs scratch on a deep plain student", a7}},
      {"A8", {"determinism", a8}},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [id, entry] : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), id) == wanted.end()) continue;
    Verdict v;
    try {
      v = entry.second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s %s %s: %s\n", v.pass ? "PASS" : "FAIL", id.c_str(), entry.first.c_str(), v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  }
  return failures;
}
