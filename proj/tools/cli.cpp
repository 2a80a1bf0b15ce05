#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "netrecast/checkpoint.hpp"
#include "netrecast/cost_model.hpp"
#include "netrecast/recast.hpp"

namespace netrecast::cli {

namespace fs = std::filesystem;

std::string default_output_root() {
  const char* env = std::getenv("NETRECAST_OUT");
  return env && *env ? std::string(env) : std::string("runs");
}

namespace {

// ---- option groups ---------------------------------------------------------

struct DataOptions {
  std::string data = "synth";
  std::string format = "raw-tensor";
  std::string val_data;
  std::string val_format;
  int synth_train = 10000;
  int synth_val = 2000;
  std::uint64_t data_seed = 11;
  int classes = 10;
  int size = 16;
};

struct OptimOptions {
  std::string kind;
  double lr = 0.0;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::string milestones = "auto";
};

struct Options {
  std::string out;
  std::uint64_t seed = 1;
  int batch = 64;
  bool augment = true;
  DataOptions data;

  // train
  std::string arch;
  int epochs = 10;
  OptimOptions train_opt{"sgd", 0.05, 0.9, 5e-4, "auto"};

  // recast / finetune
  std::string teacher;
  std::string student;
  std::string plan;
  std::string transform;
  double compress = 0.0;
  int epochs_per_block = 8;
  OptimOptions recast_opt{"adam", 5e-4, 0.9, 0.0, "5:10"};
  bool init_from_teacher = false;
  bool freeze_prefix = false;
  bool eval_mode_blocks = false;
  bool refresh_bn = true;
  int finetune_epochs = 0;
  OptimOptions finetune_opt{"adam", 1e-4, 0.9, 0.0, ""};
  bool no_logit_term = false;

  // analyze / eval / export
  std::string checkpoint;
  std::string input;
  std::string convention = "conv_only";
  std::vector<std::string> runs;
};

void add_data_options(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--data", d.data, "Training data file, or 'synth' for the procedural dataset")
      ->capture_default_str();
  cmd->add_option("--format", d.format, "Format of --data: idx, cifar-binary, raw-tensor")->capture_default_str();
  cmd->add_option("--val-data", d.val_data, "Validation data file (required unless --data synth)");
  cmd->add_option("--val-format", d.val_format, "Format of --val-data (default: --format)");
  cmd->add_option("--synth-train", d.synth_train, "Synthetic training images")->capture_default_str();
  cmd->add_option("--synth-val", d.synth_val, "Synthetic validation images")->capture_default_str();
  cmd->add_option("--data-seed", d.data_seed, "Synthetic data seed")->capture_default_str();
  cmd->add_option("--classes", d.classes, "Classes (synthetic data, presets)")->capture_default_str();
  cmd->add_option("--size", d.size, "Synthetic image size")->capture_default_str();
}

void add_optim_options(CLI::App* cmd, OptimOptions& o, const std::string& prefix) {
  cmd->add_option("--" + prefix + "optimizer", o.kind, "sgd or adam")->capture_default_str();
  cmd->add_option("--" + prefix + "lr", o.lr, "Learning rate")->capture_default_str();
  cmd->add_option("--" + prefix + "momentum", o.momentum, "SGD momentum")->capture_default_str();
  cmd->add_option("--" + prefix + "weight-decay", o.weight_decay, "L2 weight decay")->capture_default_str();
  cmd->add_option("--" + prefix + "milestones", o.milestones,
                  "LR milestones 'epoch:divisor,...'; 'auto' = /10 at 1/2 and 3/4 of the epochs")
      ->capture_default_str();
}

OptimizerConfig make_optimizer(const OptimOptions& o, int epochs) {
  OptimizerConfig c;
  c.kind = parse_optimizer_kind(o.kind);
  c.learning_rate = o.lr;
  c.momentum = o.momentum;
  c.weight_decay = o.weight_decay;
  if (o.milestones == "auto") {
    if (epochs >= 4) c.schedule = {{epochs / 2, 10.0}, {epochs * 3 / 4, 10.0}};
  } else if (!o.milestones.empty()) {
    std::stringstream ss(o.milestones);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      try {
        if (colon == std::string::npos) throw std::invalid_argument(item);
        c.schedule.push_back({std::stoi(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
      } catch (const std::exception&) {
        throw ConfigError("bad milestone '" + item + "' (expected epoch:divisor)");
      }
      if (c.schedule.back().epoch < 0 || !(c.schedule.back().divisor > 0)) {
        throw ConfigError("bad milestone '" + item + "'");
      }
    }
  }
  c.validate();
  return c;
}

// ---- data ----------------------------------------------------------------

struct Loaded {
  Dataset train;
  Dataset val;
  NormStats norm;
};

Loaded load_data(const DataOptions& d) {
  Loaded l;
  if (d.data == "synth") {
    if (d.classes < 1 || d.synth_train < d.classes || d.synth_val < d.classes || d.size < 4) {
      throw ConfigError("synthetic data needs classes >= 1, at least one image per class and size >= 4");
    }
    l.train = synth_dataset(d.data_seed, d.synth_train, d.classes, d.size, Split::train);
    l.val = synth_dataset(d.data_seed + 1, d.synth_val, d.classes, d.size, Split::val);
  } else {
    if (d.val_data.empty()) throw ConfigError("--val-data is required with a dataset file");
    LoadOptions o;
    o.split = Split::train;
    l.train = load_dataset(d.data, parse_data_format(d.format), o);
    o.split = Split::val;
    o.num_classes = l.train.num_classes;
    l.val = load_dataset(d.val_data, parse_data_format(d.val_format.empty() ? d.format : d.val_format), o);
    if (l.val.channels() != l.train.channels() || l.val.height() != l.train.height() ||
        l.val.width() != l.train.width()) {
      throw ValidationError("validation images differ in shape from the training images");
    }
  }
  l.norm = compute_norm_stats(l.train);
  return l;
}

void check_data_fits(const NetworkSpec& spec, const Dataset& d) {
  if (spec.in_channels != d.channels() || spec.height != d.height() || spec.width != d.width()) {
    throw ValidationError("network expects " + std::to_string(spec.in_channels) + "x" + std::to_string(spec.height) +
                          "x" + std::to_string(spec.width) + " images, data has " + std::to_string(d.channels()) +
                          "x" + std::to_string(d.height()) + "x" + std::to_string(d.width()));
  }
  if (spec.num_classes() != d.num_classes) {
    throw ValidationError("network predicts " + std::to_string(spec.num_classes()) + " classes, data has " +
                          std::to_string(d.num_classes));
  }
}

// Preset name or architecture file.
NetworkSpec resolve_arch(const std::string& arch, int classes) {
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), arch) != names.end()) return preset_spec(arch, classes);
  if (!fs::exists(arch)) {
    throw ConfigError("'" + arch + "' is neither a preset nor an architecture file");
  }
  return load_arch_file(arch);
}

// Presets are defined for 3-channel input; adapt them to the data.
NetworkSpec fit_to_data(NetworkSpec spec, const Dataset& d) {
  spec.in_channels = d.channels();
  spec.stem.in_channels = static_cast<int>(d.channels());
  spec.height = d.height();
  spec.width = d.width();
  spec.validate();
  return spec;
}

// ---- output ----------------------------------------------------------------

class Outputs {
 public:
  Outputs(const std::string& requested, const std::string& command, std::vector<std::string> inputs)
      : dir_(requested.empty() ? fs::path(default_output_root()) / command : fs::path(requested)) {
    for (const auto& in : inputs) {
      if (!in.empty() && fs::exists(in)) inputs_.push_back(fs::weakly_canonical(in));
    }
  }

  void prepare() { fs::create_directories(dir_); }

  std::string path(const std::string& name) const {
    const fs::path p = dir_ / name;
    const fs::path canon = fs::weakly_canonical(p);
    for (const auto& in : inputs_) {
      if (canon == in) throw ConfigError("refusing to overwrite input file '" + in.string() + "'");
    }
    return p.string();
  }

  void write(const std::string& name, const std::string& text) const {
    const std::string p = path(name);
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write '" + p + "'");
    f << text;
    if (!f) throw Error("write to '" + p + "' failed");
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<fs::path> inputs_;
};

std::string fmt(double v) {
  char b[64];
  std::snprintf(b, sizeof b, "%.6f", v);
  return b;
}

std::string kv_lines(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
  return s;
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_kv(ss.str());
}

std::function<void(const EpochRecord&)> epoch_printer(std::ostream& out, const std::string& tag) {
  return [&out, tag](const EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "%s epoch %d  loss %.5f  val_acc %.2f%%  lr %g\n", tag.c_str(), r.epoch,
                  r.train_loss, r.val_acc * 100.0, r.lr);
    out << line << std::flush;
  };
}

// ---- commands ----------------------------------------------------------------

int cmd_train(const Options& o, const std::string& resolved, std::ostream& out) {
  Outputs outs(o.out, "train", {});
  const OptimizerConfig opt = make_optimizer(o.train_opt, o.epochs);
  if (o.epochs < 1) throw ConfigError("--epochs must be >= 1");
  if (o.batch < 1) throw ConfigError("--batch must be >= 1");
  NetworkSpec spec = resolve_arch(o.arch, o.data.classes);
  Loaded data = load_data(o.data);
  spec = fit_to_data(spec, data.train);
  check_data_fits(spec, data.train);
  outs.prepare();
  outs.write("config.ini", resolved);

  Network net = build_network(spec, o.seed);
  TrainConfig c;
  c.epochs = o.epochs;
  c.batch_size = o.batch;
  c.optimizer = opt;
  c.augment = o.augment;
  c.seed = o.seed;
  c.on_epoch = epoch_printer(out, "train");
  const TrainResult r = train_supervised(net, data.train, data.val, data.norm, c);

  save_checkpoint(net, outs.path("teacher.nrb"));
  outs.write("metrics.csv", format_metrics_csv(r.epochs));
  const CostReport cost = analyze_cost(net.spec());
  outs.write("summary.kv", kv_lines({{"model", "teacher"},
                                     {"val_acc", fmt(r.best_val_acc)},
                                     {"best_epoch", std::to_string(r.best_epoch)},
                                     {"params", std::to_string(cost.params)},
                                     {"mults", std::to_string(cost.mults)},
                                     {"act_load", std::to_string(cost.act_load)}}));
  out << "best val_acc " << fmt(r.best_val_acc * 100.0) << "% at epoch " << r.best_epoch << "\n";
  out << "wrote " << outs.dir().string() << "\n";
  return kOk;
}

RecastPlan select_plan(const Options& o, const NetworkSpec& teacher) {
  const int chosen = (o.plan.empty() ? 0 : 1) + (o.transform.empty() ? 0 : 1) + (o.compress != 0.0 ? 1 : 0);
  if (chosen != 1) throw ConfigError("give exactly one of --plan, --transform, --compress");
  RecastPlan plan;
  if (!o.plan.empty()) {
    plan = load_plan_file(o.plan, teacher.blocks.size());
  } else if (!o.transform.empty()) {
    plan = make_transform_plan(teacher, parse_block_kind(o.transform));
  } else {
    plan = make_compression_plan(teacher, o.compress);
  }
  validate_plan(teacher, plan);
  return plan;
}

int cmd_recast(const Options& o, const std::string& resolved, std::ostream& out) {
  Outputs outs(o.out, "recast", {o.teacher, o.plan});
  if (o.epochs_per_block < 0) throw ConfigError("--epochs-per-block must be >= 0");
  if (o.finetune_epochs < 0) throw ConfigError("--finetune-epochs must be >= 0");
  RecastConfig rc;
  rc.epochs_per_block = o.epochs_per_block;
  rc.batch_size = o.batch;
  rc.optimizer = make_optimizer(o.recast_opt, o.epochs_per_block);
  rc.augment = o.augment;
  rc.seed = o.seed;
  rc.init_from_teacher = o.init_from_teacher;
  rc.freeze_prefix = o.freeze_prefix;
  rc.trainable_mode = o.eval_mode_blocks ? Mode::eval : Mode::train;
  rc.refresh_bn = o.refresh_bn;
  FinetuneConfig fc;
  fc.epochs = std::max(1, o.finetune_epochs);
  fc.batch_size = o.batch;
  fc.optimizer = make_optimizer(o.finetune_opt, o.finetune_epochs);
  fc.augment = o.augment;
  fc.seed = o.seed;
  fc.logit_term = !o.no_logit_term;

  const Network teacher = load_checkpoint(o.teacher);
  const RecastPlan plan = select_plan(o, teacher.spec());
  Loaded data = load_data(o.data);
  check_data_fits(teacher.spec(), data.train);
  outs.prepare();
  outs.write("config.ini", resolved);
  outs.write("plan.txt", format_plan(plan));

  const CostReport before = analyze_cost(teacher.spec());
  const CostReport after = analyze_cost(apply_plan(teacher.spec(), plan));
  outs.write("cost_before.kv", format_cost_kv(before));
  outs.write("cost_before.txt", format_cost_text(before));
  outs.write("cost_after.kv", format_cost_kv(after));
  outs.write("cost_after.txt", format_cost_text(after));

  rc.on_record = [&out](int step, int epoch, double loss, double lr) {
    char line[128];
    std::snprintf(line, sizeof line, "recast step %d epoch %d  loss %.6f  lr %g\n", step, epoch, loss, lr);
    out << line << std::flush;
  };
  Network teacher_eval = teacher.clone();
  const double teacher_acc = evaluate(teacher_eval, data.val, data.norm).accuracy;
  RecastResult r = sequential_recast(teacher, plan, data.train, data.norm, rc);
  outs.write("recast_log.csv", format_recast_log(r.log));
  const double recast_acc = evaluate(r.student, data.val, data.norm).accuracy;
  out << "teacher val_acc " << fmt(teacher_acc * 100.0) << "%, recast student " << fmt(recast_acc * 100.0) << "%\n";

  double final_acc = recast_acc;
  if (o.finetune_epochs > 0) {
    fc.on_epoch = epoch_printer(out, "finetune");
    const TrainResult ft = kd_finetune(teacher, r.student, data.train, data.val, data.norm, fc);
    outs.write("finetune_metrics.csv", format_metrics_csv(ft.epochs));
    final_acc = ft.best_val_acc;
    out << "fine-tuned student " << fmt(final_acc * 100.0) << "%\n";
  }
  save_checkpoint(r.student, outs.path("student.nrb"));
  outs.write("summary.kv", kv_lines({{"teacher_val_acc", fmt(teacher_acc)},
                                     {"recast_val_acc", fmt(recast_acc)},
                                     {"val_acc", fmt(final_acc)},
                                     {"finetune_epochs", std::to_string(o.finetune_epochs)},
                                     {"baseline.params", std::to_string(before.params)},
                                     {"baseline.mults", std::to_string(before.mults)},
                                     {"baseline.act_load", std::to_string(before.act_load)},
                                     {"recast.params", std::to_string(after.params)},
                                     {"recast.mults", std::to_string(after.mults)},
                                     {"recast.act_load", std::to_string(after.act_load)}}));
  out << "wrote " << outs.dir().string() << "\n";
  return kOk;
}

int cmd_finetune(const Options& o, const std::string& resolved, std::ostream& out) {
  Outputs outs(o.out, "finetune", {o.teacher, o.student});
  if (o.epochs < 1) throw ConfigError("--epochs must be >= 1");
  FinetuneConfig fc;
  fc.epochs = o.epochs;
  fc.batch_size = o.batch;
  fc.optimizer = make_optimizer(o.finetune_opt, o.epochs);
  fc.augment = o.augment;
  fc.seed = o.seed;
  fc.logit_term = !o.no_logit_term;
  const Network teacher = load_checkpoint(o.teacher);
  Network student = load_checkpoint(o.student);
  if (teacher.num_classes() != student.num_classes()) {
    throw ValidationError("teacher predicts " + std::to_string(teacher.num_classes()) + " classes, student " +
                          std::to_string(student.num_classes()));
  }
  Loaded data = load_data(o.data);
  check_data_fits(student.spec(), data.train);
  outs.prepare();
  outs.write("config.ini", resolved);
  fc.on_epoch = epoch_printer(out, "finetune");
  const TrainResult r = kd_finetune(teacher, student, data.train, data.val, data.norm, fc);
  save_checkpoint(student, outs.path("student.nrb"));
  outs.write("metrics.csv", format_metrics_csv(r.epochs));
  outs.write("summary.kv", kv_lines({{"model", "student"},
                                     {"val_acc", fmt(r.best_val_acc)},
                                     {"best_epoch", std::to_string(r.best_epoch)}}));
  out << "best val_acc " << fmt(r.best_val_acc * 100.0) << "%\n";
  return kOk;
}

int cmd_analyze(const Options& o, const std::string& resolved, std::ostream& out) {
  Outputs outs(o.out, "analyze", {o.checkpoint});
  if (o.arch.empty() == o.checkpoint.empty()) throw ConfigError("give exactly one of --arch, --checkpoint");
  const NetworkSpec spec = o.checkpoint.empty() ? resolve_arch(o.arch, o.data.classes) : load_checkpoint(o.checkpoint).spec();
  const CostConvention conv = parse_cost_convention(o.convention);
  std::int64_t h = spec.height, w = spec.width;
  if (!o.input.empty()) {
    std::int64_t c = 0;
    char x1 = 0, x2 = 0;
    std::istringstream is(o.input);
    if (!(is >> c >> x1 >> h >> x2 >> w) || x1 != 'x' || x2 != 'x' || h < 1 || w < 1) {
      throw ConfigError("--input must look like CxHxW, got '" + o.input + "'");
    }
    if (c != spec.in_channels) {
      throw ValidationError("--input has " + std::to_string(c) + " channels, the network expects " +
                            std::to_string(spec.in_channels));
    }
  }
  NetworkSpec at_size = spec;
  at_size.height = h;
  at_size.width = w;
  at_size.validate();
  const CostReport r = analyze_cost(spec, h, w, conv);
  outs.prepare();
  outs.write("config.ini", resolved);
  outs.write("cost.kv", format_cost_kv(r));
  outs.write("cost.txt", format_cost_text(r));
  out << format_cost_text(r);
  return kOk;
}

int cmd_eval(const Options& o, const std::string& resolved, std::ostream& out) {
  Outputs outs(o.out, "eval", {o.checkpoint});
  Network net = load_checkpoint(o.checkpoint);
  Loaded data = load_data(o.data);
  check_data_fits(net.spec(), data.val);
  outs.prepare();
  outs.write("config.ini", resolved);
  const EvalResult r = evaluate(net, data.val, data.norm);
  outs.write("eval.kv", kv_lines({{"accuracy", fmt(r.accuracy)},
                                  {"loss", fmt(r.loss)},
                                  {"correct", std::to_string(r.correct)},
                                  {"total", std::to_string(r.total)}}));
  out << "accuracy " << fmt(r.accuracy * 100.0) << "% (" << r.correct << "/" << r.total << ")\n";
  return kOk;
}

int cmd_export(const Options& o, const std::string& resolved, std::ostream& out) {
  Outputs outs(o.out, "plotdata", {});
  if (o.runs.empty()) throw ConfigError("--runs needs at least one recast output directory");
  std::string table = "run,model,val_error,params,mults,act_load\n";
  for (const auto& run : o.runs) {
    const auto kv = read_kv_file((fs::path(run) / "summary.kv").string());
    auto get = [&](const std::string& key) {
      auto it = kv.find(key);
      if (it == kv.end()) throw ValidationError(run + "/summary.kv lacks '" + key + "' (not a recast run?)");
      return it->second;
    };
    const std::string name = fs::path(run).filename().string().empty() ? fs::path(run).parent_path().filename().string()
                                                                       : fs::path(run).filename().string();
    auto row = [&](const std::string& model, const std::string& acc_key) {
      table += name + "," + model + "," + fmt(1.0 - std::stod(get(acc_key))) + "," + get(model + ".params") + "," +
               get(model + ".mults") + "," + get(model + ".act_load") + "\n";
    };
    row("baseline", "teacher_val_acc");
    row("recast", "val_acc");
  }
  outs.prepare();
  outs.write("config.ini", resolved);
  outs.write("plotdata.csv", table);
  out << table;
  return kOk;
}

bool is_config_error(const std::exception& e) {
  return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
         dynamic_cast<const PlanError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
         dynamic_cast<const LabelError*>(&e) || dynamic_cast<const CLI::ParseError*>(&e);
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Block-wise recasting of trained CNNs: train, recast, fine-tune, analyze, evaluate.", "netrecast"};
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "INI file with one [command] section; flags override it");
  app.require_subcommand(1, 1);

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--out", o.out, "Output directory (default: $NETRECAST_OUT/<command> or runs/<command>)");
    cmd->add_option("--seed", o.seed, "Seed for initialization, shuffling and augmentation")->capture_default_str();
  };
  auto training = [&](CLI::App* cmd) {
    cmd->add_option("--batch", o.batch, "Batch size")->capture_default_str();
    cmd->add_option("--augment", o.augment, "Pad-crop-flip augmentation (true/false)")->capture_default_str();
  };

  CLI::App* train = app.add_subcommand("train", "Train a teacher by backpropagation");
  common(train);
  training(train);
  add_data_options(train, o.data);
  train->add_option("--arch", o.arch, "Preset name or architecture file")->required();
  train->add_option("--epochs", o.epochs, "Epochs")->capture_default_str();
  add_optim_options(train, o.train_opt, "");

  CLI::App* recast = app.add_subcommand("recast", "Sequentially recast a teacher, optionally fine-tune");
  common(recast);
  training(recast);
  add_data_options(recast, o.data);
  recast->add_option("--teacher", o.teacher, "Teacher checkpoint")->required()->check(CLI::ExistingFile);
  recast->add_option("--plan", o.plan, "Plan file")->check(CLI::ExistingFile);
  recast->add_option("--transform", o.transform, "Recast every eligible block into 'basic' or 'convolution'");
  recast->add_option("--compress", o.compress, "Width multiplier r in (0, 1) for same-kind compression");
  recast->add_option("--epochs-per-block", o.epochs_per_block, "Epochs per recasting step")->capture_default_str();
  add_optim_options(recast, o.recast_opt, "");
  recast->add_flag("--init-from-teacher", o.init_from_teacher, "Copy teacher weights into same-spec target blocks");
  recast->add_flag("--freeze-prefix", o.freeze_prefix, "Train only the target and next block at each step");
  recast->add_flag("--eval-mode-blocks", o.eval_mode_blocks, "Run trainable blocks with running BN statistics");
  recast->add_option("--refresh-bn", o.refresh_bn, "Recompute BN statistics of trained blocks afterwards")
      ->capture_default_str();
  recast->add_option("--finetune-epochs", o.finetune_epochs, "KD fine-tuning epochs after recasting (0: none)")
      ->capture_default_str();
  add_optim_options(recast, o.finetune_opt, "finetune-");
  recast->add_flag("--no-logit-term", o.no_logit_term, "Fine-tune on cross-entropy only");

  CLI::App* finetune = app.add_subcommand("finetune", "KD fine-tuning of a student against its teacher");
  common(finetune);
  training(finetune);
  add_data_options(finetune, o.data);
  finetune->add_option("--teacher", o.teacher, "Teacher checkpoint")->required()->check(CLI::ExistingFile);
  finetune->add_option("--student", o.student, "Student checkpoint")->required()->check(CLI::ExistingFile);
  finetune->add_option("--epochs", o.epochs, "Epochs")->capture_default_str();
  add_optim_options(finetune, o.finetune_opt, "");
  finetune->add_flag("--no-logit-term", o.no_logit_term, "Cross-entropy only");

  CLI::App* analyze = app.add_subcommand("analyze", "Parameter, multiplication and activation-load counts");
  common(analyze);
  analyze->add_option("--arch", o.arch, "Preset name or architecture file");
  analyze->add_option("--checkpoint", o.checkpoint, "Checkpoint")->check(CLI::ExistingFile);
  analyze->add_option("--classes", o.data.classes, "Classes for presets")->capture_default_str();
  analyze->add_option("--input", o.input, "Input shape CxHxW (default: the network's own)");
  analyze->add_option("--convention", o.convention, "conv_only or full")->capture_default_str();

  CLI::App* eval = app.add_subcommand("eval", "Validation accuracy of a checkpoint");
  common(eval);
  add_data_options(eval, o.data);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);

  CLI::App* plot = app.add_subcommand("export-plotdata", "Error-vs-cost table from recast runs");
  common(plot);
  plot->add_option("--runs", o.runs, "Recast output directories")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "netrecast: error: " << one_line(e.what()) << "\n";
    return kConfigError;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const std::string resolved = "[" + cmd->get_name() + "]\n" + cmd->config_to_str(true, false);
    if (train->parsed()) return cmd_train(o, resolved, out);
    if (recast->parsed()) return cmd_recast(o, resolved, out);
    if (finetune->parsed()) return cmd_finetune(o, resolved, out);
    if (analyze->parsed()) return cmd_analyze(o, resolved, out);
    if (eval->parsed()) return cmd_eval(o, resolved, out);
    if (plot->parsed()) return cmd_export(o, resolved, out);
  } catch (const std::exception& e) {
    err << "netrecast: error: " << one_line(e.what()) << "\n";
    return is_config_error(e) ? kConfigError : kRuntimeError;
  }
  return kConfigError;
}

}  // namespace netrecast::cli
