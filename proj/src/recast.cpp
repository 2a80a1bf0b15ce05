#include "netrecast/recast.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "netrecast/autograd.hpp"

namespace netrecast {

// ---- plans ---------------------------------------------------------------

RecastPlan RecastPlan::all_keep(std::size_t num_blocks) {
  RecastPlan p;
  p.blocks.resize(num_blocks);
  return p;
}

std::vector<int> RecastPlan::targets() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].action == RecastAction::recast) out.push_back(static_cast<int>(i));
  }
  return out;
}

RecastPlan parse_plan(const std::string& text, std::size_t num_blocks) {
  RecastPlan plan = RecastPlan::all_keep(num_blocks);
  std::vector<bool> seen(num_blocks, false);
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    std::istringstream ls(hash == std::string::npos ? raw : raw.substr(0, hash));
    std::string word;
    if (!(ls >> word)) continue;
    const std::string where = "plan line " + std::to_string(line_no) + ": ";
    if (word == "width_multiplier") {
      if (!(ls >> plan.width_multiplier) || plan.width_multiplier <= 0) {
        throw PlanError(where + "width_multiplier needs a positive number");
      }
      continue;
    }
    if (word != "block") throw PlanError(where + "expected 'block <i>: ...', got '" + word + "'");
    std::string index_text;
    ls >> index_text;
    if (index_text.empty() || index_text.back() != ':') throw PlanError(where + "expected 'block <i>:'");
    index_text.pop_back();
    long index = -1;
    try {
      std::size_t used = 0;
      index = std::stol(index_text, &used);
      if (used != index_text.size()) index = -1;
    } catch (const std::exception&) {
      index = -1;
    }
    if (index < 0 || static_cast<std::size_t>(index) >= num_blocks) {
      throw PlanError(where + "block index '" + index_text + "' outside [0, " + std::to_string(num_blocks) + ")");
    }
    if (seen[index]) throw PlanError(where + "block " + index_text + " listed twice");
    seen[index] = true;
    std::string action;
    ls >> action;
    PlanEntry& e = plan.blocks[index];
    if (action == "keep") {
      e = PlanEntry{};
    } else if (action == "recast") {
      std::string kind;
      int out = 0;
      if (!(ls >> kind >> out)) throw PlanError(where + "expected 'recast <kind> <out_channels>'");
      try {
        e.kind = parse_block_kind(kind);
      } catch (const Error& err) {
        throw PlanError(where + err.what());
      }
      e.action = RecastAction::recast;
      e.out_channels = out;
    } else {
      throw PlanError(where + "unknown action '" + action + "' (expected keep or recast)");
    }
    std::string extra;
    if (ls >> extra) throw PlanError(where + "unexpected trailing '" + extra + "'");
  }
  return plan;
}

RecastPlan load_plan_file(const std::string& path, std::size_t num_blocks) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open plan file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_plan(ss.str(), num_blocks);
}

std::string format_plan(const RecastPlan& plan) {
  std::ostringstream os;
  if (plan.width_multiplier != 1.0) os << "width_multiplier " << plan.width_multiplier << '\n';
  for (std::size_t i = 0; i < plan.blocks.size(); ++i) {
    const auto& e = plan.blocks[i];
    os << "block " << i << ": ";
    if (e.action == RecastAction::keep) {
      os << "keep\n";
    } else {
      os << "recast " << to_string(e.kind) << ' ' << e.out_channels << '\n';
    }
  }
  return os.str();
}

namespace {

enum class WidthRule { preserved, reduced };

// Supported source -> target pairs; nullopt for anything else.
std::optional<WidthRule> pair_rule(BlockKind source, BlockKind target) {
  using K = BlockKind;
  if (source == K::dense && (target == K::basic || target == K::convolution)) return WidthRule::preserved;
  if (source == K::basic && target == K::convolution) return WidthRule::preserved;
  if (source == K::bottleneck && target == K::convolution) return WidthRule::reduced;
  if (source == K::basic && target == K::basic) return WidthRule::reduced;
  if (source == K::convolution && target == K::convolution) return WidthRule::reduced;
  return std::nullopt;
}

std::string block_label(int i) { return "block " + std::to_string(i); }

}  // namespace

BlockSpec make_target_spec(const BlockSpec& source, const PlanEntry& entry, int in_channels) {
  const int stride = source.kind == BlockKind::dense ? 1 : source.stride;
  switch (entry.kind) {
    case BlockKind::convolution:
      return BlockSpec::convolution(in_channels, entry.out_channels, stride,
                                    source.kind == BlockKind::convolution && source.pool);
    case BlockKind::basic: {
      BlockSpec s = BlockSpec::basic(in_channels, entry.out_channels, stride);
      if (source.kind == BlockKind::basic && source.projection) s.projection = true;
      return s;
    }
    default:
      throw PlanError("target kind " + to_string(entry.kind) + " is not a recasting target");
  }
}

void validate_plan(const NetworkSpec& teacher, const RecastPlan& plan) {
  const int n = static_cast<int>(teacher.blocks.size());
  if (static_cast<int>(plan.blocks.size()) != n) {
    throw PlanError("plan covers " + std::to_string(plan.blocks.size()) + " blocks but the teacher has " +
                    std::to_string(n));
  }
  for (int i = 0; i < n; ++i) {
    const auto& e = plan.blocks[i];
    if (e.action != RecastAction::recast) continue;
    const BlockSpec& src = teacher.blocks[i];
    const auto rule = pair_rule(src.kind, e.kind);
    if (!rule) {
      throw PlanError(block_label(i) + ": recasting " + to_string(src.kind) + " into " + to_string(e.kind) +
                      " is not a supported pair");
    }
    if (e.out_channels < 1) throw PlanError(block_label(i) + ": target width must be >= 1");
    if (*rule == WidthRule::preserved && e.out_channels != src.out_channels) {
      throw PlanError(block_label(i) + ": " + to_string(src.kind) + " -> " + to_string(e.kind) +
                      " preserves the width " + std::to_string(src.out_channels) + ", got " +
                      std::to_string(e.out_channels));
    }
    if (*rule == WidthRule::reduced && e.out_channels > src.out_channels) {
      throw PlanError(block_label(i) + ": target width " + std::to_string(e.out_channels) +
                      " exceeds the source width " + std::to_string(src.out_channels));
    }
  }
  int width = teacher.stem.out_channels;
  for (int i = 0; i < n; ++i) {
    const BlockSpec& src = teacher.blocks[i];
    if (src.kind == BlockKind::dense && width != src.in_channels) {
      throw PlanError(block_label(i) + ": a dense block cannot follow a block whose width changed (" +
                      std::to_string(src.in_channels) + " -> " + std::to_string(width) + ")");
    }
    width = plan.blocks[i].action == RecastAction::recast ? plan.blocks[i].out_channels : src.out_channels;
  }
  try {
    apply_plan(teacher, plan).validate();
  } catch (const ValidationError& err) {
    throw PlanError(std::string("plan yields an invalid student: ") + err.what());
  }
}

NetworkSpec apply_plan(const NetworkSpec& teacher, const RecastPlan& plan) {
  if (plan.blocks.size() != teacher.blocks.size()) {
    throw PlanError("plan covers " + std::to_string(plan.blocks.size()) + " blocks but the teacher has " +
                    std::to_string(teacher.blocks.size()));
  }
  NetworkSpec s = teacher;
  int width = s.stem.out_channels;
  for (std::size_t i = 0; i < s.blocks.size(); ++i) {
    const BlockSpec& src = teacher.blocks[i];
    if (plan.blocks[i].action == RecastAction::recast) {
      s.blocks[i] = make_target_spec(src, plan.blocks[i], width);
    } else if (src.in_channels != width) {
      s.blocks[i] = rebuild_next_block(src, width);
    }
    width = s.blocks[i].out_channels;
  }
  if (s.classifier.in_channels != width) s.classifier = rebuild_next_block(teacher.classifier, width);
  return s;
}

RecastPlan make_compression_plan(const NetworkSpec& net, double r) {
  if (!(r > 0.0 && r < 1.0)) throw PlanError("width multiplier must be in (0, 1), got " + std::to_string(r));
  RecastPlan plan = RecastPlan::all_keep(net.blocks.size());
  plan.width_multiplier = r;
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    const BlockSpec& b = net.blocks[i];
    if (b.kind != BlockKind::basic && b.kind != BlockKind::convolution) continue;
    plan.blocks[i] = PlanEntry{RecastAction::recast, b.kind,
                               std::max(1, static_cast<int>(std::lround(r * b.out_channels)))};
  }
  if (plan.is_identity()) throw PlanError("no basic or convolution block to compress");
  return plan;
}

RecastPlan make_transform_plan(const NetworkSpec& net, BlockKind target) {
  if (target != BlockKind::basic && target != BlockKind::convolution) {
    throw PlanError("transformation target must be basic or convolution");
  }
  RecastPlan plan = RecastPlan::all_keep(net.blocks.size());
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    const BlockSpec& b = net.blocks[i];
    if (b.kind == BlockKind::dense) {
      plan.blocks[i] = PlanEntry{RecastAction::recast, target, b.out_channels};
    } else if (target == BlockKind::convolution && b.kind == BlockKind::basic) {
      plan.blocks[i] = PlanEntry{RecastAction::recast, target, b.out_channels};
    } else if (target == BlockKind::convolution && b.kind == BlockKind::bottleneck) {
      plan.blocks[i] = PlanEntry{RecastAction::recast, target, b.inner_channels()};
    }
  }
  if (plan.is_identity()) throw PlanError("no block can be transformed into " + to_string(target));
  return plan;
}

// ---- losses ----------------------------------------------------------------

template <typename T>
Tensor<T> mse_activation_loss(const Tensor<T>& student, const Tensor<T>& teacher) {
  if (student.shape() != teacher.shape()) {
    throw ShapeError("activation shapes differ: student " + shape_str(student.shape()) + " vs teacher " +
                     shape_str(teacher.shape()));
  }
  return mse_loss(student, teacher);
}

template <typename T>
Tensor<T> kd_loss(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits, std::span<const int> labels,
                  bool logit_term) {
  if (student_logits.shape() != teacher_logits.shape()) {
    throw ShapeError("logit shapes differ: student " + shape_str(student_logits.shape()) + " vs teacher " +
                     shape_str(teacher_logits.shape()));
  }
  Tensor<T> ce = cross_entropy(student_logits, labels);
  if (!logit_term) return ce;
  return add(mse_loss(student_logits, teacher_logits), ce);
}

template Tensor<float> mse_activation_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mse_activation_loss(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> kd_loss(const Tensor<float>&, const Tensor<float>&, std::span<const int>, bool);
template Tensor<double> kd_loss(const Tensor<double>&, const Tensor<double>&, std::span<const int>, bool);

// ---- engine ----------------------------------------------------------------

OptimizerConfig RecastConfig::default_recast_optimizer() {
  OptimizerConfig c = OptimizerConfig::adam(5e-4);
  c.schedule = {LrMilestone{5, 10.0}};
  return c;
}

std::string format_recast_log(const RecastLog& log) {
  std::ostringstream os;
  os << "step,epoch,loss,lr\n";
  char line[128];
  int epochs = 0;
  for (const auto& s : log.steps) {
    for (std::size_t e = 0; e < s.epoch_loss.size(); ++e) {
      std::snprintf(line, sizeof line, "%d,%zu,%.8g,%.8g\n", s.step, e, s.epoch_loss[e], s.epoch_lr[e]);
      os << line;
      ++epochs;
    }
  }
  os << "# summary steps=" << log.steps.size() << " epochs=" << epochs;
  os << " targets=";
  for (std::size_t i = 0; i < log.steps.size(); ++i) os << (i ? ";" : "") << log.steps[i].target;
  char tail[96];
  std::snprintf(tail, sizeof tail, " final_loss=%.8g", log.steps.empty() ? 0.0 : log.steps.back().final_loss());
  os << tail << " loss_normalization=per-sample-mean-over-batch bn_refreshed=" << log.refreshed.size() << '\n';
  return os.str();
}

namespace {

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

StepLog run_step(Network& teacher, Network& student, int target, const BlockSpec& target_spec,
                 std::vector<int>& trained, const Dataset& train, const NormStats& norm, const RecastConfig& config,
                 int step_index) {
  const int n = static_cast<int>(teacher.num_blocks());
  if (target < 0 || target >= n) throw PlanError("target block " + std::to_string(target) + " out of range");
  if (student.num_blocks() != teacher.num_blocks()) throw PlanError("student and teacher have different block counts");
  const int next = target + 1;

  const int feed = student.spec().at(target - 1).out_channels;
  if (target_spec.in_channels != feed) {
    throw PlanError(block_label(target) + ": target expects " + std::to_string(target_spec.in_channels) +
                    " input channels but the student provides " + std::to_string(feed));
  }
  const BlockSpec& teacher_next = teacher.spec().at(next);
  const BlockSpec next_spec = rebuild_next_block(teacher_next, target_spec.out_channels);
  if (next_spec.out_channels != teacher_next.out_channels) {
    throw PlanError(block_label(target) + ": rebuilt next block outputs " + std::to_string(next_spec.out_channels) +
                    " channels, teacher tap has " + std::to_string(teacher_next.out_channels));
  }

  Rng init = Rng(config.seed).split(1000 + static_cast<std::uint64_t>(step_index));
  auto fresh = [&](const BlockSpec& spec, int position, std::uint64_t key) {
    if (config.init_from_teacher && spec == teacher.spec().at(position)) return teacher.at(position).clone();
    Rng r = init.split(key);
    return BlockT<float>(spec, r);
  };
  std::vector<BlockT<float>> replacement;
  replacement.push_back(fresh(target_spec, target, 1));
  replacement.push_back(fresh(next_spec, next, 2));
  student.replace_blocks(target, std::move(replacement));

  if (!contains(trained, target)) trained.push_back(target);
  if (!contains(trained, next)) trained.push_back(next);
  std::sort(trained.begin(), trained.end());

  StepLog log;
  log.step = step_index;
  log.target = target;
  log.next = next;
  log.target_spec = target_spec;
  log.next_spec = next_spec;
  for (int p : trained) {
    if (!config.freeze_prefix || p == target || p == next) log.trainable.push_back(p);
  }

  student.set_trainable(false);
  ParamSet<float> params;
  for (int p : log.trainable) {
    student.at(p).set_trainable(true);
    params.extend("p" + std::to_string(p) + ".", student.at(p).params());
  }
  auto mode_of = [&](int p) { return contains(log.trainable, p) ? config.trainable_mode : Mode::eval; };

  StreamConfig sc;
  sc.batch_size = config.batch_size;
  sc.augment = config.augment;
  BatchStream stream(train, norm, sc, Rng::mix(config.seed ^ (0x5EC0ULL + static_cast<std::uint64_t>(step_index))));

  auto teacher_tap = [&](const Tensor<float>& x) {
    NoGradScope<float> no_grad;
    return teacher.run(x, -1, next, [](int) { return Mode::eval; });
  };
  auto checked_loss = [&](const Tensor<float>& s, const Tensor<float>& t) {
    if (s.shape() != t.shape()) {
      throw PlanError(block_label(target) + ": student activation " + shape_str(s.shape()) +
                      " does not match teacher tap " + shape_str(t.shape()));
    }
    return mse_activation_loss(s, t);
  };

  Batch batch;
  {
    stream.start_epoch(0);
    stream.next(batch);
    std::vector<double> momenta;
    for (int p : log.trainable) {
      momenta.push_back(student.at(p).bn_momentum());
      student.at(p).set_bn_momentum(0.0);
    }
    NoGradScope<float> no_grad;
    const Tensor<float> t = teacher_tap(batch.images);
    log.initial_loss = checked_loss(student.run(batch.images, -1, next, mode_of), t).item();
    for (std::size_t i = 0; i < log.trainable.size(); ++i) student.at(log.trainable[i]).set_bn_momentum(momenta[i]);
  }

  for (int epoch = 0; epoch < config.epochs_per_block; ++epoch) {
    stream.start_epoch(epoch);
    double sum = 0.0;
    std::int64_t seen = 0;
    while (stream.next(batch)) {
      const Tensor<float> t = teacher_tap(batch.images);
      Tape<float> tape;
      Tensor<float> loss = checked_loss(student.run(batch.images, -1, next, mode_of), t);
      params.zero_grad();
      tape.backward(loss);
      optimizer_step(params, config.optimizer, epoch);
      const auto b = static_cast<std::int64_t>(batch.labels.size());
      sum += static_cast<double>(loss.item()) * static_cast<double>(b);
      seen += b;
    }
    const double mean = sum / static_cast<double>(seen);
    const double lr = config.optimizer.lr_at(epoch);
    log.epoch_loss.push_back(mean);
    log.epoch_lr.push_back(lr);
    if (config.on_record) config.on_record(step_index, epoch, mean, lr);
  }
  for (auto& e : params) e.value.clear_grad();
  student.set_trainable(true);
  return log;
}

}  // namespace

StepLog recast_block_step(const Network& teacher, Network& student, int target, const BlockSpec& target_spec,
                          std::vector<int>& trained, const Dataset& train, const NormStats& norm,
                          const RecastConfig& config, int step_index) {
  config.optimizer.validate();
  Network teacher_copy = teacher.clone();
  return run_step(teacher_copy, student, target, target_spec, trained, train, norm, config, step_index);
}

RecastResult sequential_recast(const Network& teacher, const RecastPlan& plan, const Dataset& train,
                               const NormStats& norm, const RecastConfig& config) {
  validate_plan(teacher.spec(), plan);
  config.optimizer.validate();
  if (config.epochs_per_block < 0) throw ConfigError("epochs_per_block must be >= 0");
  if (!plan.is_identity() && train.size() == 0) throw ValidationError("recasting needs training data");

  Network teacher_copy = teacher.clone();
  RecastResult result{teacher.clone(), {}};
  std::vector<int> trained;
  int step = 0;
  for (int i : plan.targets()) {
    const BlockSpec spec =
        make_target_spec(teacher.spec().blocks[i], plan.blocks[i], result.student.spec().at(i - 1).out_channels);
    result.log.steps.push_back(
        run_step(teacher_copy, result.student, i, spec, trained, train, norm, config, step++));
  }
  if (config.refresh_bn && !trained.empty()) {
    refresh_bn_statistics(result.student, train, norm, trained);
    result.log.refreshed = trained;
  }
  if (!(result.student.spec() == apply_plan(teacher.spec(), plan))) {
    throw PlanError("internal: recast student does not match the planned architecture");
  }
  return result;
}

TrainResult kd_finetune(const Network& teacher, Network& student, const Dataset& train, const Dataset& val,
                        const NormStats& norm, const FinetuneConfig& config) {
  if (teacher.num_classes() != student.num_classes()) {
    throw ValidationError("teacher predicts " + std::to_string(teacher.num_classes()) + " classes, student " +
                          std::to_string(student.num_classes()));
  }
  if (train.num_classes != student.num_classes()) {
    throw ValidationError("dataset has " + std::to_string(train.num_classes) + " classes, student predicts " +
                          std::to_string(student.num_classes()));
  }
  config.optimizer.validate();
  if (config.epochs < 1) throw ConfigError("fine-tune epochs must be >= 1");

  Network teacher_copy = teacher.clone();
  StreamConfig sc;
  sc.batch_size = config.batch_size;
  sc.augment = config.augment;
  BatchStream stream(train, norm, sc, config.seed);

  student.set_trainable(true);
  ParamSet<float> params = student.parameters();
  // The starting point competes for "best" too, so fine-tuning never
  // returns a student worse on validation than the one it was given.
  TrainResult result;
  result.best_val_acc = evaluate(student, val, norm).accuracy;
  std::optional<Network> best;
  Batch batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    stream.start_epoch(epoch);
    double sum = 0.0;
    std::int64_t seen = 0;
    while (stream.next(batch)) {
      Tensor<float> t;
      if (config.logit_term) {
        NoGradScope<float> no_grad;
        t = teacher_copy.logits(batch.images, Mode::eval);
      }
      Tape<float> tape;
      Tensor<float> s = student.logits(batch.images, Mode::train);
      Tensor<float> loss = config.logit_term ? kd_loss(s, t, std::span<const int>(batch.labels))
                                             : cross_entropy(s, std::span<const int>(batch.labels));
      params.zero_grad();
      tape.backward(loss);
      optimizer_step(params, config.optimizer, epoch);
      const auto b = static_cast<std::int64_t>(batch.labels.size());
      sum += static_cast<double>(loss.item()) * static_cast<double>(b);
      seen += b;
    }
    EpochRecord rec{epoch, sum / static_cast<double>(seen), evaluate(student, val, norm).accuracy,
                    config.optimizer.lr_at(epoch)};
    result.epochs.push_back(rec);
    if (config.on_epoch) config.on_epoch(rec);
    if (rec.val_acc > result.best_val_acc || (!config.keep_best && epoch + 1 == config.epochs)) {
      result.best_val_acc = rec.val_acc;
      result.best_epoch = epoch;
      if (config.keep_best) best = student.clone();
    }
  }
  if (config.keep_best && best) student = std::move(*best);
  for (auto& e : student.parameters()) e.value.clear_grad();
  return result;
}

}  // namespace netrecast
