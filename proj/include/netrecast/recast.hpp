#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "netrecast/data.hpp"
#include "netrecast/network.hpp"
#include "netrecast/optim.hpp"
#include "netrecast/train.hpp"

namespace netrecast {

// ---- plans ---------------------------------------------------------------

enum class RecastAction { keep, recast };

struct PlanEntry {
  RecastAction action = RecastAction::keep;
  BlockKind kind = BlockKind::convolution;
  int out_channels = 0;

  bool operator==(const PlanEntry&) const = default;
};

// One entry per body block of the teacher. The stem and the classifier are
// never recast.
struct RecastPlan {
  std::vector<PlanEntry> blocks;
  // Informational: the multiplier a compression plan was generated with.
  double width_multiplier = 1.0;

  static RecastPlan all_keep(std::size_t num_blocks);
  std::vector<int> targets() const;
  bool is_identity() const { return targets().empty(); }
};

// Plan text, one line per block (omitted blocks are kept):
//   block <i>: keep
//   block <i>: recast <kind> <out_channels>
//   width_multiplier <r>
// Throws PlanError naming the offending line or block index.
RecastPlan parse_plan(const std::string& text, std::size_t num_blocks);
RecastPlan load_plan_file(const std::string& path, std::size_t num_blocks);
std::string format_plan(const RecastPlan& plan);

// The source -> target pairs the engine accepts, with the width rule of
// each:
//   dense -> basic, dense -> convolution, basic -> convolution   equal width
//   bottleneck -> convolution                                     width <= source
//   basic -> basic, convolution -> convolution                    width <= source
// Transitions and the classifier only support keep. A block whose output
// width changes may not be followed by a dense block, since the dense block
// would pass the change on to everything after it.
// Throws PlanError naming the block index.
void validate_plan(const NetworkSpec& teacher, const RecastPlan& plan);

// Target spec for recasting `source` per `entry`, fed by `in_channels`.
BlockSpec make_target_spec(const BlockSpec& source, const PlanEntry& entry, int in_channels);

// Student architecture: targets substituted, blocks after a width change
// rebuilt with rebuild_next_block, classifier input adjusted.
NetworkSpec apply_plan(const NetworkSpec& teacher, const RecastPlan& plan);

// Same-kind recast of every basic and convolution block to
// max(1, round(r * width)) channels. Throws PlanError if no block is
// eligible or r is outside (0, 1).
RecastPlan make_compression_plan(const NetworkSpec& net, double r);

// Transformation of every block whose kind maps onto `target`:
// dense -> basic or convolution, basic -> convolution (widths preserved),
// bottleneck -> convolution with the bottleneck's inner width.
RecastPlan make_transform_plan(const NetworkSpec& net, BlockKind target);

// ---- losses ----------------------------------------------------------------

// Mean squared difference over every element, i.e. (1/N)||.||^2 with N the
// per-sample activation size, averaged over the batch. The teacher side is
// treated as a constant. Shape mismatch raises ShapeError.
template <typename T>
Tensor<T> mse_activation_loss(const Tensor<T>& student, const Tensor<T>& teacher);

// Logit MSE (same normalization as above) plus cross-entropy against the
// labels. `logit_term = false` drops the MSE part.
template <typename T>
Tensor<T> kd_loss(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits, std::span<const int> labels,
                  bool logit_term = true);

// ---- engine ----------------------------------------------------------------

struct RecastConfig {
  int epochs_per_block = 8;
  int batch_size = 64;
  OptimizerConfig optimizer = default_recast_optimizer();
  bool augment = true;
  std::uint64_t seed = 1;
  // Copy teacher weights into a target or next block whose spec equals the
  // teacher's instead of drawing fresh Xavier weights.
  bool init_from_teacher = false;
  // Train only the target and next block at each step.
  bool freeze_prefix = false;
  // BN mode of the trainable blocks while recasting.
  Mode trainable_mode = Mode::train;
  // Recompute running statistics of every trained block after the last step.
  bool refresh_bn = true;
  // Called for every `step,epoch,loss,lr` record.
  std::function<void(int step, int epoch, double loss, double lr)> on_record;

  static OptimizerConfig default_recast_optimizer();
};

struct StepLog {
  int step = 0;
  int target = 0;  // body block index
  int next = 0;    // position of the next block (num_blocks = classifier)
  BlockSpec target_spec;
  BlockSpec next_spec;
  std::vector<int> trainable;  // positions
  // Activation loss on the first batch before any update (BN statistics left
  // untouched), then the mean over each epoch.
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_lr;

  double final_loss() const { return epoch_loss.empty() ? initial_loss : epoch_loss.back(); }
};

struct RecastLog {
  std::vector<StepLog> steps;
  std::vector<int> refreshed;  // positions whose BN statistics were recomputed
};

// `step,epoch,loss,lr` lines followed by one summary line.
std::string format_recast_log(const RecastLog& log);

// One recasting step: trains `student` positions target and target + 1
// (plus earlier trained blocks in `trained`, unless frozen) so that the
// student's output after the next block matches the teacher's. The
// student's target block is replaced by a fresh block of `target_spec` and
// its next block by the teacher's next block rebuilt for the new width.
// `trained` is updated with the positions trained here.
// A tap shape mismatch raises PlanError.
StepLog recast_block_step(const Network& teacher, Network& student, int target, const BlockSpec& target_spec,
                          std::vector<int>& trained, const Dataset& train, const NormStats& norm,
                          const RecastConfig& config, int step_index = 0);

struct RecastResult {
  Network student;
  RecastLog log;
};

// Validates the plan, starts from a copy of the teacher and recasts
// every target front to back. The teacher is never modified.
RecastResult sequential_recast(const Network& teacher, const RecastPlan& plan, const Dataset& train,
                               const NormStats& norm, const RecastConfig& config);

struct FinetuneConfig {
  int epochs = 10;
  int batch_size = 64;
  OptimizerConfig optimizer = OptimizerConfig::adam(1e-4);
  bool augment = true;
  std::uint64_t seed = 1;
  bool logit_term = true;
  bool keep_best = true;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Whole-student training on kd_loss with the teacher in eval mode. Returns
// the per-epoch record; with keep_best the student ends up holding the
// parameters of its best validation epoch, or its starting parameters when
// no epoch beat them (best_epoch stays -1). Mismatched class counts raise
// ValidationError.
TrainResult kd_finetune(const Network& teacher, Network& student, const Dataset& train, const Dataset& val,
                        const NormStats& norm, const FinetuneConfig& config);

}  // namespace netrecast
