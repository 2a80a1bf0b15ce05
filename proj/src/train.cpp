#include "netrecast/train.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <sstream>

#include "netrecast/autograd.hpp"

namespace netrecast {

namespace {
Batch eval_batch(const Dataset& data, const NormStats& norm, std::int64_t first, std::int64_t count) {
  const std::int64_t C = data.channels(), H = data.height(), W = data.width(), per = C * H * W;
  Batch b;
  b.images = Tensor<float>(Shape{count, C, H, W});
  auto src = data.images.data().subspan(static_cast<std::size_t>(first * per), static_cast<std::size_t>(count * per));
  std::copy(src.begin(), src.end(), b.images.mutable_data().begin());
  normalize(b.images.mutable_data(), C, H * W, norm);
  b.labels.assign(data.labels.begin() + first, data.labels.begin() + first + count);
  return b;
}
}  // namespace

EvalResult evaluate(Network& net, const Dataset& data, const NormStats& norm, int batch_size) {
  NoGradScope<float> no_grad;
  EvalResult r;
  double loss_sum = 0.0;
  for (std::int64_t first = 0; first < data.size(); first += batch_size) {
    const std::int64_t count = std::min<std::int64_t>(batch_size, data.size() - first);
    Batch b = eval_batch(data, norm, first, count);
    Tensor<float> logits = net.logits(b.images, Mode::eval);
    loss_sum += static_cast<double>(cross_entropy(logits, std::span<const int>(b.labels)).item()) * count;
    const auto pred = argmax_rows(logits);
    for (std::int64_t i = 0; i < count; ++i) r.correct += pred[i] == b.labels[i] ? 1 : 0;
    r.total += count;
  }
  if (r.total > 0) {
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    r.loss = loss_sum / static_cast<double>(r.total);
  }
  return r;
}

std::string format_metrics_csv(std::span<const EpochRecord> records) {
  std::ostringstream os;
  os << "epoch,train_loss,val_acc,lr\n";
  char line[128];
  for (const auto& r : records) {
    std::snprintf(line, sizeof line, "%d,%.6f,%.4f,%.8g\n", r.epoch, r.train_loss, r.val_acc * 100.0, r.lr);
    os << line;
  }
  return os.str();
}

TrainResult train_supervised(Network& net, const Dataset& train, const Dataset& val, const NormStats& norm,
                             const TrainConfig& config) {
  config.optimizer.validate();
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (train.num_classes != net.num_classes()) {
    throw ValidationError("dataset has " + std::to_string(train.num_classes) + " classes but the network predicts " +
                          std::to_string(net.num_classes()));
  }
  StreamConfig sc;
  sc.batch_size = config.batch_size;
  sc.augment = config.augment;
  BatchStream stream(train, norm, sc, config.seed);

  net.set_trainable(true);
  ParamSet<float> params = net.parameters();
  TrainResult result;
  std::optional<Network> best;
  Batch batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    stream.start_epoch(epoch);
    double loss_sum = 0.0;
    std::int64_t seen = 0;
    while (stream.next(batch)) {
      Tape<float> tape;
      Tensor<float> logits = net.logits(batch.images, Mode::train);
      Tensor<float> loss = cross_entropy(logits, std::span<const int>(batch.labels));
      params.zero_grad();
      tape.backward(loss);
      optimizer_step(params, config.optimizer, epoch);
      loss_sum += static_cast<double>(loss.item()) * batch.labels.size();
      seen += static_cast<std::int64_t>(batch.labels.size());
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), evaluate(net, val, norm).accuracy,
                    config.optimizer.lr_at(epoch)};
    result.epochs.push_back(rec);
    if (config.on_epoch) config.on_epoch(rec);
    if (result.best_epoch < 0 || rec.val_acc > result.best_val_acc) {
      result.best_val_acc = rec.val_acc;
      result.best_epoch = epoch;
      if (config.keep_best) best = net.clone();
    }
  }
  if (config.keep_best && best) net = std::move(*best);
  for (auto& e : net.parameters()) e.value.clear_grad();
  return result;
}

void refresh_bn_statistics(Network& net, const Dataset& data, const NormStats& norm, std::span<const int> positions,
                           int batch_size) {
  if (positions.empty()) return;
  std::vector<double> saved;
  for (int p : positions) {
    saved.push_back(net.at(p).bn_momentum());
    net.at(p).reset_running_stats();
  }
  auto selected = [&](int p) {
    for (int q : positions) {
      if (q == p) return true;
    }
    return false;
  };
  NoGradScope<float> no_grad;
  int k = 0;
  const int last = static_cast<int>(net.num_blocks());
  for (std::int64_t first = 0; first < data.size(); first += batch_size, ++k) {
    const std::int64_t count = std::min<std::int64_t>(batch_size, data.size() - first);
    if (count < 2) break;
    // Cumulative average: batch k enters with weight 1 / (k + 1).
    for (int p : positions) net.at(p).set_bn_momentum(1.0 / (k + 1));
    Batch b = eval_batch(data, norm, first, count);
    net.run(b.images, -1, last, [&](int p) { return selected(p) ? Mode::train : Mode::eval; });
  }
  for (std::size_t i = 0; i < positions.size(); ++i) net.at(positions[i]).set_bn_momentum(saved[i]);
}

double prediction_agreement(Network& a, Network& b, const Dataset& data, const NormStats& norm) {
  NoGradScope<float> no_grad;
  std::int64_t same = 0;
  for (std::int64_t first = 0; first < data.size(); first += 250) {
    const std::int64_t count = std::min<std::int64_t>(250, data.size() - first);
    Batch batch = eval_batch(data, norm, first, count);
    const auto pa = argmax_rows(a.logits(batch.images, Mode::eval));
    const auto pb = argmax_rows(b.logits(batch.images, Mode::eval));
    for (std::int64_t i = 0; i < count; ++i) same += pa[i] == pb[i] ? 1 : 0;
  }
  return data.size() ? static_cast<double>(same) / static_cast<double>(data.size()) : 1.0;
}

}  // namespace netrecast
