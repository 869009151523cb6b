#pragma once

// Behavioral cloning of oracle labels: mean softmax cross-entropy, Adam,
// validation label-accuracy early stopping with best-weight restoration.

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hupa/dataset.hpp"
#include "hupa/models.hpp"
#include "hupa/optim.hpp"

namespace hupa {

struct TrainConfig {
  ModelKind kind = ModelKind::hupa;
  int width = 16;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch = 256;
  int max_epochs = 200;
  int patience = 10;
  /// 0 = full pass over the (shuffled) training set each epoch.
  int steps_per_epoch = 0;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double train_acc = 0;
  double val_acc = 0;
  int steps = 0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct History {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_acc = 0;
  bool stopped_early = false;
  double first_batch_loss = std::numeric_limits<double>::quiet_NaN();

  friend bool operator==(const History&, const History&) = default;
};

/// Tracks the best score; stop once `patience` epochs pass without a strict
/// improvement (ties keep the earliest epoch).
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  }

  /// Returns true when `score` is a new best.
  bool update(int epoch, double score) {
    if (best_epoch_ < 0 || score > best_) {
      best_ = score;
      best_epoch_ = epoch;
      since_best_ = 0;
      return true;
    }
    ++since_best_;
    return false;
  }

  bool should_stop() const { return since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  int patience_;
  int best_epoch_ = -1;
  double best_ = 0;
  int since_best_ = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, int batch, double loss)
      : std::runtime_error("non-finite training loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_, batch_;
};

struct EvalMetrics {
  double loss = 0;
  double label_acc = 0;
  double opt_acc = 0;
  std::size_t count = 0;
};

/// Image tensors for all 164 maps, built once.
template <class T>
const std::vector<Tensor<T>>& map_image_tensors() {
  static const std::vector<Tensor<T>> images = [] {
    std::vector<Tensor<T>> out;
    for (const Map& m : all_maps()) out.push_back(PolicyModel<T>::image_tensor(map_to_image(m)));
    return out;
  }();
  return images;
}

/// Runs of consecutive equal map ids in `order` after a stable sort by map.
inline std::vector<std::span<const std::size_t>> group_by_map(std::vector<std::size_t>& idx,
                                                              std::span<const Sample> samples) {
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return samples[a].map_id < samples[b].map_id; });
  std::vector<std::span<const std::size_t>> groups;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= idx.size(); ++i)
    if (i == idx.size() || samples[idx[i]].map_id != samples[idx[start]].map_id) {
      groups.emplace_back(idx.data() + start, i - start);
      start = i;
    }
  return groups;
}

/// Sample-level metrics from any logit source. `logits_for(map_id, rows,
/// out)` fills 8 logits per row for samples of a single map.
template <class LogitFn>
EvalMetrics evaluate_with(std::span<const Sample> samples, LogitFn&& logits_for) {
  EvalMetrics m;
  if (samples.empty()) return m;
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<Sample> rows;
  std::vector<float> logits;
  double loss = 0;
  std::size_t hit = 0, opt = 0;
  for (auto group : group_by_map(idx, samples)) {
    rows.clear();
    for (std::size_t i : group) rows.push_back(samples[i]);
    logits.assign(rows.size() * 8, 0.0f);
    logits_for(static_cast<int>(rows.front().map_id), std::span<const Sample>(rows), logits.data());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const float* l = logits.data() + 8 * r;
      loss += nn::softmax_cross_entropy_row<double>(std::vector<double>(l, l + 8).data(), rows[r].label - 1, nullptr);
      const int pred = nn::argmax(l, 8) + 1;
      hit += pred == rows[r].label;
      opt += contains(rows[r].optimal_mask, Action(pred));
    }
  }
  m.count = samples.size();
  m.loss = loss / static_cast<double>(m.count);
  m.label_acc = static_cast<double>(hit) / static_cast<double>(m.count);
  m.opt_acc = static_cast<double>(opt) / static_cast<double>(m.count);
  return m;
}

template <class T>
void fill_inputs(std::span<const Sample> rows, std::vector<T>& X) {
  X.resize(rows.size() * kPrimaryInputs);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto x = primary_input<T>(rows[r].s(), rows[r].g());
    std::copy(x.begin(), x.end(), X.begin() + static_cast<std::ptrdiff_t>(r * kPrimaryInputs));
  }
}

/// Logits for rows of one map, in chunks to bound activation memory.
template <class T>
void model_logits(const PolicyModel<T>& model, const Tensor<T>& ctx, std::span<const Sample> rows, float* out) {
  constexpr std::size_t kChunk = 4096;
  std::vector<T> X, L;
  PrimaryCache<T> cache;
  for (std::size_t off = 0; off < rows.size(); off += kChunk) {
    const auto part = rows.subspan(off, std::min(kChunk, rows.size() - off));
    fill_inputs<T>(part, X);
    L.resize(part.size() * 8);
    model.policy_forward(ctx.data(), X.data(), static_cast<int>(part.size()), L.data(), cache);
    std::copy(L.begin(), L.end(), out + off * 8);
  }
}

template <class T>
EvalMetrics evaluate(const PolicyModel<T>& model, std::span<const Sample> samples) {
  return evaluate_with(samples, [&](int map_id, std::span<const Sample> rows, float* out) {
    const Tensor<T> ctx = model.context(map_to_image(all_maps()[static_cast<std::size_t>(map_id)]));
    model_logits(model, ctx, rows, out);
  });
}

/// Zeroes and fills the parameter gradients of the mean cross-entropy over
/// samples[batch]; returns the mean loss and the number of correct canonical
/// predictions.
template <class T>
std::pair<double, std::size_t> accumulate_gradients(PolicyModel<T>& model, std::span<const Sample> samples,
                                                    std::vector<std::size_t> batch) {
  auto& ps = model.params();
  ps.zero_grad();
  const auto& images = map_image_tensors<T>();
  const T inv_n = T(1) / static_cast<T>(batch.size());
  double loss = 0;
  std::size_t correct = 0;
  std::vector<Sample> rows;
  std::vector<T> X, logits, glogits;
  for (auto group : group_by_map(batch, samples)) {
    rows.clear();
    for (std::size_t i : group) rows.push_back(samples[i]);
    const int n = static_cast<int>(rows.size());
    ContextCache<T> ccache;
    const Tensor<T> ctx = model.context(images[rows.front().map_id], ccache);
    fill_inputs<T>(rows, X);
    logits.resize(static_cast<std::size_t>(n) * 8);
    glogits.resize(logits.size());
    PrimaryCache<T> pcache;
    model.policy_forward(ctx.data(), X.data(), n, logits.data(), pcache);
    for (int r = 0; r < n; ++r) {
      T* g = glogits.data() + 8 * r;
      loss += nn::softmax_cross_entropy_row(logits.data() + 8 * r, rows[static_cast<std::size_t>(r)].label - 1, g);
      for (int k = 0; k < 8; ++k) g[k] *= inv_n;
      correct += nn::argmax(logits.data() + 8 * r, 8) + 1 == rows[static_cast<std::size_t>(r)].label;
    }
    Tensor<T> gctx(ctx.shape());
    model.policy_backward(ctx.data(), pcache, glogits.data(), gctx.data());
    model.context_backward(ccache, gctx);
  }
  return {loss / static_cast<double>(batch.size()), correct};
}

/// One optimizer step on a batch.
template <class T>
std::pair<double, std::size_t> train_step(PolicyModel<T>& model, nn::Adam<T>& opt, std::span<const Sample> samples,
                                          std::vector<std::size_t> batch) {
  const auto result = accumulate_gradients(model, samples, std::move(batch));
  opt.step(model.params());
  return result;
}

struct TrainResult {
  PolicyModel<float> model;
  History history;
  double seconds = 0;
};

struct TrainHooks {
  /// Replaces the validation score (fixtures with a frozen score).
  std::function<double(int epoch, const PolicyModel<float>&)> val_score;
  /// Progress callback after every epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

inline TrainResult train(const TrainConfig& cfg, std::span<const Sample> train_set, std::span<const Sample> val_set,
                         const TrainHooks& hooks = {}) {
  if (cfg.batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (train_set.empty()) throw std::invalid_argument("empty training set");
  const auto t0 = std::chrono::steady_clock::now();
  ModelSpec spec;
  spec.kind = cfg.kind;
  spec.width = cfg.width;
  PolicyModel<float> model(spec);
  model.init(mix_seed(cfg.seed, 0x696e6974));  // "init"
  nn::Adam<float> opt(model.params(), {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps});
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x73687566));  // "shuf"

  EarlyStopping stopper(cfg.patience);
  History hist;
  std::vector<float> best_params = model.params().flat_values();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = static_cast<std::size_t>(cfg.batch);
  std::size_t steps = (order.size() + batch - 1) / batch;
  if (cfg.steps_per_epoch > 0) steps = std::min(steps, static_cast<std::size_t>(cfg.steps_per_epoch));

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t step = 0; step < steps; ++step) {
      const auto first = order.begin() + static_cast<std::ptrdiff_t>(step * batch);
      const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), (step + 1) * batch));
      std::vector<std::size_t> idx(first, last);
      const auto [loss, hits] = train_step(model, opt, train_set, idx);
      if (!std::isfinite(loss)) throw TrainingDiverged(epoch, static_cast<int>(step), loss);
      if (epoch == 0 && step == 0) hist.first_batch_loss = loss;
      loss_sum += loss * static_cast<double>(idx.size());
      correct += hits;
      seen += idx.size();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = static_cast<int>(steps);
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    rec.val_acc = hooks.val_score ? hooks.val_score(epoch, model) : evaluate(model, val_set).label_acc;
    hist.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (stopper.update(epoch, rec.val_acc)) best_params = model.params().flat_values();
    if (stopper.should_stop()) {
      hist.stopped_early = true;
      break;
    }
  }
  hist.best_epoch = stopper.best_epoch();
  hist.best_val_acc = stopper.best();
  model.params().set_flat_values(best_params);
  TrainResult result{std::move(model), std::move(hist), 0.0};
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---------------------------------------------------------------------------
// Sidecar metadata: key=value lines echoing the config and the history.

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string training_metadata(const TrainConfig& cfg, const History& h, const std::map<std::string, std::string>& extra = {}) {
  std::ostringstream os;
  os << "kind=" << model_kind_name(cfg.kind) << "\n"
     << "width=" << cfg.width << "\n"
     << "optimizer=adam\n"
     << "lr=" << format_double(cfg.lr) << "\n"
     << "beta1=" << format_double(cfg.beta1) << "\n"
     << "beta2=" << format_double(cfg.beta2) << "\n"
     << "eps=" << format_double(cfg.eps) << "\n"
     << "batch=" << cfg.batch << "\n"
     << "max_epochs=" << cfg.max_epochs << "\n"
     << "patience=" << cfg.patience << "\n"
     << "steps_per_epoch=" << cfg.steps_per_epoch << "\n"
     << "seed=" << cfg.seed << "\n";
  for (const auto& [k, v] : extra) os << k << "=" << v << "\n";
  os << "epochs=" << h.epochs.size() << "\n"
     << "best_epoch=" << h.best_epoch << "\n"
     << "best_val_acc=" << format_double(h.best_val_acc) << "\n"
     << "stopped_early=" << (h.stopped_early ? 1 : 0) << "\n"
     << "first_batch_loss=" << format_double(h.first_batch_loss) << "\n";
  for (const auto& e : h.epochs)
    os << "epoch." << e.epoch << "=" << format_double(e.train_loss) << "," << format_double(e.train_acc) << ","
       << format_double(e.val_acc) << "," << e.steps << "\n";
  return os.str();
}

}  // namespace hupa
