#pragma once

#include "dsfnet/checkpoint.hpp"
#include "dsfnet/metrics.hpp"
#include "dsfnet/model.hpp"
#include "dsfnet/synth.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dsf {

enum class Schedule { cumulative, single };

struct OptimConfig {
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<double> milestones{100, 200};  // epochs
  double factor = 0.01;
  // cumulative: multiply by `factor` at every milestone passed.
  // single: lr * factor once any milestone is passed.
  Schedule schedule = Schedule::cumulative;

  void validate() const;
};

double lr_at(double epoch, const OptimConfig& cfg);

/// g' = g + wd p; v = momentum v + g'; p -= lr v.
template <typename Scalar>
void sgd_update(Tensor<Scalar>& param, const Tensor<Scalar>& grad, Tensor<Scalar>& velocity, double lr,
                double momentum, double weight_decay);

/// Velocity buffers keyed by parameter name, created lazily at zero.
template <typename Scalar>
struct OptimState {
  std::map<std::string, Tensor<Scalar>> velocity;
};

/// One update of every trainable parameter that has an entry in `grads`.
/// Throws std::domain_error naming the parameter on a non-finite gradient, before any update.
template <typename Scalar>
void sgd_step(ParameterStore<Scalar>& params, const std::map<std::string, Tensor<Scalar>>& grads,
              OptimState<Scalar>& state, double lr, const OptimConfig& cfg);

enum class Precision { f32, f64 };

struct DataConfig {
  std::string source = "synth";  // "synth" or "dir"
  std::filesystem::path dir;
  int count = 8;
  Index extent = 64;
  Difficulty difficulty = Difficulty::easy;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int iterations = 200;
  int batch_size = 4;
  Precision precision = Precision::f32;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::filesystem::path resume;
  NetConfig net;
  OptimConfig optim;
  DataConfig data;
  // Ablations. instant_conv = false replaces the rotation init of the instant conv by He init.
  bool sff = true;
  bool instant_conv = true;
  std::filesystem::path output_dir = "run";
  std::string trace_file = "trace.csv";
  std::string final_checkpoint = "final.ckpt";
  std::string best_checkpoint = "best.ckpt";

  void validate() const;
  /// Net config with the ablation switches applied.
  NetConfig effective_net() const;
};

struct StepRecord {
  int iteration = 0;
  double loss = 0, cross_entropy = 0, mae = 0, lr = 0;
};

void write_trace_header(std::ostream& os);
void write_trace_row(std::ostream& os, const StepRecord& r);

/// Batches: image B x 3 x H x W and mask B x 1 x H x W.
template <typename Scalar>
struct Batch {
  Tensor<Scalar> images;
  Tensor<Scalar> masks;
};

template <typename Scalar>
Batch<Scalar> make_batch(const std::vector<SegSample>& data, const std::vector<std::size_t>& indices);

/// Dataset positions used at `iteration`: a fresh permutation per pass over the data,
/// seeded from (seed, pass), so any iteration can be reproduced without history.
std::vector<std::size_t> batch_indices(std::uint64_t seed, int iteration, int batch_size, std::size_t dataset_size);

template <typename Scalar>
class Trainer {
 public:
  Trainer(RunConfig cfg, std::vector<SegSample> data);

  /// Forward, fused loss, backward and SGD update for the current iteration. On a non-finite
  /// value the model and optimizer state are left as they were and std::domain_error propagates.
  StepRecord step();

  int iteration() const { return iteration_; }
  double epoch() const;
  const RunConfig& config() const { return cfg_; }
  const Model<Scalar>& model() const { return model_; }
  Model<Scalar>& model() { return model_; }
  const std::vector<SegSample>& data() const { return data_; }

  /// Model, optimizer velocity and iteration counter.
  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  RunConfig cfg_;
  std::vector<SegSample> data_;
  Model<Scalar> model_;
  OptimState<Scalar> optim_;
  int iteration_ = 0;
};

struct TrainSummary {
  std::vector<StepRecord> trace;
  double best_loss = 0;
  int best_iteration = -1;
  std::filesystem::path final_checkpoint, best_checkpoint;
};

std::vector<SegSample> load_training_data(const RunConfig& cfg);

/// Runs cfg.iterations steps (continuing from cfg.resume when set), writing the trace CSV and
/// checkpoints under cfg.output_dir. A non-finite loss saves the last good state to
/// `aborted.ckpt` and rethrows as std::runtime_error.
template <typename Scalar>
TrainSummary train(const RunConfig& cfg, std::ostream* log = nullptr);

TrainSummary train(const RunConfig& cfg, std::ostream* log = nullptr);

/// NetConfig as `meta.net.*` entries.
void append_net_meta(Checkpoint& ckpt, const NetConfig& net);
NetConfig read_net_meta(const Checkpoint& ckpt);

template <typename Scalar>
Checkpoint model_checkpoint(const Model<Scalar>& model);

/// Rebuilds the network described by the meta entries and loads its parameters.
template <typename Scalar>
Model<Scalar> model_from_checkpoint(const Checkpoint& ckpt);

/// Eval-mode saliency map (1 x H x W, [0,1]) for a 3 x H x W image. Extents that are not
/// multiples of the network divisor are resized in and out bilinearly.
template <typename Scalar>
Image predict(const Model<Scalar>& model, const Image& image);

/// 1 x H x W plane as an H x W map.
Map2d to_map(const Image& plane);

/// Mean IoU of eval-mode predictions thresholded at `threshold`.
template <typename Scalar>
double mean_iou(const Model<Scalar>& model, const std::vector<SegSample>& data, double threshold = 0.5);

}  // namespace dsf
