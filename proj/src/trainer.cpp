#include "dsfnet/trainer.hpp"

#include "dsfnet/metrics.hpp"
#include "dsfnet/ops.hpp"
#include "dsfnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace dsf {

void OptimConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("optim: lr must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("optim: momentum must be in [0,1)");
  if (!(weight_decay >= 0)) throw std::invalid_argument("optim: weight_decay must be >= 0");
  if (!(factor > 0 && factor <= 1)) throw std::invalid_argument("optim: factor must be in (0,1]");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (!(milestones[i] >= 0)) throw std::invalid_argument("optim: milestones must be >= 0");
    if (i > 0 && !(milestones[i] > milestones[i - 1]))
      throw std::invalid_argument("optim: milestones must be strictly increasing");
  }
}

double lr_at(double epoch, const OptimConfig& cfg) {
  if (!(epoch >= 0)) throw std::invalid_argument("lr_at: epoch must be >= 0");
  int passed = 0;
  for (double m : cfg.milestones) passed += epoch >= m;
  if (cfg.schedule == Schedule::single) return passed > 0 ? cfg.lr * cfg.factor : cfg.lr;
  return cfg.lr * std::pow(cfg.factor, passed);
}

template <typename Scalar>
void sgd_update(Tensor<Scalar>& param, const Tensor<Scalar>& grad, Tensor<Scalar>& velocity, double lr,
                double momentum, double weight_decay) {
  if (grad.shape() != param.shape() || velocity.shape() != param.shape())
    throw std::invalid_argument("sgd_update: shape mismatch " + shape_string(param.shape()) + " / " +
                                shape_string(grad.shape()) + " / " + shape_string(velocity.shape()));
  velocity.data() = static_cast<Scalar>(momentum) * velocity.data() + grad.data() +
                    static_cast<Scalar>(weight_decay) * param.data();
  param.data() -= static_cast<Scalar>(lr) * velocity.data();
}

template <typename Scalar>
void sgd_step(ParameterStore<Scalar>& params, const std::map<std::string, Tensor<Scalar>>& grads,
              OptimState<Scalar>& state, double lr, const OptimConfig& cfg) {
  for (const auto& [name, g] : grads) {
    const auto& p = params.entry(name);
    if (g.shape() != p.value.shape())
      throw std::invalid_argument("sgd_step: gradient of " + name + " has shape " + shape_string(g.shape()) +
                                  ", parameter " + shape_string(p.value.shape()));
    if (!g.all_finite()) throw std::domain_error("sgd_step: non-finite gradient for " + name);
  }
  for (auto& p : params.entries()) {
    if (!p.trainable) continue;
    auto g = grads.find(p.name);
    if (g == grads.end()) continue;
    auto [it, fresh] = state.velocity.try_emplace(p.name, Tensor<Scalar>::zeros(p.value.shape()));
    sgd_update(p.value, g->second, it->second, lr, cfg.momentum, cfg.weight_decay);
  }
}

void RunConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("run: batch_size must be >= 2 for batch normalization");
  if (iterations < 0) throw std::invalid_argument("run: iterations must be >= 0");
  if (checkpoint_every < 0) throw std::invalid_argument("run: checkpoint_every must be >= 0");
  if (data.source != "synth" && data.source != "dir")
    throw std::invalid_argument("data: source must be 'synth' or 'dir'");
  if (data.source == "synth" && data.count < 1) throw std::invalid_argument("data: count must be >= 1");
  effective_net().validate();
  optim.validate();
}

NetConfig RunConfig::effective_net() const {
  NetConfig n = net;
  n.sff = sff;
  n.rotation_init = instant_conv;
  return n;
}

void write_trace_header(std::ostream& os) { os << "iteration,loss,ce,mae,lr\n"; }

void write_trace_row(std::ostream& os, const StepRecord& r) {
  os << r.iteration << ',' << std::setprecision(9) << r.loss << ',' << r.cross_entropy << ',' << r.mae << ','
     << r.lr << '\n';
}

template <typename Scalar>
Batch<Scalar> make_batch(const std::vector<SegSample>& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  const auto& first = data.at(indices.front());
  const Index h = first.image.dim(1), w = first.image.dim(2), plane = h * w;
  const Index b = static_cast<Index>(indices.size());
  Batch<Scalar> batch{Tensor<Scalar>({b, 3, h, w}), Tensor<Scalar>({b, 1, h, w})};
  for (Index i = 0; i < b; ++i) {
    const auto& s = data.at(indices[static_cast<std::size_t>(i)]);
    if (s.image.shape() != Shape{3, h, w} || s.mask.shape() != Shape{1, h, w})
      throw std::invalid_argument("make_batch: sample " + s.id + " does not match extent " + std::to_string(h) + "x" +
                                  std::to_string(w));
    batch.images.data().segment(i * 3 * plane, 3 * plane) = s.image.data().template cast<Scalar>();
    batch.masks.data().segment(i * plane, plane) = s.mask.data().template cast<Scalar>();
  }
  return batch;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, int iteration, int batch_size, std::size_t dataset_size) {
  if (dataset_size == 0) throw std::invalid_argument("batch_indices: empty dataset");
  std::vector<std::size_t> out;
  const std::uint64_t start = static_cast<std::uint64_t>(iteration) * static_cast<std::uint64_t>(batch_size);
  std::uint64_t cached_pass = ~std::uint64_t{0};
  std::vector<std::size_t> perm(dataset_size);
  for (std::uint64_t k = start; k < start + static_cast<std::uint64_t>(batch_size); ++k) {
    const std::uint64_t pass = k / dataset_size;
    if (pass != cached_pass) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::mt19937_64 rng(derive_seed(seed, "shuffle", pass));
      for (std::size_t i = perm.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm[i - 1], perm[pick(rng)]);
      }
      cached_pass = pass;
    }
    out.push_back(perm[k % dataset_size]);
  }
  return out;
}

template <typename Scalar>
Trainer<Scalar>::Trainer(RunConfig cfg, std::vector<SegSample> data)
    : cfg_(std::move(cfg)), data_(std::move(data)) {
  cfg_.validate();
  if (data_.empty()) throw std::invalid_argument("trainer: empty dataset");
  const NetConfig net = cfg_.effective_net();
  for (const auto& s : data_) {
    if (s.image.dim(1) % net.extent_divisor() != 0 || s.image.dim(2) % net.extent_divisor() != 0)
      throw std::invalid_argument("trainer: sample " + s.id + " extent not divisible by " +
                                  std::to_string(net.extent_divisor()));
  }
  model_ = build_network<Scalar>(net, derive_seed(cfg_.seed, "init"));
}

template <typename Scalar>
double Trainer<Scalar>::epoch() const {
  return static_cast<double>(iteration_) * cfg_.batch_size / static_cast<double>(data_.size());
}

template <typename Scalar>
StepRecord Trainer<Scalar>::step() {
  const auto batch = make_batch<Scalar>(data_, batch_indices(cfg_.seed, iteration_, cfg_.batch_size, data_.size()));
  ParameterStore<Scalar> snapshot = model_.params;
  StepRecord rec;
  rec.iteration = iteration_;
  rec.lr = lr_at(epoch(), cfg_.optim);
  try {
    Tape<Scalar> tape;
    ParamBinding<Scalar> params(tape, model_.params);
    const auto out = forward(model_.config, params, tape.leaf(batch.images), Mode::train);
    const auto loss = fused_loss(tape.leaf(batch.masks), out.map);
    rec.loss = static_cast<double>(loss.total.value().item());
    rec.cross_entropy = static_cast<double>(loss.cross_entropy.value().item());
    rec.mae = static_cast<double>(loss.mae.value().item());
    if (!std::isfinite(rec.loss)) throw std::domain_error("non-finite loss");
    const auto grads = tape.backward(loss.total);
    std::map<std::string, Tensor<Scalar>> g;
    for (const auto& [name, v] : params.bound())
      if (grads.has(v)) g.emplace(name, grads[v]);
    sgd_step(model_.params, g, optim_, rec.lr, cfg_.optim);
  } catch (...) {
    model_.params = std::move(snapshot);
    throw;
  }
  ++iteration_;
  return rec;
}

namespace {

const std::string kVelocityPrefix = "optim.velocity.";

}  // namespace

template <typename Scalar>
Checkpoint Trainer<Scalar>::checkpoint() const {
  Checkpoint ckpt = model_checkpoint(model_);
  const auto it = static_cast<std::uint32_t>(iteration_);
  ckpt.push_back(CheckpointEntry{"meta.iteration", {2}, {float(it & 0xffffu), float(it >> 16)}});
  for (const auto& [name, v] : optim_.velocity) ckpt.push_back(make_entry(kVelocityPrefix + name, v));
  return ckpt;
}

template <typename Scalar>
void Trainer<Scalar>::restore(const Checkpoint& ckpt) {
  const NetConfig stored = read_net_meta(ckpt);
  const NetConfig& mine = model_.config;
  if (stored.channels != mine.channels || stored.alpha != mine.alpha || stored.width_divider != mine.width_divider ||
      stored.kernel != mine.kernel || stored.attention != mine.attention || stored.sff != mine.sff ||
      stored.attention_levels != mine.attention_levels || stored.pool_stages != mine.pool_stages)
    throw std::runtime_error("checkpoint network configuration differs from the run configuration");
  const auto& iter = require_entry(ckpt, "meta.iteration");
  if (iter.data.size() != 2) throw std::runtime_error("checkpoint: malformed meta.iteration");

  ParameterStore<Scalar> params = model_.params;
  restore_store(params, ckpt);
  OptimState<Scalar> optim;
  for (const auto& e : ckpt) {
    if (e.name.rfind(kVelocityPrefix, 0) != 0) continue;
    const std::string name = e.name.substr(kVelocityPrefix.size());
    if (!params.contains(name) || params.at(name).shape() != e.shape)
      throw std::runtime_error("checkpoint: velocity " + name + " does not match a parameter");
    optim.velocity.emplace(name, entry_tensor<Scalar>(e));
  }
  model_.params = std::move(params);
  optim_ = std::move(optim);
  iteration_ = static_cast<int>(static_cast<std::uint32_t>(iter.data[0]) | (static_cast<std::uint32_t>(iter.data[1]) << 16));
}

std::vector<SegSample> load_training_data(const RunConfig& cfg) {
  if (cfg.data.source == "dir") return load_dataset(cfg.data.dir);
  return synth_generate(cfg.data.count, cfg.data.extent, derive_seed(cfg.seed, "data"), cfg.data.difficulty);
}

template <typename Scalar>
TrainSummary train(const RunConfig& cfg, std::ostream* log) {
  Trainer<Scalar> trainer(cfg, load_training_data(cfg));
  if (!cfg.resume.empty()) trainer.restore(load_checkpoint(cfg.resume));
  std::filesystem::create_directories(cfg.output_dir);

  TrainSummary summary;
  summary.final_checkpoint = cfg.output_dir / cfg.final_checkpoint;
  summary.best_checkpoint = cfg.output_dir / cfg.best_checkpoint;
  std::ofstream trace(cfg.output_dir / cfg.trace_file, std::ios::trunc);
  if (!trace) throw std::runtime_error("cannot write " + (cfg.output_dir / cfg.trace_file).string());
  write_trace_header(trace);

  Checkpoint best;
  while (trainer.iteration() < cfg.iterations) {
    Checkpoint before = trainer.checkpoint();
    StepRecord rec;
    try {
      rec = trainer.step();
    } catch (const std::domain_error& e) {
      const auto path = cfg.output_dir / "aborted.ckpt";
      save_checkpoint(before, path);
      throw std::runtime_error("training aborted at iteration " + std::to_string(trainer.iteration()) + ": " +
                               e.what() + "; last good state saved to " + path.string());
    }
    write_trace_row(trace, rec);
    summary.trace.push_back(rec);
    if (summary.best_iteration < 0 || rec.loss < summary.best_loss) {
      summary.best_loss = rec.loss;
      summary.best_iteration = rec.iteration;
      best = std::move(before);
    }
    if (log && (rec.iteration % 10 == 0 || trainer.iteration() == cfg.iterations))
      *log << "iter " << rec.iteration << " loss " << rec.loss << " ce " << rec.cross_entropy << " mae " << rec.mae
           << " lr " << rec.lr << '\n';
    if (cfg.checkpoint_every > 0 && trainer.iteration() % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "iter_%06d.ckpt", trainer.iteration());
      save_checkpoint(trainer.checkpoint(), cfg.output_dir / name);
    }
  }
  save_checkpoint(trainer.checkpoint(), summary.final_checkpoint);
  save_checkpoint(best.empty() ? trainer.checkpoint() : best, summary.best_checkpoint);
  return summary;
}

TrainSummary train(const RunConfig& cfg, std::ostream* log) {
  return cfg.precision == Precision::f64 ? train<double>(cfg, log) : train<float>(cfg, log);
}

void append_net_meta(Checkpoint& ckpt, const NetConfig& net) {
  CheckpointEntry channels{"meta.net.channels", {static_cast<Index>(net.channels.size())}, {}};
  for (Index c : net.channels) channels.data.push_back(static_cast<float>(c));
  ckpt.push_back(std::move(channels));
  const std::vector<float> fields{float(net.in_channels),      float(net.alpha),          float(net.width_divider),
                                  float(net.kernel),           float(net.attention),      float(net.attention_per_stage),
                                  float(net.attention_levels), float(net.attention_reduction), float(net.pool_stages),
                                  float(net.sff),              float(net.rotation_init)};
  ckpt.push_back(CheckpointEntry{"meta.net.config", {static_cast<Index>(fields.size())}, fields});
}

NetConfig read_net_meta(const Checkpoint& ckpt) {
  const auto& channels = require_entry(ckpt, "meta.net.channels");
  const auto& fields = require_entry(ckpt, "meta.net.config");
  if (fields.data.size() != 11) throw std::runtime_error("checkpoint: malformed meta.net.config");
  NetConfig net;
  net.channels.clear();
  for (float c : channels.data) net.channels.push_back(static_cast<Index>(c));
  const auto& f = fields.data;
  net.in_channels = static_cast<Index>(f[0]);
  net.alpha = static_cast<Index>(f[1]);
  net.width_divider = static_cast<Index>(f[2]);
  net.kernel = static_cast<Index>(f[3]);
  net.attention = f[4] != 0;
  net.attention_per_stage = f[5] != 0;
  net.attention_levels = static_cast<Index>(f[6]);
  net.attention_reduction = static_cast<Index>(f[7]);
  net.pool_stages = static_cast<Index>(f[8]);
  net.sff = f[9] != 0;
  net.rotation_init = f[10] != 0;
  net.validate();
  return net;
}

template <typename Scalar>
Checkpoint model_checkpoint(const Model<Scalar>& model) {
  Checkpoint ckpt;
  append_net_meta(ckpt, model.config);
  append_store(ckpt, model.params);
  return ckpt;
}

template <typename Scalar>
Model<Scalar> model_from_checkpoint(const Checkpoint& ckpt) {
  Model<Scalar> model = build_network<Scalar>(read_net_meta(ckpt), 0);
  restore_store(model.params, ckpt);
  return model;
}

template <typename Scalar>
Image predict(const Model<Scalar>& model, const Image& image) {
  if (image.rank() != 3 || image.dim(0) != model.config.in_channels)
    throw std::invalid_argument("predict: expected " + std::to_string(model.config.in_channels) + " x H x W, got " +
                                shape_string(image.shape()));
  const Index h = image.dim(1), w = image.dim(2), div = model.config.extent_divisor();
  const Index ph = std::max(div, (h + div - 1) / div * div), pw = std::max(div, (w + div - 1) / div * div);

  ParameterStore<Scalar> store = model.params;
  Tape<Scalar> tape;
  ParamBinding<Scalar> params(tape, store, false);
  auto x = tape.leaf(image.cast<Scalar>().reshaped({1, image.dim(0), h, w}));
  if (ph != h || pw != w) x = bilinear_resize(x, ph, pw);
  auto map = forward(model.config, params, x, Mode::eval).map;
  if (ph != h || pw != w) map = bilinear_resize(map, h, w);
  return map.value().template cast<double>().reshaped({1, h, w});
}

Map2d to_map(const Image& plane) {
  if (plane.rank() != 3 || plane.dim(0) != 1) throw std::invalid_argument("to_map: expected 1 x H x W");
  using RowMajor = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(plane.raw(), plane.dim(1), plane.dim(2));
}

template <typename Scalar>
double mean_iou(const Model<Scalar>& model, const std::vector<SegSample>& data, double threshold) {
  if (data.empty()) throw std::invalid_argument("mean_iou: empty dataset");
  double total = 0;
  for (const auto& s : data)
    total += iou(binarize(to_map(predict(model, s.image)), threshold), binarize(to_map(s.mask), 0.5));
  return total / static_cast<double>(data.size());
}

#define DSF_INSTANTIATE_TRAINER(S)                                                                        \
  template void sgd_update<S>(Tensor<S>&, const Tensor<S>&, Tensor<S>&, double, double, double);          \
  template void sgd_step<S>(ParameterStore<S>&, const std::map<std::string, Tensor<S>>&, OptimState<S>&,  \
                            double, const OptimConfig&);                                                  \
  template Batch<S> make_batch<S>(const std::vector<SegSample>&, const std::vector<std::size_t>&);        \
  template class Trainer<S>;                                                                              \
  template TrainSummary train<S>(const RunConfig&, std::ostream*);                                        \
  template Checkpoint model_checkpoint<S>(const Model<S>&);                                               \
  template Model<S> model_from_checkpoint<S>(const Checkpoint&);                                          \
  template Image predict<S>(const Model<S>&, const Image&);                                               \
  template double mean_iou<S>(const Model<S>&, const std::vector<SegSample>&, double);

DSF_INSTANTIATE_TRAINER(float)
DSF_INSTANTIATE_TRAINER(double)

}  // namespace dsf
