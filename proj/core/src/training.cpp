#include "cmg/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace cmg {

using ad::Tape;
using ad::Var;

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw ValidationError("train.optimizer must be 'adam' or 'sgd', got '" + s + "'");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

void TrainConfig::validate() const {
  require(steps >= 0, "train.steps must be >= 0");
  require(lr >= 0 && std::isfinite(lr), "train.lr must be a non-negative number");
  require(batch >= 1, "train.batch must be >= 1");
  require(text_dropout >= 0 && text_dropout <= 1, "train.text_dropout must be in [0, 1]");
  require(empty_mask_prob >= 0 && empty_mask_prob <= 1, "train.empty_mask_prob must be in [0, 1]");
  require(momentum >= 0 && momentum < 1, "train.momentum must be in [0, 1)");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "adam betas must be in [0, 1)");
  require(grad_clip >= 0, "train.grad_clip must be >= 0");
  loss.validate();
}

LossParts model_loss_and_grad(const DenoiserWeights& weights, const TrainExample& ex, const Skeleton& skel,
                              const LossWeights& lw, std::vector<Matrix>* grads) {
  const DenoiserConfig& cfg = weights.config();
  validate_denoiser_inputs(cfg, ex.x_t, ex.t, ex.text, ex.control);
  require(cfg.joints == skel.joints(), "training: skeleton joint count does not match the model");
  Tape<double> tape(grads != nullptr);
  std::vector<Matrix> values;
  values.reserve(weights.tensors().size());
  for (const auto& t : weights.tensors()) values.push_back(t.value);
  auto params = bind_parameters(tape, values, grads != nullptr);
  Var<double> x0 = denoise_graph(tape, params, cfg, ex.x_t, ex.t, ex.text, ex.control);
  LossVars lv = loss_graph(x0, ex.x_gt, ex.control, skel, cfg.fps, lw);
  if (grads) {
    tape.backward(lv.total);
    grads->clear();
    for (const auto& p : params) {
      grads->push_back(tape.has_grad(p.id) ? tape.grad(p.id) : Matrix::Zero(p.rows(), p.cols()));
    }
  }
  return {lv.total.value()(0, 0), lv.whole.value()(0, 0), lv.con.value()(0, 0), lv.foot.value()(0, 0)};
}

SpatialControl evaluation_control(const SpatialControl& available, int pelvis) {
  SpatialControl c = SpatialControl::empty(available.frames(), available.joints());
  for (int i = 0; i < available.frames(); i += 5) {
    if (available.mask(i, pelvis) != 0.0) c.set(i, pelvis, available.target(i, pelvis));
  }
  return c;
}

namespace {

void check_dataset(const std::vector<TrainSample>& data, const DenoiserConfig& cfg, const Skeleton& skel) {
  require(!data.empty(), "training: dataset is empty");
  require(cfg.joints == skel.joints(), "training: skeleton joint count does not match the model");
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto& s = data[k];
    const std::string at = "training sample " + std::to_string(k) + ": ";
    require(s.motion.data.rows() == cfg.frames && s.motion.data.cols() == cfg.D(),
            at + "motion shape " + shape_str(s.motion.data.rows(), s.motion.data.cols()) + ", expected " +
                shape_str(cfg.frames, cfg.D()));
    require(s.motion.data.allFinite(), at + "motion contains NaN or Inf");
    require(s.control.frames() == cfg.frames && s.control.joints() == cfg.joints, at + "control shape mismatch");
    s.control.validate();
  }
}

// Random control drawn from the available entries: nothing, the pelvis, or a few joints, each on a
// random subset of frames.
SpatialControl draw_control(const SpatialControl& available, double empty_prob, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const int f = available.frames(), J = available.joints();
  SpatialControl c = SpatialControl::empty(f, J);
  if (U(rng) < empty_prob) return c;
  std::vector<int> joints;
  if (U(rng) < 0.5) {
    joints = {0};
  } else {
    const int k = 1 + static_cast<int>(U(rng) * 3);
    for (int n = 0; n < k; ++n) joints.push_back(std::min(J - 1, static_cast<int>(U(rng) * J)));
  }
  const double density = 0.05 + 0.95 * U(rng);
  for (int j : joints) {
    for (int i = 0; i < f; ++i) {
      if (U(rng) < density && available.mask(i, j) != 0.0) c.set(i, j, available.target(i, j));
    }
  }
  return c;
}

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const std::vector<NamedTensor>& tensors) : cfg_(cfg) {
    for (const auto& t : tensors) {
      m_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
      if (cfg.optimizer == OptimizerKind::Adam) v_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
    }
  }

  void step(std::vector<NamedTensor>& tensors, const std::vector<Matrix>& grads) {
    ++t_;
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < tensors.size(); ++i) {
        m_[i] = cfg_.momentum * m_[i] + grads[i];
        tensors[i].value -= cfg_.lr * m_[i];
      }
      return;
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
      tensors[i].value.array() -=
          cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.adam_eps);
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<Matrix> m_, v_;
  int t_ = 0;
};

}  // namespace

LossParts evaluate_dataset(const DenoiserWeights& weights, const std::vector<TrainSample>& data, const Skeleton& skel,
                           const DiffusionSchedule& sched, const TextEmbedder& embedder, const LossWeights& lw,
                           std::uint64_t seed) {
  const DenoiserConfig& cfg = weights.config();
  check_dataset(data, cfg, skel);
  require(sched.T == cfg.T, "evaluation: schedule length does not match the model");
  std::mt19937_64 rng(seed);
  const int T = cfg.T;
  const std::vector<int> ts = {T / 100, T / 10, T / 4, T / 2, (3 * T) / 4, T - 1};
  LossParts acc;
  int n = 0;
  for (const auto& s : data) {
    const SpatialControl control = evaluation_control(s.control);
    const TextCondition text = embedder.condition(s.text);
    for (int t : ts) {
      const Matrix eps = gaussian_like(cfg.frames, cfg.D(), rng);
      TrainExample ex{forward_noise(s.motion.data, t, eps, sched).x_t, t, s.motion.data, text, control};
      const LossParts p = model_loss_and_grad(weights, ex, skel, lw, nullptr);
      acc.total += p.total;
      acc.whole += p.whole;
      acc.con += p.con;
      acc.foot += p.foot;
      ++n;
    }
  }
  acc.total /= n;
  acc.whole /= n;
  acc.con /= n;
  acc.foot /= n;
  return acc;
}

DenoiserWeights train_from(DenoiserWeights weights, const std::vector<TrainSample>& data, const TrainConfig& train,
                           const Skeleton& skel, const DiffusionSchedule& sched, const TextEmbedder& embedder,
                           TrainReport* report) {
  train.validate();
  const DenoiserConfig& cfg = weights.config();
  check_dataset(data, cfg, skel);
  require(sched.T == cfg.T, "training: schedule length does not match the model");
  require(static_cast<int>(embedder.dim()) == cfg.text_dim, "training: embedder dimension does not match the model");

  std::vector<TextCondition> texts;
  for (const auto& s : data) texts.push_back(embedder.condition(s.text));
  const TextCondition null_text = TextCondition::null(embedder.dim());

  if (report) {
    report->history.clear();
    report->initial = evaluate_dataset(weights, data, skel, sched, embedder, train.loss, train.seed ^ 0x5eedULL);
  }

  std::mt19937_64 rng(train.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(data.size()) - 1);
  std::uniform_int_distribution<int> pick_t(0, cfg.T - 1);
  Optimizer opt(train, weights.tensors());
  std::vector<Matrix> grads, sum;

  for (int step = 0; step < train.steps; ++step) {
    LossParts mean;
    for (int b = 0; b < train.batch; ++b) {
      const int k = pick(rng);
      const int t = pick_t(rng);
      const Matrix eps = gaussian_like(cfg.frames, cfg.D(), rng);
      const bool drop = U(rng) < train.text_dropout;
      TrainExample ex{forward_noise(data[k].motion.data, t, eps, sched).x_t, t, data[k].motion.data,
                      drop ? null_text : texts[k], draw_control(data[k].control, train.empty_mask_prob, rng)};
      const LossParts p = model_loss_and_grad(weights, ex, skel, train.loss, &grads);
      if (b == 0) {
        sum = grads;
      } else {
        for (std::size_t i = 0; i < grads.size(); ++i) sum[i] += grads[i];
      }
      mean.total += p.total / train.batch;
      mean.whole += p.whole / train.batch;
      mean.con += p.con / train.batch;
      mean.foot += p.foot / train.batch;
    }
    double gnorm2 = 0.0;
    for (auto& g : sum) {
      if (train.batch > 1) g /= train.batch;
      gnorm2 += g.squaredNorm();
    }
    if (!std::isfinite(mean.total) || !std::isfinite(gnorm2)) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << ": loss=" << mean.total << " (whole=" << mean.whole
          << ", con=" << mean.con << ", foot=" << mean.foot << "), gradient norm^2=" << gnorm2;
      throw RuntimeError(msg.str());
    }
    if (train.grad_clip > 0.0 && gnorm2 > train.grad_clip * train.grad_clip) {
      const double s = train.grad_clip / std::sqrt(gnorm2);
      for (auto& g : sum) g *= s;
    }
    opt.step(weights.tensors(), sum);
    if (report) report->history.push_back(mean.total);
    if (train.on_step) train.on_step(step, mean);
  }
  if (!weights.all_finite()) throw RuntimeError("training produced non-finite weights");
  if (report) report->final = evaluate_dataset(weights, data, skel, sched, embedder, train.loss, train.seed ^ 0x5eedULL);
  return weights;
}

DenoiserWeights train_toy(const std::vector<TrainSample>& data, const DenoiserConfig& config, const TrainConfig& train,
                          const Skeleton& skel, const DiffusionSchedule& sched, const TextEmbedder& embedder,
                          TrainReport* report) {
  return train_from(DenoiserWeights::init(config, train.seed), data, train, skel, sched, embedder, report);
}

}  // namespace cmg
