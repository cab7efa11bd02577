#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cmg/autodiff.hpp"
#include "cmg/motion.hpp"
#include "cmg/text_embedder.hpp"

namespace cmg {

struct DenoiserConfig {
  int frames = 60;
  int joints = 22;
  int latent = 32;  // L, per-joint feature width
  int blocks = 4;
  int ffn = 64;
  int text_dim = 512;
  int T = 1000;  // timestep range the model is conditioned on
  double fps = 20.0;

  int D() const { return relative_dim(joints); }
  int tokens() const { return frames * joints; }
  bool operator==(const DenoiserConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Matrix value;
};

/// Parameters of the control-conditioned denoiser, in a fixed order. Tokens are laid out
/// frame-major: row i*J + j holds joint j of frame i.
class DenoiserWeights {
 public:
  DenoiserWeights() = default;
  DenoiserWeights(DenoiserConfig config, std::vector<NamedTensor> tensors, std::uint64_t seed);

  static DenoiserWeights init(const DenoiserConfig& config, std::uint64_t seed);
  /// Shapes of every tensor, in storage order.
  static std::vector<std::pair<std::string, std::pair<int, int>>> layout(const DenoiserConfig& config);

  const DenoiserConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  std::vector<NamedTensor>& tensors() { return tensors_; }
  const std::vector<NamedTensor>& tensors() const { return tensors_; }
  Matrix& get(std::string_view name);
  const Matrix& get(std::string_view name) const;
  std::size_t parameter_count() const;
  bool all_finite() const;

 private:
  DenoiserConfig config_;
  std::vector<NamedTensor> tensors_;
  std::uint64_t seed_ = 0;
};

// ---- Standalone building blocks (double precision, no gradients) ----

struct InputMixingWeights {
  Matrix state_w;    // (J*Cx) x L, per-joint state encoders
  Matrix state_b;    // J x L
  Matrix control_w;  // (J*3) x L, per-joint control encoders
  Matrix control_b;  // J x L
  Matrix templ;      // (f*J) x L, learnable joint template
};

/// latent[i*J+j] = M_ij * Es_j(control_ij) + (1 - M_ij) * template_ij + Ex_j(x_ij).
/// x_joint: (f*J) x Cx, control: f x 3J, mask: f x J (binary, else ValidationError).
Matrix input_mixing(const Matrix& x_joint, const Matrix& control, const Matrix& mask, const InputMixingWeights& w);

struct ControlAttentionWeights {
  Matrix emb_q_mask, emb_q_control, emb_v_mask, emb_v_control;  // (f*J) x L each
  Matrix q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;                 // L x L weights, 1 x L biases
  Matrix mix_w;                                                  // J x J
};

/// Mask-mixed query/value embeddings: emb = emb_mask * M + emb_control * (1 - M), per token.
std::pair<Matrix, Matrix> mixed_embeddings(const Matrix& mask, const ControlAttentionWeights& w);

/// Per-joint efficient attention over frames followed by the residual cross-joint mixing:
/// A = EffAttn((x + emb_q) Wq, x Wk, (x + emb_v) Wv) Wo; out = A + mix(A).
Matrix control_attention(const Matrix& latent, const Matrix& mask, const ControlAttentionWeights& w);

// ---- Differentiable graph pieces shared by inference and training ----

/// Rearranges an f x D relative motion into per-joint channel rows ((f*J) x 12).
Matrix pack_joint_channels(const Matrix& rel, int joints);
std::vector<unsigned char> mask_rows(const Matrix& mask);
/// Control targets as (f*J) x 3 rows.
Matrix control_rows(const Matrix& targets, int joints);
Matrix timestep_embedding(int t, int dim);

template <typename T>
std::vector<ad::Var<T>> bind_parameters(ad::Tape<T>& tape, const std::vector<MatrixT<T>>& values, bool trainable);

/// S(x_t, t, c) on a tape. `params` must follow DenoiserWeights::layout order. Returns f x D.
template <typename T>
ad::Var<T> denoise_graph(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& params, const DenoiserConfig& cfg,
                         const Matrix& x_t, int t, const TextCondition& text, const SpatialControl& control);

enum class Precision { F64, F32 };

/// Inference wrapper holding weights in the requested precision. Immutable and shareable across threads.
class Denoiser {
 public:
  explicit Denoiser(const DenoiserWeights& weights, Precision precision = Precision::F64);

  /// x0 estimate for one agent. Throws ValidationError on NaN inputs, bad t or inconsistent shapes.
  Matrix predict(const Matrix& x_t, int t, const TextCondition& text, const SpatialControl& control) const;

  const DenoiserConfig& config() const { return config_; }
  Precision precision() const { return precision_; }

 private:
  DenoiserConfig config_;
  Precision precision_;
  std::vector<MatrixT<double>> f64_;
  std::vector<MatrixT<float>> f32_;
};

Matrix denoise_forward(const DenoiserWeights& weights, const Matrix& x_t, int t, const TextCondition& text,
                       const SpatialControl& control);

void validate_denoiser_inputs(const DenoiserConfig& cfg, const Matrix& x_t, int t, const TextCondition& text,
                              const SpatialControl& control);

}  // namespace cmg
