#include "cmg/denoiser.hpp"

#include <cmath>
#include <random>

namespace cmg {

using ad::Tape;
using ad::Var;

namespace {

constexpr int kChannels = RelativeLayout::kJointChannels;

struct Cursor {
  template <typename T>
  Var<T> next(const std::vector<Var<T>>& v) {
    return v.at(pos++);
  }
  std::size_t pos = 0;
};

}  // namespace

std::vector<std::pair<std::string, std::pair<int, int>>> DenoiserWeights::layout(const DenoiserConfig& c) {
  require(c.frames >= 1 && c.joints >= 2 && c.latent >= 2 && c.blocks >= 1 && c.ffn >= 1 && c.text_dim >= 1,
          "denoiser config: sizes must be positive");
  require(c.latent % 2 == 0, "denoiser config: latent width must be even");
  const int J = c.joints, L = c.latent, N = c.tokens();
  std::vector<std::pair<std::string, std::pair<int, int>>> out = {
      {"enc_x.w", {J * kChannels, L}}, {"enc_x.b", {J, L}},   {"enc_s.w", {J * 3, L}},
      {"enc_s.b", {J, L}},             {"template", {N, L}},  {"emb_q.mask", {N, L}},
      {"emb_q.control", {N, L}},       {"emb_v.mask", {N, L}}, {"emb_v.control", {N, L}},
      {"time.w1", {L, L}},             {"time.b1", {1, L}},   {"time.w2", {L, L}},
      {"time.b2", {1, L}},             {"text.w", {c.text_dim, L}}, {"text.b", {1, L}},
  };
  for (int b = 0; b < c.blocks; ++b) {
    const std::string p = "blocks." + std::to_string(b) + ".";
    out.push_back({p + "ln1.g", {1, L}});
    out.push_back({p + "ln1.b", {1, L}});
    for (const char* n : {"q", "k", "v", "o"}) {
      out.push_back({p + n + ".w", {L, L}});
      out.push_back({p + n + ".b", {1, L}});
    }
    out.push_back({p + "mix.w", {J, J}});
    out.push_back({p + "ln2.g", {1, L}});
    out.push_back({p + "ln2.b", {1, L}});
    out.push_back({p + "ffn.w1", {L, c.ffn}});
    out.push_back({p + "ffn.b1", {1, c.ffn}});
    out.push_back({p + "ffn.w2", {c.ffn, L}});
    out.push_back({p + "ffn.b2", {1, L}});
  }
  out.push_back({"out.ln.g", {1, L}});
  out.push_back({"out.ln.b", {1, L}});
  out.push_back({"out.w", {J * L, kChannels}});
  out.push_back({"out.b", {J, kChannels}});
  return out;
}

DenoiserWeights::DenoiserWeights(DenoiserConfig config, std::vector<NamedTensor> tensors, std::uint64_t seed)
    : config_(config), tensors_(std::move(tensors)), seed_(seed) {
  const auto lay = layout(config_);
  require(lay.size() == tensors_.size(), "denoiser weights: expected " + std::to_string(lay.size()) + " tensors, got " +
                                             std::to_string(tensors_.size()));
  for (std::size_t i = 0; i < lay.size(); ++i) {
    const auto& [name, shape] = lay[i];
    require(tensors_[i].name == name, "denoiser weights: tensor " + std::to_string(i) + " should be '" + name +
                                          "', found '" + tensors_[i].name + "'");
    require(tensors_[i].value.rows() == shape.first && tensors_[i].value.cols() == shape.second,
            "denoiser weights: '" + name + "' has shape " +
                shape_str(tensors_[i].value.rows(), tensors_[i].value.cols()) + ", expected " +
                shape_str(shape.first, shape.second));
  }
}

DenoiserWeights DenoiserWeights::init(const DenoiserConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto fill = [&](Matrix& m, double stddev) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * normal(rng);
  };
  std::vector<NamedTensor> tensors;
  for (const auto& [name, shape] : layout(config)) {
    Matrix m = Matrix::Zero(shape.first, shape.second);
    const auto ends_with = [&](const char* s) {
      const std::string suffix(s);
      return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".g")) {
      m.setOnes();
    } else if (name == "enc_x.w") {
      fill(m, 1.0 / std::sqrt(double(kChannels)));
    } else if (name == "enc_s.w") {
      fill(m, 1.0 / std::sqrt(3.0));
    } else if (name == "out.w") {
      fill(m, 0.1 / std::sqrt(double(config.latent)));
    } else if (name == "template" || name.rfind("emb_", 0) == 0) {
      fill(m, 0.1);
    } else if (ends_with("mix.w")) {
      // stays zero: the residual mixing starts as the identity
    } else if (ends_with(".w") || ends_with(".w1") || ends_with(".w2")) {
      fill(m, 1.0 / std::sqrt(double(shape.first)));
    }
    tensors.push_back({name, std::move(m)});
  }
  return DenoiserWeights(config, std::move(tensors), seed);
}

Matrix& DenoiserWeights::get(std::string_view name) {
  for (auto& t : tensors_) {
    if (t.name == name) return t.value;
  }
  throw ValidationError("denoiser weights: no tensor named '" + std::string(name) + "'");
}

const Matrix& DenoiserWeights::get(std::string_view name) const {
  return const_cast<DenoiserWeights*>(this)->get(name);
}

std::size_t DenoiserWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

bool DenoiserWeights::all_finite() const {
  for (const auto& t : tensors_) {
    if (!t.value.allFinite()) return false;
  }
  return true;
}

// ---- shared helpers ----

Matrix pack_joint_channels(const Matrix& rel, int joints) {
  const RelativeLayout lay(joints);
  require(rel.cols() == lay.D, "pack_joint_channels: expected " + std::to_string(lay.D) + " columns, got " +
                                   std::to_string(rel.cols()));
  const auto map = lay.joint_channel_map();
  Matrix out = Matrix::Zero(rel.rows() * joints, kChannels);
  for (Eigen::Index i = 0; i < rel.rows(); ++i) {
    for (int j = 0; j < joints; ++j) {
      for (int c = 0; c < kChannels; ++c) {
        const int col = map[j * kChannels + c];
        if (col >= 0) out(i * joints + j, c) = rel(i, col);
      }
    }
  }
  return out;
}

std::vector<unsigned char> mask_rows(const Matrix& mask) {
  std::vector<unsigned char> out(static_cast<std::size_t>(mask.size()));
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const double m = mask.data()[i];
    if (m != 0.0 && m != 1.0) throw ValidationError("control mask entries must be 0 or 1");
    out[i] = m == 1.0 ? 1 : 0;
  }
  return out;
}

Matrix control_rows(const Matrix& targets, int joints) {
  require(targets.cols() == 3 * joints, "control targets: expected " + std::to_string(3 * joints) + " columns");
  return Eigen::Map<const Matrix>(targets.data(), targets.rows() * joints, 3);
}

Matrix timestep_embedding(int t, int dim) {
  require(dim % 2 == 0, "timestep embedding: dimension must be even");
  const int half = dim / 2;
  Matrix e(1, dim);
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    e(0, k) = std::sin(t * freq);
    e(0, k + half) = std::cos(t * freq);
  }
  return e;
}

namespace {

// Zero the targets at uncontrolled entries so arbitrary (even non-finite) values there cannot
// reach the encoder or its gradient.
Matrix masked_control_rows(const Matrix& targets, const std::vector<unsigned char>& rows, int joints) {
  Matrix c = control_rows(targets, joints);
  for (Eigen::Index r = 0; r < c.rows(); ++r) {
    if (!rows[r]) c.row(r).setZero();
  }
  return c;
}

template <typename T>
Var<T> input_mixing_graph(Var<T> x_joint, Var<T> control, const std::vector<unsigned char>& rows, Var<T> state_w,
                          Var<T> state_b, Var<T> control_w, Var<T> control_b, Var<T> templ, int J) {
  Var<T> enc_s = ad::per_joint_linear(control, control_w, control_b, J);
  Var<T> gated = ad::select_rows(enc_s, templ, rows);
  return ad::add(gated, ad::per_joint_linear(x_joint, state_w, state_b, J));
}

template <typename T>
struct AttentionVars {
  Var<T> q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b, mix_w;
};

template <typename T>
Var<T> control_attention_graph(Var<T> x, Var<T> emb_q, Var<T> emb_v, const AttentionVars<T>& p, int J) {
  Var<T> q = ad::add_row(ad::matmul(ad::add(x, emb_q), p.q_w), p.q_b);
  Var<T> k = ad::add_row(ad::matmul(x, p.k_w), p.k_b);
  Var<T> v = ad::add_row(ad::matmul(ad::add(x, emb_v), p.v_w), p.v_b);
  Var<T> a = ad::add_row(ad::matmul(ad::efficient_attention(q, k, v, J), p.o_w), p.o_b);
  return ad::add(a, ad::joint_mix(a, p.mix_w, J));
}

template <typename T>
MatrixT<T> to_t(const Matrix& m) {
  return m.template cast<T>();
}

}  // namespace

Matrix input_mixing(const Matrix& x_joint, const Matrix& control, const Matrix& mask, const InputMixingWeights& w) {
  const int J = static_cast<int>(mask.cols());
  const int f = static_cast<int>(mask.rows());
  require(J >= 1 && f >= 1, "input_mixing: empty mask");
  require(x_joint.rows() == f * J, "input_mixing: x rows must equal f*J");
  require(control.rows() == f && control.cols() == 3 * J, "input_mixing: control must be f x 3J");
  require(w.templ.rows() == f * J, "input_mixing: template rows must equal f*J");
  const auto rows = mask_rows(mask);
  Tape<double> tape(false);
  Var<double> out = input_mixing_graph<double>(
      tape.constant(x_joint), tape.constant(masked_control_rows(control, rows, J)), rows, tape.constant(w.state_w),
      tape.constant(w.state_b), tape.constant(w.control_w), tape.constant(w.control_b), tape.constant(w.templ), J);
  return out.value();
}

std::pair<Matrix, Matrix> mixed_embeddings(const Matrix& mask, const ControlAttentionWeights& w) {
  const auto rows = mask_rows(mask);
  Tape<double> tape(false);
  Var<double> q = ad::select_rows(tape.constant(w.emb_q_mask), tape.constant(w.emb_q_control), rows);
  Var<double> v = ad::select_rows(tape.constant(w.emb_v_mask), tape.constant(w.emb_v_control), rows);
  return {q.value(), v.value()};
}

Matrix control_attention(const Matrix& latent, const Matrix& mask, const ControlAttentionWeights& w) {
  const int J = static_cast<int>(mask.cols());
  require(latent.rows() == mask.size(), "control_attention: latent rows must equal f*J");
  const auto rows = mask_rows(mask);
  Tape<double> tape(false);
  const auto c = [&](const Matrix& m) { return tape.constant(m); };
  Var<double> emb_q = ad::select_rows(c(w.emb_q_mask), c(w.emb_q_control), rows);
  Var<double> emb_v = ad::select_rows(c(w.emb_v_mask), c(w.emb_v_control), rows);
  AttentionVars<double> p{c(w.q_w), c(w.q_b), c(w.k_w), c(w.k_b), c(w.v_w), c(w.v_b), c(w.o_w), c(w.o_b), c(w.mix_w)};
  return control_attention_graph<double>(c(latent), emb_q, emb_v, p, J).value();
}

template <typename T>
std::vector<Var<T>> bind_parameters(Tape<T>& tape, const std::vector<MatrixT<T>>& values, bool trainable) {
  std::vector<Var<T>> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(trainable ? tape.parameter(v) : tape.constant(v));
  return out;
}

void validate_denoiser_inputs(const DenoiserConfig& cfg, const Matrix& x_t, int t, const TextCondition& text,
                              const SpatialControl& control) {
  require(x_t.rows() == cfg.frames && x_t.cols() == cfg.D(),
          "denoiser: x_t has shape " + shape_str(x_t.rows(), x_t.cols()) + ", expected " +
              shape_str(cfg.frames, cfg.D()));
  require(x_t.allFinite(), "denoiser: x_t contains NaN or Inf");
  require(t >= 0 && t < cfg.T, "denoiser: timestep " + std::to_string(t) + " outside [0, " + std::to_string(cfg.T) + ")");
  require(static_cast<int>(text.embedding.size()) == cfg.text_dim,
          "denoiser: text embedding has dimension " + std::to_string(text.embedding.size()) + ", expected " +
              std::to_string(cfg.text_dim));
  for (double v : text.embedding) require(std::isfinite(v), "denoiser: text embedding contains NaN or Inf");
  require(control.frames() == cfg.frames && control.joints() == cfg.joints,
          "denoiser: control mask has shape " + shape_str(control.mask.rows(), control.mask.cols()) + ", expected " +
              shape_str(cfg.frames, cfg.joints));
  control.validate();
}

template <typename T>
Var<T> denoise_graph(Tape<T>& tape, const std::vector<Var<T>>& params, const DenoiserConfig& cfg, const Matrix& x_t,
                     int t, const TextCondition& text, const SpatialControl& control) {
  const int J = cfg.joints, L = cfg.latent;
  Cursor cur;
  const auto next = [&] { return cur.next(params); };
  const auto rows = mask_rows(control.mask);

  Var<T> x_joint = tape.constant(to_t<T>(pack_joint_channels(x_t, J)));
  Var<T> ctrl = tape.constant(to_t<T>(masked_control_rows(control.targets, rows, J)));
  Var<T> enc_x_w = next(), enc_x_b = next(), enc_s_w = next(), enc_s_b = next(), templ = next();
  Var<T> h = input_mixing_graph<T>(x_joint, ctrl, rows, enc_x_w, enc_x_b, enc_s_w, enc_s_b, templ, J);

  Var<T> emb_q_mask = next(), emb_q_control = next(), emb_v_mask = next(), emb_v_control = next();
  Var<T> emb_q = ad::select_rows(emb_q_mask, emb_q_control, rows);
  Var<T> emb_v = ad::select_rows(emb_v_mask, emb_v_control, rows);

  Var<T> tw1 = next(), tb1 = next(), tw2 = next(), tb2 = next();
  Var<T> temb = tape.constant(to_t<T>(timestep_embedding(t, L)));
  temb = ad::add_row(ad::matmul(ad::silu(ad::add_row(ad::matmul(temb, tw1), tb1)), tw2), tb2);
  Var<T> xw = next(), xb = next();
  Matrix text_row = Eigen::Map<const Matrix>(text.embedding.data(), 1, static_cast<Eigen::Index>(text.embedding.size()));
  if (text.null_flag) text_row.setZero();
  Var<T> cond = ad::add(temb, ad::add_row(ad::matmul(tape.constant(to_t<T>(text_row)), xw), xb));
  h = ad::add_row(h, cond);

  for (int b = 0; b < cfg.blocks; ++b) {
    Var<T> g1 = next(), b1 = next();
    AttentionVars<T> p;
    p.q_w = next(), p.q_b = next(), p.k_w = next(), p.k_b = next();
    p.v_w = next(), p.v_b = next(), p.o_w = next(), p.o_b = next();
    p.mix_w = next();
    Var<T> g2 = next(), b2 = next();
    Var<T> fw1 = next(), fb1 = next(), fw2 = next(), fb2 = next();
    h = ad::add(h, control_attention_graph<T>(ad::layer_norm(h, g1, b1), emb_q, emb_v, p, J));
    Var<T> ff = ad::add_row(ad::matmul(ad::layer_norm(h, g2, b2), fw1), fb1);
    h = ad::add(h, ad::add_row(ad::matmul(ad::silu(ff), fw2), fb2));
  }
  Var<T> og = next(), ob = next(), ow = next(), obias = next();
  require(cur.pos == params.size(), "denoiser: parameter list does not match the layout");
  Var<T> packed = ad::per_joint_linear(ad::layer_norm(h, og, ob), ow, obias, J);
  return ad::unpack_joint_channels(packed, RelativeLayout(J).joint_channel_map(), J, cfg.D());
}

template std::vector<Var<double>> bind_parameters(Tape<double>&, const std::vector<MatrixT<double>>&, bool);
template std::vector<Var<float>> bind_parameters(Tape<float>&, const std::vector<MatrixT<float>>&, bool);
template Var<double> denoise_graph(Tape<double>&, const std::vector<Var<double>>&, const DenoiserConfig&, const Matrix&,
                                   int, const TextCondition&, const SpatialControl&);
template Var<float> denoise_graph(Tape<float>&, const std::vector<Var<float>>&, const DenoiserConfig&, const Matrix&,
                                  int, const TextCondition&, const SpatialControl&);

Denoiser::Denoiser(const DenoiserWeights& weights, Precision precision)
    : config_(weights.config()), precision_(precision) {
  require(weights.all_finite(), "denoiser: weights contain NaN or Inf");
  for (const auto& t : weights.tensors()) {
    if (precision == Precision::F64) {
      f64_.push_back(t.value);
    } else {
      f32_.push_back(t.value.cast<float>());
    }
  }
}

Matrix Denoiser::predict(const Matrix& x_t, int t, const TextCondition& text, const SpatialControl& control) const {
  validate_denoiser_inputs(config_, x_t, t, text, control);
  if (precision_ == Precision::F64) {
    Tape<double> tape(false);
    auto params = bind_parameters(tape, f64_, false);
    return denoise_graph(tape, params, config_, x_t, t, text, control).value();
  }
  Tape<float> tape(false);
  auto params = bind_parameters(tape, f32_, false);
  return denoise_graph(tape, params, config_, x_t, t, text, control).value().cast<double>();
}

Matrix denoise_forward(const DenoiserWeights& weights, const Matrix& x_t, int t, const TextCondition& text,
                       const SpatialControl& control) {
  return Denoiser(weights).predict(x_t, t, text, control);
}

}  // namespace cmg
