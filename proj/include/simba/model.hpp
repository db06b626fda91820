#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simba/dataset.hpp"
#include "simba/heatmap.hpp"

namespace simba {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

struct BackboneConfig {
  int in_channels = 2;
  std::vector<int> stage_channels{16, 32, 64, 64};
  int kernel = 3;
  int stride = 2;

  int feature_dim() const { return stage_channels.empty() ? in_channels : stage_channels.back(); }
  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

/// Ablation switches.
struct ModelFlags {
  bool use_gender = true;
  bool use_chrono = true;
  bool use_relative = true;
  friend bool operator==(const ModelFlags&, const ModelFlags&) = default;
};

struct ModelConfig {
  BackboneConfig backbone;
  int hidden = 64;
  ModelFlags flags;
  int image_size = 64;
  int keypoint_count = kDefaultKeypointCount;
  double heatmap_sigma = 4.0;
  /// Months per normalized unit for both the chronological-age input and the head output.
  double age_scale = 240.0;

  int marker_count() const { return int{flags.use_gender} + int{flags.use_chrono}; }
  int fused_width() const { return backbone.feature_dim() + marker_count(); }
  /// Spatial side length after every backbone stage.
  std::vector<int> stage_sizes() const;

  /// Throws std::invalid_argument.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParamInfo {
  std::string name;
  std::vector<std::int64_t> shape;
};

/// All learnable tensors. Conv weights are (out, kernel_y * kernel_x * in) with
/// the input channel fastest, matching the im2col row order.
template <typename T>
struct Parameters {
  std::vector<Matrix<T>> conv_weight;
  std::vector<Matrix<T>> conv_bias;
  Matrix<T> m_g;  // 1x1
  Matrix<T> m_c;  // 1x1
  Matrix<T> w1, b1;
  Matrix<T> w2, b2;
  Matrix<T> w3, b3;

  /// Visits every tensor in a fixed order: f(ParamInfo, Matrix<T>&).
  template <typename F>
  void for_each(int kernel, F&& f) {
    for_each_impl(*this, kernel, f);
  }
  template <typename F>
  void for_each(int kernel, F&& f) const {
    for_each_impl(*this, kernel, f);
  }

  Parameters zeros_like() const {
    Parameters z = *this;
    z.for_each(1, [](const ParamInfo&, Matrix<T>& m) { m.setZero(); });
    return z;
  }

  template <typename U>
  Parameters<U> cast() const {
    Parameters<U> out;
    for (const auto& m : conv_weight) out.conv_weight.push_back(m.template cast<U>());
    for (const auto& m : conv_bias) out.conv_bias.push_back(m.template cast<U>());
    out.m_g = m_g.template cast<U>();
    out.m_c = m_c.template cast<U>();
    out.w1 = w1.template cast<U>();
    out.b1 = b1.template cast<U>();
    out.w2 = w2.template cast<U>();
    out.b2 = b2.template cast<U>();
    out.w3 = w3.template cast<U>();
    out.b3 = b3.template cast<U>();
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for_each(1, [&](const ParamInfo&, const Matrix<T>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

 private:
  template <typename Self, typename F>
  static void for_each_impl(Self& self, int kernel, F& f) {
    auto mat = [](auto& m) { return std::vector<std::int64_t>{m.rows(), m.cols()}; };
    for (std::size_t s = 0; s < self.conv_weight.size(); ++s) {
      auto& w = self.conv_weight[s];
      const std::int64_t in = w.cols() / (kernel * kernel);
      const std::string prefix = "backbone.conv" + std::to_string(s);
      f(ParamInfo{prefix + ".weight", {w.rows(), kernel, kernel, in}}, w);
      f(ParamInfo{prefix + ".bias", {self.conv_bias[s].rows()}}, self.conv_bias[s]);
    }
    f(ParamInfo{"head.m_g", {1}}, self.m_g);
    f(ParamInfo{"head.m_c", {1}}, self.m_c);
    f(ParamInfo{"head.dense1.weight", mat(self.w1)}, self.w1);
    f(ParamInfo{"head.dense1.bias", {self.b1.rows()}}, self.b1);
    f(ParamInfo{"head.dense2.weight", mat(self.w2)}, self.w2);
    f(ParamInfo{"head.dense2.bias", {self.b2.rows()}}, self.b2);
    f(ParamInfo{"head.out.weight", mat(self.w3)}, self.w3);
    f(ParamInfo{"head.out.bias", {self.b3.rows()}}, self.b3);
  }
};

/// A batch of N samples. `input` is in_channels x (N * H * W); column n*H*W + y*W + x.
template <typename T>
struct BatchInput {
  Matrix<T> input;
  std::vector<T> gender;       // 0 or 1
  std::vector<T> chrono_norm;  // c / age_scale
  int size() const { return static_cast<int>(gender.size()); }
};

/// Intermediate values kept for the backward pass.
template <typename T>
struct ForwardCache {
  int batch = 0;
  std::vector<Matrix<T>> cols;  // im2col of each stage input
  std::vector<Matrix<T>> pre;   // stage pre-activations
  Matrix<T> features;           // F x N
  Matrix<T> fused;              // (F + markers) x N
  Matrix<T> z1, a1, z2, a2;
  Matrix<T> output;  // 1 x N, normalized units
};

struct StepContext {
  int epoch = 0;
  long step = 0;
};

/// Appends m_g * g and m_c * c_norm below the visual features, per enabled flag.
template <typename T>
Matrix<T> fuse_markers(const Matrix<T>& features, T m_g, T m_c, std::span<const T> gender,
                       std::span<const T> chrono_norm, const ModelFlags& flags);

template <typename T>
class BasicSimbaModel {
 public:
  /// Fan-in scaled uniform weights, zero biases, unit multipliers, all from `seed`.
  BasicSimbaModel(ModelConfig config, std::uint64_t seed);
  BasicSimbaModel(ModelConfig config, Parameters<T> params);

  const ModelConfig& config() const { return config_; }
  const Parameters<T>& parameters() const { return params_; }
  Parameters<T>& parameters() { return params_; }

  template <typename U>
  BasicSimbaModel<U> cast() const {
    return BasicSimbaModel<U>(config_, params_.template cast<U>());
  }

  /// F x N pooled features. Throws DimensionMismatch if the input has the wrong shape.
  Matrix<T> extract_features(const Matrix<T>& input, int batch, ForwardCache<T>* cache = nullptr) const;
  /// 1 x N head output in normalized units, from the fused representation.
  Matrix<T> head_forward(const Matrix<T>& fused, ForwardCache<T>* cache = nullptr) const;
  /// Full forward pass; returns 1 x N normalized outputs.
  Matrix<T> forward(const BatchInput<T>& batch, ForwardCache<T>* cache = nullptr) const;

  /// Reverse-mode gradients given dLoss/dOutput (1 x N). Throws NonFiniteGradient.
  Parameters<T> backward(const ForwardCache<T>& cache, const Matrix<T>& d_output, const BatchInput<T>& batch,
                         StepContext ctx = {}) const;
  /// Gradients of the head only, with features held fixed.
  Parameters<T> head_backward(const ForwardCache<T>& cache, const Matrix<T>& d_output, const BatchInput<T>& batch,
                              Matrix<T>* d_features = nullptr) const;

 private:
  ModelConfig config_;
  Parameters<T> params_;
};

using SimbaModel = BasicSimbaModel<float>;

/// One sample as the model consumes it.
struct ModelSample {
  TwoChannelRaster raster;
  Gender gender = Gender::male;
  std::optional<double> chronological_age_months;
};

/// Mean |output - target| and its gradient.
template <typename T>
struct LossResult {
  T value{};
  Matrix<T> d_output;
};

template <typename T>
LossResult<T> l1_loss(const Matrix<T>& output, std::span<const T> target);

/// Packs samples into a batch. Throws DimensionMismatch, MissingChronologicalAge.
template <typename T>
BatchInput<T> make_batch(const ModelConfig& config, std::span<const ModelSample> samples);

/// Residual c - b in months (or b directly for a non-relative head).
template <typename T>
double predict_residual(const BasicSimbaModel<T>& model, const ModelSample& sample);

/// Inverts the residual through c when the head is relative.
double bone_age_from_output(double output_months, std::optional<double> chronological_age_months,
                            const ModelFlags& flags);

template <typename T>
double predict_bone_age(const BasicSimbaModel<T>& model, const ModelSample& sample);

/// Training target in normalized units for one record.
double training_target(const ModelConfig& config, double chronological_age_months, double bone_age_months);

/// Builds a model sample from a record and its decoded image.
ModelSample make_model_sample(const ModelConfig& config, const PatientRecord& record, const GrayImage& image);

}  // namespace simba
