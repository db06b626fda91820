#include "simba/model.hpp"

#include <cmath>
#include <stdexcept>

#include "simba/errors.hpp"
#include "simba/random.hpp"

namespace simba {

std::vector<int> ModelConfig::stage_sizes() const {
  std::vector<int> sizes;
  int s = image_size;
  const int pad = backbone.kernel / 2;
  for (std::size_t i = 0; i < backbone.stage_channels.size(); ++i) {
    s = (s + 2 * pad - backbone.kernel) / backbone.stride + 1;
    sizes.push_back(s);
  }
  return sizes;
}

void ModelConfig::validate() const {
  if (backbone.in_channels != 2) throw std::invalid_argument("backbone expects 2 input channels");
  if (backbone.kernel < 1 || backbone.kernel % 2 == 0) throw std::invalid_argument("kernel must be odd");
  if (backbone.stride < 1) throw std::invalid_argument("stride must be positive");
  for (int c : backbone.stage_channels)
    if (c < 1) throw std::invalid_argument("stage channels must be positive");
  if (hidden < 1) throw std::invalid_argument("hidden width must be positive");
  if (image_size < 1) throw std::invalid_argument("image_size must be positive");
  if (keypoint_count < 1) throw std::invalid_argument("keypoint_count must be positive");
  if (!(heatmap_sigma > 0.0)) throw std::invalid_argument("heatmap_sigma must be positive");
  if (!(age_scale > 0.0)) throw std::invalid_argument("age_scale must be positive");
  for (int s : stage_sizes())
    if (s < 1) throw std::invalid_argument("image_size too small for the backbone depth");
}

namespace {

/// Rows ordered (ky, kx, c) with c fastest; columns (n, oy, ox).
template <typename T>
void im2col(const Matrix<T>& in, int batch, int size, int kernel, int stride, int out_size, Matrix<T>& col) {
  const int channels = static_cast<int>(in.rows());
  const int pad = kernel / 2;
  const Eigen::Index in_plane = static_cast<Eigen::Index>(size) * size;
  const Eigen::Index out_plane = static_cast<Eigen::Index>(out_size) * out_size;
  col.resize(static_cast<Eigen::Index>(channels) * kernel * kernel, batch * out_plane);
  for (int n = 0; n < batch; ++n) {
    for (int oy = 0; oy < out_size; ++oy) {
      for (int ox = 0; ox < out_size; ++ox) {
        T* dst = col.col(n * out_plane + oy * out_size + ox).data();
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          for (int kx = 0; kx < kernel; ++kx, dst += channels) {
            const int ix = ox * stride - pad + kx;
            if (iy < 0 || iy >= size || ix < 0 || ix >= size) {
              std::fill(dst, dst + channels, T(0));
            } else {
              const T* src = in.col(n * in_plane + iy * size + ix).data();
              std::copy(src, src + channels, dst);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const Matrix<T>& col, int batch, int size, int kernel, int stride, int out_size, int channels,
            Matrix<T>& out) {
  const int pad = kernel / 2;
  const Eigen::Index in_plane = static_cast<Eigen::Index>(size) * size;
  const Eigen::Index out_plane = static_cast<Eigen::Index>(out_size) * out_size;
  out.setZero(channels, batch * in_plane);
  for (int n = 0; n < batch; ++n) {
    for (int oy = 0; oy < out_size; ++oy) {
      for (int ox = 0; ox < out_size; ++ox) {
        const T* src = col.col(n * out_plane + oy * out_size + ox).data();
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          for (int kx = 0; kx < kernel; ++kx, src += channels) {
            const int ix = ox * stride - pad + kx;
            if (iy < 0 || iy >= size || ix < 0 || ix >= size) continue;
            T* dst = out.col(n * in_plane + iy * size + ix).data();
            for (int c = 0; c < channels; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

template <typename T>
Matrix<T> relu(const Matrix<T>& z) {
  return z.cwiseMax(T(0));
}

template <typename T>
Matrix<T> relu_backward(const Matrix<T>& grad, const Matrix<T>& pre) {
  return (pre.array() > T(0)).select(grad, T(0));
}

template <typename T>
Matrix<T> uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  Matrix<T> m(rows, cols);
  // Row-major fill so the draw order matches the serialized layout.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<T>(rng.uniform(-bound, bound));
  return m;
}

template <typename T>
void check_finite(const Parameters<T>& grads, int kernel, StepContext ctx) {
  grads.for_each(kernel, [&](const ParamInfo& info, const Matrix<T>& g) {
    if (!g.allFinite()) throw NonFiniteGradient(ctx.epoch, ctx.step, info.name);
  });
}

}  // namespace

template <typename T>
Matrix<T> fuse_markers(const Matrix<T>& features, T m_g, T m_c, std::span<const T> gender,
                       std::span<const T> chrono_norm, const ModelFlags& flags) {
  const Eigen::Index n = features.cols();
  const Eigen::Index f = features.rows();
  const int markers = int{flags.use_gender} + int{flags.use_chrono};
  Matrix<T> fused(f + markers, n);
  fused.topRows(f) = features;
  Eigen::Index row = f;
  if (flags.use_gender) {
    if (static_cast<Eigen::Index>(gender.size()) != n) throw DimensionMismatch("gender count != batch size");
    for (Eigen::Index i = 0; i < n; ++i) fused(row, i) = m_g * gender[i];
    ++row;
  }
  if (flags.use_chrono) {
    if (static_cast<Eigen::Index>(chrono_norm.size()) != n)
      throw DimensionMismatch("chronological age count != batch size");
    for (Eigen::Index i = 0; i < n; ++i) fused(row, i) = m_c * chrono_norm[i];
  }
  return fused;
}

template <typename T>
BasicSimbaModel<T>::BasicSimbaModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(mix_seed(seed));
  const auto& bb = config_.backbone;
  int in = bb.in_channels;
  for (int out : bb.stage_channels) {
    const int fan_in = in * bb.kernel * bb.kernel;
    params_.conv_weight.push_back(uniform_matrix<T>(rng, out, fan_in, std::sqrt(6.0 / fan_in)));
    params_.conv_bias.push_back(Matrix<T>::Zero(out, 1));
    in = out;
  }
  params_.m_g = Matrix<T>::Constant(1, 1, T(1));
  params_.m_c = Matrix<T>::Constant(1, 1, T(1));
  const int fused = config_.fused_width();
  const int h = config_.hidden;
  params_.w1 = uniform_matrix<T>(rng, h, fused, std::sqrt(6.0 / fused));
  params_.b1 = Matrix<T>::Zero(h, 1);
  params_.w2 = uniform_matrix<T>(rng, h, h, std::sqrt(6.0 / h));
  params_.b2 = Matrix<T>::Zero(h, 1);
  params_.w3 = uniform_matrix<T>(rng, 1, h, std::sqrt(6.0 / h));
  params_.b3 = Matrix<T>::Zero(1, 1);
}

template <typename T>
BasicSimbaModel<T>::BasicSimbaModel(ModelConfig config, Parameters<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const auto& bb = config_.backbone;
  auto mismatch = [](const std::string& what) { throw DimensionMismatch("parameter shape mismatch: " + what); };
  if (params_.conv_weight.size() != bb.stage_channels.size() || params_.conv_bias.size() != bb.stage_channels.size())
    mismatch("backbone stage count");
  int in = bb.in_channels;
  for (std::size_t s = 0; s < bb.stage_channels.size(); ++s) {
    const int out = bb.stage_channels[s];
    if (params_.conv_weight[s].rows() != out || params_.conv_weight[s].cols() != in * bb.kernel * bb.kernel)
      mismatch("backbone.conv" + std::to_string(s) + ".weight");
    if (params_.conv_bias[s].rows() != out || params_.conv_bias[s].cols() != 1)
      mismatch("backbone.conv" + std::to_string(s) + ".bias");
    in = out;
  }
  const int h = config_.hidden;
  if (params_.m_g.size() != 1 || params_.m_c.size() != 1) mismatch("multipliers");
  if (params_.w1.rows() != h || params_.w1.cols() != config_.fused_width()) mismatch("head.dense1.weight");
  if (params_.b1.rows() != h || params_.b1.cols() != 1) mismatch("head.dense1.bias");
  if (params_.w2.rows() != h || params_.w2.cols() != h) mismatch("head.dense2.weight");
  if (params_.b2.rows() != h || params_.b2.cols() != 1) mismatch("head.dense2.bias");
  if (params_.w3.rows() != 1 || params_.w3.cols() != h) mismatch("head.out.weight");
  if (params_.b3.size() != 1) mismatch("head.out.bias");
}

template <typename T>
Matrix<T> BasicSimbaModel<T>::extract_features(const Matrix<T>& input, int batch, ForwardCache<T>* cache) const {
  const auto& bb = config_.backbone;
  const Eigen::Index plane = static_cast<Eigen::Index>(config_.image_size) * config_.image_size;
  if (input.rows() != bb.in_channels || input.cols() != batch * plane)
    throw DimensionMismatch("backbone input must be " + std::to_string(bb.in_channels) + " x " +
                            std::to_string(batch * plane) + ", got " + std::to_string(input.rows()) + " x " +
                            std::to_string(input.cols()));

  const auto sizes = config_.stage_sizes();
  Matrix<T> act = input;
  Matrix<T> col;
  int size = config_.image_size;
  if (cache) {
    cache->batch = batch;
    cache->cols.resize(sizes.size());
    cache->pre.resize(sizes.size());
  }
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    im2col(act, batch, size, bb.kernel, bb.stride, sizes[s], col);
    Matrix<T> pre(params_.conv_weight[s].rows(), col.cols());
    pre.noalias() = params_.conv_weight[s] * col;
    pre.colwise() += params_.conv_bias[s].col(0);
    act = relu(pre);
    if (cache) {
      cache->cols[s] = std::move(col);
      cache->pre[s] = std::move(pre);
    }
    size = sizes[s];
  }

  const Eigen::Index out_plane = static_cast<Eigen::Index>(size) * size;
  Matrix<T> features(act.rows(), batch);
  for (int n = 0; n < batch; ++n)
    features.col(n) = act.middleCols(n * out_plane, out_plane).rowwise().sum() / static_cast<T>(out_plane);
  if (cache) cache->features = features;
  return features;
}

template <typename T>
Matrix<T> BasicSimbaModel<T>::head_forward(const Matrix<T>& fused, ForwardCache<T>* cache) const {
  if (fused.rows() != config_.fused_width())
    throw DimensionMismatch("fused width " + std::to_string(fused.rows()) + " != " +
                            std::to_string(config_.fused_width()));
  Matrix<T> z1 = params_.w1 * fused;
  z1.colwise() += params_.b1.col(0);
  Matrix<T> a1 = relu(z1);
  Matrix<T> z2 = params_.w2 * a1;
  z2.colwise() += params_.b2.col(0);
  Matrix<T> a2 = relu(z2);
  Matrix<T> out = params_.w3 * a2;
  out.array() += params_.b3(0, 0);
  if (cache) {
    cache->fused = fused;
    cache->z1 = std::move(z1);
    cache->a1 = std::move(a1);
    cache->z2 = std::move(z2);
    cache->a2 = std::move(a2);
    cache->output = out;
  }
  return out;
}

template <typename T>
Matrix<T> BasicSimbaModel<T>::forward(const BatchInput<T>& batch, ForwardCache<T>* cache) const {
  const Matrix<T> features = extract_features(batch.input, batch.size(), cache);
  const Matrix<T> fused = fuse_markers<T>(features, params_.m_g(0, 0), params_.m_c(0, 0), batch.gender,
                                          batch.chrono_norm, config_.flags);
  return head_forward(fused, cache);
}

template <typename T>
Parameters<T> BasicSimbaModel<T>::head_backward(const ForwardCache<T>& cache, const Matrix<T>& d_output,
                                                const BatchInput<T>& batch, Matrix<T>* d_features) const {
  Parameters<T> g = params_.zeros_like();
  if (d_output.rows() != 1 || d_output.cols() != cache.output.cols())
    throw DimensionMismatch("d_output must be 1 x batch");

  g.w3.noalias() = d_output * cache.a2.transpose();
  g.b3(0, 0) = d_output.sum();
  const Matrix<T> dz2 = relu_backward<T>(params_.w3.transpose() * d_output, cache.z2);
  g.w2.noalias() = dz2 * cache.a1.transpose();
  g.b2 = dz2.rowwise().sum();
  const Matrix<T> dz1 = relu_backward<T>(params_.w2.transpose() * dz2, cache.z1);
  g.w1.noalias() = dz1 * cache.fused.transpose();
  g.b1 = dz1.rowwise().sum();
  const Matrix<T> d_fused = params_.w1.transpose() * dz1;

  const Eigen::Index f = config_.backbone.feature_dim();
  Eigen::Index row = f;
  if (config_.flags.use_gender) {
    T acc(0);
    for (Eigen::Index i = 0; i < d_fused.cols(); ++i) acc += batch.gender[i] * d_fused(row, i);
    g.m_g(0, 0) = acc;
    ++row;
  }
  if (config_.flags.use_chrono) {
    T acc(0);
    for (Eigen::Index i = 0; i < d_fused.cols(); ++i) acc += batch.chrono_norm[i] * d_fused(row, i);
    g.m_c(0, 0) = acc;
  }
  if (d_features) *d_features = d_fused.topRows(f);
  return g;
}

template <typename T>
Parameters<T> BasicSimbaModel<T>::backward(const ForwardCache<T>& cache, const Matrix<T>& d_output,
                                           const BatchInput<T>& batch, StepContext ctx) const {
  Matrix<T> d_features;
  Parameters<T> g = head_backward(cache, d_output, batch, &d_features);

  const auto& bb = config_.backbone;
  const auto sizes = config_.stage_sizes();
  const int stages = static_cast<int>(sizes.size());
  const int n = cache.batch;
  const Eigen::Index last_plane = static_cast<Eigen::Index>(sizes.back()) * sizes.back();

  // Mean pooling spreads each feature gradient evenly over its plane.
  Matrix<T> d_act(d_features.rows(), n * last_plane);
  for (int i = 0; i < n; ++i)
    d_act.middleCols(i * last_plane, last_plane).colwise() = d_features.col(i) / static_cast<T>(last_plane);

  for (int s = stages - 1; s >= 0; --s) {
    const Matrix<T> d_pre = relu_backward<T>(d_act, cache.pre[s]);
    g.conv_weight[s].noalias() = d_pre * cache.cols[s].transpose();
    g.conv_bias[s] = d_pre.rowwise().sum();
    if (s > 0) {
      const Matrix<T> d_col = params_.conv_weight[s].transpose() * d_pre;
      col2im(d_col, n, sizes[s - 1], bb.kernel, bb.stride, sizes[s], bb.stage_channels[s - 1], d_act);
    }
  }
  check_finite(g, bb.kernel, ctx);
  return g;
}

template <typename T>
LossResult<T> l1_loss(const Matrix<T>& output, std::span<const T> target) {
  const Eigen::Index n = output.cols();
  if (output.rows() != 1 || static_cast<Eigen::Index>(target.size()) != n)
    throw DimensionMismatch("loss target count != batch size");
  LossResult<T> r;
  r.d_output.resize(1, n);
  T total(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T diff = output(0, i) - target[i];
    total += std::abs(diff);
    r.d_output(0, i) = (diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0))) / static_cast<T>(n);
  }
  r.value = total / static_cast<T>(n);
  return r;
}

template <typename T>
BatchInput<T> make_batch(const ModelConfig& config, std::span<const ModelSample> samples) {
  const int n = static_cast<int>(samples.size());
  const Eigen::Index plane = static_cast<Eigen::Index>(config.image_size) * config.image_size;
  BatchInput<T> b;
  b.input.resize(2, n * plane);
  b.gender.resize(n);
  b.chrono_norm.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& s = samples[i];
    if (s.raster.width != config.image_size || s.raster.height != config.image_size ||
        s.raster.data.size() != static_cast<std::size_t>(2 * plane))
      throw DimensionMismatch("sample raster does not match image_size " + std::to_string(config.image_size));
    for (Eigen::Index p = 0; p < plane; ++p) {
      b.input(0, i * plane + p) = static_cast<T>(s.raster.data[p]);
      b.input(1, i * plane + p) = static_cast<T>(s.raster.data[plane + p]);
    }
    b.gender[i] = static_cast<T>(gender_value(s.gender));
    if (s.chronological_age_months) {
      b.chrono_norm[i] = static_cast<T>(*s.chronological_age_months / config.age_scale);
    } else if (config.flags.use_chrono || config.flags.use_relative) {
      throw MissingChronologicalAge("sample lacks a chronological age required by this model");
    } else {
      b.chrono_norm[i] = T(0);
    }
  }
  return b;
}

template <typename T>
double predict_residual(const BasicSimbaModel<T>& model, const ModelSample& sample) {
  const auto batch = make_batch<T>(model.config(), std::span<const ModelSample>(&sample, 1));
  const Matrix<T> out = model.forward(batch);
  return static_cast<double>(out(0, 0)) * model.config().age_scale;
}

double bone_age_from_output(double output_months, std::optional<double> chronological_age_months,
                            const ModelFlags& flags) {
  if (!flags.use_relative) return output_months;
  if (!chronological_age_months)
    throw MissingChronologicalAge("relative head needs a chronological age to recover bone age");
  return *chronological_age_months - output_months;
}

template <typename T>
double predict_bone_age(const BasicSimbaModel<T>& model, const ModelSample& sample) {
  if (model.config().flags.use_relative && !sample.chronological_age_months)
    throw MissingChronologicalAge("relative head needs a chronological age to recover bone age");
  return bone_age_from_output(predict_residual(model, sample), sample.chronological_age_months,
                              model.config().flags);
}

double training_target(const ModelConfig& config, double chronological_age_months, double bone_age_months) {
  const double months =
      config.flags.use_relative ? relative_age(chronological_age_months, bone_age_months).value_months
                                : bone_age_months;
  return months / config.age_scale;
}

ModelSample make_model_sample(const ModelConfig& config, const PatientRecord& record, const GrayImage& image) {
  if (image.width != config.image_size || image.height != config.image_size)
    throw DimensionMismatch("image for '" + record.id + "' is " + std::to_string(image.width) + "x" +
                            std::to_string(image.height) + ", model expects " + std::to_string(config.image_size));
  const Heatmap h = render_heatmap(record.keypoints, image.width, image.height, config.heatmap_sigma);
  return ModelSample{attach_heatmap(image, h), record.gender, record.chronological_age_months};
}

template class BasicSimbaModel<float>;
template class BasicSimbaModel<double>;
template Matrix<float> fuse_markers<float>(const Matrix<float>&, float, float, std::span<const float>,
                                           std::span<const float>, const ModelFlags&);
template Matrix<double> fuse_markers<double>(const Matrix<double>&, double, double, std::span<const double>,
                                             std::span<const double>, const ModelFlags&);
template LossResult<float> l1_loss<float>(const Matrix<float>&, std::span<const float>);
template LossResult<double> l1_loss<double>(const Matrix<double>&, std::span<const double>);
template BatchInput<float> make_batch<float>(const ModelConfig&, std::span<const ModelSample>);
template BatchInput<double> make_batch<double>(const ModelConfig&, std::span<const ModelSample>);
template double predict_residual<float>(const BasicSimbaModel<float>&, const ModelSample&);
template double predict_residual<double>(const BasicSimbaModel<double>&, const ModelSample&);
template double predict_bone_age<float>(const BasicSimbaModel<float>&, const ModelSample&);
template double predict_bone_age<double>(const BasicSimbaModel<double>&, const ModelSample&);

}  // namespace simba
