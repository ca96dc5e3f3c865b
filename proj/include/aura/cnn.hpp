#pragma once

// Fully-convolutional 1D classifier: a stack of valid, strided convolutions,
// each followed by batch normalization and ReLU, then a linear layer to two
// logits. Activations are stored channels x (batch * positions), column-major,
// so that one column holds every channel at one position of one sample.

#include "aura/core.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace aura::cnn {

struct Architecture {
  int input_length = 960;
  int in_channels = 1;
  int layers = 7;
  int channels = 256;
  int kernel = 7;
  int stride = 2;
  int classes = 2;

  /// Sequence length at the input of each layer plus the final output length.
  std::vector<int> lengths() const {
    std::vector<int> out{input_length};
    for (int l = 0; l < layers; ++l) out.push_back((out.back() - kernel) / stride + 1);
    return out;
  }
  int final_length() const { return lengths().back(); }
  int flat_features() const { return channels * final_length(); }
  int layer_in_channels(int l) const { return l == 0 ? in_channels : channels; }

  void validate() const {
    if (input_length < 1 || in_channels < 1 || layers < 1 || channels < 1 || kernel < 1 ||
        stride < 1 || classes != 2)
      throw ConfigError("cnn: invalid architecture");
    int n = input_length;
    for (int l = 0; l < layers; ++l) {
      if (n < kernel) throw ConfigError("cnn: input too short for the layer stack");
      n = (n - kernel) / stride + 1;
    }
  }

  bool operator==(const Architecture&) const = default;
};

enum class Mode { Train, Infer };

/// Trainable tensors. Gradients and Adam moments share this layout.
template <typename Scalar>
struct Parameters {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<Mat> conv_weight;  // out x (kernel * in), column index k * in + c
  std::vector<Vec> conv_bias;
  std::vector<Vec> bn_gamma;
  std::vector<Vec> bn_beta;
  Mat linear_weight;  // classes x flat, flat index t * channels + c
  Vec linear_bias;

  static Parameters zeros(const Architecture& arch) {
    Parameters p;
    for (int l = 0; l < arch.layers; ++l) {
      p.conv_weight.push_back(Mat::Zero(arch.channels, arch.kernel * arch.layer_in_channels(l)));
      p.conv_bias.push_back(Vec::Zero(arch.channels));
      p.bn_gamma.push_back(Vec::Zero(arch.channels));
      p.bn_beta.push_back(Vec::Zero(arch.channels));
    }
    p.linear_weight = Mat::Zero(arch.classes, arch.flat_features());
    p.linear_bias = Vec::Zero(arch.classes);
    return p;
  }

  /// Flat views of every tensor, in a fixed order.
  std::vector<std::pair<std::string, Eigen::Map<Vec>>> tensors() {
    std::vector<std::pair<std::string, Eigen::Map<Vec>>> out;
    const auto add = [&](std::string name, auto& t) {
      out.emplace_back(std::move(name), Eigen::Map<Vec>(t.data(), t.size()));
    };
    for (std::size_t l = 0; l < conv_weight.size(); ++l) {
      const std::string p = "conv" + std::to_string(l) + ".";
      add(p + "weight", conv_weight[l]);
      add(p + "bias", conv_bias[l]);
      add(p + "bn_gamma", bn_gamma[l]);
      add(p + "bn_beta", bn_beta[l]);
    }
    add("linear.weight", linear_weight);
    add("linear.bias", linear_bias);
    return out;
  }

  Eigen::Index count() const {
    Eigen::Index n = linear_weight.size() + linear_bias.size();
    for (std::size_t l = 0; l < conv_weight.size(); ++l)
      n += conv_weight[l].size() + conv_bias[l].size() + bn_gamma[l].size() + bn_beta[l].size();
    return n;
  }
};

template <typename Scalar>
struct LayerCache {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Mat columns;    // im2col of the layer input
  Mat normalized; // x-hat
  Vec inv_std;
  Vec batch_mean;
  Vec batch_var;  // biased
};

template <typename Scalar>
struct ForwardCache {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<LayerCache<Scalar>> layers;
  Mat final_activation;
  Mat logits;
  int batch = 0;
};

template <typename Scalar>
class CnnModel {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  CnnModel() : CnnModel(Architecture{}) {}

  /// All weights zero, batch-norm identity (gamma 1, beta 0, running mean 0, var 1).
  explicit CnnModel(Architecture arch) : arch_(arch) {
    arch_.validate();
    params = Parameters<Scalar>::zeros(arch_);
    for (int l = 0; l < arch_.layers; ++l) {
      params.bn_gamma[l].setOnes();
      running_mean.push_back(Vec::Zero(arch_.channels));
      running_var.push_back(Vec::Ones(arch_.channels));
    }
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  static CnnModel initialized(Architecture arch, std::uint64_t seed) {
    CnnModel m(arch);
    Rng rng(seed);
    const auto fill = [&](auto& t, double fan_in) {
      const double bound = 1.0 / std::sqrt(fan_in);
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    };
    for (int l = 0; l < arch.layers; ++l) {
      const double fan_in = static_cast<double>(arch.kernel * arch.layer_in_channels(l));
      fill(m.params.conv_weight[l], fan_in);
      fill(m.params.conv_bias[l], fan_in);
    }
    fill(m.params.linear_weight, arch.flat_features());
    fill(m.params.linear_bias, arch.flat_features());
    return m;
  }

  const Architecture& architecture() const { return arch_; }

  /// Logits (classes x batch) for `input` of size in_channels x (batch * input_length).
  /// Train mode normalizes with batch statistics and fills `cache` when given.
  Mat forward(const Mat& input, int batch, Mode mode, ForwardCache<Scalar>* cache = nullptr) const {
    check_input(input, batch);
    const auto lengths = arch_.lengths();
    if (cache) {
      cache->layers.assign(arch_.layers, {});
      cache->batch = batch;
    }
    Mat activation = input;
    for (int l = 0; l < arch_.layers; ++l) {
      const int cin = arch_.layer_in_channels(l);
      Mat columns = im2col(activation, cin, lengths[l], lengths[l + 1], batch);
      Mat z = params.conv_weight[l] * columns;
      z.colwise() += params.conv_bias[l];

      Vec mean;
      Vec var;
      if (mode == Mode::Train) {
        mean = z.rowwise().mean();
        var = (z.colwise() - mean).array().square().rowwise().mean();
      } else {
        mean = running_mean[l];
        var = running_var[l];
      }
      const Vec inv_std = (var.array() + static_cast<Scalar>(bn_eps)).rsqrt();
      z.colwise() -= mean;
      z = inv_std.asDiagonal() * z;  // x-hat
      if (cache) {
        auto& lc = cache->layers[l];
        lc.columns = std::move(columns);
        lc.normalized = z;
        lc.inv_std = inv_std;
        lc.batch_mean = mean;
        lc.batch_var = var;
      }
      activation = (params.bn_gamma[l].asDiagonal() * z).colwise() + params.bn_beta[l];
      activation = activation.cwiseMax(Scalar(0));
    }
    const int flat = arch_.flat_features();
    const Eigen::Map<const Mat> features(activation.data(), flat, batch);
    Mat logits = params.linear_weight * features;
    logits.colwise() += params.linear_bias;
    if (cache) {
      cache->final_activation = std::move(activation);
      cache->logits = logits;
    }
    return logits;
  }

  /// Positive-class softmax probability per sample.
  Vec scores(const Mat& input, int batch, Mode mode = Mode::Infer) const {
    return positive_probability(forward(input, batch, mode));
  }

  Scalar score(const Eigen::Ref<const Vec>& window, Mode mode = Mode::Infer) const {
    if (window.size() != static_cast<Eigen::Index>(arch_.in_channels) * arch_.input_length)
      throw ConfigError("cnn: window length " + std::to_string(window.size()) + " does not match " +
                        std::to_string(arch_.input_length));
    const Mat input = Eigen::Map<const Mat>(window.data(), arch_.in_channels, arch_.input_length);
    return scores(input, 1, mode)(0);
  }

  static Vec positive_probability(const Mat& logits) {
    Vec out(logits.cols());
    for (Eigen::Index b = 0; b < logits.cols(); ++b) {
      const Scalar m = logits.col(b).maxCoeff();
      const Scalar e0 = std::exp(logits(0, b) - m);
      const Scalar e1 = std::exp(logits(1, b) - m);
      out(b) = e1 / (e0 + e1);
    }
    return out;
  }

  /// Mean softmax cross-entropy (log-sum-exp). Label 1 = positive.
  static Scalar cross_entropy(const Mat& logits, const std::vector<int>& labels) {
    Scalar total = 0;
    for (Eigen::Index b = 0; b < logits.cols(); ++b) {
      const Scalar m = logits.col(b).maxCoeff();
      const Scalar lse = m + std::log((logits.col(b).array() - m).exp().sum());
      total += lse - logits(labels[static_cast<std::size_t>(b)], b);
    }
    return total / static_cast<Scalar>(logits.cols());
  }

  /// Exact gradient of the mean cross-entropy through a train-mode forward pass.
  Parameters<Scalar> gradients(const ForwardCache<Scalar>& cache, const std::vector<int>& labels) const {
    const int batch = cache.batch;
    if (static_cast<int>(labels.size()) != batch) throw ConfigError("cnn: label count mismatch");
    const auto lengths = arch_.lengths();
    Parameters<Scalar> grad = Parameters<Scalar>::zeros(arch_);

    Mat dlogits(arch_.classes, batch);
    for (int b = 0; b < batch; ++b) {
      const Scalar m = cache.logits.col(b).maxCoeff();
      const auto e = (cache.logits.col(b).array() - m).exp();
      dlogits.col(b) = e / e.sum();
      dlogits(labels[static_cast<std::size_t>(b)], b) -= Scalar(1);
    }
    dlogits /= static_cast<Scalar>(batch);

    const int flat = arch_.flat_features();
    const Eigen::Map<const Mat> features(cache.final_activation.data(), flat, batch);
    grad.linear_weight.noalias() = dlogits * features.transpose();
    grad.linear_bias = dlogits.rowwise().sum();
    Mat upstream(arch_.channels, static_cast<Eigen::Index>(lengths.back()) * batch);
    Eigen::Map<Mat>(upstream.data(), flat, batch).noalias() = params.linear_weight.transpose() * dlogits;

    for (int l = arch_.layers - 1; l >= 0; --l) {
      const auto& lc = cache.layers[l];
      const auto& gamma = params.bn_gamma[l];
      // ReLU mask from the batch-norm output.
      const Mat bn_out = (gamma.asDiagonal() * lc.normalized).colwise() + params.bn_beta[l];
      const Mat dy = (bn_out.array() > Scalar(0)).select(upstream, Scalar(0));
      const Eigen::Index cols = dy.cols();

      grad.bn_gamma[l] = dy.cwiseProduct(lc.normalized).rowwise().sum();
      grad.bn_beta[l] = dy.rowwise().sum();
      const Mat dxhat = gamma.asDiagonal() * dy;
      const Vec sum_dxhat = dxhat.rowwise().sum();
      const Vec sum_dxhat_xhat = dxhat.cwiseProduct(lc.normalized).rowwise().sum();
      const auto n = static_cast<Scalar>(cols);
      Mat dz = (dxhat * n).colwise() - sum_dxhat;
      dz.noalias() -= sum_dxhat_xhat.asDiagonal() * lc.normalized;
      dz = (lc.inv_std / n).asDiagonal() * dz;

      grad.conv_weight[l].noalias() = dz * lc.columns.transpose();
      grad.conv_bias[l] = dz.rowwise().sum();
      if (l > 0) {
        const Mat dcolumns = params.conv_weight[l].transpose() * dz;
        upstream = col2im(dcolumns, arch_.layer_in_channels(l), lengths[l], lengths[l + 1], batch);
      }
    }
    return grad;
  }

  /// Exponential moving average of the batch statistics from a train-mode pass.
  void update_running_stats(const ForwardCache<Scalar>& cache) {
    const auto lengths = arch_.lengths();
    for (int l = 0; l < arch_.layers; ++l) {
      const auto& lc = cache.layers[l];
      const double n = static_cast<double>(lengths[l + 1]) * cache.batch;
      const Scalar unbias = static_cast<Scalar>(n > 1 ? n / (n - 1) : 1.0);
      const auto mom = static_cast<Scalar>(bn_momentum);
      running_mean[l] = (Scalar(1) - mom) * running_mean[l] + mom * lc.batch_mean;
      running_var[l] = (Scalar(1) - mom) * running_var[l] + mom * unbias * lc.batch_var;
    }
  }

  template <typename Other>
  CnnModel<Other> cast() const {
    CnnModel<Other> out(arch_);
    out.bn_momentum = bn_momentum;
    out.bn_eps = bn_eps;
    for (int l = 0; l < arch_.layers; ++l) {
      out.params.conv_weight[l] = params.conv_weight[l].template cast<Other>();
      out.params.conv_bias[l] = params.conv_bias[l].template cast<Other>();
      out.params.bn_gamma[l] = params.bn_gamma[l].template cast<Other>();
      out.params.bn_beta[l] = params.bn_beta[l].template cast<Other>();
      out.running_mean[l] = running_mean[l].template cast<Other>();
      out.running_var[l] = running_var[l].template cast<Other>();
    }
    out.params.linear_weight = params.linear_weight.template cast<Other>();
    out.params.linear_bias = params.linear_bias.template cast<Other>();
    return out;
  }

  Parameters<Scalar> params;
  std::vector<Vec> running_mean;
  std::vector<Vec> running_var;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

 private:
  void check_input(const Mat& input, int batch) const {
    if (batch < 1 || input.rows() != arch_.in_channels ||
        input.cols() != static_cast<Eigen::Index>(batch) * arch_.input_length)
      throw ConfigError("cnn: input shape does not match the architecture (window length " +
                        std::to_string(arch_.input_length) + ")");
  }

  Mat im2col(const Mat& x, int cin, int lin, int lout, int batch) const {
    const int k = arch_.kernel;
    const int s = arch_.stride;
    Mat columns(static_cast<Eigen::Index>(k) * cin, static_cast<Eigen::Index>(lout) * batch);
    for (int b = 0; b < batch; ++b)
      for (int t = 0; t < lout; ++t) {
        const Eigen::Index j = static_cast<Eigen::Index>(b) * lout + t;
        const Eigen::Index src = static_cast<Eigen::Index>(b) * lin + static_cast<Eigen::Index>(s) * t;
        for (int kk = 0; kk < k; ++kk) columns.col(j).segment(kk * cin, cin) = x.col(src + kk);
      }
    return columns;
  }

  Mat col2im(const Mat& columns, int cin, int lin, int lout, int batch) const {
    const int k = arch_.kernel;
    const int s = arch_.stride;
    Mat x = Mat::Zero(cin, static_cast<Eigen::Index>(lin) * batch);
    for (int b = 0; b < batch; ++b)
      for (int t = 0; t < lout; ++t) {
        const Eigen::Index j = static_cast<Eigen::Index>(b) * lout + t;
        const Eigen::Index dst = static_cast<Eigen::Index>(b) * lin + static_cast<Eigen::Index>(s) * t;
        for (int kk = 0; kk < k; ++kk) x.col(dst + kk) += columns.col(j).segment(kk * cin, cin);
      }
    return x;
  }

  Architecture arch_;
};

/// Inference-only copy of a model with batch normalization folded into the
/// convolutions. Each convolution runs as one product per kernel tap over a
/// strided view of the input, which avoids building im2col matrices.
template <typename Scalar>
class FrozenCnn {
 public:
  using Mat = typename CnnModel<Scalar>::Mat;
  using Vec = typename CnnModel<Scalar>::Vec;

  explicit FrozenCnn(const CnnModel<Scalar>& model) : arch_(model.architecture()) {
    for (int l = 0; l < arch_.layers; ++l) {
      const int cin = arch_.layer_in_channels(l);
      const Vec scale = (model.running_var[l].array() + static_cast<Scalar>(model.bn_eps)).rsqrt() *
                        model.params.bn_gamma[l].array();
      std::vector<Mat> taps;
      for (int k = 0; k < arch_.kernel; ++k)
        taps.push_back(scale.asDiagonal() * model.params.conv_weight[l].middleCols(static_cast<Eigen::Index>(k) * cin, cin));
      weight_.push_back(std::move(taps));
      bias_.push_back((scale.array() * (model.params.conv_bias[l] - model.running_mean[l]).array() +
                       model.params.bn_beta[l].array()).matrix());
    }
    linear_weight_ = model.params.linear_weight;
    linear_bias_ = model.params.linear_bias;
  }

  const Architecture& architecture() const { return arch_; }

  /// Positive-class probabilities; matches CnnModel::scores in infer mode.
  Vec scores(const Mat& input, int batch) const {
    if (batch < 1 || input.rows() != arch_.in_channels ||
        input.cols() != static_cast<Eigen::Index>(batch) * arch_.input_length)
      throw ConfigError("cnn: input shape does not match the architecture (window length " +
                        std::to_string(arch_.input_length) + ")");
    const auto lengths = arch_.lengths();
    Mat activation = input;
    for (int l = 0; l < arch_.layers; ++l) {
      const Eigen::Index cin = arch_.layer_in_channels(l);
      const Eigen::Index lin = lengths[l];
      const Eigen::Index lout = lengths[l + 1];
      Mat z(arch_.channels, lout * batch);
      for (Eigen::Index b = 0; b < batch; ++b) {
        auto out = z.middleCols(b * lout, lout);
        out.colwise() = bias_[l];
        for (int k = 0; k < arch_.kernel; ++k) {
          const Eigen::Map<const Mat, 0, Eigen::OuterStride<>> view(
              activation.data() + (b * lin + k) * cin, cin, lout, Eigen::OuterStride<>(arch_.stride * cin));
          out.noalias() += weight_[l][k] * view;
        }
      }
      activation = z.cwiseMax(Scalar(0));
    }
    const Eigen::Map<const Mat> features(activation.data(), arch_.flat_features(), batch);
    Mat logits = linear_weight_ * features;
    logits.colwise() += linear_bias_;
    return CnnModel<Scalar>::positive_probability(logits);
  }

 private:
  Architecture arch_;
  std::vector<std::vector<Mat>> weight_;  // [layer][tap]: out x in
  std::vector<Vec> bias_;
  Mat linear_weight_;
  Vec linear_bias_;
};

using Model = CnnModel<float>;

}  // namespace aura::cnn
