#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rgait/errors.hpp"
#include "rgait/frame.hpp"
#include "rgait/losses.hpp"
#include "rgait/nn/layers.hpp"
#include "rgait/nn/tensor.hpp"
#include "rgait/rng.hpp"

namespace rgait {

// Normalized occlusion / non-occlusion probabilities from the two
// non-negative class scores. This is the raw score interface; model scores
// are strictly positive by construction (exponentiated logits).
inline std::pair<double, double> probabilities_from_scores(double g1, double g2) {
  if (g1 < 0.0 || g2 < 0.0 || g1 + g2 <= 0.0)
    throw model_error("degenerate detector scores: need G1,G2 >= 0 and G1+G2 > 0");
  return {g1 / (g1 + g2), g2 / (g1 + g2)};
}

// 13 conv + 3 dense weight layers, widths scaled by width_mult for
// desk-scale runs. Input dimensions must be divisible by 32.
struct DetectorArch {
  int input_h = 128;
  int input_w = 128;
  double width_mult = 1.0;
  int fc_width = 4096;

  static constexpr int kBaseWidths[13] = {64,  64,  128, 128, 256, 256, 256,
                                          512, 512, 512, 512, 512, 512};

  int conv_width(int i) const {
    return std::max(1, static_cast<int>(std::lround(kBaseWidths[i] * width_mult)));
  }
  bool reduced() const { return width_mult != 1.0 || fc_width != 4096; }

  void check() const {
    if (input_h <= 0 || input_w <= 0 || input_h % 32 != 0 || input_w % 32 != 0)
      throw config_error("detector: input dimensions must be positive multiples of 32");
    if (width_mult <= 0.0 || fc_width < 2) throw config_error("detector: bad width config");
  }

  friend bool operator==(const DetectorArch&, const DetectorArch&) = default;
};

struct DetectorTrainConfig {
  int max_epochs = 100;
  double loss_saturation_epsilon = 2e-4;
  double learning_rate = 1e-3;
  int batch_size = 16;
  std::uint64_t seed = 0;

  void check() const {
    if (max_epochs < 1) throw config_error("detector: max_epochs >= 1 required");
    if (loss_saturation_epsilon <= 0.0) throw config_error("detector: epsilon must be > 0");
    if (batch_size < 1 || learning_rate <= 0.0) throw config_error("detector: bad train config");
  }
};

struct LabeledFrame {
  SilhouetteFrame frame;
  int label = 0;  // 1 = occluded, 0 = non-occluded
};

// Binary occlusion classifier with a two-node head.
class DetectorModel {
 public:
  static constexpr const char* kDescriptor = "vgg16-class";
  static constexpr int kConvLayers = 13;
  static constexpr int kDenseLayers = 3;

  DetectorModel() = default;

  DetectorModel(const DetectorArch& arch, std::uint64_t init_seed) : arch_(arch) {
    arch.check();
    Rng rng(Rng::mix(init_seed, 0xdecafULL));
    int in_c = 1;
    convs_.resize(kConvLayers);
    bns_.resize(kConvLayers);
    for (int i = 0; i < kConvLayers; ++i) {
      const int out_c = arch.conv_width(i);
      convs_[i].init(in_c, out_c, 3, rng);
      bns_[i].init(out_c);
      in_c = out_c;
    }
    const int fh = arch.input_h / 32, fw = arch.input_w / 32;
    fcs_.resize(kDenseLayers);
    fcs_[0].init(in_c * fh * fw, arch.fc_width, rng);
    fcs_[1].init(arch.fc_width, arch.fc_width, rng);
    fcs_[2].init(arch.fc_width, 2, rng);
  }

  const DetectorArch& arch() const { return arch_; }
  int input_height() const { return arch_.input_h; }
  int input_width() const { return arch_.input_w; }

  // Strictly positive class scores (G1: occluded, G2: non-occluded).
  std::pair<double, double> scores(const SilhouetteFrame& frame) const {
    check_dims(frame);
    nn::Tensor<float> x(1, 1, frame.height, frame.width);
    std::copy(frame.pixels.begin(), frame.pixels.end(), x.v.begin());
    const nn::Tensor<float> logits = const_cast<DetectorModel*>(this)->forward(x, nullptr, false);
    const double z1 = logits.v[0], z2 = logits.v[1];
    const double mx = std::max(z1, z2);
    return {std::exp(z1 - mx), std::exp(z2 - mx)};
  }

  struct Caches;

  // Forward through conv blocks (pool after convs 1,3,6,9,12) and the
  // dense head; returns the two logits per sample. Caches are required
  // for training and skipped entirely for inference.
  nn::Tensor<float> forward(const nn::Tensor<float>& x, Caches* cc, bool train) {
    if (train && !cc) throw model_error("detector forward: training requires caches");
    nn::Tensor<float> cur = x;
    if (cc) {
      cc->conv_in.resize(kConvLayers);
      cc->bn.resize(kConvLayers);
      cc->relu_in.resize(kConvLayers);
      cc->pool.resize(kConvLayers);
      cc->fc_in.resize(kDenseLayers);
      cc->fc_relu_in.resize(kDenseLayers - 1);
    }
    for (int i = 0; i < kConvLayers; ++i) {
      if (cc) cc->conv_in[i] = cur;
      cur = convs_[i].forward(cur);
      cur = bns_[i].forward(cur, cc ? &cc->bn[i] : nullptr, train);
      if (cc) cc->relu_in[i] = cur;
      cur = nn::relu(cur);
      if (is_pool_layer(i)) cur = pool_.forward(cur, cc ? &cc->pool[i] : nullptr);
    }
    for (int i = 0; i < kDenseLayers; ++i) {
      if (cc) cc->fc_in[i] = cur;
      cur = fcs_[i].forward(cur);
      if (i + 1 < kDenseLayers) {
        if (cc) cc->fc_relu_in[i] = cur;
        cur = nn::relu(cur);
      }
    }
    return cur;
  }

  void backward(Caches& cc, const nn::Tensor<float>& dlogits) {
    nn::Tensor<float> g = dlogits;
    for (int i = kDenseLayers - 1; i >= 0; --i) {
      if (i + 1 < kDenseLayers) g = nn::relu_backward(cc.fc_relu_in[i], g);
      g = fcs_[i].backward(cc.fc_in[i], g);
    }
    for (int i = kConvLayers - 1; i >= 0; --i) {
      if (is_pool_layer(i)) g = pool_.backward(cc.pool[i], g);
      g = nn::relu_backward(cc.relu_in[i], g);
      g = bns_[i].backward(cc.bn[i], g);
      g = convs_[i].backward(cc.conv_in[i], g);
    }
  }

  std::vector<nn::Param<float>*> params() {
    std::vector<nn::Param<float>*> out;
    for (auto& c : convs_) c.collect(out);
    for (auto& b : bns_) b.collect(out);
    for (auto& f : fcs_) f.collect(out);
    return out;
  }

  // All state buffers (weights and BN running statistics), in a fixed order
  // suitable for checkpointing.
  std::vector<std::pair<std::string, std::vector<float>*>> state_buffers() {
    std::vector<std::pair<std::string, std::vector<float>*>> out;
    for (int i = 0; i < kConvLayers; ++i) {
      out.emplace_back("conv" + std::to_string(i) + ".w", &convs_[i].weight.w);
      out.emplace_back("conv" + std::to_string(i) + ".b", &convs_[i].bias.w);
      out.emplace_back("bn" + std::to_string(i) + ".gamma", &bns_[i].gamma.w);
      out.emplace_back("bn" + std::to_string(i) + ".beta", &bns_[i].beta.w);
      out.emplace_back("bn" + std::to_string(i) + ".rm", &bns_[i].running_mean);
      out.emplace_back("bn" + std::to_string(i) + ".rv", &bns_[i].running_var);
    }
    for (int i = 0; i < kDenseLayers; ++i) {
      out.emplace_back("fc" + std::to_string(i) + ".w", &fcs_[i].weight.w);
      out.emplace_back("fc" + std::to_string(i) + ".b", &fcs_[i].bias.w);
    }
    return out;
  }

  struct Caches {
    std::vector<nn::Tensor<float>> conv_in, relu_in;
    std::vector<typename nn::BatchNorm2d<float>::Cache> bn;
    std::vector<typename nn::MaxPool2<float>::Cache> pool;
    std::vector<nn::Tensor<float>> fc_in, fc_relu_in;
  };

  void check_dims(const SilhouetteFrame& f) const {
    if (f.height != arch_.input_h || f.width != arch_.input_w)
      throw data_error("detector: frame dimensions do not match model input");
  }

 private:
  static bool is_pool_layer(int i) { return i == 1 || i == 3 || i == 6 || i == 9 || i == 12; }

  DetectorArch arch_;
  std::vector<nn::Conv2d<float>> convs_;
  std::vector<nn::BatchNorm2d<float>> bns_;
  nn::MaxPool2<float> pool_;
  std::vector<nn::Dense<float>> fcs_;
};

inline std::pair<double, double> class_probabilities(const DetectorModel& model,
                                                     const SilhouetteFrame& frame) {
  const auto [g1, g2] = model.scores(frame);
  return probabilities_from_scores(g1, g2);
}

struct DetectorTrainResult {
  DetectorModel model;
  std::vector<double> epoch_loss;
  int epochs_run = 0;
};

// RMSprop training with the saturation stopping rule: stop when the epoch
// loss changes by less than epsilon, or at max_epochs.
inline DetectorTrainResult train_detector(const std::vector<LabeledFrame>& train_set,
                                          const DetectorArch& arch,
                                          const DetectorTrainConfig& config) {
  config.check();
  if (train_set.empty()) throw data_error("train_detector: empty training set");
  if (train_set.size() < 2) throw data_error("train_detector: need at least 2 frames");
  bool has_pos = false, has_neg = false;
  for (const auto& s : train_set) (s.label ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw data_error("train_detector: training set must contain both classes");

  DetectorTrainResult result;
  result.model = DetectorModel(arch, config.seed);
  auto& model = result.model;
  for (const auto& s : train_set) model.check_dims(s.frame);

  nn::RmsProp<float> opt;
  opt.lr = static_cast<float>(config.learning_rate);
  opt.attach(model.params());

  Rng shuffle_rng(Rng::mix(config.seed, 0x5u));
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  const int n = static_cast<int>(train_set.size());
  const int bs = config.batch_size;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += bs) {
      const int b = std::min(bs, n - start);
      nn::Tensor<float> x(b, 1, arch.input_h, arch.input_w);
      std::vector<int> labels(b);
      for (int i = 0; i < b; ++i) {
        const auto& s = train_set[order[start + i]];
        std::copy(s.frame.pixels.begin(), s.frame.pixels.end(),
                  x.v.begin() + static_cast<std::size_t>(i) * s.frame.size());
        labels[i] = s.label;
      }
      DetectorModel::Caches caches;
      const nn::Tensor<float> logits = model.forward(x, &caches, true);
      nn::Tensor<float> dlogits(b, 2, 1, 1);
      for (int i = 0; i < b; ++i) {
        const double z1 = logits.v[2 * i], z2 = logits.v[2 * i + 1];
        const double mx = std::max(z1, z2);
        const double e1 = std::exp(z1 - mx), e2 = std::exp(z2 - mx);
        const double p1 = e1 / (e1 + e2), p2 = e2 / (e1 + e2);
        epoch_loss += detection_loss(p1, p2, labels[i]);
        // d(loss)/d(logits) of the normalized-score cross-entropy.
        const double target1 = labels[i] ? 1.0 : 0.0;
        dlogits.v[2 * i] = static_cast<float>((p1 - target1) / b);
        dlogits.v[2 * i + 1] = static_cast<float>((p2 - (1.0 - target1)) / b);
      }
      model.backward(caches, dlogits);
      opt.step();
    }
    epoch_loss /= n;
    if (!std::isfinite(epoch_loss)) throw model_error("train_detector: non-finite epoch loss");
    result.epoch_loss.push_back(epoch_loss);
    result.epochs_run = epoch;
    if (epoch >= 2 && std::abs(result.epoch_loss[epoch - 1] - result.epoch_loss[epoch - 2]) <
                          config.loss_saturation_epsilon)
      break;
  }
  return result;
}

// Per-frame occlusion mask; ties at P1 == 0.5 count as occluded.
inline std::vector<bool> detect_sequence(const DetectorModel& model,
                                         const SilhouetteSequence& seq) {
  std::vector<bool> mask;
  mask.reserve(seq.frames.size());
  for (const auto& f : seq.frames) {
    const auto [p1, p2] = class_probabilities(model, f);
    mask.push_back(p1 >= 0.5);
  }
  return mask;
}

struct ConfusionMatrix {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;  // positive class = occluded
  std::int64_t total() const { return tp + fp + tn + fn; }
};

struct ConfusionMetrics {
  std::optional<double> precision, recall, accuracy;
};

inline ConfusionMetrics confusion_metrics(const ConfusionMatrix& cm) {
  ConfusionMetrics m;
  if (cm.tp + cm.fp > 0) m.precision = static_cast<double>(cm.tp) / (cm.tp + cm.fp);
  if (cm.tp + cm.fn > 0) m.recall = static_cast<double>(cm.tp) / (cm.tp + cm.fn);
  if (cm.total() > 0) m.accuracy = static_cast<double>(cm.tp + cm.tn) / cm.total();
  return m;
}

inline ConfusionMatrix confusion_from_predictions(const std::vector<int>& truth,
                                                  const std::vector<bool>& predicted) {
  if (truth.size() != predicted.size())
    throw data_error("confusion_from_predictions: size mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] && predicted[i]) ++cm.tp;
    else if (!truth[i] && predicted[i]) ++cm.fp;
    else if (!truth[i] && !predicted[i]) ++cm.tn;
    else ++cm.fn;
  }
  return cm;
}

}  // namespace rgait
