#pragma once

<algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rgait/errors.hpp"
#include "rgait/frame.hpp"
#include "rgait/losses.hpp"
#include "rgait/nn/convlstm.hpp"
#include "rgait/nn/layers.hpp"
#include "rgait/nn/tensor.hpp"
#include "rgait/rng.hpp"

namespace rgait {

// Encoder/decoder topology. Each encoder stage is conv+BN+ReLU followed by a
// time-distributed 2x2 pool; the recurrent cell sits at the bottleneck; each
// decoder stage upsamples, concatenates the matching-resolution encoder map
// of the last context frame, and convolves. The final conv projects to one
// sigmoid channel at full resolution.
struct ReconstructorArch {
  int input_h = 128;
  int input_w = 128;
  std::vector<int> enc_widths = {32, 64, 96, 128};
  int lstm_hidden = 128;
  std::vector<int> dec_widths = {96, 64};
  double dropout = 0.2;
  double noise_std = 0.05;
  bool reduced = false;

  int conv_layers() const {
    return static_cast<int>(enc_widths.size() + dec_widths.size()) + 1;
  }
  int pooling_layers() const { return static_cast<int>(enc_widths.size()); }

  static ReconstructorArch full_scale(int h = 128, int w = 128) {
    ReconstructorArch a;
    a.input_h = h;
    a.input_w = w;
    return a;
  }

  // Desk-scale variant: fewer/narrower stages, explicitly flagged.
  static ReconstructorArch desk_scale(int h = 32, int w = 32) {
    ReconstructorArch a;
    a.input_h = h;
    a.input_w = w;
    a.enc_widths = {8, 16, 24};
    a.lstm_hidden = 32;
    a.dec_widths = {16, 8};
    a.reduced = true;
    return a;
  }

  void check() const {
    if (enc_widths.empty() || dec_widths.size() + 1 > enc_widths.size())
      throw config_error("reconstructor: decoder deeper than encoder");
    const int div = 1 << static_cast<int>(enc_widths.size());
    if (input_h <= 0 || input_w <= 0 || input_h % div != 0 || input_w % div != 0)
      throw config_error("reconstructor: input dims must be divisible by 2^(encoder stages)");
    if (!(dropout >= 0.0 && dropout < 1.0) || noise_std < 0.0)
      throw config_error("reconstructor: bad dropout/noise config");
    if (!reduced && !(conv_layers() == 7 && pooling_layers() == 4))
      throw config_error(
          "reconstructor: full-scale topology must have 7 conv and 4 pooling layers; "
          "flag other variants as reduced");
  }

  friend bool operator==(const ReconstructorArch&, const ReconstructorArch&) = default;
};

struct ArchDescriptor {
  std::string model;
  int conv_layers = 0;
  int time_distributed_pooling_layers = 0;
  double dropout = 0.0;
  double noise_std = 0.0;
  std::string skip_connections;
  bool reduced = false;
  int input_h = 0, input_w = 0;
};

namespace nnrec {

template <class T>
struct Net {
  ReconstructorArch arch;
  std::vector<nn::Conv2d<T>> enc_conv;
  std::vector<nn::BatchNorm2d<T>> enc_bn;
  nn::ConvLstm<T> lstm;
  std::vector<nn::Conv2d<T>> dec_conv;  // last entry is the 1-channel output conv
  std::vector<nn::BatchNorm2d<T>> dec_bn;
  nn::MaxPool2<T> pool;
  nn::Dropout<T> drop_in, drop_out;

  int n_enc() const { return static_cast<int>(enc_conv.size()); }
  int n_dec() const { return static_cast<int>(dec_bn.size()); }

  void init(const ReconstructorArch& a, std::uint64_t seed) {
    a.check();
    arch = a;
    Rng rng(Rng::mix(seed, 0xc0ffeeULL));
    const int ne = static_cast<int>(a.enc_widths.size());
    const int nd = static_cast<int>(a.dec_widths.size());
    enc_conv.resize(ne);
    enc_bn.resize(ne);
    int in_c = 1;
    for (int i = 0; i < ne; ++i) {
      enc_conv[i].init(in_c, a.enc_widths[i], 3, rng);
      enc_bn[i].init(a.enc_widths[i]);
      in_c = a.enc_widths[i];
    }
    lstm.init(a.enc_widths[ne - 1], a.lstm_hidden, 3, rng);
    dec_conv.resize(nd + 1);
    dec_bn.resize(nd);
    int main_c = a.lstm_hidden;
    for (int d = 0; d < nd; ++d) {
      dec_conv[d].init(main_c + a.enc_widths[ne - 1 - d], a.dec_widths[d], 3, rng);
      dec_bn[d].init(a.dec_widths[d]);
      main_c = a.dec_widths[d];
    }
    dec_conv[nd].init(main_c + a.enc_widths[0], 1, 3, rng);
    drop_in.p = static_cast<T>(a.dropout);
    drop_out.p = static_cast<T>(a.dropout);
  }

  struct StepCache {
    std::vector<nn::Tensor<T>> conv_in, relu_in;
    std::vector<typename nn::BatchNorm2d<T>::Cache> bn;
    std::vector<typename nn::MaxPool2<T>::Cache> pool;
    typename nn::Dropout<T>::Cache drop;
    typename nn::ConvLstm<T>::Cache lstm;
  };

  struct Cache {
    std::vector<StepCache> steps;
    std::vector<nn::Tensor<T>> last_skips;
    typename nn::Dropout<T>::Cache drop_out;
    std::vector<nn::Tensor<T>> dec_conv_in, dec_relu_in;
    std::vector<typename nn::BatchNorm2d<T>::Cache> dec_bn;
    nn::Tensor<T> out_conv_in;
    nn::Tensor<T> y;
  };

  // One frame through the time-distributed encoder down to the bottleneck.
  // `skips` (when non-null) receives the post-ReLU map of every stage.
  nn::Tensor<T> encode(const nn::Tensor<T>& x, StepCache* cc, bool train, Rng* rng,
                       std::vector<nn::Tensor<T>>* skips) {
    nn::Tensor<T> cur = x;
    const int ne = n_enc();
    if (cc) {
      cc->conv_in.resize(ne);
      cc->relu_in.resize(ne);
      cc->bn.resize(ne);
      cc->pool.resize(ne);
    }
    for (int i = 0; i < ne; ++i) {
      if (cc) cc->conv_in[i] = cur;
      cur = enc_conv[i].forward(cur);
      cur = enc_bn[i].forward(cur, cc ? &cc->bn[i] : nullptr, train);
      if (cc) cc->relu_in[i] = cur;
      cur = nn::relu(cur);
      if (skips) (*skips)[i] = cur;
      cur = pool.forward(cur, cc ? &cc->pool[i] : nullptr);
    }
    return drop_in.forward(cur, cc ? &cc->drop : nullptr, train, rng);
  }

  // Encoder backward for one frame; `skip_grads`, when present, are added at
  // the post-ReLU level of each stage (only the last context frame gets them).
  void encode_backward(StepCache& cc, const nn::Tensor<T>& dbottleneck,
                       std::vector<nn::Tensor<T>>* skip_grads) {
    nn::Tensor<T> g = drop_in.backward(cc.drop, dbottleneck);
    for (int i = n_enc() - 1; i >= 0; --i) {
      g = pool.backward(cc.pool[i], g);
      if (skip_grads && (*skip_grads)[i].size() > 0) nn::add_inplace(g, (*skip_grads)[i]);
      g = nn::relu_backward(cc.relu_in[i], g);
      g = enc_bn[i].backward(cc.bn[i], g);
      g = enc_conv[i].backward(cc.conv_in[i], g);
    }
  }

  nn::Tensor<T> forward(const std::vector<nn::Tensor<T>>& ctx, Cache* cc, bool train, Rng* rng) {
    if (ctx.empty()) throw data_error("reconstructor: empty context");
    const int ne = n_enc(), nd = n_dec();
    const int batch = ctx.front().n;
    const int bh = arch.input_h >> ne, bw = arch.input_w >> ne;
    const int k = static_cast<int>(ctx.size());
    if (cc) cc->steps.resize(k);

    std::vector<nn::Tensor<T>> skips(ne);
    auto state = lstm.initial_state(batch, bh, bw);
    for (int t = 0; t < k; ++t) {
      StepCache* sc = cc ? &cc->steps[t] : nullptr;
      std::vector<nn::Tensor<T>>* sk = (t == k - 1) ? &skips : nullptr;
      const nn::Tensor<T> bott = encode(ctx[t], sc, train, rng, sk);
      state = lstm.step(bott, state, sc ? &sc->lstm : nullptr);
    }

    nn::Tensor<T> cur = drop_out.forward(state.h, cc ? &cc->drop_out : nullptr, train, rng);
    if (cc) {
      cc->last_skips = skips;
      cc->dec_conv_in.resize(nd);
      cc->dec_relu_in.resize(nd);
      cc->dec_bn.resize(nd);
    }
    for (int d = 0; d < nd; ++d) {
      cur = nn::upsample2(cur);
      cur = nn::concat_channels(cur, skips[ne - 1 - d]);
      if (cc) cc->dec_conv_in[d] = cur;
      cur = dec_conv[d].forward(cur);
      cur = dec_bn[d].forward(cur, cc ? &cc->dec_bn[d] : nullptr, train);
      if (cc) cc->dec_relu_in[d] = cur;
      cur = nn::relu(cur);
    }
    for (int r = 0; r < ne - nd; ++r) cur = nn::upsample2(cur);
    cur = nn::concat_channels(cur, skips[0]);
    if (cc) cc->out_conv_in = cur;
    cur = dec_conv[nd].forward(cur);
    nn::Tensor<T> y = nn::sigmoid(cur);
    if (cc) cc->y = y;
    return y;
  }

  void backward(Cache& cc, const nn::Tensor<T>& dy) {
    const int ne = n_enc(), nd = n_dec();
    const int k = static_cast<int>(cc.steps.size());

    nn::Tensor<T> g = nn::sigmoid_backward(cc.y, dy);
    g = dec_conv[nd].backward(cc.out_conv_in, g);

    std::vector<nn::Tensor<T>> skip_grads(ne);
    const int out_main_c = nd > 0 ? arch.dec_widths[nd - 1] : arch.lstm_hidden;
    skip_grads[0] = nn::slice_channels(g, out_main_c, g.c);
    nn::Tensor<T> gm = nn::slice_channels(g, 0, out_main_c);
    for (int r = 0; r < ne - nd; ++r) gm = nn::upsample2_backward(gm);

    for (int d = nd - 1; d >= 0; --d) {
      gm = nn::relu_backward(cc.dec_relu_in[d], gm);
      gm = dec_bn[d].backward(cc.dec_bn[d], gm);
      gm = dec_conv[d].backward(cc.dec_conv_in[d], gm);
      const int main_c = d > 0 ? arch.dec_widths[d - 1] : arch.lstm_hidden;
      skip_grads[ne - 1 - d] = nn::slice_channels(gm, main_c, gm.c);
      gm = nn::slice_channels(gm, 0, main_c);
      gm = nn::upsample2_backward(gm);
    }

    nn::Tensor<T> dh = drop_out.backward(cc.drop_out, gm);
    nn::Tensor<T> dc(dh.n, arch.lstm_hidden, dh.h, dh.w);
    for (int t = k - 1; t >= 0; --t) {
      nn::Tensor<T> dx, dh_prev, dc_prev;
      lstm.backward_step(cc.steps[t].lstm, dh, dc, dx, dh_prev, dc_prev);
      encode_backward(cc.steps[t], dx, (t == k - 1) ? &skip_grads : nullptr);
      dh = std::move(dh_prev);
      dc = std::move(dc_prev);
    }
  }

  std::vector<nn::Param<T>*> params() {
    std::vector<nn::Param<T>*> out;
    for (auto& c : enc_conv) c.collect(out);
    for (auto& b : enc_bn) b.collect(out);
    lstm.collect(out);
    for (auto& c : dec_conv) c.collect(out);
    for (auto& b : dec_bn) b.collect(out);
    return out;
  }

  std::vector<std::pair<std::string, std::vector<T>*>> state_buffers() {
    std::vector<std::pair<std::string, std::vector<T>*>> out;
    for (std::size_t i = 0; i < enc_conv.size(); ++i) {
      out.emplace_back("enc" + std::to_string(i) + ".w", &enc_conv[i].weight.w);
      out.emplace_back("enc" + std::to_string(i) + ".b", &enc_conv[i].bias.w);
      out.emplace_back("encbn" + std::to_string(i) + ".gamma", &enc_bn[i].gamma.w);
      out.emplace_back("encbn" + std::to_string(i) + ".beta", &enc_bn[i].beta.w);
      out.emplace_back("encbn" + std::to_string(i) + ".rm", &enc_bn[i].running_mean);
      out.emplace_back("encbn" + std::to_string(i) + ".rv", &enc_bn[i].running_var);
    }
    out.emplace_back("lstm.wx.w", &lstm.wx.weight.w);
    out.emplace_back("lstm.wx.b", &lstm.wx.bias.w);
    out.emplace_back("lstm.wh.w", &lstm.wh.weight.w);
    for (std::size_t d = 0; d < dec_conv.size(); ++d) {
      out.emplace_back("dec" + std::to_string(d) + ".w", &dec_conv[d].weight.w);
      out.emplace_back("dec" + std::to_string(d) + ".b", &dec_conv[d].bias.w);
    }
    for (std::size_t d = 0; d < dec_bn.size(); ++d) {
      out.emplace_back("decbn" + std::to_string(d) + ".gamma", &dec_bn[d].gamma.w);
      out.emplace_back("decbn" + std::to_string(d) + ".beta", &dec_bn[d].beta.w);
      out.emplace_back("decbn" + std::to_string(d) + ".rm", &dec_bn[d].running_mean);
      out.emplace_back("decbn" + std::to_string(d) + ".rv", &dec_bn[d].running_var);
    }
    return out;
  }
};

}  // namespace nnrec

// Sequence-to-next-frame predictor with autoregressive repair.
class ReconstructorModel {
 public:
  ReconstructorModel() = default;

  ReconstructorModel(const ReconstructorArch& arch, std::uint64_t init_seed) {
    net_.init(arch, init_seed);
  }

  const ReconstructorArch& arch() const { return net_.arch; }

  ArchDescriptor descriptor() const {
    ArchDescriptor d;
    d.model = "conv-recurrent-encoder-decoder";
    d.conv_layers = net_.arch.conv_layers();
    d.time_distributed_pooling_layers = net_.arch.pooling_layers();
    d.dropout = net_.arch.dropout;
    d.noise_std = net_.arch.noise_std;
    d.skip_connections = "encoder-to-decoder at matching resolutions";
    d.reduced = net_.arch.reduced;
    d.input_h = net_.arch.input_h;
    d.input_w = net_.arch.input_w;
    return d;
  }

  nnrec::Net<float>& net() { return net_; }
  const nnrec::Net<float>& net() const { return net_; }

  void check_dims(const SilhouetteFrame& f) const {
    if (f.height != net_.arch.input_h || f.width != net_.arch.input_w)
      throw data_error("reconstructor: frame dimensions do not match model input");
  }

 private:
  nnrec::Net<float> net_;
};

// Predict the frame following the given context. Inference is
// deterministic: dropout and input noise are disabled.
inline SilhouetteFrame predict_next(const ReconstructorModel& model,
                                    std::span<const SilhouetteFrame> context) {
  if (context.empty()) throw data_error("predict_next: empty context");
  for (const auto& f : context) model.check_dims(f);
  auto& net = const_cast<ReconstructorModel&>(model).net();  // eval path is non-mutating
  std::vector<nn::Tensor<float>> ctx;
  ctx.reserve(context.size());
  for (const auto& f : context) {
    nn::Tensor<float> x(1, 1, f.height, f.width);
    std::copy(f.pixels.begin(), f.pixels.end(), x.v.begin());
    ctx.push_back(std::move(x));
  }
  const nn::Tensor<float> y = net.forward(ctx, nullptr, false, nullptr);
  SilhouetteFrame out(model.arch().input_h, model.arch().input_w);
  std::copy(y.v.begin(), y.v.end(), out.pixels.begin());
  return out;
}

inline SilhouetteFrame predict_next(const ReconstructorModel& model,
                                    const std::vector<SilhouetteFrame>& context) {
  return predict_next(model, std::span<const SilhouetteFrame>(context));
}

struct ReconstructorTrainConfig {
  int epochs = 62;
  double learning_rate = 1e-3;
  double lambda_bce = 1.0;    // weight of the pixel-wise cross-entropy term
  double lambda_dice = -1.0;  // weight of the dice term (negative: maximize)
  int k_min = 5, k_max = 10;  // context length range, sampled per batch
  int batch_size = 8;
  int steps_per_epoch = 0;    // 0: about one pass over all windows
  double plateau_epsilon = 0.0;  // 0: run exactly `epochs`
  std::uint64_t seed = 0;

  void check() const {
    if (epochs < 1) throw config_error("reconstructor: epochs >= 1 required");
    if (k_min < 1 || k_max < k_min) throw config_error("reconstructor: bad context range");
    if (batch_size < 1 || learning_rate <= 0.0)
      throw config_error("reconstructor: bad train config");
  }
};

// Number of (context window -> next frame) pairs a corpus yields at a fixed
// context length.
inline std::size_t count_training_windows(const std::vector<SilhouetteSequence>& sequences,
                                          int k) {
  std::size_t total = 0;
  for (const auto& s : sequences)
    if (s.length() > k) total += static_cast<std::size_t>(s.length() - k);
  return total;
}

struct ReconstructorTrainResult {
  ReconstructorModel model;
  std::vector<double> epoch_loss;
  int epochs_run = 0;
};

inline ReconstructorTrainResult train_reconstructor(
    const std::vector<SilhouetteSequence>& sequences, const ReconstructorArch& arch,
    const ReconstructorTrainConfig& config) {
  config.check();
  arch.check();
  if (sequences.empty()) throw data_error("train_reconstructor: empty corpus");
  for (const auto& s : sequences) {
    if (s.length() <= config.k_max)
      throw data_error("train_reconstructor: sequence '" + s.sequence_id +
                       "' shorter than max context length + 1");
    s.check();
    for (const auto& f : s.frames)
      if (f.height != arch.input_h || f.width != arch.input_w)
        throw data_error("train_reconstructor: frame dimensions do not match model input");
  }

  ReconstructorTrainResult result;
  result.model = ReconstructorModel(arch, config.seed);
  auto& net = result.model.net();

  nn::RmsProp<float> opt;
  opt.lr = static_cast<float>(config.learning_rate);
  opt.attach(net.params());

  Rng rng(Rng::mix(config.seed, 0x7e57ULL));

  int steps = config.steps_per_epoch;
  if (steps <= 0) {
    const std::size_t windows = count_training_windows(sequences, config.k_max);
    steps = std::max<int>(1, static_cast<int>((windows + config.batch_size - 1) /
                                              config.batch_size));
  }

  const int S_h = arch.input_h, S_w = arch.input_w;
  const float noise_std = static_cast<float>(arch.noise_std);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t samples = 0;
    for (int step = 0; step < steps; ++step) {
      const int k = static_cast<int>(rng.uniform_int(config.k_min, config.k_max));
      const int b = config.batch_size;
      std::vector<nn::Tensor<float>> ctx(k, nn::Tensor<float>(b, 1, S_h, S_w));
      nn::Tensor<float> gt(b, 1, S_h, S_w);
      for (int i = 0; i < b; ++i) {
        const auto& seq = sequences[rng.uniform_int(0, static_cast<int>(sequences.size()) - 1)];
        const int start = static_cast<int>(rng.uniform_int(0, seq.length() - k - 1));
        for (int t = 0; t < k; ++t) {
          const auto& f = seq.frames[start + t];
          float* dst = ctx[t].plane(i, 0);
          for (std::size_t p = 0; p < f.size(); ++p) {
            float v = f.pixels[p];
            if (noise_std > 0.0f) v += static_cast<float>(rng.normal(0.0, noise_std));
            dst[p] = v;
          }
        }
        const auto& target = seq.frames[start + k];
        std::copy(target.pixels.begin(), target.pixels.end(), gt.plane(i, 0));
      }

      typename nnrec::Net<float>::Cache cache;
      const nn::Tensor<float> y = net.forward(ctx, &cache, true, &rng);

      nn::Tensor<float> dy = nn::Tensor<float>::zeros_like(y);
      const std::size_t plane = static_cast<std::size_t>(S_h) * S_w;
      for (int i = 0; i < b; ++i) {
        std::span<const float> pred(y.data() + i * plane, plane);
        std::span<const float> truth(gt.data() + i * plane, plane);
        epoch_loss += total_loss<float>(pred, truth, static_cast<float>(config.lambda_bce),
                                        static_cast<float>(config.lambda_dice));
        const std::vector<float> grad =
            total_loss_grad<float>(pred, truth, static_cast<float>(config.lambda_bce),
                                   static_cast<float>(config.lambda_dice));
        float* gp = dy.data() + i * plane;
        for (std::size_t p = 0; p < plane; ++p) gp[p] = grad[p] / b;
        ++samples;
      }
      net.backward(cache, dy);
      opt.step();
    }
    epoch_loss /= static_cast<double>(samples);
    if (!std::isfinite(epoch_loss))
      throw model_error("train_reconstructor: non-finite epoch loss");
    result.epoch_loss.push_back(epoch_loss);
    result.epochs_run = epoch;
    if (config.plateau_epsilon > 0.0 && epoch >= 2 &&
        std::abs(result.epoch_loss[epoch - 1] - result.epoch_loss[epoch - 2]) <
            config.plateau_epsilon)
      break;
  }
  return result;
}

// Replace each occluded frame, in ascending order, by the binarized
// prediction from all frames before it; earlier repairs feed later contexts.
// Un-occluded frames pass through bit-identically.
inline SilhouetteSequence reconstruct_sequence(const ReconstructorModel& model,
                                               const SilhouetteSequence& seq) {
  if (!seq.occlusion_mask) throw data_error("reconstruct_sequence: mask missing");
  seq.check();
  const auto& mask = *seq.occlusion_mask;
  if (!mask.empty() && mask[0])
    throw data_error("reconstruct_sequence: occluded frame at index 0");
  for (const auto& f : seq.frames) model.check_dims(f);

  SilhouetteSequence out = seq;
  for (int i = 1; i < out.length(); ++i) {
    if (!mask[i]) continue;
    std::span<const SilhouetteFrame> context(out.frames.data(), static_cast<std::size_t>(i));
    const SilhouetteFrame pred = predict_next(model, context);
    out.frames[i] = validate_binary(pred, 0.0).frame;
  }
  out.occlusion_mask = std::vector<bool>(out.frames.size(), false);
  return out;
}

}  // namespace rgait
