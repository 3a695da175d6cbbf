#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fsmix/feature_stats.hpp"
#include "fsmix/networks.hpp"
#include "fsmix/tensor.hpp"

namespace fsmix {

// Pixel-space per-channel moment transfer: every channel of `content` is
// renormalized to the corresponding channel statistics of `style`.
// Training-free and deterministic; images are [C,H,W] or [B,C,H,W].
Tensor pixel_adain_fallback(const Tensor& content, const Tensor& style,
                            double epsilon = kStatsEpsilon);

// Style-transfer interface used by the bias probe and the on-the-fly
// consistency baseline. Implementations are frozen at probe time; outputs
// carry no gradient graph.
class StylizerBase {
 public:
  virtual ~StylizerBase() = default;
  virtual Tensor stylize(const Tensor& content, const Tensor& style) const = 0;
  virtual double strength() const = 0;
  virtual std::string name() const = 0;
};

// T = identity stub; stylize returns the content untouched.
class IdentityStylizer final : public StylizerBase {
 public:
  Tensor stylize(const Tensor& content, const Tensor& style) const override;
  double strength() const override { return 0.0; }
  std::string name() const override { return "identity"; }
};

// The fallback stylizer: pixel-space FSM with alpha = 1 - strength.
class PixelStylizer final : public StylizerBase {
 public:
  explicit PixelStylizer(double strength = 1.0, double epsilon = kStatsEpsilon);
  Tensor stylize(const Tensor& content, const Tensor& style) const override;
  double strength() const override { return strength_; }
  std::string name() const override { return "pixel-adain"; }

 private:
  double strength_;
  double epsilon_;
};

// Learned encoder-decoder stylizer; mixing happens at the encoder feature
// level with alpha = 1 - strength.
class LearnedStylizer final : public StylizerBase {
 public:
  LearnedStylizer() = default;
  LearnedStylizer(int resolution, int channels, int feat_width, double strength, Rng& rng);

  Tensor stylize(const Tensor& content, const Tensor& style) const override;
  Tensor stylize_at(const Tensor& content, const Tensor& style, double strength) const;
  Tensor reconstruct(const Tensor& content) const;
  double strength() const override { return strength_; }
  void set_strength(double s) { strength_ = s; }
  std::string name() const override { return "learned-adain"; }

  ad::Var encode(const ad::Var& image) const;
  ad::Var decode(const ad::Var& features) const;

  std::vector<ad::Var> parameters();
  std::vector<std::pair<std::string, ad::Var>> named_parameters();

  int resolution() const { return resolution_; }
  void save(const std::string& path) const;
  static LearnedStylizer load(const std::string& path);

 private:
  int resolution_ = 0;
  int channels_ = 3;
  int feat_width_ = 32;
  double strength_ = 1.0;
  double lrelu_ = 0.2;
  ad::Var enc1_w_, enc1_b_, enc2_w_, enc2_b_;
  ad::Var dec1_w_, dec1_b_, dec2_w_, dec2_b_;
};

struct StylizerTrainConfig {
  int steps = 200;
  int batch = 8;
  double lr = 2e-4;
  uint64_t seed = 0;
  double stat_weight = 0.1;  // weight of the style moment-matching term
  double strength = 1.0;
  int feat_width = 32;
};

struct StylizerTrainResult {
  LearnedStylizer stylizer;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_history;
};

StylizerTrainResult train_stylizer(const Tensor& dataset, const Tensor& style_set,
                                   const StylizerTrainConfig& config);

// Decoder from one discriminator layer's features back to image space,
// used to visualize what mixing does to the features.
class FsmDecoder {
 public:
  FsmDecoder() = default;
  FsmDecoder(const Discriminator& disc, int tap_layer, Rng& rng);

  // Default tap: the layer whose spatial extent is resolution / 8.
  static int default_tap_layer(const Discriminator& disc);

  int tap_layer() const { return tap_layer_; }
  ad::Var decode(const ad::Var& features) const;
  Tensor reconstruct(const Discriminator& disc, const Tensor& images) const;

  std::vector<ad::Var> parameters();
  std::vector<std::pair<std::string, ad::Var>> named_parameters();

  void save(const std::string& path) const;
  static FsmDecoder load(const std::string& path);

 private:
  int tap_layer_ = -1;
  int resolution_ = 0;
  int channels_ = 3;
  std::vector<int64_t> input_shape_;  // (C,H,W) at the tap
  double lrelu_ = 0.2;
  struct Layer {
    ad::Var w, b;
  };
  std::vector<Layer> up_layers_;
  ad::Var rgb_w_, rgb_b_;
};

struct FsmDecoderTrainConfig {
  int steps = 300;
  int batch = 8;
  double lr = 2e-4;
  uint64_t seed = 0;
};

struct FsmDecoderTrainResult {
  FsmDecoder decoder;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Trains the decoder to invert the frozen discriminator's plain features
// at the tap layer.
FsmDecoderTrainResult train_fsm_decoder(const Discriminator& disc, const Tensor& dataset,
                                        int tap_layer, const FsmDecoderTrainConfig& config);

// Runs the mixed recurrence (mixing at every tapped boundary) up to the
// decoder's tap layer and decodes the mixed content-branch feature.
Tensor decode_fsm_features(const FsmDecoder& dec, const Discriminator& disc, const Tensor& content,
                           const Tensor& style, double alpha, const LayerTapSet& taps);

}  // namespace fsmix
