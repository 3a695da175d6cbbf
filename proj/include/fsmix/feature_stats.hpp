#pragma once

#include <vector>

#include "fsmix/autodiff.hpp"
#include "fsmix/common.hpp"
#include "fsmix/ops.hpp"

namespace fsmix {

class Discriminator;

constexpr double kStatsEpsilon = 1e-5;

// Per-channel spatial mean and standard deviation, [B,C] each.
// sigma = sqrt(population variance + epsilon^2), so constant channels map
// to sigma == epsilon and divisions stay safe.
struct ChannelStatsV {
  ad::Var mu;
  ad::Var sigma;
};

ChannelStatsV channel_stats(const ad::Var& x, double epsilon = kStatsEpsilon);

// Renormalizes x's per-channel statistics to y's. Spatial sizes may differ;
// only y's statistics are used. Differentiable w.r.t. both arguments.
ad::Var adain(const ad::Var& x, const ad::Var& y, double epsilon = kStatsEpsilon);

// Same affine map with externally supplied statistics [B,C] (ablation path).
ad::Var adain_with_stats(const ad::Var& x, const ad::Var& mu_y, const ad::Var& sigma_y,
                         double epsilon = kStatsEpsilon);

// alpha * x + (1 - alpha) * adain(x, y). alpha in [0,1]; the tensor form
// carries one alpha per sample.
ad::Var fsm(const ad::Var& x, const ad::Var& y, double alpha, double epsilon = kStatsEpsilon);
ad::Var fsm(const ad::Var& x, const ad::Var& y, const Tensor& alpha,
            double epsilon = kStatsEpsilon);
ad::Var fsm_with_stats(const ad::Var& x, const ad::Var& mu_y, const ad::Var& sigma_y,
                       const Tensor& alpha, double epsilon = kStatsEpsilon);

// Discriminator layer boundaries where mixing happens; boundary i sits
// between layer i and layer i+1, 1-based, so valid indices are 1..n-1.
struct LayerTapSet {
  std::vector<int> indices;

  static LayerTapSet all(int n_layers);
  bool contains(int boundary) const;
  void validate(int n_layers) const;
  bool empty() const { return indices.empty(); }
};

enum class AlphaDistribution { Uniform, Fixed };
enum class MixTarget { RealOnly, FakeOnly, Both };

// Full mixing configuration used by the regularizer and the trainer.
struct MixPolicy {
  AlphaDistribution alpha_dist = AlphaDistribution::Uniform;
  double alpha_fixed = 0.5;        // used when alpha_dist == Fixed
  bool per_layer_alpha = false;    // redraw alpha at every tapped boundary
  LayerTapSet taps;                // empty means all boundaries
  MixTarget target = MixTarget::Both;
  double lambda_fsmr = 10.0;
  double epsilon = kStatsEpsilon;

  void validate() const;
};

// One draw per mixed forward pass (shared across tapped layers) unless
// per_layer_alpha redraws it. Deterministic under the caller's rng.
double sample_alpha(Rng& rng, const MixPolicy& policy);
// One alpha per sample of a batch.
Tensor sample_alpha_batch(Rng& rng, const MixPolicy& policy, int64_t batch);

// Per-sample alphas for the mixed pass: `shared` is used at every tapped
// boundary unless `per_tap` is populated (one row per tap, in tap order).
struct AlphaPlan {
  Tensor shared;             // [B]
  std::vector<Tensor> per_tap;  // optional, size == number of taps

  static AlphaPlan constant(double alpha, int64_t batch);
  static AlphaPlan draw(Rng& rng, const MixPolicy& policy, int64_t batch, int n_taps);
};

struct MixedForwardResult {
  ad::Var logit;          // [B], Linear head of the content branch
  ad::Var final_content;  // x_n after the last layer
  ad::Var final_style;    // y_n (computed but unused by the logit)
  std::vector<ad::Var> content_features;  // x_i for every layer, in order
};

// The mixed feed-forward recurrence: both branches are carried through all
// layers, cross-mixing at every tapped boundary, and only the content
// branch feeds the head.
MixedForwardResult mixed_forward(const Discriminator& disc, const ad::Var& content,
                                 const ad::Var& style, const AlphaPlan& alphas,
                                 const LayerTapSet& taps, double epsilon = kStatsEpsilon);
MixedForwardResult mixed_forward(const Discriminator& disc, const ad::Var& content,
                                 const ad::Var& style, double alpha,
                                 const LayerTapSet& taps, double epsilon = kStatsEpsilon);

// Same recurrence with injected reference statistics per tapped boundary
// (the arbitrary-statistics ablation). stats[t] = {mu, sigma} for tap t.
struct InjectedStats {
  std::vector<std::pair<Tensor, Tensor>> per_tap;  // [B,C_t] each
};
ad::Var mixed_forward_injected(const Discriminator& disc, const ad::Var& content,
                               const AlphaPlan& alphas, const LayerTapSet& taps,
                               const InjectedStats& stats, double epsilon = kStatsEpsilon);

}  // namespace fsmix
