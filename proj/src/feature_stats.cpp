#include "fsmix/feature_stats.hpp"

#include <algorithm>
#include <cmath>

#include "fsmix/networks.hpp"

namespace fsmix {

namespace ad = fsmix::ad;

namespace {

void check_finite(const ad::Var& x, const char* who) {
  if (!x.val().all_finite())
    throw InvalidInputError(std::string(who) + ": input contains non-finite values");
}

void check_epsilon(double epsilon, const char* who) {
  if (!(epsilon > 0.0))
    throw InvalidArgumentError(std::string(who) + ": epsilon must be positive");
}

// Accepts [C,H,W] or [B,C,H,W]; returns a 4-d view.
ad::Var as_batched(const ad::Var& x, bool& was_3d, const char* who) {
  const int nd = x.val().ndim();
  if (nd == 4) {
    was_3d = false;
    return x;
  }
  if (nd == 3) {
    was_3d = true;
    auto s = x.val().shape();
    return ad::reshape(x, {1, s[0], s[1], s[2]});
  }
  throw ShapeError(std::string(who) + ": expected [C,H,W] or [B,C,H,W], got " + shape_str(x.val()));
}

// Constant [B,C,H,W] field carrying one alpha value per sample.
Tensor alpha_field(const Tensor& alpha, int64_t B, int64_t C, int64_t H, int64_t W) {
  if (alpha.ndim() != 1 || alpha.dim(0) != B)
    throw ShapeError("fsm: per-sample alpha must have shape [B]");
  Tensor out({B, C, H, W});
  const int64_t plane = C * H * W;
  for (int64_t b = 0; b < B; ++b) {
    const double a = alpha[b];
    if (!(a >= 0.0 && a <= 1.0))
      throw InvalidArgumentError("fsm: alpha must lie in [0, 1]");
    double* p = out.ptr() + b * plane;
    for (int64_t i = 0; i < plane; ++i) p[i] = a;
  }
  return out;
}

struct StatsParts {
  ad::Var mu, sigma, centered;  // centered kept for reuse by adain
};

StatsParts stats_parts(const ad::Var& x4, double epsilon) {
  const int64_t H = x4.val().dim(2), W = x4.val().dim(3);
  ad::Var mu = ad::spatial_mean(x4);
  ad::Var centered = ad::sub(x4, ad::bcast_spatial(mu, H, W));
  ad::Var var = ad::spatial_mean(ad::square(centered));
  ad::Var sigma = ad::vsqrt(ad::add_scalar(var, epsilon * epsilon));
  return {mu, sigma, centered};
}

ad::Var adain_core(const ad::Var& x4, const ad::Var& mu_y, const ad::Var& sigma_y,
                   double epsilon) {
  const int64_t H = x4.val().dim(2), W = x4.val().dim(3);
  StatsParts sx = stats_parts(x4, epsilon);
  ad::Var normalized = ad::div(sx.centered, ad::bcast_spatial(sx.sigma, H, W));
  return ad::add(ad::mul(normalized, ad::bcast_spatial(sigma_y, H, W)),
                 ad::bcast_spatial(mu_y, H, W));
}

}  // namespace

ChannelStatsV channel_stats(const ad::Var& x, double epsilon) {
  check_epsilon(epsilon, "channel_stats");
  check_finite(x, "channel_stats");
  bool was_3d = false;
  ad::Var x4 = as_batched(x, was_3d, "channel_stats");
  StatsParts p = stats_parts(x4, epsilon);
  if (was_3d) {
    const int64_t C = x4.val().dim(1);
    return {ad::reshape(p.mu, {C}), ad::reshape(p.sigma, {C})};
  }
  return {p.mu, p.sigma};
}

ad::Var adain(const ad::Var& x, const ad::Var& y, double epsilon) {
  check_epsilon(epsilon, "adain");
  check_finite(x, "adain");
  check_finite(y, "adain");
  bool x3 = false, y3 = false;
  ad::Var x4 = as_batched(x, x3, "adain");
  ad::Var y4 = as_batched(y, y3, "adain");
  if (x4.val().dim(1) != y4.val().dim(1))
    throw ShapeError("adain: channel counts differ (" + std::to_string(x4.val().dim(1)) +
                     " vs " + std::to_string(y4.val().dim(1)) + ")");
  if (x4.val().dim(0) != y4.val().dim(0))
    throw ShapeError("adain: batch sizes differ");
  StatsParts sy = stats_parts(y4, epsilon);
  ad::Var out = adain_core(x4, sy.mu, sy.sigma, epsilon);
  if (x3) {
    auto s = x.val().shape();
    return ad::reshape(out, s);
  }
  return out;
}

ad::Var adain_with_stats(const ad::Var& x, const ad::Var& mu_y, const ad::Var& sigma_y,
                         double epsilon) {
  check_epsilon(epsilon, "adain_with_stats");
  check_finite(x, "adain_with_stats");
  bool x3 = false;
  ad::Var x4 = as_batched(x, x3, "adain_with_stats");
  ad::Var mu = mu_y, sigma = sigma_y;
  if (mu.val().ndim() == 1) mu = ad::reshape(mu, {1, mu.val().dim(0)});
  if (sigma.val().ndim() == 1) sigma = ad::reshape(sigma, {1, sigma.val().dim(0)});
  if (mu.val().dim(1) != x4.val().dim(1) || sigma.val().dim(1) != x4.val().dim(1))
    throw ShapeError("adain_with_stats: stats channel count mismatch");
  if (mu.val().dim(0) != x4.val().dim(0) || sigma.val().dim(0) != x4.val().dim(0))
    throw ShapeError("adain_with_stats: stats batch size mismatch");
  ad::Var out = adain_core(x4, mu, sigma, epsilon);
  if (x3) return ad::reshape(out, x.val().shape());
  return out;
}

ad::Var fsm(const ad::Var& x, const ad::Var& y, double alpha, double epsilon) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw InvalidArgumentError("fsm: alpha must lie in [0, 1]");
  // Exact endpoints: no arithmetic is applied at alpha == 1 or 0.
  if (alpha == 1.0) {
    check_finite(x, "fsm");
    return x;
  }
  if (alpha == 0.0) return adain(x, y, epsilon);
  ad::Var mixed = adain(x, y, epsilon);
  return ad::add(ad::scale(x, alpha), ad::scale(mixed, 1.0 - alpha));
}

ad::Var fsm(const ad::Var& x, const ad::Var& y, const Tensor& alpha, double epsilon) {
  double lo = 1.0, hi = 0.0;
  for (int64_t i = 0; i < alpha.numel(); ++i) {
    lo = std::min(lo, alpha[i]);
    hi = std::max(hi, alpha[i]);
  }
  if (lo == hi) return fsm(x, y, lo, epsilon);  // constant alpha, exact endpoints apply
  bool x3 = false, y3 = false;
  ad::Var x4 = as_batched(x, x3, "fsm");
  ad::Var y4 = as_batched(y, y3, "fsm");
  ad::Var mixed = adain(x4, y4, epsilon);
  const auto& s = x4.val().shape();
  Tensor af = alpha_field(alpha, s[0], s[1], s[2], s[3]);
  Tensor comp(af.shape());
  for (int64_t i = 0; i < af.numel(); ++i) comp[i] = 1.0 - af[i];
  ad::Var out = ad::add(ad::mul(x4, ad::make_leaf(std::move(af))),
                        ad::mul(mixed, ad::make_leaf(std::move(comp))));
  if (x3) return ad::reshape(out, x.val().shape());
  return out;
}

ad::Var fsm_with_stats(const ad::Var& x, const ad::Var& mu_y, const ad::Var& sigma_y,
                       const Tensor& alpha, double epsilon) {
  double lo = 1.0, hi = 0.0;
  for (int64_t i = 0; i < alpha.numel(); ++i) {
    lo = std::min(lo, alpha[i]);
    hi = std::max(hi, alpha[i]);
    if (!(alpha[i] >= 0.0 && alpha[i] <= 1.0))
      throw InvalidArgumentError("fsm_with_stats: alpha must lie in [0, 1]");
  }
  if (lo == 1.0 && hi == 1.0) {
    check_finite(x, "fsm_with_stats");
    return x;
  }
  bool x3 = false;
  ad::Var x4 = as_batched(x, x3, "fsm_with_stats");
  ad::Var mixed = adain_with_stats(x4, mu_y, sigma_y, epsilon);
  if (lo == 0.0 && hi == 0.0) return x3 ? ad::reshape(mixed, x.val().shape()) : mixed;
  const auto& s = x4.val().shape();
  Tensor af = alpha_field(alpha, s[0], s[1], s[2], s[3]);
  Tensor comp(af.shape());
  for (int64_t i = 0; i < af.numel(); ++i) comp[i] = 1.0 - af[i];
  ad::Var out = ad::add(ad::mul(x4, ad::make_leaf(std::move(af))),
                        ad::mul(mixed, ad::make_leaf(std::move(comp))));
  if (x3) return ad::reshape(out, x.val().shape());
  return out;
}

LayerTapSet LayerTapSet::all(int n_layers) {
  LayerTapSet t;
  for (int i = 1; i < n_layers; ++i) t.indices.push_back(i);
  return t;
}

bool LayerTapSet::contains(int boundary) const {
  return std::find(indices.begin(), indices.end(), boundary) != indices.end();
}

void LayerTapSet::validate(int n_layers) const {
  for (int i : indices)
    if (i < 1 || i >= n_layers)
      throw ConfigError("LayerTapSet: boundary " + std::to_string(i) +
                        " out of range 1.." + std::to_string(n_layers - 1));
}

void MixPolicy::validate() const {
  if (lambda_fsmr < 0.0) throw ConfigError("MixPolicy: lambda_fsmr must be nonnegative");
  if (alpha_dist == AlphaDistribution::Fixed &&
      !(alpha_fixed >= 0.0 && alpha_fixed <= 1.0))
    throw ConfigError("MixPolicy: alpha_fixed must lie in [0, 1]");
  if (!(epsilon > 0.0)) throw ConfigError("MixPolicy: epsilon must be positive");
}

double sample_alpha(Rng& rng, const MixPolicy& policy) {
  if (policy.alpha_dist == AlphaDistribution::Fixed) return policy.alpha_fixed;
  return rng.uniform();
}

Tensor sample_alpha_batch(Rng& rng, const MixPolicy& policy, int64_t batch) {
  Tensor a({batch});
  for (int64_t b = 0; b < batch; ++b) a[b] = sample_alpha(rng, policy);
  return a;
}

AlphaPlan AlphaPlan::constant(double alpha, int64_t batch) {
  AlphaPlan p;
  p.shared = Tensor::full({batch}, alpha);
  return p;
}

AlphaPlan AlphaPlan::draw(Rng& rng, const MixPolicy& policy, int64_t batch, int n_taps) {
  AlphaPlan p;
  if (policy.per_layer_alpha) {
    p.shared = Tensor::full({batch}, 1.0);  // unused when per_tap is set
    for (int t = 0; t < n_taps; ++t) p.per_tap.push_back(sample_alpha_batch(rng, policy, batch));
  } else {
    p.shared = sample_alpha_batch(rng, policy, batch);
  }
  return p;
}

static const Tensor& plan_alpha(const AlphaPlan& plan, int tap_ordinal) {
  if (!plan.per_tap.empty()) {
    if (tap_ordinal >= static_cast<int>(plan.per_tap.size()))
      throw ConfigError("AlphaPlan: fewer per-tap alphas than taps");
    return plan.per_tap[static_cast<size_t>(tap_ordinal)];
  }
  return plan.shared;
}

MixedForwardResult mixed_forward(const Discriminator& disc, const ad::Var& content,
                                 const ad::Var& style, const AlphaPlan& alphas,
                                 const LayerTapSet& taps_in, double epsilon) {
  if (!content.val().same_shape(style.val()))
    throw ShapeError("mixed_forward: content and style shapes differ");
  const int n = disc.n_layers();
  LayerTapSet taps = taps_in.empty() ? LayerTapSet::all(n) : taps_in;
  taps.validate(n);

  MixedForwardResult r;
  ad::Var x = disc.apply_layer(0, content);
  ad::Var y = disc.apply_layer(0, style);
  r.content_features.push_back(x);
  int tap_ordinal = 0;
  for (int layer = 1; layer < n; ++layer) {
    // boundary `layer` (1-based) sits in front of this layer
    if (taps.contains(layer)) {
      const Tensor& a = plan_alpha(alphas, tap_ordinal++);
      ad::Var xin = fsm(x, y, a, epsilon);
      ad::Var yin = fsm(y, x, a, epsilon);
      x = disc.apply_layer(layer, xin);
      y = disc.apply_layer(layer, yin);
    } else {
      x = disc.apply_layer(layer, x);
      y = disc.apply_layer(layer, y);
    }
    r.content_features.push_back(x);
  }
  r.final_content = x;
  r.final_style = y;
  r.logit = disc.head(x);
  return r;
}

MixedForwardResult mixed_forward(const Discriminator& disc, const ad::Var& content,
                                 const ad::Var& style, double alpha,
                                 const LayerTapSet& taps, double epsilon) {
  bool c3 = content.val().ndim() == 3;
  ad::Var c = content, s = style;
  if (c3) {
    bool t;
    c = as_batched(content, t, "mixed_forward");
    s = as_batched(style, t, "mixed_forward");
  }
  return mixed_forward(disc, c, s, AlphaPlan::constant(alpha, c.val().dim(0)), taps, epsilon);
}

ad::Var mixed_forward_injected(const Discriminator& disc, const ad::Var& content,
                               const AlphaPlan& alphas, const LayerTapSet& taps_in,
                               const InjectedStats& stats, double epsilon) {
  const int n = disc.n_layers();
  LayerTapSet taps = taps_in.empty() ? LayerTapSet::all(n) : taps_in;
  taps.validate(n);
  if (stats.per_tap.size() != taps.indices.size())
    throw ConfigError("mixed_forward_injected: one stats pair per tap required");

  ad::Var x = disc.apply_layer(0, content);
  int tap_ordinal = 0;
  for (int layer = 1; layer < n; ++layer) {
    if (taps.contains(layer)) {
      const auto& [mu, sigma] = stats.per_tap[static_cast<size_t>(tap_ordinal)];
      const Tensor& a = plan_alpha(alphas, tap_ordinal);
      ++tap_ordinal;
      x = disc.apply_layer(layer, fsm_with_stats(x, ad::make_leaf(mu), ad::make_leaf(sigma), a, epsilon));
    } else {
      x = disc.apply_layer(layer, x);
    }
  }
  return disc.head(x);
}

}  // namespace fsmix
