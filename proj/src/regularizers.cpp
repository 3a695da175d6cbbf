#include "fsmix/regularizers.hpp"

#include <numeric>

namespace fsmix {

namespace ad = fsmix::ad;

Tensor shuffle_references(const Tensor& batch, Rng& rng) {
  if (batch.ndim() < 1 || batch.dim(0) < 1)
    throw ConfigError("shuffle_references: batch must hold at least one sample");
  const int64_t B = batch.dim(0);
  std::vector<int64_t> perm(static_cast<size_t>(B));
  std::iota(perm.begin(), perm.end(), 0);
  // Fisher-Yates with the caller's stream.
  for (int64_t i = B - 1; i > 0; --i) {
    const int64_t j = rng.uniform_int(i + 1);
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  Tensor out(batch.shape());
  const int64_t stride = batch.numel() / B;
  for (int64_t b = 0; b < B; ++b) {
    const double* src = batch.ptr() + perm[static_cast<size_t>(b)] * stride;
    double* dst = out.ptr() + b * stride;
    for (int64_t i = 0; i < stride; ++i) dst[i] = src[i];
  }
  return out;
}

ad::Var fsmr_loss(const Discriminator& disc, const ad::Var& contents, const ad::Var& refs,
                  const MixPolicy& policy, Rng& rng, const ad::Var* precomputed_logits) {
  policy.validate();
  if (!contents.val().same_shape(refs.val()))
    throw ShapeError("fsmr_loss: contents/refs shape mismatch");
  const int64_t B = contents.val().dim(0);
  const int n = disc.n_layers();
  LayerTapSet taps = policy.taps.empty() ? LayerTapSet::all(n) : policy.taps;
  taps.validate(n);

  AlphaPlan plan = AlphaPlan::draw(rng, policy, B, static_cast<int>(taps.indices.size()));
  auto mixed = mixed_forward(disc, contents, refs, plan, taps, policy.epsilon);
  ad::Var plain = precomputed_logits ? *precomputed_logits : disc.logit(contents);
  if (plain.val().numel() != B) throw ShapeError("fsmr_loss: precomputed logits batch mismatch");
  ad::Var gap = ad::sub(plain, mixed.logit);
  return ad::mean_all(ad::square(gap));
}

ad::Var onthefly_consistency_loss(const Discriminator& disc, const ad::Var& contents,
                                  const Tensor& styles, const StylizerBase& stylizer,
                                  const ad::Var* precomputed_logits) {
  if (!contents.val().same_shape(styles))
    throw ShapeError("onthefly_consistency_loss: contents/styles shape mismatch");
  Tensor stylized = stylizer.stylize(contents.val(), styles);
  ad::Var plain = precomputed_logits ? *precomputed_logits : disc.logit(contents);
  ad::Var moved = disc.logit(ad::make_leaf(std::move(stylized)));
  return ad::mean_all(ad::square(ad::sub(plain, moved)));
}

ad::Var bcr_loss(const Discriminator& disc, const ad::Var& reals, const ad::Var& fakes,
                 const AugmentFn& augment, double lambda_real, double lambda_fake,
                 const ad::Var* precomputed_real_logits,
                 const ad::Var* precomputed_fake_logits) {
  if (lambda_real < 0.0 || lambda_fake < 0.0)
    throw ConfigError("bcr_loss: lambdas must be nonnegative");
  ad::Var dr = precomputed_real_logits ? *precomputed_real_logits : disc.logit(reals);
  ad::Var df = precomputed_fake_logits ? *precomputed_fake_logits : disc.logit(fakes);
  ad::Var dra = disc.logit(ad::make_leaf(augment(reals.val())));
  ad::Var dfa = disc.logit(ad::make_leaf(augment(fakes.val())));
  ad::Var real_term = ad::mean_all(ad::square(ad::sub(dr, dra)));
  ad::Var fake_term = ad::mean_all(ad::square(ad::sub(df, dfa)));
  return ad::add(ad::scale(real_term, lambda_real), ad::scale(fake_term, lambda_fake));
}

ad::Var r1_penalty(const Discriminator& disc, const ad::Var& reals, double gamma) {
  if (gamma < 0.0) throw ConfigError("r1_penalty: gamma must be nonnegative");
  const int64_t B = reals.val().dim(0);
  // The inner input gradient needs its own graph even if the caller is in
  // a no-grad region.
  ad::EnableGradGuard grad_on;
  // A fresh leaf for the input so the gradient is taken at exactly these
  // samples regardless of what graph `reals` came from.
  ad::Var x = ad::make_leaf(reals.val(), true);
  ad::Var logits = disc.logit(x);
  // Per-sample input gradients via one backward of the logit sum (samples
  // are independent in the forward pass).
  auto gx = ad::grad(ad::sum_all(logits), {x}, {}, /*create_graph=*/true);
  ad::Var sq = ad::sum_all(ad::square(gx[0]));
  return ad::scale(sq, 0.5 * gamma / static_cast<double>(B));
}

ad::Var total_disc_loss(const ad::Var& adv,
                        const std::vector<std::pair<ad::Var, double>>& components) {
  ad::Var total = adv;
  for (const auto& [component, weight] : components) {
    if (weight < 0.0) throw ConfigError("total_disc_loss: weights must be nonnegative");
    if (weight == 0.0) continue;
    total = ad::add(total, ad::scale(component, weight));
  }
  return total;
}

}  // namespace fsmix
