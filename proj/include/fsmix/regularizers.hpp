#pragma once

#include <functional>

#include "fsmix/feature_stats.hpp"
#include "fsmix/networks.hpp"
#include "fsmix/stylizer.hpp"

namespace fsmix {

// Uniform random permutation of the batch axis; self-pairing is allowed
// (a self-paired sample contributes exactly zero mixing loss).
Tensor shuffle_references(const Tensor& batch, Rng& rng);

// Mean squared gap between the plain logit and the mixed-pass logit,
// E[(D(c) - D_FSM(c, s))^2]. When the caller already holds D(c) for the same
// batch it can pass the logits to share the subgraph; values are identical
// either way because the forward pass is deterministic.
ad::Var fsmr_loss(const Discriminator& disc, const ad::Var& contents, const ad::Var& refs,
                  const MixPolicy& policy, Rng& rng,
                  const ad::Var* precomputed_logits = nullptr);

// E[(D(c) - D(T(c, s)))^2] with an explicit stylizer T. The stylized images
// are data (no gradient flows into T).
ad::Var onthefly_consistency_loss(const Discriminator& disc, const ad::Var& contents,
                                  const Tensor& styles, const StylizerBase& stylizer,
                                  const ad::Var* precomputed_logits = nullptr);

// Balanced consistency regularization under a label-preserving augmentation:
// lambda_real * E[(D(r) - D(aug(r)))^2] + lambda_fake * E[(D(f) - D(aug(f)))^2].
using AugmentFn = std::function<Tensor(const Tensor&)>;
ad::Var bcr_loss(const Discriminator& disc, const ad::Var& reals, const ad::Var& fakes,
                 const AugmentFn& augment, double lambda_real, double lambda_fake,
                 const ad::Var* precomputed_real_logits = nullptr,
                 const ad::Var* precomputed_fake_logits = nullptr);

// (gamma / 2) * E[ ||d D(x) / d x||^2 ] at real samples. Differentiable in
// the discriminator parameters (double backward).
ad::Var r1_penalty(const Discriminator& disc, const ad::Var& reals, double gamma);

// adv + sum_i weight_i * component_i. Weights must be nonnegative.
ad::Var total_disc_loss(const ad::Var& adv,
                        const std::vector<std::pair<ad::Var, double>>& components);

}  // namespace fsmix
