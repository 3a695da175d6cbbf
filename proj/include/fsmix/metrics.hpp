#pragma once

#include <functional>
#include <string>

#include "fsmix/networks.hpp"
#include "fsmix/stylizer.hpp"
#include "fsmix/tensor.hpp"

namespace fsmix {

// 1 - cos(u, v), in [0, 2]. Zero-norm inputs are degenerate.
double cosine_distance(const Tensor& u, const Tensor& v);

// Maps an image batch [N,C,H,W] to embedding rows [N,D].
using EmbedFn = std::function<Tensor(const Tensor&)>;

// Discriminator embedding (pooled features at the spec layer), evaluated
// without building graphs, in chunks of `batch`.
EmbedFn disc_embed_fn(const Discriminator& disc, const EmbeddingSpec& spec, int64_t batch = 32);

// d(T(c,s1), T(c,s2)): same content, two styles.
double style_distance(const EmbedFn& embed, const StylizerBase& stylizer, const Tensor& c,
                      const Tensor& s1, const Tensor& s2);
double style_distance(const Discriminator& disc, const StylizerBase& stylizer, const Tensor& c,
                      const Tensor& s1, const Tensor& s2, const EmbeddingSpec& spec);

// d(T(c1,s), T(c2,s)): two contents, same style.
double content_distance(const EmbedFn& embed, const StylizerBase& stylizer, const Tensor& c1,
                        const Tensor& c2, const Tensor& s);
double content_distance(const Discriminator& disc, const StylizerBase& stylizer, const Tensor& c1,
                        const Tensor& c2, const Tensor& s, const EmbeddingSpec& spec);

struct DistanceReport {
  double d_s_mean = 0.0;
  double d_c_mean = 0.0;
  double rho = 0.0;
  int64_t n_pairs = 0;
  uint64_t seed = 0;
  std::string content_set_id;
  std::string style_set_id;
  std::string model_id;

  static std::string csv_header();
  std::string csv_row() const;
  std::string jsonl() const;  // one-line structured record
};

struct RelativeDistanceOptions {
  int64_t n_pairs = 1024;
  uint64_t seed = 0;
  double dc_floor = 1e-6;  // tuples below this content distance are redrawn
  int max_resamples = 16;
  bool ratio_of_means = false;  // default: mean of per-tuple ratios
  std::string content_set_id = "contents";
  std::string style_set_id = "styles";
  std::string model_id = "model";
};

// Samples (c1, c2, s1, s2) tuples and averages d_s(c1,s1,s2) / d_c(s1,c1,c2).
// Deterministic under the seed in the options.
DistanceReport relative_distance(const EmbedFn& embed, const StylizerBase& stylizer,
                                 const Tensor& content_set, const Tensor& style_set,
                                 const RelativeDistanceOptions& opts);
DistanceReport relative_distance(const Discriminator& disc, const StylizerBase& stylizer,
                                 const Tensor& content_set, const Tensor& style_set,
                                 int64_t n_pairs, uint64_t seed, const EmbeddingSpec& spec);

struct GaussianSummary {
  Tensor mean;  // [D]
  Tensor cov;   // [D,D], symmetric PSD
};

// Sample mean and unbiased (n-1) covariance of embedding rows [N,D].
// Warns on stderr when N < D + 1 (covariance cannot be full rank).
GaussianSummary summarize_embeddings(const Tensor& embeddings);
GaussianSummary summarize_embeddings(const EmbedFn& embed, const Tensor& images);

// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}); eigenvalues of the
// product square root below -1e-6 raise a numerical error, small negatives
// are clamped to zero.
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

}  // namespace fsmix
