#include "doctest.h"

#include <cmath>

#include "fsmix/data.hpp"
#include "fsmix/metrics.hpp"
#include "test_util.hpp"

using namespace fsmix;
using namespace fsmix::test;
namespace ad = fsmix::ad;

TEST_SUITE_BEGIN("metrics");

namespace {

// Channel-moment embedding: [mu_0..mu_2, sigma_0..sigma_2] per image.
Tensor moment_embed(const Tensor& images) {
  const int64_t N = images.dim(0), C = images.dim(1), HW = images.dim(2) * images.dim(3);
  Tensor out({N, 2 * C});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const double* p = images.ptr() + (n * C + c) * HW;
      double m = 0;
      for (int64_t i = 0; i < HW; ++i) m += p[i];
      m /= HW;
      double v = 0;
      for (int64_t i = 0; i < HW; ++i) v += (p[i] - m) * (p[i] - m);
      out.at2(n, c) = m;
      out.at2(n, C + c) = std::sqrt(v / HW);
    }
  return out;
}

// Per-channel standardized pixels: invariant to any per-channel affine map,
// which is exactly what the pixel stylizer applies.
Tensor standardized_embed(const Tensor& images) {
  const int64_t N = images.dim(0), C = images.dim(1), HW = images.dim(2) * images.dim(3);
  Tensor out({N, C * HW});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const double* p = images.ptr() + (n * C + c) * HW;
      double m = 0;
      for (int64_t i = 0; i < HW; ++i) m += p[i];
      m /= HW;
      double v = 0;
      for (int64_t i = 0; i < HW; ++i) v += (p[i] - m) * (p[i] - m);
      const double sd = std::sqrt(v / HW + 1e-12);
      for (int64_t i = 0; i < HW; ++i) out.at2(n, c * HW + i) = (p[i] - m) / sd;
    }
  return out;
}

Tensor flat_embed(const Tensor& images) {
  const int64_t N = images.dim(0);
  return images.reshaped({N, images.numel() / N});
}

Tensor img_row(const Tensor& set, int64_t i) {
  const int64_t plane = set.numel() / set.dim(0);
  Tensor out({set.dim(1), set.dim(2), set.dim(3)});
  for (int64_t k = 0; k < plane; ++k) out[k] = set[i * plane + k];
  return out;
}

}  // namespace

TEST_CASE("cosine_distance: trivial identities") {
  Tensor u({3}, {1.0, 2.0, 3.0});
  Tensor nu({3}, {-1.0, -2.0, -3.0});
  Tensor o({3}, {-2.0, 1.0, 0.0});
  CHECK(cosine_distance(u, u) == doctest::Approx(0.0));
  CHECK(cosine_distance(u, nu) == doctest::Approx(2.0));
  CHECK(cosine_distance(u, o) == doctest::Approx(1.0));
  CHECK_THROWS_AS(cosine_distance(u, Tensor::zeros({3})), DegenerateMetricError);
  CHECK_THROWS_AS(cosine_distance(u, Tensor::zeros({4})), ShapeError);
}

TEST_CASE("style_distance: identical styles and identity transfer give zero") {
  Tensor contents = synthetic_dataset("colored-shapes", 4, 1);
  Tensor styles = synthetic_dataset("style-pack", 4, 2);
  PixelStylizer strength1(1.0);
  PixelStylizer strength0(0.0);  // identity transfer

  Tensor c = img_row(contents, 0);
  Tensor s1 = img_row(styles, 0);
  Tensor s2 = img_row(styles, 1);

  CHECK(style_distance(flat_embed, strength1, c, s1, s1) == doctest::Approx(0.0));
  CHECK(style_distance(flat_embed, strength0, c, s1, s2) == doctest::Approx(0.0));
}

TEST_CASE("style_distance: moment embedding reduces to style moment distance") {
  Tensor contents = synthetic_dataset("colored-shapes", 2, 3);
  Tensor styles = synthetic_dataset("style-pack", 4, 4);
  PixelStylizer stylizer(1.0);
  Tensor c = img_row(contents, 0);
  Tensor s1 = img_row(styles, 2);
  Tensor s2 = img_row(styles, 3);

  const double d = style_distance(moment_embed, stylizer, c, s1, s2);

  // Oracle: the stylized images carry the style images' channel moments, so
  // the embedding distance equals the moment-vector cosine distance of the
  // styles themselves.
  Tensor es = moment_embed(styles);
  Tensor e1({es.dim(1)}), e2({es.dim(1)});
  for (int64_t k = 0; k < es.dim(1); ++k) {
    e1[k] = es.at2(2, k);
    e2[k] = es.at2(3, k);
  }
  CHECK(d == doctest::Approx(cosine_distance(e1, e2)).epsilon(1e-6));
}

TEST_CASE("content_distance: mirror cases") {
  Tensor contents = synthetic_dataset("colored-shapes", 4, 5);
  Tensor styles = synthetic_dataset("style-pack", 2, 6);
  PixelStylizer stylizer(1.0);
  Tensor c1 = img_row(contents, 0);
  Tensor c2 = img_row(contents, 1);
  Tensor s = img_row(styles, 0);

  CHECK(content_distance(flat_embed, stylizer, c1, c1, s) == doctest::Approx(0.0));

  const double d = content_distance(standardized_embed, stylizer, c1, c2, s);
  // The standardized embedding is invariant to the stylizer's per-channel
  // affine map, so the distance equals the un-stylized one.
  Tensor e = standardized_embed(contents);
  Tensor e1({e.dim(1)}), e2({e.dim(1)});
  for (int64_t k = 0; k < e.dim(1); ++k) {
    e1[k] = e.at2(0, k);
    e2[k] = e.at2(1, k);
  }
  CHECK(d == doctest::Approx(cosine_distance(e1, e2)).epsilon(1e-9));
  CHECK(d >= 0.0);
  CHECK(d <= 2.0);
}

TEST_CASE("relative_distance: invariant embedding collapses rho, sensitive stays positive") {
  Tensor contents = synthetic_dataset("colored-shapes", 16, 7);
  Tensor styles = synthetic_dataset("style-pack", 16, 8);
  PixelStylizer stylizer(1.0);

  RelativeDistanceOptions opts;
  opts.n_pairs = 64;
  opts.seed = 11;

  DistanceReport inv = relative_distance(standardized_embed, stylizer, contents, styles, opts);
  CHECK(std::abs(inv.rho) < 0.01);

  DistanceReport sens = relative_distance(flat_embed, stylizer, contents, styles, opts);
  CHECK(sens.rho > 0.0);
  CHECK(sens.rho > inv.rho);
}

TEST_CASE("relative_distance: deterministic under seed") {
  Tensor contents = synthetic_dataset("colored-shapes", 8, 9);
  Tensor styles = synthetic_dataset("style-pack", 8, 10);
  PixelStylizer stylizer(1.0);
  RelativeDistanceOptions opts;
  opts.n_pairs = 32;
  opts.seed = 5;
  DistanceReport a = relative_distance(flat_embed, stylizer, contents, styles, opts);
  DistanceReport b = relative_distance(flat_embed, stylizer, contents, styles, opts);
  CHECK(a.rho == b.rho);
  CHECK(a.d_s_mean == b.d_s_mean);
  CHECK(a.d_c_mean == b.d_c_mean);
  CHECK(a.csv_row() == b.csv_row());
}

TEST_CASE("relative_distance: rho invariant to positive embedding scaling") {
  Tensor contents = synthetic_dataset("colored-shapes", 8, 12);
  Tensor styles = synthetic_dataset("style-pack", 8, 13);
  PixelStylizer stylizer(1.0);
  RelativeDistanceOptions opts;
  opts.n_pairs = 24;
  opts.seed = 3;

  auto scaled = [](const Tensor& images) {
    Tensor e = flat_embed(images);
    for (int64_t i = 0; i < e.numel(); ++i) e[i] *= 37.5;
    return e;
  };
  DistanceReport a = relative_distance(flat_embed, stylizer, contents, styles, opts);
  DistanceReport b = relative_distance(scaled, stylizer, contents, styles, opts);
  CHECK(a.rho == doctest::Approx(b.rho).epsilon(1e-9));
}

TEST_CASE("relative_distance: degenerate content set raises after resampling") {
  // All contents identical: every content distance is exactly zero.
  Tensor one = synthetic_dataset("colored-shapes", 1, 14);
  Tensor contents({4, 3, 32, 32});
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t k = 0; k < one.numel(); ++k) contents[i * one.numel() + k] = one[k];
  Tensor styles = synthetic_dataset("style-pack", 8, 15);
  PixelStylizer stylizer(1.0);
  RelativeDistanceOptions opts;
  opts.n_pairs = 4;
  opts.seed = 1;
  CHECK_THROWS_AS(relative_distance(flat_embed, stylizer, contents, styles, opts),
                  DegenerateMetricError);
}

TEST_CASE("relative_distance: mean-of-ratios vs ratio-of-means flag") {
  Tensor contents = synthetic_dataset("colored-shapes", 8, 20);
  Tensor styles = synthetic_dataset("style-pack", 8, 21);
  PixelStylizer stylizer(1.0);
  RelativeDistanceOptions opts;
  opts.n_pairs = 32;
  opts.seed = 2;
  DistanceReport mor = relative_distance(flat_embed, stylizer, contents, styles, opts);
  opts.ratio_of_means = true;
  DistanceReport rom = relative_distance(flat_embed, stylizer, contents, styles, opts);
  CHECK(rom.rho == doctest::Approx(mor.d_s_mean / mor.d_c_mean).epsilon(1e-9));
}

TEST_CASE("summarize_embeddings: moments and conventions") {
  // identical rows -> zero covariance
  Tensor same({3, 2}, {1.0, 2.0, 1.0, 2.0, 1.0, 2.0});
  GaussianSummary g = summarize_embeddings(same);
  CHECK(g.mean[0] == doctest::Approx(1.0));
  CHECK(g.mean[1] == doctest::Approx(2.0));
  for (int64_t i = 0; i < g.cov.numel(); ++i) CHECK(g.cov[i] == doctest::Approx(0.0));

  // two scalar embeddings: unbiased variance is half the squared gap
  Tensor two({2, 1}, {1.0, 3.0});
  GaussianSummary g2 = summarize_embeddings(two);
  CHECK(g2.cov[0] == doctest::Approx(0.5 * (3.0 - 1.0) * (3.0 - 1.0)));

  // symmetry
  Rng rng(3);
  Tensor emb = random_tensor({20, 5}, rng);
  GaussianSummary g3 = summarize_embeddings(emb);
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 5; ++j)
      CHECK(std::abs(g3.cov.at2(i, j) - g3.cov.at2(j, i)) < 1e-8);
}

TEST_CASE("frechet_distance: closed forms") {
  // identical summaries
  Rng rng(4);
  Tensor emb = random_tensor({40, 6}, rng);
  GaussianSummary g = summarize_embeddings(emb);
  CHECK(std::abs(frechet_distance(g, g)) < 1e-6);

  // 1-D, means 0 and 1, unit variances -> 1.0
  GaussianSummary a, b;
  a.mean = Tensor({1}, {0.0});
  a.cov = Tensor({1, 1}, {1.0});
  b.mean = Tensor({1}, {1.0});
  b.cov = Tensor({1, 1}, {1.0});
  CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-9));

  // diagonal case against the closed-form eigenvalue oracle
  const int64_t D = 5;
  GaussianSummary da, db;
  da.mean = Tensor({D});
  db.mean = Tensor({D});
  da.cov = Tensor({D, D});
  db.cov = Tensor({D, D});
  Rng r2(5);
  double expect = 0.0;
  for (int64_t i = 0; i < D; ++i) {
    da.mean[i] = r2.uniform(-1, 1);
    db.mean[i] = r2.uniform(-1, 1);
    const double l1 = r2.uniform(0.1, 2.0);
    const double l2 = r2.uniform(0.1, 2.0);
    da.cov.at2(i, i) = l1;
    db.cov.at2(i, i) = l2;
    const double md = da.mean[i] - db.mean[i];
    expect += md * md + (std::sqrt(l1) - std::sqrt(l2)) * (std::sqrt(l1) - std::sqrt(l2));
  }
  CHECK(frechet_distance(da, db) == doctest::Approx(expect).epsilon(1e-6));

  // symmetry
  CHECK(std::abs(frechet_distance(da, db) - frechet_distance(db, da)) < 1e-6);

  // dimension mismatch
  CHECK_THROWS_AS(frechet_distance(a, da), ShapeError);
}

TEST_CASE("frechet_distance: dense PSD case is symmetric and nonnegative") {
  Rng rng(6);
  GaussianSummary a = summarize_embeddings(random_tensor({30, 4}, rng));
  GaussianSummary b = summarize_embeddings(random_tensor({30, 4}, rng, 0.5, 2.0));
  const double dab = frechet_distance(a, b);
  const double dba = frechet_distance(b, a);
  CHECK(std::abs(dab - dba) < 1e-6);
  CHECK(dab > -1e-9);
}

TEST_SUITE_END();
