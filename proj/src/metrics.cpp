#include "fsmix/metrics.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

#include "fsmix/kernels.hpp"
#include "json.hpp"

namespace fsmix {

namespace ad = fsmix::ad;

double cosine_distance(const Tensor& u, const Tensor& v) {
  if (!u.same_shape(v)) throw ShapeError("cosine_distance: shape mismatch");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (int64_t i = 0; i < u.numel(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0)
    throw DegenerateMetricError("cosine_distance: zero-norm vector");
  return 1.0 - uv / (std::sqrt(uu) * std::sqrt(vv));
}

EmbedFn disc_embed_fn(const Discriminator& disc, const EmbeddingSpec& spec, int64_t batch) {
  const Discriminator* d = &disc;
  EmbeddingSpec sp = spec;
  return [d, sp, batch](const Tensor& images) {
    if (images.ndim() != 4) throw ShapeError("disc_embed_fn: expected [N,C,H,W]");
    ad::NoGradGuard ng;
    const int64_t N = images.dim(0);
    const int64_t dim = d->embed_dim(sp);
    Tensor out({N, dim});
    const int64_t plane = images.numel() / N;
    for (int64_t start = 0; start < N; start += batch) {
      const int64_t count = std::min(batch, N - start);
      Tensor chunk({count, images.dim(1), images.dim(2), images.dim(3)});
      for (int64_t i = 0; i < count * plane; ++i) chunk[i] = images[start * plane + i];
      Tensor emb = d->embed(ad::Var(std::move(chunk)), sp).val();
      for (int64_t i = 0; i < count * dim; ++i) out[start * dim + i] = emb[i];
    }
    return out;
  };
}

namespace {

Tensor row(const Tensor& set, int64_t idx) {
  const int64_t plane = set.numel() / set.dim(0);
  Tensor out({set.dim(1), set.dim(2), set.dim(3)});
  for (int64_t i = 0; i < plane; ++i) out[i] = set[idx * plane + i];
  return out;
}

Tensor embed_single(const EmbedFn& embed, const Tensor& img3d) {
  Tensor batch = img3d.reshaped({1, img3d.dim(0), img3d.dim(1), img3d.dim(2)});
  Tensor emb = embed(batch);
  return emb.reshaped({emb.dim(1)});
}

Tensor stack3(const Tensor& a, const Tensor& b, const Tensor& c) {
  const int64_t plane = a.numel();
  Tensor out({3, a.dim(0), a.dim(1), a.dim(2)});
  for (int64_t i = 0; i < plane; ++i) {
    out[i] = a[i];
    out[plane + i] = b[i];
    out[2 * plane + i] = c[i];
  }
  return out;
}

}  // namespace

double style_distance(const EmbedFn& embed, const StylizerBase& stylizer, const Tensor& c,
                      const Tensor& s1, const Tensor& s2) {
  Tensor t1 = stylizer.stylize(c, s1);
  Tensor t2 = stylizer.stylize(c, s2);
  return cosine_distance(embed_single(embed, t1), embed_single(embed, t2));
}

double style_distance(const Discriminator& disc, const StylizerBase& stylizer, const Tensor& c,
                      const Tensor& s1, const Tensor& s2, const EmbeddingSpec& spec) {
  return style_distance(disc_embed_fn(disc, spec), stylizer, c, s1, s2);
}

double content_distance(const EmbedFn& embed, const StylizerBase& stylizer, const Tensor& c1,
                        const Tensor& c2, const Tensor& s) {
  Tensor t1 = stylizer.stylize(c1, s);
  Tensor t2 = stylizer.stylize(c2, s);
  return cosine_distance(embed_single(embed, t1), embed_single(embed, t2));
}

double content_distance(const Discriminator& disc, const StylizerBase& stylizer, const Tensor& c1,
                        const Tensor& c2, const Tensor& s, const EmbeddingSpec& spec) {
  return content_distance(disc_embed_fn(disc, spec), stylizer, c1, c2, s);
}

std::string DistanceReport::csv_header() {
  return "d_s_mean,d_c_mean,rho,n_pairs,seed,model_id";
}

std::string DistanceReport::csv_row() const {
  std::ostringstream os;
  os.precision(12);
  os << d_s_mean << "," << d_c_mean << "," << rho << "," << n_pairs << "," << seed << ","
     << model_id;
  return os.str();
}

std::string DistanceReport::jsonl() const {
  nlohmann::json j;
  j["d_s_mean"] = d_s_mean;
  j["d_c_mean"] = d_c_mean;
  j["rho"] = rho;
  j["n_pairs"] = n_pairs;
  j["seed"] = seed;
  j["content_set_id"] = content_set_id;
  j["style_set_id"] = style_set_id;
  j["model_id"] = model_id;
  return j.dump();
}

DistanceReport relative_distance(const EmbedFn& embed, const StylizerBase& stylizer,
                                 const Tensor& content_set, const Tensor& style_set,
                                 const RelativeDistanceOptions& opts) {
  if (content_set.ndim() != 4 || content_set.dim(0) < 2)
    throw ConfigError("relative_distance: need at least 2 content images");
  if (style_set.ndim() != 4 || style_set.dim(0) < 2)
    throw ConfigError("relative_distance: need at least 2 style images");
  if (opts.n_pairs < 1) throw ConfigError("relative_distance: n_pairs must be >= 1");

  Rng rng(opts.seed);
  const int64_t NC = content_set.dim(0);
  const int64_t NS = style_set.dim(0);

  double sum_ds = 0.0, sum_dc = 0.0, sum_ratio = 0.0;
  for (int64_t t = 0; t < opts.n_pairs; ++t) {
    bool accepted = false;
    for (int attempt = 0; attempt <= opts.max_resamples && !accepted; ++attempt) {
      const int64_t i1 = rng.uniform_int(NC);
      const int64_t i2 = rng.uniform_int(NC);
      const int64_t j1 = rng.uniform_int(NS);
      const int64_t j2 = rng.uniform_int(NS);
      Tensor c1 = row(content_set, i1);
      Tensor c2 = row(content_set, i2);
      Tensor s1 = row(style_set, j1);
      Tensor s2 = row(style_set, j2);

      // One embedding call for the three stylized views of the tuple:
      // T(c1,s1) serves both the style and the content distance.
      Tensor t11 = stylizer.stylize(c1, s1);
      Tensor t12 = stylizer.stylize(c1, s2);
      Tensor t21 = stylizer.stylize(c2, s1);
      Tensor emb = embed(stack3(t11, t12, t21));
      const int64_t D = emb.dim(1);
      Tensor e11({D}), e12({D}), e21({D});
      for (int64_t k = 0; k < D; ++k) {
        e11[k] = emb.at2(0, k);
        e12[k] = emb.at2(1, k);
        e21[k] = emb.at2(2, k);
      }
      const double dc = cosine_distance(e11, e21);
      if (dc < opts.dc_floor) continue;  // degenerate denominator, redraw
      const double ds = cosine_distance(e11, e12);
      sum_ds += ds;
      sum_dc += dc;
      sum_ratio += ds / dc;
      accepted = true;
    }
    if (!accepted)
      throw DegenerateMetricError(
          "relative_distance: content distance stayed below the floor after " +
          std::to_string(opts.max_resamples) + " resamples");
  }

  DistanceReport r;
  r.n_pairs = opts.n_pairs;
  r.seed = opts.seed;
  r.content_set_id = opts.content_set_id;
  r.style_set_id = opts.style_set_id;
  r.model_id = opts.model_id;
  r.d_s_mean = sum_ds / static_cast<double>(opts.n_pairs);
  r.d_c_mean = sum_dc / static_cast<double>(opts.n_pairs);
  r.rho = opts.ratio_of_means ? (sum_ds / sum_dc)
                              : (sum_ratio / static_cast<double>(opts.n_pairs));
  return r;
}

DistanceReport relative_distance(const Discriminator& disc, const StylizerBase& stylizer,
                                 const Tensor& content_set, const Tensor& style_set,
                                 int64_t n_pairs, uint64_t seed, const EmbeddingSpec& spec) {
  RelativeDistanceOptions opts;
  opts.n_pairs = n_pairs;
  opts.seed = seed;
  return relative_distance(disc_embed_fn(disc, spec), stylizer, content_set, style_set, opts);
}

GaussianSummary summarize_embeddings(const Tensor& embeddings) {
  if (embeddings.ndim() != 2 || embeddings.dim(0) < 1)
    throw ConfigError("summarize_embeddings: need a nonempty [N,D] matrix");
  const int64_t N = embeddings.dim(0), D = embeddings.dim(1);
  if (N < D + 1)
    std::cerr << "[fsmix] warning: " << N << " embeddings for dimension " << D
              << "; covariance cannot be full rank\n";
  GaussianSummary g;
  g.mean = Tensor({D});
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < D; ++j) g.mean[j] += embeddings.at2(i, j);
  for (int64_t j = 0; j < D; ++j) g.mean[j] /= static_cast<double>(N);

  g.cov = Tensor({D, D});
  if (N > 1) {
    Tensor centered({N, D});
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = 0; j < D; ++j) centered.at2(i, j) = embeddings.at2(i, j) - g.mean[j];
    Tensor ct({D, N});
    kernels::transpose2d(centered.ptr(), ct.ptr(), N, D);
    kernels::matmul(ct.ptr(), centered.ptr(), g.cov.ptr(), D, N, D);
    const double inv = 1.0 / static_cast<double>(N - 1);
    for (int64_t i = 0; i < g.cov.numel(); ++i) g.cov[i] *= inv;
    // enforce exact symmetry against accumulation order effects
    for (int64_t i = 0; i < D; ++i)
      for (int64_t j = i + 1; j < D; ++j) {
        const double s = 0.5 * (g.cov.at2(i, j) + g.cov.at2(j, i));
        g.cov.at2(i, j) = s;
        g.cov.at2(j, i) = s;
      }
  }
  return g;
}

GaussianSummary summarize_embeddings(const EmbedFn& embed, const Tensor& images) {
  return summarize_embeddings(embed(images));
}

namespace {

// Cyclic Jacobi for symmetric matrices. vals ascendingly unordered; vecs
// holds eigenvectors in columns.
void jacobi_eigen(const Tensor& a_in, Tensor& vals, Tensor& vecs) {
  const int64_t n = a_in.dim(0);
  Tensor a = a_in;
  vecs = Tensor({n, n});
  for (int64_t i = 0; i < n; ++i) vecs.at2(i, i) = 1.0;

  double scale = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) scale = std::max(scale, std::abs(a[i]));
  if (scale == 0.0) {
    vals = Tensor({n});
    return;
  }
  const double tol = 1e-14 * scale;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int64_t p = 0; p < n; ++p)
      for (int64_t q = p + 1; q < n; ++q) off = std::max(off, std::abs(a.at2(p, q)));
    if (off <= tol) break;
    for (int64_t p = 0; p < n; ++p) {
      for (int64_t q = p + 1; q < n; ++q) {
        const double apq = a.at2(p, q);
        if (std::abs(apq) <= tol) continue;
        const double app = a.at2(p, p), aqq = a.at2(q, q);
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int64_t k = 0; k < n; ++k) {
          const double akp = a.at2(k, p), akq = a.at2(k, q);
          a.at2(k, p) = c * akp - s * akq;
          a.at2(k, q) = s * akp + c * akq;
        }
        for (int64_t k = 0; k < n; ++k) {
          const double apk = a.at2(p, k), aqk = a.at2(q, k);
          a.at2(p, k) = c * apk - s * aqk;
          a.at2(q, k) = s * apk + c * aqk;
        }
        for (int64_t k = 0; k < n; ++k) {
          const double vkp = vecs.at2(k, p), vkq = vecs.at2(k, q);
          vecs.at2(k, p) = c * vkp - s * vkq;
          vecs.at2(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  vals = Tensor({n});
  for (int64_t i = 0; i < n; ++i) vals[i] = a.at2(i, i);
}

// V diag(f(lambda)) V^T
Tensor eigen_rebuild(const Tensor& vals, const Tensor& vecs,
                     const std::function<double(double)>& f) {
  const int64_t n = vals.dim(0);
  Tensor scaled({n, n});  // vecs * diag(f)
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) scaled.at2(i, j) = vecs.at2(i, j) * f(vals[j]);
  Tensor vt({n, n});
  kernels::transpose2d(vecs.ptr(), vt.ptr(), n, n);
  Tensor out({n, n});
  kernels::matmul(scaled.ptr(), vt.ptr(), out.ptr(), n, n, n);
  return out;
}

}  // namespace

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  if (!a.mean.same_shape(b.mean) || !a.cov.same_shape(b.cov))
    throw ShapeError("frechet_distance: dimension mismatch");
  const int64_t n = a.mean.dim(0);

  double mean_term = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = a.mean[i] - b.mean[i];
    mean_term += d * d;
  }
  double tr_a = 0.0, tr_b = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    tr_a += a.cov.at2(i, i);
    tr_b += b.cov.at2(i, i);
  }

  // Tr((S_a S_b)^{1/2}) = Tr((sqrt(S_a) S_b sqrt(S_a))^{1/2}), which keeps
  // the eigenproblem symmetric.
  Tensor vals, vecs;
  jacobi_eigen(a.cov, vals, vecs);
  double scale_a = 0.0;
  for (int64_t i = 0; i < n; ++i) scale_a = std::max(scale_a, std::abs(vals[i]));
  const double clamp_tol = 1e-6 * std::max(1.0, scale_a);
  Tensor sqrt_a = eigen_rebuild(vals, vecs, [&](double l) {
    if (l < -clamp_tol) throw NumericalError("frechet_distance: covariance not PSD");
    return std::sqrt(std::max(0.0, l));
  });

  Tensor tmp({n, n}), m({n, n});
  kernels::matmul(sqrt_a.ptr(), b.cov.ptr(), tmp.ptr(), n, n, n);
  kernels::matmul(tmp.ptr(), sqrt_a.ptr(), m.ptr(), n, n, n);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) {
      const double s = 0.5 * (m.at2(i, j) + m.at2(j, i));
      m.at2(i, j) = s;
      m.at2(j, i) = s;
    }

  Tensor mvals, mvecs;
  jacobi_eigen(m, mvals, mvecs);
  double scale_m = 0.0;
  for (int64_t i = 0; i < n; ++i) scale_m = std::max(scale_m, std::abs(mvals[i]));
  const double m_tol = 1e-6 * std::max(1.0, scale_m);
  double tr_sqrt = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    if (mvals[i] < -m_tol)
      throw NumericalError("frechet_distance: product matrix has a significantly negative eigenvalue");
    tr_sqrt += std::sqrt(std::max(0.0, mvals[i]));
  }

  return mean_term + tr_a + tr_b - 2.0 * tr_sqrt;
}

}  // namespace fsmix
