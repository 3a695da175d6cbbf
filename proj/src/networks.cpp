#include "fsmix/networks.hpp"

#include <cmath>

#include "fsmix/checkpoint.hpp"

namespace fsmix {

namespace ad = fsmix::ad;

namespace {

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2i(int v) {
  int l = 0;
  while ((1 << l) < v) ++l;
  return l;
}

// Modified Gram-Schmidt over the columns of a [m, n] matrix, m >= n.
void orthonormal_columns(std::vector<double>& a, int64_t m, int64_t n, Rng& rng) {
  for (auto& v : a) v = rng.normal();
  for (int64_t j = 0; j < n; ++j) {
    for (int64_t i = 0; i < j; ++i) {
      double dot = 0.0;
      for (int64_t r = 0; r < m; ++r) dot += a[r * n + i] * a[r * n + j];
      for (int64_t r = 0; r < m; ++r) a[r * n + j] -= dot * a[r * n + i];
    }
    double norm = 0.0;
    for (int64_t r = 0; r < m; ++r) norm += a[r * n + j] * a[r * n + j];
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      // Degenerate draw; replace the column and redo it.
      for (int64_t r = 0; r < m; ++r) a[r * n + j] = rng.normal();
      --j;
      continue;
    }
    for (int64_t r = 0; r < m; ++r) a[r * n + j] /= norm;
  }
}

ad::Var param(Tensor t) { return ad::make_leaf(std::move(t), true); }

}  // namespace

void orthogonal_init(Tensor& w, int64_t rows, int64_t cols, Rng& rng, double gain) {
  if (rows * cols != w.numel()) throw ShapeError("orthogonal_init: rows*cols != numel");
  const bool tall = rows >= cols;
  const int64_t m = tall ? rows : cols;
  const int64_t n = tall ? cols : rows;
  std::vector<double> a(static_cast<size_t>(m * n));
  orthonormal_columns(a, m, n, rng);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c)
      w[r * cols + c] = gain * (tall ? a[r * n + c] : a[c * n + r]);
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

int DiscriminatorConfig::n_layers() const { return log2i(resolution) - 1; }

int DiscriminatorConfig::width(int layer) const {
  const int cap = base_width * 8;
  int w = base_width << layer;
  return w > cap ? cap : w;
}

void DiscriminatorConfig::validate() const {
  if (!is_pow2(resolution) || resolution < 8 || resolution > 256)
    throw ConfigError("DiscriminatorConfig: resolution must be a power of two in [8, 256]");
  if (in_channels < 1) throw ConfigError("DiscriminatorConfig: in_channels must be >= 1");
  if (base_width < 1) throw ConfigError("DiscriminatorConfig: base_width must be >= 1");
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int n = cfg_.n_layers();
  int in_ch = cfg_.in_channels;
  for (int i = 0; i < n; ++i) {
    const int out_ch = cfg_.width(i);
    Tensor w({out_ch, in_ch, 3, 3});
    orthogonal_init(w, out_ch, static_cast<int64_t>(in_ch) * 9, rng);
    layers_.push_back({param(std::move(w)), param(Tensor::zeros({out_ch}))});
    in_ch = out_ch;
  }
  // Final spatial extent is 2x2.
  const int64_t head_in = static_cast<int64_t>(in_ch) * 2 * 2;
  Tensor hw({1, head_in});
  orthogonal_init(hw, 1, head_in, rng);
  head_w_ = param(std::move(hw));
  head_b_ = param(Tensor::zeros({1}));
}

std::vector<int64_t> Discriminator::layer_output_shape(int layer0) const {
  if (layer0 < 0 || layer0 >= n_layers()) throw ConfigError("layer_output_shape: out of range");
  const int64_t c = cfg_.width(layer0);
  const int64_t s = cfg_.resolution >> (layer0 + 1);
  return {c, s, s};
}

void Discriminator::check_image(const ad::Var& image) const {
  const Tensor& t = image.val();
  if (t.ndim() != 4 || t.dim(1) != cfg_.in_channels || t.dim(2) != cfg_.resolution ||
      t.dim(3) != cfg_.resolution)
    throw ShapeError("discriminator: expected [B," + std::to_string(cfg_.in_channels) + "," +
                     std::to_string(cfg_.resolution) + "," + std::to_string(cfg_.resolution) +
                     "], got " + shape_str(t));
}

ad::Var Discriminator::apply_layer(int layer0, const ad::Var& x) const {
  if (layer0 < 0 || layer0 >= n_layers()) throw ConfigError("apply_layer: index out of range");
  const Layer& L = layers_[static_cast<size_t>(layer0)];
  const int64_t B = x.val().dim(0);
  const int64_t H = x.val().dim(2), W = x.val().dim(3);
  ad::Var y = ad::conv2d(x, L.w, 1);
  y = ad::add(y, ad::bcast_spatial(ad::bcast_rows(L.b, B), H, W));
  y = ad::leaky_relu(y, cfg_.lrelu_slope);
  return ad::avgpool2(y);
}

ad::Var Discriminator::head(const ad::Var& final_features) const {
  const Tensor& t = final_features.val();
  const int64_t B = t.dim(0);
  const int64_t flat = t.numel() / B;
  if (flat != head_w_.val().dim(1))
    throw ShapeError("discriminator head: feature size mismatch");
  ad::Var x = ad::reshape(final_features, {B, flat});
  ad::Var logits = ad::matmul(x, ad::transpose2(head_w_));  // [B,1]
  logits = ad::add(logits, ad::bcast_rows(head_b_, B));
  return ad::reshape(logits, {B});
}

Discriminator::ForwardResult Discriminator::forward(const ad::Var& image) const {
  check_image(image);
  ForwardResult r;
  ad::Var x = image;
  for (int i = 0; i < n_layers(); ++i) {
    x = apply_layer(i, x);
    r.features.push_back(x);
  }
  r.logit = head(x);
  return r;
}

ad::Var Discriminator::logit(const ad::Var& image) const {
  check_image(image);
  ad::Var x = image;
  for (int i = 0; i < n_layers(); ++i) x = apply_layer(i, x);
  return head(x);
}

ad::Var Discriminator::embed(const ad::Var& image, const EmbeddingSpec& spec) const {
  check_image(image);
  const int target = spec.resolve(n_layers());
  ad::Var x = image;
  for (int i = 0; i <= target; ++i) x = apply_layer(i, x);
  return ad::spatial_mean(x);
}

int64_t Discriminator::embed_dim(const EmbeddingSpec& spec) const {
  return cfg_.width(spec.resolve(n_layers()));
}

std::vector<ad::Var> Discriminator::parameters() {
  std::vector<ad::Var> p;
  for (auto& L : layers_) {
    p.push_back(L.w);
    p.push_back(L.b);
  }
  p.push_back(head_w_);
  p.push_back(head_b_);
  return p;
}

std::vector<std::pair<std::string, ad::Var>> Discriminator::named_parameters() {
  std::vector<std::pair<std::string, ad::Var>> p;
  for (size_t i = 0; i < layers_.size(); ++i) {
    p.emplace_back("disc.layer" + std::to_string(i) + ".w", layers_[i].w);
    p.emplace_back("disc.layer" + std::to_string(i) + ".b", layers_[i].b);
  }
  p.emplace_back("disc.head.w", head_w_);
  p.emplace_back("disc.head.b", head_b_);
  return p;
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

int GeneratorConfig::n_stages() const { return log2i(resolution) - 2; }

int GeneratorConfig::width(int stage) const {
  // Mirrors the discriminator: deepest (4x4) is widest.
  const int cap = base_width * 8;
  int w = base_width << (n_stages() - stage);
  return w > cap ? cap : w;
}

void GeneratorConfig::validate() const {
  if (!is_pow2(resolution) || resolution < 8 || resolution > 256)
    throw ConfigError("GeneratorConfig: resolution must be a power of two in [8, 256]");
  if (latent_dim < 1) throw ConfigError("GeneratorConfig: latent_dim must be >= 1");
  if (base_width < 1) throw ConfigError("GeneratorConfig: base_width must be >= 1");
}

Generator::Generator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int64_t c0 = cfg_.width(0);
  Tensor fw({c0 * 16, cfg_.latent_dim});
  orthogonal_init(fw, c0 * 16, cfg_.latent_dim, rng);
  fc_w_ = param(std::move(fw));
  fc_b_ = param(Tensor::zeros({c0 * 16}));
  int in_ch = static_cast<int>(c0);
  for (int s = 1; s <= cfg_.n_stages(); ++s) {
    const int out_ch = cfg_.width(s);
    Tensor w({out_ch, in_ch, 3, 3});
    orthogonal_init(w, out_ch, static_cast<int64_t>(in_ch) * 9, rng);
    layers_.push_back({param(std::move(w)), param(Tensor::zeros({out_ch}))});
    in_ch = out_ch;
  }
  Tensor rw({cfg_.out_channels, in_ch, 3, 3});
  orthogonal_init(rw, cfg_.out_channels, static_cast<int64_t>(in_ch) * 9, rng);
  rgb_w_ = param(std::move(rw));
  rgb_b_ = param(Tensor::zeros({cfg_.out_channels}));
}

Tensor Generator::sample_latents(int64_t batch, Rng& rng) const {
  Tensor z({batch, cfg_.latent_dim});
  for (int64_t i = 0; i < z.numel(); ++i) z[i] = rng.normal();
  return z;
}

ad::Var Generator::forward(const ad::Var& z) const {
  const Tensor& zt = z.val();
  if (zt.ndim() != 2 || zt.dim(1) != cfg_.latent_dim)
    throw ShapeError("generator: expected [B," + std::to_string(cfg_.latent_dim) + "] latents, got " +
                     shape_str(zt));
  const int64_t B = zt.dim(0);
  const int64_t c0 = cfg_.width(0);
  ad::Var x = ad::matmul(z, ad::transpose2(fc_w_));
  x = ad::add(x, ad::bcast_rows(fc_b_, B));
  x = ad::reshape(x, {B, c0, 4, 4});
  x = ad::leaky_relu(x, cfg_.lrelu_slope);
  for (const Layer& L : layers_) {
    x = ad::upsample2(x);
    const int64_t H = x.val().dim(2), W = x.val().dim(3);
    x = ad::conv2d(x, L.w, 1);
    x = ad::add(x, ad::bcast_spatial(ad::bcast_rows(L.b, B), H, W));
    x = ad::leaky_relu(x, cfg_.lrelu_slope);
  }
  const int64_t H = x.val().dim(2), W = x.val().dim(3);
  x = ad::conv2d(x, rgb_w_, 1);
  x = ad::add(x, ad::bcast_spatial(ad::bcast_rows(rgb_b_, B), H, W));
  return ad::vtanh(x);
}

std::vector<ad::Var> Generator::parameters() {
  std::vector<ad::Var> p{fc_w_, fc_b_};
  for (auto& L : layers_) {
    p.push_back(L.w);
    p.push_back(L.b);
  }
  p.push_back(rgb_w_);
  p.push_back(rgb_b_);
  return p;
}

std::vector<std::pair<std::string, ad::Var>> Generator::named_parameters() {
  std::vector<std::pair<std::string, ad::Var>> p;
  p.emplace_back("gen.fc.w", fc_w_);
  p.emplace_back("gen.fc.b", fc_b_);
  for (size_t i = 0; i < layers_.size(); ++i) {
    p.emplace_back("gen.layer" + std::to_string(i) + ".w", layers_[i].w);
    p.emplace_back("gen.layer" + std::to_string(i) + ".b", layers_[i].b);
  }
  p.emplace_back("gen.rgb.w", rgb_w_);
  p.emplace_back("gen.rgb.b", rgb_b_);
  return p;
}

void Generator::copy_parameters_from(const Generator& other) {
  auto dst = parameters();
  auto src = const_cast<Generator&>(other).parameters();
  if (dst.size() != src.size()) throw ConfigError("copy_parameters_from: architecture mismatch");
  for (size_t i = 0; i < dst.size(); ++i) dst[i].mutable_val() = src[i].val();
}

// ---------------------------------------------------------------------------
// Model checkpoints
// ---------------------------------------------------------------------------

void save_model(const std::string& path, const Discriminator& disc, const Generator* gen,
                const ModelCheckpointMeta& meta) {
  Archive a;
  auto& d = const_cast<Discriminator&>(disc);
  a.manifest["format"] = "fsmix-model";
  a.manifest["architecture"] = meta.architecture;
  a.manifest["iteration"] = meta.iteration;
  a.manifest["embedding_layer"] = meta.embedding.layer;
  a.manifest["resolution"] = disc.config().resolution;
  a.manifest["disc"] = {{"in_channels", disc.config().in_channels},
                        {"base_width", disc.config().base_width},
                        {"lrelu_slope", disc.config().lrelu_slope},
                        {"n_layers", disc.n_layers()}};
  for (auto& [name, v] : d.named_parameters()) a.add(name, v.val());
  a.manifest["has_generator"] = (gen != nullptr);
  if (gen) {
    auto& g = const_cast<Generator&>(*gen);
    a.manifest["gen"] = {{"out_channels", gen->config().out_channels},
                         {"latent_dim", gen->config().latent_dim},
                         {"base_width", gen->config().base_width},
                         {"lrelu_slope", gen->config().lrelu_slope}};
    for (auto& [name, v] : g.named_parameters()) a.add(name, v.val());
  }
  a.save(path);
}

LoadedModel load_model(const std::string& path) {
  Archive a = Archive::load(path);
  if (a.manifest.value("format", "") != "fsmix-model")
    throw IoError("load_model: not a model checkpoint: " + path);
  LoadedModel m;
  m.meta.architecture = a.manifest.value("architecture", "dcgan");
  m.meta.iteration = a.manifest.value("iteration", 0);
  m.meta.embedding.layer = a.manifest.value("embedding_layer", -1);

  DiscriminatorConfig dc;
  dc.resolution = a.manifest.at("resolution").get<int>();
  dc.in_channels = a.manifest.at("disc").at("in_channels").get<int>();
  dc.base_width = a.manifest.at("disc").at("base_width").get<int>();
  dc.lrelu_slope = a.manifest.at("disc").at("lrelu_slope").get<double>();
  Rng tmp(0);
  m.disc = Discriminator(dc, tmp);
  for (auto& [name, v] : m.disc.named_parameters()) {
    const Tensor& stored = a.get(name);
    if (!stored.same_shape(v.val())) throw IoError("load_model: shape mismatch for " + name);
    v.mutable_val() = stored;
  }

  m.has_generator = a.manifest.value("has_generator", false);
  if (m.has_generator) {
    GeneratorConfig gc;
    gc.resolution = dc.resolution;
    gc.out_channels = a.manifest.at("gen").at("out_channels").get<int>();
    gc.latent_dim = a.manifest.at("gen").at("latent_dim").get<int>();
    gc.base_width = a.manifest.at("gen").at("base_width").get<int>();
    gc.lrelu_slope = a.manifest.at("gen").at("lrelu_slope").get<double>();
    m.gen = Generator(gc, tmp);
    for (auto& [name, v] : m.gen.named_parameters()) {
      const Tensor& stored = a.get(name);
      if (!stored.same_shape(v.val())) throw IoError("load_model: shape mismatch for " + name);
      v.mutable_val() = stored;
    }
  }
  return m;
}

}  // namespace fsmix
