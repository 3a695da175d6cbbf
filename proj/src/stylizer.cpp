#include "fsmix/stylizer.hpp"

#include <cmath>

#include "fsmix/checkpoint.hpp"
#include "fsmix/optimizer.hpp"

namespace fsmix {

namespace ad = fsmix::ad;

namespace {

Tensor as4d(const Tensor& t, bool& was_3d, const char* who) {
  if (t.ndim() == 4) {
    was_3d = false;
    return t;
  }
  if (t.ndim() == 3) {
    was_3d = true;
    return t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)});
  }
  throw ShapeError(std::string(who) + ": expected [C,H,W] or [B,C,H,W], got " + shape_str(t));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(who) + ": content/style shape mismatch " + shape_str(a) +
                     " vs " + shape_str(b));
}

ad::Var conv_block(const ad::Var& x, const ad::Var& w, const ad::Var& b, double slope) {
  const int64_t B = x.val().dim(0), H = x.val().dim(2), W = x.val().dim(3);
  ad::Var y = ad::conv2d(x, w, 1);
  y = ad::add(y, ad::bcast_spatial(ad::bcast_rows(b, B), H, W));
  return ad::leaky_relu(y, slope);
}

ad::Var param(Tensor t) { return ad::make_leaf(std::move(t), true); }

}  // namespace

Tensor pixel_adain_fallback(const Tensor& content, const Tensor& style, double epsilon) {
  bool c3 = false, s3 = false;
  Tensor c4 = as4d(content, c3, "pixel_adain_fallback");
  Tensor s4 = as4d(style, s3, "pixel_adain_fallback");
  check_same_shape(c4, s4, "pixel_adain_fallback");
  ad::NoGradGuard ng;
  Tensor out = adain(ad::Var(c4), ad::Var(s4), epsilon).val();
  return c3 ? out.reshaped(content.shape()) : out;
}

Tensor IdentityStylizer::stylize(const Tensor& content, const Tensor& style) const {
  if (content.ndim() != style.ndim() || !content.same_shape(style))
    throw ShapeError("identity stylizer: content/style shape mismatch");
  return content;
}

PixelStylizer::PixelStylizer(double strength, double epsilon)
    : strength_(strength), epsilon_(epsilon) {
  if (!(strength >= 0.0 && strength <= 1.0))
    throw InvalidArgumentError("PixelStylizer: strength must lie in [0, 1]");
}

Tensor PixelStylizer::stylize(const Tensor& content, const Tensor& style) const {
  bool c3 = false, s3 = false;
  Tensor c4 = as4d(content, c3, "PixelStylizer");
  Tensor s4 = as4d(style, s3, "PixelStylizer");
  check_same_shape(c4, s4, "PixelStylizer");
  ad::NoGradGuard ng;
  Tensor out = fsm(ad::Var(c4), ad::Var(s4), 1.0 - strength_, epsilon_).val();
  return c3 ? out.reshaped(content.shape()) : out;
}

// ---------------------------------------------------------------------------
// LearnedStylizer
// ---------------------------------------------------------------------------

LearnedStylizer::LearnedStylizer(int resolution, int channels, int feat_width, double strength,
                                 Rng& rng)
    : resolution_(resolution), channels_(channels), feat_width_(feat_width), strength_(strength) {
  if (!(strength >= 0.0 && strength <= 1.0))
    throw InvalidArgumentError("LearnedStylizer: strength must lie in [0, 1]");
  const int f = feat_width_;
  Tensor e1({f, channels_, 3, 3});
  orthogonal_init(e1, f, static_cast<int64_t>(channels_) * 9, rng);
  enc1_w_ = param(std::move(e1));
  enc1_b_ = param(Tensor::zeros({f}));
  Tensor e2({2 * f, f, 3, 3});
  orthogonal_init(e2, 2 * f, static_cast<int64_t>(f) * 9, rng);
  enc2_w_ = param(std::move(e2));
  enc2_b_ = param(Tensor::zeros({2 * f}));
  Tensor d1({f, 2 * f, 3, 3});
  orthogonal_init(d1, f, static_cast<int64_t>(2 * f) * 9, rng);
  dec1_w_ = param(std::move(d1));
  dec1_b_ = param(Tensor::zeros({f}));
  Tensor d2({channels_, f, 3, 3});
  orthogonal_init(d2, channels_, static_cast<int64_t>(f) * 9, rng);
  dec2_w_ = param(std::move(d2));
  dec2_b_ = param(Tensor::zeros({channels_}));
}

ad::Var LearnedStylizer::encode(const ad::Var& image) const {
  ad::Var x = conv_block(image, enc1_w_, enc1_b_, lrelu_);
  x = ad::avgpool2(x);
  return conv_block(x, enc2_w_, enc2_b_, lrelu_);
}

ad::Var LearnedStylizer::decode(const ad::Var& features) const {
  ad::Var x = conv_block(features, dec1_w_, dec1_b_, lrelu_);
  x = ad::upsample2(x);
  const int64_t B = x.val().dim(0), H = x.val().dim(2), W = x.val().dim(3);
  ad::Var y = ad::conv2d(x, dec2_w_, 1);
  return ad::add(y, ad::bcast_spatial(ad::bcast_rows(dec2_b_, B), H, W));
}

Tensor LearnedStylizer::stylize_at(const Tensor& content, const Tensor& style,
                                   double strength) const {
  bool c3 = false, s3 = false;
  Tensor c4 = as4d(content, c3, "LearnedStylizer");
  Tensor s4 = as4d(style, s3, "LearnedStylizer");
  check_same_shape(c4, s4, "LearnedStylizer");
  ad::NoGradGuard ng;
  ad::Var fc = encode(ad::Var(c4));
  ad::Var fs = encode(ad::Var(s4));
  ad::Var mixed = fsm(fc, fs, 1.0 - strength);
  Tensor out = decode(mixed).val();
  return c3 ? out.reshaped(content.shape()) : out;
}

Tensor LearnedStylizer::stylize(const Tensor& content, const Tensor& style) const {
  return stylize_at(content, style, strength_);
}

Tensor LearnedStylizer::reconstruct(const Tensor& content) const {
  bool c3 = false;
  Tensor c4 = as4d(content, c3, "LearnedStylizer");
  ad::NoGradGuard ng;
  Tensor out = decode(encode(ad::Var(c4))).val();
  return c3 ? out.reshaped(content.shape()) : out;
}

std::vector<ad::Var> LearnedStylizer::parameters() {
  return {enc1_w_, enc1_b_, enc2_w_, enc2_b_, dec1_w_, dec1_b_, dec2_w_, dec2_b_};
}

std::vector<std::pair<std::string, ad::Var>> LearnedStylizer::named_parameters() {
  return {{"sty.enc1.w", enc1_w_}, {"sty.enc1.b", enc1_b_}, {"sty.enc2.w", enc2_w_},
          {"sty.enc2.b", enc2_b_}, {"sty.dec1.w", dec1_w_}, {"sty.dec1.b", dec1_b_},
          {"sty.dec2.w", dec2_w_}, {"sty.dec2.b", dec2_b_}};
}

void LearnedStylizer::save(const std::string& path) const {
  Archive a;
  a.manifest["format"] = "fsmix-stylizer";
  a.manifest["resolution"] = resolution_;
  a.manifest["channels"] = channels_;
  a.manifest["feat_width"] = feat_width_;
  a.manifest["strength"] = strength_;
  auto& self = const_cast<LearnedStylizer&>(*this);
  for (auto& [name, v] : self.named_parameters()) a.add(name, v.val());
  a.save(path);
}

LearnedStylizer LearnedStylizer::load(const std::string& path) {
  Archive a = Archive::load(path);
  if (a.manifest.value("format", "") != "fsmix-stylizer")
    throw IoError("LearnedStylizer::load: not a stylizer checkpoint: " + path);
  Rng tmp(0);
  LearnedStylizer s(a.manifest.at("resolution").get<int>(), a.manifest.at("channels").get<int>(),
                    a.manifest.at("feat_width").get<int>(), a.manifest.at("strength").get<double>(),
                    tmp);
  for (auto& [name, v] : s.named_parameters()) v.mutable_val() = a.get(name);
  return s;
}

StylizerTrainResult train_stylizer(const Tensor& dataset, const Tensor& style_set,
                                   const StylizerTrainConfig& config) {
  if (dataset.ndim() != 4 || dataset.dim(0) < 1)
    throw ConfigError("train_stylizer: empty or malformed dataset");
  if (style_set.ndim() != 4 || style_set.dim(0) < 1)
    throw ConfigError("train_stylizer: empty or malformed style set");
  const int64_t N = dataset.dim(0), M = style_set.dim(0);
  const int64_t C = dataset.dim(1), H = dataset.dim(2), W = dataset.dim(3);
  if (style_set.dim(1) != C || style_set.dim(2) != H || style_set.dim(3) != W)
    throw ConfigError("train_stylizer: style set resolution mismatch");

  Rng rng(config.seed);
  StylizerTrainResult result;
  result.stylizer = LearnedStylizer(static_cast<int>(H), static_cast<int>(C), config.feat_width,
                                    config.strength, rng);
  LearnedStylizer& sty = result.stylizer;
  AdamConfig ac;
  ac.lr = config.lr;
  AdamOptimizer opt(sty.parameters(), ac);

  const int64_t bs = std::min<int64_t>(config.batch, N);
  auto gather = [&](const Tensor& src, int64_t count) {
    Tensor out({count, C, H, W});
    const int64_t plane = C * H * W;
    for (int64_t b = 0; b < count; ++b) {
      const int64_t idx = rng.uniform_int(src.dim(0));
      for (int64_t i = 0; i < plane; ++i) out[b * plane + i] = src[idx * plane + i];
    }
    return out;
  };

  for (int step = 0; step < config.steps; ++step) {
    Tensor cb = gather(dataset, bs);
    Tensor sb = gather(style_set, bs);
    ad::Var content(cb);
    ad::Var style(sb);

    ad::Var fc = sty.encode(content);
    ad::Var recon = sty.decode(fc);
    ad::Var loss = ad::mean_all(ad::square(ad::sub(recon, content)));

    if (config.stat_weight > 0.0) {
      // Stylized output should land on the style image's pixel moments.
      ad::Var fs = sty.encode(style);
      ad::Var stylized = sty.decode(fsm(fc, fs, 0.0));
      auto so = channel_stats(stylized);
      auto ss = channel_stats(style);
      ad::Var stat_loss = ad::add(ad::mean_all(ad::square(ad::sub(so.mu, ss.mu))),
                                  ad::mean_all(ad::square(ad::sub(so.sigma, ss.sigma))));
      loss = ad::add(loss, ad::scale(stat_loss, config.stat_weight));
    }

    const double lv = loss.scalar();
    if (step == 0) result.initial_loss = lv;
    result.final_loss = lv;
    result.loss_history.push_back(lv);

    auto grads = ad::grad(loss, sty.parameters());
    opt.step(grads);
  }
  (void)M;
  return result;
}

// ---------------------------------------------------------------------------
// FsmDecoder
// ---------------------------------------------------------------------------

int FsmDecoder::default_tap_layer(const Discriminator& disc) {
  const int res = disc.config().resolution;
  const int target = res / 8;
  for (int i = 0; i < disc.n_layers(); ++i) {
    auto s = disc.layer_output_shape(i);
    if (s[1] == target) return i;
  }
  return disc.n_layers() - 1;
}

FsmDecoder::FsmDecoder(const Discriminator& disc, int tap_layer, Rng& rng)
    : tap_layer_(tap_layer),
      resolution_(disc.config().resolution),
      channels_(disc.config().in_channels) {
  if (tap_layer_ < 0 || tap_layer_ >= disc.n_layers())
    throw ConfigError("FsmDecoder: tap layer out of range");
  input_shape_ = disc.layer_output_shape(tap_layer_);
  int64_t spatial = input_shape_[1];
  int ch = static_cast<int>(input_shape_[0]);
  while (spatial < resolution_) {
    const int out_ch = std::max(16, ch / 2);
    Tensor w({out_ch, ch, 3, 3});
    orthogonal_init(w, out_ch, static_cast<int64_t>(ch) * 9, rng);
    up_layers_.push_back({param(std::move(w)), param(Tensor::zeros({out_ch}))});
    ch = out_ch;
    spatial *= 2;
  }
  Tensor rw({channels_, ch, 3, 3});
  orthogonal_init(rw, channels_, static_cast<int64_t>(ch) * 9, rng);
  rgb_w_ = param(std::move(rw));
  rgb_b_ = param(Tensor::zeros({channels_}));
}

ad::Var FsmDecoder::decode(const ad::Var& features) const {
  const Tensor& f = features.val();
  if (f.ndim() != 4 || f.dim(1) != input_shape_[0] || f.dim(2) != input_shape_[1] ||
      f.dim(3) != input_shape_[2])
    throw ConfigError("FsmDecoder: feature shape mismatch, expected [B," +
                      std::to_string(input_shape_[0]) + "," + std::to_string(input_shape_[1]) +
                      "," + std::to_string(input_shape_[2]) + "], got " + shape_str(f));
  ad::Var x = features;
  for (const Layer& L : up_layers_) {
    x = ad::upsample2(x);
    x = conv_block(x, L.w, L.b, lrelu_);
  }
  const int64_t B = x.val().dim(0), H = x.val().dim(2), W = x.val().dim(3);
  ad::Var y = ad::conv2d(x, rgb_w_, 1);
  y = ad::add(y, ad::bcast_spatial(ad::bcast_rows(rgb_b_, B), H, W));
  return ad::vtanh(y);
}

Tensor FsmDecoder::reconstruct(const Discriminator& disc, const Tensor& images) const {
  ad::NoGradGuard ng;
  ad::Var x(images);
  for (int i = 0; i <= tap_layer_; ++i) x = disc.apply_layer(i, x);
  return decode(x).val();
}

std::vector<ad::Var> FsmDecoder::parameters() {
  std::vector<ad::Var> p;
  for (auto& L : up_layers_) {
    p.push_back(L.w);
    p.push_back(L.b);
  }
  p.push_back(rgb_w_);
  p.push_back(rgb_b_);
  return p;
}

std::vector<std::pair<std::string, ad::Var>> FsmDecoder::named_parameters() {
  std::vector<std::pair<std::string, ad::Var>> p;
  for (size_t i = 0; i < up_layers_.size(); ++i) {
    p.emplace_back("fsmdec.up" + std::to_string(i) + ".w", up_layers_[i].w);
    p.emplace_back("fsmdec.up" + std::to_string(i) + ".b", up_layers_[i].b);
  }
  p.emplace_back("fsmdec.rgb.w", rgb_w_);
  p.emplace_back("fsmdec.rgb.b", rgb_b_);
  return p;
}

void FsmDecoder::save(const std::string& path) const {
  Archive a;
  a.manifest["format"] = "fsmix-fsm-decoder";
  a.manifest["tap_layer"] = tap_layer_;
  a.manifest["resolution"] = resolution_;
  a.manifest["channels"] = channels_;
  a.manifest["input_shape"] = input_shape_;
  a.manifest["n_up"] = up_layers_.size();
  auto& self = const_cast<FsmDecoder&>(*this);
  for (auto& [name, v] : self.named_parameters()) a.add(name, v.val());
  a.save(path);
}

FsmDecoder FsmDecoder::load(const std::string& path) {
  Archive a = Archive::load(path);
  if (a.manifest.value("format", "") != "fsmix-fsm-decoder")
    throw IoError("FsmDecoder::load: not a decoder checkpoint: " + path);
  FsmDecoder d;
  d.tap_layer_ = a.manifest.at("tap_layer").get<int>();
  d.resolution_ = a.manifest.at("resolution").get<int>();
  d.channels_ = a.manifest.at("channels").get<int>();
  d.input_shape_ = a.manifest.at("input_shape").get<std::vector<int64_t>>();
  const size_t n_up = a.manifest.at("n_up").get<size_t>();
  for (size_t i = 0; i < n_up; ++i) {
    Layer L;
    L.w = param(a.get("fsmdec.up" + std::to_string(i) + ".w"));
    L.b = param(a.get("fsmdec.up" + std::to_string(i) + ".b"));
    d.up_layers_.push_back(L);
  }
  d.rgb_w_ = param(a.get("fsmdec.rgb.w"));
  d.rgb_b_ = param(a.get("fsmdec.rgb.b"));
  return d;
}

FsmDecoderTrainResult train_fsm_decoder(const Discriminator& disc, const Tensor& dataset,
                                        int tap_layer, const FsmDecoderTrainConfig& config) {
  if (dataset.ndim() != 4 || dataset.dim(0) < 1)
    throw ConfigError("train_fsm_decoder: empty or malformed dataset");
  Rng rng(config.seed);
  FsmDecoderTrainResult result;
  result.decoder = FsmDecoder(disc, tap_layer, rng);
  FsmDecoder& dec = result.decoder;

  AdamConfig ac;
  ac.lr = config.lr;
  AdamOptimizer opt(dec.parameters(), ac);

  const int64_t N = dataset.dim(0);
  const int64_t C = dataset.dim(1), H = dataset.dim(2), W = dataset.dim(3);
  const int64_t plane = C * H * W;
  const int64_t bs = std::min<int64_t>(config.batch, N);

  for (int step = 0; step < config.steps; ++step) {
    Tensor batch({bs, C, H, W});
    for (int64_t b = 0; b < bs; ++b) {
      const int64_t idx = rng.uniform_int(N);
      for (int64_t i = 0; i < plane; ++i) batch[b * plane + i] = dataset[idx * plane + i];
    }
    // Features of the frozen discriminator carry no graph.
    Tensor feats;
    {
      ad::NoGradGuard ng;
      ad::Var x{Tensor(batch)};
      for (int i = 0; i <= dec.tap_layer(); ++i) x = disc.apply_layer(i, x);
      feats = x.val();
    }
    ad::Var recon = dec.decode(ad::Var(std::move(feats)));
    ad::Var loss = ad::mean_all(ad::square(ad::sub(recon, ad::Var(std::move(batch)))));
    const double lv = loss.scalar();
    if (step == 0) result.initial_loss = lv;
    result.final_loss = lv;
    auto grads = ad::grad(loss, dec.parameters());
    opt.step(grads);
  }
  return result;
}

Tensor decode_fsm_features(const FsmDecoder& dec, const Discriminator& disc, const Tensor& content,
                           const Tensor& style, double alpha, const LayerTapSet& taps) {
  bool c3 = false, s3 = false;
  Tensor c4 = as4d(content, c3, "decode_fsm_features");
  Tensor s4 = as4d(style, s3, "decode_fsm_features");
  check_same_shape(c4, s4, "decode_fsm_features");
  ad::NoGradGuard ng;
  auto mixed = mixed_forward(disc, ad::Var(c4), ad::Var(s4), alpha, taps);
  const ad::Var& tapped = mixed.content_features.at(static_cast<size_t>(dec.tap_layer()));
  Tensor out = dec.decode(tapped).val();
  return c3 ? out.reshaped(content.shape()) : out;
}

}  // namespace fsmix
