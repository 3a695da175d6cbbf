#pragma once

#include <string>
#include <vector>

#include "fsmix/autodiff.hpp"
#include "fsmix/common.hpp"
#include "fsmix/ops.hpp"

namespace fsmix {

// Orthogonal rows (or columns when rows > cols) scaled by gain, written over
// the first two logical dims of `w` flattened as [rows, cols].
void orthogonal_init(Tensor& w, int64_t rows, int64_t cols, Rng& rng, double gain = 1.0);

// Which layer output feeds the probe embedding and how it is pooled.
// layer == -1 selects the last convolutional layer; pooling is a global
// spatial average, producing a [B, C_layer] matrix.
struct EmbeddingSpec {
  int layer = -1;

  int resolve(int n_layers) const {
    int l = layer < 0 ? n_layers - 1 : layer;
    if (l < 0 || l >= n_layers) throw ConfigError("EmbeddingSpec: layer out of range");
    return l;
  }
};

struct DiscriminatorConfig {
  int resolution = 32;
  int in_channels = 3;
  int base_width = 64;
  double lrelu_slope = 0.2;

  // Layers halve the spatial extent down to 2x2: n = log2(resolution) - 1.
  int n_layers() const;
  int width(int layer) const;  // base * 2^layer, capped at 8 * base
  void validate() const;
};

// Convolutional discriminator: n blocks of conv3x3 + leaky ReLU + 2x2 average
// pooling, then a linear head on the flattened final feature map.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const DiscriminatorConfig& cfg, Rng& rng);

  int n_layers() const { return static_cast<int>(layers_.size()); }
  const DiscriminatorConfig& config() const { return cfg_; }

  // Output feature shape (C,H,W) after 1-based layer `i`.
  std::vector<int64_t> layer_output_shape(int layer0) const;

  ad::Var apply_layer(int layer0, const ad::Var& x) const;  // 0-based
  ad::Var head(const ad::Var& final_features) const;        // [B] logits

  struct ForwardResult {
    ad::Var logit;                  // [B]
    std::vector<ad::Var> features;  // outputs of every layer, in order
  };
  ForwardResult forward(const ad::Var& image) const;
  ad::Var logit(const ad::Var& image) const;

  // Global-average-pooled features at the spec layer, [B, C].
  ad::Var embed(const ad::Var& image, const EmbeddingSpec& spec) const;
  int64_t embed_dim(const EmbeddingSpec& spec) const;

  std::vector<ad::Var> parameters();
  std::vector<std::pair<std::string, ad::Var>> named_parameters();
  void check_image(const ad::Var& image) const;

 private:
  DiscriminatorConfig cfg_;
  struct Layer {
    ad::Var w, b;
  };
  std::vector<Layer> layers_;
  ad::Var head_w_, head_b_;
};

struct GeneratorConfig {
  int resolution = 32;
  int out_channels = 3;
  int latent_dim = 64;
  int base_width = 64;
  double lrelu_slope = 0.2;

  int n_stages() const;  // upsampling stages from 4x4 to the resolution
  int width(int stage) const;
  void validate() const;
};

// Mirrored generator: linear from z to a 4x4 map, then nearest upsample +
// conv3x3 + leaky ReLU per stage, and a tanh conv to pixel space in [-1,1].
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorConfig& cfg, Rng& rng);

  const GeneratorConfig& config() const { return cfg_; }
  ad::Var forward(const ad::Var& z) const;  // [B, latent] -> [B, C, res, res]
  Tensor sample_latents(int64_t batch, Rng& rng) const;

  std::vector<ad::Var> parameters();
  std::vector<std::pair<std::string, ad::Var>> named_parameters();

  // Overwrites parameters with a copy of another generator's (EMA support).
  void copy_parameters_from(const Generator& other);

 private:
  GeneratorConfig cfg_;
  ad::Var fc_w_, fc_b_;
  struct Layer {
    ad::Var w, b;
  };
  std::vector<Layer> layers_;
  ad::Var rgb_w_, rgb_b_;
};

// Model checkpoint: named parameter arrays plus a manifest carrying the
// architecture, resolution, layer count, embedding spec and iteration.
struct ModelCheckpointMeta {
  std::string architecture = "dcgan";
  int64_t iteration = 0;
  EmbeddingSpec embedding;
};

void save_model(const std::string& path, const Discriminator& disc, const Generator* gen,
                const ModelCheckpointMeta& meta);
struct LoadedModel {
  Discriminator disc;
  Generator gen;
  bool has_generator = false;
  ModelCheckpointMeta meta;
};
LoadedModel load_model(const std::string& path);

}  // namespace fsmix
