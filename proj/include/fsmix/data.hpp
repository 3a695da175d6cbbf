#pragma once

#include <string>
#include <vector>

#include "fsmix/common.hpp"
#include "fsmix/tensor.hpp"

namespace fsmix {

enum class PixelRange { ZeroOne, MinusOneOne };

struct DatasetSpec {
  std::string source = "colored-shapes";  // builtin id or "dir:<path>"
  int64_t n = 2000;                       // sample count for builtins
  int resolution = 32;
  int channels = 3;
  PixelRange range = PixelRange::MinusOneOne;
  uint64_t seed = 0;

  void validate() const;
  bool is_directory_source() const { return source.rfind("dir:", 0) == 0; }
  std::string directory() const { return source.substr(4); }
};

// Map [0,1] pixel data into the configured range and back.
Tensor to_range(const Tensor& zero_one, PixelRange range);
Tensor from_range(const Tensor& data, PixelRange range);

// Deterministic procedural datasets in [0,1], shaped [N,3,res,res].
//   colored-shapes   content = shape kind + placement, style = palette;
//                    both factors are balanced and independent.
//   two-gaussians-32 blobs at one of two anchor positions.
//   style-pack       color fields and texture noise, used as style images.
Tensor synthetic_dataset(const std::string& id, int64_t n, uint64_t seed, int resolution = 32);

// Shape class index per colored-shapes sample (construction order).
int colored_shapes_label(int64_t index);
int colored_shapes_palette(int64_t index);
constexpr int kColoredShapeKinds = 4;
constexpr int kColoredShapePalettes = 8;

// Materialized, normalized image set per the spec. Directory sources accept
// PNG/JPEG; unreadable files are skipped with a warning.
Tensor load_images(const DatasetSpec& spec);

// Horizontal flip (p = 0.5 each, when enabled) then reflect-pad by `pad`
// and crop back to the original extent at a uniform offset.
Tensor augment_flip_crop(const Tensor& batch, Rng& rng, int64_t pad, bool flip = true);

// Infinite shuffled batch stream; every epoch visits each sample exactly
// once before reshuffling, and batches may span the epoch boundary.
class BatchStream {
 public:
  BatchStream() = default;
  BatchStream(Tensor data, uint64_t seed);

  Tensor next(int64_t batch_size);
  int64_t size() const { return data_.defined() ? data_.dim(0) : 0; }
  const Tensor& data() const { return data_; }

  // Checkpoint surface: permutation, cursor and stream state.
  struct State {
    std::vector<int64_t> permutation;
    int64_t cursor = 0;
    uint64_t rng_state = 0;
  };
  State state() const;
  void restore(const State& s);

 private:
  void reshuffle();
  Tensor data_;
  Rng rng_{0};
  std::vector<int64_t> perm_;
  int64_t cursor_ = 0;
};

}  // namespace fsmix
