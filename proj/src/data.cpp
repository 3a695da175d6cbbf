#include "fsmix/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>

#include "fsmix/image_io.hpp"

namespace fsmix {

namespace {

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

struct Palette {
  double bg[3];
  double fg[3];
};

// Fixed palette table; saturated foregrounds over muted backgrounds so the
// style factor is carried by color statistics.
const Palette kPalettes[kColoredShapePalettes] = {
    {{0.95, 0.95, 0.92}, {0.85, 0.10, 0.10}},  // red on paper
    {{0.08, 0.08, 0.12}, {0.20, 0.85, 0.25}},  // green on dark
    {{0.90, 0.88, 0.70}, {0.15, 0.25, 0.80}},  // blue on sand
    {{0.15, 0.30, 0.15}, {0.95, 0.85, 0.20}},  // yellow on pine
    {{0.85, 0.70, 0.85}, {0.40, 0.05, 0.45}},  // violet on lilac
    {{0.10, 0.25, 0.30}, {0.10, 0.80, 0.85}},  // cyan on deep sea
    {{0.98, 0.90, 0.85}, {0.90, 0.45, 0.10}},  // orange on cream
    {{0.25, 0.25, 0.25}, {0.90, 0.90, 0.95}},  // white on slate
};

// Signed distances; positive inside.
double shape_sdf(int kind, double x, double y, double r) {
  switch (kind) {
    case 0:  // circle
      return r - std::sqrt(x * x + y * y);
    case 1:  // square
      return r - std::max(std::abs(x), std::abs(y));
    case 2: {  // triangle (upward)
      const double d1 = y + r * 0.6;                       // above the base
      const double d2 = r * 0.8 - (0.6 * x + 0.8 * -y);    // right edge
      const double d3 = r * 0.8 - (-0.6 * x + 0.8 * -y);   // left edge
      return std::min({d1, d2, d3});
    }
    default: {  // cross
      const double bar1 = std::min(r * 0.45 - std::abs(x), r - std::abs(y));
      const double bar2 = std::min(r * 0.45 - std::abs(y), r - std::abs(x));
      return std::max(bar1, bar2);
    }
  }
}

Tensor make_colored_shapes(int64_t n, uint64_t seed, int res) {
  Rng rng(seed);
  Tensor out({n, 3, res, res});
  for (int64_t idx = 0; idx < n; ++idx) {
    const int kind = colored_shapes_label(idx);
    const Palette& pal = kPalettes[colored_shapes_palette(idx)];
    const double cx = (0.5 + rng.uniform(-0.15, 0.15)) * res;
    const double cy = (0.5 + rng.uniform(-0.15, 0.15)) * res;
    const double r = rng.uniform(0.22, 0.34) * res;
    const double edge = 1.0;  // soft edge, one pixel
    const double texture = rng.uniform(0.0, 0.04);
    for (int64_t i = 0; i < res; ++i)
      for (int64_t j = 0; j < res; ++j) {
        const double d = shape_sdf(kind, (j - cx), (i - cy), r);
        const double a = std::clamp(d / edge + 0.5, 0.0, 1.0);
        const double noise = texture * rng.normal();
        for (int64_t c = 0; c < 3; ++c) {
          const double v = (1.0 - a) * pal.bg[c] + a * pal.fg[c] + noise;
          out.at4(idx, c, i, j) = std::clamp(v, 0.0, 1.0);
        }
      }
  }
  return out;
}

Tensor make_two_gaussians(int64_t n, uint64_t seed, int res) {
  Rng rng(seed);
  Tensor out({n, 3, res, res});
  for (int64_t idx = 0; idx < n; ++idx) {
    const bool first = (idx % 2) == 0;
    const double cx = (first ? 0.3 : 0.7) * res + rng.uniform(-1.0, 1.0);
    const double cy = (first ? 0.35 : 0.65) * res + rng.uniform(-1.0, 1.0);
    const double sig = rng.uniform(0.08, 0.14) * res;
    for (int64_t i = 0; i < res; ++i)
      for (int64_t j = 0; j < res; ++j) {
        const double d2 = ((i - cy) * (i - cy) + (j - cx) * (j - cx)) / (2.0 * sig * sig);
        const double v = std::clamp(std::exp(-d2) + 0.02 * rng.normal(), 0.0, 1.0);
        for (int64_t c = 0; c < 3; ++c) out.at4(idx, c, i, j) = v;
      }
  }
  return out;
}

Tensor make_style_pack(int64_t n, uint64_t seed, int res) {
  Rng rng(seed);
  Tensor out({n, 3, res, res});
  for (int64_t idx = 0; idx < n; ++idx) {
    double c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
      c0[c] = rng.uniform(0.0, 1.0);
      c1[c] = rng.uniform(0.0, 1.0);
    }
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    const double gx = std::cos(angle), gy = std::sin(angle);
    const double freq = rng.uniform(0.2, 1.2);
    const double tex_amp = rng.uniform(0.0, 0.25);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (int64_t i = 0; i < res; ++i)
      for (int64_t j = 0; j < res; ++j) {
        const double t = 0.5 + 0.5 * ((j / (res - 1.0) - 0.5) * gx + (i / (res - 1.0) - 0.5) * gy) * 2.0;
        const double tex = tex_amp * std::sin(freq * (i + 2.0 * j) + phase) +
                           0.05 * rng.normal();
        for (int64_t c = 0; c < 3; ++c) {
          const double v = (1.0 - t) * c0[c] + t * c1[c] + tex;
          out.at4(idx, c, i, j) = std::clamp(v, 0.0, 1.0);
        }
      }
  }
  return out;
}

}  // namespace

int colored_shapes_label(int64_t index) {
  return static_cast<int>(index % kColoredShapeKinds);
}

int colored_shapes_palette(int64_t index) {
  return static_cast<int>((index / kColoredShapeKinds) % kColoredShapePalettes);
}

void DatasetSpec::validate() const {
  if (!is_pow2(resolution) || resolution < 8 || resolution > 256)
    throw ConfigError("DatasetSpec: resolution must be a power of two in [8, 256]");
  if (channels != 3) throw ConfigError("DatasetSpec: only 3-channel data is supported");
  if (!is_directory_source() && n < 1)
    throw ConfigError("DatasetSpec: builtin datasets need n >= 1");
}

Tensor to_range(const Tensor& zero_one, PixelRange range) {
  if (range == PixelRange::ZeroOne) return zero_one;
  Tensor out(zero_one.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = zero_one[i] * 2.0 - 1.0;
  return out;
}

Tensor from_range(const Tensor& data, PixelRange range) {
  if (range == PixelRange::ZeroOne) return data;
  Tensor out(data.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = (data[i] + 1.0) * 0.5;
  return out;
}

Tensor synthetic_dataset(const std::string& id, int64_t n, uint64_t seed, int resolution) {
  if (n < 1) throw ConfigError("synthetic_dataset: n must be >= 1");
  if (id == "colored-shapes") return make_colored_shapes(n, seed, resolution);
  if (id == "two-gaussians-32") return make_two_gaussians(n, seed, resolution);
  if (id == "style-pack") return make_style_pack(n, seed, resolution);
  throw ConfigError("synthetic_dataset: unknown id '" + id + "'");
}

Tensor load_images(const DatasetSpec& spec) {
  spec.validate();
  if (!spec.is_directory_source())
    return to_range(synthetic_dataset(spec.source, spec.n, spec.seed, spec.resolution),
                    spec.range);

  namespace fs = std::filesystem;
  const fs::path dir(spec.directory());
  if (!fs::is_directory(dir)) throw ConfigError("load_images: not a directory: " + dir.string());
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());

  std::vector<Tensor> images;
  for (const std::string& f : files) {
    try {
      Tensor img = read_image(f);
      images.push_back(resize_bilinear(img, spec.resolution, spec.resolution));
    } catch (const IoError& e) {
      std::cerr << "[fsmix] warning: skipping " << f << " (" << e.what() << ")\n";
    }
  }
  if (images.empty()) throw ConfigError("load_images: no readable images in " + dir.string());

  const int64_t N = static_cast<int64_t>(images.size());
  Tensor out({N, 3, spec.resolution, spec.resolution});
  const int64_t plane = 3LL * spec.resolution * spec.resolution;
  for (int64_t i = 0; i < N; ++i)
    for (int64_t k = 0; k < plane; ++k) out[i * plane + k] = images[static_cast<size_t>(i)][k];
  return to_range(out, spec.range);
}

Tensor augment_flip_crop(const Tensor& batch, Rng& rng, int64_t pad, bool flip) {
  if (batch.ndim() != 4) throw ShapeError("augment_flip_crop: expected [B,C,H,W]");
  const int64_t B = batch.dim(0), C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
  if (pad < 0) throw ConfigError("augment_flip_crop: pad must be nonnegative");
  if (pad >= H || pad >= W)
    throw ConfigError("augment_flip_crop: pad must be smaller than the resolution");
  if (pad == 0 && !flip) return batch;

  Tensor out(batch.shape());
  const int64_t Hp = H + 2 * pad, Wp = W + 2 * pad;
  std::vector<double> padded(static_cast<size_t>(Hp * Wp));
  for (int64_t b = 0; b < B; ++b) {
    const bool do_flip = flip && rng.uniform() < 0.5;
    const int64_t dy = pad > 0 ? rng.uniform_int(2 * pad + 1) : 0;
    const int64_t dx = pad > 0 ? rng.uniform_int(2 * pad + 1) : 0;
    for (int64_t c = 0; c < C; ++c) {
      const double* src = batch.ptr() + ((b * C + c) * H) * W;
      // reflect padding (edge pixels not duplicated)
      for (int64_t i = 0; i < Hp; ++i) {
        int64_t si = i - pad;
        if (si < 0) si = -si;
        if (si >= H) si = 2 * H - 2 - si;
        for (int64_t j = 0; j < Wp; ++j) {
          int64_t sj = j - pad;
          if (sj < 0) sj = -sj;
          if (sj >= W) sj = 2 * W - 2 - sj;
          const int64_t col = do_flip ? (W - 1 - sj) : sj;
          padded[static_cast<size_t>(i * Wp + j)] = src[si * W + col];
        }
      }
      double* dst = out.ptr() + ((b * C + c) * H) * W;
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) dst[i * W + j] = padded[static_cast<size_t>((i + dy) * Wp + j + dx)];
    }
  }
  return out;
}

BatchStream::BatchStream(Tensor data, uint64_t seed) : data_(std::move(data)), rng_(seed) {
  if (data_.ndim() != 4 || data_.dim(0) < 1)
    throw ConfigError("BatchStream: need a nonempty [N,C,H,W] dataset");
  reshuffle();
}

void BatchStream::reshuffle() {
  const int64_t N = data_.dim(0);
  perm_.resize(static_cast<size_t>(N));
  std::iota(perm_.begin(), perm_.end(), 0);
  for (int64_t i = N - 1; i > 0; --i) {
    const int64_t j = rng_.uniform_int(i + 1);
    std::swap(perm_[static_cast<size_t>(i)], perm_[static_cast<size_t>(j)]);
  }
  cursor_ = 0;
}

Tensor BatchStream::next(int64_t batch_size) {
  if (batch_size < 1) throw ConfigError("BatchStream: batch size must be >= 1");
  const int64_t N = data_.dim(0);
  const int64_t plane = data_.numel() / N;
  Tensor out({batch_size, data_.dim(1), data_.dim(2), data_.dim(3)});
  for (int64_t b = 0; b < batch_size; ++b) {
    if (cursor_ >= N) reshuffle();
    const int64_t idx = perm_[static_cast<size_t>(cursor_++)];
    const double* src = data_.ptr() + idx * plane;
    double* dst = out.ptr() + b * plane;
    for (int64_t i = 0; i < plane; ++i) dst[i] = src[i];
  }
  return out;
}

BatchStream::State BatchStream::state() const {
  return {perm_, cursor_, rng_.state()};
}

void BatchStream::restore(const State& s) {
  if (static_cast<int64_t>(s.permutation.size()) != data_.dim(0))
    throw ConfigError("BatchStream::restore: permutation size mismatch");
  perm_ = s.permutation;
  cursor_ = s.cursor;
  rng_.set_state(s.rng_state);
}

}  // namespace fsmix
