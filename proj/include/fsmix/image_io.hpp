#pragma once

#include <string>
#include <vector>

#include "fsmix/tensor.hpp"

namespace fsmix {

// Decodes PNG or JPEG (sniffed from the file header) into [3,H,W] in [0,1].
Tensor read_image(const std::string& path);

// Writes [C,H,W] (C = 1 or 3) as 8-bit PNG; values are clamped to [0,1].
void write_png(const std::string& path, const Tensor& image);

Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w);

// Tiles images (all same shape, [C,H,W], values [0,1]) into one grid image.
Tensor tile_grid(const std::vector<Tensor>& images, int64_t rows, int64_t cols,
                 int64_t padding = 2, double pad_value = 1.0);

}  // namespace fsmix
