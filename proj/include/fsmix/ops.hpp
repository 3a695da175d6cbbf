#pragma once

#include "fsmix/autodiff.hpp"
#include "fsmix/tensor.hpp"

namespace fsmix::ad {

// Elementwise. Shapes must match exactly; there is no implicit broadcasting,
// broadcasts are explicit ops below.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var vsqrt(const Var& a);   // requires a >= 0
Var square(const Var& a);
Var vtanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var leaky_relu(const Var& a, double slope);

// Structure.
Var reshape(const Var& a, std::vector<int64_t> shape);

// Convolution stack: stride 1, square kernel, zero padding.
Var conv2d(const Var& x, const Var& w, int64_t pad);
Var conv2d_wgrad(const Var& x, const Var& gy, int64_t k, int64_t pad);
Var flip_transpose(const Var& w);
Var avgpool2(const Var& x);
Var upsample2(const Var& x);

// Dense.
Var matmul(const Var& a, const Var& b);
Var transpose2(const Var& a);

// Reductions / broadcasts.
Var spatial_sum(const Var& x);                       // [B,C,H,W] -> [B,C]
Var bcast_spatial(const Var& v, int64_t h, int64_t w);  // [B,C] -> [B,C,h,w]
Var sum_rows(const Var& x);                          // [B,F] -> [F]
Var bcast_rows(const Var& v, int64_t b);             // [F] -> [b,F]
Var sum_all(const Var& x);                           // any -> [1]
Var bcast_all(const Var& s, std::vector<int64_t> shape);

// Compositions.
Var spatial_mean(const Var& x);
Var mean_all(const Var& x);

}  // namespace fsmix::ad
