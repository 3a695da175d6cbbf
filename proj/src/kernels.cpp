#include "fsmix/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fsmix::kernels {

namespace {
std::atomic<bool> g_parallel{true};
constexpr int64_t kReduceBlock = 4096;  // fixed, independent of thread count
}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

// One (b,o) output plane. Inner loop runs over contiguous output columns
// with the weight hoisted to a scalar, so both variants share the exact
// floating-point order.
static inline void conv2d_plane(const double* x, const double* w, const double* bias,
                                double* y, int64_t C, int64_t H, int64_t W,
                                int64_t k, int64_t pad, int64_t o) {
  const int64_t HW = H * W;
  double* yplane = y;
  const double binit = bias ? bias[o] : 0.0;
  for (int64_t i = 0; i < HW; ++i) yplane[i] = binit;
  for (int64_t c = 0; c < C; ++c) {
    const double* xplane = x + (c)*HW;
    const double* wk = w + (o * C + c) * k * k;
    for (int64_t u = 0; u < k; ++u) {
      for (int64_t v = 0; v < k; ++v) {
        const double wv = wk[u * k + v];
        if (wv == 0.0) continue;
        const int64_t di = u - pad, dj = v - pad;
        const int64_t i0 = std::max<int64_t>(0, -di);
        const int64_t i1 = std::min<int64_t>(H, H - di);
        const int64_t j0 = std::max<int64_t>(0, -dj);
        const int64_t j1 = std::min<int64_t>(W, W - dj);
        for (int64_t i = i0; i < i1; ++i) {
          double* yr = yplane + i * W;
          const double* xr = xplane + (i + di) * W + dj;
          for (int64_t j = j0; j < j1; ++j) yr[j] += wv * xr[j];
        }
      }
    }
  }
}

void conv2d_fwd_serial(const double* x, const double* w, const double* bias,
                       double* y, int64_t B, int64_t C, int64_t H, int64_t W,
                       int64_t O, int64_t k, int64_t pad) {
  const int64_t HW = H * W;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t o = 0; o < O; ++o)
      conv2d_plane(x + b * C * HW, w, bias, y + (b * O + o) * HW, C, H, W, k, pad, o);
}

void conv2d_fwd_omp(const double* x, const double* w, const double* bias,
                    double* y, int64_t B, int64_t C, int64_t H, int64_t W,
                    int64_t O, int64_t k, int64_t pad) {
  const int64_t HW = H * W;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) collapse(2)
#endif
  for (int64_t b = 0; b < B; ++b)
    for (int64_t o = 0; o < O; ++o)
      conv2d_plane(x + b * C * HW, w, bias, y + (b * O + o) * HW, C, H, W, k, pad, o);
}

void conv2d_fwd(const double* x, const double* w, const double* bias,
                double* y, int64_t B, int64_t C, int64_t H, int64_t W,
                int64_t O, int64_t k, int64_t pad) {
  if (parallel_enabled() && B * O > 1)
    conv2d_fwd_omp(x, w, bias, y, B, C, H, W, O, k, pad);
  else
    conv2d_fwd_serial(x, w, bias, y, B, C, H, W, O, k, pad);
}

static inline void wgrad_pair(const double* x, const double* gy, double* gw,
                              int64_t B, int64_t C, int64_t H, int64_t W,
                              int64_t O, int64_t k, int64_t pad,
                              int64_t o, int64_t c) {
  const int64_t HW = H * W;
  for (int64_t u = 0; u < k; ++u) {
    for (int64_t v = 0; v < k; ++v) {
      const int64_t di = u - pad, dj = v - pad;
      const int64_t i0 = std::max<int64_t>(0, -di);
      const int64_t i1 = std::min<int64_t>(H, H - di);
      const int64_t j0 = std::max<int64_t>(0, -dj);
      const int64_t j1 = std::min<int64_t>(W, W - dj);
      double acc = 0.0;
      for (int64_t b = 0; b < B; ++b) {
        const double* gplane = gy + (b * O + o) * HW;
        const double* xplane = x + (b * C + c) * HW;
        for (int64_t i = i0; i < i1; ++i) {
          const double* gr = gplane + i * W;
          const double* xr = xplane + (i + di) * W + dj;
          double row = 0.0;
          for (int64_t j = j0; j < j1; ++j) row += gr[j] * xr[j];
          acc += row;
        }
      }
      gw[((o * C + c) * k + u) * k + v] = acc;
    }
  }
}

void conv2d_wgrad_serial(const double* x, const double* gy, double* gw,
                         int64_t B, int64_t C, int64_t H, int64_t W,
                         int64_t O, int64_t k, int64_t pad) {
  for (int64_t o = 0; o < O; ++o)
    for (int64_t c = 0; c < C; ++c)
      wgrad_pair(x, gy, gw, B, C, H, W, O, k, pad, o, c);
}

void conv2d_wgrad_omp(const double* x, const double* gy, double* gw,
                      int64_t B, int64_t C, int64_t H, int64_t W,
                      int64_t O, int64_t k, int64_t pad) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) collapse(2)
#endif
  for (int64_t o = 0; o < O; ++o)
    for (int64_t c = 0; c < C; ++c)
      wgrad_pair(x, gy, gw, B, C, H, W, O, k, pad, o, c);
}

void conv2d_wgrad(const double* x, const double* gy, double* gw,
                  int64_t B, int64_t C, int64_t H, int64_t W,
                  int64_t O, int64_t k, int64_t pad) {
  if (parallel_enabled() && O * C > 1)
    conv2d_wgrad_omp(x, gy, gw, B, C, H, W, O, k, pad);
  else
    conv2d_wgrad_serial(x, gy, gw, B, C, H, W, O, k, pad);
}

void kernel_flip_transpose(const double* w, double* wt, int64_t O, int64_t C, int64_t k) {
  for (int64_t o = 0; o < O; ++o)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t u = 0; u < k; ++u)
        for (int64_t v = 0; v < k; ++v)
          wt[((c * O + o) * k + u) * k + v] = w[((o * C + c) * k + (k - 1 - u)) * k + (k - 1 - v)];
}

// ---------------------------------------------------------------------------
// Pooling / upsampling
// ---------------------------------------------------------------------------

static inline void avgpool2_plane(const double* x, double* y, int64_t H, int64_t W) {
  const int64_t Ho = H / 2, Wo = W / 2;
  for (int64_t i = 0; i < Ho; ++i) {
    const double* r0 = x + (2 * i) * W;
    const double* r1 = x + (2 * i + 1) * W;
    double* yr = y + i * Wo;
    for (int64_t j = 0; j < Wo; ++j)
      yr[j] = 0.25 * (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]);
  }
}

void avgpool2_serial(const double* x, double* y, int64_t B, int64_t C, int64_t H, int64_t W) {
  const int64_t n = B * C;
  for (int64_t p = 0; p < n; ++p)
    avgpool2_plane(x + p * H * W, y + p * (H / 2) * (W / 2), H, W);
}

void avgpool2_omp(const double* x, double* y, int64_t B, int64_t C, int64_t H, int64_t W) {
  const int64_t n = B * C;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t p = 0; p < n; ++p)
    avgpool2_plane(x + p * H * W, y + p * (H / 2) * (W / 2), H, W);
}

void avgpool2(const double* x, double* y, int64_t B, int64_t C, int64_t H, int64_t W) {
  if (parallel_enabled() && B * C > 1)
    avgpool2_omp(x, y, B, C, H, W);
  else
    avgpool2_serial(x, y, B, C, H, W);
}

static inline void upsample2_plane(const double* x, double* y, int64_t H, int64_t W) {
  for (int64_t i = 0; i < H; ++i) {
    const double* xr = x + i * W;
    double* y0 = y + (2 * i) * 2 * W;
    double* y1 = y + (2 * i + 1) * 2 * W;
    for (int64_t j = 0; j < W; ++j) {
      const double v = xr[j];
      y0[2 * j] = v;
      y0[2 * j + 1] = v;
      y1[2 * j] = v;
      y1[2 * j + 1] = v;
    }
  }
}

void upsample2_serial(const double* x, double* y, int64_t B, int64_t C, int64_t H, int64_t W) {
  const int64_t n = B * C;
  for (int64_t p = 0; p < n; ++p)
    upsample2_plane(x + p * H * W, y + p * 4 * H * W, H, W);
}

void upsample2_omp(const double* x, double* y, int64_t B, int64_t C, int64_t H, int64_t W) {
  const int64_t n = B * C;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t p = 0; p < n; ++p)
    upsample2_plane(x + p * H * W, y + p * 4 * H * W, H, W);
}

void upsample2(const double* x, double* y, int64_t B, int64_t C, int64_t H, int64_t W) {
  if (parallel_enabled() && B * C > 1)
    upsample2_omp(x, y, B, C, H, W);
  else
    upsample2_serial(x, y, B, C, H, W);
}

// ---------------------------------------------------------------------------
// Dense products
// ---------------------------------------------------------------------------

static inline void matmul_row(const double* a, const double* b, double* c,
                              int64_t k, int64_t n, int64_t i) {
  double* cr = c + i * n;
  for (int64_t j = 0; j < n; ++j) cr[j] = 0.0;
  const double* ar = a + i * k;
  for (int64_t kk = 0; kk < k; ++kk) {
    const double av = ar[kk];
    if (av == 0.0) continue;
    const double* br = b + kk * n;
    for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
  }
}

void matmul_serial(const double* a, const double* b, double* c,
                   int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) matmul_row(a, b, c, k, n, i);
}

void matmul_omp(const double* a, const double* b, double* c,
                int64_t m, int64_t k, int64_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t i = 0; i < m; ++i) matmul_row(a, b, c, k, n, i);
}

void matmul(const double* a, const double* b, double* c,
            int64_t m, int64_t k, int64_t n) {
  if (parallel_enabled() && m > 1 && m * k * n > 4096)
    matmul_omp(a, b, c, m, k, n);
  else
    matmul_serial(a, b, c, m, k, n);
}

void transpose2d(const double* a, double* at, int64_t m, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) at[j * m + i] = a[i * n + j];
}

// ---------------------------------------------------------------------------
// Reductions / broadcasts
// ---------------------------------------------------------------------------

void spatial_sum_serial(const double* x, double* out, int64_t BC, int64_t HW) {
  for (int64_t p = 0; p < BC; ++p) {
    const double* xp = x + p * HW;
    double acc = 0.0;
    for (int64_t i = 0; i < HW; ++i) acc += xp[i];
    out[p] = acc;
  }
}

void spatial_sum_omp(const double* x, double* out, int64_t BC, int64_t HW) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t p = 0; p < BC; ++p) {
    const double* xp = x + p * HW;
    double acc = 0.0;
    for (int64_t i = 0; i < HW; ++i) acc += xp[i];
    out[p] = acc;
  }
}

void spatial_sum(const double* x, double* out, int64_t BC, int64_t HW) {
  if (parallel_enabled() && BC > 1 && BC * HW > 8192)
    spatial_sum_omp(x, out, BC, HW);
  else
    spatial_sum_serial(x, out, BC, HW);
}

void bcast_spatial(const double* v, double* y, int64_t BC, int64_t HW) {
  for (int64_t p = 0; p < BC; ++p) {
    const double vv = v[p];
    double* yp = y + p * HW;
    for (int64_t i = 0; i < HW; ++i) yp[i] = vv;
  }
}

void sum_rows(const double* x, double* out, int64_t B, int64_t F) {
  for (int64_t f = 0; f < F; ++f) out[f] = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const double* xr = x + b * F;
    for (int64_t f = 0; f < F; ++f) out[f] += xr[f];
  }
}

void bcast_rows(const double* v, double* y, int64_t B, int64_t F) {
  for (int64_t b = 0; b < B; ++b) {
    double* yr = y + b * F;
    for (int64_t f = 0; f < F; ++f) yr[f] = v[f];
  }
}

static inline double block_sum(const double* x, int64_t lo, int64_t hi) {
  double acc = 0.0;
  for (int64_t i = lo; i < hi; ++i) acc += x[i];
  return acc;
}

double sum_all_serial(const double* x, int64_t n) {
  const int64_t nblocks = (n + kReduceBlock - 1) / kReduceBlock;
  double acc = 0.0;
  for (int64_t blk = 0; blk < nblocks; ++blk)
    acc += block_sum(x, blk * kReduceBlock, std::min(n, (blk + 1) * kReduceBlock));
  return acc;
}

double sum_all_omp(const double* x, int64_t n) {
  const int64_t nblocks = (n + kReduceBlock - 1) / kReduceBlock;
  std::vector<double> partial(static_cast<size_t>(nblocks));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t blk = 0; blk < nblocks; ++blk)
    partial[static_cast<size_t>(blk)] =
        block_sum(x, blk * kReduceBlock, std::min(n, (blk + 1) * kReduceBlock));
  double acc = 0.0;
  for (double p : partial) acc += p;
  return acc;
}

double sum_all(const double* x, int64_t n) {
  if (parallel_enabled() && n > 2 * kReduceBlock) return sum_all_omp(x, n);
  return sum_all_serial(x, n);
}

void fill(double* y, int64_t n, double v) {
  for (int64_t i = 0; i < n; ++i) y[i] = v;
}

}  // namespace fsmix::kernels
