#pragma once

#include <cstdint>

namespace fsmix::kernels {

// Runtime switch between the OpenMP kernels and the serial references.
// Both paths produce bit-identical results: parallel loops only split
// independent output elements, and full reductions use a fixed blocking
// scheme whose combine order does not depend on the thread count.
bool parallel_enabled();
void set_parallel(bool on);
int max_threads();

// ---------------------------------------------------------------------------
// Convolution, stride 1, square kernel k, zero padding `pad`.
//   x [B,C,H,W], w [O,C,k,k], bias [O] or nullptr, y [B,O,H,W]
// ---------------------------------------------------------------------------
void conv2d_fwd_serial(const double* x, const double* w, const double* bias,
                       double* y, int64_t B, int64_t C, int64_t H, int64_t W,
                       int64_t O, int64_t k, int64_t pad);
void conv2d_fwd_omp(const double* x, const double* w, const double* bias,
                    double* y, int64_t B, int64_t C, int64_t H, int64_t W,
                    int64_t O, int64_t k, int64_t pad);
void conv2d_fwd(const double* x, const double* w, const double* bias,
                double* y, int64_t B, int64_t C, int64_t H, int64_t W,
                int64_t O, int64_t k, int64_t pad);

// gw[o,c,u,v] = sum_{b,i,j} gy[b,o,i,j] * x[b,c,i+u-pad,j+v-pad]
void conv2d_wgrad_serial(const double* x, const double* gy, double* gw,
                         int64_t B, int64_t C, int64_t H, int64_t W,
                         int64_t O, int64_t k, int64_t pad);
void conv2d_wgrad_omp(const double* x, const double* gy, double* gw,
                      int64_t B, int64_t C, int64_t H, int64_t W,
                      int64_t O, int64_t k, int64_t pad);
void conv2d_wgrad(const double* x, const double* gy, double* gw,
                  int64_t B, int64_t C, int64_t H, int64_t W,
                  int64_t O, int64_t k, int64_t pad);

// wt[c,o,u,v] = w[o,c,k-1-u,k-1-v]
void kernel_flip_transpose(const double* w, double* wt, int64_t O, int64_t C, int64_t k);

// ---------------------------------------------------------------------------
// 2x2 average pooling and nearest-neighbour 2x upsampling.
// ---------------------------------------------------------------------------
void avgpool2_serial(const double* x, double* y, int64_t B, int64_t C, int64_t H, int64_t W);
void avgpool2_omp(const double* x, double* y, int64_t B, int64_t C, int64_t H, int64_t W);
void avgpool2(const double* x, double* y, int64_t B, int64_t C, int64_t H, int64_t W);

void upsample2_serial(const double* x, double* y, int64_t B, int64_t C, int64_t H, int64_t W);
void upsample2_omp(const double* x, double* y, int64_t B, int64_t C, int64_t H, int64_t W);
void upsample2(const double* x, double* y, int64_t B, int64_t C, int64_t H, int64_t W);

// ---------------------------------------------------------------------------
// Dense products. C[m,n] = A[m,k] * B[k,n].
// ---------------------------------------------------------------------------
void matmul_serial(const double* a, const double* b, double* c,
                   int64_t m, int64_t k, int64_t n);
void matmul_omp(const double* a, const double* b, double* c,
                int64_t m, int64_t k, int64_t n);
void matmul(const double* a, const double* b, double* c,
            int64_t m, int64_t k, int64_t n);

void transpose2d(const double* a, double* at, int64_t m, int64_t n);

// ---------------------------------------------------------------------------
// Reductions and broadcasts.
// ---------------------------------------------------------------------------
// out[b,c] = sum over spatial of x[b,c,:,:]
void spatial_sum_serial(const double* x, double* out, int64_t BC, int64_t HW);
void spatial_sum_omp(const double* x, double* out, int64_t BC, int64_t HW);
void spatial_sum(const double* x, double* out, int64_t BC, int64_t HW);

// y[b,c,h,w] = v[b,c]
void bcast_spatial(const double* v, double* y, int64_t BC, int64_t HW);

// out[f] = sum_b x[b,f]
void sum_rows(const double* x, double* out, int64_t B, int64_t F);
// y[b,f] = v[f]
void bcast_rows(const double* v, double* y, int64_t B, int64_t F);

// Blocked full reduction; block partials are combined in index order so
// serial and parallel paths agree bitwise.
double sum_all_serial(const double* x, int64_t n);
double sum_all_omp(const double* x, int64_t n);
double sum_all(const double* x, int64_t n);

void fill(double* y, int64_t n, double v);

}  // namespace fsmix::kernels
