#pragma once

#include <cstddef>
#include <span>

// Dense numeric kernels behind the autodiff primitives and the evaluation
// distance matrix. Each kernel exists twice: a plain serial loop nest kept as
// the reference, and an OpenMP version that splits the same loop nest over
// independent outputs. Both accumulate every output in the same order, so
// their results are bit-identical.

namespace rqen::kernels {

struct ConvDims {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t kernel = 3;  // odd; zero padding kernel / 2, stride 1
};

namespace serial {
// y[N,Co,H,W] = conv(x[N,Ci,H,W], w[Co,Ci,K,K]) + b[Co]
void conv2d_forward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);
// dx += transposed conv of dy with w
void conv2d_backward_input(const ConvDims& d, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
// dw += correlation of dy with x; db += sum of dy per channel
void conv2d_backward_params(const ConvDims& d, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> db);
// c[N,M] += a[N,K] b[K,M]
void matmul_nn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
// c[N,K] += a[N,M] b[K,M]^T
void matmul_nt(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
// c[K,M] += a[N,K]^T b[N,M]
void matmul_tn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
// out[P,G] = 1 - cos(probe_p, gallery_g); zero vectors are the caller's problem
void cosine_distance_matrix(std::size_t p, std::size_t g, std::size_t dim,
                            std::span<const double> probe, std::span<const double> gallery,
                            std::span<double> out);
}  // namespace serial

namespace omp {
void conv2d_forward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);
void conv2d_backward_input(const ConvDims& d, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
void conv2d_backward_params(const ConvDims& d, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> db);
void matmul_nn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
void matmul_nt(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
void matmul_tn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
void cosine_distance_matrix(std::size_t p, std::size_t g, std::size_t dim,
                            std::span<const double> probe, std::span<const double> gallery,
                            std::span<double> out);
}  // namespace omp

// Dispatch used by the autodiff primitives and the evaluation code.
void set_parallel(bool enabled);
bool parallel_enabled();
int max_threads();

void conv2d_forward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);
void conv2d_backward_input(const ConvDims& d, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
void conv2d_backward_params(const ConvDims& d, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> db);
void matmul_nn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
void matmul_nt(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
void matmul_tn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
void cosine_distance_matrix(std::size_t p, std::size_t g, std::size_t dim,
                            std::span<const double> probe, std::span<const double> gallery,
                            std::span<double> out);

}  // namespace rqen::kernels
