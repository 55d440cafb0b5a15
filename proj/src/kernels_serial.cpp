#include <algorithm>
#include <cmath>

#include "rqen/kernels.hpp"

namespace rqen::kernels::serial {

void conv2d_forward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
  const long pad = static_cast<long>(d.kernel / 2);
  const long H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  const std::size_t K = d.kernel;
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      for (long oy = 0; oy < H; ++oy) {
        for (long ox = 0; ox < W; ++ox) {
          double acc = b[co];
          for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
            for (std::size_t ky = 0; ky < K; ++ky) {
              const long iy = oy + static_cast<long>(ky) - pad;
              if (iy < 0 || iy >= H) continue;
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long ix = ox + static_cast<long>(kx) - pad;
                if (ix < 0 || ix >= W) continue;
                acc += w[((co * d.in_channels + ci) * K + ky) * K + kx] *
                       x[((n * d.in_channels + ci) * H + iy) * W + ix];
              }
            }
          }
          y[((n * d.out_channels + co) * H + oy) * W + ox] = acc;
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvDims& d, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  const long pad = static_cast<long>(d.kernel / 2);
  const long H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  const std::size_t K = d.kernel;
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      for (long oy = 0; oy < H; ++oy) {
        for (long ox = 0; ox < W; ++ox) {
          const double g = dy[((n * d.out_channels + co) * H + oy) * W + ox];
          for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
            for (std::size_t ky = 0; ky < K; ++ky) {
              const long iy = oy + static_cast<long>(ky) - pad;
              if (iy < 0 || iy >= H) continue;
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long ix = ox + static_cast<long>(kx) - pad;
                if (ix < 0 || ix >= W) continue;
                dx[((n * d.in_channels + ci) * H + iy) * W + ix] +=
                    g * w[((co * d.in_channels + ci) * K + ky) * K + kx];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_params(const ConvDims& d, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> db) {
  const long pad = static_cast<long>(d.kernel / 2);
  const long H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  const std::size_t K = d.kernel;
  for (std::size_t co = 0; co < d.out_channels; ++co) {
    for (std::size_t n = 0; n < d.batch; ++n) {
      for (long oy = 0; oy < H; ++oy) {
        for (long ox = 0; ox < W; ++ox) {
          const double g = dy[((n * d.out_channels + co) * H + oy) * W + ox];
          db[co] += g;
          for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
            for (std::size_t ky = 0; ky < K; ++ky) {
              const long iy = oy + static_cast<long>(ky) - pad;
              if (iy < 0 || iy >= H) continue;
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long ix = ox + static_cast<long>(kx) - pad;
                if (ix < 0 || ix >= W) continue;
                dw[((co * d.in_channels + ci) * K + ky) * K + kx] +=
                    g * x[((n * d.in_channels + ci) * H + iy) * W + ix];
              }
            }
          }
        }
      }
    }
  }
}

void matmul_nn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < m; ++j) c[i * m + j] += a[i * k + p] * b[p * m + j];
}

void matmul_nt(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += a[i * m + j] * b[p * m + j];
      c[i * k + p] += acc;
    }
}

void matmul_tn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) c[p * m + j] += a[i * k + p] * b[i * m + j];
}

void cosine_distance_matrix(std::size_t p, std::size_t g, std::size_t dim,
                            std::span<const double> probe, std::span<const double> gallery,
                            std::span<double> out) {
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t t = 0; t < dim; ++t) {
        const double a = probe[i * dim + t], b = gallery[j * dim + t];
        dot += a * b;
        na += a * a;
        nb += b * b;
      }
      out[i * g + j] = std::clamp(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 2.0);
    }
  }
}

}  // namespace rqen::kernels::serial
