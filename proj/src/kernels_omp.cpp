#include <omp.h>

#include <algorithm>
#include <cmath>

#include "rqen/kernels.hpp"

namespace rqen::kernels {

namespace {
bool g_parallel = true;
}

void set_parallel(bool enabled) { g_parallel = enabled; }
bool parallel_enabled() { return g_parallel; }
int max_threads() { return omp_get_max_threads(); }

namespace omp {

void conv2d_forward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
  const long pad = static_cast<long>(d.kernel / 2);
  const long H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  const long K = static_cast<long>(d.kernel);
  const long Ci = static_cast<long>(d.in_channels);
  const long planes = static_cast<long>(d.batch * d.out_channels);
#pragma omp parallel for schedule(static)
  for (long plane = 0; plane < planes; ++plane) {
    const long n = plane / static_cast<long>(d.out_channels);
    const long co = plane % static_cast<long>(d.out_channels);
    const double* xn = x.data() + n * Ci * H * W;
    const double* wc = w.data() + co * Ci * K * K;
    double* yp = y.data() + plane * H * W;
    for (long oy = 0; oy < H; ++oy) {
      for (long ox = 0; ox < W; ++ox) {
        double acc = b[co];
        for (long ci = 0; ci < Ci; ++ci) {
          for (long ky = 0; ky < K; ++ky) {
            const long iy = oy + ky - pad;
            if (iy < 0 || iy >= H) continue;
            for (long kx = 0; kx < K; ++kx) {
              const long ix = ox + kx - pad;
              if (ix < 0 || ix >= W) continue;
              acc += wc[(ci * K + ky) * K + kx] * xn[(ci * H + iy) * W + ix];
            }
          }
        }
        yp[oy * W + ox] = acc;
      }
    }
  }
}

void conv2d_backward_input(const ConvDims& d, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  const long pad = static_cast<long>(d.kernel / 2);
  const long H = static_cast<long>(d.height), W = static_cast<long>(d.width);
  const long K = static_cast<long>(d.kernel);
  const long Ci = static_cast<long>(d.in_channels), Co = static_cast<long>(d.out_channels);
  const long N = static_cast<long>(d.batch);
  // Each image owns its slice of dx.
#pragma omp parallel for schedule(static)
  for (long n = 0; n < N; ++n) {
    double* dxn = dx.data() + n * Ci * H * W;
    for (long co = 0; co < Co; ++co) {
      const double* dyp = dy.data() + (n * Co + co) * H * W;
      const double* wc = w.data() + co * Ci * K * K;
      for (long oy = 0; oy < H; ++oy) {
        for (long ox = 0; ox < W; ++ox) {
          const double g = dyp[oy * W + ox];
          for (long ci = 0; ci < Ci; ++ci) {
            for (long ky = 0; ky < K; ++ky) {
              const long iy = oy + ky - pad;
              if (iy < 0 || iy >= H) continue;
              for (long kx = 0; kx < K; ++kx) {
                const long ix = ox + kx - pad;
                if (ix < 0 || ix >= W) continue;
                dxn[(ci * H + iy) * W + ix] += g * wc[(ci * K + ky) * K + kx];
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
  const long K = static_cast<long>(d.kernel);
  const long Ci = static_cast<long>(d.in_channels), Co = static_cast<long>(d.out_channels);
  const long N = static_cast<long>(d.batch);
  // Each output channel owns its filter gradient.
#pragma omp parallel for schedule(static)
  for (long co = 0; co < Co; ++co) {
    double* dwc = dw.data() + co * Ci * K * K;
    double bias_grad = db[co];
    for (long n = 0; n < N; ++n) {
      const double* dyp = dy.data() + (n * Co + co) * H * W;
      const double* xn = x.data() + n * Ci * H * W;
      for (long oy = 0; oy < H; ++oy) {
        for (long ox = 0; ox < W; ++ox) {
          const double g = dyp[oy * W + ox];
          bias_grad += g;
          for (long ci = 0; ci < Ci; ++ci) {
            for (long ky = 0; ky < K; ++ky) {
              const long iy = oy + ky - pad;
              if (iy < 0 || iy >= H) continue;
              for (long kx = 0; kx < K; ++kx) {
                const long ix = ox + kx - pad;
                if (ix < 0 || ix >= W) continue;
                dwc[(ci * K + ky) * K + kx] += g * xn[(ci * H + iy) * W + ix];
              }
            }
          }
        }
      }
    }
    db[co] = bias_grad;
  }
}

void matmul_nn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
  const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * k * m > 4096)
  for (long i = 0; i < rows; ++i) {
    double* ci = c.data() + i * m;
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_nt(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
  const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * k * m > 4096)
  for (long i = 0; i < rows; ++i) {
    const double* ai = a.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b.data() + p * m;
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += ai[j] * bp[j];
      c[i * k + p] += acc;
    }
  }
}

void matmul_tn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
  const long cols = static_cast<long>(k);
#pragma omp parallel for schedule(static) if (n * k * m > 4096)
  for (long p = 0; p < cols; ++p) {
    double* cp = c.data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = a[i * k + p];
      const double* bi = b.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += av * bi[j];
    }
  }
}

void cosine_distance_matrix(std::size_t p, std::size_t g, std::size_t dim,
                            std::span<const double> probe, std::span<const double> gallery,
                            std::span<double> out) {
  const long rows = static_cast<long>(p);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    const double* pi = probe.data() + i * dim;
    for (std::size_t j = 0; j < g; ++j) {
      const double* gj = gallery.data() + j * dim;
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t t = 0; t < dim; ++t) {
        dot += pi[t] * gj[t];
        na += pi[t] * pi[t];
        nb += gj[t] * gj[t];
      }
      out[i * g + j] = std::clamp(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 2.0);
    }
  }
}

}  // namespace omp

#define RQEN_DISPATCH(fn, ...) \
  (g_parallel ? omp::fn(__VA_ARGS__) : serial::fn(__VA_ARGS__))

void conv2d_forward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
  RQEN_DISPATCH(conv2d_forward, d, x, w, b, y);
}
void conv2d_backward_input(const ConvDims& d, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  RQEN_DISPATCH(conv2d_backward_input, d, dy, w, dx);
}
void conv2d_backward_params(const ConvDims& d, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> db) {
  RQEN_DISPATCH(conv2d_backward_params, d, dy, x, dw, db);
}
void matmul_nn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
  RQEN_DISPATCH(matmul_nn, n, k, m, a, b, c);
}
void matmul_nt(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
  RQEN_DISPATCH(matmul_nt, n, k, m, a, b, c);
}
void matmul_tn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
               std::span<const double> b, std::span<double> c) {
  RQEN_DISPATCH(matmul_tn, n, k, m, a, b, c);
}
void cosine_distance_matrix(std::size_t p, std::size_t g, std::size_t dim,
                            std::span<const double> probe, std::span<const double> gallery,
                            std::span<double> out) {
  RQEN_DISPATCH(cosine_distance_matrix, p, g, dim, probe, gallery, out);
}

#undef RQEN_DISPATCH

}  // namespace rqen::kernels
