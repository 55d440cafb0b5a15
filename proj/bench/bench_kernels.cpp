// Serial reference kernels against their OpenMP versions on training-sized
// problems. Also confirms the two produce identical bits.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rqen/kernels.hpp"

namespace k = rqen::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

double seconds_per_call(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

struct Case {
  std::string name;
  std::function<void(bool parallel, std::vector<double>& out)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel timings"};
  int reps = 20;
  int threads = 0;
  app.add_option("--reps", reps, "timed calls per kernel")->capture_default_str();
  app.add_option("--threads", threads, "OpenMP threads, 0 for the runtime default");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) omp_set_num_threads(threads);

  std::mt19937_64 rng(7);
  // One training step's worth of frames: 8 triplets x 3 tracklets x 8 frames.
  k::ConvDims conv{192, 8, 64, 8, 4, 3};
  const auto x = random_vector(conv.batch * conv.in_channels * conv.height * conv.width, rng);
  const auto w = random_vector(conv.out_channels * conv.in_channels * 9, rng);
  const auto b = random_vector(conv.out_channels, rng);
  const auto dy = random_vector(conv.batch * conv.out_channels * conv.height * conv.width, rng);
  const std::size_t mn = 192, mk = 192, mm = 160;
  const auto ma = random_vector(mn * mk, rng);
  const auto mb = random_vector(mk * mm, rng);
  const std::size_t probes = 300, gallery = 300, dim = 192;
  const auto pf = random_vector(probes * dim, rng);
  const auto gf = random_vector(gallery * dim, rng);

  const std::vector<Case> cases = {
      {"conv2d_forward",
       [&](bool par, std::vector<double>& y) {
         y.assign(dy.size(), 0.0);
         (par ? k::omp::conv2d_forward : k::serial::conv2d_forward)(conv, x, w, b, y);
       }},
      {"conv2d_backward_input",
       [&](bool par, std::vector<double>& dx) {
         dx.assign(x.size(), 0.0);
         (par ? k::omp::conv2d_backward_input : k::serial::conv2d_backward_input)(conv, dy, w, dx);
       }},
      {"conv2d_backward_params",
       [&](bool par, std::vector<double>& dwb) {
         std::vector<double> dw(w.size(), 0.0), db(b.size(), 0.0);
         (par ? k::omp::conv2d_backward_params : k::serial::conv2d_backward_params)(conv, dy, x, dw,
                                                                                     db);
         dwb = dw;
         dwb.insert(dwb.end(), db.begin(), db.end());
       }},
      {"matmul_nn",
       [&](bool par, std::vector<double>& c) {
         c.assign(mn * mm, 0.0);
         (par ? k::omp::matmul_nn : k::serial::matmul_nn)(mn, mk, mm, ma, mb, c);
       }},
      {"cosine_distance_matrix",
       [&](bool par, std::vector<double>& d) {
         d.assign(probes * gallery, 0.0);
         (par ? k::omp::cosine_distance_matrix : k::serial::cosine_distance_matrix)(
             probes, gallery, dim, pf, gf, d);
       }},
  };

  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-24s %12s %12s %8s %s\n", "kernel", "serial ms", "openmp ms", "speedup", "match");
  bool all_match = true;
  for (const auto& c : cases) {
    std::vector<double> ys, yp;
    c.run(false, ys);
    c.run(true, yp);
    const bool match = ys == yp;
    all_match = all_match && match;
    std::vector<double> scratch;
    const double ts = seconds_per_call([&] { c.run(false, scratch); }, reps);
    const double tp = seconds_per_call([&] { c.run(true, scratch); }, reps);
    std::printf("%-24s %12.3f %12.3f %8.2f %s\n", c.name.c_str(), ts * 1e3, tp * 1e3, ts / tp,
                match ? "yes" : "NO");
  }
  return all_match ? 0 : 1;
}
