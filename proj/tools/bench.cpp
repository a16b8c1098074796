// Compares the serial reference kernels against the OpenMP variants on
// detector-sized grids and checks the outputs are bit-identical.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

#include "epg/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using epg::Grid;

double time_ms(const std::function<Grid()>& fn, int reps, Grid* out) {
    // Warm-up run, then best-of timing.
    *out = fn();
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Grid g = fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void bench(const char* name, const std::function<Grid()>& serial,
           const std::function<Grid()>& parallel, int reps) {
    Grid a, b;
    const double ts = time_ms(serial, reps, &a);
    const double tp = time_ms(parallel, reps, &b);
    std::printf("%-24s serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   identical %s\n", name,
                ts, tp, ts / tp, a == b ? "yes" : "NO");
}

}  // namespace

int main() {
    const int n = 256;
    Grid img(n, n);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(0.0, 100.0);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) img.at(x, y) = uni(rng);

#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (no OpenMP)\n");
#endif

    const int reps = 20;
    bench(
        "gaussian_blur s=2", [&] { return epg::kernels::gaussian_blur_serial(img, 2.0); },
        [&] { return epg::kernels::gaussian_blur_omp(img, 2.0); }, reps);
    bench(
        "gaussian_blur s=5", [&] { return epg::kernels::gaussian_blur_serial(img, 5.0); },
        [&] { return epg::kernels::gaussian_blur_omp(img, 5.0); }, reps);
    bench(
        "gaussian_blur_xy 3/1.5",
        [&] { return epg::kernels::gaussian_blur_xy_serial(img, 3.0, 1.5); },
        [&] { return epg::kernels::gaussian_blur_xy_omp(img, 3.0, 1.5); }, reps);
    bench(
        "median3", [&] { return epg::kernels::median3_serial(img); },
        [&] { return epg::kernels::median3_omp(img); }, reps);
    return 0;
}
