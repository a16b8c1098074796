#include "epg/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace epg::kernels {

std::vector<double> gaussian_taps(double sigma_px) {
    if (!(sigma_px > 0.0)) throw std::invalid_argument("gaussian_taps: sigma must be positive");
    const int half = std::max(1, static_cast<int>(std::ceil(4.0 * sigma_px)));
    std::vector<double> taps(2 * half + 1);
    double sum = 0.0;
    for (int i = -half; i <= half; ++i) {
        const double v = std::exp(-0.5 * (i / sigma_px) * (i / sigma_px));
        taps[i + half] = v;
        sum += v;
    }
    for (double& t : taps) t /= sum;
    return taps;
}

namespace {

// Horizontal then vertical pass with zero padding. `parallel` toggles the
// OpenMP row loop; both paths produce identical results.
Grid blur_impl(const Grid& in, double sigma_x_px, double sigma_y_px, bool parallel) {
    const auto tx = gaussian_taps(sigma_x_px);
    const auto ty = gaussian_taps(sigma_y_px);
    const int hx = (static_cast<int>(tx.size()) - 1) / 2;
    const int hy = (static_cast<int>(ty.size()) - 1) / 2;
    const int nx = in.nx(), ny = in.ny();
    Grid tmp(nx, ny), out(nx, ny);

#pragma omp parallel for schedule(static) if (parallel)
    for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
            double s = 0.0;
            const int i0 = std::max(-hx, -x), i1 = std::min(hx, nx - 1 - x);
            for (int i = i0; i <= i1; ++i) s += tx[i + hx] * in.at(x + i, y);
            tmp.at(x, y) = s;
        }
    }
#pragma omp parallel for schedule(static) if (parallel)
    for (int y = 0; y < ny; ++y) {
        const int j0 = std::max(-hy, -y), j1 = std::min(hy, ny - 1 - y);
        for (int x = 0; x < nx; ++x) {
            double s = 0.0;
            for (int j = j0; j <= j1; ++j) s += ty[j + hy] * tmp.at(x, y + j);
            out.at(x, y) = s;
        }
    }
    return out;
}

Grid median_impl(const Grid& in, bool parallel) {
    const int nx = in.nx(), ny = in.ny();
    Grid out(nx, ny);
#pragma omp parallel for schedule(static) if (parallel)
    for (int y = 0; y < ny; ++y) {
        double w[9];
        for (int x = 0; x < nx; ++x) {
            int n = 0;
            for (int j = -1; j <= 1; ++j)
                for (int i = -1; i <= 1; ++i)
                    w[n++] = in.in_bounds(x + i, y + j) ? in.at(x + i, y + j) : 0.0;
            std::nth_element(w, w + 4, w + 9);
            out.at(x, y) = w[4];
        }
    }
    return out;
}

}  // namespace

Grid gaussian_blur_serial(const Grid& in, double sigma_px) {
    return blur_impl(in, sigma_px, sigma_px, false);
}
Grid gaussian_blur_omp(const Grid& in, double sigma_px) {
    return blur_impl(in, sigma_px, sigma_px, true);
}
Grid gaussian_blur(const Grid& in, double sigma_px) {
    return blur_impl(in, sigma_px, sigma_px, true);
}

Grid gaussian_blur_xy_serial(const Grid& in, double sx, double sy) {
    return blur_impl(in, sx, sy, false);
}
Grid gaussian_blur_xy_omp(const Grid& in, double sx, double sy) {
    return blur_impl(in, sx, sy, true);
}
Grid gaussian_blur_xy(const Grid& in, double sx, double sy) {
    return blur_impl(in, sx, sy, true);
}

Grid median3_serial(const Grid& in) { return median_impl(in, false); }
Grid median3_omp(const Grid& in) { return median_impl(in, true); }
Grid median3(const Grid& in) { return median_impl(in, true); }

}  // namespace epg::kernels
