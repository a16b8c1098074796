#include "epg/spotcal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "epg/fit.hpp"

namespace epg {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sample_stddev(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (xs.size() - 1));
}

}  // namespace

std::vector<Peak> detect_spots(const Grid& image, double min_separation, double threshold) {
    if (image.size() == 0) throw std::invalid_argument("detect_spots: empty image");
    std::vector<Peak> candidates;
    for (int y = 0; y < image.ny(); ++y) {
        for (int x = 0; x < image.nx(); ++x) {
            const double v = image.at(x, y);
            if (v <= threshold) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    if (image.in_bounds(x + dx, y + dy) && image.at(x + dx, y + dy) > v) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) candidates.push_back({x, y, v});
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Peak& a, const Peak& b) { return a.value > b.value; });
    // Greedy suppression: brighter peaks claim their neighbourhood.
    std::vector<Peak> out;
    const double min_sep2 = min_separation * min_separation;
    for (const Peak& c : candidates) {
        bool ok = true;
        for (const Peak& p : out) {
            const double du = c.x - p.x, dv = c.y - p.y;
            if (du * du + dv * dv < min_sep2) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(c);
    }
    return out;
}

SpotFit fit_gaussian_2d(const Grid& image, int window, const Vec2& initial) {
    if (window < 2) throw std::invalid_argument("fit_gaussian_2d: window too small");
    const int cx = static_cast<int>(std::lround(initial.u));
    const int cy = static_cast<int>(std::lround(initial.v));
    if (!image.in_bounds(cx - window, cy - window) || !image.in_bounds(cx + window, cy + window))
        throw std::invalid_argument("fit_gaussian_2d: window outside image");

    double lo = image.at(cx, cy), hi = lo;
    for (int y = cy - window; y <= cy + window; ++y)
        for (int x = cx - window; x <= cx + window; ++x) {
            lo = std::min(lo, image.at(x, y));
            hi = std::max(hi, image.at(x, y));
        }
    if (!(hi > lo)) throw std::runtime_error("fit_gaussian_2d: flat window");

    auto residual_sum = [&](const std::vector<double>& p) {
        const double u = p[0], v = p[1];
        const double su = std::max(std::abs(p[2]), 0.05);
        const double sv = std::max(std::abs(p[3]), 0.05);
        const double amp = p[4], bg = p[5];
        double ss = 0.0;
        for (int y = cy - window; y <= cy + window; ++y)
            for (int x = cx - window; x <= cx + window; ++x) {
                const double du = (x - u) / su, dv = (y - v) / sv;
                const double model = bg + amp * std::exp(-0.5 * (du * du + dv * dv));
                const double r = model - image.at(x, y);
                ss += r * r;
            }
        return ss;
    };

    const std::vector<double> x0{initial.u, initial.v, window / 2.0, window / 2.0, hi - lo, lo};
    const std::vector<double> scales{0.5, 0.5, window / 4.0, window / 4.0, 0.2 * (hi - lo),
                                     0.1 * (hi - lo)};
    const NelderMeadResult nm = nelder_mead(residual_sum, x0, scales, 1e-9, 4000);
    if (!nm.converged) throw std::runtime_error("fit_gaussian_2d: no convergence");

    SpotFit fit;
    fit.center = {nm.x[0], nm.x[1]};
    fit.sigma_u = std::max(std::abs(nm.x[2]), 0.05);
    fit.sigma_v = std::max(std::abs(nm.x[3]), 0.05);
    fit.amplitude = nm.x[4];
    fit.background = nm.x[5];
    fit.residual = nm.value;
    return fit;
}

CalibResult calibrate_from_spacings(const std::vector<Vec2>& centers,
                                    double known_spacing_physical) {
    if (centers.size() < 2)
        throw std::invalid_argument("calibrate_from_spacings: need at least 2 centers");
    std::vector<double> scales;
    for (size_t i = 0; i + 1 < centers.size(); ++i) {
        const double du = centers[i + 1].u - centers[i].u;
        const double dv = centers[i + 1].v - centers[i].v;
        const double dist = std::hypot(du, dv);
        if (!(dist > 0)) throw std::invalid_argument("calibrate_from_spacings: coincident centers");
        scales.push_back(known_spacing_physical / dist);
    }
    CalibResult res;
    res.n_measurements = scales.size();
    res.scale = std::accumulate(scales.begin(), scales.end(), 0.0) / scales.size();
    res.sigma = sample_stddev(scales);
    return res;
}

CalibResult fft_calibrate(const Grid& real_image, double known_spacing_nm) {
    const int nx = real_image.nx(), ny = real_image.ny();
    if (nx < 8 || ny < 8) throw std::invalid_argument("fft_calibrate: image too small");

    // Hann window so finite-support leakage leaves a smooth, nearly Gaussian
    // peak the sub-bin fit can latch onto.
    std::vector<fftw_complex> in(static_cast<size_t>(nx) * ny), out(in.size());
    for (int y = 0; y < ny; ++y) {
        const double wy = 0.5 * (1.0 - std::cos(2.0 * kPi * y / ny));
        for (int x = 0; x < nx; ++x) {
            const double wx = 0.5 * (1.0 - std::cos(2.0 * kPi * x / nx));
            in[static_cast<size_t>(y) * nx + x][0] = real_image.at(x, y) * wx * wy;
            in[static_cast<size_t>(y) * nx + x][1] = 0.0;
        }
    }
    fftw_plan plan = fftw_plan_dft_2d(ny, nx, in.data(), out.data(), FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);

    // fftshifted magnitude with the DC region blanked (3 px exclusion).
    Grid mag(nx, ny);
    const int hx = nx / 2, hy = ny / 2;
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            const int sx = (x + hx) % nx, sy = (y + hy) % ny;
            const size_t i = static_cast<size_t>(y) * nx + x;
            mag.at(sx, sy) = std::hypot(out[i][0], out[i][1]);
        }
    for (int y = hy - 3; y <= hy + 3; ++y)
        for (int x = hx - 3; x <= hx + 3; ++x)
            if (mag.in_bounds(x, y) && (x - hx) * (x - hx) + (y - hy) * (y - hy) <= 9)
                mag.at(x, y) = 0.0;

    const double peak = mag.max_value();
    if (!(peak > 0)) throw std::runtime_error("fft_calibrate: no spectral power off DC");
    std::vector<Peak> peaks = detect_spots(mag, 4.0, 0.5 * peak);
    if (peaks.size() < 2) throw std::runtime_error("fft_calibrate: fewer than 2 Fourier peaks");

    std::vector<double> scales;
    for (const Peak& p : peaks) {
        Vec2 center{static_cast<double>(p.x), static_cast<double>(p.y)};
        if (p.x - 3 >= 0 && p.x + 3 < nx && p.y - 3 >= 0 && p.y + 3 < ny)
            center = fit_gaussian_2d(mag, 3, center).center;
        const double fx = (center.u - hx) / nx;  // cycles per px
        const double fy = (center.v - hy) / ny;
        const double f = std::hypot(fx, fy);
        if (f > 0) scales.push_back(known_spacing_nm * f);
    }
    if (scales.size() < 2) throw std::runtime_error("fft_calibrate: fewer than 2 usable peaks");

    CalibResult res;
    res.n_measurements = scales.size();
    res.scale = std::accumulate(scales.begin(), scales.end(), 0.0) / scales.size();
    res.sigma = sample_stddev(scales);
    return res;
}

double hysteresis_spread(const std::vector<double>& per_iteration_means) {
    if (per_iteration_means.size() < 2)
        throw std::invalid_argument("hysteresis_spread: need at least 2 iterations");
    return sample_stddev(per_iteration_means);
}

}  // namespace epg
