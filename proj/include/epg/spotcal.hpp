#pragma once

#include <vector>

#include "epg/grid.hpp"
#include "epg/image_types.hpp"

namespace epg {

struct SpotFit {
    Vec2 center;            // sub-pixel, detector coordinates
    double amplitude = 0.0;
    double sigma_u = 0.0;   // widths, px
    double sigma_v = 0.0;
    double background = 0.0;
    double residual = 0.0;  // sum of squared residuals at the optimum
};

struct CalibResult {
    double scale = 0.0;  // physical units per pixel
    double sigma = 0.0;  // standard deviation across measurements
    size_t n_measurements = 0;
};

struct Peak {
    int x = 0, y = 0;
    double value = 0.0;
};

// Local maxima above threshold, at least min_separation px apart, sorted by
// intensity (descending). On conflicts the brighter peak wins.
std::vector<Peak> detect_spots(const Grid& image, double min_separation, double threshold);

// Least-squares axis-aligned 2D Gaussian plus constant background inside a
// square window of half-size `window` around `initial`. Sub-pixel centre.
// Throws on a degenerate (flat) window or non-convergence.
SpotFit fit_gaussian_2d(const Grid& image, int window, const Vec2& initial);

// Mean of known_spacing / pixel-distance over neighbouring centre pairs
// (centres taken in the given order); sigma is the sample standard
// deviation of the per-pair scales. Throws with < 2 centres.
CalibResult calibrate_from_spacings(const std::vector<Vec2>& centers,
                                    double known_spacing_physical);

// Real-space calibration from a periodic grating: FFT magnitude, peak
// detection with a 3 px DC exclusion, Gaussian refinement of each peak,
// then scale = known_spacing * |f_peak| per pixel. Throws if fewer than two
// Fourier peaks are found.
CalibResult fft_calibrate(const Grid& real_image, double known_spacing_nm);

// Sample standard deviation across per-iteration means. Throws with < 2.
double hysteresis_spread(const std::vector<double>& per_iteration_means);

}  // namespace epg
