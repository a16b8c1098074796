#pragma once

#include "epg/grid.hpp"

namespace epg::kernels {

// Discrete unit-sum Gaussian taps truncated at 4 sigma.
std::vector<double> gaussian_taps(double sigma_px);

// Separable Gaussian blur, zero padding outside the grid.
// The omp variant parallelises over rows; output is bit-identical to the
// serial reference because every output pixel is computed independently.
Grid gaussian_blur_serial(const Grid& in, double sigma_px);
Grid gaussian_blur_omp(const Grid& in, double sigma_px);
Grid gaussian_blur(const Grid& in, double sigma_px);  // dispatches to omp build

// Anisotropic variant: sigma_x along rows, sigma_y along columns.
Grid gaussian_blur_xy_serial(const Grid& in, double sigma_x_px, double sigma_y_px);
Grid gaussian_blur_xy_omp(const Grid& in, double sigma_x_px, double sigma_y_px);
Grid gaussian_blur_xy(const Grid& in, double sigma_x_px, double sigma_y_px);

// 3x3 median filter, zero padding at the borders.
Grid median3_serial(const Grid& in);
Grid median3_omp(const Grid& in);
Grid median3(const Grid& in);

}  // namespace epg::kernels
