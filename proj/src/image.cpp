#include "epg/image.hpp"

#include <cmath>
#include <stdexcept>

#include "epg/kernels.hpp"

namespace epg {

CoincidenceImage accumulate(const std::vector<CoincidencePair>& pairs, Basis basis,
                            const Calibration& calib, int grid) {
    calib.validate();
    CoincidenceImage img;
    img.basis = basis;
    img.scale = calib.scale(basis);
    img.counts = Grid(grid, grid);
    for (const auto& p : pairs) {
        if (p.electron.x_px >= grid || p.electron.y_px >= grid)
            throw std::invalid_argument("accumulate: pair pixel off-grid");
        img.counts.at(p.electron.x_px, p.electron.y_px) += 1.0;
    }
    return img;
}

FlatField flat_field_smooth(const CoincidenceImage& raw, const FlatFieldParams& params) {
    if (!(raw.counts.total() > 0)) throw std::invalid_argument("flat_field_smooth: empty image");
    const int nx = raw.counts.nx(), ny = raw.counts.ny();
    const double sigma = params.sigma(raw.basis);

    // Median filter knocks out stray counts and hot pixels around the beam.
    const Grid med = kernels::median3(raw.counts);
    const double threshold = params.threshold_frac * med.max_value();
    if (!(threshold > 0)) throw std::runtime_error("flat_field_smooth: threshold eliminated all pixels");

    FlatField out;
    out.basis = raw.basis;
    out.beam_mask = Grid(nx, ny);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            out.beam_mask.at(x, y) = med.at(x, y) >= threshold ? 1.0 : 0.0;
    if (out.beam_mask.total() == 0)
        throw std::runtime_error("flat_field_smooth: threshold eliminated all pixels");

    // Iterative masked smoothing: normalised convolution so zero-valued
    // out-of-beam pixels do not drag the edges down.
    Grid values(nx, ny);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            values.at(x, y) = raw.counts.at(x, y) * out.beam_mask.at(x, y);
    for (int it = 0; it < params.iterations; ++it) {
        const Grid num = kernels::gaussian_blur(values, sigma);
        const Grid den = kernels::gaussian_blur(out.beam_mask, sigma);
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x)
                values.at(x, y) = out.beam_mask.at(x, y) > 0 && den.at(x, y) > 1e-12
                                      ? num.at(x, y) / den.at(x, y)
                                      : 0.0;
    }
    // Final pass includes the camera edges so the profile does not cut off
    // abruptly at the beam mask boundary.
    out.values = kernels::gaussian_blur(values, sigma);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            if (out.values.at(x, y) < 0) out.values.at(x, y) = 0.0;
    return out;
}

Vec2 pixel_to_physical(double px, double py, Basis basis, const Calibration& calib) {
    const double s = calib.scale(basis);
    return {(px - kCenterPx) * s, (py - kCenterPx) * s};
}

}  // namespace epg
