#pragma once

#include <vector>

#include "epg/coincidence.hpp"
#include "epg/image_types.hpp"

namespace epg {

struct FlatFieldParams {
    double threshold_frac = 0.10;  // of the median-filtered maximum
    int iterations = 3;
    double sigma_position_px = 5.0;
    double sigma_momentum_px = 2.0;

    double sigma(Basis b) const {
        return b == Basis::kPosition ? sigma_position_px : sigma_momentum_px;
    }
};

// Histogram coincidence pairs into the detector grid.
CoincidenceImage accumulate(const std::vector<CoincidencePair>& pairs, Basis basis,
                            const Calibration& calib, int grid = kDetectorGrid);

// Smoothed mask-free reference (I0 / J0): median filter -> threshold ->
// binary beam mask -> iterative masked Gaussian smoothing renormalised by
// the smoothed mask -> final edge-inclusive Gaussian pass.
FlatField flat_field_smooth(const CoincidenceImage& raw, const FlatFieldParams& params = {});

// (px - 127) * scale about the centre pixel.
Vec2 pixel_to_physical(double px, double py, Basis basis, const Calibration& calib);

}  // namespace epg
