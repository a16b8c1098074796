#pragma once

#include <stdexcept>
#include <string>

#include "epg/grid.hpp"

namespace epg {

enum class Basis { kPosition, kMomentum, kMixed };

struct Vec2 {
    double u = 0, v = 0;
};

inline std::string basis_name(Basis b) { return b == Basis::kPosition ? "position" : "momentum"; }
inline Basis basis_from_name(const std::string& s) {
    if (s == "position") return Basis::kPosition;
    if (s == "momentum") return Basis::kMomentum;
    throw std::invalid_argument("unknown basis: " + s);
}

// Detector calibration: physical units per pixel about the centre pixel.
struct Calibration {
    double pos_scale_um = 0.1129;        // um / px
    double mom_scale_invum = 8.95e-2;    // um^-1 / px
    double pos_scale_err_um = 1.3e-3;
    double mom_scale_err_invum = 0.13e-2;

    double scale(Basis b) const { return b == Basis::kPosition ? pos_scale_um : mom_scale_invum; }

    void validate() const {
        if (!(pos_scale_um > 0 && mom_scale_invum > 0))
            throw std::invalid_argument("Calibration: scales must be positive");
    }
};

struct CoincidenceImage {
    Grid counts;
    Basis basis = Basis::kPosition;
    double scale = 0.1129;  // physical units per pixel
};

struct FlatField {
    Grid values;
    Grid beam_mask;  // 1 inside the beam, 0 outside
    Basis basis = Basis::kPosition;
};

}  // namespace epg
