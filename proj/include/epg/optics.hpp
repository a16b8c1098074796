#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "epg/grid.hpp"
#include "epg/image_types.hpp"

namespace epg {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        return {x / n, y / n, z / n};
    }
};

// Lab frame of the mirror-lens chain: e3 is the paraboloid (collimation)
// axis, e2 points up along the electron column, e1 completes the right-handed
// set. The paraboloid has its focal point at the origin and surface
// z = (x^2 + y^2)/(4 f) - f. The sample plane is horizontal, spanned by
// (e1, e3); emission is collected around +e2 and folded into +e3.
//
// beam_* below follows the fitted-parameter convention of the calibration
// data: beam_x is the coordinate along the collimation axis (e3), beam_y is
// along e1, beam_z is the height above the focal point (e2).
struct OpticsConfig {
    double f_mirror_um = 750.0;
    double f_lens_mm = 100.0;
    double d_focus_mm = 317.0;
    double beam_x_um = -2.39;
    double beam_y_um = -32.6;
    double beam_z_um = 52.4;
    double phi_x_deg = 30.0;
    double phi_k_deg = 295.0;
    double magnification_nominal = 9.5;
    double aperture_radius_mm = 2.0;  // in the mirror-image plane
    double lambda_photon_um = 0.55;   // sets the angle scale of wavevectors

    Vec3 beam_pos_frame() const { return {beam_y_um, beam_z_um, beam_x_um}; }
    double photon_k0() const { return 2.0 * M_PI / lambda_photon_um; }

    void validate() const {
        if (!(f_mirror_um > 0 && f_lens_mm > 0 && d_focus_mm > 0 && aperture_radius_mm > 0))
            throw std::invalid_argument("OpticsConfig: lengths must be positive");
    }
};

struct MaskSpec {
    double period_um = 100.0;   // g
    double offset_um = 0.0;     // ell
    Vec2 grating_axis{1.0, 0.0};  // unit vector along the modulation direction

    void validate() const {
        if (!(period_um > 0)) throw std::invalid_argument("MaskSpec: period must be positive");
    }
};

struct EffectiveMask {
    Grid values;    // 0/1 per detector pixel
    Grid validity;  // 1 where the ray trace succeeded and passed the aperture
    Basis basis = Basis::kPosition;
};

struct Reflection {
    Vec3 point;
    Vec3 direction;
};

// Binary grating: 0 if (s + ell) mod g < g/2, else 1, with s the coordinate
// along the grating axis.
int mask_value(double x_um, double y_um, const MaskSpec& spec);

// Specular reflection on the ideal paraboloid (focus at origin, axis e3).
// Throws if the ray misses the surface.
Reflection reflect_on_paraboloid(const Vec3& origin, const Vec3& direction, double f_mirror_um);

// Virtual-image construction for a sample-plane point, then ideal thin-lens
// projection. Input is the displacement from the configured beam position,
// in sample-plane coordinates (u along e1, v along e3). Returns mask-plane
// coordinates in um. Throws GeometryError on degenerate configurations.
struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Vec2 map_position_to_mask(const Vec2& sample_um, const OpticsConfig& cfg);

// Fourier-plane construction for a transverse wavevector (u along e1,
// v along e3, um^-1) about the mean collection direction +e2.
Vec2 map_wavevector_to_mask(const Vec2& k_invum, const OpticsConfig& cfg);

// Same mappings but also reporting whether the focus ray through the mirror
// stays inside the aperture (measured in the mirror-image plane).
struct MaskPoint {
    Vec2 mask_um;
    bool in_aperture = true;
};
MaskPoint map_position_checked(const Vec2& sample_um, const OpticsConfig& cfg);
MaskPoint map_wavevector_checked(const Vec2& k_invum, const OpticsConfig& cfg);

// First-order magnification of the position mapping at the beam position:
// largest singular value of the sample-plane Jacobian.
double position_magnification(const OpticsConfig& cfg);

// Rasterise the effective binary mask in detector coordinates. For each
// pixel: physical units via the calibration, rotation by phi_basis,
// negation in the momentum basis (momentum anti-correlation), mirror-lens
// mapping, mask evaluation. Failed or out-of-aperture pixels get value 0
// and validity 0. supersample=3 averages a 3x3 subpixel pattern and
// thresholds at 0.5 (convergence checks only).
EffectiveMask effective_mask(Basis basis, const MaskSpec& spec, const OpticsConfig& cfg,
                             const Calibration& calib, int grid = kDetectorGrid,
                             int supersample = 1);

}  // namespace epg
