#pragma once

#include <functional>
#include <vector>

#include "epg/image.hpp"
#include "epg/optics.hpp"

namespace epg {

struct PSF {
    double sigma_u = 1.0;  // physical units along detector x
    double sigma_v = 1.0;  // along detector y
};

enum class FitMode { kStandard, kExtended };

struct FitParams {
    PSF psf_pos;
    PSF psf_mom;
    double beam_x_um = 0.0;
    double beam_y_um = 0.0;
    double beam_z_um = 50.0;
    double ell_x_um = 0.0;
    double ell_k_um = 0.0;
    // Extended-mode extras; mirror the fixed config values in standard mode.
    double phi_x_deg = 30.0;
    double phi_k_deg = 295.0;
    double d_focus_mm = 317.0;
};

struct FitResult {
    FitParams params;
    double lae_x = 0.0;
    double lae_k = 0.0;
    double r2_x = 0.0;
    double r2_k = 0.0;
    Grid residual_x;
    Grid residual_k;
    size_t n_evaluations = 0;
    bool converged = false;
};

struct FitConfig {
    OpticsConfig optics;
    MaskSpec mask_x{38.5, 0.0, {1.0, 0.0}};
    MaskSpec mask_k{100.0, 0.0, {1.0, 0.0}};
    Calibration calib;
    FitMode mode = FitMode::kStandard;
    double tol = 1e-3;
    int max_iter = 4000;
    // Refit only the four PSF widths around a supplied initial optimum;
    // geometry and grating offsets stay fixed, so the effective masks are
    // rasterised once. Used by the subsample batches, where only the widths
    // move appreciably and a full geometry refit per batch is wasteful.
    bool widths_only = false;
};

// Discrete convolution of the mask with a unit-sum Gaussian kernel; sigma is
// converted to pixels with the basis scale. Sigmas below 0.1 px are rejected
// (the model degenerates to the raw mask).
Grid convolve_psf(const EffectiveMask& mask, const PSF& psf, const Calibration& calib);

// flat * (mask conv G), rescaled so the total over beam-mask pixels equals
// data_total. Throws on a zero model total.
Grid build_model(const FlatField& flat, const EffectiveMask& mask, const PSF& psf,
                 const Calibration& calib, double data_total);

double lae(const Grid& data, const Grid& model, const Grid& beam_mask);
double r_squared(const Grid& data, const Grid& model, const Grid& beam_mask);

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    size_t n_evaluations = 0;
    bool converged = false;
};

// Downhill simplex: reflection 1, expansion 2, contraction 0.5, shrink 0.5.
// Stops when the relative value spread over the simplex drops below tol.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& objective,
                             const std::vector<double>& x0, const std::vector<double>& scales,
                             double tol, int max_iter);

// Joint LAE_x + LAE_k minimisation over PSF widths and nuisance parameters
// (9 free parameters; extended mode adds phi_x, phi_k, d_focus).
FitResult joint_fit(const CoincidenceImage& data_x, const CoincidenceImage& data_k,
                    const FlatField& flat_x, const FlatField& flat_k, const FitConfig& cfg,
                    const FitParams* initial = nullptr);

// First-order |d mask / d k| of the momentum mapping (largest singular
// value), used to express grating periods in detector units.
double momentum_magnification(const OpticsConfig& cfg);

// Width of an axis-aligned detector-space PSF projected onto the mask's
// modulation normal. A 1D grating only constrains this combination of
// sigma_u and sigma_v; it is the scalar width the witness consumes.
double modulation_width(const PSF& psf, Basis basis, const MaskSpec& mask,
                        const OpticsConfig& optics, const Calibration& calib);

}  // namespace epg
