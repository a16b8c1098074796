#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "epg/coincidence.hpp"

namespace epg {

struct ErrorBudget {
    double stat_x_um = 0.0;
    double stat_k_invum = 0.0;
    double cal_x_um = 0.017;
    double cal_k_invum = 0.007;
};

struct WitnessVerdict {
    double dx_infer_um = 0.0;
    double dk_infer_invum = 0.0;
    double product = 0.0;  // dx^2 * dk^2
    double err_x_um = 0.0;
    double err_k_invum = 0.0;
    double err_stat = 0.0;   // 1-sigma on the product, statistical part
    double err_sys = 0.0;    // calibration part
    double err_total = 0.0;
    double significance = 0.0;  // (1 - product) / err_total
    bool entangled = false;     // strict central-value test
};

// Separability bound on the joint variances: product = dx^2 dk^2, entangled
// when it drops below 1.
struct MgvtResult {
    double product = 0.0;
    bool entangled = false;
};
MgvtResult mgvt(double dx_um, double dk_invum);

// Single-system sanity check: dx^2 dk^2 >= 1/4 must hold for any marginal.
bool heisenberg_floor(double dx_single_um, double dk_single_invum);

// Per-basis widths fitted from one subsample batch.
struct BatchFit {
    double sigma_x_um = 0.0;
    double sigma_kx_invum = 0.0;
};

struct SubsampleSpread {
    double stat_x_um = 0.0;
    double stat_k_invum = 0.0;
    std::vector<BatchFit> batches;
};

// Draws n_batches subsamples (without replacement inside a batch; batches
// may overlap), refits each with fit_fn, and returns the standard deviations
// of the fitted widths across batches. Deterministic for a fixed seed.
SubsampleSpread subsample_errors(const std::vector<CoincidencePair>& pairs_x,
                                 const std::vector<CoincidencePair>& pairs_k,
                                 size_t n_batches, size_t batch_size,
                                 const std::function<BatchFit(const std::vector<CoincidencePair>&,
                                                              const std::vector<CoincidencePair>&)>& fit_fn,
                                 uint64_t seed);

// Quadrature error combination and significance. Relative product error is
// 2 sqrt((err_x/dx)^2 + (err_k/dk)^2) from the squared quantities.
WitnessVerdict combine_and_judge(double dx_um, double dk_invum, const ErrorBudget& budget);

std::string verdict_report(const WitnessVerdict& v);
std::string verdict_summary_line(const WitnessVerdict& v);  // machine-readable one-liner

}  // namespace epg
