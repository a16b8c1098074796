#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "epg/events.hpp"
#include "epg/optics.hpp"

namespace epg {

// Classical per-basis sampler of correlated electron-photon streams.
//
// Note on scope: a classical sampler cannot realise sub-Heisenberg
// correlations in both bases for the same particle pair, and does not need
// to. Each dataset measures one basis on a distinct ensemble, so per-basis
// sampling with the target joint widths reproduces the statistics the
// analysis chain sees. This is a ground-truth generator for the pipeline,
// not a quantum-state model.
struct SimConfig {
    Basis basis = Basis::kPosition;
    size_t n_electrons = 1000000;
    double pair_probability = 0.1;
    double dx_minus_um = 1.45;        // target joint position width
    double dk_plus_invum = 0.49;      // target joint momentum width
    double beam_diameter_um = 23.0;   // uniform disc in position space
    double beam_divergence_invum = 1.25;  // Gaussian marginal width in k
    double delay_ns = -40.0;
    double jitter_sigma_ns = 20.0;
    double background_photon_rate_hz = 0.0;
    double background_electron_rate_hz = 0.0;
    double electron_rate_hz = 50000.0;
    double glass_transmissivity = 0.9;
    double drift_px_per_package = 0.0;
    bool apply_mask = true;  // false = mask-free flat-field run
    uint64_t rng_seed = 1;

    // Optional structured position profile replacing the uniform disc:
    // intensity sampled from this grid, centred on the grid midpoint, with
    // template_scale_um sample-plane micrometres per template pixel. Lets a
    // fixture reproduce soft-edged or structured flat fields.
    std::shared_ptr<const Grid> intensity_template;
    double template_scale_um = 0.25;

    void validate() const;
};

struct GroundTruth {
    SimConfig config;
    size_t n_electrons = 0;
    size_t true_pairs = 0;         // pair-producing electrons
    size_t traced_pairs = 0;       // photon reached the mask plane
    size_t transmitted_pairs = 0;  // photon detected
    size_t background_photons = 0;
    size_t background_electrons = 0;
};

struct SimOutput {
    std::vector<ElectronEvent> electrons;
    std::vector<PhotonEvent> photons;
    GroundTruth truth;
};

// Correlated streams: electrons sampled from the beam profile; each
// pair-producing photon gets the electron coordinate plus Gaussian(0, dx)
// per axis (position) or the negated wavevector plus Gaussian(0, dk)
// (momentum), is traced through the mirror-lens chain and transmitted with
// probability mask * glass_transmissivity. Deterministic per seed.
SimOutput simulate(const SimConfig& cfg, const OpticsConfig& optics, const MaskSpec& mask,
                   const Calibration& calib);

// Conjugate-basis emulation: the photon coordinate is drawn independently of
// the electron's recorded coordinate, so the coincidence image carries no
// mask modulation. The electron is recorded in the basis conjugate to the
// photon/mask basis given in cfg.basis.
SimOutput simulate_mixed_basis(const SimConfig& cfg, const OpticsConfig& optics,
                               const MaskSpec& mask, const Calibration& calib);

void write_ground_truth(const std::string& path, const GroundTruth& truth);

}  // namespace epg
