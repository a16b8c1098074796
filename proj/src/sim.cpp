#include "epg/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <random>
#include <stdexcept>

#include "epg/grid.hpp"

namespace epg {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec2 rotate(const Vec2& p, double deg) {
    const double r = deg * kPi / 180.0;
    const double c = std::cos(r), s = std::sin(r);
    return {c * p.u - s * p.v, s * p.u + c * p.v};
}

struct Sampler {
    std::mt19937_64 rng;
    std::uniform_real_distribution<double> uni{0.0, 1.0};
    std::normal_distribution<double> gauss{0.0, 1.0};

    explicit Sampler(uint64_t seed) : rng(seed) {}

    double uniform() { return uni(rng); }
    double normal(double sigma) { return gauss(rng) * sigma; }

    // Uniform point on a disc of the given radius, rejection-sampled.
    Vec2 disc(double radius) {
        for (;;) {
            const double u = 2.0 * uniform() - 1.0;
            const double v = 2.0 * uniform() - 1.0;
            if (u * u + v * v <= 1.0) return {u * radius, v * radius};
        }
    }
};

// Samples sample-plane positions from an intensity grid. Cumulative-sum
// inversion rather than std::discrete_distribution so the draw sequence is
// fully pinned down by the seed, not by the library implementation.
class TemplateSampler {
public:
    TemplateSampler(const Grid& g, double scale_um) : grid_(g), scale_(scale_um) {
        cum_.reserve(g.size());
        double run = 0.0;
        for (size_t i = 0; i < g.size(); ++i) {
            const double v = g.data()[i];
            if (v < 0) throw std::invalid_argument("intensity template: negative value");
            run += v;
            cum_.push_back(run);
        }
        if (!(run > 0)) throw std::invalid_argument("intensity template: zero total");
    }

    Vec2 draw(Sampler& rand) const {
        const double target = rand.uniform() * cum_.back();
        const size_t i = std::lower_bound(cum_.begin(), cum_.end(), target) - cum_.begin();
        const int ix = static_cast<int>(i % grid_.nx());
        const int iy = static_cast<int>(i / grid_.nx());
        const double cx = (grid_.nx() - 1) / 2.0, cy = (grid_.ny() - 1) / 2.0;
        return {(ix + rand.uniform() - 0.5 - cx) * scale_, (iy + rand.uniform() - 0.5 - cy) * scale_};
    }

private:
    const Grid& grid_;
    double scale_;
    std::vector<double> cum_;
};

// Detector pixel of a particle coordinate in the sample frame. Inverse of
// the pixel -> physical convention used by effective_mask: rotate by -phi,
// divide by the scale, offset to the grid centre. Returns false off-grid.
bool to_pixel(const Vec2& coord, double phi_deg, double scale, int shift_x, uint16_t* x,
              uint16_t* y) {
    const Vec2 det = rotate(coord, -phi_deg);
    const long px = std::lround(det.u / scale + kCenterPx) + shift_x;
    const long py = std::lround(det.v / scale + kCenterPx);
    if (px < 0 || px >= kDetectorGrid || py < 0 || py >= kDetectorGrid) return false;
    *x = static_cast<uint16_t>(px);
    *y = static_cast<uint16_t>(py);
    return true;
}

// Trace the photon coordinate (position displacement or wavevector, sample
// frame) to the mask plane and decide transmission.
bool photon_detected(const Vec2& coord, Basis basis, const SimConfig& cfg,
                     const OpticsConfig& optics, const MaskSpec& mask, Sampler& rand) {
    MaskPoint mp;
    try {
        mp = basis == Basis::kPosition ? map_position_checked(coord, optics)
                                       : map_wavevector_checked(coord, optics);
    } catch (const GeometryError&) {
        return false;
    }
    if (!mp.in_aperture) return false;
    if (cfg.apply_mask && mask_value(mp.mask_um.u, mp.mask_um.v, mask) == 0) return false;
    return rand.uniform() < cfg.glass_transmissivity;
}

SimOutput run(const SimConfig& cfg, const OpticsConfig& optics, const MaskSpec& mask,
              const Calibration& calib, bool correlated) {
    cfg.validate();
    optics.validate();
    mask.validate();
    calib.validate();
    if (correlated && cfg.basis == Basis::kMixed)
        throw std::invalid_argument("simulate: use simulate_mixed_basis for mixed runs");
    const Basis photon_basis = cfg.basis == Basis::kMixed ? Basis::kPosition : cfg.basis;
    const Basis electron_basis =
        correlated ? photon_basis
                   : (photon_basis == Basis::kPosition ? Basis::kMomentum : Basis::kPosition);

    Sampler rand(cfg.rng_seed);
    std::exponential_distribution<double> gap(cfg.electron_rate_hz * 1e-9);  // per ns
    std::uniform_int_distribution<int> tot_dist(20, 80);

    SimOutput out;
    out.truth.config = cfg;
    out.electrons.reserve(cfg.n_electrons);
    out.photons.reserve(static_cast<size_t>(cfg.n_electrons * cfg.pair_probability) + 16);

    const double beam_radius = cfg.beam_diameter_um / 2.0;
    std::unique_ptr<TemplateSampler> tmpl;
    if (cfg.intensity_template)
        tmpl = std::make_unique<TemplateSampler>(*cfg.intensity_template, cfg.template_scale_um);
    auto draw_position = [&](Sampler& r) { return tmpl ? tmpl->draw(r) : r.disc(beam_radius); };
    double t = 0.0;
    size_t stored = 0;
    for (size_t i = 0; i < cfg.n_electrons; ++i) {
        t += gap(rand.rng);

        // One sample per basis. In a correlated run only the shared basis is
        // drawn; in a mixed run the electron and photon sides are
        // independent draws in conjugate bases.
        const Vec2 pos = draw_position(rand);
        const Vec2 mom{rand.normal(cfg.beam_divergence_invum), rand.normal(cfg.beam_divergence_invum)};
        const Vec2 e_coord = electron_basis == Basis::kPosition ? pos : mom;

        const size_t pkg = stored / kDefaultPackageSize;
        const int shift = static_cast<int>(std::lround(cfg.drift_px_per_package * pkg));
        ElectronEvent ev;
        if (!to_pixel(e_coord, electron_basis == Basis::kPosition ? optics.phi_x_deg : optics.phi_k_deg,
                      calib.scale(electron_basis), shift, &ev.x_px, &ev.y_px))
            continue;
        ev.toa_ns = static_cast<int64_t>(std::llround(t));
        ev.tot = static_cast<uint16_t>(tot_dist(rand.rng));
        out.electrons.push_back(ev);
        ++stored;

        if (rand.uniform() >= cfg.pair_probability) continue;
        ++out.truth.true_pairs;

        Vec2 p_coord;
        if (correlated) {
            p_coord = photon_basis == Basis::kPosition
                          ? Vec2{e_coord.u + rand.normal(cfg.dx_minus_um),
                                 e_coord.v + rand.normal(cfg.dx_minus_um)}
                          : Vec2{-e_coord.u + rand.normal(cfg.dk_plus_invum),
                                 -e_coord.v + rand.normal(cfg.dk_plus_invum)};
        } else {
            // Independent draw from the photon marginal in the mask basis.
            const Vec2 src = photon_basis == Basis::kPosition
                                 ? draw_position(rand)
                                 : Vec2{rand.normal(cfg.beam_divergence_invum),
                                        rand.normal(cfg.beam_divergence_invum)};
            p_coord = photon_basis == Basis::kPosition
                          ? Vec2{src.u + rand.normal(cfg.dx_minus_um),
                                 src.v + rand.normal(cfg.dx_minus_um)}
                          : Vec2{-src.u + rand.normal(cfg.dk_plus_invum),
                                 -src.v + rand.normal(cfg.dk_plus_invum)};
        }
        ++out.truth.traced_pairs;
        if (!photon_detected(p_coord, photon_basis, cfg, optics, mask, rand)) continue;
        ++out.truth.transmitted_pairs;

        const double tp = t + cfg.delay_ns + rand.normal(cfg.jitter_sigma_ns);
        out.photons.push_back({static_cast<int64_t>(std::llround(tp))});
    }
    out.truth.n_electrons = out.electrons.size();

    // Uncorrelated backgrounds over the acquisition span.
    if (cfg.background_photon_rate_hz > 0) {
        std::poisson_distribution<long> n_bg(cfg.background_photon_rate_hz * 1e-9 * t);
        const long n = n_bg(rand.rng);
        for (long i = 0; i < n; ++i)
            out.photons.push_back({static_cast<int64_t>(std::llround(rand.uniform() * t))});
        out.truth.background_photons = static_cast<size_t>(n);
    }
    if (cfg.background_electron_rate_hz > 0) {
        std::poisson_distribution<long> n_bg(cfg.background_electron_rate_hz * 1e-9 * t);
        const long n = n_bg(rand.rng);
        std::uniform_int_distribution<int> px(0, kDetectorGrid - 1);
        for (long i = 0; i < n; ++i) {
            ElectronEvent ev;
            ev.x_px = static_cast<uint16_t>(px(rand.rng));
            ev.y_px = static_cast<uint16_t>(px(rand.rng));
            ev.toa_ns = static_cast<int64_t>(std::llround(rand.uniform() * t));
            ev.tot = static_cast<uint16_t>(tot_dist(rand.rng));
            out.electrons.push_back(ev);
        }
        out.truth.background_electrons = static_cast<size_t>(n);
        out.truth.n_electrons = out.electrons.size();
    }

    std::stable_sort(out.electrons.begin(), out.electrons.end(),
                     [](const ElectronEvent& a, const ElectronEvent& b) { return a.toa_ns < b.toa_ns; });
    std::stable_sort(out.photons.begin(), out.photons.end(),
                     [](const PhotonEvent& a, const PhotonEvent& b) { return a.t_ns < b.t_ns; });
    return out;
}

}  // namespace

void SimConfig::validate() const {
    if (!(pair_probability >= 0 && pair_probability <= 1))
        throw std::invalid_argument("SimConfig: pair_probability must be in [0,1]");
    if (!(dx_minus_um > 0 && dk_plus_invum > 0))
        throw std::invalid_argument("SimConfig: joint widths must be positive");
    if (!(beam_diameter_um > 0 && beam_divergence_invum > 0))
        throw std::invalid_argument("SimConfig: beam profile parameters must be positive");
    if (!(jitter_sigma_ns >= 0)) throw std::invalid_argument("SimConfig: jitter must be >= 0");
    if (!(electron_rate_hz > 0)) throw std::invalid_argument("SimConfig: electron rate must be positive");
    if (!(glass_transmissivity > 0 && glass_transmissivity <= 1))
        throw std::invalid_argument("SimConfig: transmissivity must be in (0,1]");
    if (!(background_photon_rate_hz >= 0 && background_electron_rate_hz >= 0))
        throw std::invalid_argument("SimConfig: background rates must be >= 0");
    if (intensity_template && !(template_scale_um > 0))
        throw std::invalid_argument("SimConfig: template scale must be positive");
}

SimOutput simulate(const SimConfig& cfg, const OpticsConfig& optics, const MaskSpec& mask,
                   const Calibration& calib) {
    return run(cfg, optics, mask, calib, /*correlated=*/true);
}

SimOutput simulate_mixed_basis(const SimConfig& cfg, const OpticsConfig& optics,
                               const MaskSpec& mask, const Calibration& calib) {
    return run(cfg, optics, mask, calib, /*correlated=*/false);
}

void write_ground_truth(const std::string& path, const GroundTruth& truth) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_ground_truth: cannot open " + path);
    const SimConfig& c = truth.config;
    out << "basis: "
        << (c.basis == Basis::kPosition ? "position" : c.basis == Basis::kMomentum ? "momentum" : "mixed")
        << "\n";
    out << "rng_seed: " << c.rng_seed << "\n";
    out << "n_electrons: " << truth.n_electrons << "\n";
    out << "true_pairs: " << truth.true_pairs << "\n";
    out << "traced_pairs: " << truth.traced_pairs << "\n";
    out << "transmitted_pairs: " << truth.transmitted_pairs << "\n";
    out << "background_photons: " << truth.background_photons << "\n";
    out << "background_electrons: " << truth.background_electrons << "\n";
    out << "dx_minus_um: " << c.dx_minus_um << "\n";
    out << "dk_plus_invum: " << c.dk_plus_invum << "\n";
    out << "pair_probability: " << c.pair_probability << "\n";
    out << "delay_ns: " << c.delay_ns << "\n";
    out << "jitter_sigma_ns: " << c.jitter_sigma_ns << "\n";
    if (!out) throw std::runtime_error("write_ground_truth: write failed for " + path);
}

}  // namespace epg
