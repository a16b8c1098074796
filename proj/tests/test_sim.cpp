#include <doctest.h>

#include <cmath>
#include <random>

#include "epg/coincidence.hpp"
#include "epg/image.hpp"
#include "epg/sim.hpp"
#include "helpers.hpp"

using namespace epg;
using epg::test::TempFile;

namespace {

MaskSpec open_mask() {
    // Period far larger than the mask plane with the open half covering it:
    // every traced photon is transmitted.
    return {1e9, 0.6e9, {1.0, 0.0}};
}

SimConfig base_cfg(Basis basis, size_t n, uint64_t seed) {
    SimConfig cfg;
    cfg.basis = basis;
    cfg.n_electrons = n;
    cfg.pair_probability = 0.5;
    cfg.rng_seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("simulate: no pairs and no background -> empty photon stream") {
    SimConfig cfg = base_cfg(Basis::kPosition, 2000, 1);
    cfg.pair_probability = 0.0;
    const SimOutput out = simulate(cfg, {}, {38.5, 0.0, {1.0, 0.0}}, {});
    CHECK(out.photons.empty());
    CHECK(out.electrons.size() == 2000);
    CHECK(out.truth.true_pairs == 0);
}

TEST_CASE("simulate: zero electrons -> empty outputs") {
    SimConfig cfg = base_cfg(Basis::kPosition, 0, 1);
    const SimOutput out = simulate(cfg, {}, open_mask(), {});
    CHECK(out.electrons.empty());
    CHECK(out.photons.empty());
}

TEST_CASE("simulate: all-open mask, transmissivity 1, jitter 0 -> match recovers every pair") {
    for (uint64_t seed : test::kPropertySeeds) {
        SimConfig cfg = base_cfg(Basis::kPosition, 20000, seed);
        cfg.glass_transmissivity = 1.0;
        cfg.jitter_sigma_ns = 0.0;
        const SimOutput out = simulate(cfg, {}, open_mask(), {});
        CHECK(out.truth.transmitted_pairs == out.truth.traced_pairs);
        const auto pairs = match(out.electrons, out.photons, {});
        CHECK(pairs.size() == out.truth.transmitted_pairs);
        for (const auto& p : pairs) CHECK(p.dt_ns == -40);
    }
}

namespace {

double probit(double p) {
    // Invert the standard normal CDF by bisection; ample for test precision.
    double lo = -6.0, hi = 6.0;
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double c = 0.5 * (1.0 + std::erf(mid / std::sqrt(2.0)));
        (c < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Recovers the joint width (dx_minus or dk_plus) from the transmission
// profile across a half-plane mask edge: the photon smear turns the sharp
// edge into an erf profile of width (joint width) * |grad s| in mask-plane
// coordinates; a probit regression of the masked/open count ratio per bin
// of the electron's mapped coordinate returns that width.
double edge_recovered_width(Basis basis, double joint_width, uint64_t seed) {
    const OpticsConfig optics;
    const Calibration calib;
    const double phi =
        (basis == Basis::kPosition ? optics.phi_x_deg : optics.phi_k_deg) * M_PI / 180.0;
    const double scale = calib.scale(basis);
    auto map_s = [&](double u, double v) {
        return basis == Basis::kPosition ? map_position_to_mask({u, v}, optics).u
                                         : map_wavevector_to_mask({-u, -v}, optics).u;
    };
    const double s_centre = map_s(0.0, 0.0);
    const double h = basis == Basis::kPosition ? 0.5 : 0.05;
    const double dsdu = (map_s(h, 0.0) - s_centre) / h;
    const double dsdv = (map_s(0.0, h) - s_centre) / h;
    const double grad = std::hypot(dsdu, dsdv);
    const double w_true = joint_width * grad;  // erf width in mask-plane um

    const double g = 1e9;
    const MaskSpec edge{g, g / 2.0 - s_centre, {1.0, 0.0}};

    SimConfig cfg;
    cfg.basis = basis;
    cfg.n_electrons = 400000;
    cfg.pair_probability = 0.5;
    cfg.glass_transmissivity = 1.0;
    cfg.rng_seed = seed;
    const SimOutput masked = simulate(cfg, optics, edge, calib);
    SimConfig open_cfg = cfg;
    open_cfg.apply_mask = false;
    open_cfg.rng_seed = seed + 1000;
    const SimOutput open = simulate(open_cfg, optics, edge, calib);

    auto histogram = [&](const SimOutput& out, std::vector<double>& bins) {
        const auto pairs = match(out.electrons, out.photons, {});
        for (const auto& p : pairs) {
            const double pu = (p.electron.x_px - 127.0) * scale;
            const double pv = (p.electron.y_px - 127.0) * scale;
            const double ru = std::cos(phi) * pu - std::sin(phi) * pv;
            const double rv = std::sin(phi) * pu + std::cos(phi) * pv;
            const double t = map_s(ru, rv) - s_centre;
            const int bin = static_cast<int>(std::floor((t + 2.0 * w_true) / (w_true / 3.0)));
            if (bin >= 0 && bin < static_cast<int>(bins.size())) bins[bin] += 1.0;
        }
    };
    std::vector<double> n_mask(12, 0.0), n_open(12, 0.0);
    histogram(masked, n_mask);
    histogram(open, n_open);

    // Weighted probit regression: z = (t - t0) / w.
    double sw = 0, st = 0, sz = 0, stt = 0, stz = 0;
    for (size_t i = 0; i < n_mask.size(); ++i) {
        if (n_open[i] < 500.0) continue;
        const double p = n_mask[i] / n_open[i];
        if (p < 0.03 || p > 0.97) continue;
        const double t = (static_cast<double>(i) + 0.5) * (w_true / 3.0) - 2.0 * w_true;
        const double z = probit(p);
        const double wgt = n_open[i];
        sw += wgt;
        st += wgt * t;
        sz += wgt * z;
        stt += wgt * t * t;
        stz += wgt * t * z;
    }
    const double slope = (stz - st * sz / sw) / (stt - st * st / sw);
    return std::abs(1.0 / slope) / grad;  // back to physical joint width
}

}  // namespace

TEST_CASE("simulate: joint widths recovered from a mask-edge transmission profile") {
    // Position basis: empirical Delta x_minus within a few percent of target.
    const double dx = edge_recovered_width(Basis::kPosition, 1.45, 11);
    CHECK(dx == doctest::Approx(1.45).epsilon(0.07));
    // Momentum basis analog for Delta k_plus.
    const double dk = edge_recovered_width(Basis::kMomentum, 0.49, 12);
    CHECK(dk == doctest::Approx(0.49).epsilon(0.07));
}

TEST_CASE("simulate: photon count bounded by pairs + background expectation (3 sigma)") {
    for (uint64_t seed : test::kPropertySeeds) {
        SimConfig cfg = base_cfg(Basis::kMomentum, 50000, seed);
        cfg.background_photon_rate_hz = 2000.0;
        const SimOutput out = simulate(cfg, {}, open_mask(), {});
        const double span_s =
            static_cast<double>(cfg.n_electrons) / cfg.electron_rate_hz;
        const double expect_bg = cfg.background_photon_rate_hz * span_s;
        const double bound = static_cast<double>(cfg.n_electrons) * cfg.pair_probability +
                             expect_bg +
                             3.0 * std::sqrt(static_cast<double>(cfg.n_electrons) *
                                                 cfg.pair_probability +
                                             expect_bg);
        CHECK(static_cast<double>(out.photons.size()) <= bound);
        CHECK(out.truth.background_photons > 0);
    }
}

TEST_CASE("simulate: identical seed gives bit-identical output files") {
    SimConfig cfg = base_cfg(Basis::kPosition, 30000, 77);
    cfg.background_photon_rate_hz = 500.0;
    cfg.background_electron_rate_hz = 500.0;
    const OpticsConfig optics;
    const MaskSpec mask{38.5, 34.6, {1.0, 0.0}};
    const Calibration calib;
    const SimOutput a = simulate(cfg, optics, mask, calib);
    const SimOutput b = simulate(cfg, optics, mask, calib);
    TempFile fa(".epev"), fb(".epev"), pa(".phev"), pb(".phev");
    write_electron_file(fa.path(), a.electrons);
    write_electron_file(fb.path(), b.electrons);
    write_photon_file(pa.path(), a.photons);
    write_photon_file(pb.path(), b.photons);
    CHECK(test::slurp(fa.path()) == test::slurp(fb.path()));
    CHECK(test::slurp(pa.path()) == test::slurp(pb.path()));

    SimConfig cfg2 = cfg;
    cfg2.rng_seed = 78;
    const SimOutput c = simulate(cfg2, optics, mask, calib);
    CHECK(c.photons.size() != a.photons.size());  // different seed, different stream
}

TEST_CASE("simulate: transmitted fraction is the transmissivity open-mask, half over a grating") {
    for (uint64_t seed : test::kPropertySeeds) {
        SimConfig cfg = base_cfg(Basis::kPosition, 60000, seed);
        cfg.glass_transmissivity = 0.9;
        const SimOutput open = simulate(cfg, {}, open_mask(), {});
        const double n_open = static_cast<double>(open.truth.traced_pairs);
        const double f_open = static_cast<double>(open.truth.transmitted_pairs) / n_open;
        CHECK(std::abs(f_open - 0.9) <= 3.0 * std::sqrt(0.9 * 0.1 / n_open));

        const SimOutput grating = simulate(cfg, {}, {38.5, 34.6, {1.0, 0.0}}, {});
        const double n_g = static_cast<double>(grating.truth.traced_pairs);
        const double f_g = static_cast<double>(grating.truth.transmitted_pairs) / n_g;
        CHECK(f_g == doctest::Approx(0.45).epsilon(0.15));
    }
}

TEST_CASE("simulate: g2 peak bin contains the -40 ns delay with 20 ns jitter") {
    SimConfig cfg = base_cfg(Basis::kPosition, 40000, 5);
    const SimOutput out = simulate(cfg, {}, open_mask(), {});
    const auto h = g2(out.electrons, out.photons, 10.0, 500.0);
    size_t peak = 0;
    for (size_t i = 0; i < h.counts.size(); ++i)
        if (h.counts[i] > h.counts[peak]) peak = i;
    CHECK(h.bin_edges_ns[peak] <= -40.0);
    CHECK(h.bin_edges_ns[peak + 1] > -40.0);
}

TEST_CASE("mixed basis: no mask modulation; matched basis shows strong contrast") {
    // Contrast estimator: counts-weighted mean of the effective mask value
    // minus the flat-field-weighted mean, in units of the shot-noise sigma.
    const OpticsConfig optics;
    const Calibration calib;
    const MaskSpec mask{100.0, 0.0, {1.0, 0.0}};
    const EffectiveMask eff = effective_mask(Basis::kMomentum, mask, optics, calib);

    auto contrast_sigma = [&](const SimOutput& out) {
        const auto pairs = match(out.electrons, out.photons, {});
        double n = 0.0, sum = 0.0;
        for (const auto& p : pairs) {
            if (eff.validity.at(p.electron.x_px, p.electron.y_px) == 0.0) continue;
            n += 1.0;
            sum += eff.values.at(p.electron.x_px, p.electron.y_px);
        }
        REQUIRE(n > 1000.0);
        const double mean = sum / n;  // fraction of counts on open stripes
        // Under no modulation the expected fraction is the beam-weighted
        // open fraction, ~0.5; shot-noise sigma of the mean follows the
        // binomial law.
        const double p0 = 0.5;
        return (mean - p0) / std::sqrt(p0 * (1.0 - p0) / n);
    };

    SimConfig cfg = base_cfg(Basis::kMomentum, 300000, 21);
    cfg.pair_probability = 0.3;
    const SimOutput matched = simulate(cfg, optics, mask, calib);
    const SimOutput mixed = simulate_mixed_basis(cfg, optics, mask, calib);
    const double c_matched = contrast_sigma(matched);
    const double c_mixed = contrast_sigma(mixed);
    CHECK(std::abs(c_mixed) < 3.0);
    CHECK(c_matched > 10.0);
    CHECK(c_matched > 10.0 * std::abs(c_mixed));
}

TEST_CASE("simulate rejects inconsistent configs") {
    SimConfig cfg = base_cfg(Basis::kPosition, 100, 1);
    cfg.pair_probability = 1.5;
    CHECK_THROWS(simulate(cfg, {}, open_mask(), {}));
    cfg = base_cfg(Basis::kMixed, 100, 1);
    CHECK_THROWS(simulate(cfg, {}, open_mask(), {}));  // mixed needs simulate_mixed_basis
}

TEST_CASE("ground-truth sidecar round-trips as key:value text") {
    SimConfig cfg = base_cfg(Basis::kPosition, 5000, 3);
    const SimOutput out = simulate(cfg, {}, open_mask(), {});
    TempFile f(".txt");
    write_ground_truth(f.path(), out.truth);
    const auto bytes = test::slurp(f.path());
    const std::string text(bytes.begin(), bytes.end());
    CHECK(text.find("true_pairs:") != std::string::npos);
    CHECK(text.find("transmitted_pairs:") != std::string::npos);
}
