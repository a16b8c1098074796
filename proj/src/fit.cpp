#include "epg/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "epg/kernels.hpp"

namespace epg {

Grid convolve_psf(const EffectiveMask& mask, const PSF& psf, const Calibration& calib) {
    const double scale = calib.scale(mask.basis);
    const double su = psf.sigma_u / scale;
    const double sv = psf.sigma_v / scale;
    if (su < 0.1 || sv < 0.1)
        throw std::invalid_argument("convolve_psf: sigma below 0.1 px, model degenerates to the raw mask");
    return kernels::gaussian_blur_xy(mask.values, su, sv);
}

Grid build_model(const FlatField& flat, const EffectiveMask& mask, const PSF& psf,
                 const Calibration& calib, double data_total) {
    if (!flat.values.same_shape(mask.values))
        throw std::invalid_argument("build_model: flat and mask grid mismatch");
    const Grid conv = convolve_psf(mask, psf, calib);
    Grid model(flat.values.nx(), flat.values.ny());
    double total = 0.0;
    for (int y = 0; y < model.ny(); ++y)
        for (int x = 0; x < model.nx(); ++x) {
            const double v = flat.values.at(x, y) * conv.at(x, y);
            model.at(x, y) = v;
            if (flat.beam_mask.at(x, y) > 0) total += v;
        }
    if (!(total > 0)) throw std::runtime_error("build_model: zero model total");
    const double s = data_total / total;
    for (int y = 0; y < model.ny(); ++y)
        for (int x = 0; x < model.nx(); ++x) model.at(x, y) *= s;
    return model;
}

double lae(const Grid& data, const Grid& model, const Grid& beam_mask) {
    if (!data.same_shape(model) || !data.same_shape(beam_mask))
        throw std::invalid_argument("lae: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < data.size(); ++i)
        if (beam_mask.data()[i] > 0) s += std::abs(data.data()[i] - model.data()[i]);
    return s;
}

double r_squared(const Grid& data, const Grid& model, const Grid& beam_mask) {
    if (!data.same_shape(model) || !data.same_shape(beam_mask))
        throw std::invalid_argument("r_squared: shape mismatch");
    double mean = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < data.size(); ++i)
        if (beam_mask.data()[i] > 0) {
            mean += data.data()[i];
            ++n;
        }
    if (n == 0) throw std::invalid_argument("r_squared: empty mask");
    mean /= static_cast<double>(n);
    double ss_res = 0.0, ss_tot = 0.0;
    for (size_t i = 0; i < data.size(); ++i)
        if (beam_mask.data()[i] > 0) {
            const double d = data.data()[i];
            ss_res += (d - model.data()[i]) * (d - model.data()[i]);
            ss_tot += (d - mean) * (d - mean);
        }
    if (!(ss_tot > 0)) throw std::invalid_argument("r_squared: constant data");
    return 1.0 - ss_res / ss_tot;
}

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& objective,
                             const std::vector<double>& x0, const std::vector<double>& scales,
                             double tol, int max_iter) {
    const size_t n = x0.size();
    if (scales.size() != n) throw std::invalid_argument("nelder_mead: scales size mismatch");

    auto eval = [&](const std::vector<double>& x) {
        const double v = objective(x);
        if (std::isnan(v)) throw std::runtime_error("nelder_mead: non-finite objective");
        return v;
    };

    std::vector<std::vector<double>> simplex(n + 1, x0);
    std::vector<double> values(n + 1);
    for (size_t i = 0; i < n; ++i) simplex[i + 1][i] += scales[i];
    NelderMeadResult res;
    for (size_t i = 0; i <= n; ++i) {
        values[i] = eval(simplex[i]);
        ++res.n_evaluations;
    }

    // The spread tolerance is taken relative to the initial simplex spread,
    // not the objective magnitude: LAE objectives sit on a large baseline
    // that never shrinks, which would stop the search immediately.
    double spread0 = 0.0;
    {
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        spread0 = *hi - *lo;
    }

    std::vector<size_t> order(n + 1);
    for (int iter = 0; iter < max_iter; ++iter) {
        std::iota(order.begin(), order.end(), size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t a, size_t b) { return values[a] < values[b]; });
        const size_t best = order[0], worst = order[n], second_worst = order[n - 1];

        const double spread = std::abs(values[worst] - values[best]);
        if (spread <= tol * (spread0 + 1e-300)) {
            res.converged = true;
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j];
        }
        for (double& c : centroid) c /= static_cast<double>(n);

        auto blend = [&](double coef) {
            std::vector<double> x(n);
            for (size_t j = 0; j < n; ++j)
                x[j] = centroid[j] + coef * (simplex[worst][j] - centroid[j]);
            return x;
        };

        const auto reflected = blend(-1.0);
        const double f_r = eval(reflected);
        ++res.n_evaluations;
        if (f_r < values[best]) {
            const auto expanded = blend(-2.0);
            const double f_e = eval(expanded);
            ++res.n_evaluations;
            if (f_e < f_r) {
                simplex[worst] = expanded;
                values[worst] = f_e;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_r;
            }
        } else if (f_r < values[second_worst]) {
            simplex[worst] = reflected;
            values[worst] = f_r;
        } else {
            const bool outside = f_r < values[worst];
            const auto contracted = blend(outside ? -0.5 : 0.5);
            const double f_c = eval(contracted);
            ++res.n_evaluations;
            if (f_c < std::min(f_r, values[worst])) {
                simplex[worst] = contracted;
                values[worst] = f_c;
            } else {
                // shrink toward the best vertex
                for (size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (size_t j = 0; j < n; ++j)
                        simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
                    values[i] = eval(simplex[i]);
                    ++res.n_evaluations;
                }
            }
        }
    }

    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return values[a] < values[b]; });
    res.x = simplex[order[0]];
    res.value = values[order[0]];
    return res;
}

double momentum_magnification(const OpticsConfig& cfg) {
    const double h = 1e-4;
    Vec2 du_p = map_wavevector_to_mask({h, 0}, cfg), du_m = map_wavevector_to_mask({-h, 0}, cfg);
    Vec2 dv_p = map_wavevector_to_mask({0, h}, cfg), dv_m = map_wavevector_to_mask({0, -h}, cfg);
    const double j11 = (du_p.u - du_m.u) / (2 * h), j21 = (du_p.v - du_m.v) / (2 * h);
    const double j12 = (dv_p.u - dv_m.u) / (2 * h), j22 = (dv_p.v - dv_m.v) / (2 * h);
    const double a = j11 * j11 + j21 * j21, b = j12 * j12 + j22 * j22;
    const double c = j11 * j12 + j21 * j22;
    const double tr = a + b, det = a * b - c * c;
    return std::sqrt(0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4.0 * det))));
}

double modulation_width(const PSF& psf, Basis basis, const MaskSpec& mask,
                        const OpticsConfig& optics, const Calibration& calib) {
    // Gradient of the mask-plane grating coordinate with respect to the
    // physical detector coordinates (same pixel -> physical convention as
    // effective_mask: rotate by phi, negate in the momentum basis).
    const double phi = (basis == Basis::kPosition ? optics.phi_x_deg : optics.phi_k_deg) * M_PI / 180.0;
    const double sign = basis == Basis::kMomentum ? -1.0 : 1.0;
    const double c = std::cos(phi), s = std::sin(phi);
    const double h = 2.0 * calib.scale(basis);  // ~2 px step
    auto grating_coord = [&](double du, double dv) {
        const Vec2 q{sign * (c * du - s * dv), sign * (s * du + c * dv)};
        const Vec2 m = basis == Basis::kPosition ? map_position_to_mask(q, optics)
                                                 : map_wavevector_to_mask(q, optics);
        return m.u * mask.grating_axis.u + m.v * mask.grating_axis.v;
    };
    const double gu = (grating_coord(h, 0) - grating_coord(-h, 0)) / (2 * h);
    const double gv = (grating_coord(0, h) - grating_coord(0, -h)) / (2 * h);
    const double norm = std::hypot(gu, gv);
    if (!(norm > 0)) throw GeometryError("modulation_width: degenerate grating gradient");
    const double nu = gu / norm, nv = gv / norm;
    return std::sqrt(psf.sigma_u * psf.sigma_u * nu * nu + psf.sigma_v * psf.sigma_v * nv * nv);
}

namespace {

struct GeometryKey {
    double bx, by, bz, ell, phi, d_focus;
    bool operator==(const GeometryKey&) const = default;
};

// Memoises the most recent effective mask per basis: PSF-only simplex steps
// reuse the cached rasterisation bit-identically.
class MaskCache {
public:
    const EffectiveMask& get(Basis basis, const GeometryKey& key, const MaskSpec& spec,
                             const OpticsConfig& optics, const Calibration& calib, int grid) {
        Entry& e = basis == Basis::kPosition ? pos_ : mom_;
        if (!e.valid || !(e.key == key)) {
            e.mask = effective_mask(basis, spec, optics, calib, grid);
            e.key = key;
            e.valid = true;
        }
        return e.mask;
    }

private:
    struct Entry {
        GeometryKey key{};
        EffectiveMask mask;
        bool valid = false;
    };
    Entry pos_, mom_;
};

double masked_total(const Grid& data, const Grid& mask) {
    double s = 0.0;
    for (size_t i = 0; i < data.size(); ++i)
        if (mask.data()[i] > 0) s += data.data()[i];
    return s;
}

}  // namespace

FitResult joint_fit(const CoincidenceImage& data_x, const CoincidenceImage& data_k,
                    const FlatField& flat_x, const FlatField& flat_k, const FitConfig& cfg,
                    const FitParams* initial) {
    if (data_x.basis != Basis::kPosition || data_k.basis != Basis::kMomentum)
        throw std::invalid_argument("joint_fit: basis mismatch");
    if (!data_x.counts.same_shape(flat_x.values) || !data_k.counts.same_shape(flat_k.values))
        throw std::invalid_argument("joint_fit: grid shape mismatch");
    cfg.optics.validate();
    cfg.calib.validate();
    const int grid = data_x.counts.nx();
    const bool extended = cfg.mode == FitMode::kExtended;

    const double total_x = masked_total(data_x.counts, flat_x.beam_mask);
    const double total_k = masked_total(data_k.counts, flat_k.beam_mask);
    if (!(total_x > 0) || !(total_k > 0))
        throw std::invalid_argument("joint_fit: no counts inside the beam mask");

    const double min_sigma_x = 0.1 * cfg.calib.pos_scale_um;
    const double min_sigma_k = 0.1 * cfg.calib.mom_scale_invum;

    MaskCache cache;
    auto objective = [&](const std::vector<double>& p) -> double {
        const double sx = p[0], sy = p[1], skx = p[2], sky = p[3];
        // Soft barrier keeps the simplex away from degenerate widths while
        // still pointing back toward the feasible region.
        double barrier = 0.0;
        for (double s : {sx - min_sigma_x, sy - min_sigma_x, skx - min_sigma_k, sky - min_sigma_k})
            if (s <= 0) barrier += 1.0 - s;
        if (barrier > 0) return 1e15 * barrier;

        OpticsConfig optics = cfg.optics;
        optics.beam_x_um = p[4];
        optics.beam_y_um = p[5];
        optics.beam_z_um = p[6];
        if (extended) {
            optics.phi_x_deg = p[9];
            optics.phi_k_deg = p[10];
            optics.d_focus_mm = p[11];
            if (!(optics.d_focus_mm > 0)) return 1e15 * (1.0 - optics.d_focus_mm);
        }
        MaskSpec mx = cfg.mask_x;
        mx.offset_um = p[7];
        MaskSpec mk = cfg.mask_k;
        mk.offset_um = p[8];
        try {
            const GeometryKey key_x{p[4], p[5], p[6], p[7], optics.phi_x_deg, optics.d_focus_mm};
            const GeometryKey key_k{p[4], p[5], p[6], p[8], optics.phi_k_deg, optics.d_focus_mm};
            const EffectiveMask& mask_x =
                cache.get(Basis::kPosition, key_x, mx, optics, cfg.calib, grid);
            const EffectiveMask& mask_k =
                cache.get(Basis::kMomentum, key_k, mk, optics, cfg.calib, grid);
            const Grid model_x = build_model(flat_x, mask_x, {sx, sy}, cfg.calib, total_x);
            const Grid model_k = build_model(flat_k, mask_k, {skx, sky}, cfg.calib, total_k);
            return lae(data_x.counts, model_x, flat_x.beam_mask) +
                   lae(data_k.counts, model_k, flat_k.beam_mask);
        } catch (const std::exception&) {
            return 1e20;  // degenerate geometry; steer away
        }
    };

    // Initial simplex: sigmas at one grating half-period expressed in
    // detector-side physical units via the first-order magnifications, then
    // refined by a coarse per-basis (offset, sigma) grid scan. The LAE
    // surface is a narrow valley coupling the grating phase and the width;
    // started at the wrong phase the simplex settles for washing the
    // modulation out instead of sharpening it.
    FitParams p0;
    if (initial) {
        p0 = *initial;
    } else {
        const double half_x = 0.5 * cfg.mask_x.period_um / position_magnification(cfg.optics);
        const double half_k = 0.5 * cfg.mask_k.period_um / momentum_magnification(cfg.optics);
        p0.psf_pos = {half_x, half_x};
        p0.psf_mom = {half_k, half_k};
        p0.beam_x_um = 0.0;
        p0.beam_y_um = 0.0;
        p0.beam_z_um = 50.0;
        p0.ell_x_um = 0.0;
        p0.ell_k_um = 0.0;
        p0.phi_x_deg = cfg.optics.phi_x_deg;
        p0.phi_k_deg = cfg.optics.phi_k_deg;
        p0.d_focus_mm = cfg.optics.d_focus_mm;

        OpticsConfig scan_optics = cfg.optics;
        scan_optics.beam_x_um = p0.beam_x_um;
        scan_optics.beam_y_um = p0.beam_y_um;
        scan_optics.beam_z_um = p0.beam_z_um;
        auto prescan = [&](Basis basis, const MaskSpec& spec, const FlatField& flat,
                           const Grid& data, double data_total, double half, double min_sigma,
                           double* ell_out, double* sigma_out) {
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < 8; ++i) {
                MaskSpec m = spec;
                m.offset_um = spec.period_um * i / 8.0;
                EffectiveMask em;
                try {
                    em = effective_mask(basis, m, scan_optics, cfg.calib, grid);
                } catch (const std::exception&) {
                    continue;
                }
                for (double frac : {0.25, 0.5, 0.75, 1.0, 1.5}) {
                    const double s = std::max(frac * half, 1.05 * min_sigma);
                    try {
                        const Grid model = build_model(flat, em, {s, s}, cfg.calib, data_total);
                        const double v = lae(data, model, flat.beam_mask);
                        if (v < best) {
                            best = v;
                            *ell_out = m.offset_um;
                            *sigma_out = s;
                        }
                    } catch (const std::exception&) {
                    }
                }
            }
        };
        double s_x = half_x, s_k = half_k;
        prescan(Basis::kPosition, cfg.mask_x, flat_x, data_x.counts, total_x, half_x, min_sigma_x,
                &p0.ell_x_um, &s_x);
        prescan(Basis::kMomentum, cfg.mask_k, flat_k, data_k.counts, total_k, half_k, min_sigma_k,
                &p0.ell_k_um, &s_k);
        p0.psf_pos = {s_x, s_x};
        p0.psf_mom = {s_k, s_k};
    }

    std::vector<double> x0 = {p0.psf_pos.sigma_u, p0.psf_pos.sigma_v, p0.psf_mom.sigma_u,
                              p0.psf_mom.sigma_v, p0.beam_x_um,       p0.beam_y_um,
                              p0.beam_z_um,       p0.ell_x_um,        p0.ell_k_um};
    std::vector<double> scales = {0.1 * std::abs(x0[0]),       0.1 * std::abs(x0[1]),
                                  0.1 * std::abs(x0[2]),       0.1 * std::abs(x0[3]),
                                  5.0,                         5.0,
                                  5.0,                         0.1 * cfg.mask_x.period_um,
                                  0.1 * cfg.mask_k.period_um};
    if (extended) {
        x0.insert(x0.end(), {p0.phi_x_deg, p0.phi_k_deg, p0.d_focus_mm});
        scales.insert(scales.end(), {1.0, 1.0, 3.0});
    }

    std::function<double(const std::vector<double>&)> obj_used = objective;
    std::vector<double> x0_used = x0, scales_used = scales;
    if (cfg.widths_only) {
        if (!initial) throw std::invalid_argument("joint_fit: widths_only needs an initial fit");
        x0_used = {x0[0], x0[1], x0[2], x0[3]};
        scales_used = {scales[0], scales[1], scales[2], scales[3]};
        obj_used = [objective, x0](const std::vector<double>& q) {
            std::vector<double> full = x0;
            for (size_t i = 0; i < 4; ++i) full[i] = q[i];
            return objective(full);
        };
    }

    // A single Nelder-Mead run on this many parameters routinely stalls
    // with a collapsed simplex; restart from the optimum with a reduced
    // simplex until a round stops paying.
    const double f0 = obj_used(x0_used);
    NelderMeadResult nm = nelder_mead(obj_used, x0_used, scales_used, cfg.tol, cfg.max_iter);
    ++nm.n_evaluations;
    for (int round = 1; round < 4; ++round) {
        const double before = nm.value;
        std::vector<double> shrunk = scales_used;
        for (double& s : shrunk) s *= 0.3;
        NelderMeadResult next = nelder_mead(obj_used, nm.x, shrunk, cfg.tol, cfg.max_iter);
        next.n_evaluations += nm.n_evaluations;
        next.converged = next.converged && nm.converged;
        if (next.value < nm.value) nm = next;
        else nm.n_evaluations = next.n_evaluations;
        const double total_gain = f0 - nm.value;
        if (before - nm.value <= 1e-3 * std::max(total_gain, 1e-12)) break;
    }

    FitResult res;
    res.n_evaluations = nm.n_evaluations;
    res.converged = nm.converged;
    std::vector<double> p_full = x0;
    if (cfg.widths_only)
        for (size_t i = 0; i < 4; ++i) p_full[i] = nm.x[i];
    else
        p_full = nm.x;
    const auto& p = p_full;
    res.params.psf_pos = {p[0], p[1]};
    res.params.psf_mom = {p[2], p[3]};
    res.params.beam_x_um = p[4];
    res.params.beam_y_um = p[5];
    res.params.beam_z_um = p[6];
    res.params.ell_x_um = std::fmod(std::fmod(p[7], cfg.mask_x.period_um) + cfg.mask_x.period_um,
                                    cfg.mask_x.period_um);
    res.params.ell_k_um = std::fmod(std::fmod(p[8], cfg.mask_k.period_um) + cfg.mask_k.period_um,
                                    cfg.mask_k.period_um);
    res.params.phi_x_deg = extended ? p[9] : cfg.optics.phi_x_deg;
    res.params.phi_k_deg = extended ? p[10] : cfg.optics.phi_k_deg;
    res.params.d_focus_mm = extended ? p[11] : cfg.optics.d_focus_mm;

    // Rebuild the best model for residuals and goodness of fit.
    OpticsConfig optics = cfg.optics;
    optics.beam_x_um = res.params.beam_x_um;
    optics.beam_y_um = res.params.beam_y_um;
    optics.beam_z_um = res.params.beam_z_um;
    optics.phi_x_deg = res.params.phi_x_deg;
    optics.phi_k_deg = res.params.phi_k_deg;
    optics.d_focus_mm = res.params.d_focus_mm;
    MaskSpec mx = cfg.mask_x;
    mx.offset_um = res.params.ell_x_um;
    MaskSpec mk = cfg.mask_k;
    mk.offset_um = res.params.ell_k_um;
    const EffectiveMask mask_x = effective_mask(Basis::kPosition, mx, optics, cfg.calib, grid);
    const EffectiveMask mask_k = effective_mask(Basis::kMomentum, mk, optics, cfg.calib, grid);
    const Grid model_x = build_model(flat_x, mask_x, res.params.psf_pos, cfg.calib, total_x);
    const Grid model_k = build_model(flat_k, mask_k, res.params.psf_mom, cfg.calib, total_k);
    res.lae_x = lae(data_x.counts, model_x, flat_x.beam_mask);
    res.lae_k = lae(data_k.counts, model_k, flat_k.beam_mask);
    res.r2_x = r_squared(data_x.counts, model_x, flat_x.beam_mask);
    res.r2_k = r_squared(data_k.counts, model_k, flat_k.beam_mask);
    res.residual_x = Grid(grid, grid);
    res.residual_k = Grid(grid, grid);
    for (int y = 0; y < grid; ++y)
        for (int x = 0; x < grid; ++x) {
            res.residual_x.at(x, y) = data_x.counts.at(x, y) - model_x.at(x, y);
            res.residual_k.at(x, y) = data_k.counts.at(x, y) - model_k.at(x, y);
        }
    return res;
}

}  // namespace epg
