// epg: command-line driver wiring the analysis modules into reproducible
// runs. Subcommands: simulate | match | flatfield | fit | witness |
// calibrate | g2. Exit codes: 0 success, 2 config error, 3 data error,
// 4 non-convergence.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "epg/config.hpp"
#include "epg/spotcal.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNoConvergence = 4;

struct NonConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonOpts {
    std::string config_path;
    uint64_t seed = 0;  // 0 = use config / default
    int jobs = 0;       // 0 = leave runtime default
};

void add_common(CLI::App* cmd, CommonOpts* opts) {
    cmd->add_option("-c,--config", opts->config_path, "config file (key = value, see footer)");
    cmd->add_option("--seed", opts->seed, "RNG seed override (0 = use config)");
    cmd->add_option("-j,--jobs", opts->jobs, "worker thread cap (0 = runtime default)");
    cmd->footer("Config keys (defaults shown):\n" + epg::run_config_key_help());
}

epg::RunConfig load_config(const CommonOpts& opts) {
    epg::RunConfig rc = opts.config_path.empty()
                            ? epg::load_run_config(epg::Config::from_string(""))
                            : epg::load_run_config_file(opts.config_path);
#ifdef _OPENMP
    if (opts.jobs > 0) omp_set_num_threads(opts.jobs);
#endif
    return rc;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<epg::ElectronEvent> drift_corrected(const std::vector<epg::ElectronEvent>& electrons,
                                                epg::Basis basis, std::string* report) {
    std::vector<epg::ElectronEvent> out;
    out.reserve(electrons.size());
    size_t dropped = 0;
    std::ostringstream shifts;
    for (const epg::EventPackage& pkg : epg::split_packages(electrons)) {
        const epg::DriftResult dr = epg::drift_correct(pkg, basis);
        out.insert(out.end(), dr.package.events.begin(), dr.package.events.end());
        dropped += dr.dropped;
        shifts << (pkg.index ? " " : "") << dr.shift_x << "," << dr.shift_y;
    }
    if (report) {
        *report += "drift_shifts_px: " + shifts.str() + "\n";
        *report += "drift_dropped: " + std::to_string(dropped) + "\n";
    }
    return out;
}

int cmd_simulate(const CommonOpts& opts, const std::string& out_prefix) {
    epg::RunConfig rc = load_config(opts);
    if (opts.seed != 0) rc.sim.rng_seed = opts.seed;
    const bool mixed = rc.sim.basis == epg::Basis::kMixed;
    const epg::Basis mask_basis = mixed ? epg::Basis::kPosition : rc.sim.basis;
    const epg::MaskSpec& mask = mask_basis == epg::Basis::kPosition ? rc.mask_x : rc.mask_k;
    const epg::SimOutput out = mixed ? epg::simulate_mixed_basis(rc.sim, rc.optics, mask, rc.calib)
                                     : epg::simulate(rc.sim, rc.optics, mask, rc.calib);
    epg::write_electron_file(out_prefix + "_electrons.epev", out.electrons);
    epg::write_photon_file(out_prefix + "_photons.phev", out.photons);
    epg::write_ground_truth(out_prefix + "_truth.txt", out.truth);
    std::cout << "electrons: " << out.electrons.size() << "\nphotons: " << out.photons.size()
              << "\ntransmitted_pairs: " << out.truth.transmitted_pairs << "\n";
    return 0;
}

int cmd_match(const CommonOpts& opts, const std::string& electrons_path,
              const std::string& photons_path, const std::string& basis_name,
              const std::string& out_prefix) {
    epg::RunConfig rc = load_config(opts);
    const epg::Basis basis = epg::parse_basis(basis_name);
    if (basis == epg::Basis::kMixed) throw epg::ConfigError("match: basis must be position or momentum");
    rc.match.basis = basis;

    const std::vector<epg::ElectronEvent> electrons = epg::read_electron_file(electrons_path);
    const std::vector<epg::PhotonEvent> photons = epg::read_photon_file(photons_path);
    std::string report;
    report += "n_electrons: " + std::to_string(electrons.size()) + "\n";
    report += "n_photons: " + std::to_string(photons.size()) + "\n";

    std::vector<epg::ElectronEvent> corrected;
    if (!electrons.empty()) corrected = drift_corrected(electrons, basis, &report);
    const std::vector<epg::CoincidencePair> pairs = epg::match(corrected, photons, rc.match);
    const epg::FalseRate false_rate = epg::false_coincidence_rate(corrected, photons, rc.match);
    const epg::G2Histogram hist =
        epg::g2(corrected, photons, rc.g2_bin_width_ns, rc.g2_range_ns);

    report += "n_pairs: " + std::to_string(pairs.size()) + "\n";
    report += "false_pairs: " + std::to_string(false_rate.count) + "\n";
    std::ostringstream num;
    num << false_rate.per_photon;
    report += "false_rate_per_photon: " + num.str() + "\n";
    num.str("");
    num << hist.accidental_rate_per_bin;
    report += "g2_accidental_rate_per_bin: " + num.str() + "\n";

    epg::write_pairs_csv(out_prefix + "_pairs.csv", pairs);
    epg::write_g2_csv(out_prefix + "_g2.csv", hist);
    write_text(out_prefix + "_match.txt", report);
    std::cout << report;
    return 0;
}

int cmd_flatfield(const CommonOpts& opts, const std::string& pairs_path,
                  const std::string& basis_name, const std::string& out_prefix) {
    epg::RunConfig rc = load_config(opts);
    const epg::Basis basis = epg::parse_basis(basis_name);
    if (basis == epg::Basis::kMixed)
        throw epg::ConfigError("flatfield: basis must be position or momentum");
    const std::vector<epg::CoincidencePair> pairs = epg::read_pairs_csv(pairs_path);
    if (pairs.empty()) throw std::runtime_error("flatfield: no pairs in " + pairs_path);
    const epg::CoincidenceImage img = epg::accumulate(pairs, basis, rc.calib);
    const epg::FlatField flat = epg::flat_field_smooth(img, rc.flatfield);
    const std::string basis_str = basis == epg::Basis::kPosition ? "position" : "momentum";
    epg::write_grid_file(out_prefix + "_flat.grid", flat.values, {{"basis", basis_str}});
    epg::write_grid_file(out_prefix + "_flat_mask.grid", flat.beam_mask, {{"basis", basis_str}});
    std::cout << "flat_total: " << flat.values.total() << "\nbeam_pixels: " << flat.beam_mask.total()
              << "\n";
    return 0;
}

struct FitInputs {
    epg::CoincidenceImage image_x, image_k;
    epg::FlatField flat_x, flat_k;
};

FitInputs load_fit_inputs(const epg::RunConfig& rc, const std::string& pairs_x,
                          const std::string& pairs_k, const std::string& flat_x,
                          const std::string& flat_mask_x, const std::string& flat_k,
                          const std::string& flat_mask_k) {
    FitInputs in;
    in.image_x = epg::accumulate(epg::read_pairs_csv(pairs_x), epg::Basis::kPosition, rc.calib);
    in.image_k = epg::accumulate(epg::read_pairs_csv(pairs_k), epg::Basis::kMomentum, rc.calib);
    in.flat_x = {epg::read_grid_file(flat_x).grid, epg::read_grid_file(flat_mask_x).grid,
                 epg::Basis::kPosition};
    in.flat_k = {epg::read_grid_file(flat_k).grid, epg::read_grid_file(flat_mask_k).grid,
                 epg::Basis::kMomentum};
    return in;
}

std::string fit_report(const epg::FitResult& fit, const epg::RunConfig& rc, double dx, double dk) {
    std::ostringstream out;
    out << "f_mirror_um: " << rc.optics.f_mirror_um << "\n";
    out << "f_lens_mm: " << rc.optics.f_lens_mm << "\n";
    out << "d_focus_mm: " << fit.params.d_focus_mm << "\n";
    out << "phi_x_deg: " << fit.params.phi_x_deg << "\n";
    out << "phi_k_deg: " << fit.params.phi_k_deg << "\n";
    out << "sigma_x_u_um: " << fit.params.psf_pos.sigma_u << "\n";
    out << "sigma_x_v_um: " << fit.params.psf_pos.sigma_v << "\n";
    out << "sigma_k_u_invum: " << fit.params.psf_mom.sigma_u << "\n";
    out << "sigma_k_v_invum: " << fit.params.psf_mom.sigma_v << "\n";
    out << "dx_infer_um: " << dx << "\n";
    out << "dk_infer_invum: " << dk << "\n";
    out << "beam_x_um: " << fit.params.beam_x_um << "\n";
    out << "beam_y_um: " << fit.params.beam_y_um << "\n";
    out << "beam_z_um: " << fit.params.beam_z_um << "\n";
    out << "ell_x_um: " << fit.params.ell_x_um << "\n";
    out << "ell_k_um: " << fit.params.ell_k_um << "\n";
    out << "lae_x: " << fit.lae_x << "\n";
    out << "lae_k: " << fit.lae_k << "\n";
    out << "r2_x: " << fit.r2_x << "\n";
    out << "r2_k: " << fit.r2_k << "\n";
    out << "n_evaluations: " << fit.n_evaluations << "\n";
    out << "converged: " << (fit.converged ? "true" : "false") << "\n";
    return out.str();
}

epg::FitConfig make_fit_config(const epg::RunConfig& rc) {
    epg::FitConfig fc;
    fc.optics = rc.optics;
    fc.mask_x = rc.mask_x;
    fc.mask_k = rc.mask_k;
    fc.calib = rc.calib;
    fc.mode = rc.fit_mode;
    fc.tol = rc.fit_tol;
    fc.max_iter = rc.fit_max_iter;
    return fc;
}

int cmd_fit(const CommonOpts& opts, const std::string& pairs_x, const std::string& pairs_k,
            const std::string& flat_x, const std::string& flat_mask_x, const std::string& flat_k,
            const std::string& flat_mask_k, const std::string& out_prefix) {
    const epg::RunConfig rc = load_config(opts);
    const FitInputs in =
        load_fit_inputs(rc, pairs_x, pairs_k, flat_x, flat_mask_x, flat_k, flat_mask_k);
    const epg::FitConfig fc = make_fit_config(rc);
    const epg::FitResult fit = epg::joint_fit(in.image_x, in.image_k, in.flat_x, in.flat_k, fc);
    epg::OpticsConfig fitted_optics = rc.optics;
    fitted_optics.phi_x_deg = fit.params.phi_x_deg;
    fitted_optics.phi_k_deg = fit.params.phi_k_deg;
    fitted_optics.d_focus_mm = fit.params.d_focus_mm;
    const double dx = epg::modulation_width(fit.params.psf_pos, epg::Basis::kPosition, rc.mask_x,
                                            fitted_optics, rc.calib);
    const double dk = epg::modulation_width(fit.params.psf_mom, epg::Basis::kMomentum, rc.mask_k,
                                            fitted_optics, rc.calib);
    const std::string report = fit_report(fit, rc, dx, dk);
    write_text(out_prefix + "_fit.txt", report);
    epg::write_grid_file(out_prefix + "_resid_x.grid", fit.residual_x, {{"basis", "position"}});
    epg::write_grid_file(out_prefix + "_resid_k.grid", fit.residual_k, {{"basis", "momentum"}});
    std::cout << report;
    if (!fit.converged) throw NonConvergence("fit: Nelder-Mead did not converge");
    return 0;
}

int cmd_witness(const CommonOpts& opts, const std::string& pairs_x, const std::string& pairs_k,
                const std::string& flat_x, const std::string& flat_mask_x,
                const std::string& flat_k, const std::string& flat_mask_k,
                const std::string& out_prefix) {
    const epg::RunConfig rc = load_config(opts);
    const std::vector<epg::CoincidencePair> all_x = epg::read_pairs_csv(pairs_x);
    const std::vector<epg::CoincidencePair> all_k = epg::read_pairs_csv(pairs_k);
    const FitInputs in =
        load_fit_inputs(rc, pairs_x, pairs_k, flat_x, flat_mask_x, flat_k, flat_mask_k);
    const epg::FitConfig fc = make_fit_config(rc);

    const epg::FitResult full = epg::joint_fit(in.image_x, in.image_k, in.flat_x, in.flat_k, fc);
    if (!full.converged) throw NonConvergence("witness: full fit did not converge");
    epg::OpticsConfig fitted_optics = rc.optics;
    fitted_optics.phi_x_deg = full.params.phi_x_deg;
    fitted_optics.phi_k_deg = full.params.phi_k_deg;
    fitted_optics.d_focus_mm = full.params.d_focus_mm;
    const double dx = epg::modulation_width(full.params.psf_pos, epg::Basis::kPosition, rc.mask_x,
                                            fitted_optics, rc.calib);
    const double dk = epg::modulation_width(full.params.psf_mom, epg::Basis::kMomentum, rc.mask_k,
                                            fitted_optics, rc.calib);

    // Per-batch refits start from the full-fit optimum; batches only move
    // the PSF widths appreciably, which is what the spread is measuring.
    auto batch_fit = [&](const std::vector<epg::CoincidencePair>& bx,
                         const std::vector<epg::CoincidencePair>& bk) {
        const epg::CoincidenceImage ix = epg::accumulate(bx, epg::Basis::kPosition, rc.calib);
        const epg::CoincidenceImage ik = epg::accumulate(bk, epg::Basis::kMomentum, rc.calib);
        epg::FitConfig batch_fc = fc;
        batch_fc.widths_only = true;
        const epg::FitResult r =
            epg::joint_fit(ix, ik, in.flat_x, in.flat_k, batch_fc, &full.params);
        return epg::BatchFit{epg::modulation_width(r.params.psf_pos, epg::Basis::kPosition,
                                                   rc.mask_x, fitted_optics, rc.calib),
                             epg::modulation_width(r.params.psf_mom, epg::Basis::kMomentum,
                                                   rc.mask_k, fitted_optics, rc.calib)};
    };
    const uint64_t seed = opts.seed != 0 ? opts.seed : 1234;
    const epg::SubsampleSpread spread = epg::subsample_errors(
        all_x, all_k, rc.witness_n_batches, rc.witness_batch_size, batch_fit, seed);

    epg::ErrorBudget budget;
    budget.stat_x_um = spread.stat_x_um;
    budget.stat_k_invum = spread.stat_k_invum;
    budget.cal_x_um = rc.cal_err_x_um;
    budget.cal_k_invum = rc.cal_err_k_invum;
    const epg::WitnessVerdict verdict = epg::combine_and_judge(dx, dk, budget);

    std::string report = epg::verdict_report(verdict);
    report += "r2_x: " + std::to_string(full.r2_x) + "\n";
    report += "r2_k: " + std::to_string(full.r2_k) + "\n";
    write_text(out_prefix + "_witness.txt", report);
    write_text(out_prefix + "_witness.csv", epg::verdict_summary_line(verdict) + "\n");
    std::cout << report;
    return 0;
}

int cmd_calibrate(const std::string& mode, const std::string& input_path, double spacing,
                  double threshold_frac, double min_separation, int window,
                  const std::string& out_path) {
    const epg::Grid image = epg::read_grid_file(input_path).grid;
    epg::CalibResult result;
    if (mode == "fft") {
        result = epg::fft_calibrate(image, spacing);
    } else if (mode == "spots") {
        const std::vector<epg::Peak> peaks =
            epg::detect_spots(image, min_separation, threshold_frac * image.max_value());
        if (peaks.size() < 2) throw std::runtime_error("calibrate: fewer than 2 spots detected");
        std::vector<epg::Vec2> centers;
        for (const epg::Peak& p : peaks)
            centers.push_back(
                epg::fit_gaussian_2d(image, window, {double(p.x), double(p.y)}).center);
        // Neighbour distances assume a line of spots; order along the
        // dominant axis.
        std::sort(centers.begin(), centers.end(), [](const epg::Vec2& a, const epg::Vec2& b) {
            return a.u != b.u ? a.u < b.u : a.v < b.v;
        });
        result = epg::calibrate_from_spacings(centers, spacing);
    } else {
        throw epg::ConfigError("calibrate: mode must be spots or fft");
    }
    std::ostringstream report;
    report << "scale: " << result.scale << "\n"
           << "sigma: " << result.sigma << "\n"
           << "n_measurements: " << result.n_measurements << "\n";
    if (!out_path.empty()) write_text(out_path, report.str());
    std::cout << report.str();
    return 0;
}

int cmd_g2(const CommonOpts& opts, const std::string& electrons_path,
           const std::string& photons_path, const std::string& out_path) {
    const epg::RunConfig rc = load_config(opts);
    const std::vector<epg::ElectronEvent> electrons = epg::read_electron_file(electrons_path);
    const std::vector<epg::PhotonEvent> photons = epg::read_photon_file(photons_path);
    const epg::G2Histogram hist = epg::g2(electrons, photons, rc.g2_bin_width_ns, rc.g2_range_ns);
    epg::write_g2_csv(out_path, hist);
    std::cout << "bins: " << hist.counts.size()
              << "\naccidental_rate_per_bin: " << hist.accidental_rate_per_bin << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"electron-photon ghost-imaging analysis"};
    app.require_subcommand(1);

    CommonOpts opts;

    std::string out_prefix, electrons_path, photons_path, basis_name;
    std::string pairs_path, pairs_x, pairs_k, flat_x, flat_mask_x, flat_k, flat_mask_k;
    std::string calib_mode = "spots", input_path, out_path;
    double spacing = 0.0, threshold_frac = 0.25, min_separation = 10.0;
    int window = 5;

    CLI::App* sim = app.add_subcommand("simulate", "generate synthetic event streams");
    add_common(sim, &opts);
    sim->add_option("-o,--out-prefix", out_prefix, "output file prefix")->required();

    CLI::App* match = app.add_subcommand("match", "drift-correct and match coincidences");
    add_common(match, &opts);
    match->add_option("-e,--electrons", electrons_path, "electron file (.epev)")->required();
    match->add_option("-p,--photons", photons_path, "photon file (.phev)")->required();
    match->add_option("-b,--basis", basis_name, "position | momentum")->required();
    match->add_option("-o,--out-prefix", out_prefix, "output file prefix")->required();

    CLI::App* flat = app.add_subcommand("flatfield", "build the smoothed mask-free reference");
    add_common(flat, &opts);
    flat->add_option("--pairs", pairs_path, "pairs CSV from a mask-free run")->required();
    flat->add_option("-b,--basis", basis_name, "position | momentum")->required();
    flat->add_option("-o,--out-prefix", out_prefix, "output file prefix")->required();

    auto add_fit_inputs = [&](CLI::App* cmd) {
        cmd->add_option("--pairs-x", pairs_x, "position-basis pairs CSV")->required();
        cmd->add_option("--pairs-k", pairs_k, "momentum-basis pairs CSV")->required();
        cmd->add_option("--flat-x", flat_x, "position flat-field grid")->required();
        cmd->add_option("--flat-mask-x", flat_mask_x, "position beam-mask grid")->required();
        cmd->add_option("--flat-k", flat_k, "momentum flat-field grid")->required();
        cmd->add_option("--flat-mask-k", flat_mask_k, "momentum beam-mask grid")->required();
        cmd->add_option("-o,--out-prefix", out_prefix, "output file prefix")->required();
    };

    CLI::App* fit = app.add_subcommand("fit", "joint PSF fit in both bases");
    add_common(fit, &opts);
    add_fit_inputs(fit);

    CLI::App* witness = app.add_subcommand("witness", "fit + subsampling + MGVT verdict");
    add_common(witness, &opts);
    add_fit_inputs(witness);

    CLI::App* calib = app.add_subcommand("calibrate", "scale calibration from reference frames");
    calib->add_option("-m,--mode", calib_mode, "spots | fft")->required();
    calib->add_option("-i,--input", input_path, "calibration image (grid file)")->required();
    calib->add_option("-s,--spacing", spacing, "known physical spacing (um^-1 or nm)")->required();
    calib->add_option("--threshold-frac", threshold_frac, "spot threshold as fraction of max");
    calib->add_option("--min-separation", min_separation, "minimum spot separation (px)");
    calib->add_option("--window", window, "Gaussian fit window half-size (px)");
    calib->add_option("-o,--out", out_path, "optional report file");

    CLI::App* g2cmd = app.add_subcommand("g2", "arrival-time correlation histogram");
    add_common(g2cmd, &opts);
    g2cmd->add_option("-e,--electrons", electrons_path, "electron file (.epev)")->required();
    g2cmd->add_option("-p,--photons", photons_path, "photon file (.phev)")->required();
    g2cmd->add_option("-o,--out", out_path, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (sim->parsed()) return cmd_simulate(opts, out_prefix);
        if (match->parsed())
            return cmd_match(opts, electrons_path, photons_path, basis_name, out_prefix);
        if (flat->parsed()) return cmd_flatfield(opts, pairs_path, basis_name, out_prefix);
        if (fit->parsed())
            return cmd_fit(opts, pairs_x, pairs_k, flat_x, flat_mask_x, flat_k, flat_mask_k,
                           out_prefix);
        if (witness->parsed())
            return cmd_witness(opts, pairs_x, pairs_k, flat_x, flat_mask_x, flat_k, flat_mask_k,
                               out_prefix);
        if (calib->parsed())
            return cmd_calibrate(calib_mode, input_path, spacing, threshold_frac, min_separation,
                                 window, out_path);
        if (g2cmd->parsed()) return cmd_g2(opts, electrons_path, photons_path, out_path);
    } catch (const epg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NonConvergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNoConvergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitConfig;
}
