#include "epg/config.hpp"

#include <algorithm>
#include <cctype>
#include <memory>
#include <fstream>
#include <sstream>

namespace epg {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace

Config Config::from_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (cfg.values_.count(full))
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key " + full);
        cfg.values_[full] = value;
        cfg.used_[full] = false;
    }
    return cfg;
}

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str());
}

double Config::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_[key] = true;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": not a number: '" + it->second + "'");
    }
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_[key] = true;
    try {
        size_t pos = 0;
        const long long v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": not an integer: '" + it->second + "'");
    }
}

uint64_t Config::get_uint(const std::string& key, uint64_t fallback) const {
    const int64_t v = get_int(key, static_cast<int64_t>(fallback));
    if (v < 0) throw ConfigError("config key " + key + ": must be non-negative");
    return static_cast<uint64_t>(v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_[key] = true;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key " + key + ": not a boolean: '" + it->second + "'");
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_[key] = true;
    return it->second;
}

std::vector<std::string> Config::unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [key, used] : used_)
        if (!used) out.push_back(key);
    return out;
}

Basis parse_basis(const std::string& text) {
    if (text == "position") return Basis::kPosition;
    if (text == "momentum") return Basis::kMomentum;
    if (text == "mixed") return Basis::kMixed;
    throw ConfigError("basis must be position, momentum or mixed, got '" + text + "'");
}

RunConfig load_run_config(const Config& cfg) {
    RunConfig rc;

    OpticsConfig& o = rc.optics;
    o.f_mirror_um = cfg.get_double("optics.f_mirror_um", o.f_mirror_um);
    o.f_lens_mm = cfg.get_double("optics.f_lens_mm", o.f_lens_mm);
    o.d_focus_mm = cfg.get_double("optics.d_focus_mm", o.d_focus_mm);
    o.beam_x_um = cfg.get_double("optics.beam_x_um", o.beam_x_um);
    o.beam_y_um = cfg.get_double("optics.beam_y_um", o.beam_y_um);
    o.beam_z_um = cfg.get_double("optics.beam_z_um", o.beam_z_um);
    o.phi_x_deg = cfg.get_double("optics.phi_x_deg", o.phi_x_deg);
    o.phi_k_deg = cfg.get_double("optics.phi_k_deg", o.phi_k_deg);
    o.magnification_nominal = cfg.get_double("optics.magnification_nominal", o.magnification_nominal);
    o.aperture_radius_mm = cfg.get_double("optics.aperture_radius_mm", o.aperture_radius_mm);
    o.lambda_photon_um = cfg.get_double("optics.lambda_photon_um", o.lambda_photon_um);

    rc.mask_x.period_um = cfg.get_double("mask.period_x_um", rc.mask_x.period_um);
    rc.mask_x.offset_um = cfg.get_double("mask.offset_x_um", rc.mask_x.offset_um);
    rc.mask_k.period_um = cfg.get_double("mask.period_k_um", rc.mask_k.period_um);
    rc.mask_k.offset_um = cfg.get_double("mask.offset_k_um", rc.mask_k.offset_um);

    Calibration& c = rc.calib;
    c.pos_scale_um = cfg.get_double("calibration.pos_scale_um", c.pos_scale_um);
    c.mom_scale_invum = cfg.get_double("calibration.mom_scale_invum", c.mom_scale_invum);
    c.pos_scale_err_um = cfg.get_double("calibration.pos_scale_err_um", c.pos_scale_err_um);
    c.mom_scale_err_invum = cfg.get_double("calibration.mom_scale_err_invum", c.mom_scale_err_invum);

    MatchConfig& m = rc.match;
    m.expected_delay_ns = cfg.get_int("match.expected_delay_ns", m.expected_delay_ns);
    m.window_halfwidth_ns = cfg.get_int("match.window_halfwidth_ns", m.window_halfwidth_ns);
    m.false_window_center_ns = cfg.get_int("match.false_window_center_ns", m.false_window_center_ns);

    SimConfig& s = rc.sim;
    s.basis = parse_basis(cfg.get_string("sim.basis", "position"));
    s.n_electrons = cfg.get_uint("sim.n_electrons", s.n_electrons);
    s.pair_probability = cfg.get_double("sim.pair_probability", s.pair_probability);
    s.dx_minus_um = cfg.get_double("sim.dx_minus_um", s.dx_minus_um);
    s.dk_plus_invum = cfg.get_double("sim.dk_plus_invum", s.dk_plus_invum);
    s.beam_diameter_um = cfg.get_double("sim.beam_diameter_um", s.beam_diameter_um);
    s.beam_divergence_invum = cfg.get_double("sim.beam_divergence_invum", s.beam_divergence_invum);
    s.delay_ns = cfg.get_double("sim.delay_ns", s.delay_ns);
    s.jitter_sigma_ns = cfg.get_double("sim.jitter_sigma_ns", s.jitter_sigma_ns);
    s.background_photon_rate_hz =
        cfg.get_double("sim.background_photon_rate_hz", s.background_photon_rate_hz);
    s.background_electron_rate_hz =
        cfg.get_double("sim.background_electron_rate_hz", s.background_electron_rate_hz);
    s.electron_rate_hz = cfg.get_double("sim.electron_rate_hz", s.electron_rate_hz);
    s.glass_transmissivity = cfg.get_double("sim.glass_transmissivity", s.glass_transmissivity);
    s.drift_px_per_package = cfg.get_double("sim.drift_px_per_package", s.drift_px_per_package);
    s.apply_mask = cfg.get_bool("sim.apply_mask", s.apply_mask);
    s.rng_seed = cfg.get_uint("sim.rng_seed", s.rng_seed);
    const std::string tmpl = cfg.get_string("sim.intensity_template", "");
    s.template_scale_um = cfg.get_double("sim.template_scale_um", s.template_scale_um);
    if (!tmpl.empty()) {
        try {
            s.intensity_template = std::make_shared<Grid>(read_grid_file(tmpl).grid);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("sim.intensity_template: ") + e.what());
        }
    }

    FlatFieldParams& ff = rc.flatfield;
    ff.threshold_frac = cfg.get_double("flatfield.threshold_frac", ff.threshold_frac);
    ff.iterations = static_cast<int>(cfg.get_int("flatfield.iterations", ff.iterations));
    ff.sigma_position_px = cfg.get_double("flatfield.sigma_position_px", ff.sigma_position_px);
    ff.sigma_momentum_px = cfg.get_double("flatfield.sigma_momentum_px", ff.sigma_momentum_px);

    const std::string mode = cfg.get_string("fit.mode", "standard");
    if (mode == "standard")
        rc.fit_mode = FitMode::kStandard;
    else if (mode == "extended")
        rc.fit_mode = FitMode::kExtended;
    else
        throw ConfigError("fit.mode must be standard or extended, got '" + mode + "'");
    rc.fit_tol = cfg.get_double("fit.tol", rc.fit_tol);
    rc.fit_max_iter = static_cast<int>(cfg.get_int("fit.max_iter", rc.fit_max_iter));

    rc.cal_err_x_um = cfg.get_double("witness.cal_err_x_um", rc.cal_err_x_um);
    rc.cal_err_k_invum = cfg.get_double("witness.cal_err_k_invum", rc.cal_err_k_invum);
    rc.witness_n_batches = cfg.get_uint("witness.n_batches", rc.witness_n_batches);
    rc.witness_batch_size = cfg.get_uint("witness.batch_size", rc.witness_batch_size);

    rc.g2_bin_width_ns = cfg.get_double("g2.bin_width_ns", rc.g2_bin_width_ns);
    rc.g2_range_ns = cfg.get_double("g2.range_ns", rc.g2_range_ns);

    const std::vector<std::string> unknown = cfg.unused_keys();
    if (!unknown.empty()) {
        std::string msg = "unknown config key(s):";
        for (const std::string& k : unknown) msg += " " + k;
        throw ConfigError(msg);
    }

    try {
        rc.optics.validate();
        rc.mask_x.validate();
        rc.mask_k.validate();
        rc.calib.validate();
        rc.sim.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!(rc.fit_tol > 0) || rc.fit_max_iter <= 0)
        throw ConfigError("fit.tol and fit.max_iter must be positive");
    if (!(rc.g2_bin_width_ns > 0) || !(rc.g2_range_ns > 0))
        throw ConfigError("g2.bin_width_ns and g2.range_ns must be positive");
    if (rc.witness_n_batches < 2 || rc.witness_batch_size == 0)
        throw ConfigError("witness.n_batches must be >= 2 and witness.batch_size positive");
    return rc;
}

RunConfig load_run_config_file(const std::string& path) {
    return load_run_config(Config::from_file(path));
}

std::string run_config_key_help() {
    return
        "[optics]\n"
        "  f_mirror_um = 750           parabolic mirror focal length (um)\n"
        "  f_lens_mm = 100             projection lens focal length (mm)\n"
        "  d_focus_mm = 317            lens position behind the mirror (mm)\n"
        "  beam_x_um = -2.39           beam position along the collimation axis (um)\n"
        "  beam_y_um = -32.6           beam position, horizontal transverse (um)\n"
        "  beam_z_um = 52.4            beam position, height above the focus (um)\n"
        "  phi_x_deg = 30              detector rotation, position basis (deg)\n"
        "  phi_k_deg = 295             detector rotation, momentum basis (deg)\n"
        "  magnification_nominal = 9.5 nominal position magnification\n"
        "  aperture_radius_mm = 2      aperture radius in the mirror-image plane (mm)\n"
        "  lambda_photon_um = 0.55     photon wavelength (um)\n"
        "[mask]\n"
        "  period_x_um = 38.5          position grating period (um)\n"
        "  offset_x_um = 0             position grating offset (um)\n"
        "  period_k_um = 100           momentum grating period (um)\n"
        "  offset_k_um = 0             momentum grating offset (um)\n"
        "[calibration]\n"
        "  pos_scale_um = 0.1129       position scale (um / px)\n"
        "  mom_scale_invum = 0.0895    momentum scale (um^-1 / px)\n"
        "  pos_scale_err_um = 0.0013   position scale error (um / px)\n"
        "  mom_scale_err_invum = 0.0013  momentum scale error (um^-1 / px)\n"
        "[match]\n"
        "  expected_delay_ns = -40     expected photon-minus-electron delay (ns)\n"
        "  window_halfwidth_ns = 100   coincidence window half-width (ns)\n"
        "  false_window_center_ns = -150  shifted-window centre for accidentals (ns)\n"
        "[sim]\n"
        "  basis = position            position | momentum | mixed\n"
        "  n_electrons = 1000000       electrons to generate\n"
        "  pair_probability = 0.1      photon-pair probability per electron\n"
        "  dx_minus_um = 1.45          joint position width (um)\n"
        "  dk_plus_invum = 0.49        joint momentum width (um^-1)\n"
        "  beam_diameter_um = 23       beam disc diameter (um)\n"
        "  beam_divergence_invum = 1.25  momentum marginal width (um^-1)\n"
        "  delay_ns = -40              photon-minus-electron delay (ns)\n"
        "  jitter_sigma_ns = 20        timing jitter (ns)\n"
        "  background_photon_rate_hz = 0\n"
        "  background_electron_rate_hz = 0\n"
        "  electron_rate_hz = 50000    electron arrival rate (Hz)\n"
        "  glass_transmissivity = 0.9  substrate transmission in open regions\n"
        "  drift_px_per_package = 0    injected linear drift (px / package)\n"
        "  apply_mask = true           false = mask-free flat-field run\n"
        "  rng_seed = 1\n"
        "  intensity_template =        optional grid file; structured position profile\n"
        "  template_scale_um = 0.25    sample-plane um per template pixel\n"
        "[flatfield]\n"
        "  threshold_frac = 0.10       beam-mask threshold (fraction of max)\n"
        "  iterations = 3              masked smoothing passes\n"
        "  sigma_position_px = 5       smoothing sigma, position basis (px)\n"
        "  sigma_momentum_px = 2       smoothing sigma, momentum basis (px)\n"
        "[fit]\n"
        "  mode = standard             standard | extended\n"
        "  tol = 1e-3                  Nelder-Mead relative spread tolerance\n"
        "  max_iter = 4000\n"
        "[witness]\n"
        "  cal_err_x_um = 0.017        calibration error on dx (um)\n"
        "  cal_err_k_invum = 0.007     calibration error on dk (um^-1)\n"
        "  n_batches = 20              subsample batches\n"
        "  batch_size = 25000          coincidences per batch\n"
        "[g2]\n"
        "  bin_width_ns = 10\n"
        "  range_ns = 500\n";
}

}  // namespace epg
