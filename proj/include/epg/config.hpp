#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "epg/coincidence.hpp"
#include "epg/fit.hpp"
#include "epg/image.hpp"
#include "epg/optics.hpp"
#include "epg/sim.hpp"
#include "epg/witness.hpp"

namespace epg {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key = value text with [section] headers; '#' and ';' start comments.
// Lookups are tracked so a consumer can reject unknown keys afterwards.
class Config {
public:
    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    // All getters mark the key as consumed and throw ConfigError on a
    // malformed value.
    double get_double(const std::string& key, double fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    uint64_t get_uint(const std::string& key, uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;

    std::vector<std::string> unused_keys() const;

private:
    std::map<std::string, std::string> values_;  // "section.key" -> raw text
    mutable std::map<std::string, bool> used_;
};

// Everything a run needs besides file paths (those are command-line
// arguments). Unknown config keys are rejected, not ignored.
struct RunConfig {
    OpticsConfig optics;
    MaskSpec mask_x{38.5, 0.0, {1.0, 0.0}};
    MaskSpec mask_k{100.0, 0.0, {1.0, 0.0}};
    Calibration calib;
    MatchConfig match;
    SimConfig sim;
    FlatFieldParams flatfield;
    FitMode fit_mode = FitMode::kStandard;
    double fit_tol = 1e-3;
    int fit_max_iter = 4000;
    double cal_err_x_um = 0.017;
    double cal_err_k_invum = 0.007;
    size_t witness_n_batches = 20;
    size_t witness_batch_size = 25000;
    double g2_bin_width_ns = 10.0;
    double g2_range_ns = 500.0;
};

Basis parse_basis(const std::string& text);  // position | momentum | mixed

RunConfig load_run_config(const Config& cfg);
RunConfig load_run_config_file(const std::string& path);

// Every recognised key with its default, for --help output.
std::string run_config_key_help();

}  // namespace epg
