#pragma once

#include <string>
#include <vector>

#include "epg/events.hpp"
#include "epg/image_types.hpp"

namespace epg {

struct CoincidencePair {
    ElectronEvent electron;  // drift-corrected pixel coordinates
    int64_t photon_t_ns = 0;
    int64_t dt_ns = 0;  // photon_t - toa

    friend bool operator==(const CoincidencePair&, const CoincidencePair&) = default;
};

struct MatchConfig {
    int64_t expected_delay_ns = -40;
    int64_t window_halfwidth_ns = 100;
    int64_t false_window_center_ns = -150;
    Basis basis = Basis::kPosition;
};

struct G2Histogram {
    std::vector<double> bin_edges_ns;
    std::vector<uint64_t> counts;
    double accidental_rate_per_bin = 0.0;
};

struct DriftResult {
    EventPackage package;
    int shift_x = 0;
    int shift_y = 0;
    size_t dropped = 0;
};

// Recenter a package on pixel (127, 127). Position basis: centre of mass.
// Momentum basis: aggregate to a grid, blur with sigma = 2 px, take the
// highest local maximum. Shifts are integer; events pushed off-grid are
// dropped and counted.
DriftResult drift_correct(const EventPackage& package, Basis basis, int grid = kDetectorGrid);

// Greedy one-match-per-photon coincidence matching. Photons are processed in
// time order; each takes the unused electron whose toa is closest to
// (photon_t - expected_delay) within the window, ties broken toward the
// earlier electron. Inputs must be time-sorted.
std::vector<CoincidencePair> match(const std::vector<ElectronEvent>& electrons,
                                   const std::vector<PhotonEvent>& photons,
                                   const MatchConfig& cfg);

struct FalseRate {
    uint64_t count = 0;
    double per_photon = 0.0;
};

// match() with the window recentred at false_window_center_ns.
FalseRate false_coincidence_rate(const std::vector<ElectronEvent>& electrons,
                                 const std::vector<PhotonEvent>& photons,
                                 const MatchConfig& cfg);

// Histogram of photon-electron time differences over [-range, +range].
// Every (electron, photon) combination whose dt falls in range contributes.
G2Histogram g2(const std::vector<ElectronEvent>& electrons,
               const std::vector<PhotonEvent>& photons, double bin_width_ns, double range_ns);

void write_pairs_csv(const std::string& path, const std::vector<CoincidencePair>& pairs);
std::vector<CoincidencePair> read_pairs_csv(const std::string& path);
void write_g2_csv(const std::string& path, const G2Histogram& hist);

}  // namespace epg
