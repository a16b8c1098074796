#include "epg/coincidence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "epg/kernels.hpp"

namespace epg {

DriftResult drift_correct(const EventPackage& package, Basis basis, int grid) {
    if (package.events.empty()) throw std::invalid_argument("drift_correct: empty package");
    const double c0 = kCenterPx;
    double cx = 0.0, cy = 0.0;
    if (basis == Basis::kPosition) {
        for (const auto& e : package.events) {
            cx += e.x_px;
            cy += e.y_px;
        }
        cx /= static_cast<double>(package.events.size());
        cy /= static_cast<double>(package.events.size());
    } else {
        Grid img(grid, grid);
        for (const auto& e : package.events)
            if (e.x_px < grid && e.y_px < grid) img.at(e.x_px, e.y_px) += 1.0;
        const Grid blurred = kernels::gaussian_blur(img, 2.0);
        double best = 0.0;
        int bx = -1, by = -1;
        for (int y = 0; y < grid; ++y)
            for (int x = 0; x < grid; ++x)
                if (blurred.at(x, y) > best) {
                    best = blurred.at(x, y);
                    bx = x;
                    by = y;
                }
        if (bx < 0) throw std::runtime_error("drift_correct: no detectable peak");
        cx = bx;
        cy = by;
    }
    DriftResult out;
    out.shift_x = static_cast<int>(std::lround(c0 - cx));
    out.shift_y = static_cast<int>(std::lround(c0 - cy));
    out.package.index = package.index;
    out.package.events.reserve(package.events.size());
    for (const auto& e : package.events) {
        const int nx = static_cast<int>(e.x_px) + out.shift_x;
        const int ny = static_cast<int>(e.y_px) + out.shift_y;
        if (nx < 0 || nx >= grid || ny < 0 || ny >= grid) {
            ++out.dropped;
            continue;
        }
        out.package.events.push_back(
            {static_cast<uint16_t>(nx), static_cast<uint16_t>(ny), e.toa_ns, e.tot});
    }
    return out;
}

namespace {

std::vector<CoincidencePair> match_window(const std::vector<ElectronEvent>& electrons,
                                          const std::vector<PhotonEvent>& photons,
                                          int64_t window_center_ns, int64_t halfwidth_ns) {
    if (!is_time_sorted(electrons)) throw std::invalid_argument("match: electrons unsorted");
    if (!is_time_sorted(photons)) throw std::invalid_argument("match: photons unsorted");
    std::vector<CoincidencePair> pairs;
    std::vector<char> used(electrons.size(), 0);
    size_t low = 0;  // electrons before this index are out of every later window
    for (const auto& ph : photons) {
        const int64_t target = ph.t_ns - window_center_ns;
        const int64_t lo = target - halfwidth_ns, hi = target + halfwidth_ns;
        while (low < electrons.size() && electrons[low].toa_ns < lo) ++low;
        size_t best = electrons.size();
        int64_t best_dist = halfwidth_ns + 1;
        for (size_t i = low; i < electrons.size() && electrons[i].toa_ns <= hi; ++i) {
            if (used[i]) continue;
            const int64_t dist = std::llabs(electrons[i].toa_ns - target);
            // Strict improvement keeps the earlier electron on ties.
            if (dist < best_dist) {
                best_dist = dist;
                best = i;
            }
        }
        if (best < electrons.size()) {
            used[best] = 1;
            pairs.push_back({electrons[best], ph.t_ns, ph.t_ns - electrons[best].toa_ns});
        }
    }
    return pairs;
}

}  // namespace

std::vector<CoincidencePair> match(const std::vector<ElectronEvent>& electrons,
                                   const std::vector<PhotonEvent>& photons,
                                   const MatchConfig& cfg) {
    return match_window(electrons, photons, cfg.expected_delay_ns, cfg.window_halfwidth_ns);
}

FalseRate false_coincidence_rate(const std::vector<ElectronEvent>& electrons,
                                 const std::vector<PhotonEvent>& photons,
                                 const MatchConfig& cfg) {
    // Overlapping windows are the documented procedure, but flag it: the
    // shifted window then also catches tail leakage from true pairs.
    if (std::llabs(cfg.false_window_center_ns - cfg.expected_delay_ns) <=
        2 * cfg.window_halfwidth_ns)
        std::fprintf(stderr,
                     "warning: false-coincidence window (center %lld ns) overlaps the "
                     "coincidence window (center %lld ns, halfwidth %lld ns)\n",
                     static_cast<long long>(cfg.false_window_center_ns),
                     static_cast<long long>(cfg.expected_delay_ns),
                     static_cast<long long>(cfg.window_halfwidth_ns));
    const auto pairs =
        match_window(electrons, photons, cfg.false_window_center_ns, cfg.window_halfwidth_ns);
    FalseRate out;
    out.count = pairs.size();
    out.per_photon = photons.empty() ? 0.0 : static_cast<double>(pairs.size()) / photons.size();
    return out;
}

G2Histogram g2(const std::vector<ElectronEvent>& electrons,
               const std::vector<PhotonEvent>& photons, double bin_width_ns, double range_ns) {
    if (!(bin_width_ns > 0)) throw std::invalid_argument("g2: non-positive bin width");
    if (!is_time_sorted(electrons) || !is_time_sorted(photons))
        throw std::invalid_argument("g2: unsorted input");
    const int nbins = static_cast<int>(std::ceil(2.0 * range_ns / bin_width_ns));
    G2Histogram hist;
    hist.counts.assign(nbins, 0);
    hist.bin_edges_ns.resize(nbins + 1);
    for (int i = 0; i <= nbins; ++i) hist.bin_edges_ns[i] = -range_ns + i * bin_width_ns;

    size_t low = 0;
    int64_t t_min = 0, t_max = 0;
    bool any = false;
    for (const auto& ph : photons) {
        const auto lo = static_cast<int64_t>(std::floor(ph.t_ns - range_ns));
        while (low < electrons.size() && electrons[low].toa_ns < lo) ++low;
        for (size_t i = low; i < electrons.size(); ++i) {
            const double dt = static_cast<double>(ph.t_ns - electrons[i].toa_ns);
            if (dt < -range_ns) break;
            const int bin = static_cast<int>((dt + range_ns) / bin_width_ns);
            if (bin >= 0 && bin < nbins) ++hist.counts[bin];
        }
        if (!any) {
            t_min = t_max = ph.t_ns;
            any = true;
        }
        t_max = ph.t_ns;
    }
    if (any && !electrons.empty()) {
        const double span = std::max<double>(1.0, static_cast<double>(t_max - t_min));
        hist.accidental_rate_per_bin = static_cast<double>(electrons.size()) *
                                       static_cast<double>(photons.size()) * bin_width_ns / span;
    }
    return hist;
}

void write_pairs_csv(const std::string& path, const std::vector<CoincidencePair>& pairs) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "x,y,toa_ns,photon_t_ns,dt_ns\n";
    for (const auto& p : pairs)
        f << p.electron.x_px << ',' << p.electron.y_px << ',' << p.electron.toa_ns << ','
          << p.photon_t_ns << ',' << p.dt_ns << '\n';
}

std::vector<CoincidencePair> read_pairs_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "x,y,toa_ns,photon_t_ns,dt_ns")
        throw std::runtime_error("bad pairs CSV header in " + path);
    std::vector<CoincidencePair> pairs;
    size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        CoincidencePair p;
        long x, y;
        long long toa, pt, dt;
        if (std::sscanf(line.c_str(), "%ld,%ld,%lld,%lld,%lld", &x, &y, &toa, &pt, &dt) != 5 ||
            x < 0 || y < 0 || x > 0xffff || y > 0xffff)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad pairs CSV row");
        p.electron.x_px = static_cast<uint16_t>(x);
        p.electron.y_px = static_cast<uint16_t>(y);
        p.electron.toa_ns = toa;
        p.photon_t_ns = pt;
        p.dt_ns = dt;
        pairs.push_back(p);
    }
    return pairs;
}

void write_g2_csv(const std::string& path, const G2Histogram& hist) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "bin_center_ns,count\n";
    for (size_t i = 0; i < hist.counts.size(); ++i)
        f << 0.5 * (hist.bin_edges_ns[i] + hist.bin_edges_ns[i + 1]) << ',' << hist.counts[i]
          << '\n';
}

}  // namespace epg
