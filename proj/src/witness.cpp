#include "epg/witness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace epg {

MgvtResult mgvt(double dx_um, double dk_invum) {
    if (!(dx_um > 0) || !(dk_invum > 0))
        throw std::invalid_argument("mgvt: widths must be positive");
    const double product = dx_um * dx_um * dk_invum * dk_invum;
    return {product, product < 1.0};
}

bool heisenberg_floor(double dx_single_um, double dk_single_invum) {
    if (!(dx_single_um > 0) || !(dk_single_invum > 0))
        throw std::invalid_argument("heisenberg_floor: widths must be positive");
    const double p = dx_single_um * dx_single_um * dk_single_invum * dk_single_invum;
    return p >= 0.25 - 1e-12;
}

namespace {

double sample_stddev(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (n - 1.0));
}

std::vector<CoincidencePair> draw_batch(const std::vector<CoincidencePair>& pairs,
                                        size_t batch_size, std::mt19937_64& rng) {
    // Partial Fisher-Yates: first batch_size entries are a uniform sample
    // without replacement.
    std::vector<uint32_t> idx(pairs.size());
    std::iota(idx.begin(), idx.end(), 0u);
    for (size_t i = 0; i < batch_size; ++i) {
        std::uniform_int_distribution<size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    std::vector<CoincidencePair> out(batch_size);
    for (size_t i = 0; i < batch_size; ++i) out[i] = pairs[idx[i]];
    return out;
}

}  // namespace

SubsampleSpread subsample_errors(const std::vector<CoincidencePair>& pairs_x,
                                 const std::vector<CoincidencePair>& pairs_k,
                                 size_t n_batches, size_t batch_size,
                                 const std::function<BatchFit(const std::vector<CoincidencePair>&,
                                                              const std::vector<CoincidencePair>&)>& fit_fn,
                                 uint64_t seed) {
    if (n_batches < 2) throw std::invalid_argument("subsample_errors: need at least 2 batches");
    if (pairs_x.size() < batch_size || pairs_k.size() < batch_size)
        throw std::invalid_argument("subsample_errors: insufficient counts for batch size");

    std::mt19937_64 rng(seed);
    SubsampleSpread out;
    out.batches.resize(n_batches);
    for (size_t b = 0; b < n_batches; ++b) {
        const auto bx = draw_batch(pairs_x, batch_size, rng);
        const auto bk = draw_batch(pairs_k, batch_size, rng);
        out.batches[b] = fit_fn(bx, bk);
    }
    std::vector<double> sx, sk;
    for (const auto& b : out.batches) {
        sx.push_back(b.sigma_x_um);
        sk.push_back(b.sigma_kx_invum);
    }
    out.stat_x_um = sample_stddev(sx);
    out.stat_k_invum = sample_stddev(sk);
    return out;
}

WitnessVerdict combine_and_judge(double dx_um, double dk_invum, const ErrorBudget& budget) {
    if (!(dx_um > 0) || !(dk_invum > 0))
        throw std::invalid_argument("combine_and_judge: widths must be positive");
    WitnessVerdict v;
    v.dx_infer_um = dx_um;
    v.dk_infer_invum = dk_invum;
    v.product = dx_um * dx_um * dk_invum * dk_invum;
    v.err_x_um = std::hypot(budget.stat_x_um, budget.cal_x_um);
    v.err_k_invum = std::hypot(budget.stat_k_invum, budget.cal_k_invum);
    const double rel = 2.0 * std::hypot(v.err_x_um / dx_um, v.err_k_invum / dk_invum);
    v.err_total = rel * v.product;
    // Split the quadrature back into its statistical and calibration parts.
    const double rel_stat = 2.0 * std::hypot(budget.stat_x_um / dx_um, budget.stat_k_invum / dk_invum);
    const double rel_sys = 2.0 * std::hypot(budget.cal_x_um / dx_um, budget.cal_k_invum / dk_invum);
    v.err_stat = rel_stat * v.product;
    v.err_sys = rel_sys * v.product;
    v.significance = v.err_total > 0 ? (1.0 - v.product) / v.err_total : 0.0;
    v.entangled = v.product < 1.0;
    return v;
}

std::string verdict_report(const WitnessVerdict& v) {
    std::ostringstream os;
    os.precision(6);
    os << "dx_infer_um: " << v.dx_infer_um << "\n"
       << "dk_infer_invum: " << v.dk_infer_invum << "\n"
       << "product: " << v.product << "\n"
       << "err_x_um: " << v.err_x_um << "\n"
       << "err_k_invum: " << v.err_k_invum << "\n"
       << "err_stat: " << v.err_stat << "\n"
       << "err_sys: " << v.err_sys << "\n"
       << "err_total: " << v.err_total << "\n"
       << "significance: " << v.significance << "\n"
       << "entangled: " << (v.entangled ? "yes" : "no") << "\n";
    return os.str();
}

std::string verdict_summary_line(const WitnessVerdict& v) {
    std::ostringstream os;
    os.precision(6);
    os << v.dx_infer_um << ',' << v.dk_infer_invum << ',' << v.product << ',' << v.err_total
       << ',' << v.significance << ',' << (v.entangled ? 1 : 0);
    return os.str();
}

}  // namespace epg
