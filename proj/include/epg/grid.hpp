#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace epg {

// Row-major 2D grid of doubles. The detector is 256x256 but nothing in the
// math assumes that; calibration code works on arbitrary sizes.
class Grid {
public:
    Grid() = default;
    Grid(int nx, int ny, double fill = 0.0)
        : nx_(nx), ny_(ny), data_(static_cast<size_t>(nx) * ny, fill) {
        if (nx <= 0 || ny <= 0) throw std::invalid_argument("Grid: non-positive size");
    }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    size_t size() const { return data_.size(); }

    double& at(int x, int y) { return data_[static_cast<size_t>(y) * nx_ + x]; }
    double at(int x, int y) const { return data_[static_cast<size_t>(y) * nx_ + x]; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < nx_ && y >= 0 && y < ny_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double total() const {
        double s = 0.0;
        for (double v : data_) s += v;
        return s;
    }
    double max_value() const {
        double m = 0.0;
        for (double v : data_) m = v > m ? v : m;
        return m;
    }

    bool same_shape(const Grid& o) const { return nx_ == o.nx_ && ny_ == o.ny_; }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.nx_ == b.nx_ && a.ny_ == b.ny_ && a.data_ == b.data_;
    }

private:
    int nx_ = 0;
    int ny_ = 0;
    std::vector<double> data_;
};

// Portable grid file: text header lines ("epg-grid 1", "nx ...", "ny ...",
// free-form key/value metadata, "data" sentinel) followed by row-major ASCII
// values. Metadata keys are carried verbatim.
struct GridFile {
    Grid grid;
    std::vector<std::pair<std::string, std::string>> meta;
};

void write_grid_file(const std::string& path, const Grid& g,
                     const std::vector<std::pair<std::string, std::string>>& meta = {});
GridFile read_grid_file(const std::string& path);

// 16-bit PGM, max value scaled to 65535. Viewing aid only.
void write_pgm16(const std::string& path, const Grid& g);

constexpr int kDetectorGrid = 256;
constexpr double kCenterPx = 127.0;

}  // namespace epg
