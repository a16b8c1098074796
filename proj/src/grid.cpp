#include "epg/grid.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace epg {

void write_grid_file(const std::string& path, const Grid& g,
                     const std::vector<std::pair<std::string, std::string>>& meta) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "epg-grid 1\n";
    f << "nx " << g.nx() << "\n";
    f << "ny " << g.ny() << "\n";
    for (const auto& [k, v] : meta) f << k << " " << v << "\n";
    f << "data\n";
    f.precision(17);
    for (int y = 0; y < g.ny(); ++y) {
        for (int x = 0; x < g.nx(); ++x) {
            f << g.at(x, y);
            f << (x + 1 == g.nx() ? '\n' : ' ');
        }
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

GridFile read_grid_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "epg-grid 1")
        throw std::runtime_error("bad grid file header: " + path);
    int nx = -1, ny = -1;
    GridFile out;
    while (std::getline(f, line)) {
        if (line == "data") break;
        std::istringstream ss(line);
        std::string key, value;
        ss >> key;
        std::getline(ss, value);
        if (!value.empty() && value.front() == ' ') value.erase(0, 1);
        if (key == "nx") nx = std::stoi(value);
        else if (key == "ny") ny = std::stoi(value);
        else out.meta.emplace_back(key, value);
    }
    if (nx <= 0 || ny <= 0) throw std::runtime_error("grid file missing dimensions: " + path);
    out.grid = Grid(nx, ny);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            if (!(f >> out.grid.at(x, y)))
                throw std::runtime_error("truncated grid data: " + path);
    return out;
}

void write_pgm16(const std::string& path, const Grid& g) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "P5\n" << g.nx() << " " << g.ny() << "\n65535\n";
    const double m = g.max_value();
    const double s = m > 0 ? 65535.0 / m : 0.0;
    for (int y = 0; y < g.ny(); ++y) {
        for (int x = 0; x < g.nx(); ++x) {
            auto v = static_cast<uint16_t>(std::lround(g.at(x, y) * s));
            unsigned char b[2] = {static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v & 0xff)};
            f.write(reinterpret_cast<char*>(b), 2);
        }
    }
}

}  // namespace epg
