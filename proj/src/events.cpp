#include "epg/events.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace epg {

namespace {

constexpr uint16_t kFormatVersion = 1;
constexpr uint16_t kGridSize = 256;

void put_u16(std::string& buf, uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>(v >> 8));
}

void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i64(std::string& buf, int64_t v) { put_u64(buf, static_cast<uint64_t>(v)); }

uint16_t get_u16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

uint64_t get_u64(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

int64_t get_i64(const unsigned char* p) { return static_cast<int64_t>(get_u64(p)); }

std::string read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_all(const std::string& path, const std::string& buf) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

void check_header(const std::string& buf, const char* magic, const std::string& path,
                  size_t header_size) {
    if (buf.size() < header_size) throw std::runtime_error("truncated header: " + path);
    if (std::memcmp(buf.data(), magic, 4) != 0)
        throw std::runtime_error(std::string("bad magic (expected ") + magic + "): " + path);
    const uint16_t version = get_u16(reinterpret_cast<const unsigned char*>(buf.data()) + 4);
    if (version != kFormatVersion)
        throw std::runtime_error("unsupported version " + std::to_string(version) + ": " + path);
}

}  // namespace

std::vector<ElectronEvent> read_electron_file(const std::string& path) {
    const std::string buf = read_all(path);
    check_header(buf, "EPEV", path, 16);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    const uint64_t count = get_u64(p + 8);
    if (buf.size() != 16 + count * 14)
        throw std::runtime_error("truncated record data: " + path);
    std::vector<ElectronEvent> events(count);
    const unsigned char* r = p + 16;
    for (uint64_t i = 0; i < count; ++i, r += 14) {
        events[i].x_px = get_u16(r);
        events[i].y_px = get_u16(r + 2);
        events[i].toa_ns = get_i64(r + 4);
        events[i].tot = get_u16(r + 12);
    }
    return events;
}

void write_electron_file(const std::string& path, const std::vector<ElectronEvent>& events) {
    std::string buf;
    buf.reserve(16 + events.size() * 14);
    buf.append("EPEV");
    put_u16(buf, kFormatVersion);
    put_u16(buf, kGridSize);
    put_u64(buf, events.size());
    for (const auto& e : events) {
        put_u16(buf, e.x_px);
        put_u16(buf, e.y_px);
        put_i64(buf, e.toa_ns);
        put_u16(buf, e.tot);
    }
    write_all(path, buf);
}

std::vector<PhotonEvent> read_photon_file(const std::string& path) {
    const std::string buf = read_all(path);
    check_header(buf, "PHEV", path, 14);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    const uint64_t count = get_u64(p + 6);
    if (buf.size() != 14 + count * 8)
        throw std::runtime_error("truncated record data: " + path);
    std::vector<PhotonEvent> photons(count);
    for (uint64_t i = 0; i < count; ++i) photons[i].t_ns = get_i64(p + 14 + 8 * i);
    return photons;
}

void write_photon_file(const std::string& path, const std::vector<PhotonEvent>& photons) {
    std::string buf;
    buf.reserve(14 + photons.size() * 8);
    buf.append("PHEV");
    put_u16(buf, kFormatVersion);
    put_u64(buf, photons.size());
    for (const auto& ph : photons) put_i64(buf, ph.t_ns);
    write_all(path, buf);
}

std::vector<ElectronEvent> read_electron_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "x,y,toa_ns,tot")
        throw std::runtime_error("expected header 'x,y,toa_ns,tot': " + path);
    std::vector<ElectronEvent> events;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        long x, y, tot;
        long long toa;
        if (!(ss >> x >> y >> toa >> tot))
            throw std::runtime_error("bad CSV record: " + line);
        events.push_back({static_cast<uint16_t>(x), static_cast<uint16_t>(y),
                          static_cast<int64_t>(toa), static_cast<uint16_t>(tot)});
    }
    return events;
}

std::vector<PhotonEvent> read_photon_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "t_ns")
        throw std::runtime_error("expected header 't_ns': " + path);
    std::vector<PhotonEvent> photons;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        photons.push_back({static_cast<int64_t>(std::stoll(line))});
    }
    return photons;
}

void sort_electrons(std::vector<ElectronEvent>& events) {
    std::stable_sort(events.begin(), events.end(),
                     [](const ElectronEvent& a, const ElectronEvent& b) { return a.toa_ns < b.toa_ns; });
}

bool is_time_sorted(const std::vector<ElectronEvent>& events) {
    return std::is_sorted(events.begin(), events.end(),
                          [](const ElectronEvent& a, const ElectronEvent& b) { return a.toa_ns < b.toa_ns; });
}

bool is_time_sorted(const std::vector<PhotonEvent>& photons) {
    return std::is_sorted(photons.begin(), photons.end(),
                          [](const PhotonEvent& a, const PhotonEvent& b) { return a.t_ns < b.t_ns; });
}

std::vector<EventPackage> split_packages(const std::vector<ElectronEvent>& events,
                                         size_t package_size) {
    if (package_size < 1) throw std::invalid_argument("split_packages: package_size < 1");
    if (!is_time_sorted(events)) throw std::invalid_argument("split_packages: unsorted input");
    std::vector<EventPackage> packages;
    for (size_t i = 0; i < events.size(); i += package_size) {
        EventPackage pkg;
        pkg.index = packages.size();
        const size_t n = std::min(package_size, events.size() - i);
        pkg.events.assign(events.begin() + i, events.begin() + i + n);
        packages.push_back(std::move(pkg));
    }
    return packages;
}

std::vector<PhotonEvent> apply_clock_sync(const std::vector<PhotonEvent>& photons,
                                          const ClockSync& sync) {
    std::vector<PhotonEvent> out;
    out.reserve(photons.size());
    for (const auto& ph : photons) {
        const int64_t t = ph.t_ns;
        const int64_t o = sync.offset_ns;
        if ((o > 0 && t > std::numeric_limits<int64_t>::max() - o) ||
            (o < 0 && t < std::numeric_limits<int64_t>::min() - o))
            throw std::overflow_error("apply_clock_sync: timestamp overflow");
        out.push_back({t + o});
    }
    return out;
}

}  // namespace epg
