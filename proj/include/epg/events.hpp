#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace epg {

// Timepix-style electron detection event. tot is carried for completeness
// but never used by the analysis.
struct ElectronEvent {
    uint16_t x_px = 0;
    uint16_t y_px = 0;
    int64_t toa_ns = 0;
    uint16_t tot = 0;

    friend bool operator==(const ElectronEvent&, const ElectronEvent&) = default;
};

struct PhotonEvent {
    int64_t t_ns = 0;
    friend bool operator==(const PhotonEvent&, const PhotonEvent&) = default;
};

struct EventPackage {
    std::vector<ElectronEvent> events;
    size_t index = 0;
};

struct ClockSync {
    int64_t offset_ns = 0;
    int64_t expected_delay_ns = -40;
};

constexpr size_t kDefaultPackageSize = 650000;

// Binary electron file, little-endian:
//   magic "EPEV", u16 version=1, u16 grid=256, u64 count,
//   then count records of {u16 x, u16 y, i64 toa_ns, u16 tot} (14 bytes).
// Photon file: magic "PHEV", u16 version=1, u64 count, records of {i64 t_ns}.
std::vector<ElectronEvent> read_electron_file(const std::string& path);
void write_electron_file(const std::string& path, const std::vector<ElectronEvent>& events);
std::vector<PhotonEvent> read_photon_file(const std::string& path);
void write_photon_file(const std::string& path, const std::vector<PhotonEvent>& photons);

// CSV import, header "x,y,toa_ns,tot" / "t_ns".
std::vector<ElectronEvent> read_electron_csv(const std::string& path);
std::vector<PhotonEvent> read_photon_csv(const std::string& path);

// Stable sort by time of arrival; detector packets may interleave.
void sort_electrons(std::vector<ElectronEvent>& events);
bool is_time_sorted(const std::vector<ElectronEvent>& events);
bool is_time_sorted(const std::vector<PhotonEvent>& photons);

// Partition a time-sorted stream into fixed-size packages (last one may be
// shorter). Throws on unsorted input.
std::vector<EventPackage> split_packages(const std::vector<ElectronEvent>& events,
                                         size_t package_size = kDefaultPackageSize);

// Shift photon timestamps by sync.offset_ns. Throws on i64 overflow.
std::vector<PhotonEvent> apply_clock_sync(const std::vector<PhotonEvent>& photons,
                                          const ClockSync& sync);

}  // namespace epg
