#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <random>

#include "epg/events.hpp"
#include "helpers.hpp"

using namespace epg;
using epg::test::TempFile;

namespace {

std::vector<ElectronEvent> random_electrons(size_t n, uint64_t seed, bool sorted = true) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> px(0, 255);
    std::uniform_int_distribution<int64_t> t(-1000000, 1000000);
    std::uniform_int_distribution<int> tot(0, 1000);
    std::vector<ElectronEvent> out(n);
    for (auto& e : out)
        e = {static_cast<uint16_t>(px(rng)), static_cast<uint16_t>(px(rng)), t(rng),
             static_cast<uint16_t>(tot(rng))};
    if (sorted) sort_electrons(out);
    return out;
}

}  // namespace

TEST_CASE("electron file: empty sequence round-trips as 16-byte header-only file") {
    TempFile f(".epev");
    write_electron_file(f.path(), {});
    CHECK(std::filesystem::file_size(f.path()) == 16);
    CHECK(read_electron_file(f.path()).empty());
}

TEST_CASE("electron file: single record round-trip") {
    TempFile f(".epev");
    const std::vector<ElectronEvent> one = {{10, 20, 1000, 5}};
    write_electron_file(f.path(), one);
    CHECK(std::filesystem::file_size(f.path()) == 16 + 14);
    CHECK(read_electron_file(f.path()) == one);
}

TEST_CASE("electron file: write-read-write gives identical bytes (1e6 records)") {
    const auto events = random_electrons(1000000, 42);
    TempFile a(".epev"), b(".epev");
    write_electron_file(a.path(), events);
    const auto back = read_electron_file(a.path());
    CHECK(back == events);
    write_electron_file(b.path(), back);
    CHECK(test::slurp(a.path()) == test::slurp(b.path()));
}

TEST_CASE("photon file round-trip") {
    TempFile f(".phev");
    write_photon_file(f.path(), {});
    CHECK(read_photon_file(f.path()).empty());
    const std::vector<PhotonEvent> ps = {{-40}, {0}, {123456789012345}};
    write_photon_file(f.path(), ps);
    CHECK(read_photon_file(f.path()) == ps);
}

TEST_CASE("electron file: bad magic, truncation and version mismatch reported distinctly") {
    const std::vector<ElectronEvent> events = {{1, 2, 3, 4}, {5, 6, 7, 8}};
    TempFile f(".epev");
    write_electron_file(f.path(), events);
    auto bytes = test::slurp(f.path());

    auto write_bytes = [](const std::string& path, const std::vector<char>& b, size_t n) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(b.data(), static_cast<std::streamsize>(n));
    };

    std::string msg_magic, msg_trunc, msg_version;
    {
        auto bad = bytes;
        bad[0] = 'X';
        TempFile g(".epev");
        write_bytes(g.path(), bad, bad.size());
        try {
            read_electron_file(g.path());
            FAIL("bad magic not detected");
        } catch (const std::exception& e) {
            msg_magic = e.what();
        }
    }
    {
        TempFile g(".epev");
        write_bytes(g.path(), bytes, bytes.size() - 5);  // cut into the last record
        try {
            read_electron_file(g.path());
            FAIL("truncation not detected");
        } catch (const std::exception& e) {
            msg_trunc = e.what();
        }
    }
    {
        auto bad = bytes;
        bad[4] = 99;  // version u16 little-endian
        TempFile g(".epev");
        write_bytes(g.path(), bad, bad.size());
        try {
            read_electron_file(g.path());
            FAIL("version mismatch not detected");
        } catch (const std::exception& e) {
            msg_version = e.what();
        }
    }
    CHECK(msg_magic != msg_trunc);
    CHECK(msg_magic != msg_version);
    CHECK(msg_trunc != msg_version);
}

TEST_CASE("CSV import matches binary contents") {
    TempFile f(".csv");
    {
        std::ofstream out(f.path());
        out << "x,y,toa_ns,tot\n10,20,1000,5\n3,4,-7,0\n";
    }
    const auto es = read_electron_csv(f.path());
    REQUIRE(es.size() == 2);
    CHECK(es[0] == ElectronEvent{10, 20, 1000, 5});
    CHECK(es[1] == ElectronEvent{3, 4, -7, 0});

    TempFile g(".csv");
    {
        std::ofstream out(g.path());
        out << "t_ns\n-40\n100\n";
    }
    const auto ps = read_photon_csv(g.path());
    REQUIRE(ps.size() == 2);
    CHECK(ps[0].t_ns == -40);
    CHECK(ps[1].t_ns == 100);
}

TEST_CASE("split_packages: 10 events, size 4 -> packages of 4, 4, 2") {
    auto events = random_electrons(10, 1);
    const auto packages = split_packages(events, 4);
    REQUIRE(packages.size() == 3);
    CHECK(packages[0].events.size() == 4);
    CHECK(packages[1].events.size() == 4);
    CHECK(packages[2].events.size() == 2);
    CHECK(packages[0].index == 0);
    CHECK(packages[2].index == 2);
}

TEST_CASE("split_packages: 650k events at the default size form one package") {
    std::vector<ElectronEvent> events(650000);
    for (size_t i = 0; i < events.size(); ++i) events[i].toa_ns = static_cast<int64_t>(i);
    const auto packages = split_packages(events);
    CHECK(packages.size() == 1);
    CHECK(packages[0].events.size() == 650000);
}

TEST_CASE("split_packages is a partition: flatten(split(s)) == s") {
    for (uint64_t seed : test::kPropertySeeds) {
        const auto events = random_electrons(1000 + 37 * seed, seed);
        for (size_t size : {1, 7, 100, 5000}) {
            const auto packages = split_packages(events, size);
            std::vector<ElectronEvent> flat;
            for (const auto& p : packages)
                flat.insert(flat.end(), p.events.begin(), p.events.end());
            CHECK(flat == events);
        }
    }
}

TEST_CASE("split_packages rejects unsorted input") {
    std::vector<ElectronEvent> events = {{0, 0, 100, 0}, {0, 0, 50, 0}};
    CHECK_THROWS(split_packages(events, 4));
}

TEST_CASE("apply_clock_sync: offset 0 is the identity") {
    const std::vector<PhotonEvent> ps = {{-3}, {0}, {99}};
    CHECK(apply_clock_sync(ps, {0, -40}) == ps);
}

TEST_CASE("apply_clock_sync: offset +40 on {0, 100} -> {40, 140}") {
    const auto out = apply_clock_sync({{0}, {100}}, {40, -40});
    REQUIRE(out.size() == 2);
    CHECK(out[0].t_ns == 40);
    CHECK(out[1].t_ns == 140);
}

TEST_CASE("apply_clock_sync: order-preserving and invertible") {
    for (uint64_t seed : test::kPropertySeeds) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int64_t> t(-1000000, 1000000);
        std::vector<PhotonEvent> ps(500);
        for (auto& p : ps) p.t_ns = t(rng);
        std::sort(ps.begin(), ps.end(), [](auto a, auto b) { return a.t_ns < b.t_ns; });
        const int64_t o = static_cast<int64_t>(seed) * 977 - 1234;
        const auto shifted = apply_clock_sync(ps, {o, -40});
        CHECK(is_time_sorted(shifted));
        CHECK(apply_clock_sync(shifted, {-o, -40}) == ps);
    }
}

TEST_CASE("apply_clock_sync: 64-bit overflow detected") {
    const std::vector<PhotonEvent> ps = {{std::numeric_limits<int64_t>::max() - 10}};
    CHECK_THROWS(apply_clock_sync(ps, {100, -40}));
}

TEST_CASE("sort_electrons is stable on equal timestamps") {
    std::vector<ElectronEvent> events = {
        {1, 0, 50, 0}, {2, 0, 10, 0}, {3, 0, 50, 0}, {4, 0, 10, 0}};
    sort_electrons(events);
    CHECK(is_time_sorted(events));
    CHECK(events[0].x_px == 2);
    CHECK(events[1].x_px == 4);
    CHECK(events[2].x_px == 1);
    CHECK(events[3].x_px == 3);
}
