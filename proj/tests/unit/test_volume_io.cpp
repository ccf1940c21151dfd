#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "priorwarp/errors.hpp"
#include "priorwarp/volume_io.hpp"

using namespace pw;

namespace {

std::string serialize(const Volume& v) {
    std::ostringstream os;
    write_volume(v, os);
    return os.str();
}

std::string header_of(const std::string& s) { return s.substr(8, s.find('\n', 8) - 8); }

void expect_format_error(const std::string& bytes, const std::string& needle) {
    std::istringstream is(bytes);
    try {
        read_volume(is);
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
}

} // namespace

TEST_CASE("f32 round trip is bit exact for f32-representable values") {
    std::mt19937_64 rng(11);
    Volume v = oracle::random_volume(2, {4, 4, 4}, -3, 3, rng);
    for (double& x : v.data()) x = static_cast<double>(static_cast<float>(x));
    v.set_spacing({0.5, 1.0, 2.5});
    std::istringstream is(serialize(v));
    const Volume r = std::get<Volume>(read_volume(is));
    CHECK(r.channels() == 2);
    CHECK(r.dims() == v.dims());
    CHECK(r.spacing() == v.spacing());
    CHECK(r.data() == v.data());
}

TEST_CASE("u8 label map round trip") {
    std::mt19937_64 rng(12);
    const LabelMap m = oracle::random_labels({3, 5, 2}, 4, 0.5, rng);
    std::ostringstream os;
    write_volume(m, os);
    std::istringstream is(os.str());
    CHECK(std::get<LabelMap>(read_volume(is)) == m);
}

TEST_CASE("header layout") {
    const std::string s = serialize(Volume(1, {2, 3, 4}));
    CHECK(s.substr(0, 8) == std::string(kVolumeMagic));
    const std::string h = header_of(s);
    CHECK(h.find("\"dims\":[1,2,3,4]") != std::string::npos);
    CHECK(h.find("\"dtype\":\"f32\"") != std::string::npos);
    CHECK(s.size() == 8 + h.size() + 1 + 4 * 24);
}

TEST_CASE("malformed files name the offending field") {
    const std::string good = serialize(Volume(1, {2, 2, 2}));
    std::string bad_magic = good;
    bad_magic[0] = 'X';
    expect_format_error(bad_magic, "magic");
    expect_format_error(good.substr(0, good.size() - 3), "truncated");
    expect_format_error(good + "abcd", "payload");

    const std::size_t nl = good.find('\n', 8);
    const std::string payload = good.substr(nl + 1);
    auto with_header = [&](const std::string& h) { return good.substr(0, 8) + h + "\n" + payload; };
    expect_format_error(with_header(R"({"dims":[1,2,2,2],"dtype":"f64","spacing":[1,1,1]})"), "dtype");
    expect_format_error(with_header(R"({"dims":[1,2,2],"dtype":"f32","spacing":[1,1,1]})"), "dims");
    expect_format_error(with_header(R"({"dims":[1,2,2,2],"dtype":"f32","spacing":[1,-1,1]})"), "spacing");
    expect_format_error(with_header(R"({"dims":[1,2,2,3],"dtype":"f32","spacing":[1,1,1]})"), "truncated");
    expect_format_error(with_header(R"({"dims":[1,2,2,1],"dtype":"f32","spacing":[1,1,1]})"), "payload");
    expect_format_error(with_header("{not json"), "JSON");
    expect_format_error(with_header(R"({"dims":[2,2,2,1],"dtype":"u8","spacing":[1,1,1]})"), "u8");
    expect_format_error(good.substr(0, 12), "header");
}

TEST_CASE("non-finite payload is rejected") {
    Volume v(1, {1, 1, 2});
    std::string s = serialize(v);
    const float inf = INFINITY;
    std::memcpy(s.data() + s.size() - 4, &inf, 4);
    expect_format_error(s, "finite");
}

TEST_CASE("typed readers") {
    const auto dir = std::filesystem::temp_directory_path() / "pw_io_test";
    std::filesystem::create_directories(dir);
    write_volume(Volume(1, {2, 2, 2}), dir / "r.pwv");
    write_volume(LabelMap({2, 2, 2}), dir / "l.pwv");
    CHECK_NOTHROW(read_real_volume(dir / "r.pwv"));
    CHECK_NOTHROW(read_label_map(dir / "l.pwv"));
    CHECK_THROWS_AS(read_real_volume(dir / "l.pwv"), FormatError);
    CHECK_THROWS_AS(read_label_map(dir / "r.pwv"), FormatError);
    CHECK_THROWS_AS(read_volume(dir / "missing.pwv"), FormatError);
    std::filesystem::remove_all(dir);
}
