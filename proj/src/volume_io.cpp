#include "priorwarp/volume_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include <json.hpp>

#include "priorwarp/errors.hpp"

namespace pw {
namespace {

using nlohmann::json;

constexpr std::size_t kMaxHeaderBytes = 1 << 16;

json header_for(std::size_t channels, const Dims& dims, const Spacing& spacing, const char* dtype) {
    return json{{"dims", {channels, dims.h, dims.w, dims.d}}, {"dtype", dtype}, {"spacing", {spacing[0], spacing[1], spacing[2]}}};
}

void write_header(std::ostream& os, const json& header) {
    os.write(kVolumeMagic.data(), static_cast<std::streamsize>(kVolumeMagic.size()));
    const std::string line = header.dump() + "\n";
    os.write(line.data(), static_cast<std::streamsize>(line.size()));
}

std::uint32_t to_little_endian(std::uint32_t x) {
    if constexpr (std::endian::native == std::endian::big) {
        x = ((x & 0xFF000000u) >> 24) | ((x & 0x00FF0000u) >> 8) | ((x & 0x0000FF00u) << 8) | ((x & 0x000000FFu) << 24);
    }
    return x;
}

std::size_t positive_size(const json& j, const char* field) {
    if (!j.is_number_integer() || j.get<long long>() <= 0) {
        throw FormatError(std::string("PWV1 header: '") + field + "' entries must be positive integers");
    }
    return static_cast<std::size_t>(j.get<long long>());
}

} // namespace

void write_volume(const Volume& vol, std::ostream& os) {
    vol.check_finite("write_volume");
    write_header(os, header_for(vol.channels(), vol.dims(), vol.spacing(), "f32"));
    std::string payload(vol.data().size() * 4, '\0');
    for (std::size_t i = 0; i < vol.data().size(); ++i) {
        const float f = static_cast<float>(vol.data()[i]);
        const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(f));
        std::memcpy(payload.data() + 4 * i, &bits, 4);
    }
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!os) throw FormatError("PWV1: write failed");
}

void write_volume(const LabelMap& lm, std::ostream& os) {
    write_header(os, header_for(1, lm.dims(), lm.spacing(), "u8"));
    os.write(reinterpret_cast<const char*>(lm.labels().data()), static_cast<std::streamsize>(lm.labels().size()));
    if (!os) throw FormatError("PWV1: write failed");
}

AnyVolume read_volume(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (is.gcount() != 8 || std::string_view(magic, 8) != kVolumeMagic) throw FormatError("PWV1: bad magic");

    std::string line;
    char ch = 0;
    while (is.get(ch) && ch != '\n') {
        line.push_back(ch);
        if (line.size() > kMaxHeaderBytes) throw FormatError("PWV1: header line too long");
    }
    if (ch != '\n') throw FormatError("PWV1: header line not terminated");

    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("PWV1 header: invalid JSON: ") + e.what());
    }
    if (!header.is_object()) throw FormatError("PWV1 header: not a JSON object");
    if (!header.contains("dims") || !header["dims"].is_array() || header["dims"].size() != 4) {
        throw FormatError("PWV1 header: 'dims' must be an array [C,H,W,D]");
    }
    if (!header.contains("dtype") || !header["dtype"].is_string()) throw FormatError("PWV1 header: missing 'dtype'");
    const std::size_t channels = positive_size(header["dims"][0], "dims");
    const Dims dims{positive_size(header["dims"][1], "dims"), positive_size(header["dims"][2], "dims"),
                    positive_size(header["dims"][3], "dims")};
    Spacing spacing{1.0, 1.0, 1.0};
    if (header.contains("spacing")) {
        const json& s = header["spacing"];
        if (!s.is_array() || s.size() != 3) throw FormatError("PWV1 header: 'spacing' must be an array of 3 numbers");
        for (std::size_t i = 0; i < 3; ++i) {
            if (!s[i].is_number() || !(s[i].get<double>() > 0.0) || !std::isfinite(s[i].get<double>())) {
                throw FormatError("PWV1 header: 'spacing' entries must be positive finite numbers");
            }
            spacing[i] = s[i].get<double>();
        }
    }
    const std::string dtype = header["dtype"].get<std::string>();
    std::size_t elem = 0;
    if (dtype == "f32") {
        elem = 4;
    } else if (dtype == "u8") {
        elem = 1;
        if (channels != 1) throw FormatError("PWV1 header: 'dims' channel count must be 1 for dtype u8");
    } else {
        throw FormatError("PWV1 header: unknown 'dtype' \"" + dtype + "\"");
    }

    const std::size_t count = channels * dims.voxels();
    if (count > std::numeric_limits<std::size_t>::max() / elem) throw FormatError("PWV1 header: 'dims' too large");
    const std::size_t expected = count * elem;
    std::string payload(expected, '\0');
    is.read(payload.data(), static_cast<std::streamsize>(expected));
    const auto got = static_cast<std::size_t>(is.gcount());
    if (got != expected) {
        throw FormatError("PWV1 payload: truncated, 'dims' require " + std::to_string(expected) + " bytes but only " +
                          std::to_string(got) + " present");
    }
    if (is.peek() != std::char_traits<char>::eof()) {
        throw FormatError("PWV1 payload: length exceeds the product of 'dims' (" + std::to_string(expected) + " bytes)");
    }

    if (elem == 1) {
        std::vector<std::uint8_t> labels(payload.begin(), payload.end());
        return LabelMap(dims, std::move(labels), spacing);
    }
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, payload.data() + 4 * i, 4);
        const float f = std::bit_cast<float>(to_little_endian(bits));
        if (!std::isfinite(f)) throw FormatError("PWV1 payload: non-finite value at index " + std::to_string(i));
        data[i] = static_cast<double>(f);
    }
    return Volume(channels, dims, std::move(data), spacing);
}

void write_volume(const Volume& vol, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    write_volume(vol, os);
}

void write_volume(const LabelMap& lm, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    write_volume(lm, os);
}

AnyVolume read_volume(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path.string());
    return read_volume(is);
}

Volume read_real_volume(const std::filesystem::path& path) {
    auto v = read_volume(path);
    if (auto* vol = std::get_if<Volume>(&v)) return std::move(*vol);
    throw FormatError(path.string() + ": expected dtype f32, found u8");
}

LabelMap read_label_map(const std::filesystem::path& path) {
    auto v = read_volume(path);
    if (auto* lm = std::get_if<LabelMap>(&v)) return std::move(*lm);
    throw FormatError(path.string() + ": expected dtype u8, found f32");
}

} // namespace pw
