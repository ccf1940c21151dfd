#pragma once

// PWV1 volume files:
//   8-byte magic "PWVOL1\n\0"
//   one JSON header line: {"dims":[C,H,W,D],"dtype":"f32"|"u8","spacing":[sh,sw,sd]}\n
//   raw little-endian payload in (c, h, w, d) order, d fastest.
// Real volumes are stored as f32, label maps as u8 with C = 1.

#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <variant>

#include "priorwarp/volume.hpp"

namespace pw {

inline constexpr std::string_view kVolumeMagic{"PWVOL1\n\0", 8};
inline constexpr std::string_view kVolumeFormatVersion = "PWV1";

using AnyVolume = std::variant<Volume, LabelMap>;

void write_volume(const Volume& vol, std::ostream& os);
void write_volume(const LabelMap& lm, std::ostream& os);
AnyVolume read_volume(std::istream& is);

void write_volume(const Volume& vol, const std::filesystem::path& path);
void write_volume(const LabelMap& lm, const std::filesystem::path& path);
AnyVolume read_volume(const std::filesystem::path& path);

// Typed readers; FormatError if the file holds the other dtype.
Volume read_real_volume(const std::filesystem::path& path);
LabelMap read_label_map(const std::filesystem::path& path);

} // namespace pw
