#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ipn/seg_core.hpp"

namespace ipn::png {

using Bytes = std::vector<std::uint8_t>;

/// The 256-entry indexed palette used by DAVIS annotations.
const std::array<std::array<std::uint8_t, 3>, 256>& davis_palette();

/// Indexed PNG, palette index = object label.
Bytes encode_labels(const LabelMask& labels);
/// 16-bit grayscale PNG, value = round(p * 65535).
Bytes encode_prob(const ProbMask& mask);
/// 8-bit RGB PNG.
Bytes encode_frame(const Frame& frame);

/// Reads an indexed or 8-bit grayscale PNG into raw labels.
LabelMask decode_labels(std::span<const std::uint8_t> bytes, int num_objects = 0);
ProbMask decode_prob(std::span<const std::uint8_t> bytes, int object_id = 1);
/// Any PNG color type; expanded to RGB in [0,1].
Frame decode_frame(std::span<const std::uint8_t> bytes, int index = 0);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace ipn::png
