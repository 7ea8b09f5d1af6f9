#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "urbanstep/core/types.hpp"

namespace urbanstep {

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws a Protocol error on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

// 8-bit RGB PNG, no alpha.
std::vector<std::uint8_t> encode_png(const CanonicalImage& img);

// Accepts PNG (any color type, alpha dropped) or JPEG. The result carries
// the given kind; throws a Validation error for undecodable bytes.
CanonicalImage decode_image(std::span<const std::uint8_t> bytes, ImageKind kind, std::string tile_id = {});

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
// Writes to a sibling temp file then renames, so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

CanonicalImage read_png(const std::filesystem::path& path, ImageKind kind, std::string tile_id = {});
void write_png(const std::filesystem::path& path, const CanonicalImage& img);

}  // namespace urbanstep
