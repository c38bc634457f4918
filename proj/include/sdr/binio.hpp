#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace sdr::binio {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

void append_u16(std::vector<std::uint8_t>& out, std::uint16_t v);
void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void append_f32(std::vector<std::uint8_t>& out, float v);
std::uint16_t load_u16(const std::uint8_t* p);
std::uint32_t load_u32(const std::uint8_t* p);
float load_f32(const std::uint8_t* p);

/// Container used by .fmx, .nrm and (after its magic) .ckpt files:
/// one line of compact JSON, '\n', then little-endian float32 values.
struct HeaderPayload {
  nlohmann::json header;
  std::vector<float> payload;
};

std::vector<std::uint8_t> encode_header_payload(const nlohmann::json& header,
                                                std::span<const float> payload);

/// Parses from `offset`; the header must carry `payload_count`, and the byte
/// count after the header must match it exactly. Throws FormatError.
HeaderPayload decode_header_payload(std::span<const std::uint8_t> bytes,
                                    std::size_t offset = 0);

}  // namespace sdr::binio
