#include "sdr/binio.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "sdr/errors.hpp"

namespace sdr::binio {

static_assert(std::endian::native == std::endian::little,
              "file formats are written assuming a little-endian host");

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void append_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void append_f32(std::vector<std::uint8_t>& out, float v) {
  append_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint16_t load_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t load_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float load_f32(const std::uint8_t* p) { return std::bit_cast<float>(load_u32(p)); }

std::vector<std::uint8_t> encode_header_payload(const nlohmann::json& header,
                                                std::span<const float> payload) {
  nlohmann::json h = header;
  h["payload_count"] = payload.size();
  const std::string text = h.dump();
  std::vector<std::uint8_t> out(text.begin(), text.end());
  out.push_back('\n');
  out.reserve(out.size() + 4 * payload.size());
  for (float v : payload) append_f32(out, v);
  return out;
}

HeaderPayload decode_header_payload(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset > bytes.size()) throw FormatError("file shorter than its magic");
  const auto* begin = bytes.data() + offset;
  const auto* end = bytes.data() + bytes.size();
  const auto* nl = std::find(begin, end, static_cast<std::uint8_t>('\n'));
  if (nl == end) throw FormatError("missing header terminator");
  HeaderPayload out;
  try {
    out.header = nlohmann::json::parse(begin, nl);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad header: ") + e.what());
  }
  if (!out.header.is_object() || !out.header.contains("payload_count"))
    throw FormatError("header lacks payload_count");
  const auto count = out.header["payload_count"].get<std::size_t>();
  const std::size_t avail = static_cast<std::size_t>(end - (nl + 1));
  if (avail != 4 * count)
    throw FormatError("payload size mismatch: expected " + std::to_string(4 * count) +
                      " bytes, found " + std::to_string(avail));
  out.payload.resize(count);
  for (std::size_t i = 0; i < count; ++i) out.payload[i] = load_f32(nl + 1 + 4 * i);
  return out;
}

}  // namespace sdr::binio
