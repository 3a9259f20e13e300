#include "agg/numeric/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "json.hpp"

#include "agg/error.hpp"

namespace agg::nn {
namespace {

constexpr std::array<char, 8> kMagic = {'A', 'G', 'G', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

double get_f64(const char* p) { return std::bit_cast<double>(get_u64(p)); }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamList& params) {
  nlohmann::json entries = nlohmann::json::array();
  std::string payload;
  std::uint64_t offset = 0;
  for (const ParamTensor* p : params) {
    entries.push_back({{"name", p->name()}, {"shape", p->shape()}, {"offset", offset}, {"count", p->size()}});
    for (double v : p->values()) put_f64(payload, v);
    offset += 8 * p->size();
  }
  const std::string manifest = nlohmann::json{{"format", 1}, {"params", entries}}.dump();
  std::string bytes(kMagic.begin(), kMagic.end());
  put_u64(bytes, manifest.size());
  bytes += manifest;
  bytes += payload;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::io, "short write to checkpoint " + path.string());
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(bytes.size() >= 16 && std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) == 0,
          ErrorKind::parse, "not a checkpoint file: " + path.string());
  const std::uint64_t manifest_len = get_u64(bytes.data() + 8);
  require(16 + manifest_len <= bytes.size(), ErrorKind::parse, "truncated checkpoint manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(16, manifest_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("checkpoint manifest: ") + e.what());
  }
  const std::size_t payload_start = 16 + manifest_len;
  std::vector<CheckpointEntry> entries;
  for (const auto& e : manifest.at("params")) {
    CheckpointEntry entry;
    entry.name = e.at("name").get<std::string>();
    entry.shape = e.at("shape").get<std::vector<std::size_t>>();
    const auto offset = e.at("offset").get<std::uint64_t>();
    const auto count = e.at("count").get<std::uint64_t>();
    require(payload_start + offset + 8 * count <= bytes.size(), ErrorKind::parse,
            "checkpoint payload truncated at '" + entry.name + "'");
    entry.values.resize(count);
    const char* base = bytes.data() + payload_start + offset;
    for (std::uint64_t i = 0; i < count; ++i) entry.values[i] = get_f64(base + 8 * i);
    entries.push_back(std::move(entry));
  }
  return entries;
}

void load_checkpoint(const std::filesystem::path& path, const ParamList& params) {
  auto entries = read_checkpoint(path);
  std::unordered_map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name.emplace(e.name, &e);
  for (ParamTensor* p : params) {
    auto it = by_name.find(p->name());
    require(it != by_name.end(), ErrorKind::parse, "checkpoint has no parameter '" + p->name() + "'");
    require(it->second->shape == p->shape(), ErrorKind::dimension,
            "checkpoint shape mismatch for '" + p->name() + "'");
    p->set_values(it->second->values);
  }
}

}  // namespace agg::nn
