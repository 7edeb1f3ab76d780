#include "focusmix/numerics/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace focusmix::numerics {
namespace {

void put_f32_le(std::string& out, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xFF));
}

float get_f32_le(const unsigned char* p) {
  std::uint32_t u = 0;
  for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const std::string& path, const ParamStore<float>& store,
                     const CheckpointInfo& info) {
  nlohmann::ordered_json header;
  header["format"] = kCheckpointFormat;
  header["config_hash"] = info.config_hash;
  header["step"] = info.step;
  header["meta"] = info.meta;
  header["params"] = nlohmann::ordered_json::array();
  std::string blobs;
  for (const auto& [name, e] : store) {
    nlohmann::ordered_json p;
    p["name"] = name;
    p["shape"] = e.value.shape();
    p["dtype"] = "f32";
    p["offset"] = blobs.size();
    header["params"].push_back(p);
    for (float v : e.value.values()) put_f32_le(blobs, v);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot open " + tmp + " for writing");
    const std::string head = header.dump();
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.put('\n');
    out.write(blobs.data(), static_cast<std::streamsize>(blobs.size()));
    if (!out) throw FileError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FileError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open checkpoint " + path);
  std::string head;
  if (!std::getline(in, head)) throw ParseError(path + ": missing checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": bad checkpoint header: " + e.what());
  }
  if (header.value("format", "") != kCheckpointFormat)
    throw ParseError(path + ": unsupported checkpoint format '" + header.value("format", "") + "'");
  std::ostringstream rest;
  rest << in.rdbuf();
  const std::string blobs = rest.str();

  LoadedCheckpoint out;
  out.info.config_hash = header.value("config_hash", "");
  out.info.step = header.value("step", std::uint64_t{0});
  out.info.meta = header.value("meta", nlohmann::json::object());
  for (const auto& p : header.at("params")) {
    const std::string name = p.at("name");
    if (p.at("dtype") != "f32") throw ParseError(path + ": parameter " + name + " is not f32");
    Shape shape = p.at("shape").get<Shape>();
    const std::size_t offset = p.at("offset").get<std::size_t>();
    const std::size_t n = shape_size(shape);
    if (offset + 4 * n > blobs.size()) throw ParseError(path + ": truncated blob for " + name);
    Tensor<float> t(std::move(shape));
    const auto* base = reinterpret_cast<const unsigned char*>(blobs.data()) + offset;
    for (std::size_t i = 0; i < n; ++i) t[i] = get_f32_le(base + 4 * i);
    out.store.add(name, std::move(t));
  }
  return out;
}

}  // namespace focusmix::numerics
