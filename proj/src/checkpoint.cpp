#include "dmtf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "dmtf/errors.hpp"

namespace dmtf::nd {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& weights_path,
                     const std::vector<NamedParam>& tensors, const nlohmann::json& config) {
  nlohmann::json manifest;
  manifest["format"] = "dmtf.checkpoint.v1";
  manifest["config"] = config;
  nlohmann::json entries = nlohmann::json::array();

  std::string blob;
  size_t offset = 0;
  for (const NamedParam& p : tensors) {
    nlohmann::json e;
    e["name"] = p.name;
    e["shape"] = p.value.shape();
    e["dtype"] = "f32";
    e["byte_offset"] = offset;
    entries.push_back(e);
    for (double v : p.value.data()) {
      const float f = static_cast<float>(v);
      char buf[sizeof(float)];
      std::memcpy(buf, &f, sizeof(float));
      blob.append(buf, sizeof(float));
    }
    offset += p.value.data().size() * sizeof(float);
  }
  manifest["tensors"] = std::move(entries);

  write_file(manifest_path, manifest.dump(2) + "\n");
  write_file(weights_path, blob);
}

nlohmann::json read_manifest(const std::filesystem::path& manifest_path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!manifest.is_object() || manifest.value("format", "") != "dmtf.checkpoint.v1" ||
      !manifest.contains("tensors") || !manifest["tensors"].is_array()) {
    throw DataError("not a checkpoint manifest: " + manifest_path.string());
  }
  return manifest;
}

void load_checkpoint(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& weights_path, std::vector<NamedParam>& into) {
  const nlohmann::json manifest = read_manifest(manifest_path);
  const std::string blob = read_file(weights_path);

  struct Entry {
    Shape shape;
    size_t offset;
  };
  std::unordered_map<std::string, Entry> entries;
  for (const auto& e : manifest["tensors"]) {
    if (!e.contains("name") || !e.contains("shape") || !e.contains("byte_offset")) {
      throw DataError("malformed tensor entry in " + manifest_path.string());
    }
    if (e.value("dtype", "") != "f32") {
      throw DataError("unsupported dtype for tensor '" + e["name"].get<std::string>() + "'");
    }
    entries[e["name"].get<std::string>()] = {e["shape"].get<Shape>(),
                                             e["byte_offset"].get<size_t>()};
  }
  if (entries.size() != into.size()) {
    throw DataError("checkpoint has " + std::to_string(entries.size()) + " tensors, expected " +
                    std::to_string(into.size()));
  }
  for (NamedParam& p : into) {
    auto it = entries.find(p.name);
    if (it == entries.end()) {
      throw DataError("checkpoint is missing tensor '" + p.name + "'");
    }
    if (it->second.shape != p.value.shape()) {
      throw DataError("shape mismatch for tensor '" + p.name + "': checkpoint " +
                      shape_str(it->second.shape) + ", model " + shape_str(p.value.shape()));
    }
    const size_t count = p.value.data().size();
    const size_t need = it->second.offset + count * sizeof(float);
    if (need > blob.size()) {
      throw DataError("weights file truncated at tensor '" + p.name + "'");
    }
    std::vector<double>& data = p.value.data();
    const char* src = blob.data() + it->second.offset;
    for (size_t i = 0; i < count; ++i) {
      float f;
      std::memcpy(&f, src + i * sizeof(float), sizeof(float));
      data[i] = static_cast<double>(f);
    }
    p.value.zero_grad();
  }
}

}  // namespace dmtf::nd
