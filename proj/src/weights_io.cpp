#include "skinnet/weights_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "skinnet/fileio.hpp"

namespace skinnet {
namespace {

using ordered_json = nlohmann::ordered_json;
constexpr char kMagic[4] = {'D', 'W', 'T', '1'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(u);
}

[[noreturn]] void archive_error(const std::string& what) { fail(ErrorKind::kArchive, "weight archive: " + what); }

}  // namespace

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

const ManifestEntry* WeightArchive::find(const std::string& name) const {
  for (const auto& e : tensors)
    if (e.name == name) return &e;
  return nullptr;
}

Tensor WeightArchive::tensor(const std::string& name) const {
  const auto* e = find(name);
  if (e == nullptr) archive_error("missing tensor " + name);
  std::vector<float> values(e->length / 4);
  const std::uint8_t* p = blob.data() + e->offset;
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = get_f32(p + 4 * i);
  return Tensor(e->shape, std::move(values));
}

std::vector<std::uint8_t> encode_archive(const NetworkGraph<float>& graph, const ArchiveMetadata& metadata) {
  std::vector<std::uint8_t> blob;
  ordered_json tensors = ordered_json::array();
  auto append = [&](const std::string& name, const Tensor& t) {
    const std::uint64_t offset = blob.size();
    for (float v : t.values()) put_f32(blob, v);
    const std::uint64_t length = blob.size() - offset;
    ordered_json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = offset;
    e["length"] = length;
    e["crc32"] = crc32_of(blob.data() + offset, length);
    tensors.push_back(std::move(e));
  };
  for (const auto& p : graph.params()) {
    const auto& layer = graph.layers()[p.layer].name;
    append(kernel_name(layer), p.weight);
    append(bias_name(layer), p.bias);
  }

  ordered_json manifest;
  manifest["version"] = kArchiveVersion;
  manifest["tensors"] = std::move(tensors);
  ordered_json meta;
  meta["normalization"] = metadata.normalization;
  meta["class_names"] = metadata.class_names;
  meta["input_size"] = metadata.input_size;
  meta["width_divisor"] = metadata.width_divisor;
  meta["num_classes"] = graph.config().num_classes;
  manifest["metadata"] = std::move(meta);
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

WeightArchive decode_archive(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) archive_error("bad magic bytes");
  const std::uint64_t mlen = get_u64(bytes.data() + 4);
  if (mlen > bytes.size() - 12) archive_error("manifest length exceeds file size");

  WeightArchive a;
  try {
    const auto manifest =
        ordered_json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(mlen));
    a.version = manifest.at("version").get<int>();
    if (a.version != kArchiveVersion) archive_error("unsupported format version " + std::to_string(a.version));
    for (const auto& t : manifest.at("tensors")) {
      ManifestEntry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<Shape>();
      e.offset = t.at("offset").get<std::uint64_t>();
      e.length = t.at("length").get<std::uint64_t>();
      e.crc32 = t.at("crc32").get<std::uint32_t>();
      a.tensors.push_back(std::move(e));
    }
    const auto& meta = manifest.at("metadata");
    a.metadata.normalization = meta.value("normalization", std::string("scale01"));
    a.metadata.class_names = meta.value("class_names", std::vector<std::string>{});
    a.metadata.input_size = meta.value("input_size", std::size_t{150});
    a.metadata.width_divisor = meta.value("width_divisor", std::size_t{1});
    a.metadata.num_classes = meta.value("num_classes", a.metadata.class_names.size());
  } catch (const nlohmann::json::exception& e) {
    archive_error(std::string("malformed manifest: ") + e.what());
  }
  a.blob.assign(bytes.begin() + 12 + static_cast<std::ptrdiff_t>(mlen), bytes.end());

  std::uint64_t cursor = 0;
  for (const auto& e : a.tensors) {
    for (auto d : e.shape)
      if (d == 0) archive_error("tensor " + e.name + " has a zero dimension");
    if (e.length != 4 * shape_size(e.shape)) archive_error("tensor " + e.name + " length does not match its shape");
    if (e.offset < cursor) archive_error("tensor " + e.name + " overlaps the previous tensor");
    if (e.offset > a.blob.size() || e.length > a.blob.size() - e.offset)
      archive_error("tensor " + e.name + " extends past the end of the blob");
    if (crc32_of(a.blob.data() + e.offset, e.length) != e.crc32) archive_error("checksum mismatch in tensor " + e.name);
    cursor = e.offset + e.length;
  }
  return a;
}

void save_weights(const NetworkGraph<float>& graph, const std::filesystem::path& path, const ArchiveMetadata& metadata) {
  const auto bytes = encode_archive(graph, metadata);
  write_file_atomic(path, std::span(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

WeightArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) archive_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_archive(bytes);
}

void load_weights(const WeightArchive& archive, NetworkGraph<float>& graph, LoadScope scope) {
  struct Staged {
    Tensor* target;
    Tensor value;
  };
  std::vector<Staged> staged;
  for (auto& p : graph.params()) {
    const auto& layer = graph.layers()[p.layer].name;
    if (scope == LoadScope::kBaseOnly && !is_base_layer(layer)) continue;
    for (auto [name, target] : {std::pair{kernel_name(layer), &p.weight}, std::pair{bias_name(layer), &p.bias}}) {
      const auto* e = archive.find(name);
      if (e == nullptr) archive_error("missing tensor " + name);
      if (e->shape != target->shape())
        archive_error("shape mismatch for tensor " + name + ": archive " + shape_str(e->shape) + ", graph " +
                      shape_str(target->shape()));
      staged.push_back({target, archive.tensor(name)});
    }
  }
  for (auto& s : staged) *s.target = std::move(s.value);
}

void load_weights(const std::filesystem::path& path, NetworkGraph<float>& graph, LoadScope scope) {
  load_weights(read_archive(path), graph, scope);
}

ArchConfig arch_from_metadata(const ArchiveMetadata& metadata) {
  ArchConfig c;
  c.num_classes = metadata.num_classes != 0 ? metadata.num_classes : metadata.class_names.size();
  c.input_size = metadata.input_size;
  c.width_divisor = metadata.width_divisor;
  return c;
}

}  // namespace skinnet
