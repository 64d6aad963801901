#include "attnhar/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "attnhar/errors.hpp"
#include "json.hpp"

namespace attnhar {

namespace {

constexpr char kMagic[4] = {'A', 'T', 'T', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

bool get_bytes(std::istream& is, char* dst, std::size_t n) {
  is.read(dst, static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount()) == n;
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!get_bytes(is, reinterpret_cast<char*>(b), 4))
    throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!get_bytes(is, reinterpret_cast<char*>(b), 8))
    throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

nlohmann::json meta_to_json(const CheckpointMeta& meta) {
  nlohmann::json j;
  j["dims"] = {{"input", meta.dims.input},
               {"hidden", meta.dims.hidden},
               {"classes", meta.dims.classes},
               {"modalities", meta.dims.modalities},
               {"attn_hidden", meta.dims.attn_hidden}};
  j["variant"] = variant_name(meta.variant);
  j["stacked"] = meta.stacked;
  j["cell_bias"] = meta.cell_bias;
  j["modality_map"] = meta.modality_map;
  j["lambda1"] = meta.lambda1;
  j["lambda2"] = meta.lambda2;
  j["class_names"] = meta.class_names;
  return j;
}

CheckpointMeta meta_from_json(const nlohmann::json& j) {
  CheckpointMeta meta;
  const auto& d = j.at("dims");
  meta.dims.input = d.at("input").get<std::size_t>();
  meta.dims.hidden = d.at("hidden").get<std::size_t>();
  meta.dims.classes = d.at("classes").get<std::size_t>();
  meta.dims.modalities = d.at("modalities").get<std::size_t>();
  meta.dims.attn_hidden = d.at("attn_hidden").get<std::size_t>();
  meta.variant = variant_from_name(j.at("variant").get<std::string>());
  meta.stacked = j.at("stacked").get<bool>();
  meta.cell_bias = j.at("cell_bias").get<bool>();
  meta.modality_map = j.at("modality_map").get<std::vector<std::size_t>>();
  meta.lambda1 = j.at("lambda1").get<double>();
  meta.lambda2 = j.at("lambda2").get<double>();
  if (j.contains("class_names"))
    meta.class_names = j.at("class_names").get<std::vector<std::string>>();
  return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const CheckpointMeta& meta) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError(CheckpointError::Kind::io, "cannot open '" + path + "' for writing");

  os.write(kMagic, 4);
  put_u32(os, kVersion);
  const std::string meta_text = meta_to_json(meta).dump();
  put_u64(os, meta_text.size());
  os.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));

  for (const auto& ref : tensor_refs(params)) {
    put_u32(os, static_cast<std::uint32_t>(ref.name.size()));
    os.write(ref.name.data(), static_cast<std::streamsize>(ref.name.size()));
    put_u32(os, static_cast<std::uint32_t>(ref.shape.size()));
    for (std::size_t dim : ref.shape) put_u64(os, dim);
    for (std::size_t i = 0; i < ref.size; ++i) put_f64(os, ref.data[i]);
  }
  os.flush();
  if (!os) throw CheckpointError(CheckpointError::Kind::io, "write to '" + path + "' failed");
}

std::pair<ModelParams, CheckpointMeta> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(CheckpointError::Kind::io, "cannot open '" + path + "'");

  char magic[4];
  if (!get_bytes(is, magic, 4))
    throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated in header");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError(CheckpointError::Kind::bad_magic,
                          "'" + path + "' is not a checkpoint (bad magic)");
  const std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw CheckpointError(CheckpointError::Kind::version,
                          "unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t meta_len = get_u64(is);
  std::string meta_text(meta_len, '\0');
  if (!get_bytes(is, meta_text.data(), meta_len))
    throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated in metadata");

  CheckpointMeta meta;
  try {
    meta = meta_from_json(nlohmann::json::parse(meta_text));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::bad_magic,
                          std::string("malformed checkpoint metadata: ") + e.what());
  }

  ModelParams params =
      make_params(meta.dims, meta.variant, meta.stacked, meta.cell_bias, meta.modality_map);

  std::map<std::string, TensorRef> expected;
  for (auto& ref : tensor_refs(params)) expected.emplace(ref.name, ref);

  std::size_t loaded = 0;
  while (true) {
    is.peek();
    if (is.eof()) break;
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    if (!get_bytes(is, name.data(), name_len))
      throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated in tensor name");
    const std::uint32_t rank = get_u32(is);
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<std::size_t>(get_u64(is));
      count *= shape[i];
    }
    auto it = expected.find(name);
    if (it == expected.end())
      throw CheckpointError(CheckpointError::Kind::shape, "unexpected tensor '" + name + "'");
    if (it->second.shape != shape) {
      std::string want, got;
      for (std::size_t d : it->second.shape) want += std::to_string(d) + " ";
      for (std::size_t d : shape) got += std::to_string(d) + " ";
      throw CheckpointError(CheckpointError::Kind::shape, "tensor '" + name + "' has shape [" +
                                                              got + "], expected [" + want + "]");
    }
    for (std::size_t i = 0; i < count; ++i)
      it->second.data[i] = std::bit_cast<double>(get_u64(is));
    ++loaded;
  }
  if (loaded != expected.size())
    throw CheckpointError(CheckpointError::Kind::shape,
                          "checkpoint is missing tensors (" + std::to_string(loaded) + " of " +
                              std::to_string(expected.size()) + ")");
  validate_params(params);
  return {std::move(params), std::move(meta)};
}

}  // namespace attnhar
