#include "rvit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rvit/error.hpp"

namespace rvit::io {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

double get_f64(const std::uint8_t* p) { return std::bit_cast<double>(get_u64(p)); }

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

Checkpoint snapshot(Classifier& model) {
  Checkpoint c;
  c.model = model.config_json();
  for (const auto& p : model.parameters()) c.tensors.emplace_back(p.name, *p.tensor);
  return c;
}

std::unique_ptr<Classifier> restore(const Checkpoint& ckpt) {
  auto model = make_classifier(ckpt.model);
  auto params = model->parameters();
  if (params.size() != ckpt.tensors.size())
    throw CorruptionError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = ckpt.tensors[i];
    if (name != params[i].name) throw CorruptionError("tensor '" + name + "' found where '" + params[i].name + "' expected");
    if (t.shape() != params[i].tensor->shape())
      throw CorruptionError("tensor '" + name + "' has shape " + shape_str(t.shape()) + ", expected " +
                            shape_str(params[i].tensor->shape()));
    *params[i].tensor = t;
  }
  return model;
}

namespace {

constexpr char kMagic[4] = {'R', 'V', 'I', 'T'};

nlohmann::json entry(const std::string& name, const Tensor& t, std::uint64_t& offset) {
  nlohmann::json e{{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"bytes", t.size() * 8}};
  offset += t.size() * 8;
  return e;
}

Tensor read_tensor(const nlohmann::json& e, const std::uint8_t* payload, std::uint64_t payload_size,
                   std::vector<std::pair<std::uint64_t, std::uint64_t>>& spans) {
  const std::string name = e.at("name").get<std::string>();
  const Shape shape = e.at("shape").get<Shape>();
  const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
  const std::uint64_t bytes = e.at("bytes").get<std::uint64_t>();
  if (shape.empty() || numel(shape) * 8 != bytes)
    throw CorruptionError("tensor '" + name + "': shape " + shape_str(shape) + " disagrees with byte count");
  if (offset > payload_size || bytes > payload_size - offset)
    throw CorruptionError("tensor '" + name + "' extends past the end of the payload");
  for (const auto& [b, n] : spans)
    if (offset < b + n && b < offset + bytes) throw CorruptionError("tensor '" + name + "' overlaps another tensor");
  spans.emplace_back(offset, bytes);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = get_f64(payload + offset + 8 * i);
  return t;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["model"] = ckpt.model;
  manifest["meta"] = ckpt.meta;
  std::uint64_t offset = 0;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) tensors.push_back(entry(name, t, offset));
  manifest["tensors"] = tensors;
  if (ckpt.robust_tokens && ckpt.robust_tokens->enabled()) {
    nlohmann::json rt = ckpt.robust_tokens->meta_json();
    rt["tensor"] = entry("robust_tokens", ckpt.robust_tokens->z, offset);
    manifest["robust_tokens"] = rt;
  }
  if (ckpt.clean_accuracy) manifest["clean_accuracy"] = *ckpt.clean_accuracy;
  manifest["payload_bytes"] = offset;

  const std::string text = manifest.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : ckpt.tensors)
    for (double v : t.data()) put_f64(out, v);
  if (manifest.contains("robust_tokens"))
    for (double v : ckpt.robust_tokens->z.data()) put_f64(out, v);
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not an RVIT checkpoint (bad magic)");
  if (bytes.size() < 16) throw CorruptionError("checkpoint header truncated");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version > kCheckpointVersion)
    throw VersionError("checkpoint version " + std::to_string(version) + " is newer than supported version " +
                       std::to_string(kCheckpointVersion));
  const std::uint64_t mlen = get_u64(bytes.data() + 8);
  if (mlen > bytes.size() - 16) throw CorruptionError("manifest extends past end of file");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(mlen));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("manifest is not valid JSON: ") + e.what());
  }
  const std::uint8_t* payload = bytes.data() + 16 + mlen;
  const std::uint64_t payload_size = bytes.size() - 16 - mlen;

  Checkpoint c;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
  try {
    c.model = manifest.at("model");
    c.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& e : manifest.at("tensors"))
      c.tensors.emplace_back(e.at("name").get<std::string>(), read_tensor(e, payload, payload_size, spans));
    if (manifest.contains("robust_tokens")) {
      const auto& rj = manifest["robust_tokens"];
      robust::RobustTokens rt;
      rt.z = read_tensor(rj.at("tensor"), payload, payload_size, spans);
      rt.count = rj.at("count").get<int>();
      rt.mode = robust::mode_from_name(rj.at("mode").get<std::string>());
      rt.steps = rj.at("steps").get<int>();
      rt.lr = rj.at("lr").get<double>();
      rt.seed = rj.at("seed").get<std::uint64_t>();
      if (rt.z.shape().at(0) != static_cast<std::size_t>(rt.count))
        throw CorruptionError("robust_tokens count disagrees with tensor shape");
      c.robust_tokens = rt;
    }
    if (manifest.contains("clean_accuracy")) c.clean_accuracy = manifest["clean_accuracy"].get<double>();
    if (manifest.value("payload_bytes", payload_size) != payload_size)
      throw CorruptionError("payload is " + std::to_string(payload_size) + " bytes, manifest declares " +
                            std::to_string(manifest["payload_bytes"].get<std::uint64_t>()));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("malformed manifest: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) { write_file(path, encode_checkpoint(ckpt)); }

Checkpoint load_checkpoint(const std::string& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const CorruptionError& e) {
    throw CorruptionError(path + ": " + e.what());
  }
}

}  // namespace rvit::io
