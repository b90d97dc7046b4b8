#include "rvit/advb.hpp"

#include "rvit/checkpoint.hpp"
#include "rvit/error.hpp"

namespace rvit::io {

std::vector<std::uint8_t> encode_advb(const AdvBatch& batch) {
  if (batch.images.size() != batch.labels.size()) throw InputError("advb: images and labels differ in length");
  Shape shape{0, 0, 0};
  if (!batch.images.empty()) {
    shape = batch.images[0].shape();
    if (shape.size() != 3) throw DimensionError("advb: images must be H x W x C, got " + shape_str(shape));
  }
  for (const auto& im : batch.images)
    if (im.shape() != shape) throw DimensionError("advb: images differ in shape");
  nlohmann::json header{{"format", "advb"},
                        {"version", 1},
                        {"count", batch.images.size()},
                        {"height", shape[0]},
                        {"width", shape[1]},
                        {"channels", shape[2]},
                        {"epsilon", batch.epsilon},
                        {"seed", batch.seed},
                        {"config_hash", batch.config_hash},
                        {"label_dtype", "i32"},
                        {"extra", batch.extra}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& im : batch.images)
    for (double v : im.data()) put_f64(out, v);
  for (int l : batch.labels) put_u32(out, static_cast<std::uint32_t>(l));
  return out;
}

AdvBatch decode_advb(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8) throw FormatError("advb: file shorter than its header length field");
  const std::uint64_t hlen = get_u64(bytes.data());
  if (hlen > bytes.size() - 8) throw FormatError("advb: header length exceeds file size");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("advb: header is not JSON: ") + e.what());
  }
  AdvBatch b;
  std::size_t count = 0, hh = 0, ww = 0, cc = 0;
  try {
    if (h.at("format") != "advb") throw FormatError("advb: wrong format tag");
    count = h.at("count").get<std::size_t>();
    hh = h.at("height").get<std::size_t>();
    ww = h.at("width").get<std::size_t>();
    cc = h.at("channels").get<std::size_t>();
    b.epsilon = h.at("epsilon").get<double>();
    b.seed = h.at("seed").get<std::uint64_t>();
    b.config_hash = h.value("config_hash", std::string());
    b.extra = h.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("advb: malformed header: ") + e.what());
  }
  const std::size_t per = hh * ww * cc;
  const std::size_t expected = 8 + hlen + count * per * 8 + count * 4;
  if (bytes.size() != expected)
    throw CorruptionError("advb: expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(bytes.size()));
  const std::uint8_t* p = bytes.data() + 8 + hlen;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t({hh, ww, cc});
    for (std::size_t k = 0; k < per; ++k, p += 8) t[k] = get_f64(p);
    b.images.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < count; ++i, p += 4) b.labels.push_back(static_cast<std::int32_t>(get_u32(p)));
  return b;
}

void save_advb(const AdvBatch& batch, const std::string& path) { write_file(path, encode_advb(batch)); }

AdvBatch load_advb(const std::string& path) { return decode_advb(read_file(path)); }

}  // namespace rvit::io
