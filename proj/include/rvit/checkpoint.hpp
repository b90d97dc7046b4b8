#pragma once

// .rvit container: "RVIT", u32 version, u64 manifest length, JSON manifest,
// then raw little-endian float64 arrays in manifest order.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rvit/model.hpp"
#include "rvit/robust.hpp"

namespace rvit::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json model;  // classifier config_json()
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::optional<robust::RobustTokens> robust_tokens;
  std::optional<double> clean_accuracy;
  nlohmann::json meta = nlohmann::json::object();  // config hash, seed, ...
};

Checkpoint snapshot(Classifier& model);
/// Builds the classifier and copies every tensor in; throws CorruptionError on
/// missing or misshapen tensors.
std::unique_ptr<Classifier> restore(const Checkpoint& ckpt);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// FormatError on bad magic, VersionError when newer than this reader,
/// CorruptionError (naming the tensor) when manifest and payload disagree.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// little-endian helpers shared by the binary formats
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);
std::uint32_t get_u32(const std::uint8_t* p);
std::uint64_t get_u64(const std::uint8_t* p);
double get_f64(const std::uint8_t* p);

std::vector<std::uint8_t> read_file(const std::string& path);
/// Writes atomically enough for our purposes; IoError names the path.
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::string& path, const std::string& text);

}  // namespace rvit::io
