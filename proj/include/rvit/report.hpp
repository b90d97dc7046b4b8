#pragma once

#include <string>

#include "json.hpp"
#include "rvit/eval.hpp"

namespace rvit::io {

/// Sorted keys, no whitespace, integers verbatim, floats as %.6g.
std::string canonical_json(const nlohmann::json& j);

/// Surrogate rows, victim columns, trailing avg column; the first line is a
/// "# config_hash=... seed=..." stamp when hash is non-empty.
std::string transfer_csv(const eval::TransferReport& report, const std::string& hash = {}, std::uint64_t seed = 0);

enum class ReportFormat { json, csv };

/// Throws ContractError when the row averages disagree with the matrix and
/// IoError (naming the path) when the file cannot be written.
void write_report(const eval::TransferReport& report, const std::string& path, ReportFormat format,
                  const std::string& hash = {}, std::uint64_t seed = 0);

}  // namespace rvit::io
