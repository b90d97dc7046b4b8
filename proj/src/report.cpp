#include "rvit/report.hpp"

#include <cmath>
#include <cstdio>

#include "rvit/checkpoint.hpp"
#include "rvit/error.hpp"

namespace rvit::io {

namespace {

std::string number(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void emit(const nlohmann::json& j, std::string& out) {
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {  // object_t is an ordered std::map
        if (!first) out += ',';
        first = false;
        out += nlohmann::json(it.key()).dump();
        out += ':';
        emit(it.value(), out);
      }
      out += '}';
      break;
    }
    case nlohmann::json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        emit(j[i], out);
      }
      out += ']';
      break;
    }
    case nlohmann::json::value_t::number_float: out += number(j.get<double>()); break;
    default: out += j.dump(); break;
  }
}

}  // namespace

std::string canonical_json(const nlohmann::json& j) {
  std::string out;
  emit(j, out);
  return out;
}

std::string transfer_csv(const eval::TransferReport& report, const std::string& hash, std::uint64_t seed) {
  std::string out;
  if (!hash.empty()) out += "# config_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
  out += "surrogate";
  for (const auto& v : report.victims) out += "," + v;
  out += ",avg\n";
  for (std::size_t r = 0; r < report.surrogates.size(); ++r) {
    out += report.surrogates[r];
    for (double v : report.asr[r]) out += "," + number(v);
    out += "," + number(report.averages.at(r)) + "\n";
  }
  return out;
}

void write_report(const eval::TransferReport& report, const std::string& path, ReportFormat format,
                  const std::string& hash, std::uint64_t seed) {
  if (report.averages.size() != report.asr.size()) throw ContractError("report averages do not match its rows");
  for (std::size_t r = 0; r < report.asr.size(); ++r) {
    if (report.asr[r].size() != report.victims.size()) throw ContractError("report row has the wrong width");
    if (!report.asr[r].empty() && std::abs(eval::row_average(report.asr[r]) - report.averages[r]) > 1e-9)
      throw ContractError("report average for row " + std::to_string(r) + " disagrees with its entries");
  }
  if (format == ReportFormat::csv) {
    write_text(path, transfer_csv(report, hash, seed));
    return;
  }
  nlohmann::json j = report.to_json();
  if (!hash.empty()) {
    j["config_hash"] = hash;
    j["seed"] = seed;
  }
  write_text(path, canonical_json(j) + "\n");
}

}  // namespace rvit::io
