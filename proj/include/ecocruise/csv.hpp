#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ecocruise {

/// Header lines written as `# key=value` before the CSV column row.
using Metadata = std::map<std::string, std::string>;

/// Fixed 9-significant-digit formatting used by every CSV artifact.
std::string fmt9(double x);

/// Parsed CSV table. Comment lines (`#`) are collected into `metadata`.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line for each row
  Metadata metadata;

  std::size_t column(std::string_view name) const;  // throws IngestError when absent
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);

/// Parses a floating-point cell; throws IngestError naming `line`.
double parse_double(const std::string& cell, std::size_t line);

void write_metadata(std::ostream& out, const Metadata& meta);

/// 64-bit FNV-1a; used for config fingerprints and cache keys.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 14695981039346656037ULL);
std::string hex64(std::uint64_t v);
std::uint64_t file_hash(const std::filesystem::path& path);

}  // namespace ecocruise
