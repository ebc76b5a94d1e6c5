#pragma once

#include <string>
#include <vector>

namespace coldisturb {

/// In-memory CSV: a header row plus string cells. Numbers are formatted by
/// the helpers below so that output bytes depend only on the values.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  /// Header and rows, comma separated, '\n' terminated.
  std::string str() const;
};

/// Shortest round-trip representation; "inf" for infinity.
std::string fmt_num(double v);
std::string fmt_num(std::uint64_t v);

/// Writes `comment` lines (each prefixed "# ") then the table, via a
/// temporary file renamed into place.
void write_csv_atomic(const std::string& path, const std::vector<std::string>& comment, const CsvTable& table);

/// Writes `text` to `path` through a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& text);

}  // namespace coldisturb
