#include "coldisturb/csv.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>

#include "coldisturb/units.hpp"

namespace coldisturb {

void CsvTable::add(std::vector<std::string> row) {
  if (row.size() != header.size())
    throw InputError(fmt::format("csv row has {} cells, header has {}", row.size(), header.size()));
  rows.push_back(std::move(row));
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out.push_back(',');
      out += cells[i];
    }
    out.push_back('\n');
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::string fmt_num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return fmt::format("{}", v);
}

std::string fmt_num(std::uint64_t v) { return fmt::format("{}", v); }

void write_file_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(fmt::format("cannot open {} for writing", tmp.string()));
    f << text;
    f.flush();
    if (!f) throw Error(fmt::format("write to {} failed", tmp.string()));
  }
  fs::rename(tmp, target);
}

void write_csv_atomic(const std::string& path, const std::vector<std::string>& comment, const CsvTable& table) {
  std::string text;
  for (const auto& c : comment) text += "# " + c + "\n";
  text += table.str();
  write_file_atomic(path, text);
}

}  // namespace coldisturb
