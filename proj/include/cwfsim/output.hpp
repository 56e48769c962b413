#pragma once

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cwfsim {

inline constexpr int kSchemaVersion = 1;

/// Shortest text that still round-trips: 17 significant digits, C locale.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// One CSV table: '#' reproducibility header, a column row, then data rows.
/// Comma separated, LF line endings.
class CsvTable {
 public:
  CsvTable(std::string name, std::vector<std::string> columns) : name_(std::move(name)), columns_(std::move(columns)) {}

  class Row {
   public:
    explicit Row(CsvTable& t) : table_(t) {}
    Row& operator<<(double v) { return add(format_double(v)); }
    Row& operator<<(int v) { return add(std::to_string(v)); }
    Row& operator<<(long v) { return add(std::to_string(v)); }
    Row& operator<<(long long v) { return add(std::to_string(v)); }
    Row& operator<<(unsigned long v) { return add(std::to_string(v)); }
    Row& operator<<(bool v) { return add(v ? "true" : "false"); }
    Row& operator<<(const std::string& v) { return add(v); }
    Row& operator<<(const char* v) { return add(v); }
    Row& operator<<(std::string_view v) { return add(std::string(v)); }
    ~Row() noexcept(false) {
      if (std::uncaught_exceptions() > 0) return;
      if (cells_.size() != table_.columns_.size()) {
        throw std::logic_error("CsvTable " + table_.name_ + ": row has " + std::to_string(cells_.size()) +
                               " cells, expected " + std::to_string(table_.columns_.size()));
      }
      table_.body_ += join(cells_) + '\n';
    }

   private:
    Row& add(std::string s) {
      if (s.find_first_of(",\n\"") != std::string::npos) throw std::invalid_argument("CSV cell contains a separator");
      cells_.push_back(std::move(s));
      return *this;
    }
    CsvTable& table_;
    std::vector<std::string> cells_;
  };

  Row row() { return Row(*this); }

  const std::string& name() const { return name_; }
  const std::vector<std::string>& columns() const { return columns_; }
  std::string body() const { return join(columns_) + "\n" + body_; }

  /// Writes header lines (each prefixed "# ") followed by the body.
  void write(const std::filesystem::path& dir, const std::string& header) const {
    std::ofstream f(dir / name_, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + (dir / name_).string() + " for writing");
    std::istringstream lines(header);
    for (std::string line; std::getline(lines, line);) f << "# " << line << '\n';
    f << body();
    if (!f) throw std::runtime_error("write failed: " + (dir / name_).string());
  }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    return out;
  }

  std::string name_;
  std::vector<std::string> columns_;
  std::string body_;
};

/// Lines of a CSV file after the '#' header block.
inline std::string csv_body(const std::filesystem::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + file.string());
  std::string out, line;
  bool in_header = true;
  while (std::getline(f, line)) {
    if (in_header && line.rfind("#", 0) == 0) continue;
    in_header = false;
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace cwfsim
