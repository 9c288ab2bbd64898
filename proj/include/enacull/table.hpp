#pragma once

// Minimal comma-delimited table reader shared by every file format in the project.
// No quoting: fields never contain commas.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace enacull::table {

class Reader {
 public:
  /// Reads the header line. `source` names the input in error messages.
  Reader(std::istream& in, std::string source);

  /// Throws kSchema unless every name in `required` is a header column.
  void require_columns(const std::vector<std::string>& required) const;
  bool has_column(std::string_view name) const;
  std::size_t column(std::string_view name) const;

  /// Advances to the next non-empty line; false at end of input.
  bool next();

  /// 1-based data row number and physical line number of the current row.
  std::size_t row_number() const { return row_; }
  std::size_t line_number() const { return line_; }

  const std::string& field(std::size_t column) const;
  const std::string& field(std::string_view name) const { return field(column(name)); }
  std::int64_t as_int(std::string_view name) const;
  double as_double(std::string_view name) const;
  bool as_flag(std::string_view name) const;

  /// Prefix for row-level diagnostics: "<source> row N (line M)".
  std::string where() const;

 private:
  std::istream& in_;
  std::string source_;
  std::vector<std::string> header_;
  std::vector<std::string> fields_;
  std::size_t row_ = 0;
  std::size_t line_ = 1;
};

std::vector<std::string> split(std::string_view line, char delim = ',');
std::string join(const std::vector<std::string>& parts, char delim = ',');

/// Opens a file for reading; missing files raise kInputMissing.
std::ifstream open_input(const std::filesystem::path& path);
/// Opens a file for writing, creating parent directories; failures raise kIo.
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace enacull::table
