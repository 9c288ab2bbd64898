#include "enacull/table.hpp"

#include <charconv>
#include <fstream>

#include <fmt/format.h>

#include "enacull/error.hpp"

namespace enacull::table {

std::vector<std::string> split(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, char delim) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out.push_back(delim);
    out += parts[i];
  }
  return out;
}

namespace {

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

Reader::Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {
  std::string line;
  if (!std::getline(in_, line)) {
    fail(ErrorCode::kSchema, source_ + ": missing header line");
  }
  strip_cr(line);
  header_ = split(line);
}

bool Reader::has_column(std::string_view name) const {
  for (const auto& h : header_) {
    if (h == name) return true;
  }
  return false;
}

std::size_t Reader::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  fail(ErrorCode::kSchema, fmt::format("{}: missing required column '{}'", source_, name));
}

void Reader::require_columns(const std::vector<std::string>& required) const {
  for (const auto& name : required) {
    (void)column(name);
  }
}

bool Reader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    strip_cr(line);
    if (line.empty()) continue;
    fields_ = split(line);
    ++row_;
    if (fields_.size() != header_.size()) {
      fail(ErrorCode::kSchema, fmt::format("{}: expected {} fields, found {}", where(),
                                           header_.size(), fields_.size()));
    }
    return true;
  }
  return false;
}

const std::string& Reader::field(std::size_t column) const { return fields_.at(column); }

std::string Reader::where() const {
  return fmt::format("{} row {} (line {})", source_, row_, line_);
}

std::int64_t Reader::as_int(std::string_view name) const {
  const auto& text = field(name);
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    fail(ErrorCode::kValidation,
         fmt::format("{}: column '{}' is not an integer: '{}'", where(), name, text));
  }
  return value;
}

double Reader::as_double(std::string_view name) const {
  const auto& text = field(name);
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used == text.size()) return value;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::kValidation,
       fmt::format("{}: column '{}' is not a number: '{}'", where(), name, text));
}

bool Reader::as_flag(std::string_view name) const {
  const auto& text = field(name);
  if (text == "0") return false;
  if (text == "1") return true;
  fail(ErrorCode::kValidation,
       fmt::format("{}: column '{}' must be 0 or 1, found '{}'", where(), name, text));
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorCode::kInputMissing, "cannot open input file: " + path.string());
  }
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    fail(ErrorCode::kIo, "cannot open output file: " + path.string());
  }
  return out;
}

}  // namespace enacull::table
