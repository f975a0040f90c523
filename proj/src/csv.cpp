// SPDX-License-Identifier: Apache-2.0

#include "rotalab/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "rotalab/error.hpp"

namespace rotalab {

std::string format_double(double x) {
  // std::to_chars is locale-independent; general format with 17 digits
  // matches printf("%.17g").
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

CsvWriter::CsvWriter(std::initializer_list<std::string_view> header) {
  bool first = true;
  for (auto h : header) {
    append(first);
    put(h);
  }
  out_ += '\n';
}

void CsvWriter::put(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) {
    out_ += s;
    return;
  }
  out_ += '"';
  for (char c : s) {
    if (c == '"') out_ += '"';
    out_ += c;
  }
  out_ += '"';
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rotalab
