// SPDX-License-Identifier: Apache-2.0
//
// CSV emission pinned for byte-identical reruns: comma separator, '.'
// decimal point, 17 significant digits, LF line endings.

#pragma once

#include <concepts>
#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

namespace rotalab {

/// Shortest-safe "%.17g" rendering, independent of the C locale.
std::string format_double(double x);

class CsvWriter {
 public:
  explicit CsvWriter(std::initializer_list<std::string_view> header);

  template <typename... Fields>
  CsvWriter& row(const Fields&... fields) {
    bool first = true;
    ((append(first), put(fields)), ...);
    out_ += '\n';
    return *this;
  }

  const std::string& str() const noexcept { return out_; }

 private:
  void append(bool& first) {
    if (!first) out_ += ',';
    first = false;
  }
  void put(double x) { out_ += format_double(x); }
  void put(std::string_view s);
  void put(const std::string& s) { put(std::string_view(s)); }
  void put(const char* s) { put(std::string_view(s)); }
  template <std::integral I>
  void put(I x) {
    out_ += std::to_string(x);
  }

  std::string out_;
};

/// Writes text atomically enough for our purposes (truncate + write).
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace rotalab
