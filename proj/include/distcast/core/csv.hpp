#pragma once

#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "distcast/core/errors.hpp"
#include "distcast/core/text.hpp"

namespace distcast {

/// Header-addressed CSV contents. Fields are unquoted; quoting is not supported.
class CsvTable {
 public:
  CsvTable() = default;
  CsvTable(std::vector<std::string> header, std::vector<std::vector<std::string>> rows,
           std::string source)
      : header_(std::move(header)), rows_(std::move(rows)), source_(std::move(source)) {
    for (std::size_t i = 0; i < header_.size(); ++i) index_[header_[i]] = i;
  }

  const std::vector<std::string>& header() const { return header_; }
  std::size_t size() const { return rows_.size(); }
  const std::vector<std::string>& row(std::size_t r) const { return rows_[r]; }
  const std::string& source() const { return source_; }

  bool has(const std::string& column) const { return index_.count(column) != 0; }

  std::size_t column(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw InputError(source_ + ": missing column '" + name + "'");
    return it->second;
  }

  void require(std::initializer_list<const char*> names) const {
    for (const char* n : names) (void)column(n);
  }

  const std::string& at(std::size_t r, std::size_t c) const { return rows_[r][c]; }

  std::string where(std::size_t r) const { return source_ + " line " + std::to_string(r + 2); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::string source_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline CsvTable parse_csv(std::string_view text, const std::string& source) {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    if (trim(line).empty()) {
      if (end == text.size()) break;
      continue;
    }
    auto fields = split(line, ',');
    if (header.empty()) {
      if (!fields.empty() && fields[0].size() >= 3 &&
          fields[0].compare(0, 3, "\xEF\xBB\xBF") == 0) {
        fields[0].erase(0, 3);  // UTF-8 BOM
      }
      header = std::move(fields);
    } else {
      if (fields.size() != header.size()) {
        throw InputError(source + " line " + std::to_string(line_no) + ": expected " +
                         std::to_string(header.size()) + " fields, found " +
                         std::to_string(fields.size()));
      }
      rows.push_back(std::move(fields));
    }
    if (end == text.size()) break;
  }
  if (header.empty()) throw InputError(source + ": empty CSV");
  return CsvTable(std::move(header), std::move(rows), source);
}

inline CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path), path); }

/// Streams rows to a file; throws if the file cannot be written.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw InputError("cannot write '" + path + "'");
    row(header);
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

  void close() {
    out_.close();
    if (!out_) throw InputError("failed writing '" + path_ + "'");
  }

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace distcast
