#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "edbench/core.hpp"

namespace edbench {

/// One rejected or suspicious input row. `row` is 1-based over data rows
/// (the header is row 0).
struct RowDiagnostic {
    std::size_t row = 0;
    std::string message;
    bool is_error = true;  // false: row intentionally ignored with a warning
};

/// In-memory CSV table. Minimal RFC-4180 reader: quoted fields, embedded
/// commas/quotes/newlines, CRLF tolerant.
class CsvTable {
  public:
    static CsvTable read_file(const std::string& path);
    static CsvTable parse(const std::string& content, const std::string& origin = "<string>");

    const std::vector<std::string>& header() const { return header_; }
    std::size_t row_count() const { return cells_.size(); }
    const std::vector<std::string>& row(std::size_t i) const { return cells_[i]; }

    bool has_column(const std::string& name) const;

    /// Column index; throws SchemaError naming the column when absent.
    std::size_t column(const std::string& name) const;

    /// Cell by row index and column name; missing trailing cells read as "".
    const std::string& cell(std::size_t row, std::size_t col) const;

    const std::string& origin() const { return origin_; }

  private:
    std::string origin_;
    std::vector<std::string> header_;
    std::map<std::string, std::size_t> index_;
    std::vector<std::vector<std::string>> cells_;
};

/// Deterministic CSV writer (always '\n' line endings, quotes only when
/// needed) so identical content hashes byte-identically.
class CsvWriter {
  public:
    explicit CsvWriter(std::vector<std::string> header);

    void add_row(const std::vector<std::string>& cells);
    const std::string& buffer() const { return buf_; }
    void write_file(const std::string& path) const;

  private:
    std::size_t n_cols_;
    std::string buf_;
    void append_row(const std::vector<std::string>& cells);
};

}  // namespace edbench
