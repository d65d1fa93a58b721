#include "edbench/csv.hpp"

#include <fstream>
#include <sstream>

namespace edbench {

namespace {

std::vector<std::vector<std::string>> parse_records(const std::string& s) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t i = 0;
    const std::size_t n = s.size();
    auto end_field = [&] {
        fields.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(fields));
        fields.clear();
    };
    while (i < n) {
        char c = s[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < n && s[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
        } else {
            if (c == '"' && !field_started) {
                in_quotes = true;
                field_started = true;
            } else if (c == ',') {
                end_field();
            } else if (c == '\n') {
                if (!field.empty() && field.back() == '\r') field.pop_back();
                end_record();
            } else {
                field.push_back(c);
                field_started = true;
            }
        }
        ++i;
    }
    if (!field.empty() || !fields.empty()) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        end_record();
    }
    return records;
}

}  // namespace

CsvTable CsvTable::read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open table: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

CsvTable CsvTable::parse(const std::string& content, const std::string& origin) {
    CsvTable t;
    t.origin_ = origin;
    auto records = parse_records(content);
    if (records.empty()) throw SchemaError("empty file, no header: " + origin);
    t.header_ = records.front();
    for (std::size_t c = 0; c < t.header_.size(); ++c) {
        t.index_.emplace(trim(t.header_[c]), c);
        t.header_[c] = trim(t.header_[c]);
    }
    t.cells_.assign(records.begin() + 1, records.end());
    return t;
}

bool CsvTable::has_column(const std::string& name) const { return index_.count(name) > 0; }

std::size_t CsvTable::column(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
        throw SchemaError("missing required column '" + name + "' in " + origin_);
    return it->second;
}

const std::string& CsvTable::cell(std::size_t row, std::size_t col) const {
    static const std::string empty;
    const auto& r = cells_[row];
    return col < r.size() ? r[col] : empty;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : n_cols_(header.size()) {
    append_row(header);
}

void CsvWriter::add_row(const std::vector<std::string>& cells) {
    if (cells.size() != n_cols_)
        throw std::invalid_argument("CsvWriter: row width mismatch");
    append_row(cells);
}

void CsvWriter::append_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) buf_.push_back(',');
        const std::string& c = cells[i];
        const bool needs_quote = c.find_first_of(",\"\n\r") != std::string::npos;
        if (!needs_quote) {
            buf_ += c;
        } else {
            buf_.push_back('"');
            for (char ch : c) {
                if (ch == '"') buf_.push_back('"');
                buf_.push_back(ch);
            }
            buf_.push_back('"');
        }
    }
    buf_.push_back('\n');
}

void CsvWriter::write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw DataError("short write: " + path);
}

}  // namespace edbench
