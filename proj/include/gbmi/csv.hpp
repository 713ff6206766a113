#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "gbmi/tabular.hpp"

namespace gbmi {

// CSV dialect: RFC-4180 quoting, header row required, UTF-8 passthrough.
// An unquoted empty field or unquoted `NA` is a missing cell; a quoted field
// is always a literal value, so the label "NA" survives a round trip.
// Categorical cells are written quoted, which is what lets a re-read keep
// numeric-looking labels categorical.

enum class KindHint { kNumeric, kCategorical };

namespace detail {

struct CsvField {
    std::string text;
    bool quoted = false;
};

inline std::vector<std::vector<CsvField>> parse_csv(const std::string& content,
                                                    const std::string& origin) {
    std::vector<std::vector<CsvField>> records;
    std::vector<CsvField> record;
    CsvField field;
    enum { kStart, kUnquoted, kQuoted, kQuoteInQuoted } st = kStart;
    auto end_field = [&] {
        record.push_back(std::move(field));
        field = {};
        st = kStart;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
    };
    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        switch (st) {
            case kStart:
                if (c == '"') {
                    field.quoted = true;
                    st = kQuoted;
                } else if (c == ',') {
                    end_field();
                } else if (c == '\n') {
                    end_record();
                } else if (c != '\r') {
                    field.text.push_back(c);
                    st = kUnquoted;
                }
                break;
            case kUnquoted:
                if (c == ',') {
                    end_field();
                } else if (c == '\n') {
                    if (!field.text.empty() && field.text.back() == '\r') field.text.pop_back();
                    end_record();
                } else {
                    field.text.push_back(c);
                }
                break;
            case kQuoted:
                if (c == '"')
                    st = kQuoteInQuoted;
                else
                    field.text.push_back(c);
                break;
            case kQuoteInQuoted:
                if (c == '"') {
                    field.text.push_back('"');
                    st = kQuoted;
                } else if (c == ',') {
                    end_field();
                } else if (c == '\n') {
                    end_record();
                } else if (c != '\r') {
                    throw std::runtime_error(origin + ": stray character after closing quote");
                }
                break;
        }
    }
    if (st == kQuoted) throw std::runtime_error(origin + ": unterminated quoted field");
    if (st != kStart || !record.empty()) end_record();
    // Drop a trailing fully-empty line (file ending in newline produces none).
    if (!records.empty() && records.back().size() == 1 && records.back()[0].text.empty() &&
        !records.back()[0].quoted)
        records.pop_back();
    return records;
}

inline bool parse_double(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first; // from_chars rejects a leading '+'
    if (first == last) return false;
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc{} && res.ptr == last && std::isfinite(out);
}

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v); // shortest round-trip form
    return std::string(buf, res.ptr);
}

inline bool needs_quoting(const std::string& s) {
    if (s.empty() || s == "NA") return true; // would otherwise read back as missing
    return s.find_first_of(",\"\r\n") != std::string::npos;
}

inline std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

} // namespace detail

// Reads a CSV file into a Dataset. Column kinds are inferred: a column whose
// observed cells are all unquoted finite numbers becomes Numeric, anything
// else Categorical with levels in first-appearance order. `hints` overrides
// inference per column name; hinting Numeric over non-numeric cells is an
// error.
inline Dataset read_csv(const std::filesystem::path& path,
                        const std::map<std::string, KindHint>& hints = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    std::stringstream buf;
    buf << in.rdbuf();
    const auto records = detail::parse_csv(buf.str(), path.string());
    if (records.size() < 2)
        throw std::runtime_error(path.string() + ": need a header row and at least one data row");

    const auto& header = records[0];
    const std::size_t p = header.size();
    const std::size_t n = records.size() - 1;
    std::vector<std::string> names(p);
    for (std::size_t j = 0; j < p; ++j) names[j] = header[j].text;

    for (std::size_t r = 1; r < records.size(); ++r)
        if (records[r].size() != p)
            throw std::runtime_error(path.string() + ": row " + std::to_string(r + 1) + " has " +
                                     std::to_string(records[r].size()) + " fields, expected " +
                                     std::to_string(p));

    auto cell_missing = [&](const detail::CsvField& f) {
        return !f.quoted && (f.text.empty() || f.text == "NA");
    };

    std::vector<ColumnKind> kinds;
    kinds.reserve(p);
    for (std::size_t j = 0; j < p; ++j) {
        std::optional<KindHint> hint;
        if (auto it = hints.find(names[j]); it != hints.end()) hint = it->second;

        bool any_observed = false;
        bool all_numeric = true;
        double tmp;
        for (std::size_t r = 1; r <= n; ++r) {
            const auto& f = records[r][j];
            if (cell_missing(f)) continue;
            any_observed = true;
            if (f.quoted || !detail::parse_double(f.text, tmp)) all_numeric = false;
        }
        if (!any_observed)
            throw std::runtime_error(path.string() + ": column '" + names[j] +
                                     "' entirely missing");
        const bool numeric = hint ? (*hint == KindHint::kNumeric) : all_numeric;
        if (numeric && !all_numeric)
            throw std::runtime_error(path.string() + ": column '" + names[j] +
                                     "' hinted numeric but holds non-numeric cells");
        if (numeric) {
            kinds.push_back(ColumnKind::numeric());
        } else {
            std::vector<std::string> levels;
            for (std::size_t r = 1; r <= n; ++r) {
                const auto& f = records[r][j];
                if (cell_missing(f)) continue;
                if (std::find(levels.begin(), levels.end(), f.text) == levels.end())
                    levels.push_back(f.text);
            }
            kinds.push_back(ColumnKind::categorical(std::move(levels)));
        }
    }

    Dataset d(std::move(names), std::move(kinds), n);
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t r = 0; r < n; ++r) {
            const auto& f = records[r + 1][j];
            if (cell_missing(f)) {
                d.set_missing(r, j, true);
            } else if (d.kind(j).is_numeric()) {
                double v;
                detail::parse_double(f.text, v);
                d.set_num(r, j, v);
            } else {
                const auto& levels = d.kind(j).levels();
                const auto it = std::find(levels.begin(), levels.end(), f.text);
                d.set_cat(r, j, static_cast<int>(it - levels.begin()));
            }
        }
    }
    return d;
}

// Serializes a Dataset in the dialect above: masked cells as unquoted NA,
// numeric cells in shortest round-trip form, categorical cells as their
// quoted level labels.
inline std::string to_csv(const Dataset& d) {
    std::string out;
    for (std::size_t j = 0; j < d.n_cols(); ++j) {
        if (j) out += ',';
        const auto& name = d.name(j);
        out += detail::needs_quoting(name) ? detail::quote(name) : name;
    }
    out += '\n';
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
        for (std::size_t j = 0; j < d.n_cols(); ++j) {
            if (j) out += ',';
            if (d.missing(r, j))
                out += "NA";
            else if (d.kind(j).is_numeric())
                out += detail::format_double(d.num(r, j));
            else
                out += detail::quote(d.label(r, j));
        }
        out += '\n';
    }
    return out;
}

inline void write_csv(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << to_csv(d);
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

} // namespace gbmi
