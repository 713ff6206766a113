#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace gbmi {

// Column type: numeric, or categorical with an ordered list of level labels.
// Level lists are fixed for the lifetime of a Dataset.
class ColumnKind {
  public:
    static ColumnKind numeric() { return ColumnKind{}; }

    static ColumnKind categorical(std::vector<std::string> levels) {
        if (levels.empty())
            throw std::invalid_argument("categorical column needs at least one level");
        std::unordered_set<std::string> seen;
        for (const auto& l : levels)
            if (!seen.insert(l).second)
                throw std::invalid_argument("duplicate categorical level: '" + l + "'");
        ColumnKind k;
        k.levels_ = std::move(levels);
        k.categorical_ = true;
        return k;
    }

    bool is_numeric() const { return !categorical_; }
    bool is_categorical() const { return categorical_; }

    const std::vector<std::string>& levels() const { return levels_; }
    int level_count() const { return static_cast<int>(levels_.size()); }

    // One-hot width: L indicator columns for L levels, 1 for numeric.
    int encoded_width() const { return categorical_ ? level_count() : 1; }

    bool operator==(const ColumnKind& o) const {
        return categorical_ == o.categorical_ && levels_ == o.levels_;
    }

  private:
    ColumnKind() = default;
    bool categorical_ = false;
    std::vector<std::string> levels_;
};

// Column-typed in-memory table with an explicit missingness mask
// (true = missing). Unmasked numeric cells are finite; unmasked categorical
// cells hold a valid level index. Immutable once built by the readers and
// generators; the imputation engine works on private copies.
class Dataset {
  public:
    Dataset(std::vector<std::string> names, std::vector<ColumnKind> kinds, std::size_t n_rows)
        : names_(std::move(names)), kinds_(std::move(kinds)), n_rows_(n_rows) {
        if (names_.empty() || names_.size() != kinds_.size())
            throw std::invalid_argument("dataset needs matching, non-empty names and kinds");
        if (n_rows_ == 0) throw std::invalid_argument("dataset needs at least one row");
        num_.resize(n_cols());
        cat_.resize(n_cols());
        mask_.resize(n_cols());
        for (std::size_t j = 0; j < n_cols(); ++j) {
            if (kinds_[j].is_numeric())
                num_[j].assign(n_rows_, 0.0);
            else
                cat_[j].assign(n_rows_, 0);
            mask_[j].assign(n_rows_, 0);
        }
    }

    std::size_t n_rows() const { return n_rows_; }
    std::size_t n_cols() const { return names_.size(); }

    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(std::size_t j) const { return names_.at(j); }
    const ColumnKind& kind(std::size_t j) const { return kinds_.at(j); }

    // Index of a named column, -1 if absent.
    int col_index(const std::string& name) const {
        for (std::size_t j = 0; j < names_.size(); ++j)
            if (names_[j] == name) return static_cast<int>(j);
        return -1;
    }

    bool missing(std::size_t r, std::size_t j) const { return mask_[j][r] != 0; }
    void set_missing(std::size_t r, std::size_t j, bool m) { mask_[j][r] = m ? 1 : 0; }

    std::size_t missing_count(std::size_t j) const {
        return std::accumulate(mask_[j].begin(), mask_[j].end(), std::size_t{0});
    }

    bool complete() const {
        for (std::size_t j = 0; j < n_cols(); ++j)
            if (missing_count(j) != 0) return false;
        return true;
    }

    double num(std::size_t r, std::size_t j) const {
        require_numeric(j);
        return num_[j][r];
    }
    void set_num(std::size_t r, std::size_t j, double v) {
        require_numeric(j);
        if (!std::isfinite(v)) throw std::invalid_argument("numeric cell must be finite");
        num_[j][r] = v;
    }

    int cat(std::size_t r, std::size_t j) const {
        require_categorical(j);
        return cat_[j][r];
    }
    void set_cat(std::size_t r, std::size_t j, int level) {
        require_categorical(j);
        if (level < 0 || level >= kinds_[j].level_count())
            throw std::invalid_argument("level index out of range for column '" + names_[j] + "'");
        cat_[j][r] = level;
    }

    const std::string& label(std::size_t r, std::size_t j) const {
        return kinds_[j].levels().at(static_cast<std::size_t>(cat(r, j)));
    }

    // Checks the stored invariants; throws on the first violation.
    void validate() const {
        for (std::size_t j = 0; j < n_cols(); ++j)
            for (std::size_t r = 0; r < n_rows_; ++r) {
                if (missing(r, j)) continue;
                if (kinds_[j].is_numeric()) {
                    if (!std::isfinite(num_[j][r]))
                        throw std::runtime_error("non-finite cell in column '" + names_[j] + "'");
                } else if (cat_[j][r] < 0 || cat_[j][r] >= kinds_[j].level_count()) {
                    throw std::runtime_error("bad level index in column '" + names_[j] + "'");
                }
            }
    }

    bool operator==(const Dataset& o) const {
        return names_ == o.names_ && kinds_ == o.kinds_ && n_rows_ == o.n_rows_ &&
               num_ == o.num_ && cat_ == o.cat_ && mask_ == o.mask_;
    }

  private:
    void require_numeric(std::size_t j) const {
        if (!kinds_.at(j).is_numeric())
            throw std::logic_error("column '" + names_[j] + "' is not numeric");
    }
    void require_categorical(std::size_t j) const {
        if (!kinds_.at(j).is_categorical())
            throw std::logic_error("column '" + names_[j] + "' is not categorical");
    }

    std::vector<std::string> names_;
    std::vector<ColumnKind> kinds_;
    std::size_t n_rows_;
    std::vector<std::vector<double>> num_;       // per numeric column
    std::vector<std::vector<std::int32_t>> cat_; // per categorical column
    std::vector<std::vector<std::uint8_t>> mask_;
};

// Where an encoded column came from: source column index plus the level it
// indicates (-1 for a numeric pass-through column).
struct EncodedColumn {
    int source = -1;
    int level = -1;
    bool operator==(const EncodedColumn&) const = default;
};

// Dense real matrix produced by one-hot encoding, column-major.
class EncodedMatrix {
  public:
    EncodedMatrix(std::size_t rows, std::vector<EncodedColumn> map)
        : rows_(rows), map_(std::move(map)), data_(rows_ * map_.size(), 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return map_.size(); }
    const std::vector<EncodedColumn>& column_map() const { return map_; }

    double at(std::size_t r, std::size_t c) const { return data_[c * rows_ + r]; }
    double& at(std::size_t r, std::size_t c) { return data_[c * rows_ + r]; }

    std::span<const double> col(std::size_t c) const {
        return {data_.data() + c * rows_, rows_};
    }

  private:
    std::size_t rows_;
    std::vector<EncodedColumn> map_;
    std::vector<double> data_;
};

// One-hot encodes the selected rows of every column except exclude_col.
// Column order is deterministic: source order, then level order. The rows
// span may contain repeated indices (bootstrap resamples). All touched cells
// must be observed; hitting a masked cell means the caller sequenced the
// imputation incorrectly.
inline EncodedMatrix one_hot_encode(const Dataset& d, std::size_t exclude_col,
                                    std::span<const std::size_t> rows) {
    if (exclude_col >= d.n_cols()) throw std::invalid_argument("exclude column out of range");
    std::vector<EncodedColumn> map;
    for (std::size_t j = 0; j < d.n_cols(); ++j) {
        if (j == exclude_col) continue;
        if (d.kind(j).is_numeric()) {
            map.push_back({static_cast<int>(j), -1});
        } else {
            for (int l = 0; l < d.kind(j).level_count(); ++l)
                map.push_back({static_cast<int>(j), l});
        }
    }
    EncodedMatrix m(rows.size(), std::move(map));
    std::size_t c = 0;
    for (std::size_t j = 0; j < d.n_cols(); ++j) {
        if (j == exclude_col) continue;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (d.missing(rows[i], j))
                throw std::runtime_error("one_hot_encode hit a masked cell in column '" +
                                         d.name(j) + "' (imputation sequencing bug)");
        if (d.kind(j).is_numeric()) {
            for (std::size_t i = 0; i < rows.size(); ++i) m.at(i, c) = d.num(rows[i], j);
            ++c;
        } else {
            for (std::size_t i = 0; i < rows.size(); ++i)
                m.at(i, c + static_cast<std::size_t>(d.cat(rows[i], j))) = 1.0;
            c += static_cast<std::size_t>(d.kind(j).level_count());
        }
    }
    return m;
}

inline EncodedMatrix one_hot_encode(const Dataset& d, std::size_t exclude_col) {
    std::vector<std::size_t> rows(d.n_rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return one_hot_encode(d, exclude_col, rows);
}

} // namespace gbmi
