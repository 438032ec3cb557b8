#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <complex>
#include <string>
#include <vector>

namespace cfmimo {

using cdouble = std::complex<double>;

/// Dense K x L table of per-link objects (UE-major: index k * L + l).
/// Rows may also be pilots instead of UEs, e.g. the (t, l) pilot grid.
template <typename T>
class LinkGrid {
public:
    LinkGrid() = default;
    LinkGrid(int rows, int cols, const T& init = T())
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, init) {}

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }

    T& operator()(int r, int c) {
        assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
        return data_[static_cast<std::size_t>(r) * cols_ + c];
    }
    const T& operator()(int r, int c) const {
        assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
        return data_[static_cast<std::size_t>(r) * cols_ + c];
    }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

enum class PrecodingScheme { MR, RZF };

const char* to_string(PrecodingScheme scheme);
PrecodingScheme parse_scheme(const std::string& text);

}  // namespace cfmimo
