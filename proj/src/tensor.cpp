#include "edgeprompt/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "edgeprompt/error.hpp"

namespace edgeprompt {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols) {
        std::ostringstream msg;
        msg << "data length " << data_.size() << " does not match shape " << rows << "x" << cols;
        throw Error(ErrorKind::Shape, msg.str());
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw Error(ErrorKind::Shape, "ragged rows in from_rows");
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(values));
}

double Tensor::item() const {
    if (rows_ != 1 || cols_ != 1) throw Error(ErrorKind::Shape, "item() on " + shape_string());
    return data_[0];
}

std::string Tensor::shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
    if (!a.same_shape(b)) return false;
    return a.size() == 0 ||
           std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

double frobenius_norm(const Tensor& a) noexcept {
    double s = 0.0;
    for (double v : a.values()) s += v * v;
    return std::sqrt(s);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw Error(ErrorKind::Shape,
                    std::string(what) + ": " + a.shape_string() + " vs " + b.shape_string());
}

}  // namespace edgeprompt
