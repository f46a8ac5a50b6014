#include "symmetria/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace symmetria {

int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

Tensor::Tensor(Shape shape, Precision prec) : shape_(std::move(shape)), prec_(prec) {
    for (int64_t d : shape_)
        if (d <= 0) throw TensorError("non-positive dimension in shape " + shape_str(shape_));
    data_.assign(static_cast<size_t>(numel(shape_)), 0.0);
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    Tensor t(std::move(shape));
    if (static_cast<int64_t>(values.size()) != t.size())
        throw TensorError("value count " + std::to_string(values.size()) +
                          " does not match shape " + shape_str(t.shape()));
    t.data_ = std::move(values);
    return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

int64_t Tensor::offset(const std::vector<int64_t>& idx) const {
    if (idx.size() != shape_.size()) throw TensorError("index rank mismatch");
    int64_t off = 0;
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= shape_[i]) throw TensorError("index out of range");
        off = off * shape_[i] + idx[i];
    }
    return off;
}

void Tensor::set_precision(Precision p) {
    prec_ = p;
    quantize();
}

void Tensor::quantize() {
    if (prec_ == Precision::Real32)
        for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
    quantize();
}

Tensor Tensor::reshaped(Shape s) const {
    if (numel(s) != size())
        throw TensorError("reshape " + shape_str(shape_) + " -> " + shape_str(s) +
                          " changes element count");
    Tensor t = *this;
    t.shape_ = std::move(s);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::add_scaled(const Tensor& o, double alpha) {
    if (!same_shape(o)) throw TensorError("add_scaled shape mismatch");
    for (int64_t i = 0; i < size(); ++i) data_[static_cast<size_t>(i)] += alpha * o.data_[static_cast<size_t>(i)];
    quantize();
}

void Tensor::scale(double alpha) {
    for (double& v : data_) v *= alpha;
    quantize();
}

double Tensor::dot(const Tensor& o) const {
    if (!same_shape(o)) throw TensorError("dot shape mismatch");
    double s = 0;
    for (int64_t i = 0; i < size(); ++i) s += data_[static_cast<size_t>(i)] * o.data_[static_cast<size_t>(i)];
    return s;
}

double Tensor::squared_norm() const { return dot(*this); }

double Tensor::max_abs() const {
    double m = 0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
        st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * s[static_cast<size_t>(i) + 1];
    return st;
}

}  // namespace symmetria
