#pragma once
// Dense row-major real tensor. The single value type for features, weights and
// curvature factors. All arithmetic runs in double; a tensor tagged Real32 has
// its storage rounded through float after every mutating public operation.
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace symmetria {

enum class Precision { Real32, Real64 };

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, Precision prec = Precision::Real64);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double v);  // shape {1}

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& flat(int64_t i) { return data_[static_cast<size_t>(i)]; }
    double flat(int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // row-major multi-index access
    int64_t offset(const std::vector<int64_t>& idx) const;
    double& at(const std::vector<int64_t>& idx) { return data_[static_cast<size_t>(offset(idx))]; }
    double at(const std::vector<int64_t>& idx) const { return data_[static_cast<size_t>(offset(idx))]; }

    Precision precision() const { return prec_; }
    void set_precision(Precision p);  // Real32 re-rounds storage
    void quantize();                  // applies the precision tag to storage

    void fill(double v);
    Tensor reshaped(Shape s) const;  // same element order
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    // small in-place helpers used by optimisers and accumulators
    void add_scaled(const Tensor& o, double alpha);  // this += alpha * o
    void scale(double alpha);
    double dot(const Tensor& o) const;
    double squared_norm() const;
    double max_abs() const;

private:
    Shape shape_;
    std::vector<double> data_;
    Precision prec_ = Precision::Real64;
};

// shape utilities shared by the op implementations
std::vector<int64_t> row_major_strides(const Shape& s);

struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace symmetria
