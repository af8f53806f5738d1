#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace rsrl::num {

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Dense row-major tensor of 64-bit reals. Rank 0 is a scalar (one element).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor vec(std::vector<double> v);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    void fill(double v);
    std::string shape_string() const { return shape_str(shape_); }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

// One tensor record, little-endian: magic "RSRL", u32 rank, u32 dims..., f64 payload.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

// Ordered collection of named parameter tensors. Checkpoints serialize every
// entry in insertion order, each as a length-prefixed name followed by an
// RSRL tensor record.
class ParamStore {
public:
    int add(std::string name, Tensor value);
    int size() const { return static_cast<int>(values_.size()); }
    Tensor& value(int i) { return values_[static_cast<std::size_t>(i)]; }
    const Tensor& value(int i) const { return values_[static_cast<std::size_t>(i)]; }
    const std::string& name(int i) const { return names_[static_cast<std::size_t>(i)]; }
    int index_of(const std::string& name) const;  // -1 when absent
    std::size_t parameter_count() const;

    void save(std::ostream& os) const;
    static ParamStore load(std::istream& is);

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
};

}  // namespace rsrl::num
