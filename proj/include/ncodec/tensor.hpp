#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ncodec {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& shape);
int64_t shape_numel(const Shape& shape);

// Dense row-major float32 array. Activations use [batch, channels, time].
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor scalar(float v) { return Tensor({1}, std::vector<float>{v}); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_.at(i < 0 ? shape_.size() + i : i); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }
    std::vector<float>& storage() { return data_; }
    const std::vector<float>& storage() const { return data_; }

    float& operator[](int64_t i) { return data_[i]; }
    float operator[](int64_t i) const { return data_[i]; }
    float item() const;

    // [B, C, T] accessors.
    float* row(int64_t b, int64_t c) { return data_.data() + (b * shape_[1] + c) * shape_[2]; }
    const float* row(int64_t b, int64_t c) const { return data_.data() + (b * shape_[1] + c) * shape_[2]; }
    float& at(int64_t b, int64_t c, int64_t t) { return row(b, c)[t]; }
    float at(int64_t b, int64_t c, int64_t t) const { return row(b, c)[t]; }

    Tensor reshaped(Shape shape) const;
    void fill(float v);
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    Shape shape_;
    std::vector<float> data_;
};

// Time-axis helpers for [B, C, T] tensors.
Tensor concat_time(const Tensor& a, const Tensor& b);
Tensor slice_time(const Tensor& x, int64_t start, int64_t length);

float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace ncodec
