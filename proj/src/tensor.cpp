#include "ncodec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "ncodec/error.hpp"

namespace ncodec {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw Error(ErrorKind::shape, "negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
        throw Error(ErrorKind::shape, "tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                                    shape_str(shape_));
}

float Tensor::item() const {
    if (data_.size() != 1) throw Error(ErrorKind::state, "item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
        throw Error(ErrorKind::shape, "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor concat_time(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1))
        throw Error(ErrorKind::shape, "concat_time shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int64_t B = a.dim(0), C = a.dim(1), Ta = a.dim(2), Tb = b.dim(2);
    Tensor out({B, C, Ta + Tb});
    for (int64_t i = 0; i < B; ++i)
        for (int64_t c = 0; c < C; ++c) {
            float* dst = out.row(i, c);
            if (Ta) std::memcpy(dst, a.row(i, c), sizeof(float) * Ta);
            if (Tb) std::memcpy(dst + Ta, b.row(i, c), sizeof(float) * Tb);
        }
    return out;
}

Tensor slice_time(const Tensor& x, int64_t start, int64_t length) {
    if (x.rank() != 3 || start < 0 || length < 0 || start + length > x.dim(2))
        throw Error(ErrorKind::shape, "slice_time [" + std::to_string(start) + ", +" + std::to_string(length) + ") of " +
                                shape_str(x.shape()));
    const int64_t B = x.dim(0), C = x.dim(1);
    Tensor out({B, C, length});
    for (int64_t i = 0; i < B; ++i)
        for (int64_t c = 0; c < C; ++c)
            if (length) std::memcpy(out.row(i, c), x.row(i, c) + start, sizeof(float) * length);
    return out;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw Error(ErrorKind::shape, "max_abs_diff size mismatch");
    float m = 0.0f;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace ncodec
