#include "csinet/tensor.hpp"

#include <cmath>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace {

// Activation tensors run to tens of megabytes and are allocated and freed on
// every batch. Keep them on the heap instead of per-call mmap/munmap cycles,
// which cost a page fault per touched page each time around.
struct MallocTuning {
    MallocTuning() {
#if defined(__GLIBC__)
        ::mallopt(M_MMAP_THRESHOLD, 64 << 20);
        ::mallopt(M_TRIM_THRESHOLD, 64 << 20);
#endif
    }
};
const MallocTuning g_malloc_tuning;

}  // namespace

namespace csinet {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("dimension sizes must be positive, got " + std::to_string(d));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
        throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " + shape_str());
    }
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::from(std::initializer_list<float> values) {
    return Tensor({static_cast<int>(values.size())}, std::vector<float>(values));
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
    if (shape_numel(new_shape) != numel()) {
        throw ShapeError("cannot reshape " + shape_str() + " to an incompatible element count");
    }
    return Tensor(std::move(new_shape), data_);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ", ";
        os << shape_[i];
    }
    os << ']';
    return os.str();
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::sum_squares() const {
    double s = 0.0;
    for (float v : data_) s += static_cast<double>(v) * v;
    return s;
}

void Tensor::fill(float value) {
    for (float& v : data_) v = value;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

}  // namespace csinet
