#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dain/error.hpp"

namespace dain {

/**
 * Dense row-major tensor of 32-bit floats.
 *
 * The universal numeric carrier for images, feature maps, parameters and
 * gradients. Reductions inside operations accumulate in 64-bit floats; the
 * stored payload is always f32.
 */
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape_in, float fill = 0.0f)
        : shape(std::move(shape_in)) {
        data.assign(checked_numel(shape), fill);
    }

    Tensor(std::vector<int> shape_in, std::vector<float> data_in)
        : shape(std::move(shape_in)), data(std::move(data_in)) {
        if (checked_numel(shape) != data.size())
            throw DimensionError("tensor data length does not match shape product");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, float v) { return Tensor(std::move(shape), v); }

    static Tensor from(std::vector<int> shape, std::initializer_list<float> vals) {
        return Tensor(std::move(shape), std::vector<float>(vals));
    }

    int rank() const { return static_cast<int>(shape.size()); }

    int dim(int i) const {
        assert(i >= 0 && i < rank());
        return shape[static_cast<std::size_t>(i)];
    }

    std::size_t numel() const { return data.size(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool empty() const { return data.empty(); }

    // Row-major element access.
    float& operator()(int a) { return data[static_cast<std::size_t>(a)]; }
    float operator()(int a) const { return data[static_cast<std::size_t>(a)]; }

    float& operator()(int a, int b) {
        return data[static_cast<std::size_t>(a) * shape[1] + b];
    }
    float operator()(int a, int b) const {
        return data[static_cast<std::size_t>(a) * shape[1] + b];
    }

    float& operator()(int a, int b, int c) {
        return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
    }
    float operator()(int a, int b, int c) const {
        return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
    }

    float& operator()(int a, int b, int c, int d) {
        return data[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }
    float operator()(int a, int b, int c, int d) const {
        return data[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }

    void fill(float v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape.size(); ++i)
            os << (i ? "," : "") << shape[i];
        os << "]";
        return os.str();
    }

    std::vector<int> shape;
    std::vector<float> data;

private:
    static std::size_t checked_numel(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d < 0) throw DimensionError("negative tensor dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

} // namespace dain
