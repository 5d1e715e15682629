#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vlalab::ag {

using Shape = std::vector<int>;

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GraphError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw ShapeError("negative extent in shape");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// Most ops treat tensors as matrices: rank-2 (rows x cols), rank-1 as a row
// vector, rank-0 as a 1x1 scalar. Higher ranks only appear in storage
// (images, codebooks) and are flattened before entering the graph.
inline int rows_of(const Shape& s) {
    if (s.empty()) return 1;
    if (s.size() == 1) return 1;
    if (s.size() == 2) return s[0];
    throw ShapeError("rank > 2 tensor used as a matrix: " + shape_str(s));
}

inline int cols_of(const Shape& s) {
    if (s.empty()) return 1;
    if (s.size() == 1) return s[0];
    if (s.size() == 2) return s[1];
    throw ShapeError("rank > 2 tensor used as a matrix: " + shape_str(s));
}

// Dense value with optional gradient. The data buffer is shared so tape
// leaves can alias parameter storage without copies.
template <typename T>
struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<T>> data;
    bool requires_grad = false;
    std::vector<T> grad;  // same numel as data when tracked, else empty

    Tensor() = default;
    Tensor(Shape s, std::shared_ptr<std::vector<T>> d, bool rg = false)
        : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
        check();
    }

    static Tensor zeros(Shape s, bool rg = false) {
        auto d = std::make_shared<std::vector<T>>(static_cast<size_t>(numel(s)), T(0));
        return Tensor(std::move(s), std::move(d), rg);
    }

    static Tensor from(Shape s, std::vector<T> v, bool rg = false) {
        if (static_cast<int64_t>(v.size()) != numel(s))
            throw ShapeError("data length does not match shape " + shape_str(s));
        return Tensor(std::move(s), std::make_shared<std::vector<T>>(std::move(v)), rg);
    }

    void check() const {
        if (!data) throw ShapeError("tensor has no storage");
        if (static_cast<int64_t>(data->size()) != numel(shape))
            throw ShapeError("data length does not match shape " + shape_str(shape));
    }

    int64_t size() const { return numel(shape); }
    int rows() const { return rows_of(shape); }
    int cols() const { return cols_of(shape); }
    T* ptr() { return data->data(); }
    const T* ptr() const { return data->data(); }
    std::vector<T>& values() { return *data; }
    const std::vector<T>& values() const { return *data; }
};

template <typename T>
inline void throw_if_not_finite(const std::vector<T>& v, const char* what) {
    for (T x : v) {
        if (!std::isfinite(static_cast<double>(x)))
            throw NonFiniteError(std::string("non-finite value produced by ") + what);
    }
}

}  // namespace vlalab::ag
