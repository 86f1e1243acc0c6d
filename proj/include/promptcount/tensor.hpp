#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pc {

// Domain / validation error. CLI maps these to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dense row-major tensor of doubles. Rank is 0 (scalar) to 4 in practice:
//   (h,w) masks and density maps, (C,h,w) feature maps and images,
//   (Cout,Cin,kh,kw) convolution weights.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(count(shape), 0.0) {}
    Tensor(std::vector<int> s, double fill) : shape(std::move(s)), v(count(shape), fill) {}

    static Tensor scalar(double x) {
        Tensor t{std::vector<int>{}};
        t.v.assign(1, x);
        return t;
    }

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw Error("negative tensor dimension");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    double& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

    // Indexed access for the common ranks. No bounds checks in release builds.
    double& at2(int y, int x) { return v[static_cast<size_t>(y) * shape[1] + x]; }
    double at2(int y, int x) const { return v[static_cast<size_t>(y) * shape[1] + x]; }
    double& at3(int c, int y, int x) {
        return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    double at3(int c, int y, int x) const {
        return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    double& at4(int a, int b, int c, int d) {
        return v[((static_cast<size_t>(a) * shape[1] + b) * static_cast<size_t>(shape[2]) + c) * shape[3] + d];
    }
    double at4(int a, int b, int c, int d) const {
        return v[((static_cast<size_t>(a) * shape[1] + b) * static_cast<size_t>(shape[2]) + c) * shape[3] + d];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double sum() const { return std::accumulate(v.begin(), v.end(), 0.0); }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

inline void require_shape(const Tensor& t, const std::vector<int>& s, const char* what) {
    if (t.shape != s)
        throw Error(std::string("shape mismatch for ") + what + ": got " + t.shape_str());
}

}  // namespace pc
