#pragma once

#include "promptcount/tensor.hpp"

#include <random>

namespace pctest {

inline pc::Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0,
                                double hi = 1.0) {
    pc::Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& x : t.v) x = dist(rng);
    return t;
}

inline double max_abs_diff(const pc::Tensor& a, const pc::Tensor& b) {
    double m = 0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool bit_equal(const pc::Tensor& a, const pc::Tensor& b) {
    return a.shape == b.shape && a.v == b.v;
}

}  // namespace pctest
