#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vvt/errors.hpp"

namespace vvt {

// Dense row-major double tensor. Small on purpose: desk-scale clips only.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    static std::size_t count(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            assert(d >= 0);
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    template <class... Ix>
    double& at(Ix... ix) {
        return data_[flat(ix...)];
    }
    template <class... Ix>
    double at(Ix... ix) const {
        return data_[flat(ix...)];
    }

    template <class... Ix>
    std::size_t flat(Ix... ix) const {
        assert(sizeof...(Ix) == shape_.size());
        std::size_t idx = 0;
        std::size_t k = 0;
        ((idx = idx * static_cast<std::size_t>(shape_[k]) +
                static_cast<std::size_t>(ix),
          ++k),
         ...);
        assert(idx < data_.size());
        return idx;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Tensor& o) const {
        return shape_ == o.shape_ && data_ == o.data_;
    }

  private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

inline std::string shape_str(const Tensor& t) {
    std::string s = "(";
    for (int i = 0; i < t.rank(); ++i) {
        if (i) s += ",";
        s += std::to_string(t.dim(i));
    }
    return s + ")";
}

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* what) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(what) + ": shape mismatch " +
                             shape_str(a) + " vs " + shape_str(b));
}

inline double sum(const Tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t[i];
    return s;
}

inline double max_abs(const Tensor& t) {
    double m = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) m = std::max(m, std::fabs(t[i]));
    return m;
}

inline bool all_finite(const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i])) return false;
    return true;
}

inline double mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    if (a.size() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

using Rng = std::mt19937_64;

inline void fill_normal(Tensor& t, Rng& rng, double mean = 0.0,
                        double stddev = 1.0) {
    std::normal_distribution<double> dist(mean, stddev);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
}

inline void fill_uniform(Tensor& t, Rng& rng, double lo = 0.0,
                         double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
}

}  // namespace vvt
