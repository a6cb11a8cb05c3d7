#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace cbs {

/// Malformed or contract-violating input (schema errors, dimension
/// mismatches, non-finite values). CLI maps this to exit code 2.
struct invalid_input : std::runtime_error {
    explicit invalid_input(const std::string& msg) : std::runtime_error(msg) {}
};

/// Statistically degenerate data (single-arm treatment, arm smaller than
/// two, all-zero screening signal). CLI maps this to exit code 3.
struct degenerate_data : std::runtime_error {
    explicit degenerate_data(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require_finite(std::span<const double> v, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw invalid_input(std::string(what) + ": non-finite value at position " +
                                std::to_string(i));
        }
    }
}

/// Ordered list of finite reals. Length n >= 2 is required by the
/// statistics that consume it, not by construction (predictions etc. may
/// be shorter); finiteness is a construction invariant.
class Sample {
public:
    Sample() = default;
    explicit Sample(std::vector<double> values) : values_(std::move(values)) {
        require_finite(values_, "Sample");
    }

    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> values() const { return values_; }

private:
    std::vector<double> values_;
};

/// Binary treatment labels paired with samples of the same length.
class ArmLabels {
public:
    ArmLabels() = default;
    explicit ArmLabels(std::vector<std::uint8_t> labels) : labels_(std::move(labels)) {
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (labels_[i] > 1) {
                throw invalid_input("ArmLabels: entry " + std::to_string(i) +
                                    " is not in {0,1}");
            }
            n1_ += labels_[i];
        }
    }

    std::size_t size() const { return labels_.size(); }
    std::uint8_t operator[](std::size_t i) const { return labels_[i]; }
    std::span<const std::uint8_t> values() const { return labels_; }

    std::size_t n1() const { return n1_; }
    std::size_t n0() const { return labels_.size() - n1_; }
    double omega_hat() const {
        return static_cast<double>(n1_) / static_cast<double>(labels_.size());
    }

private:
    std::vector<std::uint8_t> labels_;
    std::size_t n1_ = 0;
};

/// Dense column-major matrix. Plain storage used by the solvers; no
/// ownership tricks, columns are contiguous spans.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw invalid_input("Matrix: storage size does not match dimensions");
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& at(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
    double at(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

    std::span<const double> col(std::size_t j) const {
        return std::span<const double>(data_.data() + j * rows_, rows_);
    }
    std::span<double> col_mut(std::size_t j) {
        return std::span<double>(data_.data() + j * rows_, rows_);
    }

    std::span<const double> storage() const { return data_; }

    /// Row-subset copy (used to split by treatment arm).
    Matrix take_rows(std::span<const std::size_t> idx) const {
        Matrix out(idx.size(), cols_);
        for (std::size_t j = 0; j < cols_; ++j) {
            auto src = col(j);
            auto dst = out.col_mut(j);
            for (std::size_t r = 0; r < idx.size(); ++r) dst[r] = src[idx[r]];
        }
        return out;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

/// Named covariate matrix: p columns of common length n, distinct names.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(Matrix m, std::vector<std::string> names)
        : m_(std::move(m)), names_(std::move(names)) {
        if (names_.size() != m_.cols()) {
            throw invalid_input("FeatureMatrix: name count does not match columns");
        }
        if (m_.cols() == 0) throw invalid_input("FeatureMatrix: needs p >= 1 columns");
        std::unordered_set<std::string> seen;
        for (const auto& nm : names_) {
            if (!seen.insert(nm).second) {
                throw invalid_input("FeatureMatrix: duplicate column name '" + nm + "'");
            }
        }
        require_finite(m_.storage(), "FeatureMatrix");
    }

    std::size_t n() const { return m_.rows(); }
    std::size_t p() const { return m_.cols(); }
    std::span<const double> col(std::size_t j) const { return m_.col(j); }
    const std::string& name(std::size_t j) const { return names_[j]; }
    const std::vector<std::string>& names() const { return names_; }
    const Matrix& matrix() const { return m_; }

private:
    Matrix m_;
    std::vector<std::string> names_;
};

/// FNV-1a 64-bit, used for config hashes and input digests in report
/// provenance.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t len,
                             std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::span<const double> v,
                             std::uint64_t h = 1469598103934665603ull) {
    return fnv1a64(v.data(), v.size() * sizeof(double), h);
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = 1469598103934665603ull) {
    return fnv1a64(s.data(), s.size(), h);
}

}  // namespace cbs
