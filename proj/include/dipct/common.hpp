#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dipct {

using Real = double;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Images are dense row-major arrays so that flattening matches the
/// row-by-row pixel order used by the projection matrices and file formats.
using Image = Eigen::Array<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using SparseRM = Eigen::SparseMatrix<Real, Eigen::RowMajor>;

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline Vec to_vec(const Image& img) {
    return Eigen::Map<const Vec>(img.data(), img.size());
}

inline Image to_image(const Vec& v, Eigen::Index rows, Eigen::Index cols) {
    if (v.size() != rows * cols)
        throw ShapeError("to_image: size mismatch");
    Image out(rows, cols);
    Eigen::Map<Vec>(out.data(), out.size()) = v;
    return out;
}

inline int next_pow2(int n) {
    int p = 1;
    while (p < n) p *= 2;
    return p;
}

/// Deterministic random source.  All draws are derived from the raw 64-bit
/// stream of a mt19937_64, so sequences are reproducible across platforms
/// and standard library implementations (std::normal_distribution and
/// friends do not guarantee that).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    Real uniform01() {
        return static_cast<Real>(bits() >> 11) * 0x1.0p-53;
    }

    Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; the paired draw is cached.
    Real normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        Real u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const Real u2 = uniform01();
        const Real r = std::sqrt(-2.0 * std::log(u1));
        const Real t = 2.0 * M_PI * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    Real normal(Real mu, Real sigma) { return mu + sigma * normal(); }

    /// Uniform integer in [0, n), rejection sampled (no modulo bias).
    std::uint64_t index(std::uint64_t n) {
        if (n == 0) throw NumericError("Rng::index: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t r = bits();
        while (r >= limit) r = bits();
        return r % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[index(i)]);
    }

  private:
    // mt19937_64 raw output is specified by the standard, unlike the
    // distribution adaptors.
    std::mt19937_64 engine_;
    Real spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace dipct
