#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include <unistd.h>

#include "dipct/common.hpp"
#include "dipct/tomo.hpp"

namespace testutil {

using dipct::Image;
using dipct::Mat;
using dipct::Real;
using dipct::SparseRM;
using dipct::Vec;

inline Real rel_err(const Vec& a, const Vec& b) {
    const Real d = (a - b).norm();
    const Real s = b.norm();
    return s > 0 ? d / s : d;
}

inline Real rel_err(const Image& a, const Image& b) {
    const Real d = (a - b).matrix().norm();
    const Real s = b.matrix().norm();
    return s > 0 ? d / s : d;
}

inline Mat dense(const SparseRM& s) { return Mat(s); }

/// Independent column-probe of a black-box linear map.
inline Mat probe_matrix(const std::function<Vec(const Vec&)>& f, int cols) {
    Vec e = Vec::Zero(cols);
    const Vec first = f((e[0] = 1, e));
    Mat m(first.size(), cols);
    m.col(0) = first;
    e[0] = 0;
    for (int j = 1; j < cols; ++j) {
        e[j] = 1;
        m.col(j) = f(e);
        e[j] = 0;
    }
    return m;
}

/// Central-difference gradient, written here so autodiff checks do not
/// depend on the library's own helper.
inline Vec fd_grad(const std::function<Real(const Vec&)>& f, const Vec& x, Real h) {
    Vec g(x.size());
    Vec p = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const Real orig = p[i];
        p[i] = orig + h;
        const Real up = f(p);
        p[i] = orig - h;
        const Real dn = f(p);
        p[i] = orig;
        g[i] = (up - dn) / (2 * h);
    }
    return g;
}

/// Small deterministic image with non-trivial structure.
inline Image ramp_image(int rows, int cols, Real scale = 1.0) {
    Image img(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            img(i, j) = scale * (std::sin(0.7 * i) + 0.25 * j + 0.05 * i * j);
    return img;
}

/// Fresh temporary directory for artifact tests; removed on destruction.
struct TempDir {
    std::filesystem::path dir;

    TempDir() {
        const auto base = std::filesystem::temp_directory_path();
        for (int i = 0;; ++i) {
            auto cand = base / ("dipct_test_" + std::to_string(::getpid()) + "_" +
                                std::to_string(i));
            if (std::filesystem::create_directory(cand)) {
                dir = cand;
                break;
            }
        }
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir, ec);
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

/// Benchmark geometry used by the end-to-end tests.
inline dipct::tomo::Geometry small_geometry() {
    return dipct::tomo::Geometry::parallel(16, 10, 23);
}

}  // namespace testutil
