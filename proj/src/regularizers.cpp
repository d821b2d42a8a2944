#include "dipct/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dipct::reg {

GradField grad_D(const Image& u) {
    const Eigen::Index h = u.rows(), w = u.cols();
    GradField p{Image::Zero(h, w), Image::Zero(h, w)};
    if (w > 1)
        p.x.leftCols(w - 1) = u.rightCols(w - 1) - u.leftCols(w - 1);
    if (h > 1)
        p.y.topRows(h - 1) = u.bottomRows(h - 1) - u.topRows(h - 1);
    return p;
}

Image grad_adjoint(const GradField& p) {
    const Eigen::Index h = p.x.rows(), w = p.x.cols();
    Image out = Image::Zero(h, w);
    // Coefficient of u(r,c) in ⟨Du, p⟩; boundary entries of p are excluded
    // exactly as they are absent from the forward sum.
    for (Eigen::Index r = 0; r < h; ++r)
        for (Eigen::Index c = 0; c < w; ++c) {
            Real acc = 0;
            if (c >= 1) acc += p.x(r, c - 1);
            if (c < w - 1) acc -= p.x(r, c);
            if (r >= 1) acc += p.y(r - 1, c);
            if (r < h - 1) acc -= p.y(r, c);
            out(r, c) = acc;
        }
    return out;
}

Image div(const GradField& p) { return -grad_adjoint(p); }

Real tv_value(const Image& u) {
    const GradField p = grad_D(u);
    return (p.x.square() + p.y.square()).sqrt().sum();
}

Real tv_value_smoothed(const Image& u, Real eps) {
    const GradField p = grad_D(u);
    return (p.x.square() + p.y.square() + eps * eps).sqrt().sum();
}

Image tv_grad_smoothed(const Image& u, Real eps) {
    if (eps <= 0) throw ConfigError("tv_grad_smoothed: eps must be > 0");
    GradField p = grad_D(u);
    const Image norm = (p.x.square() + p.y.square() + eps * eps).sqrt();
    p.x /= norm;
    p.y /= norm;
    return grad_adjoint(p);
}

Image tv_prox(const Image& v, Real alpha, Real tol, int max_iter) {
    if (alpha < 0) throw ConfigError("tv_prox: alpha must be ≥ 0");
    if (alpha == 0) return v;

    const Eigen::Index h = v.rows(), w = v.cols();
    GradField p{Image::Zero(h, w), Image::Zero(h, w)};
    GradField q = p;
    Real t = 1.0;
    Real prev_obj = std::numeric_limits<Real>::infinity();
    Image u = v;

    for (int it = 0; it < max_iter; ++it) {
        u = v - alpha * grad_adjoint(q);
        const GradField step = grad_D(u);
        GradField pn{q.x + step.x / (8.0 * alpha), q.y + step.y / (8.0 * alpha)};
        const Image norm = (pn.x.square() + pn.y.square()).sqrt().max(1.0);
        pn.x /= norm;
        pn.y /= norm;

        const Real tn = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
        const Real m = (t - 1.0) / tn;
        q.x = pn.x + m * (pn.x - p.x);
        q.y = pn.y + m * (pn.y - p.y);
        p = pn;
        t = tn;

        const Real obj = 0.5 * (v - alpha * grad_adjoint(p)).square().sum();
        if (it > 0 && std::abs(prev_obj - obj) <= tol * std::max(obj, Real(1e-30)))
            break;
        prev_obj = obj;
    }
    return v - alpha * grad_adjoint(p);
}

GradField group_soft_threshold(const GradField& v, const WeightMap& thresholds) {
    if (thresholds.rows() != v.x.rows() || thresholds.cols() != v.x.cols())
        throw ShapeError("group_soft_threshold: extent mismatch");
    if ((thresholds < 0).any())
        throw ConfigError("group_soft_threshold: thresholds must be ≥ 0");
    const Image norm = (v.x.square() + v.y.square()).sqrt();
    Image factor(norm.rows(), norm.cols());
    for (Eigen::Index i = 0; i < norm.size(); ++i) {
        const Real n = norm.data()[i];
        factor.data()[i] =
            n > 0 ? std::max(Real(0), 1.0 - thresholds.data()[i] / n) : Real(0);
    }
    return {v.x * factor, v.y * factor};
}

WeightMap adaptive_weights(const Image& x, Real residual_sq) {
    const Eigen::Index n = x.size();
    const GradField p = grad_D(x);
    const Image norm = (p.x.square() + p.y.square()).sqrt();
    Real eps_w = 1e-6 * (x.maxCoeff() - x.minCoeff());
    if (eps_w <= 0) eps_w = 1e-12;  // constant image: keep weights finite
    return residual_sq / (static_cast<Real>(n) * norm.max(eps_w));
}

Image gaussian_blur(const Image& x, Real sigma) {
    if (sigma <= 0) return x;
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<Real> k(static_cast<std::size_t>(2 * r + 1));
    Real sum = 0;
    for (int i = -r; i <= r; ++i) {
        k[static_cast<std::size_t>(i + r)] =
            std::exp(-0.5 * static_cast<Real>(i) * static_cast<Real>(i) /
                     (sigma * sigma));
        sum += k[static_cast<std::size_t>(i + r)];
    }
    for (auto& v : k) v /= sum;

    // Half-sample symmetric reflection: ..., x1, x0 | x0, x1, ...
    auto reflect = [](Eigen::Index i, Eigen::Index n) {
        while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - 1 - i;
        return i;
    };

    const Eigen::Index h = x.rows(), w = x.cols();
    Image tmp(h, w), out(h, w);
    for (Eigen::Index row = 0; row < h; ++row)
        for (Eigen::Index c = 0; c < w; ++c) {
            Real acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += k[static_cast<std::size_t>(i + r)] * x(row, reflect(c + i, w));
            tmp(row, c) = acc;
        }
    for (Eigen::Index row = 0; row < h; ++row)
        for (Eigen::Index c = 0; c < w; ++c) {
            Real acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += k[static_cast<std::size_t>(i + r)] * tmp(reflect(row + i, h), c);
            out(row, c) = acc;
        }
    return out;
}

Image median_filter(const Image& x, int radius) {
    if (radius <= 0) return x;
    const Eigen::Index h = x.rows(), w = x.cols();
    Image out(h, w);
    std::vector<Real> window;
    window.reserve(static_cast<std::size_t>((2 * radius + 1) * (2 * radius + 1)));
    for (Eigen::Index r = 0; r < h; ++r)
        for (Eigen::Index c = 0; c < w; ++c) {
            window.clear();
            for (int dr = -radius; dr <= radius; ++dr)
                for (int dc = -radius; dc <= radius; ++dc) {
                    const Eigen::Index rr = std::clamp<Eigen::Index>(r + dr, 0, h - 1);
                    const Eigen::Index cc = std::clamp<Eigen::Index>(c + dc, 0, w - 1);
                    window.push_back(x(rr, cc));
                }
            auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
            std::nth_element(window.begin(), mid, window.end());
            out(r, c) = *mid;
        }
    return out;
}

Image denoise_with_strength(const DenoiserSpec& d, const Image& x, Real strength) {
    switch (d.kind) {
        case DenoiserSpec::Kind::GaussianBlur:
            return gaussian_blur(x, strength);
        case DenoiserSpec::Kind::Median: {
            const int radius =
                std::clamp(static_cast<int>(std::lround(strength)), 0, 3);
            return median_filter(x, radius);
        }
        case DenoiserSpec::Kind::TvProx:
            return tv_prox(x, strength, d.tol, d.max_iter);
    }
    throw ConfigError("denoise: unknown kind");
}

Image denoise(const DenoiserSpec& d, const Image& x) {
    return denoise_with_strength(d, x, d.strength);
}

Real red_value(const DenoiserSpec& d, const Image& x) {
    const Image r = x - denoise(d, x);
    return 0.5 * (x * r).sum();
}

Image red_grad(const DenoiserSpec& d, const Image& x) {
    return x - denoise(d, x);
}

}  // namespace dipct::reg
