#include "dipct/ddbound.hpp"

#include <cmath>
#include <future>
#include <sstream>
#include <utility>

#include "dipct/autodiff.hpp"
#include "dipct/io.hpp"

namespace dipct::ddbound {

void OneLayerDD::validate() const {
    if (u0.rows() < 1 || u0.cols() < 1) throw ShapeError("OneLayerDD: empty upsampling");
    if (x0.rows() != u0.cols()) throw ShapeError("OneLayerDD: x0 rows must match u0 cols");
    if (x0.cols() < 1) throw ShapeError("OneLayerDD: k must be positive");
    if (c0.rows() != x0.cols() || c0.cols() != x0.cols())
        throw ShapeError("OneLayerDD: c0 must be k x k");
    if (c1.size() != x0.cols()) throw ShapeError("OneLayerDD: c1 must have k entries");
}

Vec OneLayerDD::forward() const {
    return (u0 * x0 * c0).cwiseMax(Real(0)) * c1;
}

OneLayerDD make_decoder(int side, int side0, int k, std::uint64_t seed) {
    if (side0 < 1 || side < side0 || side % side0 != 0)
        throw ConfigError("make_decoder: side must be a positive multiple of side0");
    if (k < 1) throw ConfigError("make_decoder: k must be positive");

    const int factor = side / side0;
    const int n = side * side;
    const int n0 = side0 * side0;

    OneLayerDD dd;
    dd.u0 = Mat::Zero(n, n0);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            const int coarse = (r / factor) * side0 + (c / factor);
            dd.u0(r * side + c, coarse) = 1.0;
        }
    }

    // Explicit fill order so the draw sequence is pinned (NullaryExpr does
    // not guarantee an evaluation order).
    Rng rng(seed);
    const Real scale = 1.0 / std::sqrt(static_cast<Real>(k));
    dd.x0.resize(n0, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < n0; ++i) dd.x0(i, j) = rng.normal();
    dd.c0.resize(k, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < k; ++i) dd.c0(i, j) = scale * rng.normal();
    dd.c1.resize(k);
    for (int i = 0; i < k; ++i) dd.c1[i] = scale * rng.normal();
    return dd;
}

Real assumption_value(int k, int n0, int n) {
    if (k < 1 || n0 < 1 || n < 1) throw ConfigError("assumption_value: dimensions must be positive");
    return static_cast<Real>(k) * k * std::log(static_cast<Real>(n0)) / n;
}

Real noise_bound(int k, int n0, int n) {
    return 1.0 - 20.0 * assumption_value(k, n0, n);
}

void FitConfig::validate() const {
    if (steps < 0) throw ConfigError("FitConfig: steps must be non-negative");
    if (!(lr > 0)) throw ConfigError("FitConfig: lr must be positive");
}

FitResult fit_noise(OneLayerDD dd, const Vec& eta, const FitConfig& cfg) {
    cfg.validate();
    dd.validate();
    if (eta.size() != dd.n()) throw ShapeError("fit_noise: eta length must match output dim");
    const Real eta_sq = eta.squaredNorm();
    if (!(eta_sq > 0)) throw NumericError("fit_noise: eta must be non-zero");

    FitResult res;
    res.assumption = assumption_value(dd.k(), dd.n0(), dd.n());
    res.bound = noise_bound(dd.k(), dd.n0(), dd.n());
    res.assumption_ok = res.assumption <= 1.0 / 32.0;
    if (!res.assumption_ok && !cfg.force) {
        std::ostringstream msg;
        msg << "fit_noise: k^2 ln(n0)/n = " << res.assumption
            << " exceeds 1/32; the guarantee does not apply (set force to run anyway)";
        throw ConfigError(msg.str());
    }

    const int k = dd.k();
    if (cfg.freeze_c1) dd.c1.setZero();

    // B = U0 x0 is fixed, so each step costs two n x k products plus the
    // Adam update on k^2 + k entries.
    const Mat b = dd.u0 * dd.x0;

    auto ratio_now = [&]() {
        return (dd.forward() - eta).squaredNorm() / eta_sq;
    };
    res.initial_ratio = ratio_now();

    // Packed parameter vector: C0 column-major, then c1.
    const int p = k * k + k;
    Vec theta(p);
    theta.head(k * k) = Eigen::Map<const Vec>(dd.c0.data(), k * k);
    theta.tail(k) = dd.c1;
    ad::AdamState state = ad::AdamState::init(p);

    Vec grad(p);
    for (int it = 0; it < cfg.steps; ++it) {
        const Mat h = b * dd.c0;
        const Mat relu = h.cwiseMax(Real(0));
        const Vec resid = relu * dd.c1 - eta;
        // d||resid||^2 / dc1 = 2 relu^T resid;
        // d/dC0 routes resid c1^T through the active-set mask of h.
        grad.tail(k) = 2.0 * (relu.transpose() * resid);
        const Mat dh = ((h.array() > 0).cast<Real>() *
                        (resid * dd.c1.transpose()).array()).matrix();
        const Mat dc0 = 2.0 * (b.transpose() * dh);
        grad.head(k * k) = Eigen::Map<const Vec>(dc0.data(), k * k);
        if (cfg.freeze_c1) grad.tail(k).setZero();

        ad::adam_step(theta, grad, state, cfg.lr);
        dd.c0 = Eigen::Map<const Mat>(theta.data(), k, k);
        dd.c1 = theta.tail(k);
    }

    res.ratio = ratio_now();
    if (!std::isfinite(res.ratio)) throw NumericError("fit_noise: diverged (non-finite residual)");
    res.trained = std::move(dd);
    return res;
}

std::vector<BoundRow> bound_experiment(int side, int side0, int k, int n_seeds,
                                       Real sigma, const FitConfig& cfg,
                                       int n_threads) {
    if (n_seeds < 1) throw ConfigError("bound_experiment: n_seeds must be positive");
    if (!(sigma > 0)) throw ConfigError("bound_experiment: sigma must be positive");
    if (n_threads < 1) throw ConfigError("bound_experiment: n_threads must be positive");
    cfg.validate();

    auto run_one = [&](std::uint64_t seed) {
        OneLayerDD dd = make_decoder(side, side0, k, seed);
        Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
        Vec eta(dd.n());
        for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = sigma * rng.normal();
        FitResult fit = fit_noise(std::move(dd), eta, cfg);
        BoundRow row;
        row.k = k;
        row.n0 = side0 * side0;
        row.n = side * side;
        row.bound = fit.bound;
        row.achieved_ratio = fit.ratio;
        row.seed = seed;
        return row;
    };

    std::vector<BoundRow> rows(static_cast<std::size_t>(n_seeds));
    if (n_threads == 1) {
        for (int s = 0; s < n_seeds; ++s) rows[s] = run_one(static_cast<std::uint64_t>(s + 1));
        return rows;
    }
    // Independent seed runs share nothing mutable, so a simple wave of async
    // tasks is safe; rows land at their seed index to keep output order fixed.
    for (int base = 0; base < n_seeds; base += n_threads) {
        std::vector<std::future<BoundRow>> wave;
        const int hi = std::min(n_seeds, base + n_threads);
        for (int s = base; s < hi; ++s)
            wave.push_back(std::async(std::launch::async, run_one,
                                      static_cast<std::uint64_t>(s + 1)));
        for (int s = base; s < hi; ++s) rows[s] = wave[s - base].get();
    }
    return rows;
}

void export_bound_csv(const std::vector<BoundRow>& rows, const std::string& path) {
    std::vector<std::vector<std::string>> cells;
    cells.reserve(rows.size());
    for (const BoundRow& r : rows) {
        cells.push_back({std::to_string(r.k), std::to_string(r.n0), std::to_string(r.n),
                         io::fmt_real(r.bound), io::fmt_real(r.achieved_ratio),
                         std::to_string(r.seed)});
    }
    io::write_csv(path, {"k", "n0", "n", "bound", "achieved_ratio", "seed"}, cells);
}

}  // namespace dipct::ddbound
