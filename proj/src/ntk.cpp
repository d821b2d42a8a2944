#include "dipct/ntk.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dipct/io.hpp"

namespace dipct::ntk {

JacobianHandle::JacobianHandle(const nets::Network& net, const ad::Tensor& z)
    : net_(net), z_(z) {
    if (z.shape != nets::input_shape(net))
        throw ShapeError("input tensor shape " + z.shape.str() +
                         " does not match the network input " +
                         nets::input_shape(net).str());
    ad::Shape out = nets::output_shape(net);
    if (out.d[1] != out.d[2])
        throw ShapeError("analysis expects a square network output, got " +
                         out.str());
    side_ = out.d[1];
    f0_ = nets::forward_image(net_, z_);
}

Image JacobianHandle::jvp(const Vec& v) const {
    if (v.size() != net_.params.size())
        throw ShapeError("direction length does not match the parameter count");
    const Real norm = v.norm();
    if (norm == 0) return Image::Zero(side_, side_);
    const Real h = 1e-4 / norm;
    nets::Network work = net_;
    work.params.data = net_.params.data + h * v;
    Image plus = nets::forward_image(work, z_);
    work.params.data = net_.params.data - h * v;
    Image minus = nets::forward_image(work, z_);
    return (plus - minus) / (2.0 * h);
}

Vec JacobianHandle::vjp(const Image& u) const {
    if (u.rows() != side_ || u.cols() != side_)
        throw ShapeError("cotangent image extents do not match the output");
    ad::Tape tape(&net_.params);
    int zc = tape.constant(z_);
    int f = nets::build_forward(net_, tape, zc);
    int loss = tape.dot_const(f, to_vec(u));
    return tape.backward(loss).params;
}

Image JacobianHandle::ntk_apply(const Image& u) const { return jvp(vjp(u)); }

std::vector<EigenPair> top_eigenpairs(const JacobianHandle& h, int r, Real tol,
                                      int max_iter, std::uint64_t seed) {
    if (r < 1) throw ConfigError("eigenpair count must be >= 1");
    if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
    const int n = h.side();
    Rng rng(seed);
    std::vector<EigenPair> pairs;
    for (int i = 0; i < r; ++i) {
        Image b(n, n);
        for (int row = 0; row < n; ++row)
            for (int col = 0; col < n; ++col) b(row, col) = rng.normal();
        // Deflate the start vector against the pairs already extracted.
        for (const EigenPair& p : pairs) b -= (b * p.u).sum() * p.u;
        Real bn = std::sqrt(b.square().sum());
        if (bn == 0) throw NumericError("degenerate start vector in power iteration");
        b /= bn;

        EigenPair out;
        Real rho_prev = 0;
        for (int it = 1; it <= max_iter; ++it) {
            Image w = h.ntk_apply(b);
            for (const EigenPair& p : pairs) w -= (w * p.u).sum() * p.u;
            const Real rho = (b * w).sum();
            const Real wn = std::sqrt(w.square().sum());
            out.iters = it;
            if (wn == 0) {
                // b lies in the (deflated) kernel: eigenvalue 0.
                out.sigma = 0;
                out.rel_change = 0;
                out.converged = true;
                break;
            }
            b = w / wn;
            out.sigma = rho;
            out.rel_change = std::abs(rho - rho_prev) /
                             std::max(std::abs(rho), Real(1e-300));
            if (it > 1 && out.rel_change < tol) {
                out.converged = true;
                break;
            }
            rho_prev = rho;
        }
        out.u = b;
        pairs.push_back(std::move(out));
    }
    return pairs;
}

Real estimate_stable_tau(const JacobianHandle& h, const SparseRM& A, int iters,
                         std::uint64_t seed) {
    if (A.cols() != static_cast<Eigen::Index>(h.side()) * h.side())
        throw ShapeError("operator column count does not match the image size");
    const int n = h.side();
    Rng rng(seed);

    Image b(n, n);
    for (int row = 0; row < n; ++row)
        for (int col = 0; col < n; ++col) b(row, col) = rng.normal();
    b /= std::sqrt(b.square().sum());
    Real sigma_k = 0;
    for (int it = 0; it < iters; ++it) {
        Image w = h.ntk_apply(b);
        sigma_k = (b * w).sum();
        Real wn = std::sqrt(w.square().sum());
        if (wn == 0) break;
        b = w / wn;
    }

    Vec v(A.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
    v /= v.norm();
    Real sigma_a = 0;
    for (int it = 0; it < iters; ++it) {
        Vec w = A.transpose() * (A * v);
        sigma_a = v.dot(w);
        Real wn = w.norm();
        if (wn == 0) break;
        v = w / wn;
    }

    if (sigma_k <= 0 || sigma_a <= 0)
        throw NumericError("spectral norm estimate degenerated to zero");
    return 2.0 / (sigma_k * sigma_a);
}

std::vector<Image> linearized_dynamics(const JacobianHandle& h,
                                       const SparseRM& A, const Vec& y,
                                       Real tau, int steps) {
    if (tau <= 0) throw ConfigError("step size must be positive");
    if (steps < 0) throw ConfigError("step count must be >= 0");
    const Eigen::Index n = static_cast<Eigen::Index>(h.side()) * h.side();
    if (A.cols() != n || A.rows() != y.size())
        throw ShapeError("operator/observation extents mismatch the image size");

    std::vector<Image> traj;
    traj.reserve(static_cast<std::size_t>(steps) + 1);
    Image f = h.base_output();
    traj.push_back(f);
    Real prev_loss = std::numeric_limits<Real>::infinity();
    int growth = 0;
    for (int k = 1; k <= steps; ++k) {
        Vec r = A * to_vec(f) - y;
        const Real loss = 0.5 * r.squaredNorm();
        if (!std::isfinite(loss))
            throw NumericError("linearised dynamics produced a non-finite loss at step " +
                               std::to_string(k));
        growth = loss > prev_loss ? growth + 1 : 0;
        if (growth >= 10)
            throw NumericError("linearised dynamics diverged: loss grew over 10 "
                               "consecutive steps, reaching " + std::to_string(loss));
        prev_loss = loss;
        Image g = to_image(Vec(A.transpose() * r), h.side(), h.side());
        f -= tau * h.ntk_apply(g);
        traj.push_back(f);
    }
    return traj;
}

std::vector<Real> compare_lin_vs_gd(const nets::Network& net,
                                    const ad::Tensor& z, const SparseRM& A,
                                    const Vec& y, Real tau, int steps) {
    JacobianHandle h(net, z);
    std::vector<Image> lin = linearized_dynamics(h, A, y, tau, steps);

    nets::Network work = net;
    std::vector<Real> out;
    out.reserve(static_cast<std::size_t>(steps) + 1);
    out.push_back(0.0);
    for (int k = 1; k <= steps; ++k) {
        ad::Tape tape(&work.params);
        int zc = tape.constant(z);
        int f = nets::build_forward(work, tape, zc);
        int loss = tape.sq_residual(f, &A, y, 1.0);
        ad::Tape::Grads g = tape.backward(loss);
        ad::sgd_step(work.params.data, g.params, tau);
        Image f_gd = nets::forward_image(work, z);
        const Image& f_lin = lin[static_cast<std::size_t>(k)];
        Real denom = std::sqrt(f_lin.square().sum());
        out.push_back(std::sqrt((f_gd - f_lin).square().sum()) /
                      std::max(denom, Real(1e-300)));
    }
    return out;
}

std::vector<SpectralRow> spectral_bias_report(const JacobianHandle& h,
                                              const SparseRM& A, const Vec& y,
                                              Real tau, int steps, int r,
                                              Real tol, int max_iter) {
    std::vector<EigenPair> pairs = top_eigenpairs(h, r, tol, max_iter);
    std::vector<Image> traj = linearized_dynamics(h, A, y, tau, steps);

    std::vector<Image> residuals;
    residuals.reserve(traj.size());
    for (const Image& f : traj) {
        Vec res = A * to_vec(f) - y;
        residuals.push_back(to_image(Vec(A.transpose() * res), h.side(), h.side()));
    }

    std::vector<SpectralRow> rows;
    for (int i = 0; i < r; ++i) {
        SpectralRow row;
        row.index = i + 1;
        row.sigma = pairs[static_cast<std::size_t>(i)].sigma;
        const Image& u = pairs[static_cast<std::size_t>(i)].u;
        for (const Image& g : residuals)
            row.coeffs.push_back(std::abs((g * u).sum()));
        // Geometric-mean contraction per step over the observed ratios.
        Real log_sum = 0;
        int counted = 0;
        for (std::size_t k = 0; k + 1 < row.coeffs.size(); ++k) {
            if (row.coeffs[k] > 1e-300) {
                log_sum += std::log(row.coeffs[k + 1] / row.coeffs[k]);
                ++counted;
            }
        }
        row.decay_rate = counted > 0 ? std::exp(log_sum / counted) : 0.0;
        row.unstable = row.decay_rate > 1.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

void export_eigenfunction_grid(const std::vector<EigenPair>& pairs,
                               const std::string& path) {
    if (pairs.empty()) throw ConfigError("no eigenpairs to export");
    const int n = static_cast<int>(pairs[0].u.rows());
    const int count = static_cast<int>(pairs.size());
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<Real>(count))));
    const int rows = (count + cols - 1) / cols;
    const Real pad_value = 0;
    Image grid = Image::Constant(rows * n + (rows - 1), cols * n + (cols - 1),
                                 pad_value);
    for (int i = 0; i < count; ++i) {
        const int tr = i / cols;
        const int tc = i % cols;
        grid.block(tr * (n + 1), tc * (n + 1), n, n) = pairs[static_cast<std::size_t>(i)].u;
    }
    io::save_pgm16(path, grid);
}

void export_decay_csv(const std::vector<SpectralRow>& rows,
                      const std::string& path) {
    std::vector<std::vector<std::string>> cells;
    cells.reserve(rows.size());
    for (const SpectralRow& r : rows)
        cells.push_back({std::to_string(r.index), io::fmt_real(r.sigma),
                         io::fmt_real(r.decay_rate)});
    io::write_csv(path, {"eig_index", "sigma", "decay_rate"}, cells);
}

}  // namespace dipct::ntk
