#include <algorithm>
#include <cmath>
#include <numeric>

#include "recon_internal.hpp"

namespace dipct::recon {

SubspaceBasis build_subspace(const Mat& trajectory, int k, int d_tau) {
    const Eigen::Index p = trajectory.rows();
    const Eigen::Index K = trajectory.cols();
    if (K < 1) throw ConfigError("trajectory must contain at least one checkpoint");
    if (k < 1) throw ConfigError("basis size k must be >= 1");
    if (k > K || K > p)
        throw ConfigError("basis needs k <= checkpoint count <= parameter count");
    if (d_tau < 1) throw ConfigError("mask size d_tau must be >= 1");

    // Thin SVD through the K×K Gram matrix: Θ = U Σ Vᵀ means ΘᵀΘ = V Σ² Vᵀ,
    // so u_j = Θ v_j / σ_j for the σ_j above the rank cut.
    Mat gram = trajectory.transpose() * trajectory;
    Eigen::SelfAdjointEigenSolver<Mat> es(gram);
    if (es.info() != Eigen::Success)
        throw NumericError("eigendecomposition of the trajectory Gram matrix failed");
    const Vec evals = es.eigenvalues();  // ascending
    const Real lam_max = std::max(evals(K - 1), Real(0));
    const Real cut = lam_max * 1e-12;
    int rank = 0;
    for (Eigen::Index j = 0; j < K; ++j)
        if (evals(j) > cut) ++rank;
    if (rank == 0) throw NumericError("trajectory matrix is numerically zero");

    SubspaceBasis out;
    out.p = p;
    out.k_effective = std::min(k, rank);
    out.truncated = out.k_effective < k;

    Mat basis(p, out.k_effective);
    for (int j = 0; j < out.k_effective; ++j) {
        const Eigen::Index col = K - 1 - j;  // descending eigenvalue order
        basis.col(j) = trajectory * es.eigenvectors().col(col) /
                       std::sqrt(evals(col));
    }

    out.leverage = basis.array().square().rowwise().sum();

    const Eigen::Index keep = std::min<Eigen::Index>(d_tau, p);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(p));
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                          if (out.leverage(a) != out.leverage(b))
                              return out.leverage(a) > out.leverage(b);
                          return a < b;
                      });
    out.rows.assign(idx.begin(), idx.begin() + keep);
    std::sort(out.rows.begin(), out.rows.end());

    out.u.resize(keep, out.k_effective);
    for (Eigen::Index i = 0; i < keep; ++i)
        out.u.row(i) = basis.row(out.rows[static_cast<std::size_t>(i)]);
    return out;
}

ReconTrace run_subspace_dip(const tomo::LinearOperator& A,
                            const tomo::Sinogram& y, const nets::Network& net,
                            const ad::Tensor& z, const SubspaceBasis& basis,
                            const RunConfig& cfg, const Image* ground_truth) {
    cfg.validate();
    if (basis.p != net.params.size())
        throw ShapeError("basis parameter dimension does not match the network");
    if (y.values.rows() != A.geom.n_angles || y.values.cols() != A.geom.n_det)
        throw ShapeError("sinogram extents do not match the operator geometry");
    ad::Shape out_shape = nets::output_shape(net);
    if (out_shape.d[1] != A.geom.n_px || out_shape.d[2] != A.geom.n_px)
        throw ShapeError("network output " + out_shape.str() +
                         " does not match the geometry image side");
    if (z.shape != nets::input_shape(net))
        throw ShapeError("input tensor shape " + z.shape.str() +
                         " does not match the network input");

    Vec y_full = to_vec(y.values);
    detail::BlockSampler sampler(A, y_full, cfg.n_b,
                                 detail::mix_seed(cfg.block_seed ? cfg.block_seed
                                                                 : cfg.seed,
                                                  0xb10cULL));
    detail::TraceRecorder rec(A, y_full, cfg, ground_truth);

    const Vec theta0 = net.params.data;
    const Eigen::Index d = static_cast<Eigen::Index>(basis.rows.size());
    nets::Network work = net;
    Vec c = Vec::Zero(basis.k_effective);
    ad::AdamState state = ad::AdamState::init(basis.k_effective);

    auto apply_coeff = [&]() {
        work.params.data = theta0;
        Vec delta = basis.u * c;
        for (Eigen::Index i = 0; i < d; ++i)
            work.params.data(basis.rows[static_cast<std::size_t>(i)]) += delta(i);
    };

    apply_coeff();
    rec.record(0, nets::forward_image(work, z));
    int it = 0;
    for (int step = 1; step <= cfg.max_iters; ++step) {
        detail::BlockSampler::Pick pick = sampler.next();
        ad::Tape tape(&work.params);
        int zc = tape.constant(z);
        int f = nets::build_forward(work, tape, zc);
        int loss = tape.sq_residual(f, pick.mat, *pick.y, pick.weight);
        ad::Tape::Grads g = tape.backward(loss);
        Vec g_masked(d);
        for (Eigen::Index i = 0; i < d; ++i)
            g_masked(i) = g.params(basis.rows[static_cast<std::size_t>(i)]);
        Vec g_c = basis.u.transpose() * g_masked;
        if (cfg.optimizer == RunConfig::Opt::Adam)
            ad::adam_step(c, g_c, state, cfg.lr);
        else
            ad::sgd_step(c, g_c, cfg.lr);
        apply_coeff();
        ++it;
        if (it < cfg.max_iters && rec.due(it))
            rec.record(it, nets::forward_image(work, z));
    }
    if (cfg.max_iters > 0)
        rec.record(cfg.max_iters, nets::forward_image(work, z));
    return rec.finish(it, cfg.stop);
}

}  // namespace dipct::recon
