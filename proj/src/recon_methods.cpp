#include <cmath>

#include "recon_internal.hpp"

namespace dipct::recon {

namespace {

using detail::BlockSampler;
using detail::Optimizer;
using detail::TraceRecorder;

void check_problem(const tomo::LinearOperator& A, const tomo::Sinogram& y,
                   const nets::Network& net, const ad::Tensor* z,
                   const RunConfig& cfg) {
    cfg.validate();
    if (y.values.rows() != A.geom.n_angles || y.values.cols() != A.geom.n_det)
        throw ShapeError("sinogram extents do not match the operator geometry");
    ad::Shape out = nets::output_shape(net);
    if (out.d[1] != A.geom.n_px || out.d[2] != A.geom.n_px)
        throw ShapeError("network output " + out.str() +
                         " does not match the " + std::to_string(A.geom.n_px) +
                         "-pixel image side");
    if (z && z->shape != nets::input_shape(net))
        throw ShapeError("input tensor shape " + z->shape.str() +
                         " does not match the network input " +
                         nets::input_shape(net).str());
}

std::uint64_t sampler_seed(const RunConfig& cfg) {
    return detail::mix_seed(cfg.block_seed ? cfg.block_seed : cfg.seed, 0xb10cULL);
}

/// Inner driver shared by every outer/inner splitting scheme: runs n_sub
/// gradient steps on ½·w‖A_i f − y_i‖² + extra(tape, f) and records the
/// trace at cadence.
template <typename ExtraLoss>
void inner_steps(nets::Network& work, const ad::Tensor& z, BlockSampler& sampler,
                 Optimizer& opt, TraceRecorder& rec, int& it, int total,
                 int n_sub, ExtraLoss&& extra) {
    for (int i = 0; i < n_sub; ++i) {
        BlockSampler::Pick pick = sampler.next();
        ad::Tape tape(&work.params);
        int zc = tape.constant(z);
        int f = nets::build_forward(work, tape, zc);
        int loss = tape.sq_residual(f, pick.mat, *pick.y, pick.weight);
        int add = extra(tape, f);
        if (add >= 0) loss = tape.axpby(1.0, loss, 1.0, add);
        ad::Tape::Grads g = tape.backward(loss);
        opt.step(work.params.data, g.params);
        ++it;
        if (it < total && rec.due(it)) rec.record(it, nets::forward_image(work, z));
    }
}

Real frob(const Image& a) { return std::sqrt(a.square().sum()); }

}  // namespace

ReconTrace run_vanilla_dip(const tomo::LinearOperator& A,
                           const tomo::Sinogram& y, const nets::Network& net,
                           const ad::Tensor& z, const RunConfig& cfg,
                           const Image* ground_truth) {
    check_problem(A, y, net, &z, cfg);
    Vec y_full = to_vec(y.values);
    BlockSampler sampler(A, y_full, cfg.n_b, sampler_seed(cfg));
    TraceRecorder rec(A, y_full, cfg, ground_truth);
    nets::Network work = net;
    Optimizer opt(cfg.optimizer, cfg.lr, work.params.size());
    rec.record(0, nets::forward_image(work, z));
    int it = 0;
    inner_steps(work, z, sampler, opt, rec, it, cfg.max_iters, cfg.max_iters,
                [](ad::Tape&, int) { return -1; });
    if (cfg.max_iters > 0)
        rec.record(cfg.max_iters, nets::forward_image(work, z));
    return rec.finish(it, cfg.stop);
}

ReconTrace run_dip_tv_joint(const tomo::LinearOperator& A,
                            const tomo::Sinogram& y, const nets::Network& net,
                            const ad::Tensor& z, Real alpha,
                            const RunConfig& cfg, const Image* ground_truth) {
    check_problem(A, y, net, &z, cfg);
    if (alpha < 0) throw ConfigError("tv weight must be >= 0");
    Vec y_full = to_vec(y.values);
    BlockSampler sampler(A, y_full, cfg.n_b, sampler_seed(cfg));
    TraceRecorder rec(A, y_full, cfg, ground_truth);
    nets::Network work = net;
    Optimizer opt(cfg.optimizer, cfg.lr, work.params.size());
    rec.record(0, nets::forward_image(work, z));
    int it = 0;
    inner_steps(work, z, sampler, opt, rec, it, cfg.max_iters, cfg.max_iters,
                [&](ad::Tape& tape, int f) { return tape.tv_smooth(f, alpha); });
    if (cfg.max_iters > 0)
        rec.record(cfg.max_iters, nets::forward_image(work, z));
    return rec.finish(it, cfg.stop);
}

ReconTrace run_dip_tv_hqs(const tomo::LinearOperator& A,
                          const tomo::Sinogram& y, const nets::Network& net,
                          const ad::Tensor& z, Real lambda,
                          const RunConfig& cfg, const Image* ground_truth) {
    check_problem(A, y, net, &z, cfg);
    if (lambda <= 0) throw ConfigError("splitting strength must be positive");
    if (cfg.alpha0 <= 0) throw ConfigError("alpha0 must be positive");
    const int K = cfg.outer_iterations();
    const int total = K * cfg.n_sub;
    Vec y_full = to_vec(y.values);
    BlockSampler sampler(A, y_full, cfg.n_b, sampler_seed(cfg));
    TraceRecorder rec(A, y_full, cfg, ground_truth);
    nets::Network work = net;
    Optimizer opt(cfg.optimizer, cfg.lr, work.params.size());
    rec.record(0, nets::forward_image(work, z));
    Image u = Image::Zero(A.geom.n_px, A.geom.n_px);
    int it = 0;
    for (int k = 1; k <= K; ++k) {
        const Real a_k = cfg.alpha0 * std::pow(cfg.alpha_decay, k);
        const Real mu_k = lambda / a_k;
        ad::Tensor u_t = ad::Tensor::from_image(u);
        inner_steps(work, z, sampler, opt, rec, it, total, cfg.n_sub,
                    [&](ad::Tape& tape, int f) { return tape.sq_diff(f, u_t, mu_k); });
        Image fimg = nets::forward_image(work, z);
        u = reg::tv_prox(fimg, a_k, cfg.denoiser.tol, cfg.denoiser.max_iter);
        rec.trace().outer_f.push_back(fimg);
        rec.trace().outer_u.push_back(u);
        rec.trace().outer_residual.push_back(frob(fimg - u));
        if (k == K && total > 0) rec.record(total, fimg);
    }
    return rec.finish(it, cfg.stop);
}

ReconTrace run_wtv_admm(const tomo::LinearOperator& A, const tomo::Sinogram& y,
                        const nets::Network& net, const ad::Tensor& z,
                        bool adaptive, Real gamma, const RunConfig& cfg,
                        const Image* ground_truth) {
    check_problem(A, y, net, &z, cfg);
    if (gamma <= 0) throw ConfigError("admm penalty gamma must be positive");
    if (!adaptive && cfg.alpha < 0) throw ConfigError("fixed weight must be >= 0");
    const int K = cfg.outer_iterations();
    const int total = K * cfg.n_sub;
    const int n = A.geom.n_px;
    Vec y_full = to_vec(y.values);
    BlockSampler sampler(A, y_full, cfg.n_b, sampler_seed(cfg));
    TraceRecorder rec(A, y_full, cfg, ground_truth);
    nets::Network work = net;
    Optimizer opt(cfg.optimizer, cfg.lr, work.params.size());
    Image fimg = nets::forward_image(work, z);
    rec.record(0, fimg);
    reg::GradField u{Image::Zero(n, n), Image::Zero(n, n)};
    reg::GradField dual{Image::Zero(n, n), Image::Zero(n, n)};
    reg::WeightMap weights = Image::Constant(n, n, cfg.alpha);
    int it = 0;
    for (int k = 1; k <= K; ++k) {
        if (adaptive) {
            Real r2 = (A.apply_flat(to_vec(fimg)) - y_full).squaredNorm();
            weights = reg::adaptive_weights(fimg, r2);
        }
        Image vx = u.x - dual.x / gamma;
        Image vy = u.y - dual.y / gamma;
        inner_steps(work, z, sampler, opt, rec, it, total, cfg.n_sub,
                    [&](ad::Tape& tape, int f) {
                        return tape.grad_sq_diff(f, vx, vy, gamma);
                    });
        fimg = nets::forward_image(work, z);
        reg::GradField g = reg::grad_D(fimg);
        reg::GradField shifted{g.x + dual.x / gamma, g.y + dual.y / gamma};
        u = reg::group_soft_threshold(shifted, weights / gamma);
        dual.x += gamma * (g.x - u.x);
        dual.y += gamma * (g.y - u.y);
        rec.trace().outer_f.push_back(fimg);
        rec.trace().outer_residual.push_back(detail::field_residual(g, u));
        if (k == K && total > 0) rec.record(total, fimg);
    }
    return rec.finish(it, cfg.stop);
}

ReconTrace run_dip_red_apg(const tomo::LinearOperator& A,
                           const tomo::Sinogram& y, const nets::Network& net,
                           const ad::Tensor& z, Real lambda, Real L,
                           const RunConfig& cfg, const Image* ground_truth) {
    check_problem(A, y, net, &z, cfg);
    if (lambda <= 0) throw ConfigError("splitting strength must be positive");
    if (L <= 1) throw ConfigError("step constant L must exceed 1");
    const int K = cfg.outer_iterations();
    const int total = K * cfg.n_sub;
    const int n = A.geom.n_px;
    Vec y_full = to_vec(y.values);
    BlockSampler sampler(A, y_full, cfg.n_b, sampler_seed(cfg));
    TraceRecorder rec(A, y_full, cfg, ground_truth);
    nets::Network work = net;
    Optimizer opt(cfg.optimizer, cfg.lr, work.params.size());
    Image x_prev = nets::forward_image(work, z);
    rec.record(0, x_prev);
    Image u = Image::Zero(n, n);
    Real t_prev = 1.0;
    int it = 0;
    for (int k = 1; k <= K; ++k) {
        ad::Tensor u_t = ad::Tensor::from_image(u);
        inner_steps(work, z, sampler, opt, rec, it, total, cfg.n_sub,
                    [&](ad::Tape& tape, int f) {
                        return tape.sq_diff(f, u_t, lambda * L);
                    });
        Image x = nets::forward_image(work, z);
        const Real t = (1.0 + std::sqrt(1.0 + 4.0 * t_prev * t_prev)) / 2.0;
        Image zbar = x + ((t_prev - 1.0) / t) * (x - x_prev);
        u = (1.0 / L) * reg::denoise(cfg.denoiser, zbar) - ((1.0 - L) / L) * zbar;
        rec.trace().outer_f.push_back(x);
        rec.trace().outer_u.push_back(u);
        rec.trace().outer_residual.push_back(frob(x - u));
        x_prev = x;
        t_prev = t;
        if (k == K && total > 0) rec.record(total, x);
    }
    return rec.finish(it, cfg.stop);
}

ReconTrace run_dip_denoiser_hqs(const tomo::LinearOperator& A,
                                const tomo::Sinogram& y,
                                const nets::Network& net, const ad::Tensor& z,
                                Real lambda, const RunConfig& cfg,
                                const Image* ground_truth) {
    check_problem(A, y, net, &z, cfg);
    if (lambda <= 0) throw ConfigError("splitting strength must be positive");
    if (cfg.alpha0 <= 0) throw ConfigError("alpha0 must be positive");
    const int K = cfg.outer_iterations();
    const int total = K * cfg.n_sub;
    Vec y_full = to_vec(y.values);
    BlockSampler sampler(A, y_full, cfg.n_b, sampler_seed(cfg));
    TraceRecorder rec(A, y_full, cfg, ground_truth);
    nets::Network work = net;
    Optimizer opt(cfg.optimizer, cfg.lr, work.params.size());
    rec.record(0, nets::forward_image(work, z));
    Image u = Image::Zero(A.geom.n_px, A.geom.n_px);
    int it = 0;
    for (int k = 1; k <= K; ++k) {
        const Real a_k = cfg.alpha0 * std::pow(cfg.alpha_decay, k);
        const Real mu_k = lambda / a_k;
        ad::Tensor u_t = ad::Tensor::from_image(u);
        inner_steps(work, z, sampler, opt, rec, it, total, cfg.n_sub,
                    [&](ad::Tape& tape, int f) { return tape.sq_diff(f, u_t, mu_k); });
        Image fimg = nets::forward_image(work, z);
        u = reg::denoise_with_strength(cfg.denoiser, fimg, a_k);
        rec.trace().outer_f.push_back(fimg);
        rec.trace().outer_u.push_back(u);
        rec.trace().outer_residual.push_back(frob(fimg - u));
        if (k == K && total > 0) rec.record(total, fimg);
    }
    return rec.finish(it, cfg.stop);
}

ReconTrace run_dip_denoiser_admm(const tomo::LinearOperator& A,
                                 const tomo::Sinogram& y,
                                 const nets::Network& net, const ad::Tensor& z,
                                 Real beta, const RunConfig& cfg,
                                 const Image* ground_truth) {
    check_problem(A, y, net, &z, cfg);
    if (beta <= 0) throw ConfigError("admm penalty beta must be positive");
    const int K = cfg.outer_iterations();
    const int total = K * cfg.n_sub;
    const int n = A.geom.n_px;
    Vec y_full = to_vec(y.values);
    BlockSampler sampler(A, y_full, cfg.n_b, sampler_seed(cfg));
    TraceRecorder rec(A, y_full, cfg, ground_truth);
    nets::Network work = net;
    Optimizer opt(cfg.optimizer, cfg.lr, work.params.size());
    rec.record(0, nets::forward_image(work, z));
    Image u = Image::Zero(n, n);
    Image dual = Image::Zero(n, n);
    int it = 0;
    for (int k = 1; k <= K; ++k) {
        ad::Tensor target = ad::Tensor::from_image(u - dual);
        inner_steps(work, z, sampler, opt, rec, it, total, cfg.n_sub,
                    [&](ad::Tape& tape, int f) {
                        return tape.sq_diff(f, target, beta);
                    });
        Image x = nets::forward_image(work, z);
        u = reg::denoise(cfg.denoiser, x + dual);
        dual = dual + x - u;
        rec.trace().outer_f.push_back(x);
        rec.trace().outer_u.push_back(u);
        rec.trace().outer_dual.push_back(dual);
        rec.trace().outer_residual.push_back(frob(x - u));
        if (k == K && total > 0) rec.record(total, x);
    }
    return rec.finish(it, cfg.stop);
}

ReconTrace run_self_guided(const tomo::LinearOperator& A,
                           const tomo::Sinogram& y, const nets::Network& net,
                           const ad::Tensor& z0, Real lambda,
                           const RunConfig& cfg, const Image* ground_truth) {
    check_problem(A, y, net, &z0, cfg);
    if (lambda < 0) throw ConfigError("consistency weight must be >= 0");
    if (cfg.sg_noise < 0) throw ConfigError("noise amplitude must be >= 0");
    Vec y_full = to_vec(y.values);
    BlockSampler sampler(A, y_full, cfg.n_b, sampler_seed(cfg));
    TraceRecorder rec(A, y_full, cfg, ground_truth);
    nets::Network work = net;
    Optimizer opt(cfg.optimizer, cfg.lr, work.params.size());
    ad::AdamState z_state = ad::AdamState::init(z0.v.size());
    const Real z_lr = cfg.z_lr < 0 ? cfg.lr : cfg.z_lr;
    Rng noise(detail::mix_seed(cfg.seed, 0x5e1fULL));
    ad::Tensor z = z0;
    const int n = A.geom.n_px;
    Image x_ema = Image::Zero(n, n);
    rec.record(0, x_ema);
    int it = 0;
    for (int step = 1; step <= cfg.max_iters; ++step) {
        const Real m = cfg.sg_noise * z.v.cwiseAbs().maxCoeff();
        ad::Tape tape(&work.params);
        int zin = tape.input(z);
        int xt = -1;
        for (int i = 0; i < cfg.n_eta; ++i) {
            int zi = zin;
            if (m > 0) {
                ad::Tensor eta = ad::Tensor::zeros(z.shape);
                for (Eigen::Index j = 0; j < eta.v.size(); ++j)
                    eta.v[j] = noise.uniform(0.0, m);
                zi = tape.add(zin, tape.constant(eta));
            }
            int fi = nets::build_forward(work, tape, zi);
            xt = (xt < 0) ? fi : tape.add(xt, fi);
        }
        if (cfg.n_eta > 1) xt = tape.scale(xt, 1.0 / static_cast<Real>(cfg.n_eta));
        BlockSampler::Pick pick = sampler.next();
        int loss = tape.sq_residual(xt, pick.mat, *pick.y, pick.weight);
        // (λ/2)‖x̃ − z‖² with z trainable: build the difference on the tape
        // so the gradient reaches both x̃ and z.
        int diff = tape.add(xt, tape.scale(zin, -1.0));
        int cons = tape.sq_diff(diff, ad::Tensor::zeros(z.shape), lambda);
        loss = tape.axpby(1.0, loss, 1.0, cons);
        Image x_tilde = tape.value(xt).as_image();
        ad::Tape::Grads g = tape.backward(loss);
        opt.step(work.params.data, g.params);
        if (cfg.optimizer == RunConfig::Opt::Adam)
            ad::adam_step(z.v, g.input(zin).v, z_state, z_lr);
        else
            ad::sgd_step(z.v, g.input(zin).v, z_lr);
        x_ema = cfg.ema * x_ema + (1.0 - cfg.ema) * x_tilde;
        ++it;
        if (it < cfg.max_iters && rec.due(it)) rec.record(it, x_ema);
    }
    if (cfg.max_iters > 0) rec.record(cfg.max_iters, x_ema);
    return rec.finish(it, cfg.stop);
}

ReconTrace run_aseqdip(const tomo::LinearOperator& A, const tomo::Sinogram& y,
                       const nets::Network& net, Real lambda,
                       const RunConfig& cfg, const Image* ground_truth) {
    cfg.validate();
    if (lambda < 0) throw ConfigError("consistency weight must be >= 0");
    ad::Shape in = nets::input_shape(net);
    if (in.d[0] != 1 || in.d[1] != A.geom.n_px || in.d[2] != A.geom.n_px)
        throw ShapeError("sequential scheme needs a single-channel image-sized "
                         "network input, got " + in.str());
    const int K = cfg.outer_iterations();
    const int total = K * cfg.n_sub;
    Vec y_full = to_vec(y.values);

    // z⁰ = Aᵀy rescaled to [0,1] so it lands in the activation range.
    Vec back = A.adjoint_flat(y_full);
    const Real lo = back.minCoeff();
    const Real hi = back.maxCoeff();
    if (hi > lo)
        back = (back.array() - lo) / (hi - lo);
    else
        back.setZero();
    Image z_img = to_image(back, A.geom.n_px, A.geom.n_px);
    ad::Tensor z = ad::Tensor::from_image(z_img);

    check_problem(A, y, net, &z, cfg);
    BlockSampler sampler(A, y_full, cfg.n_b, sampler_seed(cfg));
    TraceRecorder rec(A, y_full, cfg, ground_truth);
    nets::Network work = net;
    Optimizer opt(cfg.optimizer, cfg.lr, work.params.size());
    rec.record(0, nets::forward_image(work, z));
    int it = 0;
    for (int k = 1; k <= K; ++k) {
        inner_steps(work, z, sampler, opt, rec, it, total, cfg.n_sub,
                    [&](ad::Tape& tape, int f) {
                        return tape.sq_diff(f, z, lambda);
                    });
        Image next = nets::forward_image(work, z);
        rec.trace().outer_f.push_back(next);
        rec.trace().outer_residual.push_back(frob(next - z_img));
        z_img = next;
        z = ad::Tensor::from_image(z_img);
        if (k == K && total > 0) rec.record(total, z_img);
    }
    return rec.finish(it, cfg.stop);
}

}  // namespace dipct::recon
