#include "dipct/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dipct/regularizers.hpp"

namespace dipct::ad {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Shape Shape::of(std::initializer_list<int> extents) {
    if (extents.size() == 0 || extents.size() > 4)
        throw ShapeError("Shape::of: rank must be 1..4");
    Shape s;
    s.rank = static_cast<int>(extents.size());
    int i = 0;
    for (int e : extents) {
        if (e < 1) throw ShapeError("Shape::of: extents must be positive");
        s.d[static_cast<std::size_t>(i++)] = e;
    }
    return s;
}

Eigen::Index Shape::count() const {
    Eigen::Index n = 1;
    for (int i = 0; i < rank; ++i) n *= d[static_cast<std::size_t>(i)];
    return n;
}

bool Shape::operator==(const Shape& o) const {
    if (rank != o.rank) return false;
    for (int i = 0; i < rank; ++i)
        if (d[static_cast<std::size_t>(i)] != o.d[static_cast<std::size_t>(i)])
            return false;
    return true;
}

std::string Shape::str() const {
    std::ostringstream ss;
    ss << "(";
    for (int i = 0; i < rank; ++i) {
        if (i) ss << ",";
        ss << d[static_cast<std::size_t>(i)];
    }
    ss << ")";
    return ss.str();
}

Tensor Tensor::zeros(const Shape& s) { return {s, Vec::Zero(s.count())}; }

Tensor Tensor::from_image(const Image& img) {
    Tensor t;
    t.shape = Shape::of({1, static_cast<int>(img.rows()),
                         static_cast<int>(img.cols())});
    t.v = to_vec(img);
    return t;
}

Tensor Tensor::scalar(Real x) {
    Tensor t;
    t.shape = Shape::of({1});
    t.v = Vec::Constant(1, x);
    return t;
}

Image Tensor::channel(int c) const {
    if (shape.rank != 3) throw ShapeError("Tensor::channel: rank-3 required");
    const int h = shape.d[1], w = shape.d[2];
    if (c < 0 || c >= shape.d[0]) throw ShapeError("Tensor::channel: bad index");
    return to_image(v.segment(static_cast<Eigen::Index>(c) * h * w, h * w), h, w);
}

Image Tensor::as_image() const {
    if (shape.rank == 2) return to_image(v, shape.d[0], shape.d[1]);
    if (shape.rank == 3 && shape.d[0] == 1) return channel(0);
    throw ShapeError("Tensor::as_image: need rank 2 or single-channel rank 3, got " +
                     shape.str());
}

Real Tensor::item() const {
    if (v.size() != 1) throw ShapeError("Tensor::item: not a scalar");
    return v[0];
}

std::size_t ParamVector::add(const std::string& name, const Shape& shape) {
    ParamEntry e{name, shape, data.size()};
    layout.push_back(e);
    Vec grown = Vec::Zero(data.size() + shape.count());
    grown.head(data.size()) = data;
    data.swap(grown);
    return layout.size() - 1;
}

std::size_t ParamVector::slot_of(const std::string& name) const {
    for (std::size_t i = 0; i < layout.size(); ++i)
        if (layout[i].name == name) return i;
    throw ConfigError("ParamVector: no tensor named " + name);
}

Tensor ParamVector::tensor(std::size_t slot) const {
    const ParamEntry& e = layout.at(slot);
    return {e.shape, data.segment(e.offset, e.shape.count())};
}

void ParamVector::set_tensor(std::size_t slot, const Tensor& t) {
    const ParamEntry& e = layout.at(slot);
    if (t.shape != e.shape)
        throw ShapeError("ParamVector::set_tensor: shape mismatch for " + e.name);
    data.segment(e.offset, e.shape.count()) = t.v;
}

bool ParamVector::same_layout(const ParamVector& o) const {
    if (layout.size() != o.layout.size()) return false;
    for (std::size_t i = 0; i < layout.size(); ++i)
        if (layout[i].name != o.layout[i].name ||
            layout[i].shape != o.layout[i].shape ||
            layout[i].offset != o.layout[i].offset)
            return false;
    return true;
}

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

const Tape::Node& Tape::at(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
        throw ShapeError("Tape: bad node id");
    return nodes_[static_cast<std::size_t>(id)];
}

const Tensor& Tape::value(int id) const { return at(id).val; }

void Tape::check_image(int id, const char* who) const {
    if (at(id).val.shape.rank != 3)
        throw ShapeError(std::string(who) + ": expected a (C,H,W) tensor, got " +
                         at(id).val.shape.str());
}

int Tape::param(std::size_t slot) {
    if (!params_) throw ConfigError("Tape::param: no ParamVector bound");
    Node n;
    n.op = Op::Param;
    n.val = params_->tensor(slot);
    n.offset = params_->layout.at(slot).offset;
    n.count = n.val.shape.count();
    return push(std::move(n));
}

int Tape::input(const Tensor& t) {
    Node n;
    n.op = Op::Input;
    n.val = t;
    return push(std::move(n));
}

int Tape::constant(const Tensor& t) {
    Node n;
    n.op = Op::Const;
    n.val = t;
    return push(std::move(n));
}

namespace {

// Patch matrix for a (C,H,W) input: K = C·k·k rows, one column per output
// pixel, zero padding outside.  Column-major so a column is contiguous.
void im2col(const Vec& x, int C, int H, int W, int k, int stride, Mat& cols) {
    const int p = k / 2;
    const int Ho = (H + 2 * p - k) / stride + 1;
    const int Wo = (W + 2 * p - k) / stride + 1;
    cols.resize(static_cast<Eigen::Index>(C) * k * k,
                static_cast<Eigen::Index>(Ho) * Wo);
    const Real* xv = x.data();
    Eigen::Index j = 0;
    for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++j) {
            Real* col = cols.col(j).data();
            Eigen::Index kidx = 0;
            for (int c = 0; c < C; ++c) {
                const Real* plane = xv + static_cast<Eigen::Index>(c) * H * W;
                for (int dy = 0; dy < k; ++dy) {
                    const int iy = oy * stride + dy - p;
                    for (int dx = 0; dx < k; ++dx, ++kidx) {
                        const int ix = ox * stride + dx - p;
                        col[kidx] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                        ? plane[static_cast<Eigen::Index>(iy) * W + ix]
                                        : Real(0);
                    }
                }
            }
        }
}

void col2im_add(const Mat& cols, int C, int H, int W, int k, int stride,
                Vec& gx) {
    const int p = k / 2;
    const int Ho = (H + 2 * p - k) / stride + 1;
    const int Wo = (W + 2 * p - k) / stride + 1;
    Real* gv = gx.data();
    Eigen::Index j = 0;
    for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++j) {
            const Real* col = cols.col(j).data();
            Eigen::Index kidx = 0;
            for (int c = 0; c < C; ++c) {
                Real* plane = gv + static_cast<Eigen::Index>(c) * H * W;
                for (int dy = 0; dy < k; ++dy) {
                    const int iy = oy * stride + dy - p;
                    for (int dx = 0; dx < k; ++dx, ++kidx) {
                        const int ix = ox * stride + dx - p;
                        if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                            plane[static_cast<Eigen::Index>(iy) * W + ix] += col[kidx];
                    }
                }
            }
        }
}

// Factor-2 interpolation stencil per axis (align-corners = false): source
// coordinate of output o is o/2 − 1/4, so
//   out[2i]   = 0.25·in[i−1] + 0.75·in[i]   (in[−1] ≡ in[0])
//   out[2i+1] = 0.75·in[i]   + 0.25·in[i+1] (in[n] ≡ in[n−1])
struct Stencil {
    std::vector<int> i0, i1;
    std::vector<Real> w0, w1;
};

Stencil bilinear_stencil(int n) {
    Stencil s;
    s.i0.resize(static_cast<std::size_t>(2 * n));
    s.i1.resize(static_cast<std::size_t>(2 * n));
    s.w0.resize(static_cast<std::size_t>(2 * n));
    s.w1.resize(static_cast<std::size_t>(2 * n));
    for (int o = 0; o < 2 * n; ++o) {
        const int i = o / 2;
        const std::size_t oo = static_cast<std::size_t>(o);
        if (o % 2 == 0) {
            s.i0[oo] = std::max(i - 1, 0);
            s.w0[oo] = 0.25;
            s.i1[oo] = i;
            s.w1[oo] = 0.75;
        } else {
            s.i0[oo] = i;
            s.w0[oo] = 0.75;
            s.i1[oo] = std::min(i + 1, n - 1);
            s.w1[oo] = 0.25;
        }
    }
    return s;
}

}  // namespace

int Tape::conv2d(int x, int w, int b, int stride) {
    check_image(x, "conv2d");
    const Shape& xs = at(x).val.shape;
    const Shape& ws = at(w).val.shape;
    const Shape& bs = at(b).val.shape;
    if (ws.rank != 4 || ws.d[2] != ws.d[3] || ws.d[2] % 2 == 0)
        throw ShapeError("conv2d: weight must be (O,C,k,k) with odd k, got " +
                         ws.str());
    if (ws.d[1] != xs.d[0])
        throw ShapeError("conv2d: weight channels " + ws.str() +
                         " do not match input " + xs.str());
    if (bs.rank != 1 || bs.d[0] != ws.d[0])
        throw ShapeError("conv2d: bias must be (O,), got " + bs.str());
    if (stride != 1 && stride != 2)
        throw ShapeError("conv2d: stride must be 1 or 2");

    const int C = xs.d[0], H = xs.d[1], W = xs.d[2];
    const int O = ws.d[0], k = ws.d[2], p = k / 2;
    const int Ho = (H + 2 * p - k) / stride + 1;
    const int Wo = (W + 2 * p - k) / stride + 1;

    Mat cols;
    im2col(at(x).val.v, C, H, W, k, stride, cols);

    Node n;
    n.op = Op::Conv;
    n.a = x;
    n.b = w;
    n.c = b;
    n.stride = stride;
    n.val.shape = Shape::of({O, Ho, Wo});
    n.val.v.resize(n.val.shape.count());
    Eigen::Map<RowMat> out(n.val.v.data(), O, static_cast<Eigen::Index>(Ho) * Wo);
    Eigen::Map<const RowMat> wm(at(w).val.v.data(), O,
                                static_cast<Eigen::Index>(C) * k * k);
    out.noalias() = wm * cols;
    out.colwise() += Eigen::Map<const Vec>(at(b).val.v.data(), O);
    return push(std::move(n));
}

int Tape::upsample2x(int x, UpMode mode) {
    check_image(x, "upsample2x");
    const Shape& xs = at(x).val.shape;
    const int C = xs.d[0], H = xs.d[1], W = xs.d[2];
    Node n;
    n.op = Op::Upsample;
    n.a = x;
    n.up = mode;
    n.val.shape = Shape::of({C, 2 * H, 2 * W});
    n.val.v.resize(n.val.shape.count());
    const Real* src = at(x).val.v.data();
    Real* dst = n.val.v.data();
    if (mode == UpMode::Nearest) {
        for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < 2 * H; ++oy)
                for (int ox = 0; ox < 2 * W; ++ox)
                    dst[(static_cast<Eigen::Index>(c) * 2 * H + oy) * 2 * W + ox] =
                        src[(static_cast<Eigen::Index>(c) * H + oy / 2) * W + ox / 2];
    } else {
        const Stencil sy = bilinear_stencil(H);
        const Stencil sx = bilinear_stencil(W);
        for (int c = 0; c < C; ++c) {
            const Real* plane = src + static_cast<Eigen::Index>(c) * H * W;
            Real* oplane = dst + static_cast<Eigen::Index>(c) * 4 * H * W;
            for (int oy = 0; oy < 2 * H; ++oy) {
                const std::size_t yy = static_cast<std::size_t>(oy);
                const Real* r0 = plane + static_cast<Eigen::Index>(sy.i0[yy]) * W;
                const Real* r1 = plane + static_cast<Eigen::Index>(sy.i1[yy]) * W;
                for (int ox = 0; ox < 2 * W; ++ox) {
                    const std::size_t xx = static_cast<std::size_t>(ox);
                    oplane[static_cast<Eigen::Index>(oy) * 2 * W + ox] =
                        sy.w0[yy] * (sx.w0[xx] * r0[sx.i0[xx]] + sx.w1[xx] * r0[sx.i1[xx]]) +
                        sy.w1[yy] * (sx.w0[xx] * r1[sx.i0[xx]] + sx.w1[xx] * r1[sx.i1[xx]]);
                }
            }
        }
    }
    return push(std::move(n));
}

int Tape::activation(int x, Act kind, Real slope) {
    if (kind == Act::LeakyRelu && (slope <= 0 || slope >= 1))
        throw ConfigError("activation: leaky slope must be in (0,1)");
    Node n;
    n.op = Op::Activation;
    n.a = x;
    n.act = kind;
    n.p0 = slope;
    n.val.shape = at(x).val.shape;
    const Vec& xv = at(x).val.v;
    n.val.v.resize(xv.size());
    switch (kind) {
        case Act::LeakyRelu:
            n.val.v =
                (xv.array() >= 0).select(xv.array(), slope * xv.array()).matrix();
            break;
        case Act::Relu:
            n.val.v = xv.array().max(0.0).matrix();
            break;
        case Act::Sigmoid:
            n.val.v = (1.0 / (1.0 + (-xv.array()).exp())).matrix();
            break;
    }
    return push(std::move(n));
}

int Tape::channel_norm(int x, int scale, int shift, Real eps) {
    check_image(x, "channel_norm");
    const Shape& xs = at(x).val.shape;
    const int C = xs.d[0];
    const Eigen::Index hw = static_cast<Eigen::Index>(xs.d[1]) * xs.d[2];
    if (at(scale).val.shape != Shape::of({C}) ||
        at(shift).val.shape != Shape::of({C}))
        throw ShapeError("channel_norm: scale/shift must be (C,)");

    Node n;
    n.op = Op::ChannelNorm;
    n.a = x;
    n.b = scale;
    n.c = shift;
    n.p0 = eps;
    n.val.shape = xs;
    n.val.v.resize(xs.count());
    n.saved.shape = xs;  // normalised pre-affine values
    n.saved.v.resize(xs.count());
    n.saved2.shape = Shape::of({C});  // per-channel std
    n.saved2.v.resize(C);
    for (int c = 0; c < C; ++c) {
        const auto xc = at(x).val.v.segment(c * hw, hw).array();
        const Real m = xc.mean();
        const Real var = (xc - m).square().mean();
        const Real s = std::sqrt(var + eps);
        n.saved2.v[c] = s;
        n.saved.v.segment(c * hw, hw) = ((xc - m) / s).matrix();
        n.val.v.segment(c * hw, hw) =
            (at(scale).val.v[c] * n.saved.v.segment(c * hw, hw).array() +
             at(shift).val.v[c])
                .matrix();
    }
    return push(std::move(n));
}

int Tape::concat_channels(int x, int y) {
    check_image(x, "concat_channels");
    check_image(y, "concat_channels");
    const Shape& a = at(x).val.shape;
    const Shape& b = at(y).val.shape;
    if (a.d[1] != b.d[1] || a.d[2] != b.d[2])
        throw ShapeError("concat_channels: spatial extents differ: " + a.str() +
                         " vs " + b.str());
    Node n;
    n.op = Op::Concat;
    n.a = x;
    n.b = y;
    n.val.shape = Shape::of({a.d[0] + b.d[0], a.d[1], a.d[2]});
    n.val.v.resize(n.val.shape.count());
    n.val.v << at(x).val.v, at(y).val.v;
    return push(std::move(n));
}

int Tape::add(int x, int y) {
    if (at(x).val.shape != at(y).val.shape)
        throw ShapeError("add: shape mismatch: " + at(x).val.shape.str() +
                         " vs " + at(y).val.shape.str());
    Node n;
    n.op = Op::Add;
    n.a = x;
    n.b = y;
    n.val.shape = at(x).val.shape;
    n.val.v = at(x).val.v + at(y).val.v;
    return push(std::move(n));
}

int Tape::scale(int x, Real a) {
    Node n;
    n.op = Op::Scale;
    n.a = x;
    n.p0 = a;
    n.val.shape = at(x).val.shape;
    n.val.v = a * at(x).val.v;
    return push(std::move(n));
}

int Tape::crop_center(int x, int out_h, int out_w) {
    check_image(x, "crop_center");
    const Shape& xs = at(x).val.shape;
    const int C = xs.d[0], H = xs.d[1], W = xs.d[2];
    if (out_h > H || out_w > W)
        throw ShapeError("crop_center: target larger than input");
    if (out_h == H && out_w == W) return x;
    const int oy = (H - out_h) / 2, ox = (W - out_w) / 2;
    Node n;
    n.op = Op::CropCenter;
    n.a = x;
    n.val.shape = Shape::of({C, out_h, out_w});
    n.val.v.resize(n.val.shape.count());
    const Real* src = at(x).val.v.data();
    Real* dst = n.val.v.data();
    for (int c = 0; c < C; ++c)
        for (int r = 0; r < out_h; ++r)
            for (int q = 0; q < out_w; ++q)
                dst[(static_cast<Eigen::Index>(c) * out_h + r) * out_w + q] =
                    src[(static_cast<Eigen::Index>(c) * H + r + oy) * W + q + ox];
    return push(std::move(n));
}

int Tape::sq_residual(int x, const SparseRM* A, const Vec& y, Real weight) {
    const Vec& xv = at(x).val.v;
    Node n;
    n.op = Op::SqResidual;
    n.a = x;
    n.mat = A;
    n.p0 = weight;
    n.saved.shape = Shape::of({static_cast<int>(y.size())});
    if (A) {
        if (A->cols() != xv.size() || A->rows() != y.size())
            throw ShapeError("sq_residual: operator/vector extents mismatch");
        n.saved.v = *A * xv - y;
    } else {
        if (xv.size() != y.size())
            throw ShapeError("sq_residual: x/y extents mismatch");
        n.saved.v = xv - y;
    }
    n.val = Tensor::scalar(0.5 * weight * n.saved.v.squaredNorm());
    if (!std::isfinite(n.val.v[0]))
        throw NumericError("sq_residual: non-finite loss");
    return push(std::move(n));
}

int Tape::sq_diff(int x, const Tensor& u, Real weight) {
    if (at(x).val.shape != u.shape)
        throw ShapeError("sq_diff: shape mismatch: " + at(x).val.shape.str() +
                         " vs " + u.shape.str());
    Node n;
    n.op = Op::SqDiff;
    n.a = x;
    n.p0 = weight;
    n.saved = {u.shape, at(x).val.v - u.v};
    n.val = Tensor::scalar(0.5 * weight * n.saved.v.squaredNorm());
    if (!std::isfinite(n.val.v[0]))
        throw NumericError("sq_diff: non-finite loss");
    return push(std::move(n));
}

int Tape::tv_smooth(int x, Real weight, Real eps) {
    const Image img = at(x).val.as_image();
    Node n;
    n.op = Op::TvSmooth;
    n.a = x;
    n.p0 = weight;
    n.saved = {at(x).val.shape, to_vec(reg::tv_grad_smoothed(img, eps))};
    n.val = Tensor::scalar(weight * reg::tv_value_smoothed(img, eps));
    return push(std::move(n));
}

int Tape::grad_sq_diff(int x, const Image& vx, const Image& vy, Real weight) {
    const Image img = at(x).val.as_image();
    if (vx.rows() != img.rows() || vx.cols() != img.cols() ||
        vy.rows() != img.rows() || vy.cols() != img.cols())
        throw ShapeError("grad_sq_diff: field extents mismatch");
    const reg::GradField g = reg::grad_D(img);
    Node n;
    n.op = Op::GradSqDiff;
    n.a = x;
    n.p0 = weight;
    n.saved = {at(x).val.shape, to_vec(Image(g.x - vx))};
    n.saved2 = {at(x).val.shape, to_vec(Image(g.y - vy))};
    n.val = Tensor::scalar(
        0.5 * weight * (n.saved.v.squaredNorm() + n.saved2.v.squaredNorm()));
    if (!std::isfinite(n.val.v[0]))
        throw NumericError("grad_sq_diff: non-finite loss");
    return push(std::move(n));
}

int Tape::dot_const(int x, const Vec& u) {
    if (at(x).val.v.size() != u.size())
        throw ShapeError("dot_const: size mismatch");
    Node n;
    n.op = Op::DotConst;
    n.a = x;
    n.saved = {at(x).val.shape, u};
    n.val = Tensor::scalar(at(x).val.v.dot(u));
    return push(std::move(n));
}

int Tape::axpby(Real a, int l1, Real b, int l2) {
    if (at(l1).val.v.size() != 1 || at(l2).val.v.size() != 1)
        throw ShapeError("axpby: operands must be scalars");
    Node n;
    n.op = Op::Axpby;
    n.a = l1;
    n.b = l2;
    n.p0 = a;
    n.p1 = b;
    n.val = Tensor::scalar(a * at(l1).val.v[0] + b * at(l2).val.v[0]);
    return push(std::move(n));
}

const Tensor& Tape::Grads::input(int node_id) const {
    for (const auto& [id, g] : inputs)
        if (id == node_id) return g;
    throw ShapeError("Grads::input: node is not an input leaf");
}

Tape::Grads Tape::backward(int loss) const {
    if (at(loss).val.v.size() != 1)
        throw ShapeError("backward: loss node must be scalar");

    std::vector<Tensor> adj(nodes_.size());
    auto acc = [&](int id) -> Vec& {
        Tensor& t = adj[static_cast<std::size_t>(id)];
        if (t.v.size() == 0) {
            t.shape = at(id).val.shape;
            t.v = Vec::Zero(t.shape.count());
        }
        return t.v;
    };
    auto wants = [&](int id) {
        return at(id).op != Op::Const;  // constants never need gradients
    };

    acc(loss)[0] = 1.0;

    Grads out;
    out.params = Vec::Zero(params_ ? params_->size() : 0);

    for (int id = loss; id >= 0; --id) {
        const Tensor& g = adj[static_cast<std::size_t>(id)];
        if (g.v.size() == 0) continue;
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        switch (n.op) {
            case Op::Param:
                out.params.segment(n.offset, n.count) += g.v;
                break;
            case Op::Input:
            case Op::Const:
                break;
            case Op::Conv: {
                const Shape& xs = at(n.a).val.shape;
                const Shape& ws = at(n.b).val.shape;
                const int C = xs.d[0], H = xs.d[1], W = xs.d[2];
                const int O = ws.d[0], k = ws.d[2];
                const Eigen::Index K = static_cast<Eigen::Index>(C) * k * k;
                const Eigen::Index N = g.v.size() / O;
                Eigen::Map<const RowMat> gm(g.v.data(), O, N);
                if (wants(n.c)) acc(n.c) += gm.rowwise().sum();
                if (wants(n.a) || wants(n.b)) {
                    Mat cols;
                    im2col(at(n.a).val.v, C, H, W, k, n.stride, cols);
                    if (wants(n.b)) {
                        Eigen::Map<RowMat> gw(acc(n.b).data(), O, K);
                        gw.noalias() += gm * cols.transpose();
                    }
                    if (wants(n.a)) {
                        Eigen::Map<const RowMat> wm(at(n.b).val.v.data(), O, K);
                        Mat tmp(K, N);
                        tmp.noalias() = wm.transpose() * gm;
                        Vec& gx = acc(n.a);
                        col2im_add(tmp, C, H, W, k, n.stride, gx);
                    }
                }
                break;
            }
            case Op::Upsample: {
                if (!wants(n.a)) break;
                const Shape& xs = at(n.a).val.shape;
                const int C = xs.d[0], H = xs.d[1], W = xs.d[2];
                Vec& gx = acc(n.a);
                const Real* gv = g.v.data();
                if (n.up == UpMode::Nearest) {
                    for (int c = 0; c < C; ++c)
                        for (int oy = 0; oy < 2 * H; ++oy)
                            for (int ox = 0; ox < 2 * W; ++ox)
                                gx[(static_cast<Eigen::Index>(c) * H + oy / 2) * W + ox / 2] +=
                                    gv[(static_cast<Eigen::Index>(c) * 2 * H + oy) * 2 * W + ox];
                } else {
                    const Stencil sy = bilinear_stencil(H);
                    const Stencil sx = bilinear_stencil(W);
                    for (int c = 0; c < C; ++c) {
                        Real* plane = gx.data() + static_cast<Eigen::Index>(c) * H * W;
                        const Real* gplane =
                            gv + static_cast<Eigen::Index>(c) * 4 * H * W;
                        for (int oy = 0; oy < 2 * H; ++oy) {
                            const std::size_t yy = static_cast<std::size_t>(oy);
                            for (int ox = 0; ox < 2 * W; ++ox) {
                                const std::size_t xx = static_cast<std::size_t>(ox);
                                const Real gv0 =
                                    gplane[static_cast<Eigen::Index>(oy) * 2 * W + ox];
                                plane[static_cast<Eigen::Index>(sy.i0[yy]) * W + sx.i0[xx]] +=
                                    sy.w0[yy] * sx.w0[xx] * gv0;
                                plane[static_cast<Eigen::Index>(sy.i0[yy]) * W + sx.i1[xx]] +=
                                    sy.w0[yy] * sx.w1[xx] * gv0;
                                plane[static_cast<Eigen::Index>(sy.i1[yy]) * W + sx.i0[xx]] +=
                                    sy.w1[yy] * sx.w0[xx] * gv0;
                                plane[static_cast<Eigen::Index>(sy.i1[yy]) * W + sx.i1[xx]] +=
                                    sy.w1[yy] * sx.w1[xx] * gv0;
                            }
                        }
                    }
                }
                break;
            }
            case Op::Activation: {
                if (!wants(n.a)) break;
                const Vec& xv = at(n.a).val.v;
                Vec d(xv.size());
                switch (n.act) {
                    case Act::LeakyRelu:
                        d = (xv.array() >= 0)
                                .select(Vec::Ones(xv.size()).array(), n.p0)
                                .matrix();
                        break;
                    case Act::Relu:
                        d = (xv.array() >= 0)
                                .select(Vec::Ones(xv.size()).array(), 0.0)
                                .matrix();
                        break;
                    case Act::Sigmoid:
                        d = (n.val.v.array() * (1.0 - n.val.v.array())).matrix();
                        break;
                }
                acc(n.a).array() += d.array() * g.v.array();
                break;
            }
            case Op::ChannelNorm: {
                const Shape& xs = n.val.shape;
                const int C = xs.d[0];
                const Eigen::Index hw = static_cast<Eigen::Index>(xs.d[1]) * xs.d[2];
                for (int c = 0; c < C; ++c) {
                    const auto gy = g.v.segment(c * hw, hw).array();
                    const auto xh = n.saved.v.segment(c * hw, hw).array();
                    if (wants(n.c)) acc(n.c)[c] += gy.sum();
                    if (wants(n.b)) acc(n.b)[c] += (gy * xh).sum();
                    if (wants(n.a)) {
                        const Real gamma = at(n.b).val.v[c];
                        const Real s = n.saved2.v[c];
                        const auto gxh = gamma * gy;
                        const Real m1 = gxh.mean();
                        const Real m2 = (gxh * xh).mean();
                        acc(n.a).segment(c * hw, hw).array() +=
                            (gxh - m1 - xh * m2) / s;
                    }
                }
                break;
            }
            case Op::Concat: {
                const Eigen::Index na = at(n.a).val.v.size();
                const Eigen::Index nb = at(n.b).val.v.size();
                if (wants(n.a)) acc(n.a) += g.v.head(na);
                if (wants(n.b)) acc(n.b) += g.v.tail(nb);
                break;
            }
            case Op::Add:
                if (wants(n.a)) acc(n.a) += g.v;
                if (wants(n.b)) acc(n.b) += g.v;
                break;
            case Op::Scale:
                if (wants(n.a)) acc(n.a) += n.p0 * g.v;
                break;
            case Op::CropCenter: {
                if (!wants(n.a)) break;
                const Shape& xs = at(n.a).val.shape;
                const Shape& os = n.val.shape;
                const int C = xs.d[0], H = xs.d[1], W = xs.d[2];
                const int oh = os.d[1], ow = os.d[2];
                const int oy = (H - oh) / 2, ox = (W - ow) / 2;
                Vec& gx = acc(n.a);
                const Real* gv = g.v.data();
                for (int c = 0; c < C; ++c)
                    for (int r = 0; r < oh; ++r)
                        for (int q = 0; q < ow; ++q)
                            gx[(static_cast<Eigen::Index>(c) * H + r + oy) * W + q + ox] +=
                                gv[(static_cast<Eigen::Index>(c) * oh + r) * ow + q];
                break;
            }
            case Op::SqResidual:
                if (wants(n.a)) {
                    if (n.mat)
                        acc(n.a) +=
                            (n.p0 * g.v[0]) * (n.mat->transpose() * n.saved.v);
                    else
                        acc(n.a) += (n.p0 * g.v[0]) * n.saved.v;
                }
                break;
            case Op::SqDiff:
                if (wants(n.a)) acc(n.a) += (n.p0 * g.v[0]) * n.saved.v;
                break;
            case Op::TvSmooth:
                if (wants(n.a)) acc(n.a) += (n.p0 * g.v[0]) * n.saved.v;
                break;
            case Op::GradSqDiff:
                if (wants(n.a)) {
                    const Image rx = to_image(n.saved.v, n.saved.shape.d[1],
                                              n.saved.shape.d[2]);
                    const Image ry = to_image(n.saved2.v, n.saved2.shape.d[1],
                                              n.saved2.shape.d[2]);
                    acc(n.a) += (n.p0 * g.v[0]) *
                                to_vec(reg::grad_adjoint({rx, ry}));
                }
                break;
            case Op::DotConst:
                if (wants(n.a)) acc(n.a) += g.v[0] * n.saved.v;
                break;
            case Op::Axpby:
                if (wants(n.a)) acc(n.a)[0] += n.p0 * g.v[0];
                if (wants(n.b)) acc(n.b)[0] += n.p1 * g.v[0];
                break;
        }
    }

    for (std::size_t id = 0; id < nodes_.size(); ++id)
        if (nodes_[id].op == Op::Input) {
            Tensor& t = adj[id];
            if (t.v.size() == 0) {
                t.shape = nodes_[id].val.shape;
                t.v = Vec::Zero(t.shape.count());
            }
            out.inputs.emplace_back(static_cast<int>(id), std::move(t));
        }
    return out;
}

Vec finite_diff_grad(const std::function<Real(const Vec&)>& f, const Vec& x,
                     Real h) {
    if (h <= 0) throw ConfigError("finite_diff_grad: h must be > 0");
    Vec g(x.size());
    Vec xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const Real xi = x[i];
        xp[i] = xi + h;
        const Real fp = f(xp);
        xp[i] = xi - h;
        const Real fm = f(xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

AdamState AdamState::init(Eigen::Index p) {
    AdamState s;
    s.m = Vec::Zero(p);
    s.v = Vec::Zero(p);
    return s;
}

void sgd_step(Vec& theta, const Vec& g, Real tau) {
    if (tau <= 0) throw ConfigError("sgd_step: step size must be > 0");
    if (theta.size() != g.size()) throw ShapeError("sgd_step: size mismatch");
    theta -= tau * g;
}

void sgd_step(ParamVector& theta, const ParamVector& g, Real tau) {
    if (!theta.same_layout(g)) throw ShapeError("sgd_step: layout mismatch");
    sgd_step(theta.data, g.data, tau);
}

void adam_step(Vec& theta, const Vec& g, AdamState& state, Real lr) {
    if (theta.size() != g.size() || state.m.size() != theta.size() ||
        state.v.size() != theta.size())
        throw ShapeError("adam_step: size mismatch");
    state.t += 1;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g;
    state.v.array() = state.beta2 * state.v.array() +
                      (1.0 - state.beta2) * g.array().square();
    const Real bc1 = 1.0 - std::pow(state.beta1, static_cast<Real>(state.t));
    const Real bc2 = 1.0 - std::pow(state.beta2, static_cast<Real>(state.t));
    theta.array() -= lr * (state.m.array() / bc1) /
                     ((state.v.array() / bc2).sqrt() + state.eps);
}

void adam_step(ParamVector& theta, const Vec& g, AdamState& state, Real lr) {
    adam_step(theta.data, g, state, lr);
}

}  // namespace dipct::ad
