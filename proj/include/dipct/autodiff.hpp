#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "dipct/common.hpp"

namespace dipct::ad {

/// Up-to-rank-4 extent list.  Convention: images are (C, H, W) rank 3,
/// conv weights (O, C, k, k) rank 4, per-channel vectors rank 1, scalars
/// rank 1 with extent 1.
struct Shape {
    std::array<int, 4> d{1, 1, 1, 1};
    int rank = 1;

    static Shape of(std::initializer_list<int> extents);
    Eigen::Index count() const;
    bool operator==(const Shape& o) const;
    bool operator!=(const Shape& o) const { return !(*this == o); }
    std::string str() const;
};

/// Dense 64-bit tensor, values in row-major order of the shape.
struct Tensor {
    Shape shape;
    Vec v;

    static Tensor zeros(const Shape& s);
    static Tensor from_image(const Image& img);  // (1, H, W)
    static Tensor scalar(Real x);

    Image channel(int c) const;  // rank-3 tensors only
    Image as_image() const;      // rank-3 with C = 1, or rank 2
    Real item() const;           // single-element tensors only
};

struct ParamEntry {
    std::string name;
    Shape shape;
    Eigen::Index offset = 0;
};

/// Flat parameter vector with a stable (name, shape, offset) layout; the
/// flat view is what optimizers, trajectory stacking and Jacobian products
/// operate on.
struct ParamVector {
    Vec data;
    std::vector<ParamEntry> layout;

    Eigen::Index size() const { return data.size(); }
    /// Appends a zero tensor and returns its slot index.
    std::size_t add(const std::string& name, const Shape& shape);
    std::size_t slot_of(const std::string& name) const;
    Tensor tensor(std::size_t slot) const;
    void set_tensor(std::size_t slot, const Tensor& t);
    bool same_layout(const ParamVector& o) const;
};

enum class Act { LeakyRelu, Relu, Sigmoid };
enum class UpMode { Nearest, Bilinear };

/// Reverse-mode tape.  Building an op evaluates it immediately (define by
/// run); nodes therefore appear in topological order and backward() is a
/// single reverse sweep.  Parameters enter through param() leaves bound to
/// one ParamVector; their gradients accumulate into a flat vector matching
/// that layout.
class Tape {
  public:
    Tape() = default;
    explicit Tape(const ParamVector* params) : params_(params) {}

    // Leaves.
    int param(std::size_t slot);
    int input(const Tensor& t);     // differentiable non-parameter leaf
    int constant(const Tensor& t);

    // Structural / network ops.
    int conv2d(int x, int w, int b, int stride = 1);
    int upsample2x(int x, UpMode mode);
    int activation(int x, Act kind, Real slope = 0.1);
    int channel_norm(int x, int scale, int shift, Real eps = 1e-6);
    int concat_channels(int x, int y);
    int add(int x, int y);
    int scale(int x, Real a);
    int crop_center(int x, int out_h, int out_w);

    // Scalar loss nodes.  `weight` premultiplies the whole term.
    /// (weight/2)·‖A·flat(x) − y‖²; A = nullptr means the identity.  The
    /// matrix is borrowed and must outlive the tape.
    int sq_residual(int x, const SparseRM* A, const Vec& y, Real weight = 1.0);
    /// (weight/2)·‖x − u‖²
    int sq_diff(int x, const Tensor& u, Real weight = 1.0);
    /// weight · TV_ε(x) with the smoothed isotropic total variation.
    int tv_smooth(int x, Real weight, Real eps = 1e-8);
    /// (weight/2)·‖Dx − (vx, vy)‖² over the forward-difference gradient
    /// field of a single-channel image x.
    int grad_sq_diff(int x, const Image& vx, const Image& vy, Real weight = 1.0);
    /// ⟨flat(x), u⟩
    int dot_const(int x, const Vec& u);
    /// a·L1 + b·L2 for scalar nodes.
    int axpby(Real a, int l1, Real b, int l2);

    const Tensor& value(int id) const;
    Eigen::Index size() const { return static_cast<Eigen::Index>(nodes_.size()); }

    struct Grads {
        Vec params;  // flat, matches the bound ParamVector layout
        std::vector<std::pair<int, Tensor>> inputs;
        const Tensor& input(int node_id) const;
    };

    /// Exact reverse-mode gradients of the scalar node `loss` w.r.t. every
    /// parameter leaf and every input leaf.
    Grads backward(int loss) const;

  private:
    enum class Op {
        Param, Input, Const, Conv, Upsample, Activation, ChannelNorm,
        Concat, Add, Scale, CropCenter, SqResidual, SqDiff, TvSmooth,
        GradSqDiff, DotConst, Axpby,
    };

    struct Node {
        Op op;
        int a = -1, b = -1, c = -1;
        Tensor val;
        Tensor saved;   // op-specific forward state reused by backward
        Tensor saved2;
        Real p0 = 0, p1 = 0;
        int stride = 1;
        Act act = Act::Relu;
        UpMode up = UpMode::Nearest;
        const SparseRM* mat = nullptr;
        Eigen::Index offset = -1, count = 0;
    };

    int push(Node n);
    const Node& at(int id) const;
    void check_image(int id, const char* who) const;

    std::vector<Node> nodes_;
    const ParamVector* params_ = nullptr;
};

/// Central differences (f(x+h·e_i) − f(x−h·e_i))/2h, one coordinate at a
/// time; the test oracle for every gradient in the project.
Vec finite_diff_grad(const std::function<Real(const Vec&)>& f, const Vec& x,
                     Real h);

struct AdamState {
    Vec m, v;
    long t = 0;
    Real beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState init(Eigen::Index p);
};

void sgd_step(Vec& theta, const Vec& g, Real tau);
void sgd_step(ParamVector& theta, const ParamVector& g, Real tau);
void adam_step(Vec& theta, const Vec& g, AdamState& state, Real lr);
void adam_step(ParamVector& theta, const Vec& g, AdamState& state, Real lr);

}  // namespace dipct::ad
