#pragma once

#include <cstdint>
#include <vector>

#include "dipct/common.hpp"

namespace dipct::tomo {

/// 2-D parallel-beam geometry over a square n_px×n_px image with unit pixel
/// pitch.  Angles are uniform over [0, π); detector bins are centred on the
/// rotation axis with pitch det_spacing.
struct Geometry {
    int n_px = 0;
    int n_angles = 0;
    int n_det = 0;
    Real det_spacing = 1.0;
    std::vector<Real> angles;

    static Geometry parallel(int n_px, int n_angles, int n_det,
                             Real det_spacing = 1.0);

    int rays() const { return n_angles * n_det; }
    int pixels() const { return n_px * n_px; }
};

struct Sinogram {
    Image values;  // n_angles × n_det
    Geometry geom;
};

/// Discretised forward map as a sparse matrix of exact ray/pixel
/// intersection lengths.  Rows are grouped by angle (row = a·n_det + t);
/// angle_ids records which angles of `geom` the rows cover, so a partition
/// block can address its slice of a full sinogram.
struct LinearOperator {
    SparseRM mat;
    Geometry geom;
    std::vector<int> angle_ids;

    int rows() const { return static_cast<int>(mat.rows()); }
    int cols() const { return static_cast<int>(mat.cols()); }

    Vec apply_flat(const Vec& x) const;
    Vec adjoint_flat(const Vec& r) const;
};

LinearOperator build_radon(const Geometry& g);

Sinogram apply(const LinearOperator& op, const Image& x);
Image apply_adjoint(const LinearOperator& op, const Sinogram& y);

/// Angle-interleaved partition into n_blocks operators (block i takes angles
/// i, i+n_blocks, ...).  Every angle lands in exactly one block, so the
/// squared-data losses of the blocks sum to the full loss.
std::vector<LinearOperator> partition(const LinearOperator& op, int n_blocks);

/// Rows of a full sinogram covered by a (partitioned) operator, flattened in
/// the operator's row order.
Vec slice_rows(const Sinogram& y, const LinearOperator& op);

enum class Filter { RamLak, RamLakCosine };

/// Filtered back-projection: per-angle ramp filtering in the frequency
/// domain (rows zero-padded to the next power of two ≥ 2·n_det), then
/// back-projection by Aᵀ with weighting π/n_angles · det_spacing.
Image fbp(const Sinogram& y, const LinearOperator& op,
          Filter filter = Filter::RamLak);
Image fbp(const Sinogram& y, Filter filter = Filter::RamLak);

/// Phantoms with values in [0,1] on the unit square [−1,1]².
Image shepp_logan(int n_px);
Image random_ellipses(int n_px, int count, std::uint64_t seed);

/// y + σ·ε with σ = rel_level · mean(|y|) and ε i.i.d. standard normal.
Sinogram add_gaussian_noise(const Sinogram& y, Real rel_level,
                            std::uint64_t seed);

/// 10·log10(range²/MSE); range defaults to max(ref) − min(ref); an exact
/// match returns +∞.
Real psnr(const Image& x, const Image& ref, Real data_range = -1.0);

}  // namespace dipct::tomo
