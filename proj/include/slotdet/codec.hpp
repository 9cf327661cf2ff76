// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "slotdet/geometry.hpp"

// Translation between slot geometry and the dense supervision arrays used by
// the proposal grid (stage 1) and the per-ROI heads (stage 2).

namespace slotdet {

class CodecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Proposal grid over the stride-32 feature map.
struct GridSpec {
    int h = 0;             // rows
    int w = 0;             // columns
    double cell_w = 32.0;  // pixels per cell
    double cell_h = 32.0;
    double l_max = 400.0;  // entrance length normalizer

    static GridSpec for_image(int image_w, int image_h, double l_max, int stride = 32);

    int cells() const { return h * w; }
    double image_w() const { return w * cell_w; }
    double image_h() const { return h * cell_h; }
    Point2 cell_center(int row, int col) const { return {(col + 0.5) * cell_w, (row + 0.5) * cell_h}; }
};

/// Planar, channel-major arrays: channel k of cell i = row * w + col lives at
/// [k * h * w + i]. Predictions use the same layout with activations applied.
struct RpnTargets {
    int h = 0;
    int w = 0;
    std::vector<double> ep;   // [h*w]   entrance-centre indicator (also the positive mask)
    std::vector<double> exy;  // [2*h*w] offset / cell size + 0.5
    std::vector<double> el;   // [h*w]   length / l_max
    std::vector<double> eo;   // [2*h*w] entrance direction
    std::vector<double> so;   // [2*h*w] slot direction

    static RpnTargets zeros(int h, int w);
    int cells() const { return h * w; }
};

/// Stage-2 ROI geometry. The junction window spans 5x5 high-map cells.
struct RoiSpec {
    double w_roi = 80.0;
    double h_roi = 80.0;
    int high_stride = 16;
    int low_stride = 32;

    static RoiSpec for_high_stride(int high_stride) {
        return {5.0 * high_stride, 5.0 * high_stride, high_stride, 2 * high_stride};
    }
};

/// Per-ROI stage-2 arrays. Junction rows: 2 per proposal (j1 then j2); the
/// orientation ROIs share the junction row index. Classification rows: 1 per
/// proposal. Row-major: jxy[2 * i + k], st[3 * p + c].
struct SdnScnTargets {
    int rois = 0;                 // R
    std::vector<double> jp;       // [R]      junction indicator (also I_j)
    std::vector<double> jxy;      // [R*2]    offset / ROI size + 0.5
    std::vector<double> jo;       // [R*2]    separating-line direction
    std::vector<double> st;       // [R/2*3]  one-hot perpendicular / parallel / slanted
    std::vector<double> socc;     // [R/2]    1 = occupied
    std::vector<double> i_slot;   // [R/2]    classification ROI lies inside a labelled slot

    static SdnScnTargets zeros(int proposals);
    int proposals() const { return rois / 2; }
};

/// (row, col) of the cell containing `p` on a map with the given stride.
std::pair<int, int> cell_of(const Point2& p, double stride);

RpnTargets encode_rpn(std::span<const ParkingSlot> gts, const GridSpec& grid);

struct RpnDecode {
    std::vector<SlotEntrance> proposals;
    int dropped = 0;  // cells above threshold with a zero-norm direction
};

/// Cells with ep >= tau_prop become proposals, in row-major cell order.
RpnDecode decode_rpn(const RpnTargets& pred, const GridSpec& grid, double tau_prop = 0.5);

/// Move every ROI centre to the centre of the feature-map cell containing it,
/// which is the centre of the neighbourhood actually read from the map.
RoiSet snap_rois(const RoiSet& rois, const RoiSpec& spec);

/// `slot_depth` sizes the labelled-slot polygon used for the classification
/// inclusion test, since labels carry no depth.
SdnScnTargets encode_sdn_scn(std::span<const RoiSet> rois, std::span<const ParkingSlot> gts,
                             const RoiSpec& spec, double slot_depth);
SdnScnTargets encode_sdn_scn(std::span<const SlotEntrance> proposals, std::span<const ParkingSlot> gts,
                             const RoiSpec& spec, double slot_depth, const RoiOffsets& offsets = {});

struct SdnDecode {
    std::vector<Detection> detections;
    int dropped = 0;
};

/// A proposal survives only if both of its junction rows reach tau_j.
SdnDecode decode_sdn_scn(const SdnScnTargets& pred, std::span<const RoiSet> rois,
                         std::span<const double> scores, const RoiSpec& spec, double tau_j = 0.5);

}  // namespace slotdet
