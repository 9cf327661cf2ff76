// SPDX-License-Identifier: Apache-2.0
#include "slotdet/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace slotdet {

GridSpec GridSpec::for_image(int image_w, int image_h, double l_max, int stride) {
    if (image_w <= 0 || image_h <= 0 || image_w % stride || image_h % stride)
        throw CodecError("image size " + std::to_string(image_w) + "x" + std::to_string(image_h) +
                         " is not a positive multiple of " + std::to_string(stride));
    if (!(l_max > 0.0)) throw CodecError("l_max must be positive");
    return {image_h / stride, image_w / stride, double(stride), double(stride), l_max};
}

RpnTargets RpnTargets::zeros(int h, int w) {
    const auto n = static_cast<std::size_t>(h * w);
    return {h, w, std::vector<double>(n), std::vector<double>(2 * n), std::vector<double>(n),
            std::vector<double>(2 * n), std::vector<double>(2 * n)};
}

SdnScnTargets SdnScnTargets::zeros(int proposals) {
    const auto p = static_cast<std::size_t>(proposals);
    SdnScnTargets t;
    t.rois = 2 * proposals;
    t.jp.assign(2 * p, 0.0);
    t.jxy.assign(4 * p, 0.0);
    t.jo.assign(4 * p, 0.0);
    t.st.assign(3 * p, 0.0);
    t.socc.assign(p, 0.0);
    t.i_slot.assign(p, 0.0);
    return t;
}

std::pair<int, int> cell_of(const Point2& p, double stride) {
    return {static_cast<int>(std::floor(p.y / stride)), static_cast<int>(std::floor(p.x / stride))};
}

RpnTargets encode_rpn(std::span<const ParkingSlot> gts, const GridSpec& grid) {
    RpnTargets t = RpnTargets::zeros(grid.h, grid.w);
    const std::size_t n = static_cast<std::size_t>(grid.cells());
    for (std::size_t g = 0; g < gts.size(); ++g) {
        const SlotEntrance e = entrance_from_slot(gts[g]);
        if (!(e.center.x >= 0.0 && e.center.y >= 0.0 && e.center.x < grid.image_w() &&
              e.center.y < grid.image_h()))
            throw CodecError("entrance centre of slot " + std::to_string(g) + " lies outside the image");
        const auto [row, col] = cell_of(e.center, grid.cell_w);
        const std::size_t i = static_cast<std::size_t>(row * grid.w + col);
        if (t.ep[i] != 0.0)
            throw CodecError("cell collision: slots share grid cell (" + std::to_string(row) + ", " +
                             std::to_string(col) + ")");
        const Point2 c = grid.cell_center(row, col);
        t.ep[i] = 1.0;
        t.exy[i] = (e.center.x - c.x) / grid.cell_w + 0.5;
        t.exy[n + i] = (e.center.y - c.y) / grid.cell_h + 0.5;
        t.el[i] = std::clamp(e.length / grid.l_max, 0.0, 1.0);
        t.eo[i] = e.eo.cx;
        t.eo[n + i] = e.eo.cy;
        t.so[i] = e.so.cx;
        t.so[n + i] = e.so.cy;
    }
    return t;
}

RpnDecode decode_rpn(const RpnTargets& pred, const GridSpec& grid, double tau_prop) {
    if (pred.h != grid.h || pred.w != grid.w) throw CodecError("prediction grid does not match GridSpec");
    const std::size_t n = static_cast<std::size_t>(grid.cells());
    RpnDecode out;
    for (int row = 0; row < grid.h; ++row) {
        for (int col = 0; col < grid.w; ++col) {
            const std::size_t i = static_cast<std::size_t>(row * grid.w + col);
            if (!(pred.ep[i] >= tau_prop)) continue;
            SlotEntrance e;
            try {
                e.eo = UnitVec2::normalized(pred.eo[i], pred.eo[n + i]);
                e.so = UnitVec2::normalized(pred.so[i], pred.so[n + i]);
            } catch (const GeometryError&) {
                ++out.dropped;
                continue;
            }
            const Point2 c = grid.cell_center(row, col);
            e.center = {c.x + (pred.exy[i] - 0.5) * grid.cell_w, c.y + (pred.exy[n + i] - 0.5) * grid.cell_h};
            e.length = pred.el[i] * grid.l_max;
            e.score = pred.ep[i];
            out.proposals.push_back(e);
        }
    }
    return out;
}

namespace {

Point2 snap(const Point2& p, double stride) {
    const auto [row, col] = cell_of(p, stride);
    return {(col + 0.5) * stride, (row + 0.5) * stride};
}

}  // namespace

RoiSet snap_rois(const RoiSet& rois, const RoiSpec& spec) {
    const double hs = spec.high_stride, ls = spec.low_stride;
    return {snap(rois.loc1, hs), snap(rois.loc2, hs), snap(rois.ori1, hs), snap(rois.ori2, hs),
            snap(rois.cls, ls)};
}

SdnScnTargets encode_sdn_scn(std::span<const RoiSet> rois, std::span<const ParkingSlot> gts,
                             const RoiSpec& spec, double slot_depth) {
    SdnScnTargets t = SdnScnTargets::zeros(static_cast<int>(rois.size()));

    // Junction k of slot g has index 2g + k; ties resolve to the smaller index.
    std::vector<Point2> junctions;
    std::vector<UnitVec2> seps;
    for (const auto& s : gts) {
        junctions.push_back(s.j1);
        seps.push_back(s.sep1);
        junctions.push_back(s.j2);
        seps.push_back(s.sep2);
    }
    std::vector<std::vector<Point2>> polygons;
    for (const auto& s : gts) polygons.push_back(slot_polygon(s, slot_depth));

    for (std::size_t p = 0; p < rois.size(); ++p) {
        const Point2 centers[2] = {rois[p].loc1, rois[p].loc2};
        for (std::size_t k = 0; k < 2; ++k) {
            const std::size_t i = 2 * p + k;
            double best = std::numeric_limits<double>::infinity();
            std::size_t match = junctions.size();
            for (std::size_t j = 0; j < junctions.size(); ++j) {
                const Point2 d = junctions[j] - centers[k];
                if (std::abs(d.x) > 0.5 * spec.w_roi || std::abs(d.y) > 0.5 * spec.h_roi) continue;
                const double dist = norm(d);
                if (dist < best) {
                    best = dist;
                    match = j;
                }
            }
            if (match == junctions.size()) continue;
            const Point2 d = junctions[match] - centers[k];
            t.jp[i] = 1.0;
            t.jxy[2 * i] = d.x / spec.w_roi + 0.5;
            t.jxy[2 * i + 1] = d.y / spec.h_roi + 0.5;
            t.jo[2 * i] = seps[match].cx;
            t.jo[2 * i + 1] = seps[match].cy;
        }
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (!point_in_polygon(rois[p].cls, polygons[g])) continue;
            t.i_slot[p] = 1.0;
            t.st[3 * p + static_cast<std::size_t>(gts[g].type)] = 1.0;
            t.socc[p] = gts[g].occupancy == Occupancy::occupied ? 1.0 : 0.0;
            break;
        }
    }
    return t;
}

SdnScnTargets encode_sdn_scn(std::span<const SlotEntrance> proposals, std::span<const ParkingSlot> gts,
                             const RoiSpec& spec, double slot_depth, const RoiOffsets& offsets) {
    std::vector<RoiSet> rois;
    rois.reserve(proposals.size());
    for (const auto& e : proposals) rois.push_back(designate_rois(e, offsets));
    return encode_sdn_scn(rois, gts, spec, slot_depth);
}

SdnDecode decode_sdn_scn(const SdnScnTargets& pred, std::span<const RoiSet> rois,
                         std::span<const double> scores, const RoiSpec& spec, double tau_j) {
    if (static_cast<std::size_t>(pred.rois) != 2 * rois.size() || scores.size() != rois.size())
        throw CodecError("stage-2 prediction has " + std::to_string(pred.rois) + " junction rows for " +
                         std::to_string(rois.size()) + " proposals");
    SdnDecode out;
    for (std::size_t p = 0; p < rois.size(); ++p) {
        const std::size_t a = 2 * p, b = 2 * p + 1;
        if (!(pred.jp[a] >= tau_j && pred.jp[b] >= tau_j)) {
            ++out.dropped;
            continue;
        }
        const Point2 j1{rois[p].loc1.x + (pred.jxy[2 * a] - 0.5) * spec.w_roi,
                        rois[p].loc1.y + (pred.jxy[2 * a + 1] - 0.5) * spec.h_roi};
        const Point2 j2{rois[p].loc2.x + (pred.jxy[2 * b] - 0.5) * spec.w_roi,
                        rois[p].loc2.y + (pred.jxy[2 * b + 1] - 0.5) * spec.h_roi};
        try {
            const UnitVec2 sep1 = UnitVec2::normalized(pred.jo[2 * a], pred.jo[2 * a + 1]);
            const UnitVec2 sep2 = UnitVec2::normalized(pred.jo[2 * b], pred.jo[2 * b + 1]);
            const auto st = pred.st.begin() + static_cast<std::ptrdiff_t>(3 * p);
            const auto type = static_cast<SlotType>(std::max_element(st, st + 3) - st);
            const Occupancy occ = pred.socc[p] >= 0.5 ? Occupancy::occupied : Occupancy::vacant;
            out.detections.push_back({assemble_slot(j1, j2, sep1, sep2, type, occ), scores[p]});
        } catch (const GeometryError&) {
            ++out.dropped;
        }
    }
    return out;
}

}  // namespace slotdet
