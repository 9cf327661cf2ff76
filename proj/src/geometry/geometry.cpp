// SPDX-License-Identifier: Apache-2.0
#include "slotdet/geometry.hpp"

#include <algorithm>
#include <numeric>

namespace slotdet {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kMinNorm = 1e-12;
}  // namespace

UnitVec2 UnitVec2::normalized(double x, double y) {
    const double n = std::hypot(x, y);
    if (!(n > kMinNorm) || !std::isfinite(n)) throw GeometryError("cannot normalize a zero-length vector");
    return {x / n, y / n};
}

UnitVec2 UnitVec2::rotated(double radians) const {
    const double c = std::cos(radians), s = std::sin(radians);
    return {c * cx - s * cy, s * cx + c * cy};
}

double angle_between_deg(const UnitVec2& a, const UnitVec2& b) {
    const double c = std::clamp(dot(a, b) / (std::hypot(a.cx, a.cy) * std::hypot(b.cx, b.cy)), -1.0, 1.0);
    return std::acos(c) * 180.0 / kPi;
}

std::string_view to_string(SlotType t) {
    switch (t) {
        case SlotType::perpendicular: return "perpendicular";
        case SlotType::parallel: return "parallel";
        case SlotType::slanted: return "slanted";
    }
    return "unknown";
}

std::string_view to_string(Occupancy o) { return o == Occupancy::occupied ? "occupied" : "vacant"; }

SlotType parse_slot_type(std::string_view s) {
    if (s == "perpendicular") return SlotType::perpendicular;
    if (s == "parallel") return SlotType::parallel;
    if (s == "slanted") return SlotType::slanted;
    throw GeometryError("unknown slot type '" + std::string(s) + "'");
}

Occupancy parse_occupancy(std::string_view s) {
    if (s == "vacant") return Occupancy::vacant;
    if (s == "occupied") return Occupancy::occupied;
    throw GeometryError("unknown occupancy '" + std::string(s) + "'");
}

SlotEntrance entrance_from_slot(const ParkingSlot& slot) {
    const Point2 d = slot.j2 - slot.j1;
    const double len = norm(d);
    if (!(len > 0.0)) throw GeometryError("zero-length entrance");
    SlotEntrance e;
    e.center = midpoint(slot.j1, slot.j2);
    e.eo = {d.x / len, d.y / len};
    e.length = len;
    e.so = UnitVec2::normalized(slot.sep1.cx + slot.sep2.cx, slot.sep1.cy + slot.sep2.cy);
    e.score = 1.0;
    return e;
}

RoiSet designate_rois(const SlotEntrance& e, const RoiOffsets& offsets) {
    RoiSet r;
    r.loc1 = e.end1();
    r.loc2 = e.end2();
    const Point2 k1 = e.so.vec() * offsets.k1;
    r.ori1 = r.loc1 + k1;
    r.ori2 = r.loc2 + k1;
    r.cls = e.center + e.so.vec() * offsets.k2;
    return r;
}

std::vector<SlotEntrance> nms_entrances(std::span<const SlotEntrance> proposals, double dist_thresh) {
    std::vector<std::size_t> order(proposals.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return proposals[a].score > proposals[b].score; });
    std::vector<SlotEntrance> kept;
    for (std::size_t idx : order) {
        const auto& cand = proposals[idx];
        const bool dup = std::any_of(kept.begin(), kept.end(), [&](const SlotEntrance& k) {
            return distance(k.center, cand.center) < dist_thresh;
        });
        if (!dup) kept.push_back(cand);
    }
    return kept;
}

bool is_canonical(const ParkingSlot& slot) {
    const Point2 d = slot.j2 - slot.j1;
    const Point2 s = slot.sep1.vec() + slot.sep2.vec();
    return d.x * s.y - d.y * s.x >= 0.0;
}

ParkingSlot assemble_slot(Point2 j1, Point2 j2, UnitVec2 sep1, UnitVec2 sep2, SlotType type,
                          Occupancy occupancy) {
    if (!(distance(j1, j2) > 0.0)) throw GeometryError("zero-length entrance");
    ParkingSlot slot{j1, j2, sep1, sep2, type, occupancy};
    if (!is_canonical(slot)) {
        std::swap(slot.j1, slot.j2);
        std::swap(slot.sep1, slot.sep2);
    }
    return slot;
}

std::vector<Point2> slot_polygon(const ParkingSlot& slot, double depth) {
    return {slot.j1, slot.j2, slot.j2 + slot.sep2.vec() * depth, slot.j1 + slot.sep1.vec() * depth};
}

bool point_in_polygon(const Point2& p, std::span<const Point2> polygon) {
    // Even-odd ray casting.
    bool inside = false;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point2& a = polygon[i];
        const Point2& b = polygon[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

}  // namespace slotdet
