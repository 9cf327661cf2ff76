// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace slotdet {

class GeometryError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Image-plane point in pixels: origin top-left, x to the right, y downward.
struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
    Point2 operator+(const Point2& o) const { return {x + o.x, y + o.y}; }
    Point2 operator-(const Point2& o) const { return {x - o.x, y - o.y}; }
    Point2 operator*(double s) const { return {x * s, y * s}; }
};

inline double norm(const Point2& p) { return std::hypot(p.x, p.y); }
inline double distance(const Point2& a, const Point2& b) { return norm(a - b); }
inline Point2 midpoint(const Point2& a, const Point2& b) { return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)}; }

/// Direction stored as (cos, sin). Fields stay public so labels round-trip
/// bit-exactly; use `normalized` to build one from an arbitrary vector.
struct UnitVec2 {
    double cx = 1.0;
    double cy = 0.0;

    friend bool operator==(const UnitVec2&, const UnitVec2&) = default;

    /// Throws GeometryError for a (near) zero vector.
    static UnitVec2 normalized(double x, double y);
    static UnitVec2 from_angle(double radians) { return {std::cos(radians), std::sin(radians)}; }

    bool is_unit(double tol = 1e-6) const { return std::abs(cx * cx + cy * cy - 1.0) <= tol; }
    double angle() const { return std::atan2(cy, cx); }
    Point2 vec() const { return {cx, cy}; }
    UnitVec2 rotated(double radians) const;
};

inline double dot(const UnitVec2& a, const UnitVec2& b) { return a.cx * b.cx + a.cy * b.cy; }
/// z-component of a x b in screen coordinates.
inline double cross(const UnitVec2& a, const UnitVec2& b) { return a.cx * b.cy - a.cy * b.cx; }
/// Unsigned angle between two directions, degrees in [0, 180].
double angle_between_deg(const UnitVec2& a, const UnitVec2& b);

enum class SlotType { perpendicular = 0, parallel = 1, slanted = 2 };
enum class Occupancy { vacant = 0, occupied = 1 };

std::string_view to_string(SlotType t);
std::string_view to_string(Occupancy o);
SlotType parse_slot_type(std::string_view s);
Occupancy parse_occupancy(std::string_view s);

/// Region proposal: the entrance segment plus the direction into the slot.
struct SlotEntrance {
    Point2 center;
    UnitVec2 eo;  // j1 -> j2
    double length = 0.0;
    UnitVec2 so;  // into the slot
    double score = 1.0;

    Point2 end1() const { return center - eo.vec() * (0.5 * length); }
    Point2 end2() const { return center + eo.vec() * (0.5 * length); }
};

/// Ground-truth and final-output unit. Canonical junction order puts the slot
/// interior on the side where cross(j2 - j1, sep1 + sep2) >= 0.
struct ParkingSlot {
    Point2 j1;
    Point2 j2;
    UnitVec2 sep1;
    UnitVec2 sep2;
    SlotType type = SlotType::perpendicular;
    Occupancy occupancy = Occupancy::vacant;

    friend bool operator==(const ParkingSlot&, const ParkingSlot&) = default;
};

/// Slot with the score of the proposal it came from.
struct Detection {
    ParkingSlot slot;
    double score = 1.0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

/// Centres of the region-specific ROIs of one proposal.
struct RoiSet {
    Point2 loc1;  // around junction 1
    Point2 loc2;  // around junction 2
    Point2 ori1;  // along separating line 1
    Point2 ori2;  // along separating line 2
    Point2 cls;   // slot interior, for type and occupancy
};

struct RoiOffsets {
    double k1 = 50.0;  // junction -> orientation ROI
    double k2 = 32.0;  // entrance centre -> classification ROI

    RoiOffsets scaled(double factor) const { return {k1 * factor, k2 * factor}; }
};

inline constexpr double kDefaultNmsDistance = 16.0;

/// Throws GeometryError("zero-length entrance") when j1 == j2.
SlotEntrance entrance_from_slot(const ParkingSlot& slot);

RoiSet designate_rois(const SlotEntrance& e, const RoiOffsets& offsets = {});

/// Greedy centre-distance suppression. Output is sorted by descending score
/// (ties keep input order) and no two kept centres are closer than `dist_thresh`.
std::vector<SlotEntrance> nms_entrances(std::span<const SlotEntrance> proposals,
                                        double dist_thresh = kDefaultNmsDistance);

/// Build a slot from refined junctions and separating-line directions,
/// swapping the junction pair when needed to restore canonical order.
ParkingSlot assemble_slot(Point2 j1, Point2 j2, UnitVec2 sep1, UnitVec2 sep2, SlotType type,
                          Occupancy occupancy);

bool is_canonical(const ParkingSlot& slot);

/// Quadrilateral covering the slot interior to `depth` pixels along its
/// separating lines. Labels carry no depth, so the caller chooses it.
std::vector<Point2> slot_polygon(const ParkingSlot& slot, double depth);
bool point_in_polygon(const Point2& p, std::span<const Point2> polygon);

}  // namespace slotdet
