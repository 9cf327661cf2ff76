// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "slotdet/codec.hpp"
#include "support/oracles.hpp"

using namespace slotdet;

namespace {

ParkingSlot slot_at(Point2 center, double length, UnitVec2 eo, UnitVec2 sep, SlotType type = SlotType::perpendicular,
                    Occupancy occ = Occupancy::vacant) {
    const Point2 h = eo.vec() * (0.5 * length);
    return {center - h, center + h, sep, sep, type, occ};
}

RoiSet rois_at(Point2 loc1, Point2 loc2, Point2 cls) { return {loc1, loc2, loc1, loc2, cls}; }

}  // namespace

TEST_CASE("grid spec") {
    auto g = GridSpec::for_image(256, 256, 400);
    CHECK(g.h == 8);
    CHECK(g.w == 8);
    CHECK(g.cell_center(1, 3) == Point2{112, 48});
    CHECK_THROWS_AS(GridSpec::for_image(250, 256, 400), CodecError);
    CHECK_THROWS_AS(GridSpec::for_image(256, 256, 0), CodecError);
}

TEST_CASE("encode_rpn examples") {
    auto grid = GridSpec::for_image(256, 256, 400);
    const std::size_t n = 64;

    auto t = encode_rpn(std::vector{slot_at({100, 50}, 120, {1, 0}, {0, 1})}, grid);
    const std::size_t i = 1 * 8 + 3;
    CHECK(t.ep[i] == 1.0);
    CHECK(t.exy[i] == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(t.exy[n + i] == doctest::Approx(0.5625).epsilon(1e-12));
    CHECK(t.el[i] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(t.eo[i] == 1.0);
    CHECK(t.so[n + i] == 1.0);
    double ones = 0;
    for (double v : t.ep) ones += v;
    CHECK(ones == 1.0);

    auto c = encode_rpn(std::vector{slot_at({112, 48}, 60, {1, 0}, {0, 1})}, grid);
    CHECK(c.exy[i] == 0.5);
    CHECK(c.exy[n + i] == 0.5);

    auto longer = encode_rpn(std::vector{slot_at({128, 128}, 500, {1, 0}, {0, 1})}, GridSpec::for_image(640, 256, 400));
    double el_max = 0;
    for (double v : longer.el) el_max = std::max(el_max, v);
    CHECK(el_max == 1.0);
}

TEST_CASE("encode_rpn errors") {
    auto grid = GridSpec::for_image(256, 256, 400);
    std::vector two{slot_at({100, 50}, 60, {1, 0}, {0, 1}), slot_at({110, 60}, 60, {1, 0}, {0, 1})};
    CHECK_THROWS_WITH_AS(encode_rpn(two, grid), doctest::Contains("cell collision"), CodecError);
    std::vector outside{slot_at({300, 50}, 60, {1, 0}, {0, 1})};
    CHECK_THROWS_AS(encode_rpn(outside, grid), CodecError);
}

TEST_CASE("decode_rpn thresholds and length boundary") {
    auto grid = GridSpec::for_image(256, 256, 400);
    auto t = encode_rpn(std::vector{slot_at({100, 50}, 120, {1, 0}, {0, 1})}, grid);
    CHECK(decode_rpn(t, grid, 1.5).proposals.empty());
    t.el[11] = 1.0;
    auto d = decode_rpn(t, grid, 0.5);
    REQUIRE(d.proposals.size() == 1);
    CHECK(d.proposals[0].length == 400.0);

    t.eo[11] = 0;  // zero-norm direction
    t.eo[64 + 11] = 0;
    auto z = decode_rpn(t, grid, 0.5);
    CHECK(z.proposals.empty());
    CHECK(z.dropped == 1);
}

TEST_CASE("stage-1 round trip over random scenes") {
    int checked = 0;
    for (int seed = 0; seed < 1000; ++seed) {
        Rng rng(derive_seed(41, seed));
        std::vector<ParkingSlot> gts;
        const int count = 1 + int(rng.below(4));
        for (int k = 0; k < count; ++k) gts.push_back(slotdet::testing::random_slot(rng, 256, 20));
        auto grid = GridSpec::for_image(256, 256, 400);
        RpnTargets t;
        try {
            t = encode_rpn(gts, grid);
        } catch (const CodecError&) {
            continue;  // shared cell; the scene would be rejected upstream
        }
        ++checked;
        for (double v : t.exy) CHECK((v >= 0 && v <= 1));
        for (double v : t.el) CHECK((v >= 0 && v <= 1));
        for (double v : t.eo) CHECK((v >= -1 && v <= 1));
        int ones = 0;
        for (double v : t.ep) ones += v == 1.0;
        CHECK(ones == count);
        auto d = decode_rpn(t, grid, 0.5).proposals;
        REQUIRE(d.size() == gts.size());
        for (const auto& g : gts) {
            const auto e = entrance_from_slot(g);
            bool hit = false;
            for (const auto& p : d)
                hit = hit || (distance(p.center, e.center) < 1e-6 && std::abs(p.length - e.length) < 1e-6 &&
                              std::abs(p.eo.cx - e.eo.cx) < 1e-9 && std::abs(p.eo.cy - e.eo.cy) < 1e-9 &&
                              std::abs(p.so.cx - e.so.cx) < 1e-9 && std::abs(p.so.cy - e.so.cy) < 1e-9);
            CHECK(hit);
        }
    }
    CHECK(checked > 500);
}

TEST_CASE("encode_sdn_scn junction example") {
    RoiSpec spec;  // 80 px windows
    ParkingSlot g{{66, 92}, {126, 92}, {0, 1}, {0, 1}, SlotType::slanted, Occupancy::occupied};
    auto t = encode_sdn_scn(std::vector{rois_at({70, 100}, {300, 300}, {96, 110})}, std::vector{g}, spec, 64);
    REQUIRE(t.rois == 2);
    CHECK(t.jp[0] == 1.0);
    CHECK(t.jxy[0] == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(t.jxy[1] == doctest::Approx(0.40).epsilon(1e-12));
    CHECK(t.jo[0] == 0.0);
    CHECK(t.jo[1] == 1.0);
    // Second ROI sees no junction: masked.
    CHECK(t.jp[1] == 0.0);
    CHECK(t.jxy[2] == 0.0);
    // Classification ROI inside the slanted, occupied slot.
    CHECK(t.i_slot[0] == 1.0);
    CHECK(t.st == std::vector<double>{0, 0, 1});
    CHECK(t.socc[0] == 1.0);
}

TEST_CASE("encode_sdn_scn nearest junction wins, ties to lower index") {
    RoiSpec spec;
    ParkingSlot a{{60, 100}, {120, 100}, {0, 1}, {0, 1}};
    ParkingSlot b{{80, 100}, {140, 100}, {1, 0}, {1, 0}};
    auto t = encode_sdn_scn(std::vector{rois_at({75, 100}, {70, 100}, {0, 0})}, std::vector{a, b}, spec, 64);
    CHECK(t.jo[0] == 1.0);  // b.j1 is 5 px away, a.j1 15 px
    // loc2 at 70: a.j1 and b.j1 both 10 px away, a comes first.
    CHECK(t.jo[2] == 0.0);
    CHECK(t.jo[3] == 1.0);
    CHECK(t.i_slot[0] == 0.0);
}

TEST_CASE("stage-2 round trip on exact targets") {
    RoiSpec spec;
    Rng rng(43);
    for (int trial = 0; trial < 1000; ++trial) {
        auto g = slotdet::testing::random_slot(rng, 256, 30);
        g = assemble_slot(g.j1, g.j2, g.sep1, g.sep2, g.type, g.occupancy);
        auto p = slotdet::testing::perturb(g, rng, 10, 0);
        auto rois = std::vector{designate_rois(entrance_from_slot(assemble_slot(
            p.j1, p.j2, p.sep1, p.sep2, p.type, p.occupancy)))};
        auto t = encode_sdn_scn(rois, std::vector{g}, spec, 64);
        REQUIRE(t.jp[0] == 1.0);
        REQUIRE(t.jp[1] == 1.0);
        t.st = {0, 0, 0};
        t.st[static_cast<std::size_t>(g.type)] = 1;
        t.socc = {g.occupancy == Occupancy::occupied ? 1.0 : 0.0};
        auto d = decode_sdn_scn(t, rois, std::vector{0.7}, spec, 0.5);
        REQUIRE(d.detections.size() == 1);
        const auto& s = d.detections[0].slot;
        CHECK(distance(s.j1, g.j1) < 1e-6);
        CHECK(distance(s.j2, g.j2) < 1e-6);
        CHECK(std::abs(s.sep1.cx - g.sep1.cx) < 1e-9);
        CHECK(std::abs(s.sep2.cy - g.sep2.cy) < 1e-9);
        CHECK(s.type == g.type);
        CHECK(s.occupancy == g.occupancy);
        CHECK(d.detections[0].score == 0.7);
    }
}

TEST_CASE("decode_sdn_scn survival rule and argmax") {
    RoiSpec spec;
    auto rois = std::vector{rois_at({70, 100}, {130, 100}, {100, 132})};
    SdnScnTargets pred = SdnScnTargets::zeros(1);
    pred.jp = {0.9, 0.3};
    pred.jxy = {0.5, 0.5, 0.5, 0.5};
    pred.jo = {0, 1, 0, 1};
    pred.st = {0.2, 0.5, 0.3};
    pred.socc = {0.5};
    auto dropped = decode_sdn_scn(pred, rois, std::vector{1.0}, spec, 0.5);
    CHECK(dropped.detections.empty());
    CHECK(dropped.dropped == 1);

    pred.jp = {0.9, 0.6};
    auto kept = decode_sdn_scn(pred, rois, std::vector{1.0}, spec, 0.5);
    REQUIRE(kept.detections.size() == 1);
    CHECK(kept.detections[0].slot.type == SlotType::parallel);
    CHECK(kept.detections[0].slot.occupancy == Occupancy::occupied);
    CHECK_THROWS_AS(decode_sdn_scn(pred, rois, std::vector{1.0, 1.0}, spec), CodecError);
}

TEST_CASE("snap_rois moves centres to containing cell centres") {
    RoiSpec spec = RoiSpec::for_high_stride(16);
    CHECK(spec.w_roi == 80);
    CHECK(spec.low_stride == 32);
    RoiSet r{{127.9, 127.9}, {0, 0}, {-1, 5}, {40, 40}, {100, 50}};
    auto s = snap_rois(r, spec);
    CHECK(s.loc1 == Point2{120, 120});
    CHECK(s.loc2 == Point2{8, 8});
    CHECK(s.ori1 == Point2{-8, 8});
    CHECK(s.ori2 == Point2{40, 40});
    CHECK(s.cls == Point2{112, 48});
    CHECK(cell_of({127.9, 127.9}, 16) == std::pair{7, 7});
    CHECK(cell_of({128, 128}, 16) == std::pair{8, 8});
}
