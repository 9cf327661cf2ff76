// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "slotdet/evalx.hpp"
#include "support/oracles.hpp"

using namespace slotdet;
using slotdet::testing::brute_force_max_matching;
using slotdet::testing::oracle_qualifies;
using slotdet::testing::perturb;
using slotdet::testing::random_slot;

namespace {

const ParkingSlot kGt{{100, 100}, {160, 100}, {0, 1}, {0, 1}, SlotType::perpendicular, Occupancy::vacant};

UnitVec2 turn_deg(UnitVec2 v, double deg) { return v.rotated(deg * std::numbers::pi / 180.0); }

using Instance = slotdet::testing::MatchInstance;
using slotdet::testing::random_match_instance;

}  // namespace

TEST_CASE("criteria presets and parsing") {
    CHECK(MatchCriteria::loose().m == 12);
    CHECK(MatchCriteria::loose().n == 10);
    CHECK(MatchCriteria::tight().m == 6);
    CHECK(MatchCriteria::tight().n == 5);
    CHECK(MatchCriteria::parse("tight").label == CriteriaLabel::tight);
    auto c = MatchCriteria::parse("8,7.5");
    CHECK(c.m == 8);
    CHECK(c.n == 7.5);
    CHECK(c.label == CriteriaLabel::custom);
    CHECK_THROWS(MatchCriteria::parse("8"));
    CHECK_THROWS(MatchCriteria::parse("0,5"));
    CHECK_THROWS(MatchCriteria::parse("abc"));
    CHECK(MatchCriteria::parse(MatchCriteria::custom(3, 4).name()).m == 3);
}

TEST_CASE("identical detection matches under tight criteria") {
    std::vector<Detection> d{{kGt, 0.9}};
    auto m = match_slots(d, std::span(&kGt, 1), MatchCriteria::tight());
    CHECK(m.tp == 1);
    CHECK(m.fp == 0);
    CHECK(m.fn == 0);
    CHECK(m.det_to_gt[0] == 0);
}

TEST_CASE("moderate error: loose yes, tight no") {
    ParkingSlot d = kGt;
    d.j1 = d.j1 + Point2{3, 4};  // 5 px
    d.j2 = d.j2 + Point2{0, 7};  // 7 px
    d.sep1 = turn_deg(d.sep1, 3);
    d.sep2 = turn_deg(d.sep2, -4);
    auto e = slot_error(d, kGt);
    CHECK(e.junction1 == doctest::Approx(5));
    CHECK(e.junction2 == doctest::Approx(7));
    CHECK(e.sep1 == doctest::Approx(3));
    CHECK(e.sep2 == doctest::Approx(4));
    CHECK_FALSE(e.swapped);
    std::vector<Detection> dets{{d, 1}};
    CHECK(match_slots(dets, std::span(&kGt, 1), MatchCriteria::loose()).tp == 1);
    CHECK(match_slots(dets, std::span(&kGt, 1), MatchCriteria::tight()).tp == 0);
}

TEST_CASE("swapped junction order pairs crosswise") {
    ParkingSlot d{kGt.j2, kGt.j1, kGt.sep2, kGt.sep1, kGt.type, kGt.occupancy};
    auto e = slot_error(d, kGt);
    CHECK(e.swapped);
    CHECK(e.max_junction() == 0);
    CHECK(e.sep1 == 0);
}

TEST_CASE("entrance error is reported but does not decide matching") {
    ParkingSlot d = kGt;
    d.sep1 = turn_deg(d.sep1, 20);
    CHECK_FALSE(within(slot_error(d, kGt), MatchCriteria::loose()));
    ParkingSlot tilted = kGt;
    tilted.j2 = tilted.j2 + Point2{0, 10};  // entrance turns by ~9.5 degrees, junction 10 px
    auto e = slot_error(tilted, kGt);
    CHECK(e.entrance > 9);
    CHECK(within(e, MatchCriteria::custom(12, 1)));
}

TEST_CASE("two detections on one ground truth") {
    std::vector<Detection> dets{{kGt, 0.5}, {kGt, 0.8}};
    auto m = match_slots(dets, std::span(&kGt, 1), MatchCriteria::loose());
    CHECK(m.tp == 1);
    CHECK(m.fp == 1);
    CHECK(m.det_to_gt[1] == 0);  // higher score wins
    CHECK(m.det_to_gt[0] == -1);
}

TEST_CASE("report ratios") {
    std::vector<ParkingSlot> gts;
    std::vector<Detection> dets;
    for (int i = 0; i < 10; ++i) {
        ParkingSlot s = kGt;
        s.j1.y = s.j2.y = 100.0 + 80.0 * i;
        gts.push_back(s);
        if (i < 9) dets.push_back({s, 0.9});
    }
    ParkingSlot stray = kGt;
    stray.j1.x = stray.j2.x = -500;
    stray.j2.y = 160;
    dets.push_back({stray, 0.95});
    auto m = match_slots(dets, gts, MatchCriteria::loose());
    auto r = compute_report(m, dets, gts, MatchCriteria::loose());
    CHECK(r.tp == 9);
    CHECK(r.fp == 1);
    CHECK(r.recall == 0.9);
    CHECK(r.precision == 0.9);
    CHECK(r.location_error_mean == 0);
    CHECK(r.type_rate == 1);

    auto none = compute_report(match_slots({}, gts, MatchCriteria::loose()), {}, gts, MatchCriteria::loose());
    CHECK(none.recall == 0);
    CHECK(std::isnan(none.precision));
    CHECK(std::isnan(none.location_error_mean));

    auto nogt = compute_report(match_slots(dets, {}, MatchCriteria::loose()), dets, {}, MatchCriteria::loose());
    CHECK(std::isnan(nogt.recall));
    CHECK(nogt.fp == 10);
    CHECK(nogt.precision == 0);
}

TEST_CASE("error statistics over true positives") {
    std::vector<ParkingSlot> gts{kGt};
    ParkingSlot far = kGt;
    far.j1.y = far.j2.y = 400;
    gts.push_back(far);
    ParkingSlot a = kGt;
    a.j1 = a.j1 + Point2{2, 0};
    a.sep1 = turn_deg(a.sep1, 2);
    a.occupancy = Occupancy::occupied;
    ParkingSlot b = far;
    b.j2 = b.j2 + Point2{0, 6};
    b.sep2 = turn_deg(b.sep2, 6);
    b.type = SlotType::slanted;
    std::vector<Detection> dets{{a, 0.9}, {b, 0.8}};
    auto r = compute_report(match_slots(dets, gts, MatchCriteria::loose()), dets, gts, MatchCriteria::loose());
    REQUIRE(r.tp == 2);
    // Per-slot location errors 1 and 3 px; orientation 1 and 3 degrees.
    CHECK(r.location_error_mean == doctest::Approx(2));
    CHECK(r.location_error_std == doctest::Approx(1));
    CHECK(r.orientation_error_mean == doctest::Approx(2));
    CHECK(r.orientation_error_std == doctest::Approx(1));
    CHECK(r.type_rate == 0.5);
    CHECK(r.occupancy_rate == 0.5);
}

TEST_CASE("greedy matcher against exhaustive matching") {
    Rng rng(71);
    int agree = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        auto in = random_match_instance(rng);
        const auto c = rng.bernoulli(0.5) ? MatchCriteria::loose() : MatchCriteria::tight();
        auto m = match_slots(in.dets, in.gts, c);
        const int best = brute_force_max_matching(in.dets, in.gts, c.m, c.n);
        CHECK(m.tp <= best);
        agree += m.tp == best;
        // Every reported pair must qualify under the independent test.
        for (std::size_t d = 0; d < in.dets.size(); ++d)
            if (m.det_to_gt[d] >= 0)
                CHECK(oracle_qualifies(in.dets[d].slot, in.gts[std::size_t(m.det_to_gt[d])], c.m, c.n));
        CHECK(m.tp + m.fp == int(in.dets.size()));
        CHECK(m.tp + m.fn == int(in.gts.size()));
        auto r = compute_report(m, in.dets, in.gts, c);
        if (!in.gts.empty()) CHECK(r.recall == double(m.tp) / double(in.gts.size()));
        if (!in.dets.empty()) CHECK(r.precision == double(m.tp) / double(in.dets.size()));
    }
    CHECK(agree >= 990);
}

TEST_CASE("tightening never adds true positives") {
    Rng rng(73);
    for (int i = 0; i < 1000; ++i) {
        auto in = random_match_instance(rng);
        const double m = rng.uniform(2, 20), n = rng.uniform(2, 20);
        const double m2 = m * rng.uniform(0.3, 1.0), n2 = n * rng.uniform(0.3, 1.0);
        CHECK(match_slots(in.dets, in.gts, MatchCriteria::custom(m2, n2)).tp <=
              match_slots(in.dets, in.gts, MatchCriteria::custom(m, n)).tp);
        CHECK(match_slots(in.dets, in.gts, MatchCriteria::tight()).tp <=
              match_slots(in.dets, in.gts, MatchCriteria::loose()).tp);
    }
}

TEST_CASE("matching is translation invariant") {
    Rng rng(79);
    for (int i = 0; i < 300; ++i) {
        auto in = random_match_instance(rng);
        const Point2 t{double(int(rng.below(400)) - 200), double(int(rng.below(400)) - 200)};
        auto moved = in;
        for (auto& g : moved.gts) g.j1 = g.j1 + t, g.j2 = g.j2 + t;
        for (auto& d : moved.dets) d.slot.j1 = d.slot.j1 + t, d.slot.j2 = d.slot.j2 + t;
        auto a = match_slots(in.dets, in.gts, MatchCriteria::loose());
        auto b = match_slots(moved.dets, moved.gts, MatchCriteria::loose());
        CHECK(a.det_to_gt == b.det_to_gt);
    }
}

TEST_CASE("report json round trip and table") {
    std::vector<Detection> dets{{kGt, 1}};
    std::vector<EvalReport> reps{
        compute_report(match_slots(dets, std::span(&kGt, 1), MatchCriteria::loose()), dets, std::span(&kGt, 1),
                       MatchCriteria::loose()),
        compute_report(match_slots({}, std::span(&kGt, 1), MatchCriteria::tight()), {}, std::span(&kGt, 1),
                       MatchCriteria::tight())};
    auto text = report_json(reps);
    CHECK(text.find("null") != std::string::npos);  // undefined precision
    auto back = reports_from_json(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].recall == 1);
    CHECK(back[1].criteria.label == CriteriaLabel::tight);
    CHECK(std::isnan(back[1].precision));
    CHECK(report_json(back) == text);
    auto table = report_table(reps);
    CHECK(table.find("loose") != std::string::npos);
    CHECK(table.find("tight") != std::string::npos);
}
