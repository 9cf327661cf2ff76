// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "slotdet/losses.hpp"
#include "slotdet/nn/model.hpp"
#include "support/gradcheck.hpp"

using namespace slotdet;
using namespace slotdet::nn;
using slotdet::testing::gradcheck;

namespace {

TensorPtr<double> planes(std::size_t k, std::size_t h, std::size_t w, std::vector<double> v) {
    return Tensor<double>::from({k, h, w}, std::move(v));
}

/// 1x1-grid prediction with every channel given explicitly.
RpnPrediction<double> rpn_pred(double ep, std::array<double, 2> exy, double el, std::array<double, 2> eo,
                               std::array<double, 2> so) {
    return {planes(1, 1, 1, {ep}), planes(2, 1, 1, {exy[0], exy[1]}), planes(2, 1, 1, {eo[0], eo[1]}),
            planes(1, 1, 1, {el}), planes(2, 1, 1, {so[0], so[1]})};
}

RpnTargets one_cell(double ep, std::array<double, 2> exy, double el, std::array<double, 2> eo,
                    std::array<double, 2> so) {
    auto t = RpnTargets::zeros(1, 1);
    t.ep = {ep};
    t.exy = {exy[0], exy[1]};
    t.el = {el};
    t.eo = {eo[0], eo[1]};
    t.so = {so[0], so[1]};
    return t;
}

SdnPrediction<double> sdn_pred(std::vector<double> jp, std::vector<double> jxy, std::vector<double> jo) {
    const std::size_t r = jp.size();
    return {Tensor<double>::from({r, 1}, std::move(jp)), Tensor<double>::from({r, 2}, std::move(jxy)),
            Tensor<double>::from({r, 2}, std::move(jo))};
}

ScnPrediction<double> scn_pred(std::vector<double> socc, std::vector<double> st) {
    const std::size_t p = socc.size();
    return {Tensor<double>::from({p, 1}, std::move(socc)), Tensor<double>::from({p, 3}, std::move(st))};
}

}  // namespace

TEST_CASE("first-stage terms") {
    LossWeights w;
    SUBCASE("perfect prediction is zero") {
        auto t = one_cell(1, {0.3, 0.6}, 0.25, {0.6, 0.8}, {-0.8, 0.6});
        auto l = loss_first(rpn_pred(1, {0.3, 0.6}, 0.25, {0.6, 0.8}, {-0.8, 0.6}), t, w);
        CHECK(l.total->item() == 0.0);
    }
    SUBCASE("negative cell uses lambda_e") {
        auto t = one_cell(0, {0, 0}, 0, {0, 0}, {0, 0});
        auto l = loss_first(rpn_pred(0.5, {0.9, 0.1}, 0.7, {1, 0}, {0, 1}), t, w);
        CHECK(l.ep->item() == doctest::Approx(0.0075).epsilon(1e-12));
        // Everything but ep is masked on a negative cell.
        CHECK(l.exy->item() == 0.0);
        CHECK(l.el->item() == 0.0);
        CHECK(l.eo->item() == 0.0);
        CHECK(l.so->item() == 0.0);
        CHECK(l.total->item() == doctest::Approx(400 * 0.0075).epsilon(1e-12));
    }
    SUBCASE("positive cell weighted sum") {
        auto t = one_cell(1, {0.5, 0.5}, 0.2, {1, 0}, {0, 1});
        auto l = loss_first(rpn_pred(0.9, {0.6, 0.3}, 0.3, {0.8, 0.6}, {0, 0.5}), t, w);
        const double ep = 0.01, exy = 0.01 + 0.04, el = 0.01, eo = 0.04 + 0.36, so = 0.25;
        CHECK(l.ep->item() == doctest::Approx(ep).epsilon(1e-12));
        CHECK(l.exy->item() == doctest::Approx(exy).epsilon(1e-12));
        CHECK(l.el->item() == doctest::Approx(el).epsilon(1e-12));
        CHECK(l.eo->item() == doctest::Approx(eo).epsilon(1e-12));
        CHECK(l.so->item() == doctest::Approx(so).epsilon(1e-12));
        const double hand = 400 * ep + 400 * exy + 1000 * el + 1000 * eo + 400 * so;
        CHECK(l.total->item() == doctest::Approx(hand).epsilon(1e-12));
        auto rep = report_first(l);
        CHECK(rep.first == doctest::Approx(hand).epsilon(1e-12));
        CHECK(rep.eo == doctest::Approx(eo).epsilon(1e-12));
    }
    SUBCASE("shape mismatch") {
        auto t = RpnTargets::zeros(2, 2);
        CHECK_THROWS_AS(loss_first(rpn_pred(0.5, {0, 0}, 0, {0, 0}, {0, 0}), t, w), ShapeError);
    }
}

TEST_CASE("sdn terms") {
    LossWeights w;
    auto t = SdnScnTargets::zeros(1);
    t.jp = {1, 0};
    t.jxy = {0.45, 0.40, 0, 0};
    t.jo = {0, 1, 0, 0};
    auto l = loss_sdn(sdn_pred({0.6, 0}, {0.45, 0.40, 0.9, 0.1}, {0, 1, 1, 0}), t, w);
    CHECK(l.jp->item() == doctest::Approx(0.16).epsilon(1e-12));
    CHECK(l.jxy->item() == 0.0);  // second ROI masked
    CHECK(l.jo->item() == 0.0);
    CHECK(l.total->item() == doctest::Approx(1500 * 0.16).epsilon(1e-12));
    CHECK(snu_preset().weights.w_jp == 1500);
    CHECK(snu_preset().weights.w_jxy == 2000);
    CHECK(snu_preset().weights.w_jo == 6000);
    CHECK_THROWS_AS(loss_sdn(sdn_pred({0.6}, {0.5, 0.5}, {0, 1}), t, w), ShapeError);
}

TEST_CASE("scn terms") {
    LossWeights w;
    auto t = SdnScnTargets::zeros(2);
    t.i_slot = {1, 0};
    t.st = {0, 0, 1, 1, 0, 0};
    t.socc = {0, 0};
    auto l = loss_scn(scn_pred({0.2, 0.9}, {0.1, 0.1, 0.8, 0.01, 0.01, 0.98}), t, w);
    CHECK(l.st->item() == doctest::Approx(-14.92 * std::log(0.8)).epsilon(1e-12));
    CHECK(l.st->item() == doctest::Approx(3.3293).epsilon(1e-4));
    CHECK(l.socc->item() == doctest::Approx(0.74 * 0.04).epsilon(1e-12));
    CHECK(l.total->item() == doctest::Approx(0.5 * l.st->item() + 100 * l.socc->item()).epsilon(1e-12));

    // A zero probability on the true class is clamped rather than infinite.
    t.i_slot = {1, 1};
    auto clamp = loss_scn(scn_pred({0.0, 0.0}, {0.0, 0.5, 0.5, 0.0, 0.5, 0.5}), t, w);
    CHECK(std::isfinite(clamp.st->item()));
    CHECK(clamp.st->item() == doctest::Approx(-(14.92 * std::log(0.5) + 8.33 * std::log(kLogFloor))));
}

TEST_CASE("second-stage total is the sum of the two heads") {
    LossWeights w;
    auto t = SdnScnTargets::zeros(1);
    t.jp = {1, 1};
    t.jxy = {0.3, 0.6, 0.5, 0.5};
    t.jo = {0, 1, 0.6, 0.8};
    t.i_slot = {1};
    t.st = {0, 1, 0};
    t.socc = {1};
    auto sdn = loss_sdn(sdn_pred({0.7, 0.8}, {0.4, 0.5, 0.45, 0.55}, {0.1, 0.9, 0.5, 0.7}), t, w);
    auto scn = loss_scn(scn_pred({0.6}, {0.3, 0.5, 0.2}), t, w);
    auto total = loss_second(sdn, scn);
    CHECK(total->item() == sdn.total->item() + scn.total->item());
    auto rep = report_second(sdn, scn);
    CHECK(rep.second == total->item());
    CHECK(rep.sdn + rep.scn == rep.second);

    auto empty = SdnScnTargets::zeros(0);
    auto zs = loss_sdn(sdn_pred({}, {}, {}), empty, w);
    auto zc = loss_scn(scn_pred({}, {}), empty, w);
    CHECK(loss_second(zs, zc)->item() == 0.0);
}

TEST_CASE("scaling one weight scales its contribution and gradient exactly") {
    LossWeights w;
    auto t = one_cell(1, {0.5, 0.5}, 0.2, {1, 0}, {0, 1});
    auto make = [] {
        auto p = rpn_pred(0.9, {0.6, 0.3}, 0.3, {0.8, 0.6}, {0, 0.5});
        p.el->set_requires_grad(true);
        return p;
    };
    auto p1 = make();
    auto l1 = loss_first(p1, t, w);
    l1.total->backward();
    LossWeights w2 = w;
    w2.w_el *= 4;  // power of two keeps the products exact
    auto p2 = make();
    auto l2 = loss_first(p2, t, w2);
    l2.total->backward();
    CHECK(l2.total->item() - l1.total->item() == doctest::Approx(3 * 1000 * l1.el->item()).epsilon(1e-12));
    CHECK(p2.el->grad()[0] == 4 * p1.el->grad()[0]);
}

TEST_CASE("losses are non-negative on random inputs") {
    Rng rng(51);
    LossWeights w;
    for (int trial = 0; trial < 100; ++trial) {
        auto t = one_cell(double(rng.below(2)), {rng.uniform(), rng.uniform()}, rng.uniform(), {0.6, 0.8}, {0, 1});
        auto l = loss_first(rpn_pred(rng.uniform(), {rng.uniform(), rng.uniform()}, rng.uniform(),
                                     {rng.uniform(-1, 1), rng.uniform(-1, 1)}, {rng.uniform(-1, 1), rng.uniform(-1, 1)}),
                            t, w);
        CHECK(l.total->item() >= 0.0);
    }
}

TEST_CASE("presets") {
    auto snu = preset_by_name("snu");
    CHECK(snu.weights.w_ep == 400);
    CHECK(snu.weights.w_exy == 400);
    CHECK(snu.weights.w_el == 1000);
    CHECK(snu.weights.w_eo == 1000);
    CHECK(snu.weights.w_so == 400);
    CHECK(snu.weights.lambda_e == 0.03);
    CHECK(snu.l_max == 400);
    CHECK(snu.rois == 12);
    CHECK(snu.weights.w_st == 0.5);
    CHECK(snu.weights.w_socc == 100);
    CHECK(snu.weights.lambda_st == std::array<double, 3>{8.33, 1.23, 14.92});
    CHECK(snu.weights.lambda_vac == 0.74);

    auto ps = preset_by_name("ps20");
    CHECK(ps.weights.w_ep == 500);
    CHECK(ps.weights.w_eo == 1500);
    CHECK(ps.weights.w_so == 500);
    CHECK(ps.weights.lambda_e == 0.01);
    CHECK(ps.l_max == 291);
    CHECK(ps.weights.w_jp == 1000);
    CHECK(ps.weights.w_jxy == 3000);
    CHECK(ps.weights.w_jo == 4000);
    CHECK(ps.rois == 8);
    CHECK(ps.weights.lambda_st == std::array<double, 3>{1.76, 2.86, 31.65});
    CHECK(ps.weights.lambda_vac == 0.47);
    CHECK_THROWS_AS(preset_by_name("kitti"), std::invalid_argument);

    LossWeights bad;
    bad.w_jo = -1;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("imbalance factors follow the corpus ratios") {
    CorpusStats s;
    std::vector<ParkingSlot> a{{{0, 0}, {60, 0}, {0, 1}, {0, 1}, SlotType::perpendicular, Occupancy::occupied},
                               {{0, 50}, {90, 50}, {0, 1}, {0, 1}, SlotType::parallel, Occupancy::vacant}};
    std::vector<ParkingSlot> b{{{0, 0}, {70, 0}, {0, 1}, {0, 1}, SlotType::perpendicular, Occupancy::vacant}};
    s.add_image(a, 36);
    s.add_image(b, 36);
    CHECK(s.positive_cells == 3);
    CHECK(s.negative_cells == 69);
    CHECK(s.max_length == 90);
    auto w = with_corpus_lambdas(LossWeights{}, s);
    CHECK(w.lambda_e == 3.0 / 69.0);
    CHECK(w.lambda_st[0] == 1.5);
    CHECK(w.lambda_st[1] == 3.0);
    CHECK(w.lambda_st[2] == 14.92);  // no slanted slots: preset value kept
    CHECK(w.lambda_vac == 0.5);
}

TEST_CASE("full pipeline gradient on a 64 px scene") {
    ModelConfig cfg;
    cfg.backbone.stage_channels = {2, 2, 3, 3, 4};
    cfg.heads = {4, 4};
    cfg.decode.l_max = 100;
    const auto spec = cfg.roi_spec();
    const ParkingSlot g{{12, 18}, {52, 20}, {0.05, 0.99874921777190895}, {0, 1}, SlotType::slanted,
                        Occupancy::occupied};
    const auto grid = GridSpec::for_image(64, 64, cfg.decode.l_max);
    const auto rpn_t = encode_rpn(std::vector{g}, grid);
    const auto rois = std::vector{snap_rois(designate_rois(entrance_from_slot(g), cfg.decode.offsets.scaled(0.5)), spec)};
    const auto s2_t = encode_sdn_scn(rois, std::vector{g}, spec, 30);
    const LossWeights w = snu_preset().weights;

    for (int seed = 0; seed < 3; ++seed) {
        SlotNet<double> net(cfg);
        net.init_xavier(derive_seed(61, seed));
        Rng rng(derive_seed(62, seed));
        for (auto& p : net.parameters())
            for (auto& v : p.tensor->data()) v += rng.uniform(-0.2, 0.2);
        std::vector<std::uint8_t> rgb(64 * 64 * 3);
        for (auto& b : rgb) b = static_cast<std::uint8_t>(rng.below(256));
        auto image = image_tensor<double>(rgb, 64, 64);
        std::vector<TensorPtr<double>> leaves;
        for (auto& p : net.parameters()) leaves.push_back(p.tensor);
        auto r = gradcheck(leaves, [&] {
            auto maps = net.backbone_forward(image);
            auto first = loss_first(net.rpn_head(maps.low), rpn_t, w);
            auto patches = extract_patches(maps, std::span<const RoiSet>(rois), spec);
            auto sdn = loss_sdn(net.sdn_head(patches.junction, patches.orientation), s2_t, w);
            auto scn = loss_scn(net.scn_head(patches.cls), s2_t, w);
            return add(first.total, loss_second(sdn, scn));
        });
        CHECK(r.worst < 1e-4);
    }
}
