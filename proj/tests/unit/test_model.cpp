// SPDX-License-Identifier: Apache-2.0
#include <filesystem>

#include "doctest.h"
#include "slotdet/losses.hpp"
#include "slotdet/nn/model.hpp"
#include "support/gradcheck.hpp"

using namespace slotdet;
using namespace slotdet::nn;
using slotdet::testing::gradcheck;
using slotdet::testing::random_leaf;

namespace {

constexpr double kHeadTol = 1e-4;

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.backbone.stage_channels = {2, 3, 3, 4, 5};
    cfg.heads = {6, 5};
    return cfg;
}

std::vector<TensorPtr<double>> group_leaves(SlotNet<double>& net, ParamGroup g) {
    std::vector<TensorPtr<double>> out;
    for (auto& p : net.parameters())
        if (p.group == g) out.push_back(p.tensor);
    return out;
}

bool patch_is_zero(const std::vector<double>& row, std::size_t c, std::size_t k, std::size_t dy, std::size_t dx) {
    return row[(c * k + dy) * k + dx] == 0.0;
}

}  // namespace

TEST_CASE("backbone tap shapes") {
    ModelConfig cfg;
    SlotNet<float> net(cfg);
    net.init_xavier(1);
    auto maps = net.backbone_forward(Tensor<float>::zeros({3, 256, 256}));
    CHECK(maps.high->shape() == Shape{96, 16, 16});
    CHECK(maps.low->shape() == Shape{128, 8, 8});

    SlotNet<float> small(tiny_config());
    auto ps = small.backbone_forward(Tensor<float>::zeros({3, 416, 416}));
    CHECK(ps.low->dim(1) == 13);
    CHECK(ps.low->dim(2) == 13);
    CHECK(ps.high->dim(1) == 26);

    CHECK_THROWS_AS(small.backbone_forward(Tensor<float>::zeros({3, 250, 256})), ShapeError);
    CHECK_THROWS_AS(small.backbone_forward(Tensor<float>::zeros({1, 64, 64})), ShapeError);
}

TEST_CASE("zero image and zero biases give zero maps") {
    SlotNet<double> net(tiny_config());
    net.init_xavier(3);
    auto maps = net.backbone_forward(Tensor<double>::zeros({3, 64, 64}));
    for (double v : maps.high->data()) CHECK(v == 0.0);
    for (double v : maps.low->data()) CHECK(v == 0.0);
}

TEST_CASE("config validation") {
    ModelConfig bad = tiny_config();
    bad.backbone.stage_channels = {2, 3, 4};
    CHECK_THROWS_AS(SlotNet<float>{bad}, ShapeError);
    auto text = to_json(tiny_config());
    auto back = model_config_from_json(text);
    CHECK(back.backbone.stage_channels == tiny_config().backbone.stage_channels);
    CHECK(to_json(back) == text);
}

TEST_CASE("rpn head has eight activated channels") {
    SlotNet<double> net(tiny_config());
    net.init_xavier(5);
    Rng rng(5);
    auto low = random_leaf({5, 3, 4}, rng, -3, 3);
    auto p = net.rpn_head(low);
    CHECK(p.ep->dim(0) + p.exy->dim(0) + p.eo->dim(0) + p.el->dim(0) + p.so->dim(0) == 8);
    for (double v : p.ep->data()) CHECK((v > 0 && v < 1));
    for (double v : p.so->data()) CHECK((v >= -1 && v <= 1));
    auto vals = rpn_values(p);
    CHECK(vals.h == 3);
    CHECK(vals.w == 4);
}

TEST_CASE("sdn head shares weights across the two junctions") {
    SlotNet<double> net(tiny_config());
    net.init_xavier(7);
    Rng rng(7);
    const std::size_t f = 25 * 4;
    auto j = random_leaf({2, f}, rng), o = random_leaf({2, f}, rng);
    auto a = net.sdn_head(j, o);
    auto swapped = [&](const TensorPtr<double>& t) {
        std::vector<double> v(t->data().begin(), t->data().end());
        std::rotate(v.begin(), v.begin() + long(f), v.end());
        return Tensor<double>::from(t->shape(), v);
    };
    auto b = net.sdn_head(swapped(j), swapped(o));
    CHECK(a.jp->data()[0] == b.jp->data()[1]);
    CHECK(a.jp->data()[1] == b.jp->data()[0]);
    CHECK(a.jxy->data()[0] == b.jxy->data()[2]);
    CHECK(a.jo->data()[3] == b.jo->data()[1]);
    for (double v : a.jxy->data()) CHECK((v > 0 && v < 1));
}

TEST_CASE("scn head outputs four values per row") {
    SlotNet<double> net(tiny_config());
    net.init_xavier(9);
    Rng rng(9);
    auto p = net.scn_head(random_leaf({3, 9 * 5}, rng, -4, 4));
    CHECK(p.socc->shape() == Shape{3, 1});
    CHECK(p.st->shape() == Shape{3, 3});
    CHECK(p.socc->dim(1) + p.st->dim(1) == 4);
    for (std::size_t r = 0; r < 3; ++r) {
        const double s = p.st->data()[3 * r] + p.st->data()[3 * r + 1] + p.st->data()[3 * r + 2];
        CHECK(std::abs(s - 1.0) < 1e-9);
    }
}

TEST_CASE("extract_patches centre and corner") {
    ModelConfig cfg = tiny_config();
    const auto spec = cfg.roi_spec();
    // Feature value encodes its own (channel, row, col) so reads can be checked.
    std::vector<double> hv(4 * 16 * 16), lv(5 * 8 * 8);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t r = 0; r < 16; ++r)
            for (std::size_t q = 0; q < 16; ++q) hv[(c * 16 + r) * 16 + q] = 1000.0 * double(c + 1) + 100.0 * double(r) + double(q);
    for (std::size_t i = 0; i < lv.size(); ++i) lv[i] = double(i + 1);
    FeatureMaps<double> maps{Tensor<double>::from({4, 16, 16}, hv, true), Tensor<double>::from({5, 8, 8}, lv, true)};

    // Image centre of a 256 px input lies in cell (8, 8); the centred 5x5 window is rows and columns 6..10.
    RoiSet centre{{128, 128}, {0, 0}, {128, 128}, {0, 0}, {128, 128}};
    auto p = extract_patches(maps, std::span<const RoiSet>(&centre, 1), spec);
    CHECK(p.junction->shape() == Shape{2, 25 * 4});
    CHECK(p.cls->shape() == Shape{1, 9 * 5});
    std::vector<double> row(p.junction->data().begin(), p.junction->data().begin() + 100);
    for (std::size_t dy = 0; dy < 5; ++dy)
        for (std::size_t dx = 0; dx < 5; ++dx)
            CHECK(row[dy * 5 + dx] == 1000.0 + 100.0 * double(6 + dy) + double(6 + dx));

    // Corner ROI: two padded rows and two padded columns.
    std::vector<double> corner(p.junction->data().begin() + 100, p.junction->data().begin() + 200);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t dy = 0; dy < 5; ++dy)
            for (std::size_t dx = 0; dx < 5; ++dx)
                CHECK(patch_is_zero(corner, c, 5, dy, dx) == (dy < 2 || dx < 2));

    sum(add(sum(p.junction), add(sum(p.orientation), sum(p.cls))))->backward();
    double high_total = 0, low_total = 0;
    for (double g : maps.high->grad()) high_total += g;
    for (double g : maps.low->grad()) low_total += g;
    // Centre windows: 25 cells x 4 channels, twice (junction + orientation); corner: 9 in-bounds cells, twice.
    CHECK(high_total == 2.0 * (25 * 4 + 9 * 4));
    CHECK(low_total == 9.0 * 5);
}

TEST_CASE("rpn head and first-stage loss gradients") {
    for (int seed = 0; seed < 20; ++seed) {
        SlotNet<double> net(tiny_config());
        net.init_xavier(derive_seed(11, seed));
        Rng rng(derive_seed(12, seed));
        for (auto& p : net.parameters())
            for (auto& v : p.tensor->data()) v += rng.uniform(-0.1, 0.1);
        auto low = random_leaf({5, 2, 2}, rng, 0, 2);
        auto grid = GridSpec::for_image(64, 64, 100);
        ParkingSlot g{{10, 20}, {50, 24}, {0.1, 0.99498743710662}, {0, 1}};
        auto targets = encode_rpn(std::vector{g}, grid);
        auto leaves = group_leaves(net, ParamGroup::stage1);
        leaves.push_back(low);
        LossWeights w;
        auto r = gradcheck(leaves, [&] { return loss_first(net.rpn_head(low), targets, w).total; });
        CHECK(r.worst < kHeadTol);
    }
}

TEST_CASE("stage-2 head and loss gradients") {
    for (int seed = 0; seed < 20; ++seed) {
        SlotNet<double> net(tiny_config());
        net.init_xavier(derive_seed(21, seed));
        Rng rng(derive_seed(22, seed));
        for (auto& p : net.parameters())
            for (auto& v : p.tensor->data()) v += rng.uniform(-0.1, 0.1);
        auto j = random_leaf({4, 100}, rng), o = random_leaf({4, 100}, rng), c = random_leaf({2, 45}, rng);
        auto t = SdnScnTargets::zeros(2);
        t.jp = {1, 0, 1, 1};
        t.jxy = {0.4, 0.6, 0, 0, 0.5, 0.45, 0.7, 0.2};
        t.jo = {0, 1, 0, 0, 0.6, 0.8, -0.6, 0.8};
        t.i_slot = {1, 0};
        t.st = {0, 1, 0, 0, 0, 0};
        t.socc = {1, 0};
        auto leaves = group_leaves(net, ParamGroup::stage2);
        leaves.insert(leaves.end(), {j, o, c});
        LossWeights w;
        auto r = gradcheck(leaves, [&] {
            auto sdn = loss_sdn(net.sdn_head(j, o), t, w);
            auto scn = loss_scn(net.scn_head(c), t, w);
            return loss_second(sdn, scn);
        });
        CHECK(r.worst < kHeadTol);
    }
}

TEST_CASE("checkpoint round trip is byte identical") {
    SlotNet<float> net(tiny_config());
    net.init_xavier(31);
    auto cfg = net.config();
    cfg.decode.l_max = 77.5;
    net.set_decode(cfg.decode);
    auto bytes = checkpoint_bytes(net);
    auto back = checkpoint_from_bytes<float>(bytes);
    CHECK(checkpoint_bytes(back) == bytes);
    CHECK(back.config().decode.l_max == 77.5);

    const auto dir = std::filesystem::temp_directory_path() / "slotdet_ckpt_test";
    std::filesystem::create_directories(dir);
    save_checkpoint(net, dir / "m.ckpt");
    auto loaded = load_checkpoint<float>(dir / "m.ckpt");
    CHECK(checkpoint_bytes(loaded) == bytes);
    std::filesystem::remove_all(dir);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_WITH(checkpoint_from_bytes<float>(bad), doctest::Contains("bad magic"));
    auto cut = std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 3);
    CHECK_THROWS_WITH(checkpoint_from_bytes<float>(cut), doctest::Contains("truncated"));
    auto ver = bytes;
    ver[8] = 9;
    CHECK_THROWS_WITH(checkpoint_from_bytes<float>(ver), doctest::Contains("version"));
}

TEST_CASE("float and double models agree after copying parameters") {
    SlotNet<float> f(tiny_config());
    f.init_xavier(41);
    SlotNet<double> d(tiny_config());
    copy_parameters(f, d);
    Rng rng(41);
    std::vector<std::uint8_t> rgb(64 * 64 * 3);
    for (auto& b : rgb) b = static_cast<std::uint8_t>(rng.below(256));
    auto mf = f.backbone_forward(image_tensor<float>(rgb, 64, 64));
    auto md = d.backbone_forward(image_tensor<double>(rgb, 64, 64));
    for (std::size_t i = 0; i < mf.low->numel(); ++i)
        CHECK(double(mf.low->data()[i]) == doctest::Approx(md.low->data()[i]).epsilon(1e-4));
    CHECK_THROWS_AS(image_tensor<float>(rgb, 64, 63), ShapeError);
}
