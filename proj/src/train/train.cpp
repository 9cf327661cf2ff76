// SPDX-License-Identifier: Apache-2.0
#include "slotdet/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>

#include "json.hpp"

namespace slotdet {

using nlohmann::ordered_json;
using nn::TensorPtr;

void AdamConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("adam: lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("adam: betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw std::invalid_argument("adam: eps must be positive");
}

template <typename T>
bool adam_step(std::span<const TensorPtr<T>> params, AdamState& state, const AdamConfig& cfg,
               std::span<const std::uint8_t> active) {
    if (state.slots.empty()) state.slots.resize(params.size());
    if (state.slots.size() != params.size()) throw std::invalid_argument("adam: state does not match parameters");
    if (!active.empty() && active.size() != params.size())
        throw std::invalid_argument("adam: active mask does not match parameters");
    auto is_active = [&](std::size_t i) { return active.empty() || active[i] != 0; };

    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!is_active(i) || !params[i]->has_grad()) continue;
        const auto g = std::as_const(*params[i]).grad();
        for (T v : g)
            if (!std::isfinite(v)) {
                ++state.skipped;
                return false;
            }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!is_active(i)) continue;
        auto& p = *params[i];
        AdamSlot& s = state.slots[i];
        if (s.m.empty()) {
            s.m.assign(p.numel(), 0.0);
            s.v.assign(p.numel(), 0.0);
        }
        ++s.step;
        const double c1 = 1.0 - std::pow(cfg.beta1, double(s.step));
        const double c2 = 1.0 - std::pow(cfg.beta2, double(s.step));
        const auto g = std::as_const(p).grad();
        auto w = p.data();
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = g.empty() ? 0.0 : double(g[k]);
            s.m[k] = cfg.beta1 * s.m[k] + (1.0 - cfg.beta1) * gk;
            s.v[k] = cfg.beta2 * s.v[k] + (1.0 - cfg.beta2) * gk * gk;
            const double step = cfg.lr * (s.m[k] / c1) / (std::sqrt(s.v[k] / c2) + cfg.eps);
            w[k] = static_cast<T>(double(w[k]) - step);
        }
    }
    return true;
}

template bool adam_step<float>(std::span<const TensorPtr<float>>, AdamState&, const AdamConfig&,
                               std::span<const std::uint8_t>);
template bool adam_step<double>(std::span<const TensorPtr<double>>, AdamState&, const AdamConfig&,
                                std::span<const std::uint8_t>);

std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::stage1: return "stage1";
        case Phase::stage2: return "stage2";
        case Phase::joint: return "joint";
    }
    return "joint";
}

void DetectConfig::validate() const {
    if (!(tau_prop >= 0.0 && tau_prop <= 1.0) || !(tau_j >= 0.0 && tau_j <= 1.0))
        throw std::invalid_argument("thresholds must lie in [0, 1]");
    if (!(nms_distance >= 0.0)) throw std::invalid_argument("nms distance must be non-negative");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (alternate_epochs < 0 || alternate_epochs > epochs)
        throw std::invalid_argument("alternate_epochs must lie in [0, epochs]");
    if (preset != "snu" && preset != "ps20" && preset != "desk")
        throw std::invalid_argument("unknown loss preset '" + preset + "'");
    if (!(slot_depth > 0.0)) throw std::invalid_argument("slot_depth must be positive");
    if (!(center_jitter >= 0.0) || !(angle_jitter_deg >= 0.0)) throw std::invalid_argument("jitter must be >= 0");
    if (negative_proposals < 0) throw std::invalid_argument("negative_proposals must be >= 0");
    adam.validate();
    detect.validate();
    model.backbone.validate();
}

Phase TrainConfig::phase(int epoch) const {
    if (epoch > alternate_epochs) return Phase::joint;
    return epoch % 2 == 1 ? Phase::stage1 : Phase::stage2;
}

ResolvedLosses resolve_losses(const std::string& preset, std::span<const SceneSample> train_set, int low_stride) {
    if (preset != "desk") {
        const LossPreset p = preset_by_name(preset);
        return {p.weights, p.l_max};
    }
    CorpusStats stats;
    for (const auto& s : train_set)
        stats.add_image(s.slots, (s.image.width / low_stride) * (s.image.height / low_stride));
    ResolvedLosses r{with_corpus_lambdas(snu_preset().weights, stats), stats.max_length};
    if (!(r.l_max > 0.0)) r.l_max = snu_preset().l_max;
    return r;
}

std::vector<SlotEntrance> training_proposals(std::span<const ParkingSlot> gts, const TrainConfig& cfg, double l_max,
                                             int image_w, int image_h, Rng& rng) {
    constexpr double deg = std::numbers::pi / 180.0;
    std::vector<SlotEntrance> out;
    for (const auto& g : gts) {
        SlotEntrance e = entrance_from_slot(g);
        e.center = e.center + Point2{rng.uniform(-cfg.center_jitter, cfg.center_jitter),
                                     rng.uniform(-cfg.center_jitter, cfg.center_jitter)};
        e.eo = e.eo.rotated(rng.uniform(-cfg.angle_jitter_deg, cfg.angle_jitter_deg) * deg);
        e.so = e.so.rotated(rng.uniform(-cfg.angle_jitter_deg, cfg.angle_jitter_deg) * deg);
        out.push_back(e);
    }
    for (int i = 0; i < cfg.negative_proposals; ++i) {
        SlotEntrance e;
        e.center = {rng.uniform(0, image_w), rng.uniform(0, image_h)};
        e.eo = UnitVec2::from_angle(rng.uniform(0, 2 * std::numbers::pi));
        e.so = e.eo.rotated(std::numbers::pi / 2);
        e.length = rng.uniform(0.3, 1.0) * l_max;
        e.score = 0.0;
        out.push_back(e);
    }
    return out;
}

SceneSample dihedral(const SceneSample& s, int k) {
    if (k < 0 || k >= 8) throw std::invalid_argument("dihedral index must lie in [0, 8)");
    const int w = s.image.width, h = s.image.height;
    const bool fx = k & 1, fy = k & 2, tr = k & 4;
    if (tr && w != h) throw std::invalid_argument("transposition needs a square image");
    if (k == 0) return s;
    SceneSample out;
    out.image = {tr ? h : w, tr ? w : h, std::vector<std::uint8_t>(s.image.rgb.size())};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int nx = fx ? w - 1 - x : x, ny = fy ? h - 1 - y : y;
            if (tr) std::swap(nx, ny);
            const auto src = (static_cast<std::size_t>(y) * w + x) * 3;
            const auto dst = (static_cast<std::size_t>(ny) * out.image.width + nx) * 3;
            for (int c = 0; c < 3; ++c) out.image.rgb[dst + c] = s.image.rgb[src + c];
        }
    auto point = [&](Point2 p) {
        if (fx) p.x = w - p.x;
        if (fy) p.y = h - p.y;
        if (tr) std::swap(p.x, p.y);
        return p;
    };
    auto dir = [&](UnitVec2 d) {
        if (fx) d.cx = -d.cx;
        if (fy) d.cy = -d.cy;
        if (tr) std::swap(d.cx, d.cy);
        return d;
    };
    for (const auto& slot : s.slots)
        out.slots.push_back(assemble_slot(point(slot.j1), point(slot.j2), dir(slot.sep1), dir(slot.sep2), slot.type,
                                          slot.occupancy));
    return out;
}

std::string EpochMetrics::json_line() const {
    auto crit = [](const EvalReport& r) {
        auto num = [](double v) { return std::isnan(v) ? ordered_json(nullptr) : ordered_json(v); };
        return ordered_json{{"recall", num(r.recall)},       {"precision", num(r.precision)},
                            {"tp", r.tp},                    {"fp", r.fp},
                            {"gt", r.gt},                    {"location_error", num(r.location_error_mean)},
                            {"orientation_error", num(r.orientation_error_mean)}};
    };
    ordered_json j{{"epoch", epoch},
                   {"phase", std::string(to_string(phase))},
                   {"images", images},
                   {"steps", steps},
                   {"skipped_steps", skipped_steps},
                   {"loss",
                    {{"ep", loss.ep},
                     {"exy", loss.exy},
                     {"el", loss.el},
                     {"eo", loss.eo},
                     {"so", loss.so},
                     {"first", loss.first},
                     {"jp", loss.jp},
                     {"jxy", loss.jxy},
                     {"jo", loss.jo},
                     {"sdn", loss.sdn},
                     {"st", loss.st},
                     {"socc", loss.socc},
                     {"scn", loss.scn},
                     {"second", loss.second}}}};
    if (evaluated) j["eval"] = {{"loose", crit(loose)}, {"tight", crit(tight)}};
    return j.dump();
}

namespace {

/// One image's forward and backward pass for the given phase.
LossReport accumulate_image(nn::SlotNet<float>& net, const SceneSample& s, Phase phase, const TrainConfig& cfg,
                            const ResolvedLosses& losses, Rng& rng) {
    const auto& mc = net.config();
    const int low_stride = mc.backbone.low_stride();
    const auto x = nn::image_tensor<float>(s.image.rgb, s.image.width, s.image.height);
    const auto maps = net.backbone_forward(x);
    LossReport report;
    TensorPtr<float> total;
    if (phase != Phase::stage2) {
        const auto pred = net.rpn_head(maps.low);
        const auto grid = GridSpec::for_image(s.image.width, s.image.height, losses.l_max, low_stride);
        const auto first = loss_first(pred, encode_rpn(s.slots, grid), losses.weights);
        report += report_first(first);
        total = first.total;
    }
    if (phase != Phase::stage1) {
        const auto props = training_proposals(s.slots, cfg, losses.l_max, s.image.width, s.image.height, rng);
        if (!props.empty()) {
            const RoiSpec spec = mc.roi_spec();
            std::vector<RoiSet> rois;
            for (const auto& p : props) rois.push_back(snap_rois(designate_rois(p, mc.decode.offsets), spec));
            const auto targets = encode_sdn_scn(std::span<const RoiSet>(rois), s.slots, spec, cfg.slot_depth);
            const auto patches = nn::extract_patches(maps, std::span<const RoiSet>(rois), spec);
            const auto sdn = loss_sdn(net.sdn_head(patches.junction, patches.orientation), targets, losses.weights);
            const auto scn = loss_scn(net.scn_head(patches.cls), targets, losses.weights);
            report += report_second(sdn, scn);
            const auto second = loss_second(sdn, scn);
            total = total ? nn::add(total, second) : second;
        }
    }
    if (total && total->requires_grad()) total->backward();
    return report;
}

}  // namespace

TrainResult train(nn::SlotNet<float>& net, std::span<const SceneSample> train_set,
                  std::span<const SceneSample> test_set, const TrainConfig& cfg, const TrainOutputs& out) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("training set is empty");
    const int low_stride = net.config().backbone.low_stride();

    TrainResult result;
    result.losses = resolve_losses(cfg.preset, train_set, low_stride);
    auto decode = net.config().decode;
    decode.l_max = result.losses.l_max;
    net.set_decode(decode);

    std::vector<TensorPtr<float>> params;
    std::vector<nn::ParamGroup> groups;
    for (const auto& p : net.parameters()) {
        params.push_back(p.tensor);
        groups.push_back(p.group);
    }
    AdamState adam;

    std::ofstream metrics;
    if (!out.metrics.empty()) {
        metrics.open(out.metrics, std::ios::trunc);
        if (!metrics) throw std::runtime_error("cannot write metrics log " + out.metrics.string());
    }

    const auto t0 = std::chrono::steady_clock::now();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const Phase phase = cfg.phase(epoch);
        std::vector<std::uint8_t> active(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            active[i] = groups[i] == nn::ParamGroup::backbone || phase == Phase::joint ||
                        (phase == Phase::stage1 ? groups[i] == nn::ParamGroup::stage1
                                                : groups[i] == nn::ParamGroup::stage2);

        Rng rng(derive_seed(cfg.seed, 0x7a11000ULL + static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order(train_set.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        EpochMetrics m;
        m.epoch = epoch;
        m.phase = phase;
        const std::int64_t skipped_before = adam.skipped;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            net.zero_grad();
            for (std::size_t b = start; b < stop; ++b) {
                const SceneSample& raw = train_set[order[b]];
                const bool square = raw.image.width == raw.image.height;
                const int k = cfg.augment ? static_cast<int>(rng.below(square ? 8 : 4)) : 0;
                const SceneSample aug = k ? dihedral(raw, k) : SceneSample{};
                m.loss += accumulate_image(net, k ? aug : raw, phase, cfg, result.losses, rng);
                ++m.images;
            }
            adam_step<float>(params, adam, cfg.adam, active);
            ++m.steps;
        }
        m.skipped_steps = static_cast<int>(adam.skipped - skipped_before);
        if (cfg.eval_each_epoch && !test_set.empty()) {
            std::tie(m.loose, m.tight) = evaluate(net, test_set, cfg.detect);
            m.evaluated = true;
        }
        if (metrics.is_open()) {
            metrics << m.json_line() << '\n';
            metrics.flush();
            if (!metrics) throw std::runtime_error("failed writing metrics log " + out.metrics.string());
        }
        if (!out.checkpoint.empty()) nn::save_checkpoint(net, out.checkpoint);
        if (out.progress) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            *out.progress << "epoch " << epoch << "/" << cfg.epochs << " " << to_string(phase)
                          << " first=" << m.loss.first << " second=" << m.loss.second;
            if (m.evaluated)
                *out.progress << " loose R=" << m.loose.recall << " P=" << m.loose.precision
                              << " tight R=" << m.tight.recall << " P=" << m.tight.precision;
            *out.progress << " skipped=" << m.skipped_steps << " t=" << secs << "s" << std::endl;
        }
        result.log.push_back(m);
    }
    return result;
}

template <typename T>
std::vector<Detection> detect(const nn::SlotNet<T>& net, const Image& img, const DetectConfig& cfg,
                              DetectStats* stats) {
    cfg.validate();
    nn::NoGradGuard no_grad;
    const auto& mc = net.config();
    const auto x = nn::image_tensor<T>(img.rgb, img.width, img.height);
    const auto maps = net.backbone_forward(x);
    const auto grid = GridSpec::for_image(img.width, img.height, mc.decode.l_max, mc.backbone.low_stride());
    const RpnDecode props = decode_rpn(nn::rpn_values(net.rpn_head(maps.low)), grid, cfg.tau_prop);
    const auto kept = nms_entrances(props.proposals, cfg.nms_distance);
    DetectStats local;
    local.proposals = static_cast<int>(props.proposals.size()) + props.dropped;
    local.dropped_rpn = props.dropped;
    local.after_nms = static_cast<int>(kept.size());
    std::vector<Detection> dets;
    if (!kept.empty()) {
        const RoiSpec spec = mc.roi_spec();
        std::vector<RoiSet> rois;
        std::vector<double> scores;
        for (const auto& p : kept) {
            rois.push_back(snap_rois(designate_rois(p, mc.decode.offsets), spec));
            scores.push_back(p.score);
        }
        const auto patches = nn::extract_patches(maps, std::span<const RoiSet>(rois), spec);
        const auto pred = nn::stage2_values(net.sdn_head(patches.junction, patches.orientation),
                                            net.scn_head(patches.cls));
        SdnDecode decoded = decode_sdn_scn(pred, rois, scores, spec, cfg.tau_j);
        local.dropped_sdn = decoded.dropped;
        dets = std::move(decoded.detections);
    }
    if (stats) *stats = local;
    return dets;
}

template <typename T>
std::pair<EvalReport, EvalReport> evaluate(const nn::SlotNet<T>& net, std::span<const SceneSample> set,
                                           const DetectConfig& cfg) {
    ReportBuilder loose(MatchCriteria::loose()), tight(MatchCriteria::tight());
    for (const auto& s : set) {
        const auto dets = detect(net, s.image, cfg);
        loose.add(dets, s.slots);
        tight.add(dets, s.slots);
    }
    return {loose.finish(), tight.finish()};
}

template std::vector<Detection> detect(const nn::SlotNet<float>&, const Image&, const DetectConfig&, DetectStats*);
template std::vector<Detection> detect(const nn::SlotNet<double>&, const Image&, const DetectConfig&, DetectStats*);
template std::pair<EvalReport, EvalReport> evaluate(const nn::SlotNet<float>&, std::span<const SceneSample>,
                                                    const DetectConfig&);
template std::pair<EvalReport, EvalReport> evaluate(const nn::SlotNet<double>&, std::span<const SceneSample>,
                                                    const DetectConfig&);

}  // namespace slotdet
