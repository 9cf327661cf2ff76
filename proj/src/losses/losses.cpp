// SPDX-License-Identifier: Apache-2.0
#include "slotdet/losses.hpp"

#include <stdexcept>

namespace slotdet {

using nn::Shape;
using nn::Tensor;
using nn::TensorPtr;

void LossWeights::validate() const {
    for (double v : {w_ep, w_exy, w_el, w_eo, w_so, lambda_e, w_jp, w_jxy, w_jo, w_st, w_socc, lambda_st[0],
                     lambda_st[1], lambda_st[2], lambda_vac})
        if (!(v >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
}

LossPreset snu_preset() {
    LossPreset p;
    p.name = "snu";
    p.weights = {400, 400, 1000, 1000, 400, 0.03, 1500, 2000, 6000, 0.5, 100, {8.33, 1.23, 14.92}, 0.74};
    p.l_max = 400;
    p.rois = 12;
    return p;
}

LossPreset ps20_preset() {
    LossPreset p;
    p.name = "ps20";
    p.weights = {500, 400, 1000, 1500, 500, 0.01, 1000, 3000, 4000, 0.5, 100, {1.76, 2.86, 31.65}, 0.47};
    p.l_max = 291;
    p.rois = 8;
    return p;
}

LossPreset preset_by_name(std::string_view name) {
    if (name == "snu") return snu_preset();
    if (name == "ps20") return ps20_preset();
    throw std::invalid_argument("unknown loss preset '" + std::string(name) + "'");
}

void CorpusStats::add_image(std::span<const ParkingSlot> slots, int grid_cells) {
    positive_cells += static_cast<long long>(slots.size());
    negative_cells += grid_cells - static_cast<long long>(slots.size());
    for (const auto& s : slots) {
        ++type_counts[static_cast<std::size_t>(s.type)];
        (s.occupancy == Occupancy::occupied ? occupied : vacant) += 1;
        max_length = std::max(max_length, distance(s.j1, s.j2));
    }
}

LossWeights with_corpus_lambdas(LossWeights base, const CorpusStats& stats) {
    if (stats.negative_cells > 0) base.lambda_e = double(stats.positive_cells) / double(stats.negative_cells);
    const long long total = stats.type_counts[0] + stats.type_counts[1] + stats.type_counts[2];
    for (std::size_t c = 0; c < 3; ++c)
        if (stats.type_counts[c] > 0) base.lambda_st[c] = double(total) / double(stats.type_counts[c]);
    if (stats.vacant > 0) base.lambda_vac = double(stats.occupied) / double(stats.vacant);
    return base;
}

LossReport& LossReport::operator+=(const LossReport& o) {
    ep += o.ep;
    exy += o.exy;
    el += o.el;
    eo += o.eo;
    so += o.so;
    first += o.first;
    jp += o.jp;
    jxy += o.jxy;
    jo += o.jo;
    sdn += o.sdn;
    st += o.st;
    socc += o.socc;
    scn += o.scn;
    second += o.second;
    return *this;
}

namespace {

template <typename T>
TensorPtr<T> constant(const Shape& shape, const std::vector<double>& values) {
    return Tensor<T>::from(shape, std::vector<T>(values.begin(), values.end()));
}

/// sum(mask * (pred - target)^2)
template <typename T>
TensorPtr<T> masked_sq(const TensorPtr<T>& pred, const TensorPtr<T>& target, const TensorPtr<T>& mask) {
    return nn::sum(nn::mul(mask, nn::square(nn::sub(pred, target))));
}

void require_size(std::size_t got, std::size_t want, const char* what) {
    if (got != want)
        throw nn::ShapeError(std::string(what) + ": prediction has " + std::to_string(got) + " values, targets " +
                             std::to_string(want));
}

}  // namespace

template <typename T>
FirstStageLoss<T> loss_first(const nn::RpnPrediction<T>& pred, const RpnTargets& targets, const LossWeights& w) {
    const std::size_t n = static_cast<std::size_t>(targets.cells());
    require_size(pred.ep->numel(), n, "loss_ep");
    require_size(pred.exy->numel(), 2 * n, "loss_exy");
    require_size(pred.el->numel(), n, "loss_el");
    require_size(pred.eo->numel(), 2 * n, "loss_eo");
    require_size(pred.so->numel(), 2 * n, "loss_so");

    std::vector<double> ep_weight(n), mask2(2 * n), offset(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const double ie = targets.ep[i];
        ep_weight[i] = ie + w.lambda_e * (1.0 - ie);
        mask2[i] = mask2[n + i] = ie;
    }
    // Stored targets are offset / cell + 0.5; the residual compares the shifted
    // prediction against the normalized offset itself.
    for (std::size_t i = 0; i < 2 * n; ++i) offset[i] = mask2[i] != 0.0 ? targets.exy[i] - 0.5 : 0.0;

    const Shape s1 = pred.ep->shape(), s2 = pred.exy->shape();
    FirstStageLoss<T> l;
    l.ep = masked_sq(pred.ep, constant<T>(s1, targets.ep), constant<T>(s1, ep_weight));
    l.exy = masked_sq(nn::add_scalar(pred.exy, T(-0.5)), constant<T>(s2, offset), constant<T>(s2, mask2));
    l.el = masked_sq(pred.el, constant<T>(s1, targets.el), constant<T>(s1, targets.ep));
    l.eo = masked_sq(pred.eo, constant<T>(s2, targets.eo), constant<T>(s2, mask2));
    l.so = masked_sq(pred.so, constant<T>(s2, targets.so), constant<T>(s2, mask2));
    l.total = nn::weighted_sum<T>({l.ep, l.exy, l.el, l.eo, l.so},
                                  {T(w.w_ep), T(w.w_exy), T(w.w_el), T(w.w_eo), T(w.w_so)});
    return l;
}

template <typename T>
SdnLoss<T> loss_sdn(const nn::SdnPrediction<T>& pred, const SdnScnTargets& targets, const LossWeights& w) {
    const std::size_t r = static_cast<std::size_t>(targets.rois);
    if (pred.jp->numel() != r)
        throw nn::ShapeError("loss_sdn: prediction has " + std::to_string(pred.jp->numel()) + " ROIs, targets " +
                             std::to_string(r));
    require_size(pred.jxy->numel(), 2 * r, "loss_jxy");
    require_size(pred.jo->numel(), 2 * r, "loss_jo");
    SdnLoss<T> l;
    if (r == 0) {
        l.jp = l.jxy = l.jo = l.total = Tensor<T>::scalar(T(0));
        return l;
    }
    std::vector<double> ones(r, 1.0), mask2(2 * r), offset(2 * r);
    for (std::size_t i = 0; i < r; ++i) {
        mask2[2 * i] = mask2[2 * i + 1] = targets.jp[i];
        for (std::size_t k = 0; k < 2; ++k)
            offset[2 * i + k] = targets.jp[i] != 0.0 ? targets.jxy[2 * i + k] - 0.5 : 0.0;
    }
    const Shape s1 = pred.jp->shape(), s2 = pred.jxy->shape();
    l.jp = masked_sq(pred.jp, constant<T>(s1, targets.jp), constant<T>(s1, ones));
    l.jxy = masked_sq(nn::add_scalar(pred.jxy, T(-0.5)), constant<T>(s2, offset), constant<T>(s2, mask2));
    l.jo = masked_sq(pred.jo, constant<T>(s2, targets.jo), constant<T>(s2, mask2));
    l.total = nn::weighted_sum<T>({l.jp, l.jxy, l.jo}, {T(w.w_jp), T(w.w_jxy), T(w.w_jo)});
    return l;
}

template <typename T>
ScnLoss<T> loss_scn(const nn::ScnPrediction<T>& pred, const SdnScnTargets& targets, const LossWeights& w) {
    const std::size_t p = static_cast<std::size_t>(targets.proposals());
    if (pred.socc->numel() != p || pred.st->numel() != 3 * p)
        throw nn::ShapeError("loss_scn: prediction has " + std::to_string(pred.socc->numel()) +
                             " classification rows, targets " + std::to_string(p));
    ScnLoss<T> l;
    if (p == 0) {
        l.st = l.socc = l.total = Tensor<T>::scalar(T(0));
        return l;
    }
    std::vector<double> ce_weight(3 * p), occ_weight(p);
    for (std::size_t i = 0; i < p; ++i) {
        const double in_slot = targets.i_slot[i];
        for (std::size_t c = 0; c < 3; ++c)
            ce_weight[3 * i + c] = in_slot * w.lambda_st[c] * targets.st[3 * i + c];
        const double occupied = in_slot * targets.socc[i];
        const double vacant = in_slot * (1.0 - targets.socc[i]);
        occ_weight[i] = occupied + w.lambda_vac * vacant;
    }
    const auto log_st = nn::log_clamped(pred.st, T(kLogFloor));
    l.st = nn::scale(nn::sum(nn::mul(constant<T>(pred.st->shape(), ce_weight), log_st)), T(-1));
    l.socc = masked_sq(pred.socc, constant<T>(pred.socc->shape(), targets.socc),
                       constant<T>(pred.socc->shape(), occ_weight));
    l.total = nn::weighted_sum<T>({l.st, l.socc}, {T(w.w_st), T(w.w_socc)});
    return l;
}

template <typename T>
TensorPtr<T> loss_second(const SdnLoss<T>& sdn, const ScnLoss<T>& scn) {
    return nn::add(sdn.total, scn.total);
}

template <typename T>
LossReport report_first(const FirstStageLoss<T>& l) {
    LossReport r;
    r.ep = l.ep->item();
    r.exy = l.exy->item();
    r.el = l.el->item();
    r.eo = l.eo->item();
    r.so = l.so->item();
    r.first = l.total->item();
    return r;
}

template <typename T>
LossReport report_second(const SdnLoss<T>& sdn, const ScnLoss<T>& scn) {
    LossReport r;
    r.jp = sdn.jp->item();
    r.jxy = sdn.jxy->item();
    r.jo = sdn.jo->item();
    r.sdn = sdn.total->item();
    r.st = scn.st->item();
    r.socc = scn.socc->item();
    r.scn = scn.total->item();
    r.second = r.sdn + r.scn;
    return r;
}

#define SLOTDET_INSTANTIATE_LOSSES(T)                                                                  \
    template FirstStageLoss<T> loss_first(const nn::RpnPrediction<T>&, const RpnTargets&, const LossWeights&); \
    template SdnLoss<T> loss_sdn(const nn::SdnPrediction<T>&, const SdnScnTargets&, const LossWeights&);     \
    template ScnLoss<T> loss_scn(const nn::ScnPrediction<T>&, const SdnScnTargets&, const LossWeights&);     \
    template TensorPtr<T> loss_second(const SdnLoss<T>&, const ScnLoss<T>&);                                 \
    template LossReport report_first(const FirstStageLoss<T>&);                                              \
    template LossReport report_second(const SdnLoss<T>&, const ScnLoss<T>&);

SLOTDET_INSTANTIATE_LOSSES(float)
SLOTDET_INSTANTIATE_LOSSES(double)

}  // namespace slotdet
