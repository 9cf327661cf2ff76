// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>

#include "slotdet/codec.hpp"
#include "slotdet/nn/model.hpp"

// Stage-1 and stage-2 training objectives. Every term is a plain sum over
// cells or ROIs; images in a batch are summed as well.

namespace slotdet {

struct LossWeights {
    // Stage 1.
    double w_ep = 400, w_exy = 400, w_el = 1000, w_eo = 1000, w_so = 400;
    double lambda_e = 0.03;  // weight of cells without an entrance centre
    // Stage 2, slot detection.
    double w_jp = 1500, w_jxy = 2000, w_jo = 6000;
    // Stage 2, slot classification.
    double w_st = 0.5, w_socc = 100;
    std::array<double, 3> lambda_st{8.33, 1.23, 14.92};  // perpendicular, parallel, slanted
    double lambda_vac = 0.74;                             // weight of vacant slots

    void validate() const;
};

/// Named weight set plus the dataset-level normalizers that go with it.
struct LossPreset {
    std::string name;
    LossWeights weights;
    double l_max = 400;
    int rois = 12;  // R reported for the preset's dataset; informational
};

LossPreset snu_preset();
LossPreset ps20_preset();
/// "snu" or "ps20"; throws std::invalid_argument otherwise.
LossPreset preset_by_name(std::string_view name);

/// Label statistics for deriving the imbalance factors.
struct CorpusStats {
    long long positive_cells = 0;
    long long negative_cells = 0;
    std::array<long long, 3> type_counts{0, 0, 0};
    long long occupied = 0;
    long long vacant = 0;
    double max_length = 0;

    void add_image(std::span<const ParkingSlot> slots, int grid_cells);
};

/// lambda_e = positive / negative cells, lambda_st[c] = total slots / slots of
/// type c, lambda_vac = occupied / vacant. Factors with an empty denominator
/// keep the value from `base`.
LossWeights with_corpus_lambdas(LossWeights base, const CorpusStats& stats);

/// Scalar values of every term.
struct LossReport {
    double ep = 0, exy = 0, el = 0, eo = 0, so = 0, first = 0;
    double jp = 0, jxy = 0, jo = 0, sdn = 0;
    double st = 0, socc = 0, scn = 0;
    double second = 0;

    LossReport& operator+=(const LossReport& o);
};

template <typename T>
struct FirstStageLoss {
    nn::TensorPtr<T> ep, exy, el, eo, so;
    nn::TensorPtr<T> total;  // weighted sum
};

template <typename T>
struct SdnLoss {
    nn::TensorPtr<T> jp, jxy, jo;
    nn::TensorPtr<T> total;
};

template <typename T>
struct ScnLoss {
    nn::TensorPtr<T> st, socc;
    nn::TensorPtr<T> total;
};

inline constexpr double kLogFloor = 1e-12;

template <typename T>
FirstStageLoss<T> loss_first(const nn::RpnPrediction<T>& pred, const RpnTargets& targets, const LossWeights& w);

template <typename T>
SdnLoss<T> loss_sdn(const nn::SdnPrediction<T>& pred, const SdnScnTargets& targets, const LossWeights& w);

template <typename T>
ScnLoss<T> loss_scn(const nn::ScnPrediction<T>& pred, const SdnScnTargets& targets, const LossWeights& w);

/// loss_SDN + loss_SCN.
template <typename T>
nn::TensorPtr<T> loss_second(const SdnLoss<T>& sdn, const ScnLoss<T>& scn);

template <typename T>
LossReport report_first(const FirstStageLoss<T>& l);
template <typename T>
LossReport report_second(const SdnLoss<T>& sdn, const ScnLoss<T>& scn);

}  // namespace slotdet
