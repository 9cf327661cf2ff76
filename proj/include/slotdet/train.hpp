// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "slotdet/evalx.hpp"
#include "slotdet/losses.hpp"
#include "slotdet/nn/model.hpp"
#include "slotdet/rng.hpp"
#include "slotdet/synth.hpp"

// Adam, the alternating two-stage schedule, and the inference pipeline.

namespace slotdet {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

/// Moments and step count of one parameter tensor.
struct AdamSlot {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
};

struct AdamState {
    std::vector<AdamSlot> slots;  // parallel to the parameter list
    std::int64_t skipped = 0;     // steps refused because of a non-finite gradient
};

/// Bias-corrected Adam update of every parameter with active[i] != 0 (all
/// when `active` is empty), reading each tensor's accumulated gradient.
/// Returns false and leaves parameters and moments untouched if any active
/// gradient is non-finite.
template <typename T>
bool adam_step(std::span<const nn::TensorPtr<T>> params, AdamState& state, const AdamConfig& cfg,
               std::span<const std::uint8_t> active = {});

enum class Phase { stage1, stage2, joint };
std::string_view to_string(Phase p);

struct DetectConfig {
    double tau_prop = 0.5;
    double tau_j = 0.5;
    double nms_distance = kDefaultNmsDistance;

    void validate() const;
};

struct TrainConfig {
    int epochs = 80;
    int batch_size = 8;
    int alternate_epochs = 60;
    AdamConfig adam;
    std::uint64_t seed = 1;
    std::string preset = "desk";  // "snu", "ps20" or "desk" (corpus-derived factors)
    nn::ModelConfig model;
    double slot_depth = 64.0;  // classification inclusion polygon depth, pixels
    double center_jitter = 4.0;     // stage-2 proposal noise, pixels
    double angle_jitter_deg = 3.0;  // stage-2 proposal noise, degrees
    int negative_proposals = 2;     // random background proposals per image in stage-2 / joint epochs
    bool augment = true;            // random flips and quarter turns
    DetectConfig detect;            // held-out evaluation after each epoch
    bool eval_each_epoch = true;

    void validate() const;
    /// 1-based epoch.
    Phase phase(int epoch) const;
};

/// Loss weights and length normalizer for a preset. "desk" keeps the SNU
/// term weights, derives the imbalance factors from `train_set` and uses
/// its longest entrance as L_max.
struct ResolvedLosses {
    LossWeights weights;
    double l_max = 400.0;
};
ResolvedLosses resolve_losses(const std::string& preset, std::span<const SceneSample> train_set, int low_stride);

/// Ground-truth entrances with uniform centre and rotation noise, followed by
/// `negatives` random proposals anywhere in the image.
std::vector<SlotEntrance> training_proposals(std::span<const ParkingSlot> gts, const TrainConfig& cfg, double l_max,
                                             int image_w, int image_h, Rng& rng);

/// k in [0, 8): bit 0 mirrors x, bit 1 mirrors y, bit 2 transposes (square
/// images only). Labels are moved exactly and re-ordered canonically.
SceneSample dihedral(const SceneSample& s, int k);

struct EpochMetrics {
    int epoch = 0;
    Phase phase = Phase::stage1;
    int images = 0;
    int steps = 0;
    int skipped_steps = 0;
    LossReport loss;  // summed over the epoch
    bool evaluated = false;
    EvalReport loose, tight;

    std::string json_line() const;
};

struct TrainOutputs {
    std::filesystem::path checkpoint;  // rewritten after every epoch; empty to skip
    std::filesystem::path metrics;     // JSON lines, one per epoch; empty to skip
    std::ostream* progress = nullptr;  // human-readable progress, may be null
};

struct TrainResult {
    std::vector<EpochMetrics> log;
    ResolvedLosses losses;
};

/// Trains `net` in place. The decode block of the model config is set from
/// the resolved losses before the first epoch.
TrainResult train(nn::SlotNet<float>& net, std::span<const SceneSample> train_set,
                  std::span<const SceneSample> test_set, const TrainConfig& cfg, const TrainOutputs& out = {});

struct DetectStats {
    int proposals = 0;   // above tau_prop
    int after_nms = 0;
    int dropped_rpn = 0;  // zero-norm directions
    int dropped_sdn = 0;  // junction rejected or degenerate
};

/// Full two-stage inference on one image.
template <typename T>
std::vector<Detection> detect(const nn::SlotNet<T>& net, const Image& img, const DetectConfig& cfg,
                              DetectStats* stats = nullptr);

/// Evaluates detections on a labelled set under loose and tight criteria.
template <typename T>
std::pair<EvalReport, EvalReport> evaluate(const nn::SlotNet<T>& net, std::span<const SceneSample> set,
                                           const DetectConfig& cfg);

}  // namespace slotdet
