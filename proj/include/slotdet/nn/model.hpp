// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "slotdet/codec.hpp"
#include "slotdet/geometry.hpp"
#include "slotdet/nn/ops.hpp"
#include "slotdet/nn/tensor.hpp"

namespace slotdet::nn {

/// Five stages of conv3x3 -> ReLU -> maxpool2. The stage numbered `high_tap`
/// (1-based) feeds the stride-16 map; the last stage is the stride-32 map.
struct BackboneConfig {
    int in_channels = 3;
    std::vector<int> stage_channels{16, 32, 64, 96, 128};
    int high_tap = 4;

    int c_high() const { return stage_channels.at(static_cast<std::size_t>(high_tap - 1)); }
    int c_low() const { return stage_channels.back(); }
    int high_stride() const { return 1 << high_tap; }
    int low_stride() const { return 1 << static_cast<int>(stage_channels.size()); }
    void validate() const;
};

struct HeadConfig {
    int sdn_hidden = 64;
    int scn_hidden = 64;
};

/// Normalizers needed to turn raw outputs back into geometry.
struct DecodeConfig {
    double l_max = 400.0;
    RoiOffsets offsets;
};

struct ModelConfig {
    BackboneConfig backbone;
    HeadConfig heads;
    DecodeConfig decode;

    RoiSpec roi_spec() const { return RoiSpec::for_high_stride(backbone.high_stride()); }
};

std::string to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

enum class ParamGroup { backbone, stage1, stage2 };

template <typename T>
struct Parameter {
    std::string name;
    ParamGroup group;
    TensorPtr<T> tensor;
};

template <typename T>
struct FeatureMaps {
    TensorPtr<T> high;  // [c_high, H/16, W/16]
    TensorPtr<T> low;   // [c_low, H/32, W/32]
};

/// Activated RPN channels, each [k, h, w].
template <typename T>
struct RpnPrediction {
    TensorPtr<T> ep;   // sigmoid
    TensorPtr<T> exy;  // sigmoid
    TensorPtr<T> eo;   // tanh
    TensorPtr<T> el;   // sigmoid
    TensorPtr<T> so;   // tanh
};

template <typename T>
struct SdnPrediction {
    TensorPtr<T> jp;   // [R, 1] sigmoid
    TensorPtr<T> jxy;  // [R, 2] sigmoid
    TensorPtr<T> jo;   // [R, 2] tanh
};

template <typename T>
struct ScnPrediction {
    TensorPtr<T> socc;  // [R/2, 1] sigmoid
    TensorPtr<T> st;    // [R/2, 3] softmax
};

/// Flattened ROI neighbourhoods, one row per ROI.
template <typename T>
struct RoiPatches {
    TensorPtr<T> junction;     // [2P, 25 * c_high], rows (p, j1), (p, j2)
    TensorPtr<T> orientation;  // [2P, 25 * c_high]
    TensorPtr<T> cls;          // [P, 9 * c_low]
};

/// The two-stage detector network. Parameters are tape leaves shared by every
/// forward pass; gradients accumulate into them until `zero_grad`.
template <typename T>
class SlotNet {
public:
    explicit SlotNet(ModelConfig cfg);
    SlotNet(const SlotNet&) = delete;
    SlotNet& operator=(const SlotNet&) = delete;
    SlotNet(SlotNet&&) noexcept = default;
    SlotNet& operator=(SlotNet&&) noexcept = default;

    const ModelConfig& config() const { return cfg_; }
    void set_decode(const DecodeConfig& d) { cfg_.decode = d; }

    /// Xavier-uniform weights, zero biases.
    void init_xavier(std::uint64_t seed);

    /// Throws ShapeError unless H and W are divisible by the total stride.
    FeatureMaps<T> backbone_forward(const TensorPtr<T>& image) const;
    RpnPrediction<T> rpn_head(const TensorPtr<T>& low) const;
    SdnPrediction<T> sdn_head(const TensorPtr<T>& junction_patches, const TensorPtr<T>& orientation_patches) const;
    ScnPrediction<T> scn_head(const TensorPtr<T>& cls_patches) const;

    std::vector<Parameter<T>>& parameters() { return params_; }
    const std::vector<Parameter<T>>& parameters() const { return params_; }
    const Parameter<T>& parameter(const std::string& name) const;

    void zero_grad();
    std::size_t parameter_count() const;

private:
    struct Dense {
        TensorPtr<T> w, b;
    };
    struct FcSet {
        Dense hidden, out;
    };

    TensorPtr<T> add_param(std::string name, ParamGroup group, Shape shape);
    FcSet add_fc_set(const std::string& prefix, ParamGroup group, std::size_t in, std::size_t hidden,
                     std::size_t out);
    static TensorPtr<T> run(const FcSet& set, const TensorPtr<T>& x);

    ModelConfig cfg_;
    std::vector<Parameter<T>> params_;
    std::vector<Dense> stages_;
    Dense rpn_;
    FcSet sdn_jp_, sdn_jxy_, sdn_jo_;
    FcSet scn_occ_, scn_type_;
};

/// Gather 5x5 (high map) and 3x3 (low map) neighbourhoods around the cells
/// containing each ROI centre; cells outside the map are zero.
template <typename T>
RoiPatches<T> extract_patches(const FeatureMaps<T>& maps, std::span<const RoiSet> rois, const RoiSpec& spec);

/// RGB bytes (H x W x 3, row-major) to a [3, H, W] tensor scaled to [0, 1].
template <typename T>
TensorPtr<T> image_tensor(std::span<const std::uint8_t> rgb, int width, int height);

template <typename T>
RpnTargets rpn_values(const RpnPrediction<T>& pred);

template <typename T>
SdnScnTargets stage2_values(const SdnPrediction<T>& sdn, const ScnPrediction<T>& scn);

// Checkpoint: "SLOTCKPT", u32 version, u32 length + model-config JSON,
// u32 parameter count, then per parameter u32 length + name, u32 rank,
// u32 dims[rank], float32 data. All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
std::vector<std::uint8_t> checkpoint_bytes(const SlotNet<T>& net);
template <typename T>
SlotNet<T> checkpoint_from_bytes(std::span<const std::uint8_t> bytes);
template <typename T>
void save_checkpoint(const SlotNet<T>& net, const std::filesystem::path& path);
template <typename T>
SlotNet<T> load_checkpoint(const std::filesystem::path& path);

/// Copy parameter values between precisions (same config required).
template <typename To, typename From>
void copy_parameters(const SlotNet<From>& from, SlotNet<To>& to);

extern template class SlotNet<float>;
extern template class SlotNet<double>;

}  // namespace slotdet::nn
