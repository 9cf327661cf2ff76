// SPDX-License-Identifier: Apache-2.0
#include "slotdet/nn/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

#include "slotdet/rng.hpp"

namespace slotdet::nn {

using nlohmann::json;

void BackboneConfig::validate() const {
    if (stage_channels.size() != 5) throw ShapeError("backbone needs exactly 5 stages");
    if (high_tap != 4) throw ShapeError("high-resolution tap must be stage 4 (stride 16)");
    if (in_channels <= 0) throw ShapeError("in_channels must be positive");
    for (int c : stage_channels)
        if (c <= 0) throw ShapeError("stage channel counts must be positive");
}

std::string to_json(const ModelConfig& cfg) {
    json j = {{"backbone",
               {{"in_channels", cfg.backbone.in_channels},
                {"stage_channels", cfg.backbone.stage_channels},
                {"high_tap", cfg.backbone.high_tap}}},
              {"heads", {{"sdn_hidden", cfg.heads.sdn_hidden}, {"scn_hidden", cfg.heads.scn_hidden}}},
              {"decode",
               {{"l_max", cfg.decode.l_max}, {"k1", cfg.decode.offsets.k1}, {"k2", cfg.decode.offsets.k2}}}};
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    const json j = json::parse(text);
    ModelConfig cfg;
    cfg.backbone.in_channels = j.at("backbone").at("in_channels").get<int>();
    cfg.backbone.stage_channels = j.at("backbone").at("stage_channels").get<std::vector<int>>();
    cfg.backbone.high_tap = j.at("backbone").at("high_tap").get<int>();
    cfg.heads.sdn_hidden = j.at("heads").at("sdn_hidden").get<int>();
    cfg.heads.scn_hidden = j.at("heads").at("scn_hidden").get<int>();
    cfg.decode.l_max = j.at("decode").at("l_max").get<double>();
    cfg.decode.offsets.k1 = j.at("decode").at("k1").get<double>();
    cfg.decode.offsets.k2 = j.at("decode").at("k2").get<double>();
    cfg.backbone.validate();
    if (!(cfg.decode.l_max > 0)) throw ShapeError("l_max must be positive");
    return cfg;
}

template <typename T>
SlotNet<T>::SlotNet(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.backbone.validate();
    const auto& bb = cfg_.backbone;
    std::size_t in = static_cast<std::size_t>(bb.in_channels);
    for (std::size_t s = 0; s < bb.stage_channels.size(); ++s) {
        const std::size_t out = static_cast<std::size_t>(bb.stage_channels[s]);
        const std::string prefix = "backbone.stage" + std::to_string(s + 1);
        stages_.push_back({add_param(prefix + ".weight", ParamGroup::backbone, {out, in, 3, 3}),
                           add_param(prefix + ".bias", ParamGroup::backbone, {out})});
        in = out;
    }
    const std::size_t c_low = static_cast<std::size_t>(bb.c_low());
    const std::size_t c_high = static_cast<std::size_t>(bb.c_high());
    rpn_ = {add_param("rpn.weight", ParamGroup::stage1, {8, c_low, 3, 3}),
            add_param("rpn.bias", ParamGroup::stage1, {8})};

    const std::size_t sdn_in = 25 * c_high, scn_in = 9 * c_low;
    const auto sh = static_cast<std::size_t>(cfg_.heads.sdn_hidden);
    const auto ch = static_cast<std::size_t>(cfg_.heads.scn_hidden);
    sdn_jp_ = add_fc_set("sdn.jp", ParamGroup::stage2, sdn_in, sh, 1);
    sdn_jxy_ = add_fc_set("sdn.jxy", ParamGroup::stage2, sdn_in, sh, 2);
    sdn_jo_ = add_fc_set("sdn.jo", ParamGroup::stage2, sdn_in, sh, 2);
    scn_occ_ = add_fc_set("scn.occ", ParamGroup::stage2, scn_in, ch, 1);
    scn_type_ = add_fc_set("scn.type", ParamGroup::stage2, scn_in, ch, 3);
}

template <typename T>
TensorPtr<T> SlotNet<T>::add_param(std::string name, ParamGroup group, Shape shape) {
    auto t = Tensor<T>::zeros(std::move(shape), true);
    params_.push_back({std::move(name), group, t});
    return t;
}

template <typename T>
typename SlotNet<T>::FcSet SlotNet<T>::add_fc_set(const std::string& prefix, ParamGroup group, std::size_t in,
                                                  std::size_t hidden, std::size_t out) {
    FcSet set;
    set.hidden = {add_param(prefix + ".fc1.weight", group, {hidden, in}),
                  add_param(prefix + ".fc1.bias", group, {hidden})};
    set.out = {add_param(prefix + ".fc2.weight", group, {out, hidden}),
               add_param(prefix + ".fc2.bias", group, {out})};
    return set;
}

template <typename T>
void SlotNet<T>::init_xavier(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x1417));
    for (auto& p : params_) {
        auto data = p.tensor->data();
        const auto& shape = p.tensor->shape();
        if (shape.size() == 1) {
            std::fill(data.begin(), data.end(), T(0));
            continue;
        }
        const std::size_t receptive = shape.size() == 4 ? shape[2] * shape[3] : 1;
        const double fan_in = double(shape[1] * receptive);
        const double fan_out = double(shape[0] * receptive);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
    }
}

template <typename T>
FeatureMaps<T> SlotNet<T>::backbone_forward(const TensorPtr<T>& image) const {
    const auto& bb = cfg_.backbone;
    if (image->rank() != 3 || image->dim(0) != static_cast<std::size_t>(bb.in_channels))
        throw ShapeError("backbone expects [" + std::to_string(bb.in_channels) + ",H,W], got " +
                         shape_str(image->shape()));
    const std::size_t stride = static_cast<std::size_t>(bb.low_stride());
    if (image->dim(1) % stride || image->dim(2) % stride || image->dim(1) == 0 || image->dim(2) == 0)
        throw ShapeError("input size " + std::to_string(image->dim(2)) + "x" + std::to_string(image->dim(1)) +
                         " is not divisible by " + std::to_string(stride));
    FeatureMaps<T> maps;
    TensorPtr<T> x = image;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
        x = maxpool2(relu(conv2d(x, stages_[s].w, stages_[s].b, 1, 1)));
        if (static_cast<int>(s + 1) == bb.high_tap) maps.high = x;
    }
    maps.low = x;
    return maps;
}

template <typename T>
RpnPrediction<T> SlotNet<T>::rpn_head(const TensorPtr<T>& low) const {
    auto raw = conv2d(low, rpn_.w, rpn_.b, 1, 1);
    // Channel split 1/2/2/1/2: possibility, offset, entrance dir, length, slot dir.
    return {sigmoid(narrow(raw, 0, 0, 1)), sigmoid(narrow(raw, 0, 1, 2)), tanh(narrow(raw, 0, 3, 2)),
            sigmoid(narrow(raw, 0, 5, 1)), tanh(narrow(raw, 0, 6, 2))};
}

template <typename T>
TensorPtr<T> SlotNet<T>::run(const FcSet& set, const TensorPtr<T>& x) {
    return linear(relu(linear(x, set.hidden.w, set.hidden.b)), set.out.w, set.out.b);
}

template <typename T>
SdnPrediction<T> SlotNet<T>::sdn_head(const TensorPtr<T>& junction_patches,
                                      const TensorPtr<T>& orientation_patches) const {
    return {sigmoid(run(sdn_jp_, junction_patches)), sigmoid(run(sdn_jxy_, junction_patches)),
            tanh(run(sdn_jo_, orientation_patches))};
}

template <typename T>
ScnPrediction<T> SlotNet<T>::scn_head(const TensorPtr<T>& cls_patches) const {
    return {sigmoid(run(scn_occ_, cls_patches)), softmax(run(scn_type_, cls_patches), 1)};
}

template <typename T>
const Parameter<T>& SlotNet<T>::parameter(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p;
    throw std::out_of_range("no parameter named " + name);
}

template <typename T>
void SlotNet<T>::zero_grad() {
    for (auto& p : params_) p.tensor->zero_grad();
}

template <typename T>
std::size_t SlotNet<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor->numel();
    return n;
}

template <typename T>
RoiPatches<T> extract_patches(const FeatureMaps<T>& maps, std::span<const RoiSet> rois, const RoiSpec& spec) {
    std::vector<std::pair<int, int>> junction, orientation, cls;
    for (const auto& r : rois) {
        junction.push_back(cell_of(r.loc1, spec.high_stride));
        junction.push_back(cell_of(r.loc2, spec.high_stride));
        orientation.push_back(cell_of(r.ori1, spec.high_stride));
        orientation.push_back(cell_of(r.ori2, spec.high_stride));
        cls.push_back(cell_of(r.cls, spec.low_stride));
    }
    return {gather_patches(maps.high, junction, 5), gather_patches(maps.high, orientation, 5),
            gather_patches(maps.low, cls, 3)};
}

template <typename T>
TensorPtr<T> image_tensor(std::span<const std::uint8_t> rgb, int width, int height) {
    const std::size_t plane = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (rgb.size() != 3 * plane) throw ShapeError("image byte count does not match its size");
    std::vector<T> data(3 * plane);
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t c = 0; c < 3; ++c) data[c * plane + i] = static_cast<T>(rgb[3 * i + c]) / T(255);
    return Tensor<T>::from({3, static_cast<std::size_t>(height), static_cast<std::size_t>(width)},
                           std::move(data));
}

namespace {

template <typename T>
std::vector<double> as_double(const TensorPtr<T>& t) {
    return {t->data().begin(), t->data().end()};
}

}  // namespace

template <typename T>
RpnTargets rpn_values(const RpnPrediction<T>& pred) {
    RpnTargets v;
    v.h = static_cast<int>(pred.ep->dim(1));
    v.w = static_cast<int>(pred.ep->dim(2));
    v.ep = as_double(pred.ep);
    v.exy = as_double(pred.exy);
    v.el = as_double(pred.el);
    v.eo = as_double(pred.eo);
    v.so = as_double(pred.so);
    return v;
}

template <typename T>
SdnScnTargets stage2_values(const SdnPrediction<T>& sdn, const ScnPrediction<T>& scn) {
    SdnScnTargets v;
    v.rois = static_cast<int>(sdn.jp->dim(0));
    v.jp = as_double(sdn.jp);
    v.jxy = as_double(sdn.jxy);
    v.jo = as_double(sdn.jo);
    v.st = as_double(scn.st);
    v.socc = as_double(scn.socc);
    v.i_slot.assign(scn.socc->numel(), 0.0);
    return v;
}

namespace {

constexpr char kMagic[8] = {'S', 'L', 'O', 'T', 'C', 'K', 'P', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4, "integer");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n, "string");
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n, const char* what) {
        if (pos_ + n > bytes_.size())
            throw std::runtime_error("checkpoint truncated reading " + std::string(what) + " at byte " +
                                     std::to_string(pos_) + " (size " + std::to_string(bytes_.size()) + ")");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
std::vector<std::uint8_t> checkpoint_bytes(const SlotNet<T>& net) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, kCheckpointVersion);
    const std::string cfg = to_json(net.config());
    put_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out.insert(out.end(), cfg.begin(), cfg.end());
    put_u32(out, static_cast<std::uint32_t>(net.parameters().size()));
    for (const auto& p : net.parameters()) {
        put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.insert(out.end(), p.name.begin(), p.name.end());
        put_u32(out, static_cast<std::uint32_t>(p.tensor->rank()));
        for (auto d : p.tensor->shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (T v : p.tensor->data()) put_f32(out, static_cast<float>(v));
    }
    return out;
}

template <typename T>
SlotNet<T> checkpoint_from_bytes(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a slotdet checkpoint (bad magic)");
    Reader rd(bytes.subspan(sizeof(kMagic)));
    const std::uint32_t version = rd.u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    SlotNet<T> net(model_config_from_json(rd.str(rd.u32())));
    const std::uint32_t count = rd.u32();
    if (count != net.parameters().size())
        throw std::runtime_error("checkpoint has " + std::to_string(count) + " parameters, model expects " +
                                 std::to_string(net.parameters().size()));
    for (auto& p : net.parameters()) {
        const std::string name = rd.str(rd.u32());
        if (name != p.name) throw std::runtime_error("checkpoint parameter '" + name + "' where '" + p.name + "' expected");
        Shape shape(rd.u32());
        for (auto& d : shape) d = rd.u32();
        if (shape != p.tensor->shape())
            throw std::runtime_error("checkpoint shape " + shape_str(shape) + " for " + name + " does not match " +
                                     shape_str(p.tensor->shape()));
        for (auto& v : p.tensor->data()) v = static_cast<T>(rd.f32());
    }
    if (!rd.done()) throw std::runtime_error("trailing bytes after checkpoint payload");
    return net;
}

template <typename T>
void save_checkpoint(const SlotNet<T>& net, const std::filesystem::path& path) {
    const auto bytes = checkpoint_bytes(net);
    // Write beside the target and rename so a failed write leaves the old file intact.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

template <typename T>
SlotNet<T> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return checkpoint_from_bytes<T>(bytes);
}

template <typename To, typename From>
void copy_parameters(const SlotNet<From>& from, SlotNet<To>& to) {
    if (from.parameters().size() != to.parameters().size()) throw ShapeError("parameter lists differ");
    for (std::size_t i = 0; i < from.parameters().size(); ++i) {
        auto src = from.parameters()[i].tensor->data();
        auto dst = to.parameters()[i].tensor->data();
        if (src.size() != dst.size()) throw ShapeError("parameter " + from.parameters()[i].name + " size differs");
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<To>(src[k]);
    }
}

template class SlotNet<float>;
template class SlotNet<double>;

#define SLOTDET_INSTANTIATE_MODEL(T)                                                                       \
    template RoiPatches<T> extract_patches(const FeatureMaps<T>&, std::span<const RoiSet>, const RoiSpec&); \
    template TensorPtr<T> image_tensor<T>(std::span<const std::uint8_t>, int, int);                        \
    template RpnTargets rpn_values(const RpnPrediction<T>&);                                               \
    template SdnScnTargets stage2_values(const SdnPrediction<T>&, const ScnPrediction<T>&);                \
    template std::vector<std::uint8_t> checkpoint_bytes(const SlotNet<T>&);                                \
    template SlotNet<T> checkpoint_from_bytes<T>(std::span<const std::uint8_t>);                           \
    template void save_checkpoint(const SlotNet<T>&, const std::filesystem::path&);                        \
    template SlotNet<T> load_checkpoint<T>(const std::filesystem::path&);

SLOTDET_INSTANTIATE_MODEL(float)
SLOTDET_INSTANTIATE_MODEL(double)

template void copy_parameters(const SlotNet<float>&, SlotNet<double>&);
template void copy_parameters(const SlotNet<double>&, SlotNet<float>&);
template void copy_parameters(const SlotNet<float>&, SlotNet<float>&);
template void copy_parameters(const SlotNet<double>&, SlotNet<double>&);

}  // namespace slotdet::nn
