// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iterator>
#include <mutex>
#include <thread>

#include "json.hpp"

#include "slotdet/synth.hpp"

namespace slotdet {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---- pixmap ---------------------------------------------------------------

std::vector<std::uint8_t> encode_ppm(const Image& img) {
    if (img.rgb.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw std::invalid_argument("image buffer does not match its size");
    const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.rgb.begin(), img.rgb.end());
    return out;
}

namespace {

class PpmHeaderReader {
public:
    explicit PpmHeaderReader(std::span<const std::uint8_t> b) : b_(b) {}

    std::size_t pos() const { return pos_; }

    void skip_space_and_comments() {
        while (pos_ < b_.size()) {
            if (b_[pos_] == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else if (std::isspace(b_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    long number(const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        long v = 0;
        while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
            v = v * 10 + (b_[pos_] - '0');
            if (v > 1'000'000) throw ParseError(error(start, std::string(what) + " out of range"));
            ++pos_;
        }
        if (pos_ == start) throw ParseError(error(start, std::string("expected ") + what));
        return v;
    }

    std::string error(std::size_t at, const std::string& msg) const {
        return "ppm: " + msg + " at byte " + std::to_string(at);
    }

    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

}  // namespace

Image decode_ppm(std::span<const std::uint8_t> bytes) {
    PpmHeaderReader r(bytes);
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw ParseError(r.error(0, "expected magic 'P6'"));
    r.pos_ = 2;
    const long w = r.number("width");
    const long h = r.number("height");
    const std::size_t maxval_at = r.pos_;
    const long maxval = r.number("maxval");
    if (w <= 0 || h <= 0) throw ParseError(r.error(maxval_at, "image size must be positive"));
    if (maxval != 255) throw ParseError(r.error(maxval_at, "unsupported maxval " + std::to_string(maxval)));
    if (r.pos_ >= bytes.size() || !std::isspace(bytes[r.pos_]))
        throw ParseError(r.error(r.pos_, "expected whitespace after header"));
    ++r.pos_;
    const std::size_t want = static_cast<std::size_t>(w) * h * 3;
    const std::size_t got = bytes.size() - r.pos_;
    if (got != want)
        throw ParseError(r.error(r.pos_, "expected " + std::to_string(want) + " pixel bytes, got " +
                                             std::to_string(got)));
    Image img;
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos_), bytes.end());
    return img;
}

// ---- labels ---------------------------------------------------------------

namespace {

ordered_json slot_json(const ParkingSlot& s) {
    return ordered_json{{"j1", {s.j1.x, s.j1.y}},
                        {"j2", {s.j2.x, s.j2.y}},
                        {"sep1", {s.sep1.cx, s.sep1.cy}},
                        {"sep2", {s.sep2.cx, s.sep2.cy}},
                        {"type", std::string(to_string(s.type))},
                        {"occupancy", std::string(to_string(s.occupancy))}};
}

ordered_json doc_json(int width, int height) {
    return ordered_json{{"version", kLabelVersion}, {"image", {{"w", width}, {"h", height}}}, {"slots", json::array()}};
}

std::pair<double, double> pair_of(const json& j, const char* key) {
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
        throw ParseError(std::string("labels: '") + key + "' must be a 2-element number array");
    return {a[0].get<double>(), a[1].get<double>()};
}

}  // namespace

std::string encode_labels(int width, int height, std::span<const ParkingSlot> slots) {
    ordered_json doc = doc_json(width, height);
    for (const auto& s : slots) doc["slots"].push_back(slot_json(s));
    return doc.dump(2) + "\n";
}

std::string encode_detections(int width, int height, std::span<const Detection> dets) {
    ordered_json doc = doc_json(width, height);
    for (const auto& d : dets) {
        ordered_json s = slot_json(d.slot);
        s["score"] = d.score;
        doc["slots"].push_back(std::move(s));
    }
    return doc.dump(2) + "\n";
}

LabelDoc decode_labels(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("labels: malformed JSON at byte " + std::to_string(e.byte));
    }
    try {
        if (!doc.is_object()) throw ParseError("labels: top level must be an object");
        const int version = doc.at("version").get<int>();
        if (version != kLabelVersion)
            throw ParseError("labels: unsupported schema version " + std::to_string(version) + " (expected " +
                             std::to_string(kLabelVersion) + ")");
        LabelDoc out;
        out.width = doc.at("image").at("w").get<int>();
        out.height = doc.at("image").at("h").get<int>();
        bool any_score = false, all_score = true;
        for (const auto& s : doc.at("slots")) {
            ParkingSlot slot;
            auto [x1, y1] = pair_of(s, "j1");
            auto [x2, y2] = pair_of(s, "j2");
            auto [a1, b1] = pair_of(s, "sep1");
            auto [a2, b2] = pair_of(s, "sep2");
            slot.j1 = {x1, y1};
            slot.j2 = {x2, y2};
            slot.sep1 = {a1, b1};
            slot.sep2 = {a2, b2};
            slot.type = parse_slot_type(s.at("type").get<std::string>());
            slot.occupancy = parse_occupancy(s.at("occupancy").get<std::string>());
            out.slots.push_back(slot);
            if (s.contains("score")) {
                any_score = true;
                out.scores.push_back(s.at("score").get<double>());
            } else {
                all_score = false;
            }
        }
        if (any_score && !all_score) throw ParseError("labels: score present on some slots only");
        return out;
    } catch (const json::exception& e) {
        throw ParseError(std::string("labels: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("labels: ") + e.what());
    }
}

// ---- files ----------------------------------------------------------------

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_file(const fs::path& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_sample(const SceneSample& s, const fs::path& image_path, const fs::path& label_path) {
    write_file(image_path, encode_ppm(s.image));
    write_file(label_path, encode_labels(s.image.width, s.image.height, s.slots));
}

SceneSample read_sample(const fs::path& image_path, const fs::path& label_path) {
    SceneSample s;
    s.image = decode_ppm(read_file(image_path));
    const auto bytes = read_file(label_path);
    LabelDoc doc = decode_labels(std::string(bytes.begin(), bytes.end()));
    if (doc.width != s.image.width || doc.height != s.image.height)
        throw ParseError("labels: image size " + std::to_string(doc.width) + "x" + std::to_string(doc.height) +
                         " does not match pixmap " + std::to_string(s.image.width) + "x" +
                         std::to_string(s.image.height));
    s.slots = std::move(doc.slots);
    return s;
}

// ---- scene config ---------------------------------------------------------

std::string to_json(const SceneConfig& c) {
    ordered_json styles = json::array();
    for (auto b : c.background_styles) styles.push_back(std::string(to_string(b)));
    ordered_json j{{"image_w", c.image_w},
                   {"image_h", c.image_h},
                   {"slot_type_mix", c.slot_type_mix},
                   {"occupied_prob", c.occupied_prob},
                   {"entrance_length_range", {c.entrance_length_range.first, c.entrance_length_range.second}},
                   {"parallel_stretch", c.parallel_stretch},
                   {"slant_angle_range", {c.slant_angle_range.first, c.slant_angle_range.second}},
                   {"line_width_range", {c.line_width_range.first, c.line_width_range.second}},
                   {"noise_level", c.noise_level},
                   {"background_styles", styles},
                   {"max_slots", c.max_slots},
                   {"seed", c.seed}};
    return j.dump();
}

SceneConfig scene_config_from_json(const std::string& text) {
    const json j = json::parse(text);
    SceneConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "image_w") c.image_w = v.get<int>();
        else if (key == "image_h") c.image_h = v.get<int>();
        else if (key == "slot_type_mix") c.slot_type_mix = v.get<std::array<double, 3>>();
        else if (key == "occupied_prob") c.occupied_prob = v.get<double>();
        else if (key == "entrance_length_range") c.entrance_length_range = v.get<std::pair<double, double>>();
        else if (key == "parallel_stretch") c.parallel_stretch = v.get<double>();
        else if (key == "slant_angle_range") c.slant_angle_range = v.get<std::pair<double, double>>();
        else if (key == "line_width_range") c.line_width_range = v.get<std::pair<double, double>>();
        else if (key == "noise_level") c.noise_level = v.get<double>();
        else if (key == "background_styles") {
            c.background_styles.clear();
            for (const auto& s : v) c.background_styles.push_back(parse_background(s.get<std::string>()));
        } else if (key == "max_slots") c.max_slots = v.get<int>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else throw std::invalid_argument("scene config: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

// ---- corpus ---------------------------------------------------------------

std::string sample_name(int index) {
    std::string s = std::to_string(index);
    return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

int generation_threads() {
    if (const char* env = std::getenv("SLOT_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

CorpusManifest write_corpus(const fs::path& dir, const SceneConfig& cfg, int count, int test_count, int threads) {
    if (count <= 0) throw std::invalid_argument("empty corpus requested");
    if (test_count < 0 || test_count >= count)
        throw std::invalid_argument("test_count must lie in [0, count)");
    cfg.validate();
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "labels");

    const int workers = std::min(count, threads > 0 ? threads : generation_threads());
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (int i = next++; i < count; i = next++) {
            try {
                const auto s = generate_scene(cfg, static_cast<std::uint64_t>(i));
                const std::string name = sample_name(i);
                write_sample(s, dir / "images" / (name + ".ppm"), dir / "labels" / (name + ".json"));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = count;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (int t = 1; t < workers; ++t) pool.emplace_back(work);
        work();
    }
    if (failure) std::rethrow_exception(failure);

    CorpusManifest m{count, test_count, cfg.seed, cfg};
    ordered_json j{{"version", 1},
                   {"count", count},
                   {"test_count", test_count},
                   {"seed", cfg.seed},
                   {"config", json::parse(to_json(cfg))}};
    write_file(dir / "manifest.json", j.dump(2) + "\n");
    return m;
}

CorpusManifest read_manifest(const fs::path& dir) {
    const auto bytes = read_file(dir / "manifest.json");
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw ParseError("manifest: malformed JSON at byte " + std::to_string(e.byte));
    }
    try {
        if (j.at("version").get<int>() != 1) throw ParseError("manifest: unsupported version");
        CorpusManifest m;
        m.count = j.at("count").get<int>();
        m.test_count = j.at("test_count").get<int>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.config = scene_config_from_json(j.at("config").dump());
        if (m.count <= 0 || m.test_count < 0 || m.test_count >= m.count)
            throw ParseError("manifest: inconsistent counts");
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
}

Corpus load_corpus(const fs::path& dir) {
    Corpus c;
    c.manifest = read_manifest(dir);
    for (int i = 0; i < c.manifest.count; ++i) {
        const std::string name = sample_name(i);
        try {
            auto s = read_sample(dir / "images" / (name + ".ppm"), dir / "labels" / (name + ".json"));
            (i < c.manifest.train_count() ? c.train : c.test).push_back(std::move(s));
        } catch (const std::exception& e) {
            c.skipped.push_back(name + ": " + e.what());
        }
    }
    return c;
}

}  // namespace slotdet
