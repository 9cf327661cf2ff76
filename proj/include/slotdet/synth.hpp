// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "slotdet/geometry.hpp"

// Procedural top-down parking scenes with analytic labels, plus the on-disk
// formats (P6 pixmap, JSON labels, corpus directory).

namespace slotdet {

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Background { asphalt, brick, reflective, night };

std::string_view to_string(Background b);
Background parse_background(std::string_view s);

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    friend bool operator==(const Image&, const Image&) = default;
};

struct SceneConfig {
    int image_w = 192;
    int image_h = 192;
    std::array<double, 3> slot_type_mix{0.4, 0.3, 0.3};  // perpendicular, parallel, slanted
    double occupied_prob = 0.4;
    // Slot width across the separating lines. Parallel entrances are
    // `parallel_stretch` times longer; slanted ones are width / sin(angle).
    std::pair<double, double> entrance_length_range{52.0, 68.0};
    double parallel_stretch = 1.8;
    std::pair<double, double> slant_angle_range{40.0, 65.0};  // degrees between entrance and separating line
    std::pair<double, double> line_width_range{2.0, 4.0};
    double noise_level = 0.3;
    std::vector<Background> background_styles{Background::asphalt, Background::brick, Background::reflective,
                                              Background::night};
    int max_slots = 4;
    std::uint64_t seed = 1;

    /// Throws std::invalid_argument.
    void validate() const;
};

std::string to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const std::string& text);

struct SceneSample {
    Image image;
    std::vector<ParkingSlot> slots;

    friend bool operator==(const SceneSample&, const SceneSample&) = default;
};

/// Pure function of (cfg, index).
SceneSample generate_scene(const SceneConfig& cfg, std::uint64_t index);

// Pixmap and label codecs. Parsers throw ParseError naming the byte offset.
std::vector<std::uint8_t> encode_ppm(const Image& img);
Image decode_ppm(std::span<const std::uint8_t> bytes);

inline constexpr int kLabelVersion = 1;

std::string encode_labels(int width, int height, std::span<const ParkingSlot> slots);
std::string encode_detections(int width, int height, std::span<const Detection> dets);

struct LabelDoc {
    int width = 0;
    int height = 0;
    std::vector<ParkingSlot> slots;
    std::vector<double> scores;  // empty for ground truth
};
LabelDoc decode_labels(const std::string& text);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file(const std::filesystem::path& path, const std::string& text);

void write_sample(const SceneSample& s, const std::filesystem::path& image_path,
                  const std::filesystem::path& label_path);
SceneSample read_sample(const std::filesystem::path& image_path, const std::filesystem::path& label_path);

struct CorpusManifest {
    int count = 0;
    int test_count = 0;  // the last `test_count` indices are held out
    std::uint64_t seed = 0;
    SceneConfig config;

    int train_count() const { return count - test_count; }
};

std::string sample_name(int index);  // "000042"

/// Generates `count` scenes into images/, labels/ and manifest.json.
/// `threads` <= 0 picks SLOT_THREADS or the hardware concurrency.
CorpusManifest write_corpus(const std::filesystem::path& dir, const SceneConfig& cfg, int count, int test_count,
                            int threads = 0);
CorpusManifest read_manifest(const std::filesystem::path& dir);

struct Corpus {
    CorpusManifest manifest;
    std::vector<SceneSample> train;
    std::vector<SceneSample> test;
    std::vector<std::string> skipped;  // "name: reason" for unreadable samples
};

/// Unreadable or inconsistent samples are skipped and listed, not fatal.
Corpus load_corpus(const std::filesystem::path& dir);

/// Worker count from SLOT_THREADS, else hardware concurrency, at least 1.
int generation_threads();

}  // namespace slotdet
