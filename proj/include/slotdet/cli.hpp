// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "slotdet/evalx.hpp"
#include "slotdet/synth.hpp"
#include "slotdet/train.hpp"

// Command implementations behind the `slotdet` binary.

namespace slotdet::cli {

/// Everything a run config file can set. Sections and keys not listed here
/// are rejected:
///   scene:  any SceneConfig field
///   gen:    count, test_count
///   train:  epochs, batch_size, alternate_epochs, lr, beta1, beta2, eps, seed,
///           preset, slot_depth, center_jitter, angle_jitter_deg,
///           negative_proposals, augment, eval_each_epoch
///   model:  stage_channels, sdn_hidden, scn_hidden, k1, k2
///   detect: tau_prop, tau_j, nms_distance
struct RunConfig {
    SceneConfig scene;
    int count = 600;
    int test_count = -1;  // -1: count / 6
    TrainConfig train;
    DetectConfig detect;
};

/// Throws std::invalid_argument on unknown keys or invalid values.
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string to_json(const RunConfig& cfg);

void cmd_gen(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

struct TrainSummary {
    int train_images = 0;
    int test_images = 0;
    int skipped_samples = 0;
};
TrainSummary cmd_train(const RunConfig& cfg, const std::filesystem::path& corpus, const std::filesystem::path& out_dir,
                       std::ostream& log);

/// A labelled or unlabelled image file list keyed by sample name (file stem).
struct ImageSet {
    std::vector<std::string> names;
    std::vector<std::filesystem::path> images;
};
/// Images of a corpus split ("train", "test" or "all").
ImageSet corpus_images(const std::filesystem::path& corpus, const std::string& split);
/// `.ppm` files in a directory (sorted) or the given files.
ImageSet image_files(const std::vector<std::filesystem::path>& paths);

/// Writes <name>.json per image (and <name>.overlay.ppm with `overlay`).
/// Returns the number of images that failed; the rest are still processed.
int cmd_detect(const std::filesystem::path& model, const ImageSet& images, const DetectConfig& cfg,
               const std::filesystem::path& out_dir, bool overlay, std::ostream& log);

/// Draws entrances and separating lines; green / red / blue for
/// perpendicular / parallel / slanted.
void draw_detections(Image& img, std::span<const Detection> dets);

/// Label files keyed by stem: either every .json in `labels_dir`, or the
/// labels of one corpus split.
struct LabelSet {
    std::vector<std::string> names;
    std::vector<std::filesystem::path> files;
};
LabelSet label_dir(const std::filesystem::path& labels_dir);
LabelSet corpus_labels(const std::filesystem::path& corpus, const std::string& split);

/// Matches detection files to label files by name. An empty detections
/// directory means no detections anywhere; otherwise the two name sets must
/// agree and any difference is reported as an error.
std::vector<EvalReport> cmd_eval(const std::filesystem::path& detections_dir, const LabelSet& labels,
                                 const std::vector<MatchCriteria>& criteria, const std::filesystem::path& out_dir,
                                 std::ostream& log);

/// Entry point of the binary. Returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace slotdet::cli
