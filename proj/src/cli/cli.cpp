// SPDX-License-Identifier: Apache-2.0
#include "slotdet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"

namespace slotdet::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---- run config -----------------------------------------------------------

namespace {

[[noreturn]] void unknown(const std::string& section, const std::string& key) {
    throw std::invalid_argument("config: unknown key '" + key + "' in section '" + section + "'");
}

template <typename V>
V get(const json& v, const std::string& where) {
    try {
        return v.get<V>();
    } catch (const json::exception&) {
        throw std::invalid_argument("config: bad value for '" + where + "'");
    }
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: malformed JSON at byte " + std::to_string(e.byte));
    }
    if (!doc.is_object()) throw std::invalid_argument("config: top level must be an object");
    RunConfig cfg;
    for (const auto& [section, body] : doc.items()) {
        if (!body.is_object()) throw std::invalid_argument("config: section '" + section + "' must be an object");
        if (section == "scene") {
            cfg.scene = scene_config_from_json(body.dump());
        } else if (section == "gen") {
            for (const auto& [k, v] : body.items()) {
                if (k == "count") cfg.count = get<int>(v, k);
                else if (k == "test_count") cfg.test_count = get<int>(v, k);
                else unknown(section, k);
            }
        } else if (section == "train") {
            auto& t = cfg.train;
            for (const auto& [k, v] : body.items()) {
                if (k == "epochs") t.epochs = get<int>(v, k);
                else if (k == "batch_size") t.batch_size = get<int>(v, k);
                else if (k == "alternate_epochs") t.alternate_epochs = get<int>(v, k);
                else if (k == "lr") t.adam.lr = get<double>(v, k);
                else if (k == "beta1") t.adam.beta1 = get<double>(v, k);
                else if (k == "beta2") t.adam.beta2 = get<double>(v, k);
                else if (k == "eps") t.adam.eps = get<double>(v, k);
                else if (k == "seed") t.seed = get<std::uint64_t>(v, k);
                else if (k == "preset") t.preset = get<std::string>(v, k);
                else if (k == "slot_depth") t.slot_depth = get<double>(v, k);
                else if (k == "center_jitter") t.center_jitter = get<double>(v, k);
                else if (k == "angle_jitter_deg") t.angle_jitter_deg = get<double>(v, k);
                else if (k == "negative_proposals") t.negative_proposals = get<int>(v, k);
                else if (k == "augment") t.augment = get<bool>(v, k);
                else if (k == "eval_each_epoch") t.eval_each_epoch = get<bool>(v, k);
                else unknown(section, k);
            }
        } else if (section == "model") {
            auto& m = cfg.train.model;
            for (const auto& [k, v] : body.items()) {
                if (k == "stage_channels") m.backbone.stage_channels = get<std::vector<int>>(v, k);
                else if (k == "sdn_hidden") m.heads.sdn_hidden = get<int>(v, k);
                else if (k == "scn_hidden") m.heads.scn_hidden = get<int>(v, k);
                else if (k == "k1") m.decode.offsets.k1 = get<double>(v, k);
                else if (k == "k2") m.decode.offsets.k2 = get<double>(v, k);
                else unknown(section, k);
            }
        } else if (section == "detect") {
            for (const auto& [k, v] : body.items()) {
                if (k == "tau_prop") cfg.detect.tau_prop = get<double>(v, k);
                else if (k == "tau_j") cfg.detect.tau_j = get<double>(v, k);
                else if (k == "nms_distance") cfg.detect.nms_distance = get<double>(v, k);
                else unknown(section, k);
            }
        } else {
            throw std::invalid_argument("config: unknown section '" + section + "'");
        }
    }
    cfg.train.detect = cfg.detect;
    cfg.train.validate();
    cfg.detect.validate();
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    const auto bytes = read_file(path);
    return run_config_from_json(std::string(bytes.begin(), bytes.end()));
}

std::string to_json(const RunConfig& c) {
    const auto& t = c.train;
    ordered_json j{
        {"scene", ordered_json::parse(to_json(c.scene))},
        {"gen", {{"count", c.count}, {"test_count", c.test_count}}},
        {"train",
         {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"alternate_epochs", t.alternate_epochs},
          {"lr", t.adam.lr},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"eps", t.adam.eps},
          {"seed", t.seed},
          {"preset", t.preset},
          {"slot_depth", t.slot_depth},
          {"center_jitter", t.center_jitter},
          {"angle_jitter_deg", t.angle_jitter_deg},
          {"negative_proposals", t.negative_proposals},
          {"augment", t.augment},
          {"eval_each_epoch", t.eval_each_epoch}}},
        {"model",
         {{"stage_channels", t.model.backbone.stage_channels},
          {"sdn_hidden", t.model.heads.sdn_hidden},
          {"scn_hidden", t.model.heads.scn_hidden},
          {"k1", t.model.decode.offsets.k1},
          {"k2", t.model.decode.offsets.k2}}},
        {"detect", {{"tau_prop", c.detect.tau_prop}, {"tau_j", c.detect.tau_j}, {"nms_distance", c.detect.nms_distance}}}};
    return j.dump(2) + "\n";
}

// ---- gen / train ----------------------------------------------------------

void cmd_gen(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
    if (cfg.count <= 0) throw std::invalid_argument("empty corpus requested");
    const int test = cfg.test_count < 0 ? cfg.count / 6 : cfg.test_count;
    const auto m = write_corpus(out_dir, cfg.scene, cfg.count, test);
    log << "wrote " << m.count << " scenes (" << m.train_count() << " train, " << m.test_count << " test) to "
        << out_dir.string() << "\n";
}

TrainSummary cmd_train(const RunConfig& cfg, const fs::path& corpus, const fs::path& out_dir, std::ostream& log) {
    Corpus c = load_corpus(corpus);
    for (const auto& s : c.skipped) log << "skipped sample " << s << "\n";
    if (c.train.empty()) throw std::runtime_error("corpus " + corpus.string() + " has no readable training samples");
    fs::create_directories(out_dir);
    write_file(out_dir / "config.json", to_json(cfg));

    nn::SlotNet<float> net(cfg.train.model);
    net.init_xavier(cfg.train.seed);
    TrainOutputs outs{out_dir / "model.ckpt", out_dir / "metrics.jsonl", &log};
    train(net, c.train, c.test, cfg.train, outs);
    log << "checkpoint " << outs.checkpoint.string() << ", metrics " << outs.metrics.string() << "\n";
    return {static_cast<int>(c.train.size()), static_cast<int>(c.test.size()), static_cast<int>(c.skipped.size())};
}

// ---- detect ---------------------------------------------------------------

namespace {

std::pair<int, int> split_range(const CorpusManifest& m, const std::string& split) {
    if (split == "train") return {0, m.train_count()};
    if (split == "test") return {m.train_count(), m.count};
    if (split == "all") return {0, m.count};
    throw std::invalid_argument("split must be train, test or all");
}

}  // namespace

ImageSet corpus_images(const fs::path& corpus, const std::string& split) {
    const auto m = read_manifest(corpus);
    const auto [lo, hi] = split_range(m, split);
    ImageSet s;
    for (int i = lo; i < hi; ++i) {
        s.names.push_back(sample_name(i));
        s.images.push_back(corpus / "images" / (sample_name(i) + ".ppm"));
    }
    return s;
}

ImageSet image_files(const std::vector<fs::path>& paths) {
    std::vector<fs::path> files;
    for (const auto& p : paths) {
        if (fs::is_directory(p)) {
            for (const auto& e : fs::directory_iterator(p))
                if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
        } else {
            files.push_back(p);
        }
    }
    std::sort(files.begin(), files.end());
    ImageSet s;
    for (const auto& f : files) {
        s.names.push_back(f.stem().string());
        s.images.push_back(f);
    }
    return s;
}

namespace {

void plot(Image& img, int x, int y, std::array<std::uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    const auto i = (static_cast<std::size_t>(y) * img.width + x) * 3;
    std::copy(c.begin(), c.end(), img.rgb.begin() + static_cast<std::ptrdiff_t>(i));
}

void segment(Image& img, Point2 a, Point2 b, std::array<std::uint8_t, 3> c) {
    const int steps = std::max(1, static_cast<int>(std::ceil(distance(a, b) * 2)));
    for (int s = 0; s <= steps; ++s) {
        const Point2 p = a + (b - a) * (double(s) / steps);
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx)
                plot(img, static_cast<int>(std::floor(p.x - 0.5)) + dx, static_cast<int>(std::floor(p.y - 0.5)) + dy, c);
    }
}

}  // namespace

void draw_detections(Image& img, std::span<const Detection> dets) {
    for (const auto& d : dets) {
        std::array<std::uint8_t, 3> c{0, 220, 0};
        if (d.slot.type == SlotType::parallel) c = {230, 0, 0};
        if (d.slot.type == SlotType::slanted) c = {0, 60, 255};
        const double arm = 0.6 * distance(d.slot.j1, d.slot.j2);
        segment(img, d.slot.j1, d.slot.j2, c);
        segment(img, d.slot.j1, d.slot.j1 + d.slot.sep1.vec() * arm, c);
        segment(img, d.slot.j2, d.slot.j2 + d.slot.sep2.vec() * arm, c);
        if (d.slot.occupancy == Occupancy::occupied) {
            const Point2 m = midpoint(d.slot.j1, d.slot.j2) + (d.slot.sep1.vec() + d.slot.sep2.vec()) * (0.25 * arm);
            segment(img, m - Point2{4, 4}, m + Point2{4, 4}, c);
            segment(img, m - Point2{4, -4}, m + Point2{4, -4}, c);
        }
    }
}

int cmd_detect(const fs::path& model, const ImageSet& images, const DetectConfig& cfg, const fs::path& out_dir,
               bool overlay, std::ostream& log) {
    cfg.validate();
    const auto net = nn::load_checkpoint<float>(model);
    fs::create_directories(out_dir);
    int failed = 0;
    for (std::size_t i = 0; i < images.images.size(); ++i) {
        const std::string& name = images.names[i];
        try {
            Image img = decode_ppm(read_file(images.images[i]));
            const auto dets = detect(net, img, cfg);
            write_file(out_dir / (name + ".json"), encode_detections(img.width, img.height, dets));
            if (overlay) {
                draw_detections(img, dets);
                write_file(out_dir / (name + ".overlay.ppm"), encode_ppm(img));
            }
        } catch (const std::exception& e) {
            ++failed;
            log << "error: " << images.images[i].string() << ": " << e.what() << "\n";
        }
    }
    log << "detected on " << images.images.size() - static_cast<std::size_t>(failed) << " of "
        << images.images.size() << " images\n";
    return failed;
}

// ---- eval -----------------------------------------------------------------

LabelSet label_dir(const fs::path& labels_dir) {
    if (!fs::is_directory(labels_dir)) throw std::runtime_error("labels directory " + labels_dir.string() + " not found");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(labels_dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    LabelSet s;
    for (const auto& f : files) {
        s.names.push_back(f.stem().string());
        s.files.push_back(f);
    }
    return s;
}

LabelSet corpus_labels(const fs::path& corpus, const std::string& split) {
    const auto m = read_manifest(corpus);
    const auto [lo, hi] = split_range(m, split);
    LabelSet s;
    for (int i = lo; i < hi; ++i) {
        s.names.push_back(sample_name(i));
        s.files.push_back(corpus / "labels" / (sample_name(i) + ".json"));
    }
    return s;
}

namespace {

LabelDoc read_labels(const fs::path& p) {
    const auto bytes = read_file(p);
    try {
        return decode_labels(std::string(bytes.begin(), bytes.end()));
    } catch (const ParseError& e) {
        throw ParseError(p.string() + ": " + e.what());
    }
}

std::string join_names(const std::vector<std::string>& v) {
    std::string out;
    const std::size_t shown = std::min<std::size_t>(v.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) out += (i ? ", " : "") + v[i];
    if (v.size() > shown) out += ", ... (" + std::to_string(v.size()) + " total)";
    return out;
}

}  // namespace

std::vector<EvalReport> cmd_eval(const fs::path& detections_dir, const LabelSet& labels,
                                 const std::vector<MatchCriteria>& criteria, const fs::path& out_dir,
                                 std::ostream& log) {
    if (!fs::is_directory(detections_dir))
        throw std::runtime_error("detections directory " + detections_dir.string() + " not found");
    const LabelSet dets = label_dir(detections_dir);
    if (!dets.names.empty()) {
        const std::set<std::string> have(dets.names.begin(), dets.names.end());
        const std::set<std::string> want(labels.names.begin(), labels.names.end());
        std::vector<std::string> missing_dets, missing_labels;
        std::set_difference(want.begin(), want.end(), have.begin(), have.end(), std::back_inserter(missing_dets));
        std::set_difference(have.begin(), have.end(), want.begin(), want.end(), std::back_inserter(missing_labels));
        std::string msg;
        if (!missing_dets.empty()) msg += "no detections for: " + join_names(missing_dets);
        if (!missing_labels.empty()) msg += (msg.empty() ? "" : "; ") + std::string("no labels for: ") + join_names(missing_labels);
        if (!msg.empty()) throw std::runtime_error(msg);
    } else {
        log << "detections directory is empty; scoring every image with no detections\n";
    }

    std::vector<ReportBuilder> builders;
    for (const auto& c : criteria) builders.emplace_back(c);
    for (std::size_t i = 0; i < labels.names.size(); ++i) {
        const LabelDoc gt = read_labels(labels.files[i]);
        std::vector<Detection> found;
        if (!dets.names.empty()) {
            const LabelDoc d = read_labels(detections_dir / (labels.names[i] + ".json"));
            for (std::size_t k = 0; k < d.slots.size(); ++k)
                found.push_back({d.slots[k], d.scores.empty() ? 1.0 : d.scores[k]});
        }
        for (auto& b : builders) b.add(found, gt.slots);
    }
    std::vector<EvalReport> reports;
    for (const auto& b : builders) reports.push_back(b.finish());
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_file(out_dir / "report.json", report_json(reports));
        write_file(out_dir / "report.txt", report_table(reports));
    }
    return reports;
}

// ---- binary ---------------------------------------------------------------

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Two-stage parking slot detector: scene generation, training, detection, evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::optional<double> tau_prop, tau_j;
    std::optional<std::string> preset;

    auto common = [&](CLI::App* sub, bool wants_out = true) {
        sub->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
        if (wants_out) sub->add_option("--out", out_dir, "Output directory")->required();
    };

    auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
    common(gen);
    std::optional<int> count, test_count;
    gen->add_option("--seed", seed, "Scene seed");
    gen->add_option("--count", count, "Number of scenes");
    gen->add_option("--test-count", test_count, "Held-out scenes (default count/6)");

    auto* tr = app.add_subcommand("train", "Train a detector on a corpus");
    common(tr);
    std::string corpus;
    std::optional<int> epochs;
    tr->add_option("--corpus", corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
    tr->add_option("--seed", seed, "Training seed");
    tr->add_option("--preset", preset, "Loss weights: snu, ps20 or desk");
    tr->add_option("--epochs", epochs, "Epoch count");
    tr->add_option("--tau-prop", tau_prop, "Proposal threshold for held-out evaluation");
    tr->add_option("--tau-j", tau_j, "Junction threshold for held-out evaluation");

    auto* det = app.add_subcommand("detect", "Run a trained detector on images");
    common(det);
    std::string model, split = "test";
    std::vector<std::string> images;
    bool overlay = false;
    det->add_option("--model", model, "Checkpoint file")->required()->check(CLI::ExistingFile);
    auto* det_images = det->add_option("--images", images, "Pixmap files or directories");
    auto* det_corpus = det->add_option("--corpus", corpus, "Corpus directory")->check(CLI::ExistingDirectory);
    det->add_option("--split", split, "Corpus split: train, test or all");
    det_images->excludes(det_corpus);
    det->add_option("--tau-prop", tau_prop, "Proposal threshold");
    det->add_option("--tau-j", tau_j, "Junction threshold");
    det->add_flag("--overlay", overlay, "Also write overlay pixmaps");

    auto* ev = app.add_subcommand("eval", "Score detections against labels");
    common(ev, false);
    ev->add_option("--out", out_dir, "Report directory");
    std::string detections, labels;
    std::vector<std::string> criteria_text;
    ev->add_option("--detections", detections, "Detections directory")->required();
    auto* ev_labels = ev->add_option("--labels", labels, "Labels directory");
    auto* ev_corpus = ev->add_option("--corpus", corpus, "Corpus directory")->check(CLI::ExistingDirectory);
    ev->add_option("--split", split, "Corpus split: train, test or all");
    ev_labels->excludes(ev_corpus);
    ev->add_option("--criteria", criteria_text, "loose, tight or M,N (repeatable; default loose and tight)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        if (tau_prop) cfg.detect.tau_prop = *tau_prop;
        if (tau_j) cfg.detect.tau_j = *tau_j;
        cfg.train.detect = cfg.detect;

        if (gen->parsed()) {
            if (seed) cfg.scene.seed = *seed;
            if (count) cfg.count = *count;
            if (test_count) cfg.test_count = *test_count;
            cmd_gen(cfg, out_dir, out);
            return 0;
        }
        if (tr->parsed()) {
            if (seed) cfg.train.seed = *seed;
            if (preset) cfg.train.preset = *preset;
            if (epochs) {
                cfg.train.epochs = *epochs;
                cfg.train.alternate_epochs = std::min(cfg.train.alternate_epochs, *epochs);
            }
            cfg.train.validate();
            cmd_train(cfg, corpus, out_dir, err);
            return 0;
        }
        if (det->parsed()) {
            ImageSet set;
            if (!corpus.empty()) {
                set = corpus_images(corpus, split);
            } else if (!images.empty()) {
                set = image_files(std::vector<fs::path>(images.begin(), images.end()));
            } else {
                throw std::invalid_argument("detect needs --images or --corpus");
            }
            return cmd_detect(model, set, cfg.detect, out_dir, overlay, err) == 0 ? 0 : 1;
        }
        if (ev->parsed()) {
            std::vector<MatchCriteria> criteria{MatchCriteria::loose(), MatchCriteria::tight()};
            if (!criteria_text.empty()) {
                criteria.clear();
                for (const auto& t : criteria_text) criteria.push_back(MatchCriteria::parse(t));
            }
            LabelSet ls;
            if (!corpus.empty()) ls = corpus_labels(corpus, split);
            else if (!labels.empty()) ls = label_dir(labels);
            else throw std::invalid_argument("eval needs --labels or --corpus");
            const auto reports = cmd_eval(detections, ls, criteria, out_dir, err);
            out << report_table(reports);
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace slotdet::cli
