// SPDX-License-Identifier: Apache-2.0
#include "slotdet/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace slotdet {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

MatchCriteria MatchCriteria::custom(double m, double n) {
    if (!(m > 0.0) || !(n > 0.0)) throw std::invalid_argument("match criteria need m > 0 and n > 0");
    return {m, n, CriteriaLabel::custom};
}

MatchCriteria MatchCriteria::parse(std::string_view text) {
    if (text == "loose") return loose();
    if (text == "tight") return tight();
    const auto comma = text.find(',');
    if (comma == std::string_view::npos) throw std::invalid_argument("criteria must be loose, tight or M,N");
    const std::string ms(text.substr(0, comma)), ns(text.substr(comma + 1));
    std::size_t used_m = 0, used_n = 0;
    double m = 0, n = 0;
    try {
        m = std::stod(ms, &used_m);
        n = std::stod(ns, &used_n);
    } catch (const std::exception&) {
        throw std::invalid_argument("criteria '" + std::string(text) + "' is not M,N");
    }
    if (used_m != ms.size() || used_n != ns.size())
        throw std::invalid_argument("criteria '" + std::string(text) + "' is not M,N");
    return custom(m, n);
}

std::string MatchCriteria::name() const {
    switch (label) {
        case CriteriaLabel::loose: return "loose";
        case CriteriaLabel::tight: return "tight";
        case CriteriaLabel::custom: break;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g,%g", m, n);
    return buf;
}

SlotError slot_error(const ParkingSlot& det, const ParkingSlot& gt) {
    const double d11 = distance(det.j1, gt.j1), d22 = distance(det.j2, gt.j2);
    const double d12 = distance(det.j1, gt.j2), d21 = distance(det.j2, gt.j1);
    SlotError e;
    e.swapped = std::max(d12, d21) < std::max(d11, d22);
    const Point2 de = det.j2 - det.j1, ge = gt.j2 - gt.j1;
    const UnitVec2 det_dir{de.x, de.y}, gt_dir{ge.x, ge.y};
    if (!e.swapped) {
        e.junction1 = d11;
        e.junction2 = d22;
        e.sep1 = angle_between_deg(det.sep1, gt.sep1);
        e.sep2 = angle_between_deg(det.sep2, gt.sep2);
        e.entrance = angle_between_deg(det_dir, gt_dir);
    } else {
        e.junction1 = d21;
        e.junction2 = d12;
        e.sep1 = angle_between_deg(det.sep2, gt.sep1);
        e.sep2 = angle_between_deg(det.sep1, gt.sep2);
        e.entrance = angle_between_deg({-det_dir.cx, -det_dir.cy}, gt_dir);
    }
    return e;
}

bool within(const SlotError& e, const MatchCriteria& c) {
    return e.junction1 <= c.m && e.junction2 <= c.m && e.sep1 <= c.n && e.sep2 <= c.n;
}

MatchResult match_slots(std::span<const Detection> dets, std::span<const ParkingSlot> gts, const MatchCriteria& c) {
    MatchResult r;
    r.det_to_gt.assign(dets.size(), -1);
    r.gt_to_det.assign(gts.size(), -1);
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    for (std::size_t d : order) {
        int best = -1;
        double best_err = 0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (r.gt_to_det[g] >= 0) continue;
            const SlotError e = slot_error(dets[d].slot, gts[g]);
            if (!within(e, c)) continue;
            if (best < 0 || e.max_junction() < best_err) {
                best = static_cast<int>(g);
                best_err = e.max_junction();
            }
        }
        if (best >= 0) {
            r.det_to_gt[d] = best;
            r.gt_to_det[static_cast<std::size_t>(best)] = static_cast<int>(d);
            ++r.tp;
        } else {
            ++r.fp;
        }
    }
    r.fn = static_cast<int>(gts.size()) - r.tp;
    return r;
}

void ReportBuilder::add(const MatchResult& m, std::span<const Detection> dets, std::span<const ParkingSlot> gts) {
    if (m.det_to_gt.size() != dets.size() || m.gt_to_det.size() != gts.size())
        throw std::invalid_argument("match result does not belong to these detections");
    tp_ += m.tp;
    fp_ += m.fp;
    gt_ += static_cast<int>(gts.size());
    for (std::size_t d = 0; d < dets.size(); ++d) {
        const int g = m.det_to_gt[d];
        if (g < 0) continue;
        const ParkingSlot& det = dets[d].slot;
        const ParkingSlot& gt = gts[static_cast<std::size_t>(g)];
        const SlotError e = slot_error(det, gt);
        loc_.push_back(0.5 * (e.junction1 + e.junction2));
        ori_.push_back(0.5 * (e.sep1 + e.sep2));
        ent_.push_back(e.entrance);
        type_ok_ += det.type == gt.type;
        occ_ok_ += det.occupancy == gt.occupancy;
    }
}

void ReportBuilder::add(std::span<const Detection> dets, std::span<const ParkingSlot> gts) {
    add(match_slots(dets, gts, criteria_), dets, gts);
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {kNaN, kNaN};
    double mean = 0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    return {mean, std::sqrt(var / double(v.size()))};
}

double ratio(double num, double den) { return den > 0 ? num / den : kNaN; }

}  // namespace

EvalReport ReportBuilder::finish() const {
    EvalReport r;
    r.criteria = criteria_;
    r.tp = tp_;
    r.fp = fp_;
    r.gt = gt_;
    r.recall = ratio(tp_, gt_);
    r.precision = ratio(tp_, tp_ + fp_);
    std::tie(r.location_error_mean, r.location_error_std) = mean_std(loc_);
    std::tie(r.orientation_error_mean, r.orientation_error_std) = mean_std(ori_);
    std::tie(r.entrance_error_mean, r.entrance_error_std) = mean_std(ent_);
    r.type_rate = ratio(type_ok_, tp_);
    r.occupancy_rate = ratio(occ_ok_, tp_);
    return r;
}

EvalReport compute_report(const MatchResult& m, std::span<const Detection> dets, std::span<const ParkingSlot> gts,
                          const MatchCriteria& c) {
    ReportBuilder b(c);
    b.add(m, dets, gts);
    return b.finish();
}

namespace {

json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double number_or_nan(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

std::string_view label_name(CriteriaLabel l) {
    switch (l) {
        case CriteriaLabel::loose: return "loose";
        case CriteriaLabel::tight: return "tight";
        case CriteriaLabel::custom: return "custom";
    }
    return "custom";
}

CriteriaLabel parse_label(const std::string& s) {
    if (s == "loose") return CriteriaLabel::loose;
    if (s == "tight") return CriteriaLabel::tight;
    if (s == "custom") return CriteriaLabel::custom;
    throw std::invalid_argument("unknown criteria label '" + s + "'");
}

}  // namespace

std::string report_json(std::span<const EvalReport> reports) {
    ordered_json arr = ordered_json::array();
    for (const auto& r : reports) {
        arr.push_back(ordered_json{
            {"criteria", {{"label", std::string(label_name(r.criteria.label))}, {"m", r.criteria.m}, {"n", r.criteria.n}}},
            {"tp", r.tp},
            {"fp", r.fp},
            {"gt", r.gt},
            {"recall", number_or_null(r.recall)},
            {"precision", number_or_null(r.precision)},
            {"location_error", {{"mean", number_or_null(r.location_error_mean)}, {"std", number_or_null(r.location_error_std)}}},
            {"orientation_error",
             {{"mean", number_or_null(r.orientation_error_mean)}, {"std", number_or_null(r.orientation_error_std)}}},
            {"entrance_error", {{"mean", number_or_null(r.entrance_error_mean)}, {"std", number_or_null(r.entrance_error_std)}}},
            {"type_rate", number_or_null(r.type_rate)},
            {"occupancy_rate", number_or_null(r.occupancy_rate)}});
    }
    return ordered_json{{"reports", arr}}.dump(2) + "\n";
}

std::vector<EvalReport> reports_from_json(const std::string& text) {
    const json doc = json::parse(text);
    std::vector<EvalReport> out;
    for (const auto& j : doc.at("reports")) {
        EvalReport r;
        const auto& c = j.at("criteria");
        r.criteria = {c.at("m").get<double>(), c.at("n").get<double>(), parse_label(c.at("label").get<std::string>())};
        r.tp = j.at("tp").get<int>();
        r.fp = j.at("fp").get<int>();
        r.gt = j.at("gt").get<int>();
        r.recall = number_or_nan(j.at("recall"));
        r.precision = number_or_nan(j.at("precision"));
        r.location_error_mean = number_or_nan(j.at("location_error").at("mean"));
        r.location_error_std = number_or_nan(j.at("location_error").at("std"));
        r.orientation_error_mean = number_or_nan(j.at("orientation_error").at("mean"));
        r.orientation_error_std = number_or_nan(j.at("orientation_error").at("std"));
        r.entrance_error_mean = number_or_nan(j.at("entrance_error").at("mean"));
        r.entrance_error_std = number_or_nan(j.at("entrance_error").at("std"));
        r.type_rate = number_or_nan(j.at("type_rate"));
        r.occupancy_rate = number_or_nan(j.at("occupancy_rate"));
        out.push_back(r);
    }
    return out;
}

std::string report_table(std::span<const EvalReport> reports) {
    auto pct = [](double v) {
        char b[32];
        if (std::isnan(v)) return std::string("n/a");
        std::snprintf(b, sizeof b, "%.2f%%", 100.0 * v);
        return std::string(b);
    };
    auto pm = [](double mean, double sd, const char* unit) {
        char b[48];
        if (std::isnan(mean)) return std::string("n/a");
        std::snprintf(b, sizeof b, "%.2f +/- %.2f %s", mean, sd, unit);
        return std::string(b);
    };
    std::vector<std::vector<std::string>> rows{
        {"criteria", "recall", "precision", "TP", "FP", "GT", "location error", "orientation error", "type", "occupancy"}};
    for (const auto& r : reports) {
        char crit[64];
        std::snprintf(crit, sizeof crit, "%s (%gpx, %gdeg)", std::string(label_name(r.criteria.label)).c_str(),
                      r.criteria.m, r.criteria.n);
        rows.push_back({crit, pct(r.recall), pct(r.precision), std::to_string(r.tp), std::to_string(r.fp),
                        std::to_string(r.gt), pm(r.location_error_mean, r.location_error_std, "px"),
                        pm(r.orientation_error_mean, r.orientation_error_std, "deg"), pct(r.type_rate),
                        pct(r.occupancy_rate)});
    }
    std::vector<std::size_t> width(rows[0].size(), 0);
    for (const auto& row : rows)
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    std::string out;
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out += row[i];
            if (i + 1 < row.size()) out += std::string(width[i] - row[i].size() + 2, ' ');
        }
        out += '\n';
    }
    return out;
}

}  // namespace slotdet
