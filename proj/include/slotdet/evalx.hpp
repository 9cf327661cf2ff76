// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slotdet/geometry.hpp"

// Detection matching and recall / precision / error statistics.

namespace slotdet {

enum class CriteriaLabel { loose, tight, custom };

struct MatchCriteria {
    double m = 12.0;  // pixels, per junction
    double n = 10.0;  // degrees, per separating line
    CriteriaLabel label = CriteriaLabel::loose;

    static MatchCriteria loose() { return {12.0, 10.0, CriteriaLabel::loose}; }
    static MatchCriteria tight() { return {6.0, 5.0, CriteriaLabel::tight}; }
    /// Throws std::invalid_argument unless m > 0 and n > 0.
    static MatchCriteria custom(double m, double n);
    /// "loose", "tight" or "M,N".
    static MatchCriteria parse(std::string_view text);

    std::string name() const;
};

/// Errors of a detection against a ground-truth slot under the junction
/// correspondence that minimizes the larger junction distance.
struct SlotError {
    double junction1 = 0, junction2 = 0;  // pixels
    double sep1 = 0, sep2 = 0;            // degrees
    double entrance = 0;                  // degrees, entrance direction
    bool swapped = false;                 // det j1 paired with gt j2

    double max_junction() const { return junction1 > junction2 ? junction1 : junction2; }
};

SlotError slot_error(const ParkingSlot& det, const ParkingSlot& gt);
bool within(const SlotError& e, const MatchCriteria& c);

struct MatchResult {
    std::vector<int> det_to_gt;  // -1 for a false positive
    std::vector<int> gt_to_det;  // -1 for a miss
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

/// Greedy in descending score order (ties keep input order). Each detection
/// takes the qualifying unmatched ground truth with the smallest larger
/// junction distance, ties to the lower index.
MatchResult match_slots(std::span<const Detection> dets, std::span<const ParkingSlot> gts, const MatchCriteria& c);

struct EvalReport {
    MatchCriteria criteria;
    int tp = 0, fp = 0, gt = 0;
    double recall = 0, precision = 0;  // NaN when the denominator is zero
    // Means and population standard deviations over true positives; NaN when tp = 0.
    double location_error_mean = 0, location_error_std = 0;        // mean of the two junction distances
    double orientation_error_mean = 0, orientation_error_std = 0;  // mean of the two separating-line errors
    double entrance_error_mean = 0, entrance_error_std = 0;        // entrance direction, informational
    double type_rate = 0, occupancy_rate = 0;
};

/// Accumulates matches over many images.
class ReportBuilder {
public:
    explicit ReportBuilder(MatchCriteria c) : criteria_(c) {}

    void add(const MatchResult& m, std::span<const Detection> dets, std::span<const ParkingSlot> gts);
    /// match_slots + add.
    void add(std::span<const Detection> dets, std::span<const ParkingSlot> gts);
    EvalReport finish() const;

private:
    MatchCriteria criteria_;
    int tp_ = 0, fp_ = 0, gt_ = 0;
    std::vector<double> loc_, ori_, ent_;
    int type_ok_ = 0, occ_ok_ = 0;
};

EvalReport compute_report(const MatchResult& m, std::span<const Detection> dets, std::span<const ParkingSlot> gts,
                          const MatchCriteria& c);

std::string report_json(std::span<const EvalReport> reports);
std::vector<EvalReport> reports_from_json(const std::string& text);
/// Aligned text table, one row per report.
std::string report_table(std::span<const EvalReport> reports);

}  // namespace slotdet
