#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sasvfuse/error.hpp"
#include "sasvfuse/protocol.hpp"

namespace sasvfuse {

/// Acceptance rule shared by every function here: score >= threshold accepts.
struct DetPoint {
    double threshold;
    double far;  ///< fraction of negatives accepted
    double frr;  ///< fraction of positives rejected
};

struct EerResult {
    double eer = 0.0;
    double threshold = 0.0;
};

namespace detail {

inline void require_nonempty(std::span<const double> pos, std::span<const double> neg, std::string_view what) {
    if (pos.empty() || neg.empty()) {
        throw Error("metrics", std::string(what) + ": need at least one positive and one negative score");
    }
}

/// Weighted operating points. Thresholds run over -inf, every distinct score
/// ascending, then +inf.
inline std::vector<DetPoint> weighted_det(std::span<const double> pos, std::span<const double> neg,
                                          std::span<const double> neg_weight) {
    struct Item { double score; double wpos; double wneg; };
    std::vector<Item> items;
    items.reserve(pos.size() + neg.size());
    double total_pos = 0.0;
    double total_neg = 0.0;
    for (double s : pos) {
        items.push_back({s, 1.0, 0.0});
        total_pos += 1.0;
    }
    for (std::size_t i = 0; i < neg.size(); ++i) {
        const double w = neg_weight.empty() ? 1.0 : neg_weight[i];
        items.push_back({neg[i], 0.0, w});
        total_neg += w;
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

    std::vector<DetPoint> pts;
    pts.push_back({-std::numeric_limits<double>::infinity(), 1.0, 0.0});
    double rejected_pos = 0.0;
    double rejected_neg = 0.0;
    std::size_t k = 0;
    while (k < items.size()) {
        const double t = items[k].score;
        // threshold t rejects everything strictly below t
        pts.push_back({t, (total_neg - rejected_neg) / total_neg, rejected_pos / total_pos});
        while (k < items.size() && items[k].score == t) {
            rejected_pos += items[k].wpos;
            rejected_neg += items[k].wneg;
            ++k;
        }
    }
    pts.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
    return pts;
}

inline EerResult eer_from_det(const std::vector<DetPoint>& pts) {
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const DetPoint& a = pts[i - 1];
        const DetPoint& b = pts[i];
        if (b.frr < b.far) continue;
        // FRR < FAR at a, FRR >= FAR at b: intersect the segment with FAR = FRR
        const double da = a.far - a.frr;
        const double db = b.far - b.frr;
        double eer;
        if (db == 0.0) {
            eer = b.frr;
        } else {
            const double t = da / (da - db);
            eer = a.frr + t * (b.frr - a.frr);
        }
        const double threshold = std::abs(da) < std::abs(db) ? a.threshold : b.threshold;
        return {eer, threshold};
    }
    return {pts.back().frr, pts.back().threshold};
}

}  // namespace detail

/// Sweep of operating points; FAR non-increasing and FRR non-decreasing.
inline std::vector<DetPoint> det_points(std::span<const double> pos, std::span<const double> neg) {
    detail::require_nonempty(pos, neg, "det_points");
    return detail::weighted_det(pos, neg, {});
}

/// EER with linear interpolation of the ROC at the FAR = FRR crossing. The
/// threshold is the bracketing operating point with the smaller |FAR - FRR|.
inline EerResult eer(std::span<const double> pos, std::span<const double> neg) {
    detail::require_nonempty(pos, neg, "eer");
    return detail::eer_from_det(detail::weighted_det(pos, neg, {}));
}

/// Same as eer() with per-negative weights (weights need not be normalized).
inline EerResult weighted_eer(std::span<const double> pos, std::span<const double> neg,
                              std::span<const double> neg_weight) {
    detail::require_nonempty(pos, neg, "eer");
    if (neg_weight.size() != neg.size()) throw Error("metrics", "weighted_eer: weight count mismatch");
    return detail::eer_from_det(detail::weighted_det(pos, neg, neg_weight));
}

// ---------------------------------------------------------------------------

struct ScoredTrial {
    TrialRecord trial;
    double score = 0.0;
};

using ScoreSet = std::vector<ScoredTrial>;

/// How SASV-EER combines the two negative classes.
enum class NegativePooling {
    Pooled,    ///< every negative trial counts once
    Balanced,  ///< nontarget and spoof each carry half the false-accept mass
};

struct EerReport {
    std::optional<double> sv_eer;
    std::optional<double> spf_eer;
    std::optional<double> sasv_eer;
    std::optional<double> sv_threshold;
    std::optional<double> spf_threshold;
    std::optional<double> sasv_threshold;
    std::array<std::size_t, 3> counts{0, 0, 0};
};

enum class Metric { Sv, Spf, Sasv };

struct MetricRequest {
    bool sv = true;
    bool spf = true;
    bool sasv = true;
};

/// sv = eer(target, nontarget), spf = eer(target, spoof),
/// sasv = eer(target, nontarget + spoof).
inline EerReport sasv_metrics(const ScoreSet& scores, MetricRequest request = {},
                              NegativePooling pooling = NegativePooling::Pooled) {
    std::vector<double> tar, non, spf;
    EerReport r;
    for (const auto& s : scores) {
        if (!std::isfinite(s.score)) {
            throw Error("metrics", "non-finite score for trial '" + s.trial.enroll_id + " " + s.trial.test_id + "'");
        }
        ++r.counts[static_cast<std::size_t>(s.trial.label)];
        switch (s.trial.label) {
            case TrialLabel::Target: tar.push_back(s.score); break;
            case TrialLabel::NonTarget: non.push_back(s.score); break;
            case TrialLabel::Spoof: spf.push_back(s.score); break;
        }
    }
    auto need = [&](bool ok, const char* metric, const char* what) {
        if (!ok) throw Error("metrics", std::string(metric) + " requires at least one " + what + " trial");
    };
    if (request.sv) {
        need(!tar.empty(), "SV-EER", "target");
        need(!non.empty(), "SV-EER", "nontarget");
        auto e = eer(tar, non);
        r.sv_eer = e.eer;
        r.sv_threshold = e.threshold;
    }
    if (request.spf) {
        need(!tar.empty(), "SPF-EER", "target");
        need(!spf.empty(), "SPF-EER", "spoof");
        auto e = eer(tar, spf);
        r.spf_eer = e.eer;
        r.spf_threshold = e.threshold;
    }
    if (request.sasv) {
        need(!tar.empty(), "SASV-EER", "target");
        need(!non.empty() || !spf.empty(), "SASV-EER", "nontarget or spoof");
        std::vector<double> neg = non;
        neg.insert(neg.end(), spf.begin(), spf.end());
        EerResult e;
        if (pooling == NegativePooling::Balanced && !non.empty() && !spf.empty()) {
            std::vector<double> w(neg.size());
            std::fill(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(non.size()), 0.5 / static_cast<double>(non.size()));
            std::fill(w.begin() + static_cast<std::ptrdiff_t>(non.size()), w.end(), 0.5 / static_cast<double>(spf.size()));
            e = weighted_eer(tar, neg, w);
        } else {
            e = eer(tar, neg);
        }
        r.sasv_eer = e.eer;
        r.sasv_threshold = e.threshold;
    }
    return r;
}

/// Request only the metrics whose classes are present.
inline MetricRequest available_metrics(const ScoreSet& scores) {
    std::array<bool, 3> has{false, false, false};
    for (const auto& s : scores) has[static_cast<std::size_t>(s.trial.label)] = true;
    return {has[0] && has[1], has[0] && has[2], has[0] && (has[1] || has[2])};
}

inline nlohmann::json to_json(const EerReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json j;
    j["sv_eer"] = opt(r.sv_eer);
    j["spf_eer"] = opt(r.spf_eer);
    j["sasv_eer"] = opt(r.sasv_eer);
    j["thresholds"] = {{"sv", opt(r.sv_threshold)}, {"spf", opt(r.spf_threshold)}, {"sasv", opt(r.sasv_threshold)}};
    j["counts"] = {{"target", r.counts[0]}, {"nontarget", r.counts[1]}, {"spoof", r.counts[2]}};
    return j;
}

}  // namespace sasvfuse
