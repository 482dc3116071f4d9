#include "bosc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace bosc::metrics {

namespace {

struct SplitScores {
    std::vector<double> in_set;   // xi over D_k
    std::vector<double> out_set;  // xi over D_u
    std::vector<bool> in_correct;  // y* == y per in-set record
};

SplitScores split_records(const std::vector<infer::EvalRecord>& records) {
    SplitScores s;
    for (const auto& r : records) {
        if (r.true_label == kOutOfSet) {
            s.out_set.push_back(r.xi);
        } else {
            s.in_set.push_back(r.xi);
            s.in_correct.push_back(r.y_star == r.true_label);
        }
    }
    return s;
}

std::vector<double> sweep_thresholds(const SplitScores& s) {
    std::set<double> distinct(s.in_set.begin(), s.in_set.end());
    distinct.insert(s.out_set.begin(), s.out_set.end());
    std::vector<double> vals(distinct.begin(), distinct.end());
    std::vector<double> nus;
    nus.push_back(vals.front() - 1.0);
    for (std::size_t i = 0; i < vals.size(); ++i) {
        nus.push_back(vals[i]);
        if (i + 1 < vals.size()) nus.push_back(0.5 * (vals[i] + vals[i + 1]));
    }
    nus.push_back(vals.back() + 1.0);
    return nus;
}

std::vector<CurvePoint> sweep(const std::vector<infer::EvalRecord>& records) {
    const SplitScores s = split_records(records);
    if (s.in_set.empty() || s.out_set.empty())
        fail(Errc::eval_error, "curve needs both in-set and out-of-set records");
    std::vector<CurvePoint> curve;
    for (double nu : sweep_thresholds(s)) {
        CurvePoint p;
        p.nu = nu;
        int fp = 0, correct_acc = 0;
        for (std::size_t i = 0; i < s.in_set.size(); ++i) {
            if (s.in_set[i] < nu) ++fp;
            else if (s.in_correct[i]) ++correct_acc;  // xi >= nu and correctly classified
        }
        int tp = 0;
        for (double x : s.out_set) tp += x < nu ? 1 : 0;
        p.fpr = static_cast<double>(fp) / s.in_set.size();
        p.tpr = static_cast<double>(tp) / s.out_set.size();
        p.fnr = 1.0 - p.tpr;
        p.ccr = static_cast<double>(correct_acc) / s.in_set.size();
        curve.push_back(p);
    }
    return curve;
}

double axis_value(const CurvePoint& p, Axis a) {
    switch (a) {
        case Axis::Nu: return p.nu;
        case Axis::Fpr: return p.fpr;
        case Axis::Tpr: return p.tpr;
        case Axis::Fnr: return p.fnr;
        case Axis::Ccr: return p.ccr;
    }
    return 0.0;
}

}  // namespace

std::vector<CurvePoint> roc_curve(const std::vector<infer::EvalRecord>& records) { return sweep(records); }

std::vector<CurvePoint> oscr_curve(const std::vector<infer::EvalRecord>& records) { return sweep(records); }

double area_under(const std::vector<CurvePoint>& curve, Axis x_axis, Axis y_axis) {
    if (curve.size() < 2) fail(Errc::eval_error, "curve too short for integration");
    std::vector<std::pair<double, double>> pts;
    pts.reserve(curve.size());
    for (const auto& p : curve) pts.emplace_back(axis_value(p, x_axis), axis_value(p, y_axis));
    bool ascending = true, descending = true;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        ascending = ascending && pts[i].first >= pts[i - 1].first - 1e-12;
        descending = descending && pts[i].first <= pts[i - 1].first + 1e-12;
    }
    if (!ascending && !descending) fail(Errc::eval_error, "curve is not sorted along the x axis");
    if (descending && !ascending) std::reverse(pts.begin(), pts.end());
    // Endpoint extension over [0,1].
    if (pts.front().first > 0.0) pts.insert(pts.begin(), {0.0, pts.front().second});
    if (pts.back().first < 1.0) pts.push_back({1.0, pts.back().second});
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        area += 0.5 * (pts[i].second + pts[i - 1].second) * (pts[i].first - pts[i - 1].first);
    return area;
}

double au_roc(const std::vector<CurvePoint>& curve) { return area_under(curve, Axis::Fpr, Axis::Tpr); }

double au_oscr(const std::vector<CurvePoint>& curve) { return area_under(curve, Axis::Fnr, Axis::Ccr); }

double eer(const std::vector<CurvePoint>& roc) {
    if (roc.size() < 2) fail(Errc::eval_error, "ROC too short for EER");
    // diff = FPR - FNR rises from -1 to +1 as nu sweeps upward.
    for (std::size_t i = 1; i < roc.size(); ++i) {
        const double d0 = roc[i - 1].fpr - roc[i - 1].fnr;
        const double d1 = roc[i].fpr - roc[i].fnr;
        if (d0 <= 0.0 && d1 >= 0.0) {
            if (d1 == d0) return roc[i - 1].fpr;
            const double t = -d0 / (d1 - d0);
            return roc[i - 1].fpr + t * (roc[i].fpr - roc[i - 1].fpr);
        }
    }
    fail(Errc::eval_error, "no FPR/FNR crossing found");
}

double threshold_at_fpr(std::vector<double> in_set_scores, double target_fpr) {
    if (in_set_scores.empty()) fail(Errc::eval_error, "no in-set scores to calibrate on");
    if (target_fpr < 0.0 || target_fpr > 1.0) fail(Errc::invalid_argument, "target FPR outside [0,1]");
    std::sort(in_set_scores.begin(), in_set_scores.end());
    const std::size_t n = in_set_scores.size();
    const std::size_t budget =
        static_cast<std::size_t>(std::floor(target_fpr * static_cast<double>(n) + 1e-9));
    if (budget >= n) return in_set_scores.back() + 1.0;
    return in_set_scores[budget];
}

ConfusionMatrix confusion_with_rejection(const std::vector<infer::EvalRecord>& records, int n_classes,
                                         double nu) {
    ConfusionMatrix m;
    m.n_classes = n_classes;
    const int dim = n_classes + 1;
    m.values.assign(static_cast<std::size_t>(dim) * dim, 0.0);
    m.row_defined.assign(dim, false);
    std::vector<double> row_total(dim, 0.0);
    for (const auto& r : records) {
        const int row = r.true_label == kOutOfSet ? n_classes : r.true_label - 1;
        const int decision = infer::decide(r.y_star, r.xi, nu);
        const int col = decision == kReject ? n_classes : decision - 1;
        m.values[static_cast<std::size_t>(row) * dim + col] += 1.0;
        row_total[row] += 1.0;
    }
    for (int row = 0; row < dim; ++row) {
        if (row_total[row] > 0.0) {
            m.row_defined[row] = true;
            for (int col = 0; col < dim; ++col) m.values[static_cast<std::size_t>(row) * dim + col] /= row_total[row];
        } else {
            for (int col = 0; col < dim; ++col)
                m.values[static_cast<std::size_t>(row) * dim + col] = std::nan("");
        }
    }
    return m;
}

EvalSummary summarize(const std::vector<infer::EvalRecord>& records, double target_fpr,
                      std::optional<double> nu_override) {
    const SplitScores s = split_records(records);
    if (s.in_set.empty() || s.out_set.empty())
        fail(Errc::eval_error, "summary needs both in-set and out-of-set records");
    EvalSummary sum;
    sum.n_in_set = static_cast<int>(s.in_set.size());
    sum.n_out_of_set = static_cast<int>(s.out_set.size());
    sum.target_fpr = target_fpr;
    sum.score_kind = infer::score_kind_name(records.front().kind);
    int correct = 0;
    for (bool c : s.in_correct) correct += c ? 1 : 0;
    sum.accuracy = static_cast<double>(correct) / s.in_set.size();

    const auto curve = sweep(records);
    sum.au_roc = au_roc(curve);
    sum.au_oscr = au_oscr(curve);
    sum.eer = eer(curve);

    sum.nu = nu_override ? *nu_override : threshold_at_fpr(s.in_set, target_fpr);
    int tp = 0;
    for (double x : s.out_set) tp += x < sum.nu ? 1 : 0;
    sum.tpr_at_fpr = static_cast<double>(tp) / s.out_set.size();
    int ccr = 0;
    for (std::size_t i = 0; i < s.in_set.size(); ++i)
        ccr += (s.in_set[i] >= sum.nu && s.in_correct[i]) ? 1 : 0;
    sum.ccr_at_fpr = static_cast<double>(ccr) / s.in_set.size();
    return sum;
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
    std::ofstream out(path);
    if (!out) fail(Errc::io_error, "cannot write " + path);
    out << "nu,fpr,tpr,fnr,ccr\n";
    char buf[160];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g,%.9g\n", p.nu, p.fpr, p.tpr, p.fnr, p.ccr);
        out << buf;
    }
}

void write_confusion_csv(const std::string& path, const ConfusionMatrix& m,
                         const std::vector<std::string>& class_names) {
    std::ofstream out(path);
    if (!out) fail(Errc::io_error, "cannot write " + path);
    const int dim = m.n_classes + 1;
    out << "true\\pred";
    for (int c = 0; c < m.n_classes; ++c)
        out << "," << (c < static_cast<int>(class_names.size()) ? class_names[c] : std::to_string(c + 1));
    out << ",reject\n";
    char buf[32];
    for (int row = 0; row < dim; ++row) {
        out << (row < m.n_classes
                    ? (row < static_cast<int>(class_names.size()) ? class_names[row] : std::to_string(row + 1))
                    : std::string("out_of_set"));
        for (int col = 0; col < dim; ++col) {
            if (m.row_defined[row]) {
                std::snprintf(buf, sizeof buf, "%.6f", m.at(row, col));
                out << "," << buf;
            } else {
                out << ",undefined";
            }
        }
        out << "\n";
    }
}

}  // namespace bosc::metrics
