#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bosc/common.hpp"
#include "bosc/inference.hpp"

// Open-set evaluation: FPR/TPR and CCR sweeps, ROC and OSCR curves, areas,
// EER, fixed-FPR threshold calibration, confusion-with-rejection.
//
// Convention (matching the scoring rules): out-of-set is the positive event;
// a sample counts as rejected when xi < nu, accepted-and-correct when
// xi >= nu and y* == y. The OSCR curve is CCR vs FNR (FNR = 1 - TPR).
namespace bosc::metrics {

struct CurvePoint {
    double nu = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
    double fnr = 1.0;  // 1 - tpr
    double ccr = 0.0;
};

struct EvalSummary {
    int n_in_set = 0;
    int n_out_of_set = 0;
    double accuracy = 0.0;  // closed-set, over in-set records via y*
    double au_roc = 0.0;
    double au_oscr = 0.0;
    double eer = 0.0;
    double target_fpr = 0.05;
    double nu = 0.0;  // threshold used for the fixed-FPR numbers
    double tpr_at_fpr = 0.0;
    double ccr_at_fpr = 0.0;
    std::string score_kind;
};

// Row-normalized (N+1)x(N+1) matrix: rows = true in-set classes then
// out-of-set, columns = predicted classes then reject. Rows with no records
// are flagged undefined (NaN entries).
struct ConfusionMatrix {
    int n_classes = 0;
    std::vector<double> values;          // (N+1)*(N+1), row-major
    std::vector<bool> row_defined;

    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * (n_classes + 1) + col]; }
};

// Sweeps nu over midpoints between distinct scores plus sentinels; points
// sorted by nu, reaching (0,0) and (1,1).
std::vector<CurvePoint> roc_curve(const std::vector<infer::EvalRecord>& records);

// Same sweep with CCR attached; use (fnr, ccr) as the OSCR axes.
std::vector<CurvePoint> oscr_curve(const std::vector<infer::EvalRecord>& records);

enum class Axis { Nu, Fpr, Tpr, Fnr, Ccr };

// Trapezoidal integral of y over x in [0,1] with endpoint extension; the
// curve must be sorted in x (ascending or descending).
double area_under(const std::vector<CurvePoint>& curve, Axis x, Axis y);

double au_roc(const std::vector<CurvePoint>& curve);   // x=fpr, y=tpr
double au_oscr(const std::vector<CurvePoint>& curve);  // x=fnr, y=ccr

// Rate at the FPR = FNR crossing, linearly interpolated.
double eer(const std::vector<CurvePoint>& roc);

// Largest nu with FPR(nu) <= target over the given in-set scores.
double threshold_at_fpr(std::vector<double> in_set_scores, double target_fpr);

ConfusionMatrix confusion_with_rejection(const std::vector<infer::EvalRecord>& records, int n_classes,
                                         double nu);

// nu_override: threshold calibrated elsewhere (e.g. on a validation split);
// when absent the records' own in-set scores are used.
EvalSummary summarize(const std::vector<infer::EvalRecord>& records, double target_fpr,
                      std::optional<double> nu_override = std::nullopt);

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve);
void write_confusion_csv(const std::string& path, const ConfusionMatrix& m,
                         const std::vector<std::string>& class_names);

}  // namespace bosc::metrics
