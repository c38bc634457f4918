#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "sdr/config.hpp"
#include "sdr/dataset.hpp"
#include "sdr/manifest.hpp"
#include "sdr/model.hpp"

namespace sdr::eval {

enum class Granularity { Clip, Frame, Participant };

std::string to_string(Granularity g);
Granularity granularity_from(const std::string& s);

/// Rows are true classes, columns predicted.
struct ConfusionMatrix {
  Eigen::MatrixXi counts;
  std::vector<std::string> class_names;

  int k() const { return static_cast<int>(counts.rows()); }
  long total() const { return counts.cast<long>().sum(); }
  double accuracy() const;
};

/// Throws LabelError for classes outside 0..k-1 and ShapeError on length mismatch.
ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, int k);

struct ClassScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  long support = 0;
};

/// 0/0 is taken as 0.
ClassScores prf1(const ConfusionMatrix& cm, int c);
double f1_from(double precision, double recall);

/// sqrt(mean squared error) over every cell. Throws ShapeError.
double rmse_metric(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& targets);
Eigen::MatrixXd one_hot(std::span<const int> labels, int k);

/// RMSE of predicting 1/k everywhere against one-hot targets.
double uniform_rmse(int k);

std::vector<std::string> class_names(model::HeadKind head);

struct EvalReport {
  double accuracy = 0;
  double rmse = 0;
  std::vector<ClassScores> per_class;
  ConfusionMatrix cm;
  Granularity granularity = Granularity::Clip;
  nlohmann::json metadata = nlohmann::json::object();

  long samples() const { return cm.total(); }
};

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
std::string render_confusion(const ConfusionMatrix& cm);

/// Builds a report from scores (one row per sample) and true labels.
EvalReport make_report(const Eigen::MatrixXd& scores, std::span<const int> labels, Granularity g,
                       std::vector<std::string> names);

/// Accuracy and RMSE deltas (b - a). Refuses reports of different granularity.
nlohmann::json diff_reports(const EvalReport& a, const EvalReport& b);

/// Evaluates normalized participants. Per-frame repeats each clip's
/// prediction for its frames; per-participant takes the majority clip vote
/// (lowest class on ties) and the mean of clip scores.
EvalReport evaluate(const model::Net& net, std::span<const dataset::ParticipantData> participants,
                    Granularity g = Granularity::Clip);

/// Extracts `m` with the checkpoint's frame spec and normalizes with its stats.
std::vector<dataset::ParticipantData> prepare(const model::Checkpoint& ckpt, const manifest::DatasetManifest& m,
                                              const config::RunConfig& cfg);

/// Clean report first, then one per fraction. Every report carries
/// `fraction` and `sigma` metadata.
std::vector<EvalReport> run_noise_robustness(const model::Checkpoint& ckpt,
                                             std::span<const dataset::ParticipantData> val,
                                             std::span<const double> fractions, double sigma,
                                             std::uint64_t seed, Granularity g = Granularity::Clip);

/// Independent train + evaluate runs on the female and male rows.
std::pair<EvalReport, EvalReport> run_gender_split(const manifest::DatasetManifest& m,
                                                   const config::RunConfig& cfg);

/// Evaluates a binary model on a foreign manifest (all rows) restricted to
/// `task` ("both" keeps every row). BDI-II labels are binarized.
EvalReport run_generalization(const model::Checkpoint& ckpt, const manifest::DatasetManifest& foreign,
                              const std::string& task, const config::RunConfig& cfg);

}  // namespace sdr::eval
