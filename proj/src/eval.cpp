#include "sdr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "sdr/augment.hpp"
#include "sdr/errors.hpp"

namespace sdr::eval {

std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::Clip: return "clip";
    case Granularity::Frame: return "frame";
    case Granularity::Participant: return "participant";
  }
  return "clip";
}

Granularity granularity_from(const std::string& s) {
  if (s == "clip") return Granularity::Clip;
  if (s == "frame") return Granularity::Frame;
  if (s == "participant") return Granularity::Participant;
  throw ArgumentError("unknown granularity '" + s + "'");
}

double ConfusionMatrix::accuracy() const {
  const long n = total();
  return n == 0 ? 0.0 : static_cast<double>(counts.trace()) / static_cast<double>(n);
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, int k) {
  if (preds.size() != truths.size()) throw ShapeError("confusion: prediction and truth lengths differ");
  if (k < 1) throw ArgumentError("confusion: k must be positive");
  ConfusionMatrix cm;
  cm.counts = Eigen::MatrixXi::Zero(k, k);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i], t = truths[i];
    if (p < 0 || p >= k || t < 0 || t >= k) throw LabelError("confusion: class out of range");
    ++cm.counts(t, p);
  }
  for (int c = 0; c < k; ++c) cm.class_names.push_back(std::to_string(c));
  return cm;
}

namespace {
double ratio(double a, double b) { return b == 0 ? 0.0 : a / b; }
}  // namespace

double f1_from(double precision, double recall) {
  return ratio(2 * precision * recall, precision + recall);
}

ClassScores prf1(const ConfusionMatrix& cm, int c) {
  const double tp = cm.counts(c, c);
  const double fp = cm.counts.col(c).sum() - tp;
  const double fn = cm.counts.row(c).sum() - tp;
  ClassScores s;
  s.precision = ratio(tp, tp + fp);
  s.recall = ratio(tp, tp + fn);
  s.f1 = f1_from(s.precision, s.recall);
  s.support = cm.counts.row(c).sum();
  return s;
}

double rmse_metric(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& targets) {
  if (scores.rows() != targets.rows() || scores.cols() != targets.cols())
    throw ShapeError("rmse: shape mismatch");
  if (scores.size() == 0) return 0.0;
  return std::sqrt((scores - targets).squaredNorm() / static_cast<double>(scores.size()));
}

Eigen::MatrixXd one_hot(std::span<const int> labels, int k) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw LabelError("label out of range");
    out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return out;
}

double uniform_rmse(int k) {
  const double u = 1.0 / k;
  return std::sqrt(((k - 1) * u * u + (1 - u) * (1 - u)) / k);
}

std::vector<std::string> class_names(model::HeadKind head) {
  switch (head) {
    case model::HeadKind::Phq8Binary: return {"non_depressed", "depressed"};
    case model::HeadKind::Emotion8:
      return {"neutral", "calm", "happy", "sad", "angry", "fearful", "disgust", "surprised"};
    case model::HeadKind::Phq8Score: {
      std::vector<std::string> out;
      for (int c = 0; c < 24; ++c) out.push_back(std::to_string(c));
      return out;
    }
  }
  return {};
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["granularity"] = to_string(r.granularity);
  j["samples"] = r.samples();
  j["accuracy"] = r.accuracy;
  j["rmse"] = r.rmse;
  j["classes"] = r.cm.class_names;
  nlohmann::json rows = nlohmann::json::array();
  for (int t = 0; t < r.cm.k(); ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (int p = 0; p < r.cm.k(); ++p) row.push_back(r.cm.counts(t, p));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  nlohmann::json pc = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& s = r.per_class[c];
    pc.push_back({{"class", r.cm.class_names.at(c)},
                  {"precision", s.precision},
                  {"recall", s.recall},
                  {"f1", s.f1},
                  {"support", s.support}});
  }
  j["per_class"] = pc;
  j["metadata"] = r.metadata;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.granularity = granularity_from(j.at("granularity").get<std::string>());
    r.accuracy = j.at("accuracy").get<double>();
    r.rmse = j.at("rmse").get<double>();
    r.cm.class_names = j.at("classes").get<std::vector<std::string>>();
    const auto& rows = j.at("confusion");
    const int k = static_cast<int>(rows.size());
    r.cm.counts = Eigen::MatrixXi::Zero(k, k);
    for (int t = 0; t < k; ++t) {
      if (static_cast<int>(rows[t].size()) != k) throw FormatError("confusion matrix is not square");
      for (int p = 0; p < k; ++p) r.cm.counts(t, p) = rows[t][p].get<int>();
    }
    for (const auto& c : j.at("per_class")) {
      r.per_class.push_back({c.at("precision").get<double>(), c.at("recall").get<double>(),
                             c.at("f1").get<double>(), c.at("support").get<long>()});
    }
    if (j.contains("metadata")) r.metadata = j["metadata"];
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

std::string render_confusion(const ConfusionMatrix& cm) {
  std::size_t w = 4;
  for (const auto& n : cm.class_names) w = std::max(w, n.size());
  for (int t = 0; t < cm.k(); ++t)
    for (int p = 0; p < cm.k(); ++p) w = std::max(w, std::to_string(cm.counts(t, p)).size());
  const int width = static_cast<int>(w);
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-*s", width, "t\\p");
  out << buf;
  for (const auto& n : cm.class_names) {
    std::snprintf(buf, sizeof buf, " %*s", width, n.c_str());
    out << buf;
  }
  out << '\n';
  for (int t = 0; t < cm.k(); ++t) {
    std::snprintf(buf, sizeof buf, "%-*s", width, cm.class_names[t].c_str());
    out << buf;
    for (int p = 0; p < cm.k(); ++p) {
      std::snprintf(buf, sizeof buf, " %*d", width, cm.counts(t, p));
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

EvalReport make_report(const Eigen::MatrixXd& scores, std::span<const int> labels, Granularity g,
                       std::vector<std::string> names) {
  const int k = static_cast<int>(scores.cols());
  if (scores.rows() != static_cast<Eigen::Index>(labels.size())) throw ShapeError("report: label count mismatch");
  std::vector<int> preds(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    std::vector<double> row(k);
    for (int c = 0; c < k; ++c) row[c] = scores(r, c);
    preds[i] = model::argmax(row);
  }
  EvalReport rep;
  rep.cm = confusion(preds, labels, k);
  if (static_cast<int>(names.size()) == k) rep.cm.class_names = std::move(names);
  rep.accuracy = rep.cm.accuracy();
  rep.rmse = rmse_metric(scores, one_hot(labels, k));
  for (int c = 0; c < k; ++c) rep.per_class.push_back(prf1(rep.cm, c));
  rep.granularity = g;
  return rep;
}

nlohmann::json diff_reports(const EvalReport& a, const EvalReport& b) {
  if (a.granularity != b.granularity)
    throw ArgumentError("cannot compare " + to_string(a.granularity) + " and " + to_string(b.granularity) +
                        " reports");
  return {{"granularity", to_string(a.granularity)},
          {"accuracy_delta", b.accuracy - a.accuracy},
          {"rmse_delta", b.rmse - a.rmse},
          {"samples", {a.samples(), b.samples()}}};
}

EvalReport evaluate(const model::Net& net, std::span<const dataset::ParticipantData> participants,
                    Granularity g) {
  const int k = model::head_size(net.arch.head);
  std::vector<model::Sample> samples;
  std::vector<std::size_t> owner;
  std::vector<Eigen::Index> clip_rows;
  for (std::size_t p = 0; p < participants.size(); ++p) {
    auto s = dataset::clip_samples(participants[p].features, participants[p].label, participants[p].row.id);
    for (auto& x : s) {
      if (x.label < 0 || x.label >= k) throw LabelError("label " + std::to_string(x.label) + " outside the head");
      owner.push_back(p);
      clip_rows.push_back(x.seq.rows());
      samples.push_back(std::move(x));
    }
  }
  const Eigen::MatrixXd scores = model::predict_scores(net, samples).cast<double>();

  Eigen::MatrixXd out;
  std::vector<int> labels;
  switch (g) {
    case Granularity::Clip:
      out = scores;
      for (const auto& s : samples) labels.push_back(s.label);
      break;
    case Granularity::Frame: {
      const Eigen::Index total = std::accumulate(clip_rows.begin(), clip_rows.end(), Eigen::Index{0});
      out.resize(total, k);
      Eigen::Index r = 0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        for (Eigen::Index f = 0; f < clip_rows[i]; ++f, ++r) {
          out.row(r) = scores.row(static_cast<Eigen::Index>(i));
          labels.push_back(samples[i].label);
        }
      }
      break;
    }
    case Granularity::Participant: {
      std::vector<Eigen::MatrixXd> sums(participants.size(), Eigen::MatrixXd::Zero(1, k));
      std::vector<Eigen::VectorXi> votes(participants.size(), Eigen::VectorXi::Zero(k));
      std::vector<int> n(participants.size(), 0);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        sums[owner[i]] += scores.row(r);
        std::vector<double> row(k);
        for (int c = 0; c < k; ++c) row[c] = scores(r, c);
        ++votes[owner[i]](model::argmax(row));
        ++n[owner[i]];
      }
      std::vector<int> preds;
      Eigen::MatrixXd mean_scores(static_cast<Eigen::Index>(participants.size()), k);
      for (std::size_t p = 0; p < participants.size(); ++p) {
        mean_scores.row(static_cast<Eigen::Index>(p)) = sums[p] / std::max(n[p], 1);
        std::vector<double> v(votes[p].data(), votes[p].data() + k);
        preds.push_back(model::argmax(v));
        labels.push_back(participants[p].label);
      }
      EvalReport rep;
      rep.cm = confusion(preds, labels, k);
      rep.cm.class_names = class_names(net.arch.head);
      rep.accuracy = rep.cm.accuracy();
      rep.rmse = rmse_metric(mean_scores, one_hot(labels, k));
      for (int c = 0; c < k; ++c) rep.per_class.push_back(prf1(rep.cm, c));
      rep.granularity = g;
      return rep;
    }
  }
  return make_report(out, labels, g, class_names(net.arch.head));
}

std::vector<dataset::ParticipantData> prepare(const model::Checkpoint& ckpt, const manifest::DatasetManifest& m,
                                              const config::RunConfig& cfg) {
  config::RunConfig c = cfg;
  c.frame = ckpt.frame;
  auto parts = dataset::extract_manifest(m, c).participants;
  dataset::normalize(parts, ckpt.norm);
  return parts;
}

std::vector<EvalReport> run_noise_robustness(const model::Checkpoint& ckpt,
                                             std::span<const dataset::ParticipantData> val,
                                             std::span<const double> fractions, double sigma,
                                             std::uint64_t seed, Granularity g) {
  std::vector<EvalReport> out;
  EvalReport clean = evaluate(ckpt.net, val, g);
  clean.metadata = {{"experiment", "noise"}, {"condition", "clean"}, {"fraction", 0.0}, {"sigma", sigma}};
  out.push_back(clean);

  dsp::FeatureMatrix all;
  Eigen::Index rows = 0;
  for (const auto& p : val) rows += p.features.rows();
  const Eigen::Index cols = val.empty() ? 0 : val.front().features.cols();
  all.values.resize(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : val) {
    all.values.middleRows(at, p.features.rows()) = p.features.values;
    at += p.features.rows();
  }

  for (std::size_t i = 0; i < fractions.size(); ++i) {
    Rng rng = make_rng(seed, "noise", i);
    const dsp::FeatureMatrix noisy = augment::corrupt_gaussian(all, fractions[i], sigma, rng);
    std::vector<dataset::ParticipantData> corrupted(val.begin(), val.end());
    at = 0;
    for (auto& p : corrupted) {
      p.features.values = noisy.values.middleRows(at, p.features.rows());
      at += p.features.rows();
    }
    EvalReport r = evaluate(ckpt.net, corrupted, g);
    r.metadata = {{"experiment", "noise"},
                  {"condition", "corrupted"},
                  {"fraction", fractions[i]},
                  {"sigma", sigma},
                  {"accuracy_drop", clean.accuracy - r.accuracy}};
    out.push_back(std::move(r));
  }
  return out;
}

std::pair<EvalReport, EvalReport> run_gender_split(const manifest::DatasetManifest& m,
                                                   const config::RunConfig& cfg) {
  auto run = [&](manifest::Gender g) {
    const auto subset = m.where([g](const manifest::ManifestRow& r) { return r.gender == g; });
    if (subset.rows.size() < 2)
      throw InsufficientDataError(manifest::to_string(g) + " subset has fewer than 2 participants");
    if (subset.indices(cfg.experiment.eval_split).empty())
      throw InsufficientDataError(manifest::to_string(g) + " subset has no " +
                                  manifest::to_string(cfg.experiment.eval_split) + " rows");
    const auto trained = dataset::train_from_manifest(subset, cfg);
    const auto eval_set = dataset::select(trained.participants, cfg.experiment.eval_split);
    EvalReport r = evaluate(trained.checkpoint.net, eval_set);
    r.metadata = {{"experiment", "gender"},
                  {"gender", manifest::to_string(g)},
                  {"participants", subset.rows.size()},
                  {"split", manifest::to_string(cfg.experiment.eval_split)}};
    return r;
  };
  EvalReport female = run(manifest::Gender::Female);
  EvalReport male = run(manifest::Gender::Male);
  return {std::move(female), std::move(male)};
}

EvalReport run_generalization(const model::Checkpoint& ckpt, const manifest::DatasetManifest& foreign,
                              const std::string& task, const config::RunConfig& cfg) {
  if (ckpt.net.arch.head != model::HeadKind::Phq8Binary)
    throw LabelError("generalization needs a binary model, got " + model::head_name(ckpt.net.arch.head));
  if (task != "both" && task != "taskA" && task != "taskB")
    throw ArgumentError("unknown task filter '" + task + "'");
  for (const auto& r : foreign.rows) {
    if (r.label_kind != manifest::LabelKind::Bdi2 && r.label_kind != manifest::LabelKind::Phq8Binary)
      throw LabelError("generalization expects bdi2 or phq8_binary labels, got " + manifest::to_string(r.label_kind));
  }
  const auto subset =
      foreign.where([&](const manifest::ManifestRow& r) { return task == "both" || r.task == task; });
  EvalReport rep = evaluate(ckpt.net, prepare(ckpt, subset, cfg));
  rep.metadata = {{"experiment", "generalize"},
                  {"task", task},
                  {"participants", subset.rows.size()},
                  {"bdi_threshold", cfg.experiment.bdi_threshold}};
  return rep;
}

}  // namespace sdr::eval
