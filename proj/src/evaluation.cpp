#include "defex/evaluation.hpp"

#include <cmath>
#include <cstdio>

#include "defex/errors.hpp"
#include "json.hpp"

namespace defex::eval {

ConfusionMatrix confusion(const std::vector<double>& probabilities,
                          const std::vector<corpus::SentenceLabel>& gold,
                          double threshold) {
  if (probabilities.size() != gold.size())
    throw LengthMismatch("confusion: " + std::to_string(probabilities.size()) +
                         " predictions vs " + std::to_string(gold.size()) +
                         " gold labels");
  ConfusionMatrix cm;
  for (size_t i = 0; i < gold.size(); ++i) {
    bool predicted_def = probabilities[i] >= threshold;
    bool is_def = gold[i] == corpus::SentenceLabel::Definition;
    if (predicted_def && is_def)
      ++cm.tp;
    else if (predicted_def && !is_def)
      ++cm.fp;
    else if (!predicted_def && is_def)
      ++cm.fn;
    else
      ++cm.tn;
  }
  return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw EmptyEvaluation();
  auto ratio = [](int64_t num, int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  Metrics m;
  m.accuracy = ratio(cm.tp + cm.tn, cm.total());
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  m.recall = ratio(cm.tp, cm.tp + cm.fn);
  m.f1 = (m.precision + m.recall) == 0.0
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

double majority_accuracy(const corpus::Corpus& reference) {
  size_t def = reference.definition_count();
  size_t non = reference.nondefinition_count();
  size_t total = def + non;
  if (total == 0) throw EmptyEvaluation();
  return static_cast<double>(std::max(def, non)) / static_cast<double>(total);
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["model"] = report.model;
  j["train_corpus"] = report.train_corpus;
  j["test_corpus"] = report.test_corpus;
  j["confusion"] = {{"tp", report.cm.tp},
                    {"fp", report.cm.fp},
                    {"tn", report.cm.tn},
                    {"fn", report.cm.fn}};
  j["metrics"] = {{"accuracy", report.scores.accuracy},
                  {"precision", report.scores.precision},
                  {"recall", report.scores.recall},
                  {"f1", report.scores.f1}};
  return j.dump();
}

std::string reports_to_csv(const std::vector<EvalReport>& reports) {
  std::string out = "model,train,test,accuracy,precision,recall,f1\n";
  char buf[128];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), ",%.4f,%.4f,%.4f,%.4f\n",
                  r.scores.accuracy, r.scores.precision, r.scores.recall,
                  r.scores.f1);
    out += r.model;
    out += ',';
    out += r.train_corpus;
    out += ',';
    out += r.test_corpus;
    out += buf;
  }
  return out;
}

Vec mean_sentence_vector(const std::vector<std::string>& tokens,
                         const embedding::VectorStore& store,
                         bool include_oov) {
  Vec sum(store.dimension, 0.0);
  size_t counted = 0;
  for (const auto& tok : tokens) {
    auto it = store.entries.find(tok);
    if (it == store.entries.end()) {
      if (include_oov) ++counted;  // contributes the zero vector
      continue;
    }
    for (int d = 0; d < store.dimension; ++d) sum[d] += it->second[d];
    ++counted;
  }
  if (counted == 0) return sum;
  for (double& v : sum) v /= static_cast<double>(counted);
  return sum;
}

double BaselineModel::predict(const Vec& x) const {
  double z = bias;
  for (size_t i = 0; i < weights.size(); ++i) z += weights[i] * x[i];
  return 1.0 / (1.0 + std::exp(-z));
}

BaselineModel train_baseline(const std::vector<Vec>& features,
                             const std::vector<corpus::SentenceLabel>& gold,
                             double learning_rate, int iterations) {
  if (features.empty()) throw EmptyTrainingSet();
  if (features.size() != gold.size())
    throw LengthMismatch("baseline: feature/label count mismatch");
  size_t dim = features[0].size();
  for (const auto& f : features)
    if (f.size() != dim) throw LengthMismatch("baseline: ragged feature vectors");

  BaselineModel model;
  model.weights.assign(dim, 0.0);
  double inv_n = 1.0 / static_cast<double>(features.size());
  Vec grad_w(dim);
  for (int it = 0; it < iterations; ++it) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    double grad_b = 0.0;
    for (size_t i = 0; i < features.size(); ++i) {
      double y = gold[i] == corpus::SentenceLabel::Definition ? 1.0 : 0.0;
      double err = model.predict(features[i]) - y;
      for (size_t d = 0; d < dim; ++d) grad_w[d] += err * features[i][d];
      grad_b += err;
    }
    for (size_t d = 0; d < dim; ++d)
      model.weights[d] -= learning_rate * inv_n * grad_w[d];
    model.bias -= learning_rate * inv_n * grad_b;
  }
  return model;
}

}  // namespace defex::eval
