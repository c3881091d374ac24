#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defex/corpus.hpp"
#include "defex/embedding.hpp"
#include "defex/mat.hpp"

namespace defex::eval {

struct ConfusionMatrix {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t tn = 0;
  int64_t fn = 0;

  int64_t total() const { return tp + fp + tn + fn; }
};

// Thresholds each probability (p >= threshold reads Definition) and tallies
// against gold labels. Definition is the positive class.
ConfusionMatrix confusion(const std::vector<double>& probabilities,
                          const std::vector<corpus::SentenceLabel>& gold,
                          double threshold = 0.5);

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Any zero-denominator metric is reported as 0. Throws EmptyEvaluation when
// the matrix is empty.
Metrics metrics(const ConfusionMatrix& cm);

// Accuracy of always answering the majority class of `reference`, measured
// on `c` itself when evaluated there.
double majority_accuracy(const corpus::Corpus& reference);

struct EvalReport {
  std::string model;
  std::string train_corpus;
  std::string test_corpus;
  ConfusionMatrix cm;
  Metrics scores;
};

std::string report_to_json(const EvalReport& report);

// "model,train,test,accuracy,precision,recall,f1" header plus one row per
// report, four decimal places.
std::string reports_to_csv(const std::vector<EvalReport>& reports);

// --- averaged-word-vector logistic baseline ---

// Mean of the sentence's word vectors. include_oov keeps zero vectors for
// unknown words in the average; with it false they are dropped from both the
// sum and the count (all-unknown sentences yield the zero vector either way).
Vec mean_sentence_vector(const std::vector<std::string>& tokens,
                         const embedding::VectorStore& store,
                         bool include_oov = true);

struct BaselineModel {
  Vec weights;
  double bias = 0.0;

  double predict(const Vec& x) const;
};

// Full-batch logistic regression with plain gradient descent from zero
// initialisation; deterministic for fixed inputs.
BaselineModel train_baseline(const std::vector<Vec>& features,
                             const std::vector<corpus::SentenceLabel>& gold,
                             double learning_rate = 0.5, int iterations = 500);

}  // namespace defex::eval
