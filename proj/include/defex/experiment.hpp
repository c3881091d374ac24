#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "defex/corpus.hpp"
#include "defex/embedding.hpp"
#include "defex/evaluation.hpp"
#include "defex/network.hpp"
#include "defex/parse.hpp"
#include "defex/representation.hpp"

namespace defex::experiment {

struct RunSpec {
  std::string train_corpus;
  std::string test_corpus;  // equal to train_corpus for in-domain runs
  net::ArchKind arch = net::ArchKind::CNN;
  repr::ReprKind repr = repr::ReprKind::M;
  std::string embedding;  // vector store name
  net::HyperParams hyper;
  uint64_t seed = 0;
  bool lowercase = false;
  bool stratify_by_source = false;  // joint (source, label) stratification
  double train_fraction = 0.70;
  double test_fraction = 0.25;
  double validation_fraction = 0.05;
};

// Parses {"train": ..., "test": ..., "arch": ..., "repr": ..., "embedding":
// ..., "seed": ..., "hyper": {...}} with defaults for anything omitted.
RunSpec runspec_from_json_text(const std::string& text);

struct DataSet {
  corpus::Corpus corpus;
  std::vector<parse::ParsedSentence> parsed;  // aligned with corpus order
};

struct ExperimentContext {
  std::map<std::string, DataSet> datasets;
  std::map<std::string, embedding::VectorStore> stores;

  const DataSet& dataset(const std::string& name) const;
  const embedding::VectorStore& store(const std::string& name) const;
};

// Reads a corpus and its parse file into the context under `name`.
void load_dataset(ExperimentContext& ctx, const std::string& name,
                  const std::string& corpus_path,
                  const std::string& parses_path);
void load_store(ExperimentContext& ctx, const std::string& name,
                const std::string& vectors_path);

struct RunResult {
  eval::EvalReport report;
  net::History history;
  net::Model model;
  repr::ConfigPtr config;
  std::string manifest_json;  // corpus/embedding hashes, seed, hyperparameters
};

struct FitResult {
  net::Model model;
  net::History history;
  repr::ConfigPtr config;
};

// Trains on the whole dataset minus a spec.validation_fraction slice, with
// the representation config derived from the full dataset. spec.train_corpus
// and spec.test_corpus are ignored; this is the engine behind cross-domain
// training and `defex train`.
FitResult fit_dataset(const DataSet& data, const embedding::VectorStore& store,
                      const RunSpec& spec, std::ostream* log = nullptr);

// Builds inference tensors for the dataset under `config` (truncating
// overlong sentences) and scores the model on them.
eval::EvalReport evaluate_dataset(const net::Model& model,
                                  const repr::ConfigPtr& config,
                                  const DataSet& data,
                                  const embedding::VectorStore& store,
                                  const std::string& model_label,
                                  const std::string& train_label);

// 70/25/5 stratified split of spec.train_corpus, representation config from
// the train part only, training with per-epoch validation metrics, report on
// the test part.
RunResult run_in_domain(const ExperimentContext& ctx, const RunSpec& spec,
                        std::ostream* log = nullptr);

// Trains on the whole training corpus minus a validation slice; evaluates on
// the whole test corpus, truncating sentences that exceed the train-derived
// shape. Requires distinct corpus names.
RunResult run_cross_domain(const ExperimentContext& ctx, const RunSpec& spec,
                           std::ostream* log = nullptr);

struct GridCell {
  RunSpec spec;
  bool ok = false;
  std::string error;
  eval::EvalReport report;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::string csv;  // one row per spec, failures included
};

// Runs every spec, isolating failures per cell; the CSV always has exactly
// one row per spec.
GridResult run_grid(const ExperimentContext& ctx,
                    const std::vector<RunSpec>& specs,
                    std::ostream* log = nullptr);

struct DocumentCount {
  std::string id;
  int definition_sentences = 0;
  int total_sentences = 0;
};

struct ScanResult {
  std::vector<DocumentCount> per_document;
  int documents_with_definition = 0;
  int total_documents = 0;
  int definition_sentences = 0;
  int total_sentences = 0;
};

// Classifies every sentence of every document (threshold 0.5); a document
// contains definitions iff at least one sentence is classified Definition.
ScanResult scan_documents(const net::Model& model,
                          const std::vector<parse::ParsedDocument>& documents,
                          const embedding::VectorStore& store,
                          const repr::ConfigPtr& config);

// Aggregates plus formatted ratios ("760/1250" style counts become "60.8%").
std::string scan_to_json(const ScanResult& result);

// Stable content hash over ids, labels, tokens, and edges of a dataset.
uint64_t dataset_hash(const DataSet& data);

std::string run_manifest(const ExperimentContext& ctx, const RunSpec& spec);

}  // namespace defex::experiment
