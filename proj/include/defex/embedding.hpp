#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "defex/corpus.hpp"
#include "defex/mat.hpp"

namespace defex::embedding {

enum class OovPolicy { ZeroVector };
enum class StoreKind { Pretrained, SelfTrained };

// Immutable word -> k-dimensional vector map. Out-of-vocabulary words map to
// the zero vector, which keeps padding and missing words indistinguishable
// from "no signal".
struct VectorStore {
  int dimension = 0;
  std::unordered_map<std::string, Vec> entries;
  OovPolicy oov_policy = OovPolicy::ZeroVector;
  StoreKind kind = StoreKind::Pretrained;

  // Manifest fields, carried for run reproducibility.
  std::string path;
  uint64_t content_hash = 0;
  size_t duplicate_words = 0;

  size_t size() const { return entries.size(); }
};

// Whitespace-separated text vector file: optional "count dim" header, then
// one word and dim reals per line. Duplicate words keep the first occurrence
// (counted in duplicate_words). Every component must be finite.
VectorStore load_text_vectors(const std::string& path,
                              std::optional<int> expected_dim = std::nullopt);

// Stored vector if present, zeros otherwise. Exact (case-sensitive) match.
Vec lookup(const VectorStore& store, const std::string& word);

// Zero-padded n x k sentence matrix; row t is the vector of token t.
Mat build_sentence_matrix(const std::vector<std::string>& tokens,
                          const VectorStore& store, int n);

// Maximum token count over the corpus.
int corpus_padded_length(const corpus::Corpus& corpus);

// JSON manifest {path, dimension, entries, hash} for a loaded store.
std::string store_manifest(const VectorStore& store);

// Trainable self-embedding table: dense word -> row mapping over a corpus
// vocabulary plus an unknown-word row. Rows are mutated only by a training
// loop; snapshot() freezes the current weights into a VectorStore.
struct EmbeddingTable {
  std::unordered_map<std::string, int> vocabulary;
  Mat weights;  // |V| x k, row per word; last row is unk
  int unk_row = 0;

  int dimension() const { return weights.cols; }
  int row_of(const std::string& word) const;
  void apply_gradient(int row, const Vec& grad, double learning_rate);
  VectorStore snapshot() const;
};

EmbeddingTable build_embedding_table(const corpus::Corpus& corpus, int k,
                                     uint64_t seed);

}  // namespace defex::embedding
