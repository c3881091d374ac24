#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "defex/embedding.hpp"
#include "defex/mat.hpp"
#include "defex/parse.hpp"

namespace defex::repr {

enum class ReprKind { M, ML, MLD };

std::string repr_kind_to_string(ReprKind k);
ReprKind repr_kind_from_string(const std::string& s);

// Fixed-shape contract for one experiment: all tensors built under a config
// share the same rows x width, regardless of the sentence.
struct RepresentationConfig {
  ReprKind kind = ReprKind::M;
  int k = 0;                          // embedding dimension
  parse::LabelInventory label_space;  // size L
  int n = 0;                          // padded sentence length
  int d_max = 0;                      // padded dependency count
  bool lowercase = false;             // lowercase tokens before lookup

  int label_count() const { return static_cast<int>(label_space.size()); }

  // M -> k; ML -> k + L; MLD -> 2k + L + 1.
  int row_width() const;
  // n + d_max for M and ML; d_max for MLD.
  int rows() const;

  uint64_t hash() const;
};

using ConfigPtr = std::shared_ptr<const RepresentationConfig>;

struct InputTensor {
  Mat values;
  ConfigPtr config;

  int rows() const { return values.rows; }
  int width() const { return values.cols; }
};

// Componentwise (w_i + w_j) / 2.
Vec dep_word_avg(const Vec& w_i, const Vec& w_j);

// w_i followed by w_j (length 2k).
Vec dep_word_concat(const Vec& w_i, const Vec& w_j);

// One-hot over the inventory. Throws UnknownLabel when absent.
Vec dep_label_onehot(const std::string& label,
                     const parse::LabelInventory& inventory);

enum class TensorMode { Train, Inference };

struct TruncationStats {
  size_t truncated_sentences = 0;
  size_t truncated_edge_lists = 0;
};

// Assembles one sentence tensor:
//   M:   rows 0..n-1 word vectors, rows n.. one r_avg row per edge.
//   ML:  as M, word rows right-padded with L zeros, edge rows
//        r_avg ∘ one-hot(label).
//   MLD: d_max rows of r_concat ∘ one-hot(label) ∘ depth; no word rows.
// Unused slots stay zero. Edge order follows the parse. In Train mode,
// overlong sentences or edge lists raise; in Inference mode they are
// truncated (counted in stats).
InputTensor build_input(const parse::ParsedSentence& sentence,
                        const embedding::VectorStore& store,
                        const ConfigPtr& config,
                        TensorMode mode = TensorMode::Train,
                        TruncationStats* stats = nullptr);

using Example = std::pair<InputTensor, corpus::SentenceLabel>;

std::vector<Example> dataset_tensors(
    const std::vector<parse::ParsedSentence>& parsed,
    const embedding::VectorStore& store, const ConfigPtr& config,
    TensorMode mode = TensorMode::Train, TruncationStats* stats = nullptr);

// Derives n, d_max, and (unless fixed_inventory is given) the label inventory
// from training-corpus parses.
ConfigPtr compute_config(
    const std::vector<parse::ParsedSentence>& training_sentences,
    ReprKind kind, int k, bool lowercase = false,
    std::optional<parse::LabelInventory> fixed_inventory = std::nullopt);

// On-disk tensor cache: one line of JSON (shape, count, config and store
// hashes) followed by raw 64-bit little-endian reals. read_tensor_cache
// returns nullopt when the file is absent or either hash differs.
void write_tensor_cache(const std::string& path,
                        const std::vector<Example>& examples,
                        uint64_t store_hash);
std::optional<std::vector<Example>> read_tensor_cache(const std::string& path,
                                                      const ConfigPtr& config,
                                                      uint64_t store_hash);

}  // namespace defex::repr
