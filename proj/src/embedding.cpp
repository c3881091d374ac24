#include "defex/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "defex/errors.hpp"
#include "defex/util.hpp"

namespace defex::embedding {

VectorStore load_text_vectors(const std::string& path,
                              std::optional<int> expected_dim) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vector file: " + path);

  VectorStore store;
  store.path = path;
  std::string line;
  size_t line_no = 0;
  bool first_content_line = true;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cols = split_ws(line);

    // Optional word2vec-style header: "<count> <dim>".
    if (first_content_line && cols.size() == 2) {
      try {
        (void)std::stoul(cols[0]);
        int dim = std::stoi(cols[1]);
        if (dim <= 0) throw MalformedLine(line_no, "non-positive dimension");
        store.dimension = dim;
        first_content_line = false;
        continue;
      } catch (const MalformedLine&) {
        throw;
      } catch (const std::exception&) {
        // not a header; fall through to row parsing
      }
    }
    first_content_line = false;

    if (cols.size() < 2) {
      throw MalformedLine(line_no, "expected a word and its components");
    }
    const std::string& word = cols[0];
    const int dim = static_cast<int>(cols.size()) - 1;
    if (store.dimension == 0) {
      store.dimension = dim;
    } else if (dim != store.dimension) {
      throw DimensionMismatch(
          line_no, "row has " + std::to_string(dim) + " components, expected " +
                       std::to_string(store.dimension));
    }
    Vec v(static_cast<size_t>(dim));
    for (int i = 0; i < dim; ++i) {
      try {
        v[static_cast<size_t>(i)] = std::stod(cols[static_cast<size_t>(i) + 1]);
      } catch (const std::exception&) {
        throw MalformedLine(line_no, "non-numeric component '" +
                                         cols[static_cast<size_t>(i) + 1] + "'");
      }
      if (!std::isfinite(v[static_cast<size_t>(i)])) {
        throw MalformedLine(line_no, "non-finite component");
      }
    }
    if (!store.entries.emplace(word, std::move(v)).second) {
      ++store.duplicate_words;  // first occurrence wins
    }
  }

  if (store.entries.empty()) throw Error("vector file has no rows: " + path);
  if (expected_dim && store.dimension != *expected_dim) {
    throw DimensionMismatch(0, "store dimension " +
                                   std::to_string(store.dimension) +
                                   " does not match expected " +
                                   std::to_string(*expected_dim));
  }
  store.content_hash = hash_file(path);
  return store;
}

Vec lookup(const VectorStore& store, const std::string& word) {
  auto it = store.entries.find(word);
  if (it != store.entries.end()) return it->second;
  return Vec(static_cast<size_t>(store.dimension), 0.0);
}

Mat build_sentence_matrix(const std::vector<std::string>& tokens,
                          const VectorStore& store, int n) {
  if (tokens.size() > static_cast<size_t>(n)) {
    throw SentenceTooLong("<matrix>", tokens.size(), static_cast<size_t>(n));
  }
  Mat m(n, store.dimension);
  for (size_t t = 0; t < tokens.size(); ++t) {
    auto it = store.entries.find(tokens[t]);
    if (it == store.entries.end()) continue;  // row stays zero
    std::copy(it->second.begin(), it->second.end(),
              m.row(static_cast<int>(t)));
  }
  return m;
}

int corpus_padded_length(const corpus::Corpus& corpus) {
  if (corpus.sentences.empty()) {
    throw EmptyCorpus("cannot compute padded length of an empty corpus");
  }
  size_t n = 0;
  for (const auto& s : corpus.sentences) n = std::max(n, s.tokens.size());
  return static_cast<int>(n);
}

std::string store_manifest(const VectorStore& store) {
  nlohmann::json m;
  m["path"] = store.path;
  m["dimension"] = store.dimension;
  m["entries"] = store.size();
  m["hash"] = to_hex(store.content_hash);
  m["kind"] = store.kind == StoreKind::Pretrained ? "pretrained" : "self";
  return m.dump();
}

int EmbeddingTable::row_of(const std::string& word) const {
  auto it = vocabulary.find(word);
  return it == vocabulary.end() ? unk_row : it->second;
}

void EmbeddingTable::apply_gradient(int row, const Vec& grad,
                                    double learning_rate) {
  if (grad.size() != static_cast<size_t>(weights.cols)) {
    throw LengthMismatch("embedding gradient has wrong dimension");
  }
  double* w = weights.row(row);
  for (size_t i = 0; i < grad.size(); ++i) w[i] -= learning_rate * grad[i];
}

VectorStore EmbeddingTable::snapshot() const {
  VectorStore store;
  store.dimension = weights.cols;
  store.kind = StoreKind::SelfTrained;
  for (const auto& [word, row] : vocabulary) {
    const double* w = weights.row(row);
    store.entries.emplace(word, Vec(w, w + weights.cols));
  }
  return store;
}

EmbeddingTable build_embedding_table(const corpus::Corpus& corpus, int k,
                                     uint64_t seed) {
  std::set<std::string> vocab;
  for (const auto& s : corpus.sentences) {
    vocab.insert(s.tokens.begin(), s.tokens.end());
  }
  EmbeddingTable table;
  int row = 0;
  for (const std::string& w : vocab) table.vocabulary.emplace(w, row++);
  table.unk_row = row;
  table.weights = Mat(row + 1, k);
  std::mt19937_64 rng(seed);
  const double half = 0.5 / k;
  for (double& w : table.weights.data) w = uniform_real(rng, -half, half);
  return table;
}

}  // namespace defex::embedding
