#include "defex/representation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "defex/errors.hpp"
#include "defex/util.hpp"

namespace defex::repr {

static_assert(std::endian::native == std::endian::little,
              "tensor cache and checkpoint blobs are little-endian");

std::string repr_kind_to_string(ReprKind k) {
  switch (k) {
    case ReprKind::M: return "m";
    case ReprKind::ML: return "ml";
    case ReprKind::MLD: return "mld";
  }
  return "m";
}

ReprKind repr_kind_from_string(const std::string& s) {
  if (s == "m") return ReprKind::M;
  if (s == "ml") return ReprKind::ML;
  if (s == "mld") return ReprKind::MLD;
  throw Error("unknown representation kind '" + s + "' (expected m|ml|mld)");
}

int RepresentationConfig::row_width() const {
  switch (kind) {
    case ReprKind::M: return k;
    case ReprKind::ML: return k + label_count();
    case ReprKind::MLD: return 2 * k + label_count() + 1;
  }
  return k;
}

int RepresentationConfig::rows() const {
  return kind == ReprKind::MLD ? d_max : n + d_max;
}

uint64_t RepresentationConfig::hash() const {
  std::string blob = repr_kind_to_string(kind) + "|" + std::to_string(k) +
                     "|" + std::to_string(n) + "|" + std::to_string(d_max) +
                     "|" + (lowercase ? "lc" : "exact");
  for (const std::string& l : label_space.labels) blob += "|" + l;
  return fnv1a(blob);
}

Vec dep_word_avg(const Vec& w_i, const Vec& w_j) {
  if (w_i.size() != w_j.size()) {
    throw LengthMismatch("dep_word_avg: vectors of different length");
  }
  Vec out(w_i.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (w_i[i] + w_j[i]);
  return out;
}

Vec dep_word_concat(const Vec& w_i, const Vec& w_j) {
  if (w_i.size() != w_j.size()) {
    throw LengthMismatch("dep_word_concat: vectors of different length");
  }
  Vec out;
  out.reserve(w_i.size() * 2);
  out.insert(out.end(), w_i.begin(), w_i.end());
  out.insert(out.end(), w_j.begin(), w_j.end());
  return out;
}

Vec dep_label_onehot(const std::string& label,
                     const parse::LabelInventory& inventory) {
  int idx = inventory.index_of(label);
  if (idx < 0) throw UnknownLabel(label);
  Vec out(inventory.size(), 0.0);
  out[static_cast<size_t>(idx)] = 1.0;
  return out;
}

namespace {

Vec token_vector(const embedding::VectorStore& store,
                 const std::string& token, bool lower) {
  return embedding::lookup(store, lower ? lowercase_ascii(token) : token);
}

}  // namespace

InputTensor build_input(const parse::ParsedSentence& sentence,
                        const embedding::VectorStore& store,
                        const ConfigPtr& config, TensorMode mode,
                        TruncationStats* stats) {
  const RepresentationConfig& cfg = *config;
  if (store.dimension != cfg.k) {
    throw LengthMismatch("vector store dimension " +
                         std::to_string(store.dimension) +
                         " does not match config k=" + std::to_string(cfg.k));
  }
  const auto& tokens = sentence.base.tokens;
  const std::string& id = sentence.base.id;

  size_t word_count = tokens.size();
  if (word_count > static_cast<size_t>(cfg.n)) {
    if (mode == TensorMode::Train) {
      throw SentenceTooLong(id, word_count, static_cast<size_t>(cfg.n));
    }
    word_count = static_cast<size_t>(cfg.n);
    if (stats) ++stats->truncated_sentences;
  }
  size_t edge_count = sentence.edges.size();
  if (edge_count > static_cast<size_t>(cfg.d_max)) {
    if (mode == TensorMode::Train) {
      throw TooManyEdges(id, edge_count, static_cast<size_t>(cfg.d_max));
    }
    edge_count = static_cast<size_t>(cfg.d_max);
    if (stats) ++stats->truncated_edge_lists;
  }

  const int L = cfg.label_count();
  InputTensor out;
  out.config = config;
  out.values = Mat(cfg.rows(), cfg.row_width());
  Mat& m = out.values;

  // Word block (M and ML): word vector per row, right-padded with zeros up
  // to the row width.
  if (cfg.kind != ReprKind::MLD) {
    for (size_t t = 0; t < word_count; ++t) {
      Vec v = token_vector(store, tokens[t], cfg.lowercase);
      std::copy(v.begin(), v.end(), m.row(static_cast<int>(t)));
    }
  }

  // Dependency block. Edge word vectors are taken from the full token list;
  // truncation above only limits which edges get a row.
  const int dep_row0 = cfg.kind == ReprKind::MLD ? 0 : cfg.n;
  for (size_t e = 0; e < edge_count; ++e) {
    const parse::DependencyEdge& edge = sentence.edges[e];
    int label_idx = cfg.label_space.index_of(edge.label);
    if (label_idx < 0) throw UnknownLabel(edge.label);
    Vec wi = token_vector(store, tokens[static_cast<size_t>(edge.head_index)],
                          cfg.lowercase);
    Vec wj = token_vector(
        store, tokens[static_cast<size_t>(edge.dependent_index)],
        cfg.lowercase);
    double* row = m.row(dep_row0 + static_cast<int>(e));
    switch (cfg.kind) {
      case ReprKind::M: {
        Vec avg = dep_word_avg(wi, wj);
        std::copy(avg.begin(), avg.end(), row);
        break;
      }
      case ReprKind::ML: {
        Vec avg = dep_word_avg(wi, wj);
        std::copy(avg.begin(), avg.end(), row);
        row[cfg.k + label_idx] = 1.0;
        break;
      }
      case ReprKind::MLD: {
        if (edge.depth < 0) {
          throw Error("sentence '" + id +
                      "': edge depths not computed before mld assembly");
        }
        Vec cat = dep_word_concat(wi, wj);
        std::copy(cat.begin(), cat.end(), row);
        row[2 * cfg.k + label_idx] = 1.0;
        row[2 * cfg.k + L] = static_cast<double>(edge.depth);
        break;
      }
    }
  }
  return out;
}

std::vector<Example> dataset_tensors(
    const std::vector<parse::ParsedSentence>& parsed,
    const embedding::VectorStore& store, const ConfigPtr& config,
    TensorMode mode, TruncationStats* stats) {
  std::vector<Example> out;
  out.reserve(parsed.size());
  for (const parse::ParsedSentence& s : parsed) {
    out.emplace_back(build_input(s, store, config, mode, stats),
                     s.base.label);
  }
  return out;
}

ConfigPtr compute_config(
    const std::vector<parse::ParsedSentence>& training_sentences,
    ReprKind kind, int k, bool lowercase,
    std::optional<parse::LabelInventory> fixed_inventory) {
  auto cfg = std::make_shared<RepresentationConfig>();
  cfg->kind = kind;
  cfg->k = k;
  cfg->lowercase = lowercase;
  size_t n = 1, d_max = 0;
  for (const auto& s : training_sentences) {
    n = std::max(n, s.base.tokens.size());
    d_max = std::max(d_max, s.edges.size());
  }
  cfg->n = static_cast<int>(n);
  cfg->d_max = static_cast<int>(d_max);
  cfg->label_space = fixed_inventory
                         ? *fixed_inventory
                         : parse::collect_label_inventory(training_sentences);
  return cfg;
}

void write_tensor_cache(const std::string& path,
                        const std::vector<Example>& examples,
                        uint64_t store_hash) {
  if (examples.empty()) throw Error("refusing to cache an empty dataset");
  const ConfigPtr& cfg = examples.front().first.config;
  nlohmann::json header;
  header["magic"] = "defex-tensor-cache";
  header["version"] = 1;
  header["count"] = examples.size();
  header["rows"] = cfg->rows();
  header["width"] = cfg->row_width();
  header["config_hash"] = to_hex(cfg->hash());
  header["store_hash"] = to_hex(store_hash);
  std::vector<int> labels;
  labels.reserve(examples.size());
  for (const auto& [tensor, label] : examples) {
    labels.push_back(label == corpus::SentenceLabel::Definition ? 1 : 0);
  }
  header["labels"] = labels;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write tensor cache: " + path);
  out << header.dump() << "\n";
  for (const auto& [tensor, label] : examples) {
    out.write(reinterpret_cast<const char*>(tensor.values.data.data()),
              static_cast<std::streamsize>(tensor.values.size() *
                                           sizeof(double)));
  }
}

std::optional<std::vector<Example>> read_tensor_cache(const std::string& path,
                                                      const ConfigPtr& config,
                                                      uint64_t store_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string header_line;
  if (!std::getline(in, header_line)) return std::nullopt;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (header.value("magic", "") != std::string("defex-tensor-cache") ||
      header.value("config_hash", "") != to_hex(config->hash()) ||
      header.value("store_hash", "") != to_hex(store_hash)) {
    return std::nullopt;
  }
  const size_t count = header.at("count").get<size_t>();
  const int rows = header.at("rows").get<int>();
  const int width = header.at("width").get<int>();
  if (rows != config->rows() || width != config->row_width()) {
    return std::nullopt;
  }
  auto labels = header.at("labels").get<std::vector<int>>();
  if (labels.size() != count) return std::nullopt;

  std::vector<Example> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    InputTensor t;
    t.config = config;
    t.values = Mat(rows, width);
    in.read(reinterpret_cast<char*>(t.values.data.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!in) throw Error("tensor cache truncated: " + path);
    out.emplace_back(std::move(t), labels[i] == 1
                                       ? corpus::SentenceLabel::Definition
                                       : corpus::SentenceLabel::NonDefinition);
  }
  return out;
}

}  // namespace defex::repr
