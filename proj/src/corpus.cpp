#include "defex/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "defex/errors.hpp"
#include "defex/util.hpp"

namespace defex::corpus {

using nlohmann::json;

std::string source_to_string(Source s) {
  switch (s) {
    case Source::WCL: return "WCL";
    case Source::W00: return "W00";
    case Source::WFMALL: return "WFMALL";
    case Source::SYNTHETIC: return "SYNTHETIC";
  }
  return "SYNTHETIC";
}

Source source_from_string(const std::string& s) {
  if (s == "WCL") return Source::WCL;
  if (s == "W00") return Source::W00;
  if (s == "WFMALL") return Source::WFMALL;
  if (s == "SYNTHETIC") return Source::SYNTHETIC;
  throw Error("unknown corpus source '" + s + "'");
}

size_t Corpus::definition_count() const {
  return static_cast<size_t>(std::count_if(
      sentences.begin(), sentences.end(), [](const LabeledSentence& s) {
        return s.label == SentenceLabel::Definition;
      }));
}

size_t Corpus::nondefinition_count() const {
  return sentences.size() - definition_count();
}

SentenceLabel derive_wcl_label(const std::set<WclField>& fields_present) {
  const bool complete = fields_present.count(WclField::DF) &&
                        fields_present.count(WclField::VF) &&
                        fields_present.count(WclField::GF);
  return complete ? SentenceLabel::Definition : SentenceLabel::NonDefinition;
}

SentenceLabel derive_w00_label(const std::vector<W00Tag>& token_labels) {
  if (token_labels.empty()) throw EmptyTokenList();
  for (W00Tag t : token_labels) {
    if (t != W00Tag::O) return SentenceLabel::Definition;
  }
  return SentenceLabel::NonDefinition;
}

namespace {

void check_unique_ids(const Corpus& c) {
  std::unordered_set<std::string> seen;
  for (const auto& s : c.sentences) {
    if (!seen.insert(s.id).second) {
      throw Error("duplicate sentence id '" + s.id + "' in corpus '" + c.name +
                  "'");
    }
  }
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  return in;
}

}  // namespace

Corpus load_jsonl(const std::string& path, const std::string& name,
                  LoadStats* stats) {
  std::ifstream in = open_or_throw(path);
  Corpus out;
  out.name = name;
  LoadStats local;
  std::string line;
  std::unordered_set<std::string> ids;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    ++local.lines;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec.contains("text") ||
        !rec.contains("label") || !rec.contains("source")) {
      throw MalformedRecord(line_no,
                            "expected keys id, text, label, source");
    }
    LabeledSentence s;
    try {
      s.id = rec.at("id").get<std::string>();
      s.text = rec.at("text").get<std::string>();
      int lab = rec.at("label").get<int>();
      if (lab != 0 && lab != 1) {
        throw MalformedRecord(line_no, "label must be 0 or 1");
      }
      s.label =
          lab == 1 ? SentenceLabel::Definition : SentenceLabel::NonDefinition;
      s.source = source_from_string(rec.at("source").get<std::string>());
      if (rec.contains("tokens")) {
        s.tokens = rec.at("tokens").get<std::vector<std::string>>();
      } else {
        s.tokens = split_ws(s.text);
      }
    } catch (const MalformedRecord&) {
      throw;
    } catch (const std::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
    if (s.tokens.empty()) throw MalformedRecord(line_no, "no tokens");
    if (!ids.insert(s.id).second) {
      throw MalformedRecord(line_no, "duplicate id '" + s.id + "'");
    }
    ++local.records;
    if (s.tokens.size() < kMinSentenceTokens) {
      ++local.skipped_short;
      continue;
    }
    out.sentences.push_back(std::move(s));
  }
  if (out.sentences.empty()) {
    throw EmptyCorpus("no usable sentences in " + path);
  }
  if (stats) *stats = local;
  return out;
}

Corpus load_wfmall(const std::string& path, LoadStats* stats) {
  return load_jsonl(path, "WFMALL", stats);
}

void save_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  for (const auto& s : corpus.sentences) {
    json rec;
    rec["id"] = s.id;
    rec["text"] = s.text;
    rec["tokens"] = s.tokens;
    rec["label"] = s.label == SentenceLabel::Definition ? 1 : 0;
    rec["source"] = source_to_string(s.source);
    out << rec.dump() << "\n";
  }
}

Corpus join_corpora(const std::vector<Corpus>& corpora,
                    const std::string& name) {
  if (corpora.empty()) throw Error("join_corpora requires at least one corpus");
  Corpus out;
  out.name = name;
  std::unordered_set<std::string> ids;
  for (const Corpus& c : corpora) {
    for (const LabeledSentence& s : c.sentences) {
      LabeledSentence copy = s;
      copy.id = c.name + "/" + s.id;
      int suffix = 2;
      while (!ids.insert(copy.id).second) {
        copy.id = c.name + "/" + s.id + "#" + std::to_string(suffix++);
      }
      out.sentences.push_back(std::move(copy));
    }
  }
  return out;
}

namespace {

// Shared stratified partitioner. fractions[i] maps to output i; floor quotas
// everywhere except remainder_to, which absorbs the leftovers per class.
std::vector<Corpus> stratified_partition(const Corpus& corpus,
                                         const std::vector<double>& fractions,
                                         size_t remainder_to, uint64_t seed) {
  std::vector<size_t> def_idx, nondef_idx;
  for (size_t i = 0; i < corpus.sentences.size(); ++i) {
    if (corpus.sentences[i].label == SentenceLabel::Definition) {
      def_idx.push_back(i);
    } else {
      nondef_idx.push_back(i);
    }
  }
  if (def_idx.empty() || nondef_idx.empty()) {
    throw SingleClassCorpus("corpus '" + corpus.name +
                            "' does not contain both classes");
  }

  std::mt19937_64 rng(seed);
  std::vector<std::vector<size_t>> assigned(fractions.size());
  for (auto* cls : {&def_idx, &nondef_idx}) {
    shuffle_deterministic(*cls, rng);
    const size_t n = cls->size();
    std::vector<size_t> quota(fractions.size());
    size_t used = 0;
    for (size_t k = 0; k < fractions.size(); ++k) {
      if (k == remainder_to) continue;
      quota[k] = static_cast<size_t>(std::floor(fractions[k] * static_cast<double>(n)));
      used += quota[k];
    }
    quota[remainder_to] = n - used;
    size_t pos = 0;
    for (size_t k = 0; k < fractions.size(); ++k) {
      for (size_t j = 0; j < quota[k]; ++j) assigned[k].push_back((*cls)[pos++]);
    }
  }

  std::vector<Corpus> out(fractions.size());
  for (size_t k = 0; k < fractions.size(); ++k) {
    std::sort(assigned[k].begin(), assigned[k].end());
    out[k].name = corpus.name;
    for (size_t i : assigned[k]) out[k].sentences.push_back(corpus.sentences[i]);
  }
  return out;
}

}  // namespace

SplitResult stratified_split(const Corpus& corpus, double train, double test,
                             double validation, uint64_t seed) {
  if (train <= 0.0 || test <= 0.0 || validation <= 0.0) {
    throw BadFractions("split fractions must be positive");
  }
  if (std::abs(train + test + validation - 1.0) > 1e-9) {
    throw BadFractions("split fractions must sum to 1");
  }
  auto parts =
      stratified_partition(corpus, {train, test, validation}, 0, seed);
  SplitResult r;
  r.train = std::move(parts[0]);
  r.train.name = corpus.name + "/train";
  r.test = std::move(parts[1]);
  r.test.name = corpus.name + "/test";
  r.validation = std::move(parts[2]);
  r.validation.name = corpus.name + "/validation";
  return r;
}

std::pair<Corpus, Corpus> validation_split(const Corpus& corpus,
                                           double validation_fraction,
                                           uint64_t seed) {
  if (validation_fraction <= 0.0 || validation_fraction >= 1.0) {
    throw BadFractions("validation fraction must be in (0, 1)");
  }
  auto parts = stratified_partition(
      corpus, {1.0 - validation_fraction, validation_fraction}, 0, seed);
  parts[0].name = corpus.name + "/fit";
  parts[1].name = corpus.name + "/validation";
  return {std::move(parts[0]), std::move(parts[1])};
}

SplitResult stratified_split_by_source(const Corpus& corpus, double train,
                                       double test, double validation,
                                       uint64_t seed) {
  if (train <= 0.0 || test <= 0.0 || validation <= 0.0) {
    throw BadFractions("split fractions must be positive");
  }
  if (std::abs(train + test + validation - 1.0) > 1e-9) {
    throw BadFractions("split fractions must sum to 1");
  }
  std::map<Source, Corpus> groups;
  for (const auto& s : corpus.sentences) {
    auto& g = groups[s.source];
    if (g.sentences.empty())
      g.name = corpus.name + "[" + source_to_string(s.source) + "]";
    g.sentences.push_back(s);
  }

  std::array<std::unordered_set<std::string>, 3> membership;
  for (const auto& [source, group] : groups) {
    auto parts = stratified_partition(
        group, {train, test, validation}, 0,
        seed ^ fnv1a(source_to_string(source)));
    for (size_t k = 0; k < parts.size(); ++k)
      for (const auto& s : parts[k].sentences) membership[k].insert(s.id);
  }

  SplitResult r;
  r.train.name = corpus.name + "/train";
  r.test.name = corpus.name + "/test";
  r.validation.name = corpus.name + "/validation";
  Corpus* outs[3] = {&r.train, &r.test, &r.validation};
  for (const auto& s : corpus.sentences)
    for (size_t k = 0; k < 3; ++k)
      if (membership[k].count(s.id)) {
        outs[k]->sentences.push_back(s);
        break;
      }
  return r;
}

namespace {

WclField wcl_field_from_string(const std::string& s, size_t line_no) {
  if (s == "DF") return WclField::DF;
  if (s == "VF") return WclField::VF;
  if (s == "GF") return WclField::GF;
  if (s == "RF") return WclField::RF;
  throw MalformedRecord(line_no, "unknown WCL field '" + s + "'");
}

std::string numbered_id(const char* prefix, size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%05zu", prefix, n);
  return buf;
}

void finish_prepared(Corpus& out, const std::string& path, LoadStats* stats,
                     const LoadStats& local) {
  if (out.sentences.empty()) {
    throw EmptyCorpus("no usable sentences in " + path);
  }
  check_unique_ids(out);
  if (stats) *stats = local;
}

}  // namespace

Corpus prepare_wcl(const std::string& path, LoadStats* stats) {
  std::ifstream in = open_or_throw(path);
  Corpus out;
  out.name = "WCL";
  LoadStats local;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    ++local.lines;
    if (trim(line).empty()) continue;
    auto cols = split_on(line, '\t');
    if (cols.size() != 2) {
      throw MalformedRecord(line_no, "expected '<fields>\\t<text>'");
    }
    RawWclRecord rec;
    rec.sentence_text = trim(cols[1]);
    const std::string fields = trim(cols[0]);
    if (fields != "-" && !fields.empty()) {
      for (const std::string& f : split_on(fields, ',')) {
        rec.fields_present.insert(wcl_field_from_string(trim(f), line_no));
      }
    }
    LabeledSentence s;
    s.id = numbered_id("wcl", ++local.records);
    s.text = rec.sentence_text;
    s.tokens = split_ws(s.text);
    s.label = derive_wcl_label(rec.fields_present);
    s.source = Source::WCL;
    if (s.tokens.size() < kMinSentenceTokens) {
      ++local.skipped_short;
      continue;
    }
    out.sentences.push_back(std::move(s));
  }
  finish_prepared(out, path, stats, local);
  return out;
}

Corpus prepare_w00(const std::string& path, LoadStats* stats) {
  std::ifstream in = open_or_throw(path);
  Corpus out;
  out.name = "W00";
  LoadStats local;
  std::string line;
  size_t line_no = 0;
  RawW00Record rec;

  auto flush = [&]() {
    if (rec.tokens.empty()) return;
    LabeledSentence s;
    s.id = numbered_id("w00", ++local.records);
    s.tokens = rec.tokens;
    std::string text;
    for (size_t i = 0; i < rec.tokens.size(); ++i) {
      if (i) text += ' ';
      text += rec.tokens[i];
    }
    s.text = std::move(text);
    s.label = derive_w00_label(rec.token_labels);
    s.source = Source::W00;
    rec = RawW00Record{};
    if (s.tokens.size() < kMinSentenceTokens) {
      ++local.skipped_short;
      return;
    }
    out.sentences.push_back(std::move(s));
  };

  while (std::getline(in, line)) {
    ++line_no;
    ++local.lines;
    if (trim(line).empty()) {
      flush();
      continue;
    }
    auto cols = split_on(line, '\t');
    if (cols.size() != 2) {
      throw MalformedRecord(line_no, "expected '<token>\\t<tag>'");
    }
    const std::string tag = trim(cols[1]);
    W00Tag t;
    if (tag == "T") {
      t = W00Tag::T;
    } else if (tag == "D") {
      t = W00Tag::D;
    } else if (tag == "O") {
      t = W00Tag::O;
    } else {
      throw MalformedRecord(line_no, "unknown W00 tag '" + tag + "'");
    }
    rec.tokens.push_back(trim(cols[0]));
    rec.token_labels.push_back(t);
  }
  flush();
  finish_prepared(out, path, stats, local);
  return out;
}

Corpus prepare_wfmall(const std::string& path, LoadStats* stats) {
  std::ifstream in = open_or_throw(path);
  Corpus out;
  out.name = "WFMALL";
  LoadStats local;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    ++local.lines;
    if (trim(line).empty()) continue;
    auto cols = split_on(line, '\t');
    if (cols.size() != 2) {
      throw MalformedRecord(line_no, "expected '<0|1>\\t<text>'");
    }
    const std::string lab = trim(cols[0]);
    if (lab != "0" && lab != "1") {
      throw MalformedRecord(line_no, "label must be 0 or 1");
    }
    LabeledSentence s;
    s.id = numbered_id("wfmall", ++local.records);
    s.text = trim(cols[1]);
    s.tokens = split_ws(s.text);
    s.label =
        lab == "1" ? SentenceLabel::Definition : SentenceLabel::NonDefinition;
    s.source = Source::WFMALL;
    if (s.tokens.size() < kMinSentenceTokens) {
      ++local.skipped_short;
      continue;
    }
    out.sentences.push_back(std::move(s));
  }
  finish_prepared(out, path, stats, local);
  return out;
}

}  // namespace defex::corpus
