#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace defex::corpus {

enum class SentenceLabel { Definition, NonDefinition };

enum class Source { WCL, W00, WFMALL, SYNTHETIC };

std::string source_to_string(Source s);
Source source_from_string(const std::string& s);

// Annotated parts of a WCL sentence: definiendum, definitor, definiens, rest.
enum class WclField { DF, VF, GF, RF };

// Per-token W00 tags: term part, definition part, neither.
enum class W00Tag { T, D, O };

struct RawWclRecord {
  std::string sentence_text;
  std::set<WclField> fields_present;
};

struct RawW00Record {
  std::vector<std::string> tokens;
  std::vector<W00Tag> token_labels;
};

struct LabeledSentence {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
  SentenceLabel label = SentenceLabel::NonDefinition;
  Source source = Source::SYNTHETIC;
};

struct Corpus {
  std::string name;
  std::vector<LabeledSentence> sentences;

  size_t definition_count() const;
  size_t nondefinition_count() const;
  size_t size() const { return sentences.size(); }
};

// A sentence is a definition iff the definiendum, definitor, and definiens
// fields are all present.
SentenceLabel derive_wcl_label(const std::set<WclField>& fields_present);

// A sentence is a non-definition iff every token is tagged O.
// Throws EmptyTokenList on an empty list.
SentenceLabel derive_w00_label(const std::vector<W00Tag>& token_labels);

// Sentences shorter than this are dropped by all file loaders, matching the
// hygiene of the source corpora.
constexpr size_t kMinSentenceTokens = 3;

struct LoadStats {
  size_t lines = 0;
  size_t records = 0;
  size_t skipped_short = 0;
};

// Normalized corpus file: UTF-8 JSON Lines with keys id, text, tokens
// (optional; whitespace split of text when absent), label (0/1), source.
Corpus load_jsonl(const std::string& path, const std::string& name,
                  LoadStats* stats = nullptr);

Corpus load_wfmall(const std::string& path, LoadStats* stats = nullptr);

void save_jsonl(const Corpus& corpus, const std::string& path);

// Concatenates corpora; every id is prefixed with its corpus name so ids stay
// unique ("WCL/s1", "W00/s1"). Collisions remaining after prefixing get a
// numeric suffix.
Corpus join_corpora(const std::vector<Corpus>& corpora,
                    const std::string& name);

struct SplitResult {
  Corpus train;
  Corpus test;
  Corpus validation;
};

// Per-class shuffled partitioning. Test and validation get floor(fraction *
// class_count) sentences per class, the remainder goes to train. Relative
// sentence order within each split follows the input corpus. Deterministic
// for a given seed.
SplitResult stratified_split(const Corpus& corpus, double train, double test,
                             double validation, uint64_t seed);

// Two-way variant used for carving a validation slice off a training corpus.
std::pair<Corpus, Corpus> validation_split(const Corpus& corpus,
                                           double validation_fraction,
                                           uint64_t seed);

// Stratifies by (source, label) jointly: each source group is split per class
// on its own, so joined corpora keep their mixing proportions in every part.
// Every source group must contain both classes.
SplitResult stratified_split_by_source(const Corpus& corpus, double train,
                                       double test, double validation,
                                       uint64_t seed);

// --- adapters for the distributed dataset layouts (see README) ---

// One record per line: "<fields>\t<text>" where <fields> is a comma-separated
// subset of DF,VF,GF,RF ("-" for none).
Corpus prepare_wcl(const std::string& path, LoadStats* stats = nullptr);

// Token-per-line blocks: "<token>\t<tag>" with tag in {T,D,O}, blank line
// between sentences.
Corpus prepare_w00(const std::string& path, LoadStats* stats = nullptr);

// One record per line: "<0|1>\t<text>".
Corpus prepare_wfmall(const std::string& path, LoadStats* stats = nullptr);

}  // namespace defex::corpus
