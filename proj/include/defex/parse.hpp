#pragma once

#include <string>
#include <vector>

#include "defex/corpus.hpp"

namespace defex::parse {

// Typed head -> dependent relation from a dependency tree. depth is the
// number of edges between the tree root and the head; filled in by
// compute_depths (-1 until then).
struct DependencyEdge {
  int head_index = 0;
  int dependent_index = 0;
  std::string label;
  int depth = -1;
};

struct ParsedSentence {
  corpus::LabeledSentence base;
  std::vector<DependencyEdge> edges;
  int root_index = 0;
};

struct LabelInventory {
  std::vector<std::string> labels;

  size_t size() const { return labels.size(); }
  // Index of a label, or -1 when absent.
  int index_of(const std::string& label) const;
};

// Checks that edges form a tree rooted at root_index over a subset of token
// indices: indices in range, no self-loops, at most one incoming edge per
// node, every edge reachable from the root, no cycles. Throws CyclicParse or
// MalformedParse.
void validate_tree(const ParsedSentence& sentence);

// Assigns every edge the breadth-first distance of its head from the root;
// edges leaving the root get depth 0. Idempotent.
ParsedSentence compute_depths(ParsedSentence sentence);

// Parse file: CoNLL-style blocks, one token per line with columns
// (index, form, head_index, dependency_label), 1-based indices, head 0 for
// the root attachment, blank line between sentences, and the sentence id on
// a comment line "# id = <corpus id>". Returns one ParsedSentence per corpus
// sentence, in corpus order, with depths computed.
std::vector<ParsedSentence> read_parsed_corpus(const std::string& path,
                                               const corpus::Corpus& corpus);

LabelInventory collect_label_inventory(
    const std::vector<ParsedSentence>& sentences);

// Document stream for the scan protocol: same block format, with documents
// delimited by "# newdoc id = <doc id>" comment lines. Sentences are
// unlabeled; ids default to <doc>/<ordinal> when no "# id" line is present.
struct ParsedDocument {
  std::string id;
  std::vector<ParsedSentence> sentences;
};

std::vector<ParsedDocument> read_parsed_documents(const std::string& path);

}  // namespace defex::parse
