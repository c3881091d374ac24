#include "defex/parse.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <unordered_map>

#include "defex/errors.hpp"
#include "defex/util.hpp"

namespace defex::parse {

int LabelInventory::index_of(const std::string& label) const {
  auto it = std::lower_bound(labels.begin(), labels.end(), label);
  if (it != labels.end() && *it == label) {
    return static_cast<int>(it - labels.begin());
  }
  // Inventories built by collect_label_inventory are sorted; fall back to a
  // linear scan for hand-built ones.
  auto lin = std::find(labels.begin(), labels.end(), label);
  return lin == labels.end() ? -1 : static_cast<int>(lin - labels.begin());
}

namespace {

// Children adjacency over edges; indices validated against token count.
std::vector<std::vector<int>> adjacency(const ParsedSentence& s) {
  const int n = static_cast<int>(s.base.tokens.size());
  const std::string& id = s.base.id;
  if (s.root_index < 0 || s.root_index >= n) {
    throw MalformedParse("sentence '" + id + "': root index out of range");
  }
  std::vector<std::vector<int>> children(n);
  std::vector<int> incoming(n, 0);
  for (const DependencyEdge& e : s.edges) {
    if (e.head_index < 0 || e.head_index >= n || e.dependent_index < 0 ||
        e.dependent_index >= n) {
      throw MalformedParse("sentence '" + id + "': edge index out of range");
    }
    if (e.head_index == e.dependent_index) {
      throw CyclicParse(id);
    }
    if (e.label.empty()) {
      throw MalformedParse("sentence '" + id + "': empty dependency label");
    }
    if (++incoming[e.dependent_index] > 1) {
      throw MalformedParse("sentence '" + id +
                           "': node has two incoming edges");
    }
    children[e.head_index].push_back(e.dependent_index);
  }
  if (incoming[s.root_index] > 0) {
    throw CyclicParse(id);
  }
  return children;
}

// Breadth-first node depths from the root; -1 for unreachable nodes.
std::vector<int> node_depths(const ParsedSentence& s) {
  auto children = adjacency(s);
  std::vector<int> depth(children.size(), -1);
  std::deque<int> queue{s.root_index};
  depth[s.root_index] = 0;
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    for (int v : children[u]) {
      depth[v] = depth[u] + 1;
      queue.push_back(v);
    }
  }
  for (const DependencyEdge& e : s.edges) {
    if (depth[e.head_index] < 0 || depth[e.dependent_index] < 0) {
      throw CyclicParse(s.base.id);
    }
  }
  return depth;
}

}  // namespace

void validate_tree(const ParsedSentence& sentence) { node_depths(sentence); }

ParsedSentence compute_depths(ParsedSentence sentence) {
  auto depth = node_depths(sentence);
  for (DependencyEdge& e : sentence.edges) {
    e.depth = depth[e.head_index];
  }
  return sentence;
}

namespace {

struct RawBlock {
  std::string id;
  std::vector<std::string> forms;
  std::vector<int> heads;          // 1-based; 0 = root attachment
  std::vector<std::string> labels; // parallel to forms
  size_t line_no = 0;              // first line of the block
};

// Converts a raw block into an unvalidated ParsedSentence skeleton.
ParsedSentence block_to_sentence(const RawBlock& b) {
  ParsedSentence s;
  s.base.id = b.id;
  s.base.tokens = b.forms;
  int root = -1;
  for (size_t i = 0; i < b.forms.size(); ++i) {
    const int head = b.heads[i];
    if (head == 0) {
      if (root >= 0) {
        throw MalformedParse("sentence '" + b.id + "': multiple roots");
      }
      root = static_cast<int>(i);
      continue;
    }
    DependencyEdge e;
    e.head_index = head - 1;
    e.dependent_index = static_cast<int>(i);
    e.label = b.labels[i];
    s.edges.push_back(std::move(e));
  }
  if (root < 0) {
    throw MalformedParse("sentence '" + b.id + "': no root attachment");
  }
  s.root_index = root;
  return s;
}

// Streams blocks out of a parse file, invoking sink(block) per sentence.
// on_newdoc (may be null) fires for "# newdoc id = ..." lines.
template <typename BlockFn, typename DocFn>
void scan_blocks(const std::string& path, BlockFn sink, DocFn on_newdoc) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open parse file: " + path);
  std::string line;
  size_t line_no = 0;
  RawBlock block;
  bool in_block = false;
  int expected_index = 1;

  auto flush = [&]() {
    if (!in_block) return;
    if (block.forms.empty()) {
      throw MalformedParse("empty parse block near line " +
                           std::to_string(block.line_no));
    }
    sink(block);
    block = RawBlock{};
    in_block = false;
    expected_index = 1;
  };

  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) {
      flush();
      continue;
    }
    if (t[0] == '#') {
      const std::string body = trim(t.substr(1));
      if (body.rfind("newdoc id =", 0) == 0) {
        flush();
        on_newdoc(trim(body.substr(std::string("newdoc id =").size())));
      } else if (body.rfind("id =", 0) == 0) {
        flush();
        block.id = trim(body.substr(4));
        block.line_no = line_no;
        in_block = true;
      }
      // other comments ignored
      continue;
    }
    auto cols = split_ws(t);
    if (cols.size() != 4) {
      throw MalformedParse("line " + std::to_string(line_no) +
                           ": expected 4 columns (index form head label)");
    }
    int index, head;
    try {
      index = std::stoi(cols[0]);
      head = std::stoi(cols[2]);
    } catch (const std::exception&) {
      throw MalformedParse("line " + std::to_string(line_no) +
                           ": non-numeric index or head");
    }
    if (!in_block) {
      block.line_no = line_no;
      in_block = true;
    }
    if (index != expected_index) {
      throw MalformedParse("line " + std::to_string(line_no) +
                           ": token indices must count up from 1");
    }
    ++expected_index;
    if (head < 0) {
      throw MalformedParse("line " + std::to_string(line_no) +
                           ": negative head index");
    }
    block.forms.push_back(cols[1]);
    block.heads.push_back(head);
    block.labels.push_back(cols[3]);
  }
  flush();
}

}  // namespace

std::vector<ParsedSentence> read_parsed_corpus(const std::string& path,
                                               const corpus::Corpus& corpus) {
  std::unordered_map<std::string, ParsedSentence> by_id;
  scan_blocks(
      path,
      [&](const RawBlock& b) {
        if (b.id.empty()) {
          throw MalformedParse("parse block near line " +
                               std::to_string(b.line_no) +
                               " has no '# id =' line");
        }
        ParsedSentence s = block_to_sentence(b);
        if (!by_id.emplace(b.id, std::move(s)).second) {
          throw MalformedParse("duplicate parse for sentence id '" + b.id +
                               "'");
        }
      },
      [](const std::string&) {});

  std::vector<ParsedSentence> out;
  out.reserve(corpus.sentences.size());
  for (const corpus::LabeledSentence& sent : corpus.sentences) {
    auto it = by_id.find(sent.id);
    if (it == by_id.end()) throw MissingParse(sent.id);
    ParsedSentence s = it->second;
    if (s.base.tokens.size() != sent.tokens.size()) {
      throw TokenCountMismatch(sent.id, sent.tokens.size(),
                               s.base.tokens.size());
    }
    s.base = sent;
    out.push_back(compute_depths(std::move(s)));
  }
  return out;
}

LabelInventory collect_label_inventory(
    const std::vector<ParsedSentence>& sentences) {
  std::set<std::string> labels;
  for (const ParsedSentence& s : sentences) {
    for (const DependencyEdge& e : s.edges) labels.insert(e.label);
  }
  LabelInventory inv;
  inv.labels.assign(labels.begin(), labels.end());
  return inv;
}

std::vector<ParsedDocument> read_parsed_documents(const std::string& path) {
  std::vector<ParsedDocument> docs;
  size_t ordinal = 0;
  scan_blocks(
      path,
      [&](const RawBlock& b) {
        if (docs.empty()) {
          docs.push_back(ParsedDocument{"doc_1", {}});
        }
        RawBlock copy = b;
        if (copy.id.empty()) {
          copy.id = docs.back().id + "/" + std::to_string(++ordinal);
        }
        ParsedSentence s = block_to_sentence(copy);
        s.base.text = [&] {
          std::string text;
          for (size_t i = 0; i < s.base.tokens.size(); ++i) {
            if (i) text += ' ';
            text += s.base.tokens[i];
          }
          return text;
        }();
        docs.back().sentences.push_back(compute_depths(std::move(s)));
      },
      [&](const std::string& doc_id) {
        docs.push_back(ParsedDocument{doc_id, {}});
        ordinal = 0;
      });
  return docs;
}

}  // namespace defex::parse
