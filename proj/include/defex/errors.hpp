#pragma once

#include <stdexcept>
#include <string>

namespace defex {

// Base class for all toolkit errors. Data/format problems and contract
// violations derive from this; plain std::logic_error is reserved for
// internal programming mistakes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- corpus ---
class MalformedRecord : public Error {
 public:
  MalformedRecord(size_t line_no, const std::string& what)
      : Error("malformed record at line " + std::to_string(line_no) + ": " +
              what),
        line_no(line_no) {}
  size_t line_no;
};

class EmptyCorpus : public Error {
 public:
  explicit EmptyCorpus(const std::string& what) : Error(what) {}
};

class EmptyTokenList : public Error {
 public:
  EmptyTokenList() : Error("token label list is empty") {}
};

class BadFractions : public Error {
 public:
  explicit BadFractions(const std::string& what) : Error(what) {}
};

class SingleClassCorpus : public Error {
 public:
  explicit SingleClassCorpus(const std::string& what) : Error(what) {}
};

// --- parse ---
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

class MissingParse : public ParseError {
 public:
  explicit MissingParse(const std::string& id)
      : ParseError("no parse found for sentence id '" + id + "'") {}
};

class TokenCountMismatch : public ParseError {
 public:
  TokenCountMismatch(const std::string& id, size_t corpus_n, size_t parse_n)
      : ParseError("token count mismatch for sentence id '" + id +
                   "': corpus has " + std::to_string(corpus_n) +
                   ", parse has " + std::to_string(parse_n)) {}
};

class CyclicParse : public ParseError {
 public:
  explicit CyclicParse(const std::string& id)
      : ParseError("dependency edges of sentence '" + id +
                   "' do not form a tree (cycle or unreachable node)") {}
};

class MalformedParse : public ParseError {
 public:
  explicit MalformedParse(const std::string& what) : ParseError(what) {}
};

// --- embedding ---
class DimensionMismatch : public Error {
 public:
  DimensionMismatch(size_t line_no, const std::string& what)
      : Error("dimension mismatch at line " + std::to_string(line_no) + ": " +
              what),
        line_no(line_no) {}
  size_t line_no;
};

class MalformedLine : public Error {
 public:
  MalformedLine(size_t line_no, const std::string& what)
      : Error("malformed line " + std::to_string(line_no) + ": " + what),
        line_no(line_no) {}
  size_t line_no;
};

// --- representation ---
class LengthMismatch : public Error {
 public:
  explicit LengthMismatch(const std::string& what) : Error(what) {}
};

class UnknownLabel : public Error {
 public:
  explicit UnknownLabel(const std::string& label)
      : Error("dependency label '" + label + "' not in inventory"),
        label(label) {}
  std::string label;
};

class SentenceTooLong : public Error {
 public:
  SentenceTooLong(const std::string& id, size_t len, size_t n)
      : Error("sentence '" + id + "' has " + std::to_string(len) +
              " tokens, padded length is " + std::to_string(n)) {}
};

class TooManyEdges : public Error {
 public:
  TooManyEdges(const std::string& id, size_t count, size_t d_max)
      : Error("sentence '" + id + "' has " + std::to_string(count) +
              " edges, padded edge count is " + std::to_string(d_max)) {}
};

// --- network ---
class ShapeMismatch : public Error {
 public:
  explicit ShapeMismatch(const std::string& what) : Error(what) {}
};

class EmptyTrainingSet : public Error {
 public:
  EmptyTrainingSet() : Error("training set is empty") {}
};

class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(const std::string& what) : Error(what) {}
};

// --- evaluation ---
class EmptyEvaluation : public Error {
 public:
  EmptyEvaluation() : Error("confusion matrix has zero total") {}
};

}  // namespace defex
