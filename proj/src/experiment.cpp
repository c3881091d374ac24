#include "defex/experiment.hpp"

#include <cstdio>
#include <ostream>
#include <unordered_map>

#include "defex/errors.hpp"
#include "defex/util.hpp"
#include "json.hpp"

namespace defex::experiment {

using nlohmann::json;

const DataSet& ExperimentContext::dataset(const std::string& name) const {
  auto it = datasets.find(name);
  if (it == datasets.end()) throw Error("unknown dataset '" + name + "'");
  return it->second;
}

const embedding::VectorStore& ExperimentContext::store(
    const std::string& name) const {
  auto it = stores.find(name);
  if (it == stores.end()) throw Error("unknown vector store '" + name + "'");
  return it->second;
}

void load_dataset(ExperimentContext& ctx, const std::string& name,
                  const std::string& corpus_path,
                  const std::string& parses_path) {
  DataSet data;
  data.corpus = corpus::load_jsonl(corpus_path, name);
  data.parsed = parse::read_parsed_corpus(parses_path, data.corpus);
  ctx.datasets[name] = std::move(data);
}

void load_store(ExperimentContext& ctx, const std::string& name,
                const std::string& vectors_path) {
  ctx.stores[name] = embedding::load_text_vectors(vectors_path);
}

RunSpec runspec_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("run spec is not valid JSON: ") + e.what());
  }
  try {
    RunSpec s;
    s.train_corpus = j.at("train").get<std::string>();
    s.test_corpus = j.value("test", s.train_corpus);
    s.arch = net::arch_from_string(j.value("arch", "cnn"));
    s.repr = repr::repr_kind_from_string(j.value("repr", "m"));
    s.embedding = j.value("embedding", "");
    s.seed = j.value("seed", uint64_t{0});
    s.lowercase = j.value("lowercase", false);
    s.stratify_by_source = j.value("stratify_by_source", false);
    s.train_fraction = j.value("train_fraction", 0.70);
    s.test_fraction = j.value("test_fraction", 0.25);
    s.validation_fraction = j.value("validation_fraction", 0.05);
    if (j.contains("hyper")) {
      const json& h = j["hyper"];
      net::HyperParams& hp = s.hyper;
      hp.num_filters = h.value("num_filters", hp.num_filters);
      hp.kernel_rows = h.value("kernel_rows", hp.kernel_rows);
      hp.pool_size = h.value("pool_size", hp.pool_size);
      hp.lstm_hidden = h.value("lstm_hidden", hp.lstm_hidden);
      hp.dropout_rate = h.value("dropout_rate", hp.dropout_rate);
      hp.learning_rate = h.value("learning_rate", hp.learning_rate);
      hp.batch_size = h.value("batch_size", hp.batch_size);
      hp.epochs = h.value("epochs", hp.epochs);
      if (h.value("optimizer", "adam") == "sgd")
        hp.optimizer = net::Optimizer::Sgd;
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(std::string("bad run spec: ") + e.what());
  }
}

uint64_t dataset_hash(const DataSet& data) {
  uint64_t h = fnv1a(data.corpus.name);
  for (const auto& p : data.parsed) {
    h = fnv1a(p.base.id, h);
    h = fnv1a(p.base.label == corpus::SentenceLabel::Definition ? "1" : "0", h);
    for (const auto& tok : p.base.tokens) h = fnv1a(tok, h);
    for (const auto& e : p.edges) {
      h = fnv1a(std::to_string(e.head_index), h);
      h = fnv1a(std::to_string(e.dependent_index), h);
      h = fnv1a(e.label, h);
    }
  }
  return h;
}

std::string run_manifest(const ExperimentContext& ctx, const RunSpec& spec) {
  const DataSet& train = ctx.dataset(spec.train_corpus);
  const DataSet& test = ctx.dataset(spec.test_corpus);
  json m;
  m["train_corpus"] = {{"name", spec.train_corpus},
                       {"hash", to_hex(dataset_hash(train))},
                       {"sentences", train.corpus.size()}};
  m["test_corpus"] = {{"name", spec.test_corpus},
                      {"hash", to_hex(dataset_hash(test))},
                      {"sentences", test.corpus.size()}};
  m["embedding"] = json::parse(embedding::store_manifest(ctx.store(spec.embedding)));
  m["architecture"] = net::arch_to_string(spec.arch);
  m["representation"] = repr::repr_kind_to_string(spec.repr);
  m["lowercase"] = spec.lowercase;
  m["seed"] = spec.seed;
  m["hyper"] = json::parse(net::hyper_to_json_text(spec.hyper));
  return m.dump();
}

namespace {

std::vector<parse::ParsedSentence> gather_parses(
    const DataSet& data, const corpus::Corpus& part) {
  std::unordered_map<std::string, const parse::ParsedSentence*> by_id;
  by_id.reserve(data.parsed.size());
  for (const auto& p : data.parsed) by_id[p.base.id] = &p;
  std::vector<parse::ParsedSentence> out;
  out.reserve(part.sentences.size());
  for (const auto& s : part.sentences) out.push_back(*by_id.at(s.id));
  return out;
}

eval::EvalReport evaluate_on(const net::Model& model,
                             const std::vector<repr::Example>& examples,
                             const RunSpec& spec) {
  std::vector<double> probs;
  std::vector<corpus::SentenceLabel> gold;
  probs.reserve(examples.size());
  gold.reserve(examples.size());
  for (const auto& ex : examples) {
    probs.push_back(net::forward(model, ex.first));
    gold.push_back(ex.second);
  }
  eval::EvalReport report;
  report.model = net::arch_to_string(spec.arch) + "_" +
                 repr::repr_kind_to_string(spec.repr);
  report.train_corpus = spec.train_corpus;
  report.test_corpus = spec.test_corpus;
  report.cm = eval::confusion(probs, gold);
  report.scores = eval::metrics(report.cm);
  return report;
}

RunResult finish_run(const ExperimentContext& ctx, const RunSpec& spec,
                     net::Model model, net::History history,
                     const repr::ConfigPtr& config,
                     const std::vector<repr::Example>& test_examples) {
  RunResult result;
  result.report = evaluate_on(model, test_examples, spec);
  result.history = std::move(history);
  result.model = std::move(model);
  result.config = config;
  result.manifest_json = run_manifest(ctx, spec);
  return result;
}

}  // namespace

RunResult run_in_domain(const ExperimentContext& ctx, const RunSpec& spec,
                        std::ostream* log) {
  const DataSet& data = ctx.dataset(spec.train_corpus);
  const embedding::VectorStore& store = ctx.store(spec.embedding);

  auto split = spec.stratify_by_source
                   ? corpus::stratified_split_by_source(
                         data.corpus, spec.train_fraction, spec.test_fraction,
                         spec.validation_fraction, spec.seed)
                   : corpus::stratified_split(
                         data.corpus, spec.train_fraction, spec.test_fraction,
                         spec.validation_fraction, spec.seed);

  auto train_parses = gather_parses(data, split.train);
  auto test_parses = gather_parses(data, split.test);
  auto val_parses = gather_parses(data, split.validation);

  auto config = repr::compute_config(train_parses, spec.repr, store.dimension,
                                     spec.lowercase);
  auto train_ex = repr::dataset_tensors(train_parses, store, config,
                                        repr::TensorMode::Train);
  repr::TruncationStats stats;
  auto val_ex = repr::dataset_tensors(val_parses, store, config,
                                      repr::TensorMode::Inference, &stats);
  auto test_ex = repr::dataset_tensors(test_parses, store, config,
                                       repr::TensorMode::Inference, &stats);

  net::HyperParams hyper = spec.hyper;
  hyper.seed = spec.seed;
  net::Model model = net::build_model(spec.arch, config->rows(),
                                      config->row_width(), hyper);
  net::History history = net::train(model, train_ex, val_ex, log);
  RunResult result = finish_run(ctx, spec, std::move(model),
                                std::move(history), config, test_ex);
  result.report.train_corpus = split.train.name;
  result.report.test_corpus = split.test.name;
  return result;
}

FitResult fit_dataset(const DataSet& data, const embedding::VectorStore& store,
                      const RunSpec& spec, std::ostream* log) {
  auto [fit_corpus, val_corpus] = corpus::validation_split(
      data.corpus, spec.validation_fraction, spec.seed);
  auto fit_parses = gather_parses(data, fit_corpus);
  auto val_parses = gather_parses(data, val_corpus);

  auto config = repr::compute_config(data.parsed, spec.repr, store.dimension,
                                     spec.lowercase);
  auto fit_ex = repr::dataset_tensors(fit_parses, store, config,
                                      repr::TensorMode::Train);
  auto val_ex = repr::dataset_tensors(val_parses, store, config,
                                      repr::TensorMode::Inference);

  net::HyperParams hyper = spec.hyper;
  hyper.seed = spec.seed;
  FitResult result;
  result.model = net::build_model(spec.arch, config->rows(),
                                  config->row_width(), hyper);
  result.history = net::train(result.model, fit_ex, val_ex, log);
  result.config = config;
  return result;
}

eval::EvalReport evaluate_dataset(const net::Model& model,
                                  const repr::ConfigPtr& config,
                                  const DataSet& data,
                                  const embedding::VectorStore& store,
                                  const std::string& model_label,
                                  const std::string& train_label) {
  repr::TruncationStats stats;
  auto examples = repr::dataset_tensors(data.parsed, store, config,
                                        repr::TensorMode::Inference, &stats);
  std::vector<double> probs;
  std::vector<corpus::SentenceLabel> gold;
  probs.reserve(examples.size());
  gold.reserve(examples.size());
  for (const auto& ex : examples) {
    probs.push_back(net::forward(model, ex.first));
    gold.push_back(ex.second);
  }
  eval::EvalReport report;
  report.model = model_label;
  report.train_corpus = train_label;
  report.test_corpus = data.corpus.name;
  report.cm = eval::confusion(probs, gold);
  report.scores = eval::metrics(report.cm);
  return report;
}

RunResult run_cross_domain(const ExperimentContext& ctx, const RunSpec& spec,
                           std::ostream* log) {
  if (spec.train_corpus == spec.test_corpus)
    throw Error("cross-domain run requires distinct train and test corpora");
  const DataSet& train_data = ctx.dataset(spec.train_corpus);
  const DataSet& test_data = ctx.dataset(spec.test_corpus);
  const embedding::VectorStore& store = ctx.store(spec.embedding);

  // The shape contract comes from the whole training corpus; test sentences
  // that exceed it are truncated during tensor construction.
  FitResult fit = fit_dataset(train_data, store, spec, log);
  repr::TruncationStats stats;
  auto test_ex = repr::dataset_tensors(test_data.parsed, store, fit.config,
                                       repr::TensorMode::Inference, &stats);
  if (log && (stats.truncated_sentences || stats.truncated_edge_lists))
    *log << "truncated " << stats.truncated_sentences << " sentences, "
         << stats.truncated_edge_lists << " edge lists to the train shape\n";
  return finish_run(ctx, spec, std::move(fit.model), std::move(fit.history),
                    fit.config, test_ex);
}

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

GridResult run_grid(const ExperimentContext& ctx,
                    const std::vector<RunSpec>& specs, std::ostream* log) {
  if (specs.empty()) throw Error("grid requires at least one run spec");
  GridResult result;
  result.csv =
      "train,test,arch,repr,embedding,seed,status,accuracy,precision,recall,"
      "f1,error\n";
  char buf[128];
  for (const auto& spec : specs) {
    GridCell cell;
    cell.spec = spec;
    std::string row = csv_quote(spec.train_corpus) + "," +
                      csv_quote(spec.test_corpus) + "," +
                      net::arch_to_string(spec.arch) + "," +
                      repr::repr_kind_to_string(spec.repr) + "," +
                      csv_quote(spec.embedding) + "," +
                      std::to_string(spec.seed) + ",";
    try {
      RunResult run = spec.train_corpus == spec.test_corpus
                          ? run_in_domain(ctx, spec, log)
                          : run_cross_domain(ctx, spec, log);
      cell.ok = true;
      cell.report = run.report;
      const auto& m = run.report.scores;
      std::snprintf(buf, sizeof(buf), "ok,%.4f,%.4f,%.4f,%.4f,", m.accuracy,
                    m.precision, m.recall, m.f1);
      row += buf;
    } catch (const std::exception& e) {
      cell.error = e.what();
      row += "error,,,,," + csv_quote(cell.error);
      if (log) *log << "grid cell failed: " << cell.error << "\n";
    }
    result.csv += row + "\n";
    result.cells.push_back(std::move(cell));
  }
  return result;
}

ScanResult scan_documents(const net::Model& model,
                          const std::vector<parse::ParsedDocument>& documents,
                          const embedding::VectorStore& store,
                          const repr::ConfigPtr& config) {
  ScanResult result;
  result.total_documents = static_cast<int>(documents.size());
  for (const auto& doc : documents) {
    DocumentCount count;
    count.id = doc.id;
    count.total_sentences = static_cast<int>(doc.sentences.size());
    for (const auto& sentence : doc.sentences) {
      auto tensor = repr::build_input(sentence, store, config,
                                      repr::TensorMode::Inference);
      if (net::forward(model, tensor) >= 0.5) ++count.definition_sentences;
    }
    result.total_sentences += count.total_sentences;
    result.definition_sentences += count.definition_sentences;
    if (count.definition_sentences > 0) ++result.documents_with_definition;
    result.per_document.push_back(std::move(count));
  }
  return result;
}

std::string scan_to_json(const ScanResult& result) {
  json docs = json::array();
  for (const auto& d : result.per_document)
    docs.push_back({{"id", d.id},
                    {"definition_sentences", d.definition_sentences},
                    {"total_sentences", d.total_sentences}});
  json j;
  j["documents"] = docs;
  j["documents_with_definition"] = result.documents_with_definition;
  j["total_documents"] = result.total_documents;
  j["definition_sentences"] = result.definition_sentences;
  j["total_sentences"] = result.total_sentences;
  j["document_ratio"] =
      format_percent(result.documents_with_definition, result.total_documents);
  j["sentence_ratio"] =
      format_percent(result.definition_sentences, result.total_sentences);
  return j.dump();
}

}  // namespace defex::experiment
