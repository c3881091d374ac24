#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "defex/errors.hpp"
#include "defex/experiment.hpp"
#include "defex/util.hpp"
#include "support/synthetic.hpp"
#include "support/testutil.hpp"

using namespace defex;
using namespace defex::experiment;
using defex::testsupport::make_synthetic;
using defex::testsupport::SyntheticData;
using defex::testsupport::SyntheticOptions;
using defex::testutil::TempDir;

namespace {

RunSpec quick_spec(const std::string& corpus_name, repr::ReprKind repr,
                   net::ArchKind arch = net::ArchKind::CNN) {
  RunSpec spec;
  spec.train_corpus = corpus_name;
  spec.test_corpus = corpus_name;
  spec.arch = arch;
  spec.repr = repr;
  spec.embedding = "toy";
  spec.seed = 11;
  spec.hyper.num_filters = 8;
  spec.hyper.kernel_rows = 2;
  spec.hyper.lstm_hidden = 8;
  spec.hyper.dropout_rate = 0.0;
  spec.hyper.epochs = 6;
  spec.hyper.learning_rate = 5e-3;
  spec.hyper.seed = 11;
  return spec;
}

ExperimentContext synthetic_context(int sentences = 240, uint64_t seed = 5) {
  ExperimentContext ctx;
  SyntheticOptions opts;
  opts.sentences = sentences;
  opts.seed = seed;
  opts.domain = "alpha";
  SyntheticData data = make_synthetic(opts);
  ctx.datasets["alpha"] = DataSet{data.corpus, data.parsed};
  ctx.stores["toy"] = data.store;
  return ctx;
}

}  // namespace

TEST_CASE("runspec parsing applies defaults and overrides") {
  RunSpec spec = runspec_from_json_text(R"({
    "train": "WCL", "test": "W00", "arch": "cblstm", "repr": "mld",
    "embedding": "fasttext", "seed": 7,
    "hyper": {"epochs": 3, "num_filters": 12}
  })");
  CHECK(spec.train_corpus == "WCL");
  CHECK(spec.test_corpus == "W00");
  CHECK(spec.arch == net::ArchKind::CBLSTM);
  CHECK(spec.repr == repr::ReprKind::MLD);
  CHECK(spec.embedding == "fasttext");
  CHECK(spec.seed == 7);
  CHECK(spec.hyper.epochs == 3);
  CHECK(spec.hyper.num_filters == 12);
  CHECK(spec.hyper.batch_size == 32);
  CHECK(spec.hyper.pool_size == 2);
  CHECK(spec.train_fraction == 0.70);

  RunSpec in_domain = runspec_from_json_text(R"({"train": "X"})");
  CHECK(in_domain.test_corpus == "X");
  CHECK(in_domain.arch == net::ArchKind::CNN);
  CHECK(in_domain.repr == repr::ReprKind::M);

  CHECK_THROWS_AS(runspec_from_json_text("{"), Error);
  CHECK_THROWS_AS(runspec_from_json_text(R"({"arch": "vgg"})"), Error);
}

TEST_CASE("context accessors name their misses") {
  ExperimentContext ctx = synthetic_context(40);
  CHECK(ctx.dataset("alpha").corpus.size() == 40);
  CHECK(ctx.store("toy").dimension == 10);
  CHECK_THROWS_AS(ctx.dataset("missing"), Error);
  CHECK_THROWS_AS(ctx.store("missing"), Error);
}

TEST_CASE("in-domain run learns the synthetic rule") {
  ExperimentContext ctx = synthetic_context(240);
  RunSpec spec = quick_spec("alpha", repr::ReprKind::ML);
  RunResult result = run_in_domain(ctx, spec);

  CHECK(result.report.scores.f1 >= 0.95);
  CHECK(result.report.train_corpus == "alpha/train");
  CHECK(result.report.test_corpus == "alpha/test");
  CHECK(result.history.epochs.size() == 6);
  // 25% of each class of 240 sentences.
  CHECK(result.report.cm.total() == 60);

  // Config is derived from the train split only, so its shape bounds hold
  // over that split by construction.
  CHECK(result.config->kind == repr::ReprKind::ML);
  CHECK(result.config->k == 10);
  CHECK(result.config->n >= 5);
  CHECK(result.config->n <= 9);

  auto manifest = nlohmann::json::parse(result.manifest_json);
  CHECK(manifest.at("architecture").get<std::string>() == "cnn");
  CHECK(manifest.at("representation").get<std::string>() == "ml");
  CHECK(manifest.at("seed").get<uint64_t>() == 11);
  CHECK(manifest.contains("train_corpus"));
  CHECK(manifest.at("hyper").at("epochs").get<int>() == 6);
  CHECK(manifest.at("embedding").contains("hash"));
  CHECK(manifest.contains("lowercase"));
}

TEST_CASE("in-domain runs are deterministic per seed") {
  ExperimentContext ctx = synthetic_context(120);
  RunSpec spec = quick_spec("alpha", repr::ReprKind::M);
  spec.hyper.epochs = 3;
  RunResult a = run_in_domain(ctx, spec);
  RunResult b = run_in_domain(ctx, spec);
  CHECK(a.report.scores.f1 == b.report.scores.f1);
  CHECK(a.report.scores.accuracy == b.report.scores.accuracy);
  CHECK(a.report.cm.tp == b.report.cm.tp);
  CHECK(a.report.cm.fp == b.report.cm.fp);
  REQUIRE(a.history.epochs.size() == b.history.epochs.size());
  for (size_t e = 0; e < a.history.epochs.size(); ++e) {
    CHECK(a.history.epochs[e].train_loss == b.history.epochs[e].train_loss);
  }
}

TEST_CASE("fit_dataset carves a validation slice and keeps the full config") {
  ExperimentContext ctx = synthetic_context(100);
  RunSpec spec = quick_spec("alpha", repr::ReprKind::MLD);
  spec.hyper.epochs = 2;
  std::ostringstream log;
  FitResult fit = fit_dataset(ctx.dataset("alpha"), ctx.store("toy"), spec,
                              &log);
  CHECK(fit.history.epochs.size() == 2);
  CHECK(fit.config->kind == repr::ReprKind::MLD);
  // Config covers the whole dataset: padded length is the corpus-wide max.
  int n = 0;
  for (const auto& s : ctx.dataset("alpha").corpus.sentences) {
    n = std::max(n, static_cast<int>(s.tokens.size()));
  }
  CHECK(fit.config->n == n);
  CHECK(log.str().find("epoch 1/2") != std::string::npos);

  eval::EvalReport report =
      evaluate_dataset(fit.model, fit.config, ctx.dataset("alpha"),
                       ctx.store("toy"), "cnn_mld", "alpha");
  CHECK(report.cm.total() == 100);
  CHECK(report.model == "cnn_mld");
}

TEST_CASE("cross-domain transfer works when domains share the rule") {
  ExperimentContext ctx;
  SyntheticOptions a;
  a.sentences = 200;
  a.seed = 21;
  a.domain = "alpha";
  SyntheticOptions b = a;
  b.seed = 22;
  b.domain = "beta";
  SyntheticData da = make_synthetic(a);
  SyntheticData db = make_synthetic(b);
  ctx.datasets["alpha"] = DataSet{da.corpus, da.parsed};
  ctx.datasets["beta"] = DataSet{db.corpus, db.parsed};
  // Shared store so the marker vectors transfer across domains.
  ctx.stores["toy"] = da.store;
  for (const auto& [word, vec] : db.store.entries) {
    ctx.stores["toy"].entries.emplace(word, vec);
  }

  RunSpec spec = quick_spec("alpha", repr::ReprKind::ML);
  spec.test_corpus = "beta";
  RunResult cross = run_cross_domain(ctx, spec);
  CHECK(cross.report.cm.total() == 200);
  CHECK(cross.report.train_corpus == "alpha");
  CHECK(cross.report.test_corpus == "beta");

  RunSpec in_spec = quick_spec("alpha", repr::ReprKind::ML);
  RunResult in_domain = run_in_domain(ctx, in_spec);
  CHECK(cross.report.scores.f1 >=
        doctest::Approx(in_domain.report.scores.f1 - 0.1));
}

TEST_CASE("cross-domain transfer fails against an inverted rule") {
  ExperimentContext ctx;
  SyntheticOptions a;
  a.sentences = 200;
  a.seed = 31;
  a.domain = "alpha";
  SyntheticOptions adversarial = a;
  adversarial.seed = 32;
  adversarial.domain = "gamma";
  adversarial.inverted = true;
  SyntheticData da = make_synthetic(a);
  SyntheticData dg = make_synthetic(adversarial);
  ctx.datasets["alpha"] = DataSet{da.corpus, da.parsed};
  ctx.datasets["gamma"] = DataSet{dg.corpus, dg.parsed};
  ctx.stores["toy"] = da.store;
  for (const auto& [word, vec] : dg.store.entries) {
    ctx.stores["toy"].entries.emplace(word, vec);
  }

  RunSpec spec = quick_spec("alpha", repr::ReprKind::ML);
  spec.test_corpus = "gamma";
  RunResult cross = run_cross_domain(ctx, spec);
  CHECK(cross.report.scores.accuracy <= 0.6);
}

TEST_CASE("cross-domain requires distinct corpora") {
  ExperimentContext ctx = synthetic_context(60);
  RunSpec spec = quick_spec("alpha", repr::ReprKind::M);
  CHECK_THROWS_AS(run_cross_domain(ctx, spec), Error);
}

TEST_CASE("grid emits one row per spec and isolates failures") {
  ExperimentContext ctx = synthetic_context(120);
  std::vector<RunSpec> specs;
  for (net::ArchKind arch : {net::ArchKind::CNN, net::ArchKind::LSTM}) {
    for (repr::ReprKind kind :
         {repr::ReprKind::M, repr::ReprKind::ML, repr::ReprKind::MLD}) {
      RunSpec s = quick_spec("alpha", kind, arch);
      s.hyper.epochs = 1;
      specs.push_back(s);
    }
  }
  RunSpec broken = quick_spec("alpha", repr::ReprKind::M);
  broken.embedding = "no_such_store";
  specs.push_back(broken);

  GridResult grid = run_grid(ctx, specs);
  REQUIRE(grid.cells.size() == 7);
  int ok = 0, failed = 0;
  for (const auto& cell : grid.cells) {
    cell.ok ? ++ok : ++failed;
  }
  CHECK(ok == 6);
  CHECK(failed == 1);
  CHECK_FALSE(grid.cells.back().ok);
  CHECK(grid.cells.back().error.find("no_such_store") != std::string::npos);

  std::istringstream csv(grid.csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  REQUIRE(lines.size() == 8);  // header + one row per spec
  CHECK(lines[0] ==
        "train,test,arch,repr,embedding,seed,status,accuracy,precision,"
        "recall,f1,error");
  CHECK(lines[1].find("alpha,alpha,cnn,m,toy,") != std::string::npos);
  CHECK(lines[1].find(",ok,") != std::string::npos);
  CHECK(lines.back().find(",error,") != std::string::npos);

  // Two seeds double the row count.
  std::vector<RunSpec> seeded;
  for (uint64_t seed : {11ULL, 12ULL}) {
    for (repr::ReprKind kind : {repr::ReprKind::M, repr::ReprKind::ML}) {
      RunSpec s = quick_spec("alpha", kind);
      s.hyper.epochs = 1;
      s.seed = seed;
      s.hyper.seed = seed;
      seeded.push_back(s);
    }
  }
  GridResult two_seeds = run_grid(ctx, seeded);
  CHECK(two_seeds.cells.size() == 4);
  CHECK(two_seeds.csv.find(",11,") != std::string::npos);
  CHECK(two_seeds.csv.find(",12,") != std::string::npos);
}

TEST_CASE("scan counts definition sentences per document") {
  ExperimentContext ctx = synthetic_context(200, 41);
  RunSpec spec = quick_spec("alpha", repr::ReprKind::ML);
  FitResult fit = fit_dataset(ctx.dataset("alpha"), ctx.store("toy"), spec);

  // Fresh sentences from the same generator, grouped into documents of 4.
  SyntheticOptions fresh;
  fresh.sentences = 40;
  fresh.seed = 43;
  fresh.domain = "alpha";
  SyntheticData scan_data = make_synthetic(fresh);
  std::vector<parse::ParsedDocument> docs;
  for (size_t i = 0; i < scan_data.parsed.size(); i += 4) {
    parse::ParsedDocument doc;
    doc.id = "doc_" + std::to_string(i / 4);
    for (size_t j = i; j < i + 4 && j < scan_data.parsed.size(); ++j) {
      doc.sentences.push_back(scan_data.parsed[j]);
    }
    docs.push_back(std::move(doc));
  }
  docs.push_back(parse::ParsedDocument{"empty_doc", {}});

  ScanResult result = scan_documents(fit.model, docs, ctx.store("toy"),
                                     fit.config);
  CHECK(result.total_documents == 11);
  CHECK(result.total_sentences == 40);
  CHECK(result.documents_with_definition <= result.total_documents);
  CHECK(result.definition_sentences <= result.total_sentences);

  // Aggregate equals the per-document sum.
  int sum = 0;
  int docs_with = 0;
  for (const auto& d : result.per_document) {
    sum += d.definition_sentences;
    if (d.definition_sentences > 0) ++docs_with;
  }
  CHECK(sum == result.definition_sentences);
  CHECK(docs_with == result.documents_with_definition);

  // The generator alternates definition / non-definition, so every 4-sentence
  // document holds exactly 2 and the model that learned the rule finds them.
  CHECK(result.definition_sentences == 20);
  CHECK(result.documents_with_definition == 10);
  const auto& empty = result.per_document.back();
  CHECK(empty.id == "empty_doc");
  CHECK(empty.total_sentences == 0);
  CHECK(empty.definition_sentences == 0);

  auto j = nlohmann::json::parse(scan_to_json(result));
  CHECK(j.at("total_documents").get<int>() == 11);
  CHECK(j.at("documents").size() == 11);
  CHECK(j.at("document_ratio").get<std::string>() ==
        format_percent(result.documents_with_definition,
                       result.total_documents));
}

TEST_CASE("ratio formatting reproduces the published arithmetic") {
  CHECK(format_percent(760, 1250) == "60.8%");
  CHECK(format_percent(2210, 27318) == "8.1%");
  CHECK(format_percent(0, 5) == "0.0%");
  CHECK(format_percent(5, 5) == "100.0%");
}

TEST_CASE("dataset hash tracks content") {
  SyntheticOptions opts;
  opts.sentences = 30;
  SyntheticData a = make_synthetic(opts);
  SyntheticData b = make_synthetic(opts);
  DataSet da{a.corpus, a.parsed};
  DataSet db{b.corpus, b.parsed};
  CHECK(dataset_hash(da) == dataset_hash(db));

  // Corpus and parsed list stay aligned, so a label flip touches both.
  auto flipped =
      db.corpus.sentences[0].label == corpus::SentenceLabel::Definition
          ? corpus::SentenceLabel::NonDefinition
          : corpus::SentenceLabel::Definition;
  db.corpus.sentences[0].label = flipped;
  db.parsed[0].base.label = flipped;
  CHECK(dataset_hash(da) != dataset_hash(db));

  opts.seed = 43;
  SyntheticData c = make_synthetic(opts);
  DataSet dc{c.corpus, c.parsed};
  CHECK(dataset_hash(da) != dataset_hash(dc));
}

TEST_CASE("load_dataset and load_store read the on-disk formats") {
  TempDir tmp("experiment_load");
  SyntheticOptions opts;
  opts.sentences = 24;
  opts.domain = "disk";
  SyntheticData data = make_synthetic(opts);

  const std::string corpus_path = tmp.path("corpus.jsonl");
  corpus::save_jsonl(data.corpus, corpus_path);
  const std::string parse_path = tmp.path("parses.conll");
  defex::testsupport::write_parse_file(data.parsed, parse_path);
  const std::string vec_path = tmp.path("vectors.txt");
  defex::testsupport::write_vectors_file(data.store, vec_path);

  ExperimentContext ctx;
  load_dataset(ctx, "disk", corpus_path, parse_path);
  load_store(ctx, "vec", vec_path);
  CHECK(ctx.dataset("disk").corpus.size() == 24);
  CHECK(ctx.dataset("disk").parsed.size() == 24);
  CHECK(ctx.store("vec").dimension == 10);

  // Round-trip keeps the tensors identical to the in-memory originals.
  auto cfg = repr::compute_config(ctx.dataset("disk").parsed,
                                  repr::ReprKind::MLD, 10);
  auto from_disk = repr::dataset_tensors(ctx.dataset("disk").parsed,
                                         ctx.store("vec"), cfg);
  auto cfg_mem = repr::compute_config(data.parsed, repr::ReprKind::MLD, 10);
  auto from_mem = repr::dataset_tensors(data.parsed, data.store, cfg_mem);
  REQUIRE(from_disk.size() == from_mem.size());
  for (size_t i = 0; i < from_disk.size(); ++i) {
    CHECK(from_disk[i].first.values.data == from_mem[i].first.values.data);
    CHECK(from_disk[i].second == from_mem[i].second);
  }
}
