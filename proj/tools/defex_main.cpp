#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "defex/corpus.hpp"
#include "defex/embedding.hpp"
#include "defex/errors.hpp"
#include "defex/evaluation.hpp"
#include "defex/experiment.hpp"
#include "defex/network.hpp"
#include "defex/parse.hpp"
#include "defex/representation.hpp"
#include "defex/util.hpp"
#include "json.hpp"

namespace {

using namespace defex;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
  if (!out) throw Error("failed writing '" + path + "'");
}

// Reloads the vector store a checkpoint was trained with, from its manifest
// unless an explicit path overrides it. A manifest reload must hash-match.
embedding::VectorStore store_for_checkpoint(const net::Checkpoint& ck,
                                            const std::string& override_path) {
  std::string path = override_path;
  std::string expected_hash;
  if (path.empty()) {
    if (ck.store_manifest_json.empty())
      throw Error(
          "checkpoint has no embedding manifest; pass --vectors explicitly");
    auto manifest = nlohmann::json::parse(ck.store_manifest_json);
    path = manifest.at("path").get<std::string>();
    expected_hash = manifest.value("hash", "");
  }
  auto store = embedding::load_text_vectors(path);
  if (!expected_hash.empty() && to_hex(store.content_hash) != expected_hash)
    throw Error("vector store '" + path + "' hash " +
                to_hex(store.content_hash) +
                " does not match the checkpoint manifest hash " +
                expected_hash);
  if (store.dimension != ck.config->k)
    throw DimensionMismatch(
        0, "store '" + path + "' has dimension " +
               std::to_string(store.dimension) + ", checkpoint expects " +
               std::to_string(ck.config->k));
  return store;
}

struct PrepareArgs {
  std::string dataset;
  std::string in;
  std::string out;
};

int cmd_prepare(const PrepareArgs& a) {
  corpus::LoadStats stats;
  corpus::Corpus c;
  if (a.dataset == "wcl") {
    c = corpus::prepare_wcl(a.in, &stats);
  } else if (a.dataset == "w00") {
    c = corpus::prepare_w00(a.in, &stats);
  } else {
    c = corpus::prepare_wfmall(a.in, &stats);
  }
  corpus::save_jsonl(c, a.out);
  std::cout << c.size() << " sentences (" << c.definition_count()
            << " definitions, " << stats.skipped_short
            << " skipped as too short) -> " << a.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string corpus_path, parses, vectors, out;
  std::string arch = "cnn";
  std::string repr = "m";
  std::string optimizer = "adam";
  uint64_t seed = 0;
  double val_fraction = 0.05;
  bool lowercase = false;
  net::HyperParams hyper;
};

int cmd_train(const TrainArgs& a) {
  experiment::DataSet data;
  data.corpus = corpus::load_jsonl(a.corpus_path, a.corpus_path);
  data.parsed = parse::read_parsed_corpus(a.parses, data.corpus);
  auto store = embedding::load_text_vectors(a.vectors);

  experiment::RunSpec spec;
  spec.arch = net::arch_from_string(a.arch);
  spec.repr = repr::repr_kind_from_string(a.repr);
  spec.hyper = a.hyper;
  spec.hyper.optimizer =
      a.optimizer == "sgd" ? net::Optimizer::Sgd : net::Optimizer::Adam;
  spec.seed = a.seed;
  spec.lowercase = a.lowercase;
  spec.validation_fraction = a.val_fraction;

  auto fit = experiment::fit_dataset(data, store, spec, &std::cout);
  net::save_checkpoint(fit.model, *fit.config, embedding::store_manifest(store),
                       a.out);
  if (!fit.history.epochs.empty()) {
    const auto& last = fit.history.epochs.back();
    std::cout << "final loss " << last.train_loss << " val_f1 " << last.val_f1
              << "\n";
  }
  std::cout << "checkpoint -> " << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string model, corpus_path, parses, report, vectors;
};

int cmd_eval(const EvalArgs& a) {
  auto ck = net::load_checkpoint(a.model);
  auto store = store_for_checkpoint(ck, a.vectors);
  experiment::DataSet data;
  data.corpus = corpus::load_jsonl(a.corpus_path, a.corpus_path);
  data.parsed = parse::read_parsed_corpus(a.parses, data.corpus);

  std::string label = net::arch_to_string(ck.model.kind) + "_" +
                      repr::repr_kind_to_string(ck.config->kind);
  auto report =
      experiment::evaluate_dataset(ck.model, ck.config, data, store, label,
                                   a.model);
  std::string json_text = eval::report_to_json(report);
  if (a.report.empty() || a.report == "-") {
    std::cout << json_text << "\n";
  } else {
    write_file(a.report, json_text + "\n");
    std::cout << "accuracy " << report.scores.accuracy << " f1 "
              << report.scores.f1 << " -> " << a.report << "\n";
  }
  return kExitOk;
}

struct GridArgs {
  std::string config;
};

int cmd_grid(const GridArgs& a) {
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(read_file(a.config));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("grid config is not valid JSON: ") + e.what());
  }

  experiment::ExperimentContext ctx;
  try {
    for (const auto& [name, paths] : cfg.at("datasets").items())
      experiment::load_dataset(ctx, name,
                               paths.at("corpus").get<std::string>(),
                               paths.at("parses").get<std::string>());
    for (const auto& [name, path] : cfg.at("vectors").items())
      experiment::load_store(ctx, name, path.get<std::string>());
    std::vector<experiment::RunSpec> specs;
    for (const auto& run : cfg.at("runs"))
      specs.push_back(experiment::runspec_from_json_text(run.dump()));
    auto grid = experiment::run_grid(ctx, specs, &std::cerr);
    std::string out = cfg.value("out", "");
    if (out.empty()) {
      std::cout << grid.csv;
    } else {
      write_file(out, grid.csv);
      std::cout << grid.cells.size() << " runs -> " << out << "\n";
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad grid config: ") + e.what());
  }
  return kExitOk;
}

struct ScanArgs {
  std::string model, docs, report, vectors;
};

int cmd_scan(const ScanArgs& a) {
  auto ck = net::load_checkpoint(a.model);
  auto store = store_for_checkpoint(ck, a.vectors);
  auto documents = parse::read_parsed_documents(a.docs);
  auto result = experiment::scan_documents(ck.model, documents, store,
                                           ck.config);
  std::string json_text = experiment::scan_to_json(result);
  if (a.report.empty() || a.report == "-") {
    std::cout << json_text << "\n";
  } else {
    write_file(a.report, json_text + "\n");
    std::cout << result.documents_with_definition << "/"
              << result.total_documents << " documents with definitions -> "
              << a.report << "\n";
  }
  return kExitOk;
}

struct GradcheckArgs {
  int instances = 20;
  double eps = 1e-5;
  double tol = 1e-4;
  uint64_t seed = 1;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  auto report = net::run_gradient_check_suite(a.instances, a.eps, a.tol,
                                              a.seed, &std::cout);
  if (!report.all_passed()) {
    std::cerr << "gradient check failed, worst relative error "
              << report.worst() << "\n";
    return kExitNumeric;
  }
  std::cout << "all gradient checks passed, worst relative error "
            << report.worst() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"definition extraction toolkit"};
  app.require_subcommand(1);

  PrepareArgs prepare;
  auto* prep = app.add_subcommand("prepare",
                                  "convert a raw dataset to corpus JSONL");
  prep->add_option("--dataset", prepare.dataset, "raw format")
      ->required()
      ->check(CLI::IsMember({"wcl", "w00", "wfmall"}));
  prep->add_option("--in", prepare.in, "input file")->required();
  prep->add_option("--out", prepare.out, "output JSONL path")->required();

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "train a classifier");
  tr->add_option("--corpus", train.corpus_path, "corpus JSONL")->required();
  tr->add_option("--parses", train.parses, "dependency parse file")->required();
  tr->add_option("--vectors", train.vectors, "word vector file")->required();
  tr->add_option("--arch", train.arch, "architecture")
      ->check(CLI::IsMember({"cnn", "cblstm", "lstm", "blstmcnn"}));
  tr->add_option("--repr", train.repr, "input representation")
      ->check(CLI::IsMember({"m", "ml", "mld"}));
  tr->add_option("--seed", train.seed, "random seed");
  tr->add_option("--out", train.out, "checkpoint path")->required();
  tr->add_option("--epochs", train.hyper.epochs, "training epochs");
  tr->add_option("--batch", train.hyper.batch_size, "mini-batch size");
  tr->add_option("--lr", train.hyper.learning_rate, "learning rate");
  tr->add_option("--dropout", train.hyper.dropout_rate, "dropout rate");
  tr->add_option("--filters", train.hyper.num_filters, "convolution filters");
  tr->add_option("--kernel", train.hyper.kernel_rows, "kernel rows");
  tr->add_option("--pool", train.hyper.pool_size, "max-pool window");
  tr->add_option("--hidden", train.hyper.lstm_hidden, "LSTM hidden size");
  tr->add_option("--optimizer", train.optimizer, "optimizer")
      ->check(CLI::IsMember({"adam", "sgd"}));
  tr->add_option("--val-fraction", train.val_fraction,
                 "validation slice carved from the corpus");
  tr->add_flag("--lowercase", train.lowercase,
               "lowercase tokens before embedding lookup");

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  ev->add_option("--model", eval_args.model, "checkpoint path")->required();
  ev->add_option("--corpus", eval_args.corpus_path, "corpus JSONL")->required();
  ev->add_option("--parses", eval_args.parses, "dependency parse file")
      ->required();
  ev->add_option("--report", eval_args.report, "report JSON path (- = stdout)");
  ev->add_option("--vectors", eval_args.vectors,
                 "override the checkpoint's vector store path");

  GridArgs grid;
  auto* gr = app.add_subcommand("grid", "run a sweep from a JSON config");
  gr->add_option("--config", grid.config, "grid config JSON")->required();

  ScanArgs scan;
  auto* sc = app.add_subcommand("scan", "classify documents sentence by sentence");
  sc->add_option("--model", scan.model, "checkpoint path")->required();
  sc->add_option("--docs", scan.docs, "parse file with document boundaries")
      ->required();
  sc->add_option("--report", scan.report, "report JSON path (- = stdout)");
  sc->add_option("--vectors", scan.vectors,
                 "override the checkpoint's vector store path");

  GradcheckArgs gc;
  auto* gck = app.add_subcommand("gradcheck",
                                 "finite-difference gradient verification");
  gck->add_option("--instances", gc.instances, "instances per case");
  gck->add_option("--eps", gc.eps, "finite-difference step");
  gck->add_option("--tol", gc.tol, "max relative error");
  gck->add_option("--seed", gc.seed, "base seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand(prep)) return cmd_prepare(prepare);
    if (app.got_subcommand(tr)) return cmd_train(train);
    if (app.got_subcommand(ev)) return cmd_eval(eval_args);
    if (app.got_subcommand(gr)) return cmd_grid(grid);
    if (app.got_subcommand(sc)) return cmd_scan(scan);
    if (app.got_subcommand(gck)) return cmd_gradcheck(gc);
  } catch (const NonFiniteLoss& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
