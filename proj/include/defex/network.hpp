#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "defex/mat.hpp"
#include "defex/representation.hpp"

namespace defex::net {

enum class ArchKind { CNN, CBLSTM, LSTM, BLSTM_CNN };

std::string arch_to_string(ArchKind k);
ArchKind arch_from_string(const std::string& s);

enum class Optimizer { Adam, Sgd };

struct HyperParams {
  int num_filters = 100;
  int kernel_rows = 3;
  int pool_size = 2;
  int lstm_hidden = 100;
  double dropout_rate = 0.2;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 10;
  uint64_t seed = 0;
  Optimizer optimizer = Optimizer::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

enum class Activation { ReLU, Identity };

// Valid (no padding), stride-1 convolution over whole rows. filters is
// num_filters x (kernel_rows * input_width), one flattened window per row.
struct Conv1d {
  int num_filters = 0;
  int kernel_rows = 0;
  int input_width = 0;
  Mat filters;
  Vec bias;
  Activation activation = Activation::ReLU;
};

// Standard LSTM cell: sigmoid gates i, f, o, tanh candidate g,
// c' = f.c + i.g, h' = o.tanh(c'). Parameter order for serialization:
// (w, u, b) per gate, gates in i, f, g, o order.
struct Lstm {
  int hidden = 0;
  int input = 0;
  Mat w_i, w_f, w_g, w_o;  // hidden x input
  Mat u_i, u_f, u_g, u_o;  // hidden x hidden
  Vec b_i, b_f, b_g, b_o;  // hidden
};

struct Dense {
  Mat weight;  // out x in
  Vec bias;    // out
};

// Parameters grouped so gradients can reuse the same layout. Which members
// are engaged depends on the architecture:
//   CNN:       conv, out
//   CBLSTM:    conv, fwd, bwd, out
//   LSTM:      fwd, out
//   BLSTM_CNN: fwd, bwd, conv, out
// That order is also the checkpoint serialization order.
struct ParamSet {
  std::optional<Conv1d> conv;
  std::optional<Lstm> fwd;
  std::optional<Lstm> bwd;
  Dense out;
};

struct Model {
  ArchKind kind = ArchKind::CNN;
  HyperParams hyper;
  int input_rows = 0;
  int input_width = 0;
  ParamSet params;

  // Width of the feature vector entering the output layer.
  int feature_dim() const;
  // Human-readable layer sequence, e.g. {"conv", "maxpool", "blstm", "dense"}.
  std::vector<std::string> layer_sequence() const;
};

using Gradients = ParamSet;

// Seeded construction; parameter shapes derive from the input shape and
// hyperparameters. Throws ShapeMismatch when a layer cannot fit (e.g. kernel
// taller than its input).
Model build_model(ArchKind kind, int input_rows, int input_width,
                  const HyperParams& hyper);

// Ordered (pointer, count) view over every parameter block; identical layout
// for a Model's ParamSet and its Gradients.
std::vector<std::pair<double*, size_t>> param_blocks(ParamSet& params,
                                                     ArchKind kind);
size_t param_count(const Model& model);

// --- layer primitives ---

Mat conv1d_forward(const Mat& input, const Conv1d& conv);
Mat maxpool_forward(const Mat& input, int pool_size);
std::pair<Vec, Vec> lstm_step(const Vec& x, const Vec& h, const Vec& c,
                              const Lstm& cell);
Mat bidirectional_forward(const Mat& input, const Lstm& fwd, const Lstm& bwd);

// --- model ops ---

// Inference probability in (0, 1); dropout disabled.
double forward(const Model& model, const Mat& x);
double forward(const Model& model, const repr::InputTensor& x);

// Binary cross-entropy of a sigmoid head, evaluated stably from the logit.
double bce_loss_from_logit(double logit, double gold);
// d loss / d logit == sigmoid(logit) - gold.
double bce_logit_grad(double prob, double gold);

// Gradients of the BCE loss at (x, gold) with respect to every parameter;
// dropout disabled, matching forward().
Gradients backward(const Model& model, const Mat& x, double gold);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_precision = 0.0;
  double val_recall = 0.0;
  double val_f1 = 0.0;
};

struct History {
  std::vector<EpochStats> epochs;
};

// Mini-batch training for hyper.epochs passes with the configured optimizer.
// Shuffling, dropout, and updates are all driven by hyper.seed; single
// threaded, so same seed means same final parameters. log (optional)
// receives one line per epoch.
History train(Model& model, const std::vector<repr::Example>& train_set,
              const std::vector<repr::Example>& val_set,
              std::ostream* log = nullptr);

// --- checkpoints ---

std::string hyper_to_json_text(const HyperParams& h);

// One-line JSON header (architecture, hyperparameters, shapes,
// representation config, store manifest, hashes) + raw little-endian
// doubles in declared layer order.
void save_checkpoint(const Model& model, const repr::RepresentationConfig& config,
                     const std::string& store_manifest_json,
                     const std::string& path);

struct Checkpoint {
  Model model;
  repr::ConfigPtr config;
  std::string store_manifest_json;
};

Checkpoint load_checkpoint(const std::string& path);

// --- gradient verification ---

struct GradCheckCase {
  std::string name;
  size_t params_checked = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  double eps = 0.0;
  double tolerance = 0.0;
  bool all_passed() const;
  double worst() const;
};

// Central finite differences against analytic gradients for every layer in
// isolation and all four architectures at toy shapes, instances_per_case
// seeded instances each.
GradCheckReport run_gradient_check_suite(int instances_per_case, double eps,
                                         double tol, uint64_t seed,
                                         std::ostream* log = nullptr);

}  // namespace defex::net
