#include "defex/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

#include "defex/errors.hpp"
#include "defex/evaluation.hpp"
#include "defex/util.hpp"
#include "json.hpp"
#include "network_internal.hpp"

namespace defex::net {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written little-endian");

std::string arch_to_string(ArchKind k) {
  switch (k) {
    case ArchKind::CNN: return "cnn";
    case ArchKind::CBLSTM: return "cblstm";
    case ArchKind::LSTM: return "lstm";
    case ArchKind::BLSTM_CNN: return "blstmcnn";
  }
  return "cnn";
}

ArchKind arch_from_string(const std::string& s) {
  if (s == "cnn") return ArchKind::CNN;
  if (s == "cblstm") return ArchKind::CBLSTM;
  if (s == "lstm") return ArchKind::LSTM;
  if (s == "blstmcnn") return ArchKind::BLSTM_CNN;
  throw Error("unknown architecture '" + s +
              "' (expected cnn, cblstm, lstm, or blstmcnn)");
}

namespace detail {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

int conv_rows_out(int rows, int kernel_rows) { return rows - kernel_rows + 1; }

int pool_rows_out(int rows, int pool_size) {
  return (rows + pool_size - 1) / pool_size;
}

Mat conv_pre(const Mat& input, const Conv1d& conv) {
  if (input.cols != conv.input_width)
    throw ShapeMismatch("convolution expects width " +
                        std::to_string(conv.input_width) + ", input has " +
                        std::to_string(input.cols));
  int out_rows = conv_rows_out(input.rows, conv.kernel_rows);
  if (out_rows < 1)
    throw ShapeMismatch("kernel of " + std::to_string(conv.kernel_rows) +
                        " rows does not fit input of " +
                        std::to_string(input.rows));
  Mat pre(out_rows, conv.num_filters);
  int window = conv.kernel_rows * conv.input_width;
  for (int t = 0; t < out_rows; ++t) {
    const double* win = input.row(t);  // rows are contiguous
    for (int f = 0; f < conv.num_filters; ++f) {
      const double* w = conv.filters.row(f);
      double acc = conv.bias[f];
      for (int j = 0; j < window; ++j) acc += w[j] * win[j];
      pre(t, f) = acc;
    }
  }
  return pre;
}

Mat apply_activation(const Mat& pre, Activation a) {
  Mat out = pre;
  if (a == Activation::ReLU)
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Mat maxpool_argmax(const Mat& input, int pool_size, std::vector<int>* argmax) {
  if (pool_size < 1) throw ShapeMismatch("pool size must be at least 1");
  if (input.rows < 1) throw ShapeMismatch("cannot pool an empty input");
  int out_rows = pool_rows_out(input.rows, pool_size);
  Mat out(out_rows, input.cols);
  if (argmax) argmax->assign(static_cast<size_t>(out_rows) * input.cols, 0);
  for (int p = 0; p < out_rows; ++p) {
    int lo = p * pool_size;
    int hi = std::min(lo + pool_size, input.rows);
    for (int c = 0; c < input.cols; ++c) {
      double best = input(lo, c);
      int best_row = lo;
      for (int r = lo + 1; r < hi; ++r)
        if (input(r, c) > best) {
          best = input(r, c);
          best_row = r;
        }
      out(p, c) = best;
      if (argmax) (*argmax)[static_cast<size_t>(p) * input.cols + c] = best_row;
    }
  }
  return out;
}

void pool_backward(const std::vector<int>& argmax, const Mat& dout,
                   Mat& dinput) {
  for (int p = 0; p < dout.rows; ++p)
    for (int c = 0; c < dout.cols; ++c)
      dinput((argmax)[static_cast<size_t>(p) * dout.cols + c], c) += dout(p, c);
}

void conv_backward(const Mat& input, const Mat& pre, const Mat& dout,
                   const Conv1d& conv, Conv1d& gconv, Mat* dinput) {
  int window = conv.kernel_rows * conv.input_width;
  for (int t = 0; t < pre.rows; ++t) {
    const double* win = input.row(t);
    for (int f = 0; f < conv.num_filters; ++f) {
      double d = dout(t, f);
      if (conv.activation == Activation::ReLU && pre(t, f) <= 0.0) continue;
      if (d == 0.0) continue;
      gconv.bias[f] += d;
      double* gw = gconv.filters.row(f);
      for (int j = 0; j < window; ++j) gw[j] += d * win[j];
      if (dinput) {
        const double* w = conv.filters.row(f);
        double* dwin = dinput->row(t);
        for (int j = 0; j < window; ++j) dwin[j] += d * w[j];
      }
    }
  }
}

static void lstm_cell_step(const Lstm& cell, const double* x, const Vec& h_prev,
                           const Vec& c_prev, Vec& gi, Vec& gf, Vec& gg,
                           Vec& go, Vec& c, Vec& h, Vec& tc) {
  int H = cell.hidden, D = cell.input;
  for (int u = 0; u < H; ++u) {
    double ai = cell.b_i[u], af = cell.b_f[u], ag = cell.b_g[u],
           ao = cell.b_o[u];
    const double* wi = cell.w_i.row(u);
    const double* wf = cell.w_f.row(u);
    const double* wg = cell.w_g.row(u);
    const double* wo = cell.w_o.row(u);
    for (int d = 0; d < D; ++d) {
      ai += wi[d] * x[d];
      af += wf[d] * x[d];
      ag += wg[d] * x[d];
      ao += wo[d] * x[d];
    }
    const double* ui = cell.u_i.row(u);
    const double* uf = cell.u_f.row(u);
    const double* ug = cell.u_g.row(u);
    const double* uo = cell.u_o.row(u);
    for (int v = 0; v < H; ++v) {
      ai += ui[v] * h_prev[v];
      af += uf[v] * h_prev[v];
      ag += ug[v] * h_prev[v];
      ao += uo[v] * h_prev[v];
    }
    gi[u] = sigmoid(ai);
    gf[u] = sigmoid(af);
    gg[u] = std::tanh(ag);
    go[u] = sigmoid(ao);
    c[u] = gf[u] * c_prev[u] + gi[u] * gg[u];
    tc[u] = std::tanh(c[u]);
    h[u] = go[u] * tc[u];
  }
}

void lstm_run(const Mat& input, bool reverse, const Lstm& cell,
              LstmTrace& trace) {
  if (input.cols != cell.input)
    throw ShapeMismatch("lstm expects input width " +
                        std::to_string(cell.input) + ", got " +
                        std::to_string(input.cols));
  int T = input.rows, H = cell.hidden;
  trace.steps = T;
  auto sized = [&](std::vector<Vec>& v) { v.assign(T, Vec(H, 0.0)); };
  sized(trace.i);
  sized(trace.f);
  sized(trace.g);
  sized(trace.o);
  sized(trace.c);
  sized(trace.h);
  sized(trace.tanh_c);
  Vec zeros(H, 0.0);
  for (int s = 0; s < T; ++s) {
    int row = reverse ? T - 1 - s : s;
    const Vec& h_prev = s > 0 ? trace.h[s - 1] : zeros;
    const Vec& c_prev = s > 0 ? trace.c[s - 1] : zeros;
    lstm_cell_step(cell, input.row(row), h_prev, c_prev, trace.i[s],
                   trace.f[s], trace.g[s], trace.o[s], trace.c[s], trace.h[s],
                   trace.tanh_c[s]);
  }
}

void lstm_backward(const Mat& input, bool reverse, const Lstm& cell,
                   const LstmTrace& trace, const std::vector<Vec>* dh_step,
                   const Vec* dh_final, Lstm& gcell, Mat* dinput) {
  int T = trace.steps, H = cell.hidden, D = cell.input;
  Vec zeros(H, 0.0);
  Vec dh_carry(H, 0.0), dc_carry(H, 0.0);
  Vec dai(H), daf(H), dag(H), dao(H);
  for (int s = T - 1; s >= 0; --s) {
    const Vec& h_prev = s > 0 ? trace.h[s - 1] : zeros;
    const Vec& c_prev = s > 0 ? trace.c[s - 1] : zeros;
    for (int u = 0; u < H; ++u) {
      double dh = dh_carry[u];
      if (dh_step) dh += (*dh_step)[s][u];
      if (dh_final && s == T - 1) dh += (*dh_final)[u];
      double o = trace.o[s][u], tc = trace.tanh_c[s][u];
      double dc = dh * o * (1.0 - tc * tc) + dc_carry[u];
      double i = trace.i[s][u], f = trace.f[s][u], g = trace.g[s][u];
      dao[u] = dh * tc * o * (1.0 - o);
      dai[u] = dc * g * i * (1.0 - i);
      daf[u] = dc * c_prev[u] * f * (1.0 - f);
      dag[u] = dc * i * (1.0 - g * g);
      dc_carry[u] = dc * f;
    }
    int row = reverse ? T - 1 - s : s;
    const double* x = input.row(row);
    double* dx = dinput ? dinput->row(row) : nullptr;
    std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
    for (int u = 0; u < H; ++u) {
      gcell.b_i[u] += dai[u];
      gcell.b_f[u] += daf[u];
      gcell.b_g[u] += dag[u];
      gcell.b_o[u] += dao[u];
      double* gwi = gcell.w_i.row(u);
      double* gwf = gcell.w_f.row(u);
      double* gwg = gcell.w_g.row(u);
      double* gwo = gcell.w_o.row(u);
      for (int d = 0; d < D; ++d) {
        gwi[d] += dai[u] * x[d];
        gwf[d] += daf[u] * x[d];
        gwg[d] += dag[u] * x[d];
        gwo[d] += dao[u] * x[d];
      }
      double* gui = gcell.u_i.row(u);
      double* guf = gcell.u_f.row(u);
      double* gug = gcell.u_g.row(u);
      double* guo = gcell.u_o.row(u);
      for (int v = 0; v < H; ++v) {
        gui[v] += dai[u] * h_prev[v];
        guf[v] += daf[u] * h_prev[v];
        gug[v] += dag[u] * h_prev[v];
        guo[v] += dao[u] * h_prev[v];
      }
      if (dx) {
        const double* wi = cell.w_i.row(u);
        const double* wf = cell.w_f.row(u);
        const double* wg = cell.w_g.row(u);
        const double* wo = cell.w_o.row(u);
        for (int d = 0; d < D; ++d)
          dx[d] += dai[u] * wi[d] + daf[u] * wf[d] + dag[u] * wg[d] +
                   dao[u] * wo[d];
      }
      const double* ui = cell.u_i.row(u);
      const double* uf = cell.u_f.row(u);
      const double* ug = cell.u_g.row(u);
      const double* uo = cell.u_o.row(u);
      for (int v = 0; v < H; ++v)
        dh_carry[v] += dai[u] * ui[v] + daf[u] * uf[v] + dag[u] * ug[v] +
                       dao[u] * uo[v];
    }
  }
}

Gradients zero_gradients(const Model& model) {
  Gradients g = model.params;
  auto blocks = param_blocks(g, model.kind);
  for (auto& [ptr, count] : blocks) std::fill(ptr, ptr + count, 0.0);
  return g;
}

}  // namespace detail

using namespace detail;

// --- shapes and construction ---

int Model::feature_dim() const {
  switch (kind) {
    case ArchKind::CNN:
    case ArchKind::BLSTM_CNN:
      return pool_rows_out(conv_rows_out(input_rows, hyper.kernel_rows),
                           hyper.pool_size) *
             hyper.num_filters;
    case ArchKind::CBLSTM:
      return 2 * hyper.lstm_hidden;
    case ArchKind::LSTM:
      return hyper.lstm_hidden;
  }
  return 0;
}

std::vector<std::string> Model::layer_sequence() const {
  switch (kind) {
    case ArchKind::CNN: return {"conv", "maxpool", "dense"};
    case ArchKind::CBLSTM: return {"conv", "maxpool", "blstm", "dense"};
    case ArchKind::LSTM: return {"lstm", "dense"};
    case ArchKind::BLSTM_CNN: return {"blstm", "conv", "maxpool", "dense"};
  }
  return {};
}

static void init_mat(Mat& m, double limit, std::mt19937_64& rng) {
  for (double& v : m.data) v = uniform_real(rng, -limit, limit);
}

static Conv1d make_conv(int input_width, const HyperParams& h,
                        std::mt19937_64& rng) {
  Conv1d c;
  c.num_filters = h.num_filters;
  c.kernel_rows = h.kernel_rows;
  c.input_width = input_width;
  c.filters = Mat(h.num_filters, h.kernel_rows * input_width);
  c.bias.assign(h.num_filters, 0.0);
  int fan_in = h.kernel_rows * input_width;
  init_mat(c.filters, std::sqrt(6.0 / (fan_in + h.num_filters)), rng);
  return c;
}

static Lstm make_lstm(int input_width, const HyperParams& h,
                      std::mt19937_64& rng) {
  Lstm l;
  l.hidden = h.lstm_hidden;
  l.input = input_width;
  double wl = std::sqrt(6.0 / (input_width + h.lstm_hidden));
  double ul = std::sqrt(6.0 / (2.0 * h.lstm_hidden));
  for (Mat* m : {&l.w_i, &l.w_f, &l.w_g, &l.w_o}) {
    *m = Mat(h.lstm_hidden, input_width);
    init_mat(*m, wl, rng);
  }
  for (Mat* m : {&l.u_i, &l.u_f, &l.u_g, &l.u_o}) {
    *m = Mat(h.lstm_hidden, h.lstm_hidden);
    init_mat(*m, ul, rng);
  }
  for (Vec* b : {&l.b_i, &l.b_g, &l.b_o}) b->assign(h.lstm_hidden, 0.0);
  l.b_f.assign(h.lstm_hidden, 1.0);  // open forget gates at the start
  return l;
}

static Dense make_dense(int input_dim, std::mt19937_64& rng) {
  Dense d;
  d.weight = Mat(1, input_dim);
  d.bias.assign(1, 0.0);
  init_mat(d.weight, std::sqrt(6.0 / (input_dim + 1)), rng);
  return d;
}

Model build_model(ArchKind kind, int input_rows, int input_width,
                  const HyperParams& hyper) {
  if (input_rows < 1 || input_width < 1)
    throw ShapeMismatch("input shape must be positive, got " +
                        std::to_string(input_rows) + "x" +
                        std::to_string(input_width));
  if (hyper.num_filters < 1 || hyper.kernel_rows < 1 || hyper.pool_size < 1 ||
      hyper.lstm_hidden < 1)
    throw ShapeMismatch("layer sizes must be positive");
  if (!(hyper.dropout_rate >= 0.0 && hyper.dropout_rate < 1.0))
    throw Error("dropout rate must lie in [0, 1)");
  if (hyper.batch_size < 1) throw Error("batch size must be positive");
  if (hyper.epochs < 0) throw Error("epoch count must be non-negative");

  Model m;
  m.kind = kind;
  m.hyper = hyper;
  m.input_rows = input_rows;
  m.input_width = input_width;
  bool has_conv = kind != ArchKind::LSTM;
  if (has_conv && conv_rows_out(input_rows, hyper.kernel_rows) < 1)
    throw ShapeMismatch("kernel of " + std::to_string(hyper.kernel_rows) +
                        " rows does not fit " + std::to_string(input_rows) +
                        " input rows");

  std::mt19937_64 rng(hyper.seed);
  switch (kind) {
    case ArchKind::CNN:
      m.params.conv = make_conv(input_width, hyper, rng);
      break;
    case ArchKind::CBLSTM:
      m.params.conv = make_conv(input_width, hyper, rng);
      m.params.fwd = make_lstm(hyper.num_filters, hyper, rng);
      m.params.bwd = make_lstm(hyper.num_filters, hyper, rng);
      break;
    case ArchKind::LSTM:
      m.params.fwd = make_lstm(input_width, hyper, rng);
      break;
    case ArchKind::BLSTM_CNN:
      m.params.fwd = make_lstm(input_width, hyper, rng);
      m.params.bwd = make_lstm(input_width, hyper, rng);
      m.params.conv = make_conv(2 * hyper.lstm_hidden, hyper, rng);
      break;
  }
  m.params.out = make_dense(m.feature_dim(), rng);
  return m;
}

static void append_lstm_blocks(Lstm& l,
                               std::vector<std::pair<double*, size_t>>& out) {
  auto mat = [&](Mat& m) { out.emplace_back(m.data.data(), m.data.size()); };
  auto vec = [&](Vec& v) { out.emplace_back(v.data(), v.size()); };
  mat(l.w_i); mat(l.u_i); vec(l.b_i);
  mat(l.w_f); mat(l.u_f); vec(l.b_f);
  mat(l.w_g); mat(l.u_g); vec(l.b_g);
  mat(l.w_o); mat(l.u_o); vec(l.b_o);
}

std::vector<std::pair<double*, size_t>> param_blocks(ParamSet& params,
                                                     ArchKind kind) {
  std::vector<std::pair<double*, size_t>> out;
  auto conv = [&] {
    out.emplace_back(params.conv->filters.data.data(),
                     params.conv->filters.data.size());
    out.emplace_back(params.conv->bias.data(), params.conv->bias.size());
  };
  auto lstms = [&] {
    append_lstm_blocks(*params.fwd, out);
    if (params.bwd) append_lstm_blocks(*params.bwd, out);
  };
  switch (kind) {
    case ArchKind::CNN: conv(); break;
    case ArchKind::CBLSTM:
      conv();
      lstms();
      break;
    case ArchKind::LSTM: lstms(); break;
    case ArchKind::BLSTM_CNN:
      lstms();
      conv();
      break;
  }
  out.emplace_back(params.out.weight.data.data(),
                   params.out.weight.data.size());
  out.emplace_back(params.out.bias.data(), params.out.bias.size());
  return out;
}

size_t param_count(const Model& model) {
  auto& mutable_params = const_cast<ParamSet&>(model.params);
  size_t n = 0;
  for (auto& [ptr, count] : param_blocks(mutable_params, model.kind))
    n += count;
  return n;
}

// --- public layer ops ---

Mat conv1d_forward(const Mat& input, const Conv1d& conv) {
  return apply_activation(conv_pre(input, conv), conv.activation);
}

Mat maxpool_forward(const Mat& input, int pool_size) {
  return maxpool_argmax(input, pool_size, nullptr);
}

std::pair<Vec, Vec> lstm_step(const Vec& x, const Vec& h, const Vec& c,
                              const Lstm& cell) {
  if (static_cast<int>(x.size()) != cell.input ||
      static_cast<int>(h.size()) != cell.hidden ||
      static_cast<int>(c.size()) != cell.hidden)
    throw ShapeMismatch("lstm step operand sizes do not match the cell");
  Vec gi(cell.hidden), gf(cell.hidden), gg(cell.hidden), go(cell.hidden);
  Vec c_next(cell.hidden), h_next(cell.hidden), tc(cell.hidden);
  lstm_cell_step(cell, x.data(), h, c, gi, gf, gg, go, c_next, h_next, tc);
  return {h_next, c_next};
}

Mat bidirectional_forward(const Mat& input, const Lstm& fwd, const Lstm& bwd) {
  if (fwd.hidden != bwd.hidden)
    throw ShapeMismatch("bidirectional halves must share a hidden size");
  LstmTrace tf, tb;
  lstm_run(input, false, fwd, tf);
  lstm_run(input, true, bwd, tb);
  int T = input.rows, H = fwd.hidden;
  Mat out(T, 2 * H);
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u < H; ++u) {
      out(t, u) = tf.h[t][u];
      out(t, H + u) = tb.h[T - 1 - t][u];  // step T-1-t consumed row t
    }
  }
  return out;
}

// --- forward / backward ---

namespace {

struct Tape {
  Mat conv_in;   // input seen by the convolution (BLSTM_CNN only)
  Mat conv_pre_act;
  Mat pool_in;
  Mat pool_out;
  std::vector<int> pool_argmax;
  LstmTrace fwd, bwd;
  Vec features;  // before dropout
  Vec kept;      // after dropout; the dense layer's input
  Vec mask;      // empty when dropout is off
  double logit = 0.0;
  double prob = 0.0;
};

void check_input_shape(const Model& model, const Mat& x) {
  if (x.rows != model.input_rows || x.cols != model.input_width)
    throw ShapeMismatch("model expects " + std::to_string(model.input_rows) +
                        "x" + std::to_string(model.input_width) +
                        " inputs, got " + std::to_string(x.rows) + "x" +
                        std::to_string(x.cols));
}

Vec flatten(const Mat& m) { return m.data; }

double run_forward(const Model& model, const Mat& x, Tape& tape, bool training,
                   std::mt19937_64* rng) {
  check_input_shape(model, x);
  const ParamSet& p = model.params;
  switch (model.kind) {
    case ArchKind::CNN: {
      tape.conv_pre_act = conv_pre(x, *p.conv);
      tape.pool_in = apply_activation(tape.conv_pre_act, p.conv->activation);
      tape.pool_out =
          maxpool_argmax(tape.pool_in, model.hyper.pool_size, &tape.pool_argmax);
      tape.features = flatten(tape.pool_out);
      break;
    }
    case ArchKind::CBLSTM: {
      tape.conv_pre_act = conv_pre(x, *p.conv);
      tape.pool_in = apply_activation(tape.conv_pre_act, p.conv->activation);
      tape.pool_out =
          maxpool_argmax(tape.pool_in, model.hyper.pool_size, &tape.pool_argmax);
      lstm_run(tape.pool_out, false, *p.fwd, tape.fwd);
      lstm_run(tape.pool_out, true, *p.bwd, tape.bwd);
      int H = p.fwd->hidden, T = tape.pool_out.rows;
      tape.features.resize(2 * H);
      for (int u = 0; u < H; ++u) {
        tape.features[u] = tape.fwd.h[T - 1][u];
        tape.features[H + u] = tape.bwd.h[T - 1][u];
      }
      break;
    }
    case ArchKind::LSTM: {
      lstm_run(x, false, *p.fwd, tape.fwd);
      tape.features = tape.fwd.h[x.rows - 1];
      break;
    }
    case ArchKind::BLSTM_CNN: {
      lstm_run(x, false, *p.fwd, tape.fwd);
      lstm_run(x, true, *p.bwd, tape.bwd);
      int H = p.fwd->hidden, T = x.rows;
      tape.conv_in = Mat(T, 2 * H);
      for (int t = 0; t < T; ++t)
        for (int u = 0; u < H; ++u) {
          tape.conv_in(t, u) = tape.fwd.h[t][u];
          tape.conv_in(t, H + u) = tape.bwd.h[T - 1 - t][u];
        }
      tape.conv_pre_act = conv_pre(tape.conv_in, *p.conv);
      tape.pool_in = apply_activation(tape.conv_pre_act, p.conv->activation);
      tape.pool_out =
          maxpool_argmax(tape.pool_in, model.hyper.pool_size, &tape.pool_argmax);
      tape.features = flatten(tape.pool_out);
      break;
    }
  }

  double rate = model.hyper.dropout_rate;
  if (training && rate > 0.0 && rng) {
    double keep = 1.0 - rate;
    tape.mask.resize(tape.features.size());
    tape.kept.resize(tape.features.size());
    for (size_t d = 0; d < tape.features.size(); ++d) {
      tape.mask[d] = uniform_real(*rng, 0.0, 1.0) < keep ? 1.0 / keep : 0.0;
      tape.kept[d] = tape.features[d] * tape.mask[d];
    }
  } else {
    tape.mask.clear();
    tape.kept = tape.features;
  }

  const Dense& out = p.out;
  double z = out.bias[0];
  for (size_t d = 0; d < tape.kept.size(); ++d)
    z += out.weight(0, static_cast<int>(d)) * tape.kept[d];
  tape.logit = z;
  tape.prob = sigmoid(z);
  return tape.prob;
}

void run_backward(const Model& model, const Mat& x, const Tape& tape,
                  double gold, Gradients& grads) {
  const ParamSet& p = model.params;
  double dlogit = tape.prob - gold;

  size_t D = tape.kept.size();
  Vec dfeat(D);
  for (size_t d = 0; d < D; ++d) {
    grads.out.weight(0, static_cast<int>(d)) += dlogit * tape.kept[d];
    dfeat[d] = model.params.out.weight(0, static_cast<int>(d)) * dlogit;
  }
  grads.out.bias[0] += dlogit;
  if (!tape.mask.empty())
    for (size_t d = 0; d < D; ++d) dfeat[d] *= tape.mask[d];

  auto pooled_grads = [&](Mat& dpool_in) {
    Mat dpool(tape.pool_out.rows, tape.pool_out.cols);
    std::copy(dfeat.begin(), dfeat.end(), dpool.data.begin());
    dpool_in = Mat(tape.pool_in.rows, tape.pool_in.cols);
    pool_backward(tape.pool_argmax, dpool, dpool_in);
  };

  switch (model.kind) {
    case ArchKind::CNN: {
      Mat dact;
      pooled_grads(dact);
      conv_backward(x, tape.conv_pre_act, dact, *p.conv, *grads.conv, nullptr);
      break;
    }
    case ArchKind::CBLSTM: {
      int H = p.fwd->hidden;
      Vec dh_f(dfeat.begin(), dfeat.begin() + H);
      Vec dh_b(dfeat.begin() + H, dfeat.end());
      Mat dseq(tape.pool_out.rows, tape.pool_out.cols);
      lstm_backward(tape.pool_out, false, *p.fwd, tape.fwd, nullptr, &dh_f,
                    *grads.fwd, &dseq);
      lstm_backward(tape.pool_out, true, *p.bwd, tape.bwd, nullptr, &dh_b,
                    *grads.bwd, &dseq);
      Mat dact(tape.pool_in.rows, tape.pool_in.cols);
      pool_backward(tape.pool_argmax, dseq, dact);
      conv_backward(x, tape.conv_pre_act, dact, *p.conv, *grads.conv, nullptr);
      break;
    }
    case ArchKind::LSTM: {
      lstm_backward(x, false, *p.fwd, tape.fwd, nullptr, &dfeat, *grads.fwd,
                    nullptr);
      break;
    }
    case ArchKind::BLSTM_CNN: {
      Mat dact;
      pooled_grads(dact);
      Mat dblstm(tape.conv_in.rows, tape.conv_in.cols);
      conv_backward(tape.conv_in, tape.conv_pre_act, dact, *p.conv,
                    *grads.conv, &dblstm);
      int T = x.rows, H = p.fwd->hidden;
      std::vector<Vec> dh_f(T, Vec(H)), dh_b(T, Vec(H));
      for (int t = 0; t < T; ++t)
        for (int u = 0; u < H; ++u) {
          dh_f[t][u] = dblstm(t, u);
          dh_b[T - 1 - t][u] = dblstm(t, H + u);
        }
      lstm_backward(x, false, *p.fwd, tape.fwd, &dh_f, nullptr, *grads.fwd,
                    nullptr);
      lstm_backward(x, true, *p.bwd, tape.bwd, &dh_b, nullptr, *grads.bwd,
                    nullptr);
      break;
    }
  }
}

}  // namespace

double forward(const Model& model, const Mat& x) {
  Tape tape;
  return run_forward(model, x, tape, false, nullptr);
}

double forward(const Model& model, const repr::InputTensor& x) {
  return forward(model, x.values);
}

double bce_loss_from_logit(double logit, double gold) {
  double softplus = logit > 0.0 ? logit + std::log1p(std::exp(-logit))
                                : std::log1p(std::exp(logit));
  return softplus - gold * logit;
}

double bce_logit_grad(double prob, double gold) { return prob - gold; }

Gradients backward(const Model& model, const Mat& x, double gold) {
  Tape tape;
  run_forward(model, x, tape, false, nullptr);
  Gradients grads = zero_gradients(model);
  run_backward(model, x, tape, gold, grads);
  return grads;
}

// --- training ---

History train(Model& model, const std::vector<repr::Example>& train_set,
              const std::vector<repr::Example>& val_set, std::ostream* log) {
  if (train_set.empty()) throw EmptyTrainingSet();
  for (const auto& ex : train_set) check_input_shape(model, ex.first.values);
  for (const auto& ex : val_set) check_input_shape(model, ex.first.values);
  if (!std::isfinite(model.hyper.learning_rate) ||
      model.hyper.learning_rate < 0.0)
    throw Error("learning rate must be finite and non-negative");

  const HyperParams& h = model.hyper;
  std::mt19937_64 rng(h.seed);
  auto blocks = param_blocks(model.params, model.kind);
  size_t n_params = 0;
  for (auto& [ptr, count] : blocks) n_params += count;
  Vec adam_m(n_params, 0.0), adam_v(n_params, 0.0);
  long adam_t = 0;

  Gradients grads = zero_gradients(model);
  auto grad_blocks = param_blocks(grads, model.kind);

  History history;
  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  Tape tape;

  for (int epoch = 0; epoch < h.epochs; ++epoch) {
    shuffle_deterministic(order, rng);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += h.batch_size) {
      size_t stop = std::min(order.size(), start + h.batch_size);
      double batch_n = static_cast<double>(stop - start);
      for (auto& [ptr, count] : grad_blocks) std::fill(ptr, ptr + count, 0.0);
      double batch_loss = 0.0;
      for (size_t b = start; b < stop; ++b) {
        const auto& ex = train_set[order[b]];
        double gold =
            ex.second == corpus::SentenceLabel::Definition ? 1.0 : 0.0;
        run_forward(model, ex.first.values, tape, true, &rng);
        batch_loss += bce_loss_from_logit(tape.logit, gold);
        run_backward(model, ex.first.values, tape, gold, grads);
      }
      if (!std::isfinite(batch_loss))
        throw NonFiniteLoss("loss became non-finite in epoch " +
                            std::to_string(epoch + 1) + ", batch starting at " +
                            std::to_string(start));
      loss_sum += batch_loss;
      for (auto& [ptr, count] : grad_blocks)
        for (size_t i = 0; i < count; ++i) ptr[i] /= batch_n;

      if (h.optimizer == Optimizer::Adam) {
        ++adam_t;
        double bc1 = 1.0 - std::pow(h.adam_beta1, adam_t);
        double bc2 = 1.0 - std::pow(h.adam_beta2, adam_t);
        size_t off = 0;
        for (size_t blk = 0; blk < blocks.size(); ++blk) {
          double* p = blocks[blk].first;
          double* g = grad_blocks[blk].first;
          for (size_t i = 0; i < blocks[blk].second; ++i, ++off) {
            adam_m[off] = h.adam_beta1 * adam_m[off] +
                          (1.0 - h.adam_beta1) * g[i];
            adam_v[off] = h.adam_beta2 * adam_v[off] +
                          (1.0 - h.adam_beta2) * g[i] * g[i];
            double m_hat = adam_m[off] / bc1;
            double v_hat = adam_v[off] / bc2;
            p[i] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.adam_eps);
          }
        }
      } else {
        for (size_t blk = 0; blk < blocks.size(); ++blk) {
          double* p = blocks[blk].first;
          double* g = grad_blocks[blk].first;
          for (size_t i = 0; i < blocks[blk].second; ++i)
            p[i] -= h.learning_rate * g[i];
        }
      }
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      std::vector<double> probs;
      std::vector<corpus::SentenceLabel> gold;
      probs.reserve(val_set.size());
      gold.reserve(val_set.size());
      for (const auto& ex : val_set) {
        probs.push_back(forward(model, ex.first.values));
        gold.push_back(ex.second);
      }
      auto m = eval::metrics(eval::confusion(probs, gold));
      stats.val_accuracy = m.accuracy;
      stats.val_precision = m.precision;
      stats.val_recall = m.recall;
      stats.val_f1 = m.f1;
    }
    history.epochs.push_back(stats);
    if (log)
      *log << "epoch " << stats.epoch << "/" << h.epochs << " loss "
           << stats.train_loss << " val_f1 " << stats.val_f1 << "\n";
  }
  return history;
}

// --- checkpoints ---

static nlohmann::json hyper_to_json(const HyperParams& h) {
  return {{"num_filters", h.num_filters},
          {"kernel_rows", h.kernel_rows},
          {"pool_size", h.pool_size},
          {"lstm_hidden", h.lstm_hidden},
          {"dropout_rate", h.dropout_rate},
          {"learning_rate", h.learning_rate},
          {"batch_size", h.batch_size},
          {"epochs", h.epochs},
          {"seed", h.seed},
          {"optimizer", h.optimizer == Optimizer::Adam ? "adam" : "sgd"},
          {"adam_beta1", h.adam_beta1},
          {"adam_beta2", h.adam_beta2},
          {"adam_eps", h.adam_eps}};
}

static HyperParams hyper_from_json(const nlohmann::json& j) {
  HyperParams h;
  h.num_filters = j.at("num_filters").get<int>();
  h.kernel_rows = j.at("kernel_rows").get<int>();
  h.pool_size = j.at("pool_size").get<int>();
  h.lstm_hidden = j.at("lstm_hidden").get<int>();
  h.dropout_rate = j.at("dropout_rate").get<double>();
  h.learning_rate = j.at("learning_rate").get<double>();
  h.batch_size = j.at("batch_size").get<int>();
  h.epochs = j.at("epochs").get<int>();
  h.seed = j.at("seed").get<uint64_t>();
  h.optimizer = j.at("optimizer").get<std::string>() == "sgd"
                    ? Optimizer::Sgd
                    : Optimizer::Adam;
  h.adam_beta1 = j.at("adam_beta1").get<double>();
  h.adam_beta2 = j.at("adam_beta2").get<double>();
  h.adam_eps = j.at("adam_eps").get<double>();
  return h;
}

std::string hyper_to_json_text(const HyperParams& h) {
  return hyper_to_json(h).dump();
}

void save_checkpoint(const Model& model,
                     const repr::RepresentationConfig& config,
                     const std::string& store_manifest_json,
                     const std::string& path) {
  nlohmann::json header;
  header["magic"] = "defex-checkpoint";
  header["version"] = 1;
  header["architecture"] = arch_to_string(model.kind);
  header["hyper"] = hyper_to_json(model.hyper);
  header["input_rows"] = model.input_rows;
  header["input_width"] = model.input_width;
  header["representation"] = {{"kind", repr::repr_kind_to_string(config.kind)},
                              {"k", config.k},
                              {"n", config.n},
                              {"d_max", config.d_max},
                              {"lowercase", config.lowercase},
                              {"labels", config.label_space.labels},
                              {"hash", to_hex(config.hash())}};
  header["store"] = store_manifest_json.empty()
                        ? nlohmann::json()
                        : nlohmann::json::parse(store_manifest_json);
  header["param_count"] = param_count(model);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out << header.dump() << "\n";
  auto& mutable_params = const_cast<ParamSet&>(model.params);
  for (auto& [ptr, count] : param_blocks(mutable_params, model.kind))
    out.write(reinterpret_cast<const char*>(ptr),
              static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("checkpoint '" + path + "' is empty");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint '" + path + "' has a bad header: " + e.what());
  }
  if (header.value("magic", "") != "defex-checkpoint" ||
      header.value("version", 0) != 1)
    throw Error("checkpoint '" + path + "' has an unrecognized header");

  Checkpoint ck;
  HyperParams hyper = hyper_from_json(header.at("hyper"));
  ck.model = build_model(arch_from_string(header.at("architecture").get<std::string>()),
                         header.at("input_rows").get<int>(),
                         header.at("input_width").get<int>(), hyper);

  const auto& rj = header.at("representation");
  auto cfg = std::make_shared<repr::RepresentationConfig>();
  cfg->kind = repr::repr_kind_from_string(rj.at("kind").get<std::string>());
  cfg->k = rj.at("k").get<int>();
  cfg->n = rj.at("n").get<int>();
  cfg->d_max = rj.at("d_max").get<int>();
  cfg->lowercase = rj.at("lowercase").get<bool>();
  cfg->label_space.labels = rj.at("labels").get<std::vector<std::string>>();
  ck.config = cfg;
  ck.store_manifest_json =
      header.at("store").is_null() ? "" : header.at("store").dump();

  size_t declared = header.at("param_count").get<size_t>();
  if (declared != param_count(ck.model))
    throw Error("checkpoint '" + path + "' declares " +
                std::to_string(declared) + " parameters, model needs " +
                std::to_string(param_count(ck.model)));
  for (auto& [ptr, count] : param_blocks(ck.model.params, ck.model.kind)) {
    in.read(reinterpret_cast<char*>(ptr),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<size_t>(in.gcount()) != count * sizeof(double))
      throw Error("checkpoint '" + path + "' is truncated");
  }
  return ck;
}

bool GradCheckReport::all_passed() const {
  for (const auto& c : cases)
    if (!c.passed) return false;
  return !cases.empty();
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& c : cases) w = std::max(w, c.max_rel_error);
  return w;
}

}  // namespace defex::net
