#include <cmath>
#include <functional>
#include <ostream>
#include <random>

#include "defex/network.hpp"
#include "defex/util.hpp"
#include "network_internal.hpp"

namespace defex::net {

using namespace detail;

namespace {

// Guarded relative error; the floor keeps near-zero gradient pairs from
// blowing up the ratio.
double rel_error(double analytic, double numeric) {
  double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-3);
  return std::abs(analytic - numeric) / denom;
}

using Blocks = std::vector<std::pair<double*, size_t>>;

void add_mat(Blocks& b, Mat& m) { b.emplace_back(m.data.data(), m.data.size()); }
void add_vec(Blocks& b, Vec& v) { b.emplace_back(v.data(), v.size()); }

Blocks conv_param_blocks(Conv1d& c) {
  Blocks b;
  add_mat(b, c.filters);
  add_vec(b, c.bias);
  return b;
}

Blocks lstm_param_blocks(Lstm& l) {
  Blocks b;
  for (Mat* m : {&l.w_i, &l.u_i, &l.w_f, &l.u_f, &l.w_g, &l.u_g, &l.w_o, &l.u_o})
    add_mat(b, *m);
  for (Vec* v : {&l.b_i, &l.b_f, &l.b_g, &l.b_o}) add_vec(b, *v);
  return b;
}

void extend(Blocks& into, const Blocks& more) {
  into.insert(into.end(), more.begin(), more.end());
}

// Central differences over every scalar in `params`, compared against the
// parallel `grads` layout. Returns (max rel error, scalars checked).
template <typename F>
std::pair<double, size_t> fd_compare(Blocks& params, const Blocks& grads,
                                     F&& loss, double eps) {
  double worst = 0.0;
  size_t checked = 0;
  for (size_t b = 0; b < params.size(); ++b) {
    double* p = params[b].first;
    const double* g = grads[b].first;
    for (size_t i = 0; i < params[b].second; ++i, ++checked) {
      double saved = p[i];
      p[i] = saved + eps;
      double up = loss();
      p[i] = saved - eps;
      double down = loss();
      p[i] = saved;
      double fd = (up - down) / (2.0 * eps);
      worst = std::max(worst, rel_error(g[i], fd));
    }
  }
  return {worst, checked};
}

Mat random_mat(int r, int c, std::mt19937_64& rng) {
  Mat m(r, c);
  for (double& v : m.data) v = uniform_real(rng, -1.0, 1.0);
  return m;
}

Vec random_vec(int n, std::mt19937_64& rng) {
  Vec v(n);
  for (double& x : v) x = uniform_real(rng, -1.0, 1.0);
  return v;
}

Conv1d random_conv(int filters, int kernel, int width, std::mt19937_64& rng) {
  Conv1d c;
  c.num_filters = filters;
  c.kernel_rows = kernel;
  c.input_width = width;
  c.filters = random_mat(filters, kernel * width, rng);
  c.bias = random_vec(filters, rng);
  return c;
}

Lstm random_lstm(int hidden, int input, std::mt19937_64& rng) {
  Lstm l;
  l.hidden = hidden;
  l.input = input;
  for (Mat* m : {&l.w_i, &l.w_f, &l.w_g, &l.w_o})
    *m = random_mat(hidden, input, rng);
  for (Mat* m : {&l.u_i, &l.u_f, &l.u_g, &l.u_o})
    *m = random_mat(hidden, hidden, rng);
  for (Vec* v : {&l.b_i, &l.b_f, &l.b_g, &l.b_o}) *v = random_vec(hidden, rng);
  return l;
}

Conv1d zeros_like(const Conv1d& c) {
  Conv1d g = c;
  g.filters.fill(0.0);
  std::fill(g.bias.begin(), g.bias.end(), 0.0);
  return g;
}

Lstm zeros_like(const Lstm& l) {
  Lstm g = l;
  for (Mat* m : {&g.w_i, &g.u_i, &g.w_f, &g.u_f, &g.w_g, &g.u_g, &g.w_o, &g.u_o})
    m->fill(0.0);
  for (Vec* v : {&g.b_i, &g.b_f, &g.b_g, &g.b_o})
    std::fill(v->begin(), v->end(), 0.0);
  return g;
}

double weighted_sum(const Mat& weights, const Mat& values) {
  double acc = 0.0;
  for (size_t i = 0; i < weights.data.size(); ++i)
    acc += weights.data[i] * values.data[i];
  return acc;
}

std::pair<double, size_t> check_conv(std::mt19937_64& rng, double eps) {
  Mat x = random_mat(6, 5, rng);
  Conv1d conv = random_conv(3, 2, 5, rng);
  Mat s = random_mat(conv_rows_out(x.rows, conv.kernel_rows), 3, rng);

  Conv1d gconv = zeros_like(conv);
  Mat dx(x.rows, x.cols);
  Mat pre = conv_pre(x, conv);
  conv_backward(x, pre, s, conv, gconv, &dx);

  Blocks params = conv_param_blocks(conv);
  add_mat(params, x);
  Blocks grads = conv_param_blocks(gconv);
  add_mat(grads, dx);
  auto loss = [&] { return weighted_sum(s, conv1d_forward(x, conv)); };
  return fd_compare(params, grads, loss, eps);
}

std::pair<double, size_t> check_maxpool(std::mt19937_64& rng, double eps) {
  Mat x = random_mat(7, 4, rng);
  int pool = 2;
  std::vector<int> argmax;
  Mat out = maxpool_argmax(x, pool, &argmax);
  Mat s = random_mat(out.rows, out.cols, rng);
  Mat dx(x.rows, x.cols);
  pool_backward(argmax, s, dx);

  Blocks params, grads;
  add_mat(params, x);
  add_mat(grads, dx);
  auto loss = [&] { return weighted_sum(s, maxpool_forward(x, pool)); };
  return fd_compare(params, grads, loss, eps);
}

std::pair<double, size_t> check_lstm_step(std::mt19937_64& rng, double eps) {
  const int T = 3, D = 3, H = 4;
  Mat x = random_mat(T, D, rng);
  Lstm cell = random_lstm(H, D, rng);
  std::vector<Vec> sh(T);
  for (auto& v : sh) v = random_vec(H, rng);
  Vec sfinal = random_vec(H, rng);

  LstmTrace trace;
  lstm_run(x, false, cell, trace);
  Lstm gcell = zeros_like(cell);
  Mat dx(T, D);
  lstm_backward(x, false, cell, trace, &sh, &sfinal, gcell, &dx);

  Blocks params = lstm_param_blocks(cell);
  add_mat(params, x);
  Blocks grads = lstm_param_blocks(gcell);
  add_mat(grads, dx);
  auto loss = [&] {
    LstmTrace tr;
    lstm_run(x, false, cell, tr);
    double acc = 0.0;
    for (int s = 0; s < T; ++s)
      for (int u = 0; u < H; ++u) acc += sh[s][u] * tr.h[s][u];
    for (int u = 0; u < H; ++u) acc += sfinal[u] * tr.h[T - 1][u];
    return acc;
  };
  return fd_compare(params, grads, loss, eps);
}

std::pair<double, size_t> check_bidirectional(std::mt19937_64& rng,
                                              double eps) {
  const int T = 4, D = 3, H = 3;
  Mat x = random_mat(T, D, rng);
  Lstm fwd = random_lstm(H, D, rng);
  Lstm bwd = random_lstm(H, D, rng);
  Mat s = random_mat(T, 2 * H, rng);

  LstmTrace tf, tb;
  lstm_run(x, false, fwd, tf);
  lstm_run(x, true, bwd, tb);
  std::vector<Vec> dh_f(T, Vec(H)), dh_b(T, Vec(H));
  for (int t = 0; t < T; ++t)
    for (int u = 0; u < H; ++u) {
      dh_f[t][u] = s(t, u);
      dh_b[T - 1 - t][u] = s(t, H + u);
    }
  Lstm gf = zeros_like(fwd), gb = zeros_like(bwd);
  Mat dx(T, D);
  lstm_backward(x, false, fwd, tf, &dh_f, nullptr, gf, &dx);
  lstm_backward(x, true, bwd, tb, &dh_b, nullptr, gb, &dx);

  Blocks params = lstm_param_blocks(fwd);
  extend(params, lstm_param_blocks(bwd));
  add_mat(params, x);
  Blocks grads = lstm_param_blocks(gf);
  extend(grads, lstm_param_blocks(gb));
  add_mat(grads, dx);
  auto loss = [&] { return weighted_sum(s, bidirectional_forward(x, fwd, bwd)); };
  return fd_compare(params, grads, loss, eps);
}

std::pair<double, size_t> check_dense(std::mt19937_64& rng, double eps) {
  const int O = 2, D = 5;
  Dense dense;
  dense.weight = random_mat(O, D, rng);
  dense.bias = random_vec(O, rng);
  Vec x = random_vec(D, rng);
  Vec s = random_vec(O, rng);

  Dense gdense;
  gdense.weight = Mat(O, D);
  gdense.bias.assign(O, 0.0);
  Vec dx(D, 0.0);
  for (int o = 0; o < O; ++o) {
    gdense.bias[o] = s[o];
    for (int i = 0; i < D; ++i) {
      gdense.weight(o, i) = s[o] * x[i];
      dx[i] += s[o] * dense.weight(o, i);
    }
  }

  Blocks params, grads;
  add_mat(params, dense.weight);
  add_vec(params, dense.bias);
  add_vec(params, x);
  add_mat(grads, gdense.weight);
  add_vec(grads, gdense.bias);
  add_vec(grads, dx);
  auto loss = [&] {
    double acc = 0.0;
    for (int o = 0; o < O; ++o) {
      double z = dense.bias[o];
      for (int i = 0; i < D; ++i) z += dense.weight(o, i) * x[i];
      acc += s[o] * z;
    }
    return acc;
  };
  return fd_compare(params, grads, loss, eps);
}

std::pair<double, size_t> check_architecture(ArchKind kind, uint64_t seed,
                                             std::mt19937_64& rng, double eps) {
  HyperParams hp;
  hp.num_filters = 3;
  hp.kernel_rows = 2;
  hp.pool_size = 2;
  hp.lstm_hidden = 4;
  hp.dropout_rate = 0.0;
  hp.seed = seed;
  Model model = build_model(kind, 7, 5, hp);
  Mat x = random_mat(7, 5, rng);
  double gold = (seed & 1) ? 1.0 : 0.0;

  Gradients analytic = backward(model, x, gold);
  Blocks params = param_blocks(model.params, kind);
  Blocks grads = param_blocks(analytic, kind);
  auto loss = [&] {
    double p = forward(model, x);
    return -(gold * std::log(p) + (1.0 - gold) * std::log1p(-p));
  };
  return fd_compare(params, grads, loss, eps);
}

}  // namespace

GradCheckReport run_gradient_check_suite(int instances_per_case, double eps,
                                         double tol, uint64_t seed,
                                         std::ostream* log) {
  GradCheckReport report;
  report.eps = eps;
  report.tolerance = tol;

  struct CaseDef {
    const char* name;
    std::function<std::pair<double, size_t>(uint64_t)> run;
  };
  std::vector<CaseDef> defs = {
      {"conv",
       [&](uint64_t s) {
         std::mt19937_64 rng(s);
         return check_conv(rng, eps);
       }},
      {"maxpool",
       [&](uint64_t s) {
         std::mt19937_64 rng(s);
         return check_maxpool(rng, eps);
       }},
      {"lstm_step",
       [&](uint64_t s) {
         std::mt19937_64 rng(s);
         return check_lstm_step(rng, eps);
       }},
      {"bidirectional",
       [&](uint64_t s) {
         std::mt19937_64 rng(s);
         return check_bidirectional(rng, eps);
       }},
      {"dense",
       [&](uint64_t s) {
         std::mt19937_64 rng(s);
         return check_dense(rng, eps);
       }},
      {"cnn",
       [&](uint64_t s) {
         std::mt19937_64 rng(s ^ 0x5bd1e995);
         return check_architecture(ArchKind::CNN, s, rng, eps);
       }},
      {"cblstm",
       [&](uint64_t s) {
         std::mt19937_64 rng(s ^ 0x5bd1e995);
         return check_architecture(ArchKind::CBLSTM, s, rng, eps);
       }},
      {"lstm",
       [&](uint64_t s) {
         std::mt19937_64 rng(s ^ 0x5bd1e995);
         return check_architecture(ArchKind::LSTM, s, rng, eps);
       }},
      {"blstmcnn",
       [&](uint64_t s) {
         std::mt19937_64 rng(s ^ 0x5bd1e995);
         return check_architecture(ArchKind::BLSTM_CNN, s, rng, eps);
       }},
  };

  for (size_t c = 0; c < defs.size(); ++c) {
    GradCheckCase result;
    result.name = defs[c].name;
    for (int i = 0; i < instances_per_case; ++i) {
      uint64_t s = seed + 7919 * c + static_cast<uint64_t>(i);
      auto [worst, checked] = defs[c].run(s);
      result.max_rel_error = std::max(result.max_rel_error, worst);
      result.params_checked += checked;
    }
    result.passed = result.max_rel_error <= tol;
    if (log)
      *log << result.name << ": " << result.params_checked
           << " parameters over " << instances_per_case
           << " instances, max rel error " << result.max_rel_error << " "
           << (result.passed ? "ok" : "FAIL") << "\n";
    report.cases.push_back(result);
  }
  return report;
}

}  // namespace defex::net
