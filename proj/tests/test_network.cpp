#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "defex/errors.hpp"
#include "defex/network.hpp"
#include "defex/util.hpp"
#include "network_internal.hpp"
#include "support/testutil.hpp"

using namespace defex;
using namespace defex::net;
using defex::testutil::TempDir;

namespace {

Mat mat_from(std::vector<std::vector<double>> rows) {
  Mat m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
    }
  }
  return m;
}

Mat random_mat(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (double& v : m.data) v = uniform_real(rng, -scale, scale);
  return m;
}

Lstm zero_lstm(int input, int hidden) {
  Lstm cell;
  cell.input = input;
  cell.hidden = hidden;
  for (Mat* m : {&cell.w_i, &cell.w_f, &cell.w_g, &cell.w_o}) {
    *m = Mat(hidden, input);
  }
  for (Mat* m : {&cell.u_i, &cell.u_f, &cell.u_g, &cell.u_o}) {
    *m = Mat(hidden, hidden);
  }
  for (Vec* v : {&cell.b_i, &cell.b_f, &cell.b_g, &cell.b_o}) {
    v->assign(static_cast<size_t>(hidden), 0.0);
  }
  return cell;
}

void zero_params(Model& model) {
  for (auto& [ptr, count] : param_blocks(model.params, model.kind)) {
    std::fill(ptr, ptr + count, 0.0);
  }
}

std::vector<double> param_copy(Model& model) {
  std::vector<double> out;
  for (auto& [ptr, count] : param_blocks(model.params, model.kind)) {
    out.insert(out.end(), ptr, ptr + count);
  }
  return out;
}

HyperParams toy_hyper() {
  HyperParams h;
  h.num_filters = 3;
  h.kernel_rows = 2;
  h.pool_size = 2;
  h.lstm_hidden = 4;
  h.dropout_rate = 0.0;
  h.epochs = 3;
  h.batch_size = 4;
  h.seed = 17;
  return h;
}

repr::Example make_example(const Mat& values, corpus::SentenceLabel label) {
  repr::InputTensor t;
  t.values = values;
  return {std::move(t), label};
}

// Two-class toy set: class 1 rides a positive band in the first rows, class
// 0 a negative one, plus seeded noise.
std::vector<repr::Example> separable_examples(int count, int rows, int cols,
                                              uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<repr::Example> out;
  for (int i = 0; i < count; ++i) {
    const bool pos = i % 2 == 0;
    Mat m = random_mat(rows, cols, rng, 0.1);
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) += pos ? 1.5 : -1.5;
    }
    out.push_back(make_example(m, pos ? corpus::SentenceLabel::Definition
                                      : corpus::SentenceLabel::NonDefinition));
  }
  return out;
}

}  // namespace

TEST_CASE("conv1d slides dot products over whole rows") {
  Conv1d conv;
  conv.num_filters = 1;
  conv.kernel_rows = 2;
  conv.input_width = 1;
  conv.filters = mat_from({{1.0, 1.0}});
  conv.bias = {0.0};
  conv.activation = Activation::Identity;
  Mat out = conv1d_forward(mat_from({{1}, {2}, {3}}), conv);
  REQUIRE(out.rows == 2);
  REQUIRE(out.cols == 1);
  CHECK(out(0, 0) == doctest::Approx(3.0));
  CHECK(out(1, 0) == doctest::Approx(5.0));
}

TEST_CASE("conv1d relu clamps at zero") {
  Conv1d conv;
  conv.num_filters = 2;
  conv.kernel_rows = 2;
  conv.input_width = 3;
  conv.filters = Mat(2, 6);
  conv.bias = {0.0, -5.0};
  std::mt19937_64 rng(5);
  Mat input = random_mat(4, 3, rng);
  Mat out = conv1d_forward(input, conv);
  REQUIRE(out.rows == 3);
  REQUIRE(out.cols == 2);
  for (int r = 0; r < out.rows; ++r) {
    CHECK(out(r, 0) == 0.0);  // zero filters, zero bias
    CHECK(out(r, 1) == 0.0);  // negative bias clamped by relu
  }
}

TEST_CASE("conv1d output shape and validation") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const int rows = 2 + static_cast<int>(bounded_rand(rng, 6));
    const int width = 1 + static_cast<int>(bounded_rand(rng, 5));
    const int kernel = 1 + static_cast<int>(bounded_rand(rng, rows));
    const int filters = 1 + static_cast<int>(bounded_rand(rng, 4));
    Conv1d conv;
    conv.num_filters = filters;
    conv.kernel_rows = kernel;
    conv.input_width = width;
    conv.filters = random_mat(filters, kernel * width, rng);
    conv.bias.assign(filters, 0.1);
    Mat out = conv1d_forward(random_mat(rows, width, rng), conv);
    CHECK(out.rows == rows - kernel + 1);
    CHECK(out.cols == filters);
  }

  Conv1d conv;
  conv.num_filters = 1;
  conv.kernel_rows = 3;
  conv.input_width = 2;
  conv.filters = Mat(1, 6);
  conv.bias = {0.0};
  CHECK_THROWS_AS(conv1d_forward(Mat(2, 2), conv), ShapeMismatch);
  CHECK_THROWS_AS(conv1d_forward(Mat(4, 3), conv), ShapeMismatch);
}

TEST_CASE("maxpool takes columnwise window maxima") {
  Mat out = maxpool_forward(mat_from({{1}, {5}, {3}, {2}}), 2);
  REQUIRE(out.rows == 2);
  CHECK(out(0, 0) == 5.0);
  CHECK(out(1, 0) == 3.0);

  Mat single = maxpool_forward(mat_from({{1, 9}, {4, 2}, {3, 3}}), 10);
  REQUIRE(single.rows == 1);
  CHECK(single(0, 0) == 4.0);
  CHECK(single(0, 1) == 9.0);

  Mat equal = maxpool_forward(mat_from({{7}, {7}, {7}, {7}}), 2);
  REQUIRE(equal.rows == 2);
  CHECK(equal(0, 0) == 7.0);
  CHECK(equal(1, 0) == 7.0);

  // Ragged final window.
  Mat ragged = maxpool_forward(mat_from({{1}, {2}, {3}, {4}, {9}}), 2);
  REQUIRE(ragged.rows == 3);
  CHECK(ragged(2, 0) == 9.0);
}

TEST_CASE("maxpool backward routes each window's gradient to its argmax") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int rows = 1 + static_cast<int>(bounded_rand(rng, 9));
    const int cols = 1 + static_cast<int>(bounded_rand(rng, 4));
    const int pool = 1 + static_cast<int>(bounded_rand(rng, 4));
    Mat input = random_mat(rows, cols, rng);
    std::vector<int> argmax;
    Mat out = detail::maxpool_argmax(input, pool, &argmax);
    Mat dout = random_mat(out.rows, out.cols, rng);
    Mat dinput(rows, cols);
    detail::pool_backward(argmax, dout, dinput);
    for (int orow = 0; orow < out.rows; ++orow) {
      for (int c = 0; c < cols; ++c) {
        double window_sum = 0.0;
        int nonzero = 0;
        for (int r = orow * pool; r < std::min(rows, (orow + 1) * pool); ++r) {
          if (dinput(r, c) != 0.0) ++nonzero;
          window_sum += dinput(r, c);
        }
        CHECK(window_sum == doctest::Approx(dout(orow, c)));
        CHECK(nonzero <= 1);
      }
    }
  }

  // Ties resolve to the first maximum.
  std::vector<int> argmax;
  Mat tie = detail::maxpool_argmax(mat_from({{2}, {2}}), 2, &argmax);
  Mat dinput(2, 1);
  detail::pool_backward(argmax, mat_from({{1.0}}), dinput);
  CHECK(dinput(0, 0) == 1.0);
  CHECK(dinput(1, 0) == 0.0);
}

TEST_CASE("lstm_step gate arithmetic at zero parameters") {
  Lstm cell = zero_lstm(1, 1);
  auto [h1, c1] = lstm_step({0.0}, {0.0}, {0.0}, cell);
  CHECK(h1[0] == 0.0);
  CHECK(c1[0] == 0.0);

  // With c = 1 and all-zero parameters every sigmoid gate is 1/2 and the
  // candidate is 0, so c' = 1/2 and h' = 0.5 * tanh(0.5).
  auto [h2, c2] = lstm_step({0.0}, {0.0}, {1.0}, cell);
  CHECK(c2[0] == doctest::Approx(0.5));
  CHECK(h2[0] == doctest::Approx(0.5 * std::tanh(0.5)));
  CHECK(h2[0] == doctest::Approx(0.23105857863000487));

  CHECK_THROWS_AS(lstm_step({0.0, 0.0}, {0.0}, {0.0}, cell), ShapeMismatch);
  CHECK_THROWS_AS(lstm_step({0.0}, {0.0, 0.0}, {0.0}, cell), ShapeMismatch);
}

TEST_CASE("lstm cell state contracts under zero input") {
  Lstm cell = zero_lstm(2, 3);
  Vec h(3, 0.0), c{2.0, -3.0, 0.5};
  double prev_norm = std::sqrt(4.0 + 9.0 + 0.25);
  for (int step = 0; step < 6; ++step) {
    auto [h2, c2] = lstm_step({0.0, 0.0}, h, c, cell);
    double norm = 0.0;
    for (double v : c2) norm += v * v;
    norm = std::sqrt(norm);
    CHECK(norm <= prev_norm);
    prev_norm = norm;
    h = h2;
    c = c2;
  }
}

TEST_CASE("bidirectional concatenates directionwise hidden states") {
  std::mt19937_64 rng(12);
  Lstm fwd = zero_lstm(3, 2), bwd = zero_lstm(3, 2);
  for (Mat* m : {&fwd.w_i, &fwd.w_f, &fwd.w_g, &fwd.w_o, &fwd.u_i, &fwd.u_f,
                 &fwd.u_g, &fwd.u_o}) {
    for (double& v : m->data) v = uniform_real(rng, -1.0, 1.0);
  }
  for (Mat* m : {&bwd.w_i, &bwd.w_f, &bwd.w_g, &bwd.w_o, &bwd.u_i, &bwd.u_f,
                 &bwd.u_g, &bwd.u_o}) {
    for (double& v : m->data) v = uniform_real(rng, -1.0, 1.0);
  }

  Mat one = random_mat(1, 3, rng);
  Mat out = bidirectional_forward(one, fwd, bwd);
  REQUIRE(out.rows == 1);
  REQUIRE(out.cols == 4);
  Vec x(one.row(0), one.row(0) + 3);
  auto [hf, cf] = lstm_step(x, {0, 0}, {0, 0}, fwd);
  auto [hb, cb] = lstm_step(x, {0, 0}, {0, 0}, bwd);
  (void)cf;
  (void)cb;
  CHECK(out(0, 0) == doctest::Approx(hf[0]));
  CHECK(out(0, 1) == doctest::Approx(hf[1]));
  CHECK(out(0, 2) == doctest::Approx(hb[0]));
  CHECK(out(0, 3) == doctest::Approx(hb[1]));

  Mat zeros = bidirectional_forward(Mat(4, 3), zero_lstm(3, 2), zero_lstm(3, 2));
  for (double v : zeros.data) CHECK(v == 0.0);
}

TEST_CASE("bidirectional with a shared cell is reversal-symmetric") {
  std::mt19937_64 rng(13);
  Lstm cell = zero_lstm(3, 2);
  for (auto& [ptr, count] : std::vector<std::pair<double*, size_t>>{
           {cell.w_i.data.data(), cell.w_i.data.size()},
           {cell.w_f.data.data(), cell.w_f.data.size()},
           {cell.w_g.data.data(), cell.w_g.data.size()},
           {cell.w_o.data.data(), cell.w_o.data.size()},
           {cell.u_i.data.data(), cell.u_i.data.size()},
           {cell.u_f.data.data(), cell.u_f.data.size()},
           {cell.u_g.data.data(), cell.u_g.data.size()},
           {cell.b_g.data(), cell.b_g.size()}}) {
    for (size_t i = 0; i < count; ++i) ptr[i] = uniform_real(rng, -1.0, 1.0);
  }
  const int T = 5;
  Mat x = random_mat(T, 3, rng);
  Mat reversed(T, 3);
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < 3; ++c) reversed(t, c) = x(T - 1 - t, c);
  }
  Mat y = bidirectional_forward(x, cell, cell);
  Mat z = bidirectional_forward(reversed, cell, cell);
  const int h = 2;
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u < h; ++u) {
      CHECK(z(t, u) == doctest::Approx(y(T - 1 - t, h + u)));
      CHECK(z(t, h + u) == doctest::Approx(y(T - 1 - t, u)));
    }
  }
}

TEST_CASE("layer sequences match the declared stacks") {
  using V = std::vector<std::string>;
  HyperParams h = toy_hyper();
  CHECK(build_model(ArchKind::CNN, 6, 5, h).layer_sequence() ==
        V{"conv", "maxpool", "dense"});
  CHECK(build_model(ArchKind::CBLSTM, 6, 5, h).layer_sequence() ==
        V{"conv", "maxpool", "blstm", "dense"});
  CHECK(build_model(ArchKind::LSTM, 6, 5, h).layer_sequence() ==
        V{"lstm", "dense"});
  CHECK(build_model(ArchKind::BLSTM_CNN, 6, 5, h).layer_sequence() ==
        V{"blstm", "conv", "maxpool", "dense"});

  CHECK(build_model(ArchKind::CNN, 6, 5, h).params.conv.has_value());
  CHECK_FALSE(build_model(ArchKind::CNN, 6, 5, h).params.fwd.has_value());
  CHECK(build_model(ArchKind::LSTM, 6, 5, h).params.fwd.has_value());
  CHECK_FALSE(build_model(ArchKind::LSTM, 6, 5, h).params.bwd.has_value());
  CHECK(build_model(ArchKind::CBLSTM, 6, 5, h).params.bwd.has_value());
}

TEST_CASE("feature dimensions follow the wiring") {
  HyperParams h = toy_hyper();
  // conv: 7 - 2 + 1 = 6 rows, pooled by 2 -> 3, times 3 filters.
  CHECK(build_model(ArchKind::CNN, 7, 5, h).feature_dim() == 9);
  CHECK(build_model(ArchKind::LSTM, 7, 5, h).feature_dim() == 4);
  CHECK(build_model(ArchKind::CBLSTM, 7, 5, h).feature_dim() == 8);
  // blstm keeps 7 rows of width 8; conv -> 6 rows; pool -> 3; times filters.
  CHECK(build_model(ArchKind::BLSTM_CNN, 7, 5, h).feature_dim() == 9);

  HyperParams tall = h;
  tall.kernel_rows = 10;
  CHECK_THROWS_AS(build_model(ArchKind::CNN, 7, 5, tall), ShapeMismatch);
  CHECK_THROWS_AS(build_model(ArchKind::CNN, 0, 5, h), ShapeMismatch);
}

TEST_CASE("zero-parameter models output one half") {
  HyperParams h = toy_hyper();
  for (ArchKind kind : {ArchKind::CNN, ArchKind::CBLSTM, ArchKind::LSTM,
                        ArchKind::BLSTM_CNN}) {
    Model m = build_model(kind, 6, 5, h);
    zero_params(m);
    std::mt19937_64 rng(21);
    CHECK(forward(m, random_mat(6, 5, rng)) == doctest::Approx(0.5));
  }
}

TEST_CASE("forward stays in (0,1), is pure, and respects input shape") {
  HyperParams h = toy_hyper();
  std::mt19937_64 rng(22);
  for (ArchKind kind : {ArchKind::CNN, ArchKind::CBLSTM, ArchKind::LSTM,
                        ArchKind::BLSTM_CNN}) {
    Model m = build_model(kind, 6, 5, h);
    for (int trial = 0; trial < 10; ++trial) {
      Mat x = random_mat(6, 5, rng, 3.0);
      double p1 = forward(m, x);
      double p2 = forward(m, x);
      CHECK(p1 > 0.0);
      CHECK(p1 < 1.0);
      CHECK(p1 == p2);
    }
    CHECK_THROWS_AS(forward(m, Mat(5, 5)), ShapeMismatch);
    CHECK_THROWS_AS(forward(m, Mat(6, 4)), ShapeMismatch);
  }
}

TEST_CASE("layer order matters: CBLSTM and BLSTM_CNN disagree somewhere") {
  HyperParams h = toy_hyper();
  Model a = build_model(ArchKind::CBLSTM, 4, 6, h);
  Model b = build_model(ArchKind::BLSTM_CNN, 4, 6, h);
  std::mt19937_64 rng(23);
  bool differ = false;
  for (int trial = 0; trial < 8 && !differ; ++trial) {
    Mat x = random_mat(4, 6, rng);
    differ = std::abs(forward(a, x) - forward(b, x)) > 1e-12;
  }
  CHECK(differ);
}

TEST_CASE("binary cross-entropy identities") {
  for (double p : {0.1, 0.5, 0.7, 0.99}) {
    const double logit = std::log(p / (1.0 - p));
    CHECK(bce_loss_from_logit(logit, 1.0) == doctest::Approx(-std::log(p)));
    CHECK(bce_loss_from_logit(logit, 0.0) ==
          doctest::Approx(-std::log(1.0 - p)));
    CHECK(bce_logit_grad(p, 1.0) == doctest::Approx(p - 1.0));
    CHECK(bce_logit_grad(p, 0.0) == doctest::Approx(p));
  }
  CHECK(bce_logit_grad(0.5, 0.5) == 0.0);
  // Stable at extreme logits.
  CHECK(std::isfinite(bce_loss_from_logit(1000.0, 0.0)));
  CHECK(std::isfinite(bce_loss_from_logit(-1000.0, 1.0)));
  CHECK(bce_loss_from_logit(1000.0, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("analytic gradients match finite differences on a small model") {
  // Independent central-difference oracle over every parameter of a CNN,
  // written out here rather than reusing the built-in verification suite.
  HyperParams h = toy_hyper();
  h.dropout_rate = 0.0;
  Model m = build_model(ArchKind::CNN, 6, 5, h);
  std::mt19937_64 rng(31);
  Mat x = random_mat(6, 5, rng);
  const double gold = 1.0;

  Gradients grads = backward(m, x, gold);
  auto gblocks = param_blocks(grads, m.kind);
  auto pblocks = param_blocks(m.params, m.kind);
  const double eps = 1e-5;
  double worst = 0.0;
  for (size_t blk = 0; blk < pblocks.size(); ++blk) {
    for (size_t i = 0; i < pblocks[blk].second; ++i) {
      double* p = pblocks[blk].first + i;
      const double saved = *p;
      *p = saved + eps;
      const double up = -std::log(std::max(forward(m, x), 1e-300));
      *p = saved - eps;
      const double down = -std::log(std::max(forward(m, x), 1e-300));
      *p = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = gblocks[blk].first[i];
      const double denom =
          std::max(std::abs(numeric) + std::abs(analytic), 1e-3);
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("built-in gradient verification passes at reduced size") {
  std::ostringstream log;
  GradCheckReport report = run_gradient_check_suite(3, 1e-5, 1e-4, 99, &log);
  CHECK(report.all_passed());
  CHECK(report.cases.size() == 9);
  CHECK(report.worst() < 1e-4);
  for (const auto& c : report.cases) {
    CHECK(c.params_checked > 0);
    CHECK(c.passed);
  }
}

TEST_CASE("one full-batch sgd step equals the averaged analytic gradient") {
  HyperParams h = toy_hyper();
  h.optimizer = Optimizer::Sgd;
  h.learning_rate = 0.05;
  h.epochs = 1;
  h.batch_size = 8;
  h.dropout_rate = 0.0;
  Model m = build_model(ArchKind::CNN, 6, 5, h);
  auto data = separable_examples(8, 6, 5, 77);

  Model expected = m;
  std::vector<double> sum(param_count(m), 0.0);
  for (const auto& ex : data) {
    Gradients g = backward(expected, ex.first.values,
                           ex.second == corpus::SentenceLabel::Definition
                               ? 1.0
                               : 0.0);
    size_t off = 0;
    for (auto& [ptr, count] : param_blocks(g, m.kind)) {
      for (size_t i = 0; i < count; ++i, ++off) sum[off] += ptr[i];
    }
  }

  train(m, data, {});
  size_t off = 0;
  auto eblocks = param_blocks(expected.params, m.kind);
  auto mblocks = param_blocks(m.params, m.kind);
  for (size_t blk = 0; blk < mblocks.size(); ++blk) {
    for (size_t i = 0; i < mblocks[blk].second; ++i, ++off) {
      const double want =
          eblocks[blk].first[i] - 0.05 * sum[off] / 8.0;
      CHECK(mblocks[blk].first[i] == doctest::Approx(want).epsilon(1e-10));
    }
  }
}

TEST_CASE("training loss trends down on a memorizable set") {
  HyperParams h = toy_hyper();
  h.epochs = 10;
  h.learning_rate = 5e-3;
  h.batch_size = 4;
  Model m = build_model(ArchKind::CNN, 6, 5, h);
  auto data = separable_examples(8, 6, 5, 81);
  History history = train(m, data, data);
  REQUIRE(history.epochs.size() == 10);
  int increases = 0;
  for (size_t e = 1; e < history.epochs.size(); ++e) {
    if (history.epochs[e].train_loss >
        history.epochs[e - 1].train_loss + 1e-12) {
      ++increases;
    }
  }
  CHECK(increases <= 1);
  CHECK(history.epochs.back().train_loss < history.epochs.front().train_loss);
  CHECK(history.epochs.front().epoch == 1);
  CHECK(history.epochs.back().epoch == 10);
  CHECK(history.epochs.back().val_f1 > 0.0);
}

TEST_CASE("learning rate zero leaves parameters bitwise unchanged") {
  HyperParams h = toy_hyper();
  h.learning_rate = 0.0;
  h.dropout_rate = 0.2;
  Model m = build_model(ArchKind::LSTM, 6, 5, h);
  std::vector<double> before = param_copy(m);
  train(m, separable_examples(8, 6, 5, 3), {});
  std::vector<double> after = param_copy(m);
  REQUIRE(before.size() == after.size());
  CHECK(std::memcmp(before.data(), after.data(),
                    before.size() * sizeof(double)) == 0);
}

TEST_CASE("identical seeds give identical trained parameters") {
  auto run = [] {
    HyperParams h = toy_hyper();
    h.dropout_rate = 0.3;
    h.seed = 404;
    Model m = build_model(ArchKind::CBLSTM, 6, 5, h);
    train(m, separable_examples(12, 6, 5, 9), {});
    return param_copy(m);
  };
  std::vector<double> a = run();
  std::vector<double> b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);

  HyperParams h = toy_hyper();
  h.seed = 405;
  Model other = build_model(ArchKind::CBLSTM, 6, 5, h);
  train(other, separable_examples(12, 6, 5, 9), {});
  CHECK(param_copy(other) != a);
}

TEST_CASE("training failure modes") {
  HyperParams h = toy_hyper();
  Model m = build_model(ArchKind::CNN, 6, 5, h);
  CHECK_THROWS_AS(train(m, {}, {}), EmptyTrainingSet);

  Model poisoned = build_model(ArchKind::CNN, 6, 5, h);
  poisoned.params.out.bias[0] = std::nan("");
  auto data = separable_examples(4, 6, 5, 2);
  CHECK_THROWS_AS(train(poisoned, data, {}), NonFiniteLoss);
}

TEST_CASE("checkpoints round-trip parameters bitwise") {
  TempDir tmp("net_checkpoint");
  HyperParams h = toy_hyper();
  h.dropout_rate = 0.15;
  h.seed = 321;
  Model m = build_model(ArchKind::CBLSTM, 6, 5, h);
  train(m, separable_examples(8, 6, 5, 14), {});

  repr::RepresentationConfig config;
  config.kind = repr::ReprKind::ML;
  config.k = 3;
  config.label_space.labels = {"a", "b"};
  config.n = 4;
  config.d_max = 2;
  const std::string manifest = R"({"path":"vec.txt","dimension":3})";
  const std::string path = tmp.path("model.ckpt");
  save_checkpoint(m, config, manifest, path);

  Checkpoint back = load_checkpoint(path);
  CHECK(back.model.kind == ArchKind::CBLSTM);
  CHECK(back.model.input_rows == 6);
  CHECK(back.model.input_width == 5);
  CHECK(back.model.hyper.dropout_rate == 0.15);
  CHECK(back.model.hyper.seed == 321);
  CHECK(back.config->kind == repr::ReprKind::ML);
  CHECK(back.config->label_space.labels == config.label_space.labels);
  CHECK(back.config->n == 4);
  CHECK(nlohmann::json::parse(back.store_manifest_json) ==
        nlohmann::json::parse(manifest));

  std::vector<double> orig = param_copy(m);
  std::vector<double> loaded = param_copy(back.model);
  REQUIRE(orig.size() == loaded.size());
  CHECK(std::memcmp(orig.data(), loaded.data(),
                    orig.size() * sizeof(double)) == 0);

  const double p_orig = forward(m, Mat(6, 5));
  const double p_loaded = forward(back.model, Mat(6, 5));
  CHECK(p_orig == p_loaded);
}

TEST_CASE("checkpoint loader rejects junk and truncation") {
  TempDir tmp("net_checkpoint_bad");
  const std::string junk = tmp.path("junk.ckpt");
  defex::testutil::write_text(junk, "not a checkpoint\n");
  CHECK_THROWS_AS(load_checkpoint(junk), Error);

  HyperParams h = toy_hyper();
  Model m = build_model(ArchKind::CNN, 6, 5, h);
  repr::RepresentationConfig config;
  config.kind = repr::ReprKind::M;
  config.k = 5;
  config.n = 4;
  config.d_max = 2;
  const std::string path = tmp.path("model.ckpt");
  save_checkpoint(m, config, "{}", path);

  std::string whole = defex::testutil::read_text(path);
  const std::string cut = tmp.path("cut.ckpt");
  defex::testutil::write_text(cut, whole.substr(0, whole.size() - 16));
  CHECK_THROWS_AS(load_checkpoint(cut), Error);

  CHECK_THROWS_AS(load_checkpoint(tmp.path("missing.ckpt")), Error);
}

TEST_CASE("hyperparameter defaults") {
  HyperParams h;
  CHECK(h.batch_size == 32);
  CHECK(h.epochs == 10);
  CHECK(h.num_filters == 100);
  CHECK(h.kernel_rows == 3);
  CHECK(h.pool_size == 2);
  CHECK(h.lstm_hidden == 100);
  CHECK(h.dropout_rate == 0.2);
  CHECK(h.learning_rate == 1e-3);
  CHECK(h.optimizer == Optimizer::Adam);
  CHECK(h.adam_beta1 == 0.9);
  CHECK(h.adam_beta2 == 0.999);
  CHECK(h.adam_eps == 1e-8);
}
