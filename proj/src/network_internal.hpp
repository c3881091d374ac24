#pragma once

// Building blocks behind the network module's public ops, shared with the
// gradient-check driver and exercised directly by tests.

#include <vector>

#include "defex/network.hpp"

namespace defex::net::detail {

double sigmoid(double z);

// Convolution before the activation is applied.
Mat conv_pre(const Mat& input, const Conv1d& conv);
Mat apply_activation(const Mat& pre, Activation a);

// argmax (when non-null) receives, per output cell in row-major order, the
// input row the maximum came from; first row wins ties.
Mat maxpool_argmax(const Mat& input, int pool_size, std::vector<int>* argmax);
void pool_backward(const std::vector<int>& argmax, const Mat& dout,
                   Mat& dinput);

void conv_backward(const Mat& input, const Mat& pre, const Mat& dout,
                   const Conv1d& conv, Conv1d& gconv, Mat* dinput);

// Per-step activations of one direction's pass. Step s consumed input row s
// (forward) or rows - 1 - s (reverse).
struct LstmTrace {
  int steps = 0;
  std::vector<Vec> i, f, g, o, c, h, tanh_c;
};

void lstm_run(const Mat& input, bool reverse, const Lstm& cell,
              LstmTrace& trace);

// dh_step (optional) holds per-step gradients on the emitted hidden states,
// indexed by step; dh_final (optional) adds onto the last step. Accumulates
// parameter gradients into gcell and, when dinput is non-null, input-row
// gradients in original row order.
void lstm_backward(const Mat& input, bool reverse, const Lstm& cell,
                   const LstmTrace& trace, const std::vector<Vec>* dh_step,
                   const Vec* dh_final, Lstm& gcell, Mat* dinput);

Gradients zero_gradients(const Model& model);

int conv_rows_out(int rows, int kernel_rows);
int pool_rows_out(int rows, int pool_size);

}  // namespace defex::net::detail
