#pragma once

#include <utility>
#include <vector>

#include "reaps/tensor.hpp"

// Differentiable primitives. All of them run their reductions through the
// kernels module (double accumulators, fixed lane order), store results in
// the tensor's scalar type and register a backward rule on the graph.

namespace reaps {

enum class GapMode { sum, mean };

template <typename S> TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b);
template <typename S> TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b);
template <typename S> TensorT<S> scale(const TensorT<S>& x, S s);
template <typename S> TensorT<S> sum(const TensorT<S>& x);  // -> rank-0 scalar
template <typename S> TensorT<S> relu(const TensorT<S>& x);
template <typename S> TensorT<S> sigmoid(const TensorT<S>& x);
template <typename S> TensorT<S> tanh(const TensorT<S>& x);
template <typename S> TensorT<S> reshape(const TensorT<S>& x, Shape shape);

// 1-D slice / concatenation
template <typename S> TensorT<S> narrow(const TensorT<S>& x, int start, int len);
template <typename S> TensorT<S> concat(const std::vector<TensorT<S>>& xs);

// input [B,Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout] -> [B,Cout,H',W']
// H' = (H + 2*pad - kh)/stride + 1 (floor), likewise W'.
template <typename S>
TensorT<S> conv2d(const TensorT<S>& input, const TensorT<S>& kernel, const TensorT<S>& bias,
                  int stride, int pad);

// input [B,D] (or [D]), weight [D,K], bias [K] -> [B,K] (or [K])
template <typename S>
TensorT<S> linear(const TensorT<S>& input, const TensorT<S>& weight, const TensorT<S>& bias);
template <typename S>
TensorT<S> matmul(const TensorT<S>& input, const TensorT<S>& weight);  // no bias

// [B,C,H,W] -> [B,C]; sum mode adds the spatial cells, mean divides by H*W
template <typename S> TensorT<S> global_avg_pool(const TensorT<S>& x, GapMode mode);

// [C,H,W] -> [C,H/kh,W/kw]; kh must divide H and kw must divide W
template <typename S> TensorT<S> avg_pool_rect(const TensorT<S>& x, int kh, int kw);

// [B,C,H,W], square window, no padding; backward routes to the argmax cell
// (first in scan order on ties)
template <typename S> TensorT<S> max_pool2d(const TensorT<S>& x, int k, int stride);

// logits [B,K] (or [K]), labels.size() == B -> rank-0 mean NLL;
// d/dlogits = (softmax - onehot)/B
template <typename S>
TensorT<S> softmax_cross_entropy(const TensorT<S>& logits, const std::vector<int>& labels);

// [C,H,W] -> [C,outH,outW]; half-pixel centers: src = (dst+0.5)*scale - 0.5,
// clamped. Gradient flows to the four source taps of each output pixel.
template <typename S> TensorT<S> bilinear_resize(const TensorT<S>& img, int out_h, int out_w);

// [C,H,W] crop with half-open pixel bounds
template <typename S>
TensorT<S> slice_hw(const TensorT<S>& img, int y0, int y1, int x0, int x1);

template <typename S>
struct LstmCellParamsT {
    TensorT<S> w_ih;  // [D, 4H], gate blocks ordered i,f,g,o
    TensorT<S> w_hh;  // [H, 4H]
    TensorT<S> b;     // [4H]
};
using LstmCellParams = LstmCellParamsT<float>;

// x [D], h [H], c [H] -> (h', c'):
//   i,f,o = sigmoid(gate), g = tanh(gate); c' = f*c + i*g; h' = o*tanh(c')
template <typename S>
std::pair<TensorT<S>, TensorT<S>> lstm_cell(const TensorT<S>& x, const TensorT<S>& h,
                                            const TensorT<S>& c, const LstmCellParamsT<S>& p);

}  // namespace reaps
