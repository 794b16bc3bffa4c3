#include "reaps/ops.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "reaps/kernels.hpp"

namespace reaps {

namespace {

template <typename S>
void check_same_shape(const char* op, const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": operand shapes differ: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

template <typename S>
void check_ndim(const char* op, const TensorT<S>& t, int nd) {
    if (t.ndim() != nd)
        throw ShapeError(std::string(op) + ": expected " + std::to_string(nd) +
                         "-d tensor, got shape " + shape_str(t.shape()));
}

// add this op's contribution (double scratch) into a parent grad, one cast each
template <typename S>
void add_cast(std::vector<S>& grad, const std::vector<double>& acc) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        grad[i] += static_cast<S>(acc[i]);
}

}  // namespace

// ----------------------------------------------------------- elementwise ops

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    check_same_shape("add", a, b);
    std::vector<S> out(a.numel());
    kern::add(a.data(), b.data(), out.data(), out.size());
    return make_op_node<S>("add", a.shape(), std::move(out), {a, b},
                           [](TensorNode<S>& n) {
                               for (int i = 0; i < 2; ++i) {
                                   auto& p = *n.parents[static_cast<std::size_t>(i)];
                                   if (!p.requires_grad) continue;
                                   for (std::size_t j = 0; j < n.grad.size(); ++j)
                                       p.grad[j] += n.grad[j];
                               }
                           });
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    check_same_shape("mul", a, b);
    std::vector<S> out(a.numel());
    kern::mul(a.data(), b.data(), out.data(), out.size());
    return make_op_node<S>("mul", a.shape(), std::move(out), {a, b},
                           [](TensorNode<S>& n) {
                               auto& pa = *n.parents[0];
                               auto& pb = *n.parents[1];
                               if (pa.requires_grad)
                                   for (std::size_t j = 0; j < n.grad.size(); ++j)
                                       pa.grad[j] += n.grad[j] * pb.data[j];
                               if (pb.requires_grad)
                                   for (std::size_t j = 0; j < n.grad.size(); ++j)
                                       pb.grad[j] += n.grad[j] * pa.data[j];
                           });
}

template <typename S>
TensorT<S> scale(const TensorT<S>& x, S s) {
    std::vector<S> out(x.numel());
    kern::scale(x.data(), s, out.data(), out.size());
    return make_op_node<S>("scale", x.shape(), std::move(out), {x},
                           [s](TensorNode<S>& n) {
                               auto& p = *n.parents[0];
                               if (!p.requires_grad) return;
                               for (std::size_t j = 0; j < n.grad.size(); ++j)
                                   p.grad[j] += s * n.grad[j];
                           });
}

template <typename S>
TensorT<S> sum(const TensorT<S>& x) {
    const double s = kern::sum(x.data(), x.numel());
    return make_op_node<S>("sum", {}, {static_cast<S>(s)}, {x},
                           [](TensorNode<S>& n) {
                               auto& p = *n.parents[0];
                               if (!p.requires_grad) return;
                               const S g = n.grad[0];
                               for (auto& v : p.grad) v += g;
                           });
}

template <typename S>
TensorT<S> relu(const TensorT<S>& x) {
    std::vector<S> out(x.numel());
    kern::relu(x.data(), out.data(), out.size());
    return make_op_node<S>("relu", x.shape(), std::move(out), {x},
                           [](TensorNode<S>& n) {
                               auto& p = *n.parents[0];
                               if (!p.requires_grad) return;
                               kern::relu_bwd(p.data.data(), n.grad.data(), p.grad.data(),
                                              n.grad.size());
                           });
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x) {
    std::vector<S> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<S>(1.0 / (1.0 + std::exp(-static_cast<double>(x.data()[i]))));
    return make_op_node<S>("sigmoid", x.shape(), std::move(out), {x},
                           [](TensorNode<S>& n) {
                               auto& p = *n.parents[0];
                               if (!p.requires_grad) return;
                               for (std::size_t j = 0; j < n.grad.size(); ++j) {
                                   const double y = static_cast<double>(n.data[j]);
                                   p.grad[j] += static_cast<S>(static_cast<double>(n.grad[j]) *
                                                               y * (1.0 - y));
                               }
                           });
}

template <typename S>
TensorT<S> tanh(const TensorT<S>& x) {
    std::vector<S> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<S>(std::tanh(static_cast<double>(x.data()[i])));
    return make_op_node<S>("tanh", x.shape(), std::move(out), {x},
                           [](TensorNode<S>& n) {
                               auto& p = *n.parents[0];
                               if (!p.requires_grad) return;
                               for (std::size_t j = 0; j < n.grad.size(); ++j) {
                                   const double y = static_cast<double>(n.data[j]);
                                   p.grad[j] += static_cast<S>(static_cast<double>(n.grad[j]) *
                                                               (1.0 - y * y));
                               }
                           });
}

template <typename S>
TensorT<S> reshape(const TensorT<S>& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: cannot view shape " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    std::vector<S> out(x.vec());
    return make_op_node<S>("reshape", std::move(shape), std::move(out), {x},
                           [](TensorNode<S>& n) {
                               auto& p = *n.parents[0];
                               if (!p.requires_grad) return;
                               for (std::size_t j = 0; j < n.grad.size(); ++j)
                                   p.grad[j] += n.grad[j];
                           });
}

template <typename S>
TensorT<S> narrow(const TensorT<S>& x, int start, int len) {
    check_ndim("narrow", x, 1);
    if (start < 0 || len < 1 || start + len > x.dim(0))
        throw ShapeError("narrow: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of bounds for shape " +
                         shape_str(x.shape()));
    std::vector<S> out(x.data() + start, x.data() + start + len);
    return make_op_node<S>("narrow", {len}, std::move(out), {x},
                           [start](TensorNode<S>& n) {
                               auto& p = *n.parents[0];
                               if (!p.requires_grad) return;
                               for (std::size_t j = 0; j < n.grad.size(); ++j)
                                   p.grad[static_cast<std::size_t>(start) + j] += n.grad[j];
                           });
}

template <typename S>
TensorT<S> concat(const std::vector<TensorT<S>>& xs) {
    if (xs.empty()) throw ShapeError("concat: empty input list");
    std::size_t total = 0;
    for (const auto& x : xs) {
        check_ndim("concat", x, 1);
        total += x.numel();
    }
    std::vector<S> out;
    out.reserve(total);
    for (const auto& x : xs) out.insert(out.end(), x.vec().begin(), x.vec().end());
    return make_op_node<S>("concat", {static_cast<int>(total)}, std::move(out), xs,
                           [](TensorNode<S>& n) {
                               std::size_t off = 0;
                               for (auto& pp : n.parents) {
                                   auto& p = *pp;
                                   if (p.requires_grad)
                                       for (std::size_t j = 0; j < p.data.size(); ++j)
                                           p.grad[j] += n.grad[off + j];
                                   off += p.data.size();
                               }
                           });
}

// -------------------------------------------------------------------- conv2d

namespace {

// patch rows: col[p][q], p = oy*Wp+ox, q = (ci*kh + r)*kw + s
template <typename S>
void im2col(const S* src, int cin, int h, int w, int kh, int kw, int stride, int pad, int hp,
            int wp, S* col) {
    S* dst = col;
    for (int oy = 0; oy < hp; ++oy) {
        for (int ox = 0; ox < wp; ++ox) {
            for (int ci = 0; ci < cin; ++ci) {
                for (int r = 0; r < kh; ++r) {
                    const int iy = oy * stride - pad + r;
                    if (iy < 0 || iy >= h) {
                        for (int s = 0; s < kw; ++s) *dst++ = S(0);
                        continue;
                    }
                    const S* row = src + (static_cast<std::size_t>(ci) * h + iy) * w;
                    for (int s = 0; s < kw; ++s) {
                        const int ix = ox * stride - pad + s;
                        *dst++ = (ix >= 0 && ix < w) ? row[ix] : S(0);
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename S>
TensorT<S> conv2d(const TensorT<S>& input, const TensorT<S>& kernel, const TensorT<S>& bias,
                  int stride, int pad) {
    check_ndim("conv2d", input, 4);
    check_ndim("conv2d", kernel, 4);
    check_ndim("conv2d", bias, 1);
    const int b = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kernel.dim(1) != cin)
        throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) +
                         " does not match input " + shape_str(input.shape()) +
                         " on the channel dimension");
    if (bias.dim(0) != cout)
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match kernel " +
                         shape_str(kernel.shape()));
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    if (pad < 0) throw ShapeError("conv2d: pad must be >= 0");
    if (kh > h + 2 * pad || kw > w + 2 * pad)
        throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) +
                         " larger than padded input " + shape_str(input.shape()));

    const int hp = (h + 2 * pad - kh) / stride + 1;
    const int wp = (w + 2 * pad - kw) / stride + 1;
    const int pcount = hp * wp;
    const int q = cin * kh * kw;

    auto col = std::make_shared<std::vector<S>>(
        static_cast<std::size_t>(b) * pcount * q);
    std::vector<S> out(static_cast<std::size_t>(b) * cout * pcount);
    for (int bi = 0; bi < b; ++bi) {
        S* colb = col->data() + static_cast<std::size_t>(bi) * pcount * q;
        im2col(input.data() + static_cast<std::size_t>(bi) * cin * h * w, cin, h, w, kh, kw,
               stride, pad, hp, wp, colb);
        S* outb = out.data() + static_cast<std::size_t>(bi) * cout * pcount;
        for (int p = 0; p < pcount; ++p) {
            const S* colrow = colb + static_cast<std::size_t>(p) * q;
            for (int co = 0; co < cout; ++co) {
                const double acc =
                    static_cast<double>(bias.data()[co]) +
                    kern::dot(kernel.data() + static_cast<std::size_t>(co) * q, colrow,
                              static_cast<std::size_t>(q));
                outb[static_cast<std::size_t>(co) * pcount + p] = static_cast<S>(acc);
            }
        }
    }

    auto bwd = [col, b, cin, h, w, cout, kh, kw, stride, pad, hp, wp, pcount,
                q](TensorNode<S>& n) {
        auto& pin = *n.parents[0];
        auto& pker = *n.parents[1];
        auto& pbias = *n.parents[2];
        const S* kdata = pker.data.data();

        std::vector<double> acc_k;
        if (pker.requires_grad) acc_k.assign(pker.data.size(), 0.0);
        std::vector<double> acc_b;
        if (pbias.requires_grad) acc_b.assign(pbias.data.size(), 0.0);
        std::vector<double> acc_in, acc_q;
        if (pin.requires_grad) {
            acc_in.assign(static_cast<std::size_t>(cin) * h * w, 0.0);
            acc_q.assign(static_cast<std::size_t>(q), 0.0);
        }

        for (int bi = 0; bi < b; ++bi) {
            const S* gout = n.grad.data() + static_cast<std::size_t>(bi) * cout * pcount;
            const S* colb = col->data() + static_cast<std::size_t>(bi) * pcount * q;

            if (pker.requires_grad) {
                for (int co = 0; co < cout; ++co) {
                    double* row = acc_k.data() + static_cast<std::size_t>(co) * q;
                    const S* grow = gout + static_cast<std::size_t>(co) * pcount;
                    for (int p = 0; p < pcount; ++p)
                        kern::axpy_acc(row, grow[p],
                                       colb + static_cast<std::size_t>(p) * q,
                                       static_cast<std::size_t>(q));
                }
            }
            if (pbias.requires_grad) {
                for (int co = 0; co < cout; ++co)
                    acc_b[static_cast<std::size_t>(co)] +=
                        kern::sum(gout + static_cast<std::size_t>(co) * pcount,
                                  static_cast<std::size_t>(pcount));
            }
            if (pin.requires_grad) {
                std::fill(acc_in.begin(), acc_in.end(), 0.0);
                for (int p = 0; p < pcount; ++p) {
                    std::fill(acc_q.begin(), acc_q.end(), 0.0);
                    for (int co = 0; co < cout; ++co)
                        kern::axpy_acc(acc_q.data(),
                                       gout[static_cast<std::size_t>(co) * pcount + p],
                                       kdata + static_cast<std::size_t>(co) * q,
                                       static_cast<std::size_t>(q));
                    // col2im scatter for patch p
                    const int oy = p / wp, ox = p % wp;
                    const double* src = acc_q.data();
                    for (int ci = 0; ci < cin; ++ci) {
                        for (int r = 0; r < kh; ++r) {
                            const int iy = oy * stride - pad + r;
                            if (iy < 0 || iy >= h) {
                                src += kw;
                                continue;
                            }
                            double* row =
                                acc_in.data() + (static_cast<std::size_t>(ci) * h + iy) * w;
                            for (int s = 0; s < kw; ++s, ++src) {
                                const int ix = ox * stride - pad + s;
                                if (ix >= 0 && ix < w) row[ix] += *src;
                            }
                        }
                    }
                }
                S* gin = pin.grad.data() + static_cast<std::size_t>(bi) * cin * h * w;
                for (std::size_t i = 0; i < acc_in.size(); ++i)
                    gin[i] += static_cast<S>(acc_in[i]);
            }
        }
        if (pker.requires_grad) add_cast(pker.grad, acc_k);
        if (pbias.requires_grad) add_cast(pbias.grad, acc_b);
    };

    return make_op_node<S>("conv2d", {b, cout, hp, wp}, std::move(out), {input, kernel, bias},
                           std::move(bwd));
}

// ------------------------------------------------------------ linear, matmul

namespace {

template <typename S>
TensorT<S> linear_impl(const char* op, const TensorT<S>& input, const TensorT<S>& weight,
                       const TensorT<S>* bias) {
    check_ndim(op, weight, 2);
    const bool flat = input.ndim() == 1;
    if (!flat) check_ndim(op, input, 2);
    const int b = flat ? 1 : input.dim(0);
    const int d = flat ? input.dim(0) : input.dim(1);
    const int k = weight.dim(1);
    if (weight.dim(0) != d)
        throw ShapeError(std::string(op) + ": input " + shape_str(input.shape()) +
                         " does not match weight " + shape_str(weight.shape()));
    if (bias && bias->dim(0) != k)
        throw ShapeError(std::string(op) + ": bias " + shape_str(bias->shape()) +
                         " does not match weight " + shape_str(weight.shape()));

    std::vector<S> out(static_cast<std::size_t>(b) * k);
    std::vector<double> acc(static_cast<std::size_t>(k));
    for (int bi = 0; bi < b; ++bi) {
        if (bias)
            for (int j = 0; j < k; ++j) acc[static_cast<std::size_t>(j)] =
                static_cast<double>(bias->data()[j]);
        else
            std::fill(acc.begin(), acc.end(), 0.0);
        const S* xrow = input.data() + static_cast<std::size_t>(bi) * d;
        for (int di = 0; di < d; ++di)
            kern::axpy_acc(acc.data(), xrow[di],
                           weight.data() + static_cast<std::size_t>(di) * k,
                           static_cast<std::size_t>(k));
        S* orow = out.data() + static_cast<std::size_t>(bi) * k;
        for (int j = 0; j < k; ++j) orow[j] = static_cast<S>(acc[static_cast<std::size_t>(j)]);
    }

    auto bwd = [b, d, k](TensorNode<S>& n) {
        auto& pin = *n.parents[0];
        auto& pw = *n.parents[1];
        const bool has_bias = n.parents.size() > 2;

        if (pin.requires_grad) {
            for (int bi = 0; bi < b; ++bi) {
                const S* grow = n.grad.data() + static_cast<std::size_t>(bi) * k;
                S* gin = pin.grad.data() + static_cast<std::size_t>(bi) * d;
                for (int di = 0; di < d; ++di)
                    gin[di] += static_cast<S>(
                        kern::dot(grow, pw.data.data() + static_cast<std::size_t>(di) * k,
                                  static_cast<std::size_t>(k)));
            }
        }
        if (pw.requires_grad) {
            std::vector<double> acc_w(pw.data.size(), 0.0);
            for (int bi = 0; bi < b; ++bi) {
                const S* grow = n.grad.data() + static_cast<std::size_t>(bi) * k;
                const S* xrow = pin.data.data() + static_cast<std::size_t>(bi) * d;
                for (int di = 0; di < d; ++di)
                    kern::axpy_acc(acc_w.data() + static_cast<std::size_t>(di) * k, xrow[di],
                                   grow, static_cast<std::size_t>(k));
            }
            add_cast(pw.grad, acc_w);
        }
        if (has_bias && n.parents[2]->requires_grad) {
            auto& pb = *n.parents[2];
            std::vector<double> acc_b(pb.data.size(), 0.0);
            for (int bi = 0; bi < b; ++bi)
                kern::axpy_acc(acc_b.data(), S(1),
                               n.grad.data() + static_cast<std::size_t>(bi) * k,
                               static_cast<std::size_t>(k));
            add_cast(pb.grad, acc_b);
        }
    };

    Shape oshape = flat ? Shape{k} : Shape{b, k};
    std::vector<TensorT<S>> parents{input, weight};
    if (bias) parents.push_back(*bias);
    return make_op_node<S>(op, std::move(oshape), std::move(out), std::move(parents),
                           std::move(bwd));
}

}  // namespace

template <typename S>
TensorT<S> linear(const TensorT<S>& input, const TensorT<S>& weight, const TensorT<S>& bias) {
    check_ndim("linear", bias, 1);
    return linear_impl("linear", input, weight, &bias);
}

template <typename S>
TensorT<S> matmul(const TensorT<S>& input, const TensorT<S>& weight) {
    return linear_impl<S>("matmul", input, weight, nullptr);
}

// ------------------------------------------------------------------- pooling

template <typename S>
TensorT<S> global_avg_pool(const TensorT<S>& x, GapMode mode) {
    check_ndim("global_avg_pool", x, 4);
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int plane = h * w;
    std::vector<S> out(static_cast<std::size_t>(b) * c);
    for (int i = 0; i < b * c; ++i) {
        double s = kern::sum(x.data() + static_cast<std::size_t>(i) * plane,
                             static_cast<std::size_t>(plane));
        if (mode == GapMode::mean) s /= plane;
        out[static_cast<std::size_t>(i)] = static_cast<S>(s);
    }
    return make_op_node<S>("global_avg_pool", {b, c}, std::move(out), {x},
                           [plane, mode](TensorNode<S>& n) {
                               auto& p = *n.parents[0];
                               if (!p.requires_grad) return;
                               for (std::size_t i = 0; i < n.grad.size(); ++i) {
                                   const S g = mode == GapMode::mean
                                                   ? static_cast<S>(
                                                         static_cast<double>(n.grad[i]) / plane)
                                                   : n.grad[i];
                                   S* gp = p.grad.data() + i * static_cast<std::size_t>(plane);
                                   for (int j = 0; j < plane; ++j) gp[j] += g;
                               }
                           });
}

template <typename S>
TensorT<S> avg_pool_rect(const TensorT<S>& x, int kh, int kw) {
    check_ndim("avg_pool_rect", x, 3);
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (kh < 1 || kw < 1 || h % kh != 0 || w % kw != 0)
        throw ShapeError("avg_pool_rect: kernel " + std::to_string(kh) + "x" +
                         std::to_string(kw) + " does not evenly divide input " +
                         shape_str(x.shape()));
    const int oh = h / kh, ow = w / kw;
    const double inv = 1.0 / (static_cast<double>(kh) * kw);
    std::vector<S> out(static_cast<std::size_t>(c) * oh * ow);
    for (int ci = 0; ci < c; ++ci) {
        const S* src = x.data() + static_cast<std::size_t>(ci) * h * w;
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                double s = 0.0;
                for (int r = 0; r < kh; ++r)
                    s += kern::sum(src + (static_cast<std::size_t>(i * kh + r)) * w + j * kw,
                                   static_cast<std::size_t>(kw));
                out[(static_cast<std::size_t>(ci) * oh + i) * ow + j] =
                    static_cast<S>(s * inv);
            }
    }
    return make_op_node<S>(
        "avg_pool_rect", {c, oh, ow}, std::move(out), {x},
        [c, h, w, kh, kw, oh, ow, inv](TensorNode<S>& n) {
            auto& p = *n.parents[0];
            if (!p.requires_grad) return;
            for (int ci = 0; ci < c; ++ci) {
                S* gp = p.grad.data() + static_cast<std::size_t>(ci) * h * w;
                for (int i = 0; i < oh; ++i)
                    for (int j = 0; j < ow; ++j) {
                        const S g = static_cast<S>(
                            static_cast<double>(
                                n.grad[(static_cast<std::size_t>(ci) * oh + i) * ow + j]) *
                            inv);
                        for (int r = 0; r < kh; ++r)
                            for (int s = 0; s < kw; ++s)
                                gp[(static_cast<std::size_t>(i * kh + r)) * w + j * kw + s] += g;
                    }
            }
        });
}

template <typename S>
TensorT<S> max_pool2d(const TensorT<S>& x, int k, int stride) {
    check_ndim("max_pool2d", x, 4);
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (k < 1 || stride < 1 || k > h || k > w)
        throw ShapeError("max_pool2d: window " + std::to_string(k) + " stride " +
                         std::to_string(stride) + " invalid for input " + shape_str(x.shape()));
    const int oh = (h - k) / stride + 1;
    const int ow = (w - k) / stride + 1;
    const std::size_t planes = static_cast<std::size_t>(b) * c;
    std::vector<S> out(planes * oh * ow);
    auto argmax = std::make_shared<std::vector<int>>(planes * oh * ow);
    for (std::size_t pl = 0; pl < planes; ++pl) {
        const S* src = x.data() + pl * h * w;
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                int best = (i * stride) * w + j * stride;
                S bv = src[best];
                for (int r = 0; r < k; ++r)
                    for (int s = 0; s < k; ++s) {
                        const int idx = (i * stride + r) * w + (j * stride + s);
                        if (src[idx] > bv) {  // first max wins ties
                            bv = src[idx];
                            best = idx;
                        }
                    }
                const std::size_t o = (pl * oh + i) * ow + j;
                out[o] = bv;
                (*argmax)[o] = best;
            }
    }
    return make_op_node<S>("max_pool2d", {b, c, oh, ow}, std::move(out), {x},
                           [argmax, h, w, oh, ow](TensorNode<S>& n) {
                               auto& p = *n.parents[0];
                               if (!p.requires_grad) return;
                               const std::size_t per = static_cast<std::size_t>(oh) * ow;
                               for (std::size_t o = 0; o < n.grad.size(); ++o) {
                                   const std::size_t pl = o / per;
                                   p.grad[pl * h * w +
                                          static_cast<std::size_t>((*argmax)[o])] += n.grad[o];
                               }
                           });
}

// ------------------------------------------------------ softmax cross entropy

template <typename S>
TensorT<S> softmax_cross_entropy(const TensorT<S>& logits, const std::vector<int>& labels) {
    const bool flat = logits.ndim() == 1;
    if (!flat) check_ndim("softmax_cross_entropy", logits, 2);
    const int b = flat ? 1 : logits.dim(0);
    const int k = flat ? logits.dim(0) : logits.dim(1);
    if (static_cast<int>(labels.size()) != b)
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(b));
    for (int bi = 0; bi < b; ++bi)
        if (labels[static_cast<std::size_t>(bi)] < 0 || labels[static_cast<std::size_t>(bi)] >= k)
            throw Error("softmax_cross_entropy: label " +
                        std::to_string(labels[static_cast<std::size_t>(bi)]) +
                        " out of range [0," + std::to_string(k) + ") at batch index " +
                        std::to_string(bi));

    auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(b) * k);
    double total = 0.0;
    for (int bi = 0; bi < b; ++bi) {
        const S* row = logits.data() + static_cast<std::size_t>(bi) * k;
        double m = static_cast<double>(row[0]);
        for (int j = 1; j < k; ++j) m = std::max(m, static_cast<double>(row[j]));
        double z = 0.0;
        double* prow = probs->data() + static_cast<std::size_t>(bi) * k;
        for (int j = 0; j < k; ++j) {
            prow[j] = std::exp(static_cast<double>(row[j]) - m);
            z += prow[j];
        }
        for (int j = 0; j < k; ++j) prow[j] /= z;
        total += (m + std::log(z)) -
                 static_cast<double>(row[labels[static_cast<std::size_t>(bi)]]);
    }
    const S loss = static_cast<S>(total / b);

    auto bwd = [probs, labels, b, k](TensorNode<S>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        const double up = static_cast<double>(n.grad[0]) / b;
        for (int bi = 0; bi < b; ++bi) {
            const double* prow = probs->data() + static_cast<std::size_t>(bi) * k;
            S* grow = p.grad.data() + static_cast<std::size_t>(bi) * k;
            const int lbl = labels[static_cast<std::size_t>(bi)];
            for (int j = 0; j < k; ++j)
                grow[j] += static_cast<S>((prow[j] - (j == lbl ? 1.0 : 0.0)) * up);
        }
    };
    return make_op_node<S>("softmax_cross_entropy", {}, {loss}, {logits}, std::move(bwd));
}

// ----------------------------------------------------------- bilinear resize

namespace {

struct Tap {
    int lo, hi;
    double frac;
};

inline Tap resize_tap(int dst, int out_len, int in_len) {
    const double scale = static_cast<double>(in_len) / out_len;
    double s = (dst + 0.5) * scale - 0.5;
    if (s < 0.0) s = 0.0;
    const double max_s = static_cast<double>(in_len - 1);
    if (s > max_s) s = max_s;
    Tap t;
    t.lo = static_cast<int>(s);
    if (t.lo > in_len - 1) t.lo = in_len - 1;
    t.hi = t.lo + 1 < in_len ? t.lo + 1 : in_len - 1;
    t.frac = s - t.lo;
    return t;
}

}  // namespace

template <typename S>
TensorT<S> bilinear_resize(const TensorT<S>& img, int out_h, int out_w) {
    check_ndim("bilinear_resize", img, 3);
    if (out_h < 1 || out_w < 1)
        throw ShapeError("bilinear_resize: invalid output size " + std::to_string(out_h) + "x" +
                         std::to_string(out_w));
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::vector<S> out(static_cast<std::size_t>(c) * out_h * out_w);
    for (int y = 0; y < out_h; ++y) {
        const Tap ty = resize_tap(y, out_h, h);
        for (int x = 0; x < out_w; ++x) {
            const Tap tx = resize_tap(x, out_w, w);
            for (int ci = 0; ci < c; ++ci) {
                const S* src = img.data() + static_cast<std::size_t>(ci) * h * w;
                const double v00 = static_cast<double>(src[ty.lo * w + tx.lo]);
                const double v01 = static_cast<double>(src[ty.lo * w + tx.hi]);
                const double v10 = static_cast<double>(src[ty.hi * w + tx.lo]);
                const double v11 = static_cast<double>(src[ty.hi * w + tx.hi]);
                const double v = (1.0 - ty.frac) * ((1.0 - tx.frac) * v00 + tx.frac * v01) +
                                 ty.frac * ((1.0 - tx.frac) * v10 + tx.frac * v11);
                out[(static_cast<std::size_t>(ci) * out_h + y) * out_w + x] =
                    static_cast<S>(v);
            }
        }
    }
    return make_op_node<S>(
        "bilinear_resize", {c, out_h, out_w}, std::move(out), {img},
        [c, h, w, out_h, out_w](TensorNode<S>& n) {
            auto& p = *n.parents[0];
            if (!p.requires_grad) return;
            for (int y = 0; y < out_h; ++y) {
                const Tap ty = resize_tap(y, out_h, h);
                for (int x = 0; x < out_w; ++x) {
                    const Tap tx = resize_tap(x, out_w, w);
                    for (int ci = 0; ci < c; ++ci) {
                        const double g = static_cast<double>(
                            n.grad[(static_cast<std::size_t>(ci) * out_h + y) * out_w + x]);
                        S* gp = p.grad.data() + static_cast<std::size_t>(ci) * h * w;
                        gp[ty.lo * w + tx.lo] +=
                            static_cast<S>((1.0 - ty.frac) * (1.0 - tx.frac) * g);
                        gp[ty.lo * w + tx.hi] += static_cast<S>((1.0 - ty.frac) * tx.frac * g);
                        gp[ty.hi * w + tx.lo] += static_cast<S>(ty.frac * (1.0 - tx.frac) * g);
                        gp[ty.hi * w + tx.hi] += static_cast<S>(ty.frac * tx.frac * g);
                    }
                }
            }
        });
}

template <typename S>
TensorT<S> slice_hw(const TensorT<S>& img, int y0, int y1, int x0, int x1) {
    check_ndim("slice_hw", img, 3);
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (!(0 <= y0 && y0 < y1 && y1 <= h && 0 <= x0 && x0 < x1 && x1 <= w))
        throw ShapeError("slice_hw: box [" + std::to_string(x0) + "," + std::to_string(y0) +
                         "," + std::to_string(x1) + "," + std::to_string(y1) +
                         ") invalid for image " + shape_str(img.shape()));
    const int oh = y1 - y0, ow = x1 - x0;
    std::vector<S> out(static_cast<std::size_t>(c) * oh * ow);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < oh; ++y) {
            const S* src = img.data() + (static_cast<std::size_t>(ci) * h + y0 + y) * w + x0;
            S* dst = out.data() + (static_cast<std::size_t>(ci) * oh + y) * ow;
            for (int x = 0; x < ow; ++x) dst[x] = src[x];
        }
    return make_op_node<S>("slice_hw", {c, oh, ow}, std::move(out), {img},
                           [c, h, w, y0, x0, oh, ow](TensorNode<S>& n) {
                               auto& p = *n.parents[0];
                               if (!p.requires_grad) return;
                               for (int ci = 0; ci < c; ++ci)
                                   for (int y = 0; y < oh; ++y) {
                                       S* gp = p.grad.data() +
                                               (static_cast<std::size_t>(ci) * h + y0 + y) * w +
                                               x0;
                                       const S* g = n.grad.data() +
                                                    (static_cast<std::size_t>(ci) * oh + y) * ow;
                                       for (int x = 0; x < ow; ++x) gp[x] += g[x];
                                   }
                           });
}

// ----------------------------------------------------------------- lstm cell

template <typename S>
std::pair<TensorT<S>, TensorT<S>> lstm_cell(const TensorT<S>& x, const TensorT<S>& h,
                                            const TensorT<S>& c, const LstmCellParamsT<S>& p) {
    check_ndim("lstm_cell", x, 1);
    check_ndim("lstm_cell", h, 1);
    check_ndim("lstm_cell", c, 1);
    const int hid = h.dim(0);
    if (c.dim(0) != hid || p.w_hh.dim(0) != hid || p.w_hh.dim(1) != 4 * hid)
        throw ShapeError("lstm_cell: state shapes " + shape_str(h.shape()) + "/" +
                         shape_str(c.shape()) + " inconsistent with w_hh " +
                         shape_str(p.w_hh.shape()));
    TensorT<S> gates = add(linear(x, p.w_ih, p.b), matmul(h, p.w_hh));  // [4H]
    TensorT<S> gi = sigmoid(narrow(gates, 0, hid));
    TensorT<S> gf = sigmoid(narrow(gates, hid, hid));
    TensorT<S> gg = tanh(narrow(gates, 2 * hid, hid));
    TensorT<S> go = sigmoid(narrow(gates, 3 * hid, hid));
    TensorT<S> c2 = add(mul(gf, c), mul(gi, gg));
    TensorT<S> h2 = mul(go, tanh(c2));
    return {h2, c2};
}

// ------------------------------------------------------------ instantiations

#define REAPS_INSTANTIATE_OPS(S)                                                              \
    template TensorT<S> add<S>(const TensorT<S>&, const TensorT<S>&);                         \
    template TensorT<S> mul<S>(const TensorT<S>&, const TensorT<S>&);                         \
    template TensorT<S> scale<S>(const TensorT<S>&, S);                                       \
    template TensorT<S> sum<S>(const TensorT<S>&);                                            \
    template TensorT<S> relu<S>(const TensorT<S>&);                                           \
    template TensorT<S> sigmoid<S>(const TensorT<S>&);                                        \
    template TensorT<S> tanh<S>(const TensorT<S>&);                                           \
    template TensorT<S> reshape<S>(const TensorT<S>&, Shape);                                 \
    template TensorT<S> narrow<S>(const TensorT<S>&, int, int);                               \
    template TensorT<S> concat<S>(const std::vector<TensorT<S>>&);                            \
    template TensorT<S> conv2d<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,    \
                                  int, int);                                                  \
    template TensorT<S> linear<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&);   \
    template TensorT<S> matmul<S>(const TensorT<S>&, const TensorT<S>&);                      \
    template TensorT<S> global_avg_pool<S>(const TensorT<S>&, GapMode);                       \
    template TensorT<S> avg_pool_rect<S>(const TensorT<S>&, int, int);                        \
    template TensorT<S> max_pool2d<S>(const TensorT<S>&, int, int);                           \
    template TensorT<S> softmax_cross_entropy<S>(const TensorT<S>&, const std::vector<int>&); \
    template TensorT<S> bilinear_resize<S>(const TensorT<S>&, int, int);                      \
    template TensorT<S> slice_hw<S>(const TensorT<S>&, int, int, int, int);                   \
    template std::pair<TensorT<S>, TensorT<S>> lstm_cell<S>(                                  \
        const TensorT<S>&, const TensorT<S>&, const TensorT<S>&, const LstmCellParamsT<S>&);

REAPS_INSTANTIATE_OPS(float)
REAPS_INSTANTIATE_OPS(double)

#undef REAPS_INSTANTIATE_OPS

}  // namespace reaps
