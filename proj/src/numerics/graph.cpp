#include "rfdense/numerics/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rfdense/error.hpp"

namespace rfdense {

Var Graph::constant(Tensor value) {
    value.validate();
    Node node;
    node.op = "constant";
    node.owned = std::move(value);
    node.owned.requires_grad = false;
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::input(Tensor value) {
    value.validate();
    Node node;
    node.op = "input";
    node.needs_grad = value.requires_grad;
    node.owned = std::move(value);
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::parameter(Tensor& tensor) {
    tensor.validate();
    Node node;
    node.op = "parameter";
    node.external = &tensor;
    node.view = &tensor;
    node.needs_grad = tensor.requires_grad;
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant_view(const Tensor& tensor) {
    tensor.validate();
    Node node;
    node.op = "constant";
    node.view = &tensor;
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::value(Var v) const {
    const Node& node = nodes_.at(v.id);
    return node.view ? *node.view : node.owned;
}

Var Graph::record(std::string op, std::vector<int> inputs, Tensor out, BackwardFn fn) {
    Node node;
    node.op = std::move(op);
    for (int id : inputs) {
        node.needs_grad = node.needs_grad || nodes_.at(id).needs_grad;
    }
    node.inputs = std::move(inputs);
    node.owned = std::move(out);
    if (node.needs_grad) node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

std::span<double> Graph::grad_buffer(Var v) {
    Node& node = nodes_.at(v.id);
    if (node.grad.empty()) node.grad.assign(value(v).size(), 0.0);
    return node.grad;
}

void Graph::backward(Var loss) {
    if (value(loss).size() != 1) {
        throw ShapeError("backward requires a scalar loss, got shape " + shape_string(value(loss).shape));
    }
    for (Node& node : nodes_) node.grad.clear();
    if (!nodes_.at(loss.id).needs_grad) return;
    grad_buffer(loss)[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& node = nodes_[id];
        if (!node.needs_grad || node.grad.empty()) continue;
        if (node.backward) node.backward(*this, id);
    }
    for (Node& node : nodes_) {
        if (!node.external || !node.needs_grad || node.grad.empty()) continue;
        Tensor& target = *node.external;
        if (target.grad.size() != target.data.size()) target.grad.assign(target.data.size(), 0.0);
        for (std::size_t i = 0; i < node.grad.size(); ++i) target.grad[i] += node.grad[i];
    }
}

// ---------------------------------------------------------------------------

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape != b.shape) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape) + " vs " +
                         shape_string(b.shape));
    }
}

inline int clamp_index(int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); }

}  // namespace

Var conv2d(Graph& g, Var input, Var kernel, Var bias) {
    const Tensor& x = g.value(input);
    const Tensor& k = g.value(kernel);
    const Tensor& b = g.value(bias);
    require_rank(x, 3, "conv2d input");
    require_rank(k, 4, "conv2d kernel");
    require_rank(b, 1, "conv2d bias");
    if (k.dim(0) != 3 || k.dim(1) != 3) throw ShapeError("conv2d: kernel must be 3x3, got " + shape_string(k.shape));
    const int H = x.dim(0), W = x.dim(1), cin = x.dim(2), cout = k.dim(3);
    if (k.dim(2) != cin) {
        throw ShapeError("conv2d: input has " + std::to_string(cin) + " channels, kernel expects " +
                         std::to_string(k.dim(2)));
    }
    if (b.dim(0) != cout) throw ShapeError("conv2d: bias length does not match output channels");

    Tensor out = Tensor::zeros({H, W, cout});
    const double* xin = x.data.data();
    const double* kw = k.data.data();
    for (int y = 0; y < H; ++y) {
        for (int xx = 0; xx < W; ++xx) {
            double* o = out.data.data() + (static_cast<std::size_t>(y) * W + xx) * cout;
            std::copy(b.data.begin(), b.data.end(), o);
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = clamp_index(y + ky - 1, H);
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = clamp_index(xx + kx - 1, W);
                    const double* px = xin + (static_cast<std::size_t>(sy) * W + sx) * cin;
                    const double* tap = kw + static_cast<std::size_t>(ky * 3 + kx) * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double a = px[ci];
                        const double* row = tap + static_cast<std::size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) o[co] += a * row[co];
                    }
                }
            }
        }
    }

    return g.record("conv2d", {input.id, kernel.id, bias.id}, std::move(out),
                    [input, kernel, bias, H, W, cin, cout](Graph& gr, int self) {
                        const std::span<const double> gout = gr.node_grad(self);
                        const double* xin = gr.value(input).data.data();
                        const double* kw = gr.value(kernel).data.data();
                        double* gx = gr.needs_grad(input) ? gr.grad_buffer(input).data() : nullptr;
                        double* gk = gr.needs_grad(kernel) ? gr.grad_buffer(kernel).data() : nullptr;
                        if (gr.needs_grad(bias)) {
                            double* gb = gr.grad_buffer(bias).data();
                            for (std::size_t p = 0; p < static_cast<std::size_t>(H) * W; ++p) {
                                for (int co = 0; co < cout; ++co) gb[co] += gout[p * cout + co];
                            }
                        }
                        if (!gx && !gk) return;
                        for (int y = 0; y < H; ++y) {
                            for (int xx = 0; xx < W; ++xx) {
                                const double* go = gout.data() + (static_cast<std::size_t>(y) * W + xx) * cout;
                                for (int ky = 0; ky < 3; ++ky) {
                                    const int sy = clamp_index(y + ky - 1, H);
                                    for (int kx = 0; kx < 3; ++kx) {
                                        const int sx = clamp_index(xx + kx - 1, W);
                                        const std::size_t src = (static_cast<std::size_t>(sy) * W + sx) * cin;
                                        const std::size_t tap = static_cast<std::size_t>(ky * 3 + kx) * cin * cout;
                                        for (int ci = 0; ci < cin; ++ci) {
                                            const std::size_t row = tap + static_cast<std::size_t>(ci) * cout;
                                            if (gx) {
                                                double acc = 0.0;
                                                for (int co = 0; co < cout; ++co) acc += go[co] * kw[row + co];
                                                gx[src + ci] += acc;
                                            }
                                            if (gk) {
                                                const double a = xin[src + ci];
                                                double* gkr = gk + row;
                                                for (int co = 0; co < cout; ++co) gkr[co] += a * go[co];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    return cdf + x * pdf;
}

Var gelu(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    Tensor out(in.shape, std::vector<double>(in.size()));
    for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = gelu_value(in.data[i]);
    return g.record("gelu", {x.id}, std::move(out), [x](Graph& gr, int self) {
        const auto gout = gr.node_grad(self);
        const auto& in = gr.value(x).data;
        auto gx = gr.grad_buffer(x);
        for (std::size_t i = 0; i < in.size(); ++i) gx[i] += gout[i] * gelu_derivative(in[i]);
    });
}

Var linear(Graph& g, Var input, Var weight, Var bias) {
    const Tensor& x = g.value(input);
    const Tensor& w = g.value(weight);
    const Tensor& b = g.value(bias);
    require_rank(x, 2, "linear input");
    require_rank(w, 2, "linear weight");
    require_rank(b, 1, "linear bias");
    const int n = x.dim(0), din = x.dim(1), dout = w.dim(1);
    if (w.dim(0) != din) {
        throw ShapeError("linear: input width " + std::to_string(din) + " does not match weight " +
                         shape_string(w.shape));
    }
    if (b.dim(0) != dout) throw ShapeError("linear: bias length does not match output width");
    Tensor out = Tensor::zeros({n, dout});
    for (int r = 0; r < n; ++r) {
        double* o = out.data.data() + static_cast<std::size_t>(r) * dout;
        std::copy(b.data.begin(), b.data.end(), o);
        for (int i = 0; i < din; ++i) {
            const double a = x.data[static_cast<std::size_t>(r) * din + i];
            const double* row = w.data.data() + static_cast<std::size_t>(i) * dout;
            for (int j = 0; j < dout; ++j) o[j] += a * row[j];
        }
    }
    return g.record("linear", {input.id, weight.id, bias.id}, std::move(out),
                    [input, weight, bias, n, din, dout](Graph& gr, int self) {
                        const auto gout = gr.node_grad(self);
                        const auto& xv = gr.value(input).data;
                        const auto& wv = gr.value(weight).data;
                        if (gr.needs_grad(bias)) {
                            auto gb = gr.grad_buffer(bias);
                            for (int r = 0; r < n; ++r)
                                for (int j = 0; j < dout; ++j) gb[j] += gout[static_cast<std::size_t>(r) * dout + j];
                        }
                        if (gr.needs_grad(input)) {
                            auto gx = gr.grad_buffer(input);
                            for (int r = 0; r < n; ++r) {
                                for (int i = 0; i < din; ++i) {
                                    double acc = 0.0;
                                    for (int j = 0; j < dout; ++j)
                                        acc += gout[static_cast<std::size_t>(r) * dout + j] *
                                               wv[static_cast<std::size_t>(i) * dout + j];
                                    gx[static_cast<std::size_t>(r) * din + i] += acc;
                                }
                            }
                        }
                        if (gr.needs_grad(weight)) {
                            auto gw = gr.grad_buffer(weight);
                            for (int r = 0; r < n; ++r) {
                                for (int i = 0; i < din; ++i) {
                                    const double a = xv[static_cast<std::size_t>(r) * din + i];
                                    for (int j = 0; j < dout; ++j)
                                        gw[static_cast<std::size_t>(i) * dout + j] +=
                                            a * gout[static_cast<std::size_t>(r) * dout + j];
                                }
                            }
                        }
                    });
}

Var mse(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    require_same_shape(av, bv, "mse");
    double sum = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av.data[i] - bv.data[i];
        sum += d * d;
    }
    const double n = static_cast<double>(av.size());
    return g.record("mse", {a.id, b.id}, Tensor::scalar(sum / n), [a, b, n](Graph& gr, int self) {
        const double seed = gr.node_grad(self)[0] * 2.0 / n;
        const auto& av = gr.value(a).data;
        const auto& bv = gr.value(b).data;
        if (gr.needs_grad(a)) {
            auto ga = gr.grad_buffer(a);
            for (std::size_t i = 0; i < av.size(); ++i) ga[i] += seed * (av[i] - bv[i]);
        }
        if (gr.needs_grad(b)) {
            auto gb = gr.grad_buffer(b);
            for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= seed * (av[i] - bv[i]);
        }
    });
}

namespace {

Var axpby(Graph& g, Var a, Var b, double sb, const char* name) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    require_same_shape(av, bv, name);
    Tensor out(av.shape, std::vector<double>(av.size()));
    for (std::size_t i = 0; i < av.size(); ++i) out.data[i] = av.data[i] + sb * bv.data[i];
    return g.record(name, {a.id, b.id}, std::move(out), [a, b, sb](Graph& gr, int self) {
        const auto gout = gr.node_grad(self);
        if (gr.needs_grad(a)) {
            auto ga = gr.grad_buffer(a);
            for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
        }
        if (gr.needs_grad(b)) {
            auto gb = gr.grad_buffer(b);
            for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += sb * gout[i];
        }
    });
}

}  // namespace

Var add(Graph& g, Var a, Var b) { return axpby(g, a, b, 1.0, "add"); }
Var sub(Graph& g, Var a, Var b) { return axpby(g, a, b, -1.0, "sub"); }

Var scale(Graph& g, Var x, double factor) {
    const Tensor& in = g.value(x);
    Tensor out(in.shape, std::vector<double>(in.size()));
    for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = factor * in.data[i];
    return g.record("scale", {x.id}, std::move(out), [x, factor](Graph& gr, int self) {
        const auto gout = gr.node_grad(self);
        auto gx = gr.grad_buffer(x);
        for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += factor * gout[i];
    });
}

Var mean_of(Graph& g, std::span<const Var> scalars) {
    if (scalars.empty()) throw ShapeError("mean_of: empty list");
    std::vector<int> ids;
    double sum = 0.0;
    for (Var s : scalars) {
        if (g.value(s).size() != 1) throw ShapeError("mean_of: operands must be scalars");
        sum += g.value(s).data[0];
        ids.push_back(s.id);
    }
    const double n = static_cast<double>(scalars.size());
    return g.record("mean_of", ids, Tensor::scalar(sum / n), [ids, n](Graph& gr, int self) {
        const double seed = gr.node_grad(self)[0] / n;
        for (int id : ids) {
            if (gr.needs_grad(Var{id})) gr.grad_buffer(Var{id})[0] += seed;
        }
    });
}

Var reshape(Graph& g, Var x, Shape shape) {
    const Tensor& in = g.value(x);
    if (shape_size(shape) != in.size()) {
        throw ShapeError("reshape: cannot view " + shape_string(in.shape) + " as " + shape_string(shape));
    }
    Tensor out(std::move(shape), in.data);
    return g.record("reshape", {x.id}, std::move(out), [x](Graph& gr, int self) {
        const auto gout = gr.node_grad(self);
        auto gx = gr.grad_buffer(x);
        for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i];
    });
}

Var concat_channels(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    require_rank(av, 3, "concat_channels");
    require_rank(bv, 3, "concat_channels");
    if (av.dim(0) != bv.dim(0) || av.dim(1) != bv.dim(1)) {
        throw ShapeError("concat_channels: spatial mismatch " + shape_string(av.shape) + " vs " +
                         shape_string(bv.shape));
    }
    const int ca = av.dim(2), cb = bv.dim(2);
    const std::size_t cells = static_cast<std::size_t>(av.dim(0)) * av.dim(1);
    Tensor out = Tensor::zeros({av.dim(0), av.dim(1), ca + cb});
    for (std::size_t p = 0; p < cells; ++p) {
        std::copy_n(av.data.begin() + p * ca, ca, out.data.begin() + p * (ca + cb));
        std::copy_n(bv.data.begin() + p * cb, cb, out.data.begin() + p * (ca + cb) + ca);
    }
    return g.record("concat_channels", {a.id, b.id}, std::move(out), [a, b, ca, cb, cells](Graph& gr, int self) {
        const auto gout = gr.node_grad(self);
        if (gr.needs_grad(a)) {
            auto ga = gr.grad_buffer(a);
            for (std::size_t p = 0; p < cells; ++p)
                for (int c = 0; c < ca; ++c) ga[p * ca + c] += gout[p * (ca + cb) + c];
        }
        if (gr.needs_grad(b)) {
            auto gb = gr.grad_buffer(b);
            for (std::size_t p = 0; p < cells; ++p)
                for (int c = 0; c < cb; ++c) gb[p * cb + c] += gout[p * (ca + cb) + ca + c];
        }
    });
}

std::size_t pack_source_index(int i, int j, int k, int width, int channels) {
    const int position = k / channels;
    const int c = k % channels;
    const int y = 2 * i + position / 2;
    const int x = 2 * j + position % 2;
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
}

std::vector<double> pack_values(std::span<const double> values, int height, int width, int channels) {
    if (height % 2 != 0 || width % 2 != 0) {
        throw ShapeError("pack: spatial dims must be even, got " + std::to_string(height) + "x" +
                         std::to_string(width));
    }
    if (values.size() != static_cast<std::size_t>(height) * width * channels) {
        throw ShapeError("pack: value count does not match shape");
    }
    const int ph = height / 2, pw = width / 2, pc = 4 * channels;
    std::vector<double> out(values.size());
    std::size_t o = 0;
    for (int i = 0; i < ph; ++i)
        for (int j = 0; j < pw; ++j)
            for (int k = 0; k < pc; ++k) out[o++] = values[pack_source_index(i, j, k, width, channels)];
    return out;
}

std::vector<double> unpack_values(std::span<const double> values, int packed_height, int packed_width,
                                  int packed_channels) {
    if (packed_channels % 4 != 0) {
        throw ShapeError("unpack: channel count " + std::to_string(packed_channels) + " is not divisible by 4");
    }
    if (values.size() != static_cast<std::size_t>(packed_height) * packed_width * packed_channels) {
        throw ShapeError("unpack: value count does not match shape");
    }
    const int channels = packed_channels / 4, width = 2 * packed_width;
    std::vector<double> out(values.size());
    std::size_t o = 0;
    for (int i = 0; i < packed_height; ++i)
        for (int j = 0; j < packed_width; ++j)
            for (int k = 0; k < packed_channels; ++k) out[pack_source_index(i, j, k, width, channels)] = values[o++];
    return out;
}

Var pack(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    require_rank(in, 3, "pack");
    const int H = in.dim(0), W = in.dim(1), C = in.dim(2);
    Tensor out({H / 2, W / 2, 4 * C}, pack_values(in.data, H, W, C));
    return g.record("pack", {x.id}, std::move(out), [x, H, W, C](Graph& gr, int self) {
        const auto gout = gr.node_grad(self);
        auto gx = gr.grad_buffer(x);
        const auto back = unpack_values(gout, H / 2, W / 2, 4 * C);
        for (std::size_t i = 0; i < back.size(); ++i) gx[i] += back[i];
    });
}

Var unpack(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    require_rank(in, 3, "unpack");
    const int h = in.dim(0), w = in.dim(1), c = in.dim(2);
    Tensor out({2 * h, 2 * w, c / 4}, unpack_values(in.data, h, w, c));
    return g.record("unpack", {x.id}, std::move(out), [x, h, w, c](Graph& gr, int self) {
        const auto gout = gr.node_grad(self);
        auto gx = gr.grad_buffer(x);
        const auto back = pack_values(gout, 2 * h, 2 * w, c / 4);
        for (std::size_t i = 0; i < back.size(); ++i) gx[i] += back[i];
    });
}

}  // namespace rfdense
