#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rfdense/numerics/tensor.hpp"

namespace rfdense {

/// Handle to a node of a Graph.
struct Var {
    int id = -1;
};

/// Tape of operations recorded in execution order. Node ids are assigned in
/// creation order, so the id sequence is a topological order and backward
/// is a single reverse sweep.
///
/// Parameters registered with `parameter()` live outside the graph; backward
/// adds into their `grad` buffer, so repeated backward passes accumulate
/// until the caller resets with `Tensor::zero_grad()`.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, int self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Owned value that never receives a gradient.
    Var constant(Tensor value);
    /// Owned leaf; receives a gradient when `value.requires_grad` is set.
    Var input(Tensor value);
    /// External leaf. The tensor must outlive the graph.
    Var parameter(Tensor& tensor);
    /// External read-only value that never receives a gradient. The tensor
    /// must outlive the graph; nothing is copied.
    Var constant_view(const Tensor& tensor);

    const Tensor& value(Var v) const;
    const Shape& shape(Var v) const { return value(v).shape; }
    bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
    const std::string& op_name(Var v) const { return nodes_.at(v.id).op; }
    /// Gradient of the last backward pass w.r.t. node `v` (empty when none).
    std::span<const double> grad(Var v) const { return nodes_.at(v.id).grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and propagates to every node that needs a
    /// gradient. `loss` must hold exactly one value.
    void backward(Var loss);

    // Op-author interface.
    Var record(std::string op, std::vector<int> inputs, Tensor out, BackwardFn fn);
    /// Gradient buffer of node `v`, zero-initialised on first access.
    std::span<double> grad_buffer(Var v);
    std::span<const double> node_grad(int id) const { return nodes_.at(id).grad; }

private:
    struct Node {
        std::string op;
        std::vector<int> inputs;
        Tensor owned;
        const Tensor* view = nullptr;
        Tensor* external = nullptr;
        bool needs_grad = false;
        std::vector<double> grad;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
};

// ---- differentiable operations --------------------------------------------

/// 3x3 cross-correlation with replication padding (output keeps H and W).
/// input [H,W,Cin], kernel [3,3,Cin,Cout], bias [Cout] -> [H,W,Cout].
Var conv2d(Graph& g, Var input, Var kernel, Var bias);

/// Exact GELU: x * Phi(x) with Phi the standard normal CDF.
Var gelu(Graph& g, Var x);

/// input [N,Din] x weight [Din,Dout] + bias [Dout] -> [N,Dout].
Var linear(Graph& g, Var input, Var weight, Var bias);

/// Mean of squared differences; result has shape [1].
Var mse(Graph& g, Var a, Var b);

Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, double factor);
/// Arithmetic mean of a list of [1]-shaped scalars.
Var mean_of(Graph& g, std::span<const Var> scalars);
/// Same data, new shape of equal size.
Var reshape(Graph& g, Var x, Shape shape);
/// Concatenate two [H,W,*] maps along channels.
Var concat_channels(Graph& g, Var a, Var b);
/// [H,W,C] -> [H/2,W/2,4C], see `pack_values`.
Var pack(Graph& g, Var x);
/// [H/2,W/2,4C] -> [H,W,C].
Var unpack(Graph& g, Var x);

// ---- raw kernels shared with the codec ------------------------------------

double gelu_value(double x);
double gelu_derivative(double x);

/// Space-to-channel rearrangement. Output cell (i,j) holds the 2x2 patch
/// positions (2i,2j), (2i,2j+1), (2i+1,2j), (2i+1,2j+1) in that order, each
/// contributing `channels` consecutive values.
std::vector<double> pack_values(std::span<const double> values, int height, int width, int channels);
std::vector<double> unpack_values(std::span<const double> values, int packed_height, int packed_width,
                                  int packed_channels);
/// Flat index in the unpacked [H,W,C] map that feeds packed element (i,j,k).
std::size_t pack_source_index(int i, int j, int k, int width, int channels);

}  // namespace rfdense
