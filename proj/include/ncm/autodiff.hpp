#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace ncm::ad {

// Dense row-major tensor of 64-bit floats. Rank 1 or 2 is all the library needs.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    std::size_t size() const { return data.size(); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    double item() const;  // requires size() == 1
};

using NodeId = int;

// Dynamic reverse-mode tape. Build the graph with the op methods, call
// backward(root) on a scalar node, read gradients with grad(). The tape is
// rebuilt every step (clear()); node evaluation order is fixed by insertion,
// so results are bitwise deterministic.
class Tape {
public:
    // Leaves. Gradients are only accumulated into nodes created by leaf().
    NodeId leaf(Tensor value);
    NodeId constant(Tensor value);

    // [M,K] x [K,N] -> [M,N]
    NodeId matmul(NodeId a, NodeId b);
    // Same shape, or [M,N] + [N] with the second operand broadcast over rows.
    NodeId add(NodeId a, NodeId b);
    // Elementwise product, same shape.
    NodeId mul(NodeId a, NodeId b);
    NodeId neg(NodeId a);
    NodeId scale(NodeId a, double s);
    NodeId add_const(NodeId a, double c);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId sigmoid(NodeId a);
    // log(sigmoid(x)) computed stably; backward uses sigmoid(-x).
    NodeId log_sigmoid(NodeId a);
    NodeId relu(NodeId a);
    // Sum of all elements -> [1].
    NodeId reduce_sum(NodeId a);
    // Max-shifted log(sum(exp)) along the given axis of a rank-1 or rank-2
    // tensor. Rank-1: axis 0 -> [1]. Rank-2: axis 0 -> [N], axis 1 -> [M].
    NodeId log_sum_exp(NodeId a, int axis = 0);
    // Reinterpret the buffer with a new shape of equal size. Gradients flow.
    NodeId reshape(NodeId a, std::vector<int> shape);

    void backward(NodeId root);

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    // Zero tensor if backward never touched the node.
    const Tensor& grad(NodeId id) const;

    std::size_t size() const { return nodes_.size(); }
    void clear();

private:
    enum class Op : std::uint8_t {
        Leaf, Const, MatMul, Add, AddBroadcast, Mul, Neg, Scale, AddConst,
        Exp, Log, Sigmoid, LogSigmoid, Relu, ReduceSum, LogSumExp, Reshape,
    };
    struct Node {
        Op op;
        int a = -1, b = -1;
        double aux = 0.0;  // scale factor / added constant / lse axis
        Tensor value;
        Tensor grad;       // allocated lazily during backward
        bool needs_grad = false;
    };

    NodeId push(Node n);
    Tensor& grad_buf(NodeId id);
    void backprop(const Node& n, NodeId id);

    std::vector<Node> nodes_;
    Tensor zero_{{1}, {0.0}};
};

// Exposed for reuse by numeric (untaped) code paths; all row-major.
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n);  // C = A B
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n);  // C = A^T B ([M,K],[M,N])->[K,N]
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n);  // C = A B^T ([M,N],[K,N])->[M,K]

}  // namespace ncm::ad
