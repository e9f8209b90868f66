#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vitfreeze/tensor.hpp"
#include "vitfreeze/tensor_ops.hpp"

namespace vitfreeze {

// Reverse-mode tape.  One tape records one forward pass and is consumed by
// one backward() call; it is rebuilt every iteration, which keeps freezing
// trivial: frozen layers simply never record.
//
// Recording rules:
//  - an op whose inputs all have requires_grad=false produces a constant
//    leaf (nothing to differentiate), so dead subgraphs cost no tape entries;
//  - a node marked as a frozen boundary stops backward traversal: the op
//    that produced it is skipped, so nothing upstream receives gradient.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    NodeId leaf(Tensor value, bool requires_grad);

    const Tensor& value(NodeId id) const { return nodes_[check(id)].value; }
    bool requires_grad(NodeId id) const { return nodes_[check(id)].requires_grad; }
    bool is_leaf(NodeId id) const { return nodes_[check(id)].is_leaf; }
    void mark_frozen_boundary(NodeId id) { nodes_[check(id)].frozen_boundary = true; }

    size_t num_nodes() const { return nodes_.size(); }
    size_t num_ops() const { return records_.size(); }

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a, std::vector<int64_t> perm);
    NodeId reshape(NodeId a, Shape target);
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps);
    NodeId softmax_last(NodeId x);
    NodeId gelu(NodeId x, ops::GeluMode mode);
    NodeId avgpool2x(NodeId x);
    NodeId upsample2x(NodeId x, NodeId kernel);
    NodeId gather_rows(NodeId x, std::vector<int64_t> idx, int64_t rows_out);
    NodeId scatter_rows(NodeId x, std::vector<int64_t> idx, int64_t rows_out);
    NodeId sum_all(NodeId x);

    // Runs reverse accumulation from a scalar loss node.  Returns gradients
    // for every requires_grad leaf that is reachable without crossing a
    // frozen boundary.  Interior gradients stay queryable via grad() until
    // the next backward() call.
    std::unordered_map<NodeId, Tensor> backward(NodeId loss);

    // Gradient of the last backward()'s loss w.r.t. this node, or nullptr if
    // none was accumulated.
    const Tensor* grad(NodeId id) const;

private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        bool frozen_boundary = false;
        bool is_leaf = true;
    };
    struct Record {
        const char* name;
        std::vector<NodeId> inputs;
        NodeId output;
        std::function<void(Tape&)> back;
    };

    size_t check(NodeId id) const {
        if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
            throw ShapeError("tape: invalid node id " + std::to_string(id));
        }
        return static_cast<size_t>(id);
    }
    NodeId push_node(Tensor value, bool requires_grad, bool leaf);
    bool any_grad(std::initializer_list<NodeId> ids) const;
    NodeId record(const char* name, std::vector<NodeId> inputs, Tensor value,
                  std::function<void(Tape&)> back);
    void accum(NodeId id, const Tensor& g);
    bool has_grad(NodeId id) const { return grad_set_[static_cast<size_t>(id)] != 0; }
    const Tensor& grad_ref(NodeId id) const { return grads_[static_cast<size_t>(id)]; }

    std::deque<Node> nodes_;
    std::vector<Record> records_;
    std::vector<Tensor> grads_;
    std::vector<char> grad_set_;
};

}  // namespace vitfreeze
