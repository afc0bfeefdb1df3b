#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace keyflow {

using Mat = Eigen::MatrixXd;

// Reverse-mode automatic differentiation over matrix-valued expressions.
//
// A Tape records one forward computation as a flat list of nodes in creation
// order (which is already a topological order). backward() walks the list in
// reverse and accumulates gradients into every node that can reach a parameter
// leaf. The same forward routines are used for training and for inference so
// the two paths cannot drift apart; inference simply never calls backward().
//
// A Tape is single-use: build one per forward pass and discard it.
class Tape {
public:
    using NodeId = std::int32_t;

    // Constant leaf; no gradient is ever accumulated into it.
    NodeId input(Mat value);
    // Trainable leaf; grads() reports its gradient under `name`. Registering
    // the same name twice is allowed and the gradients are summed.
    NodeId param(const std::string& name, Mat value);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    // Adds a 1 x C row vector to every row of an N x C matrix.
    NodeId add_rowvec(NodeId a, NodeId row);
    // Exact GELU: x * Phi(x) with the Gauss error function, not the tanh fit.
    NodeId gelu(NodeId a);
    // Column-wise max pooling, N x C -> 1 x C. Ties route the gradient to the
    // first maximal row so backward() is deterministic.
    NodeId colwise_max(NodeId a);
    // Stacks `copies` copies of a 1 x C row into a copies x C matrix.
    NodeId repeat_row(NodeId row, Eigen::Index copies);
    NodeId hcat(NodeId a, NodeId b);
    NodeId vcat(NodeId a, NodeId b);
    // Contiguous row slice [first, first + count).
    NodeId rows(NodeId a, Eigen::Index first, Eigen::Index count);
    // Mean of squared entry-wise differences, returned as a 1 x 1 node.
    NodeId mse_scalar(NodeId pred, NodeId target);

    const Mat& value(NodeId id) const;
    // Seeds d(loss)/d(loss) = 1 (id must be 1 x 1) and back-propagates.
    void backward(NodeId id);
    // Parameter-name -> gradient, for every param node touched by backward().
    std::map<std::string, Mat> grads() const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;  // sized on first accumulation; empty means "all zero"
        bool needs_grad = false;
        std::string param_name;
        std::function<void(Tape&, const Mat&)> pull;  // pushes grad to inputs
    };

    std::vector<Node> nodes_;

    NodeId push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> pull);
    void accumulate(NodeId id, const Mat& g);
    const Node& at(NodeId id) const;
    bool needs(NodeId id) const { return at(id).needs_grad; }
};

}  // namespace keyflow
