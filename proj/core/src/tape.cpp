#include "keyflow/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace keyflow {

namespace {

// Standard normal CDF, the Phi in gelu(x) = x * Phi(x).
double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)); }

}  // namespace

const Tape::Node& Tape::at(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw std::out_of_range("Tape: invalid node id");
    return nodes_[static_cast<std::size_t>(id)];
}

Tape::NodeId Tape::push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> pull) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = needs_grad;
    node.pull = std::move(pull);
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::accumulate(NodeId id, const Mat& g) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.needs_grad) return;
    if (node.grad.size() == 0)
        node.grad = Mat::Zero(node.value.rows(), node.value.cols());
    node.grad += g;
}

Tape::NodeId Tape::input(Mat value) { return push(std::move(value), false, nullptr); }

Tape::NodeId Tape::param(const std::string& name, Mat value) {
    if (name.empty()) throw std::invalid_argument("Tape::param: empty name");
    NodeId id = push(std::move(value), true, nullptr);
    nodes_.back().param_name = name;
    return id;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    const Mat& va = at(a).value;
    const Mat& vb = at(b).value;
    if (va.cols() != vb.rows())
        throw std::invalid_argument("Tape::matmul: inner dimensions disagree");
    return push(va * vb, needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
        if (t.needs(a)) t.accumulate(a, g * t.at(b).value.transpose());
        if (t.needs(b)) t.accumulate(b, t.at(a).value.transpose() * g);
    });
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const Mat& va = at(a).value;
    const Mat& vb = at(b).value;
    if (va.rows() != vb.rows() || va.cols() != vb.cols())
        throw std::invalid_argument("Tape::add: shape mismatch");
    return push(va + vb, needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
    const Mat& va = at(a).value;
    const Mat& vb = at(b).value;
    if (va.rows() != vb.rows() || va.cols() != vb.cols())
        throw std::invalid_argument("Tape::sub: shape mismatch");
    return push(va - vb, needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

Tape::NodeId Tape::add_rowvec(NodeId a, NodeId row) {
    const Mat& va = at(a).value;
    const Mat& vr = at(row).value;
    if (vr.rows() != 1 || vr.cols() != va.cols())
        throw std::invalid_argument("Tape::add_rowvec: row must be 1 x cols(a)");
    Mat out = va.rowwise() + vr.row(0);
    return push(std::move(out), needs(a) || needs(row), [a, row](Tape& t, const Mat& g) {
        t.accumulate(a, g);
        if (t.needs(row)) t.accumulate(row, g.colwise().sum());
    });
}

Tape::NodeId Tape::gelu(NodeId a) {
    const Mat& va = at(a).value;
    // The erf evaluation dominates this op, so keep Phi(x) for backward:
    // d/dx [x * Phi(x)] = Phi(x) + x * phi(x) needs only the cheap density.
    Mat cdf = va.unaryExpr([](double x) { return norm_cdf(x); });
    Mat out = va.cwiseProduct(cdf);
    return push(std::move(out), needs(a),
                [a, cdf = std::move(cdf)](Tape& t, const Mat& g) {
                    const Mat& x = t.at(a).value;
                    const Mat density =
                        (-0.5 * x.array().square()).exp() / std::sqrt(2.0 * M_PI);
                    t.accumulate(a, g.cwiseProduct(cdf + x.cwiseProduct(density.matrix())));
                });
}

Tape::NodeId Tape::colwise_max(NodeId a) {
    const Mat& va = at(a).value;
    if (va.rows() < 1) throw std::invalid_argument("Tape::colwise_max: empty input");
    Mat out(1, va.cols());
    std::vector<Eigen::Index> argmax(static_cast<std::size_t>(va.cols()));
    for (Eigen::Index c = 0; c < va.cols(); ++c) {
        Eigen::Index best = 0;
        for (Eigen::Index r = 1; r < va.rows(); ++r)
            if (va(r, c) > va(best, c)) best = r;
        argmax[static_cast<std::size_t>(c)] = best;
        out(0, c) = va(best, c);
    }
    return push(std::move(out), needs(a), [a, argmax = std::move(argmax)](Tape& t, const Mat& g) {
        Mat ga = Mat::Zero(t.at(a).value.rows(), t.at(a).value.cols());
        for (Eigen::Index c = 0; c < ga.cols(); ++c)
            ga(argmax[static_cast<std::size_t>(c)], c) = g(0, c);
        t.accumulate(a, ga);
    });
}

Tape::NodeId Tape::repeat_row(NodeId row, Eigen::Index copies) {
    const Mat& vr = at(row).value;
    if (vr.rows() != 1) throw std::invalid_argument("Tape::repeat_row: input must be 1 x C");
    if (copies < 1) throw std::invalid_argument("Tape::repeat_row: copies must be >= 1");
    Mat out = vr.replicate(copies, 1);
    return push(std::move(out), needs(row), [row](Tape& t, const Mat& g) {
        t.accumulate(row, g.colwise().sum());
    });
}

Tape::NodeId Tape::hcat(NodeId a, NodeId b) {
    const Mat& va = at(a).value;
    const Mat& vb = at(b).value;
    if (va.rows() != vb.rows())
        throw std::invalid_argument("Tape::hcat: row counts disagree");
    Mat out(va.rows(), va.cols() + vb.cols());
    out << va, vb;
    const Eigen::Index ca = va.cols();
    return push(std::move(out), needs(a) || needs(b), [a, b, ca](Tape& t, const Mat& g) {
        t.accumulate(a, g.leftCols(ca));
        t.accumulate(b, g.rightCols(g.cols() - ca));
    });
}

Tape::NodeId Tape::vcat(NodeId a, NodeId b) {
    const Mat& va = at(a).value;
    const Mat& vb = at(b).value;
    if (va.cols() != vb.cols())
        throw std::invalid_argument("Tape::vcat: column counts disagree");
    Mat out(va.rows() + vb.rows(), va.cols());
    out << va, vb;
    const Eigen::Index ra = va.rows();
    return push(std::move(out), needs(a) || needs(b), [a, b, ra](Tape& t, const Mat& g) {
        t.accumulate(a, g.topRows(ra));
        t.accumulate(b, g.bottomRows(g.rows() - ra));
    });
}

Tape::NodeId Tape::rows(NodeId a, Eigen::Index first, Eigen::Index count) {
    const Mat& va = at(a).value;
    if (first < 0 || count < 1 || first + count > va.rows())
        throw std::out_of_range("Tape::rows: slice out of range");
    Mat out = va.middleRows(first, count);
    return push(std::move(out), needs(a), [a, first, count](Tape& t, const Mat& g) {
        Mat ga = Mat::Zero(t.at(a).value.rows(), t.at(a).value.cols());
        ga.middleRows(first, count) = g;
        t.accumulate(a, ga);
    });
}

Tape::NodeId Tape::mse_scalar(NodeId pred, NodeId target) {
    const Mat& vp = at(pred).value;
    const Mat& vt = at(target).value;
    if (vp.rows() != vt.rows() || vp.cols() != vt.cols())
        throw std::invalid_argument("Tape::mse_scalar: shape mismatch");
    if (vp.size() == 0) throw std::invalid_argument("Tape::mse_scalar: empty input");
    Mat out(1, 1);
    out(0, 0) = (vp - vt).squaredNorm() / static_cast<double>(vp.size());
    return push(std::move(out), needs(pred) || needs(target),
                [pred, target](Tape& t, const Mat& g) {
                    const Mat diff = t.at(pred).value - t.at(target).value;
                    const double scale = 2.0 * g(0, 0) / static_cast<double>(diff.size());
                    if (t.needs(pred)) t.accumulate(pred, scale * diff);
                    if (t.needs(target)) t.accumulate(target, -scale * diff);
                });
}

const Mat& Tape::value(NodeId id) const { return at(id).value; }

void Tape::backward(NodeId id) {
    const Node& root = at(id);
    if (root.value.rows() != 1 || root.value.cols() != 1)
        throw std::invalid_argument("Tape::backward: root must be a 1 x 1 scalar");
    accumulate(id, Mat::Ones(1, 1));
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.needs_grad || node.grad.size() == 0 || !node.pull) continue;
        node.pull(*this, node.grad);
    }
}

std::map<std::string, Mat> Tape::grads() const {
    std::map<std::string, Mat> out;
    for (const Node& node : nodes_) {
        if (node.param_name.empty()) continue;
        const Mat g = node.grad.size() == 0 ? Mat::Zero(node.value.rows(), node.value.cols())
                                            : node.grad;
        auto it = out.find(node.param_name);
        if (it == out.end())
            out.emplace(node.param_name, g);
        else
            it->second += g;
    }
    return out;
}

}  // namespace keyflow
