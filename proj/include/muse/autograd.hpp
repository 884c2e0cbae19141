#pragma once

#include <Eigen/Core>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace muse::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Reverse-mode tape node. Values are dense matrices; scalars are 1x1.
struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    bool requires_grad = false;

    explicit Node(Matrix v, bool req = false) : value(std::move(v)), requires_grad(req) {
        if (requires_grad) grad = Matrix::Zero(value.rows(), value.cols());
    }
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    explicit Var(Matrix v, bool requires_grad = false)
        : node_(std::make_shared<Node>(std::move(v), requires_grad)) {}

    const Matrix& value() const { return node_->value; }
    Matrix& value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    Matrix& grad() { return node_->grad; }
    bool valid() const { return node_ != nullptr; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    std::shared_ptr<Node> node() const { return node_; }

    void zero_grad() {
        if (node_->requires_grad) node_->grad.setZero();
    }

private:
    std::shared_ptr<Node> node_;
};

// Accumulates gradients into every reachable requires_grad node.
void backward(const Var& loss);

Var constant(Matrix v);
Var parameter(Matrix v);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var cmul(const Var& a, const Var& b);      // coefficient-wise
Var scale(const Var& a, double k);
Var add_rowvec(const Var& a, const Var& bias);   // bias is 1 x cols, broadcast over rows
Var transpose(const Var& a);
Var tanh_(const Var& a);
Var relu(const Var& a);
Var sigmoid_(const Var& a);

// Row-wise softmax with optional additive mask (same shape, typically 0 / -inf).
Var softmax_rows(const Var& a);
Var softmax_rows(const Var& a, const Matrix& additive_mask);

// Row-wise layer norm followed by gain/bias (each 1 x cols).
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// Zero out rows where mask[i] == 0 (mask is a constant 0/1 vector of length rows).
Var mask_rows(const Var& x, const Vector& mask);

Var vcat(const Var& top, const Var& bottom);       // along rows (sequence axis)
Var hcat(const Var& left, const Var& right);       // along cols
Var row(const Var& x, Eigen::Index i);             // single-row slice

Var gather_rows(const Var& table, const std::vector<int>& ids);

// Mean over rows with mask[i] in {0,1}; errors if mask sums to 0. Returns 1 x cols.
Var masked_mean_rows(const Var& x, const Vector& mask);

Var sum(const Var& x);  // 1x1

// Mean token-level cross-entropy over positions where target != ignore_id.
// logits: n x V, targets: length n. Errors if every target is ignored.
Var cross_entropy_rows(const Var& logits, const std::vector<int>& targets, int ignore_id);

// Binary cross-entropy from a 1x1 logit; label in {0,1}.
Var bce_with_logit(const Var& logit, double label);

// Seedable uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init.
Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, std::mt19937& rng);

// Named parameter registry; group = prefix up to the first '/'.
struct ParamStore {
    std::map<std::string, Var> params;

    Var add(const std::string& name, Matrix init);
    Var at(const std::string& name) const;
    void zero_grads();
    static std::string group_of(const std::string& name);
};

}  // namespace muse::nn
