#include "muse/autograd.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace muse::nn {

namespace {

Var make(Matrix value, std::vector<Var> parents, std::function<void(Node&)> bw) {
    bool req = false;
    for (const auto& p : parents) req = req || p.node()->requires_grad;
    auto n = std::make_shared<Node>(std::move(value), req);
    if (req) {
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward = std::move(bw);
    }
    return Var(std::move(n));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

void backward(const Var& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
    if (!loss.node()->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    loss.node()->grad = Matrix::Ones(1, 1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward) n->backward(*n);
    }
}

Var constant(Matrix v) { return Var(std::move(v), false); }
Var parameter(Matrix v) { return Var(std::move(v), true); }

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    return make(a.value() * b.value(), {a, b}, [a, b](Node& n) {
        if (a.node()->requires_grad) a.node()->grad.noalias() += n.grad * b.value().transpose();
        if (b.node()->requires_grad) b.node()->grad.noalias() += a.value().transpose() * n.grad;
    });
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return make(a.value() + b.value(), {a, b}, [a, b](Node& n) {
        if (a.node()->requires_grad) a.node()->grad += n.grad;
        if (b.node()->requires_grad) b.node()->grad += n.grad;
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return make(a.value() - b.value(), {a, b}, [a, b](Node& n) {
        if (a.node()->requires_grad) a.node()->grad += n.grad;
        if (b.node()->requires_grad) b.node()->grad -= n.grad;
    });
}

Var cmul(const Var& a, const Var& b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) {
        return make(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Node& n) {
            if (a.node()->requires_grad) a.node()->grad += n.grad.cwiseProduct(b.value());
            if (b.node()->requires_grad) b.node()->grad += n.grad.cwiseProduct(a.value());
        });
    }
    // scalar (1x1) times matrix, either order
    const bool a_scalar = a.rows() == 1 && a.cols() == 1;
    const bool b_scalar = b.rows() == 1 && b.cols() == 1;
    if (!a_scalar && !b_scalar) throw std::invalid_argument("cmul: shape mismatch");
    const Var& s = a_scalar ? a : b;
    const Var& m = a_scalar ? b : a;
    return make(s.value()(0, 0) * m.value(), {s, m}, [s, m](Node& n) {
        if (s.node()->requires_grad) s.node()->grad(0, 0) += (n.grad.cwiseProduct(m.value())).sum();
        if (m.node()->requires_grad) m.node()->grad += s.value()(0, 0) * n.grad;
    });
}

Var scale(const Var& a, double k) {
    return make(k * a.value(), {a}, [a, k](Node& n) {
        if (a.node()->requires_grad) a.node()->grad += k * n.grad;
    });
}

Var add_rowvec(const Var& a, const Var& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols()) throw std::invalid_argument("add_rowvec: bias must be 1 x cols");
    Matrix v = a.value();
    v.rowwise() += bias.value().row(0);
    return make(std::move(v), {a, bias}, [a, bias](Node& n) {
        if (a.node()->requires_grad) a.node()->grad += n.grad;
        if (bias.node()->requires_grad) bias.node()->grad.row(0) += n.grad.colwise().sum();
    });
}

Var transpose(const Var& a) {
    return make(a.value().transpose(), {a}, [a](Node& n) {
        if (a.node()->requires_grad) a.node()->grad += n.grad.transpose();
    });
}

Var tanh_(const Var& a) {
    Matrix v = a.value().array().tanh();
    return make(v, {a}, [a, v](Node& n) {
        if (a.node()->requires_grad)
            a.node()->grad.array() += n.grad.array() * (1.0 - v.array().square());
    });
}

Var relu(const Var& a) {
    Matrix v = a.value().cwiseMax(0.0);
    return make(v, {a}, [a](Node& n) {
        if (a.node()->requires_grad)
            a.node()->grad.array() += n.grad.array() * (a.value().array() > 0.0).cast<double>();
    });
}

Var sigmoid_(const Var& a) {
    Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    return make(v, {a}, [a, v](Node& n) {
        if (a.node()->requires_grad)
            a.node()->grad.array() += n.grad.array() * v.array() * (1.0 - v.array());
    });
}

Var softmax_rows(const Var& a) { return softmax_rows(a, Matrix::Zero(a.rows(), a.cols())); }

Var softmax_rows(const Var& a, const Matrix& additive_mask) {
    if (additive_mask.rows() != a.rows() || additive_mask.cols() != a.cols())
        throw std::invalid_argument("softmax_rows: mask shape mismatch");
    Matrix scores = a.value() + additive_mask;
    Matrix v(scores.rows(), scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const double m = scores.row(i).maxCoeff();
        if (std::isinf(m) && m < 0) {  // every key masked out
            v.row(i).setZero();
            continue;
        }
        Eigen::ArrayXd e = (scores.row(i).array() - m).exp();
        v.row(i) = (e / e.sum()).matrix();
    }
    return make(v, {a}, [a, v](Node& n) {
        if (!a.node()->requires_grad) return;
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
            const double dot = n.grad.row(i).dot(v.row(i));
            a.node()->grad.row(i).array() += v.row(i).array() * (n.grad.row(i).array() - dot);
        }
    });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
    if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols())
        throw std::invalid_argument("layer_norm_rows: gain/bias must be 1 x cols");
    const Eigen::Index d = x.cols();
    Matrix xhat(x.rows(), d);
    Vector inv_std(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mu = x.value().row(i).mean();
        const double var = (x.value().row(i).array() - mu).square().mean();
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (x.value().row(i).array() - mu).matrix() * inv_std(i);
    }
    Matrix v = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
    v.rowwise() += bias.value().row(0);
    return make(v, {x, gain, bias}, [x, gain, bias, xhat, inv_std, d](Node& n) {
        if (gain.node()->requires_grad)
            gain.node()->grad.row(0) += (n.grad.array() * xhat.array()).colwise().sum().matrix();
        if (bias.node()->requires_grad) bias.node()->grad.row(0) += n.grad.colwise().sum();
        if (!x.node()->requires_grad) return;
        for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
            Eigen::ArrayXd dxhat = n.grad.row(i).array() * gain.value().row(0).array();
            const double s1 = dxhat.sum();
            const double s2 = (dxhat * xhat.row(i).transpose().array()).sum();
            x.node()->grad.row(i).array() +=
                inv_std(i) * (dxhat - s1 / static_cast<double>(d) -
                              xhat.row(i).transpose().array() * s2 / static_cast<double>(d));
        }
    });
}

Var mask_rows(const Var& x, const Vector& mask) {
    if (mask.size() != x.rows()) throw std::invalid_argument("mask_rows: mask length mismatch");
    Matrix v = x.value().array().colwise() * mask.array();
    return make(std::move(v), {x}, [x, mask](Node& n) {
        if (x.node()->requires_grad)
            x.node()->grad.array() += n.grad.array().colwise() * mask.array();
    });
}

Var vcat(const Var& top, const Var& bottom) {
    if (top.cols() != bottom.cols()) throw std::invalid_argument("vcat: column mismatch");
    Matrix v(top.rows() + bottom.rows(), top.cols());
    v.topRows(top.rows()) = top.value();
    v.bottomRows(bottom.rows()) = bottom.value();
    return make(std::move(v), {top, bottom}, [top, bottom](Node& n) {
        if (top.node()->requires_grad) top.node()->grad += n.grad.topRows(top.rows());
        if (bottom.node()->requires_grad) bottom.node()->grad += n.grad.bottomRows(bottom.rows());
    });
}

Var hcat(const Var& left, const Var& right) {
    if (left.rows() != right.rows()) throw std::invalid_argument("hcat: row mismatch");
    Matrix v(left.rows(), left.cols() + right.cols());
    v.leftCols(left.cols()) = left.value();
    v.rightCols(right.cols()) = right.value();
    return make(std::move(v), {left, right}, [left, right](Node& n) {
        if (left.node()->requires_grad) left.node()->grad += n.grad.leftCols(left.cols());
        if (right.node()->requires_grad) right.node()->grad += n.grad.rightCols(right.cols());
    });
}

Var row(const Var& x, Eigen::Index i) {
    if (i < 0 || i >= x.rows()) throw std::out_of_range("row: index out of range");
    return make(x.value().row(i), {x}, [x, i](Node& n) {
        if (x.node()->requires_grad) x.node()->grad.row(i) += n.grad.row(0);
    });
}

Var gather_rows(const Var& table, const std::vector<int>& ids) {
    Matrix v(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] < 0 || ids[k] >= table.rows()) throw std::out_of_range("gather_rows: id out of range");
        v.row(static_cast<Eigen::Index>(k)) = table.value().row(ids[k]);
    }
    return make(std::move(v), {table}, [table, ids](Node& n) {
        if (!table.node()->requires_grad) return;
        for (size_t k = 0; k < ids.size(); ++k)
            table.node()->grad.row(ids[k]) += n.grad.row(static_cast<Eigen::Index>(k));
    });
}

Var masked_mean_rows(const Var& x, const Vector& mask) {
    if (mask.size() != x.rows()) throw std::invalid_argument("masked_mean_rows: mask length mismatch");
    const double total = mask.sum();
    if (total <= 0.0) throw std::runtime_error("masked_mean_rows: all positions masked");
    Matrix v = (mask.transpose() * x.value()) / total;
    return make(std::move(v), {x}, [x, mask, total](Node& n) {
        if (x.node()->requires_grad)
            x.node()->grad.noalias() += (mask / total) * n.grad.row(0);
    });
}

Var sum(const Var& x) {
    Matrix v(1, 1);
    v(0, 0) = x.value().sum();
    return make(std::move(v), {x}, [x](Node& n) {
        if (x.node()->requires_grad) x.node()->grad.array() += n.grad(0, 0);
    });
}

Var cross_entropy_rows(const Var& logits, const std::vector<int>& targets, int ignore_id) {
    if (static_cast<Eigen::Index>(targets.size()) != logits.rows())
        throw std::invalid_argument("cross_entropy_rows: target length mismatch");
    long long active = 0;
    for (int t : targets)
        if (t != ignore_id) ++active;
    if (active == 0) throw std::runtime_error("cross_entropy_rows: no unignored targets");

    // softmax cached for the backward pass
    Matrix probs(logits.rows(), logits.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.value().row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.value().row(i).array() - m).exp();
        probs.row(i) = (e / e.sum()).matrix();
        if (targets[i] != ignore_id) {
            if (targets[i] < 0 || targets[i] >= logits.cols())
                throw std::out_of_range("cross_entropy_rows: target id out of range");
            loss -= std::log(std::max(probs(i, targets[i]), 1e-300));
        }
    }
    Matrix v(1, 1);
    v(0, 0) = loss / static_cast<double>(active);
    return make(std::move(v), {logits}, [logits, probs, targets, ignore_id, active](Node& n) {
        if (!logits.node()->requires_grad) return;
        const double g = n.grad(0, 0) / static_cast<double>(active);
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            if (targets[i] == ignore_id) continue;
            logits.node()->grad.row(i) += g * probs.row(i);
            logits.node()->grad(i, targets[i]) -= g;
        }
    });
}

Var bce_with_logit(const Var& logit, double label) {
    if (logit.rows() != 1 || logit.cols() != 1) throw std::invalid_argument("bce_with_logit: logit must be 1x1");
    const double z = logit.value()(0, 0);
    // log(1+exp(z)) computed stably
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    Matrix v(1, 1);
    v(0, 0) = softplus - label * z;
    return make(std::move(v), {logit}, [logit, z, label](Node& n) {
        if (!logit.node()->requires_grad) return;
        const double p = 1.0 / (1.0 + std::exp(-z));
        logit.node()->grad(0, 0) += n.grad(0, 0) * (p - label);
    });
}

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, std::mt19937& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

Var ParamStore::add(const std::string& name, Matrix init) {
    if (params.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Var v = parameter(std::move(init));
    params.emplace(name, v);
    return v;
}

Var ParamStore::at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [name, v] : params) v.zero_grad();
}

std::string ParamStore::group_of(const std::string& name) {
    auto pos = name.find('/');
    return pos == std::string::npos ? name : name.substr(0, pos);
}

}  // namespace muse::nn
