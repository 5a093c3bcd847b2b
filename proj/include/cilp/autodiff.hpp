#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tensor is a cheap handle to a graph node; operations are free
// functions that record how to push gradients back to their inputs.

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

namespace cilp::ad {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

template <typename Scalar>
struct Node {
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    /// Pushes `grad` of this node into its parents.
    std::function<void(Node&)> backprop;

    bool is_leaf() const { return !backprop; }

    void accumulate(const Matrix<Scalar>& g) {
        if (grad.size() == 0) {
            grad = g;
        } else {
            grad += g;
        }
    }
};

template <typename Scalar>
class Tensor {
public:
    using scalar_type = Scalar;
    using matrix_type = Matrix<Scalar>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<Scalar>> node) : node_(std::move(node)) {}

    /// Input that never receives a gradient.
    static Tensor constant(matrix_type value) {
        auto n = std::make_shared<Node<Scalar>>();
        n->value = std::move(value);
        return Tensor(std::move(n));
    }

    /// Trainable leaf; gradients accumulate across backward calls until zero_grad.
    static Tensor parameter(matrix_type value) {
        auto n = std::make_shared<Node<Scalar>>();
        n->value = std::move(value);
        n->requires_grad = true;
        return Tensor(std::move(n));
    }

    static Tensor scalar(Scalar v) { return constant(matrix_type::Constant(1, 1, v)); }

    bool defined() const { return static_cast<bool>(node_); }
    Index rows() const { return node_->value.rows(); }
    Index cols() const { return node_->value.cols(); }
    std::array<Index, 2> shape() const { return {rows(), cols()}; }

    const matrix_type& value() const { return node_->value; }
    /// Direct access for optimizers; do not call while a graph built on this tensor is alive.
    matrix_type& mutable_value() { return node_->value; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return node_->grad.size() != 0; }
    /// Gradient, or zeros of the value's shape when none has been accumulated.
    matrix_type grad() const {
        return has_grad() ? node_->grad : matrix_type::Zero(rows(), cols());
    }
    void zero_grad() { node_->grad.resize(0, 0); }

    Scalar item() const {
        if (rows() != 1 || cols() != 1) throw std::invalid_argument("item() requires a 1x1 tensor");
        return node_->value(0, 0);
    }

    Tensor detach() const { return constant(value()); }

    const std::shared_ptr<Node<Scalar>>& node() const { return node_; }

private:
    std::shared_ptr<Node<Scalar>> node_;
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> make_op(Matrix<Scalar> value, std::vector<Tensor<Scalar>> inputs,
                       std::function<void(Node<Scalar>&)> backprop) {
    auto n = std::make_shared<Node<Scalar>>();
    n->value = std::move(value);
    for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
    if (n->requires_grad) {
        for (const auto& in : inputs) n->parents.push_back(in.node());
        n->backprop = std::move(backprop);
    }
    return Tensor<Scalar>(std::move(n));
}

template <typename Scalar>
void push(const std::shared_ptr<Node<Scalar>>& parent, const Matrix<Scalar>& g) {
    if (parent->requires_grad) parent->accumulate(g);
}

template <typename Scalar>
[[noreturn]] void shape_error(const char* op, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

enum class Broadcast { None, Row, Scalar };

template <typename Scalar>
Broadcast broadcast_kind(const char* op, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.shape() == b.shape()) return Broadcast::None;
    if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
    shape_error(op, a, b);
}

template <typename Scalar>
Matrix<Scalar> expand(const Matrix<Scalar>& b, Broadcast kind, Index rows, Index cols) {
    switch (kind) {
        case Broadcast::Row: return b.replicate(rows, 1);
        case Broadcast::Scalar: return Matrix<Scalar>::Constant(rows, cols, b(0, 0));
        case Broadcast::None: break;
    }
    return b;
}

template <typename Scalar>
Matrix<Scalar> reduce(const Matrix<Scalar>& g, Broadcast kind) {
    switch (kind) {
        case Broadcast::Row: return g.colwise().sum();
        case Broadcast::Scalar: return Matrix<Scalar>::Constant(1, 1, g.sum());
        case Broadcast::None: break;
    }
    return g;
}

}  // namespace detail

/// (n x k) . (k x m)
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.cols() != b.rows()) detail::shape_error("matmul", a, b);
    Matrix<Scalar> out = a.value() * b.value();
    return detail::make_op<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
        const auto& pa = self.parents[0];
        const auto& pb = self.parents[1];
        if (pa->requires_grad) pa->accumulate(self.grad * pb->value.transpose());
        if (pb->requires_grad) pb->accumulate(pa->value.transpose() * self.grad);
    });
}

/// Elementwise sum; `b` may also be a 1 x cols row or a 1 x 1 scalar broadcast over `a`.
template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    const auto kind = detail::broadcast_kind("add", a, b);
    Matrix<Scalar> out = a.value() + detail::expand(b.value(), kind, a.rows(), a.cols());
    return detail::make_op<Scalar>(std::move(out), {a, b}, [kind](Node<Scalar>& self) {
        detail::push(self.parents[0], self.grad);
        detail::push<Scalar>(self.parents[1], detail::reduce(self.grad, kind));
    });
}

template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    const auto kind = detail::broadcast_kind("sub", a, b);
    Matrix<Scalar> out = a.value() - detail::expand(b.value(), kind, a.rows(), a.cols());
    return detail::make_op<Scalar>(std::move(out), {a, b}, [kind](Node<Scalar>& self) {
        detail::push(self.parents[0], self.grad);
        detail::push<Scalar>(self.parents[1], -detail::reduce(self.grad, kind));
    });
}

template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, Scalar s) {
    Matrix<Scalar> out = a.value() * s;
    return detail::make_op<Scalar>(std::move(out), {a},
                                   [s](Node<Scalar>& self) { detail::push<Scalar>(self.parents[0], self.grad * s); });
}

template <typename Scalar>
Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& a) {
    return a * s;
}

template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a) {
    return a * Scalar(-1);
}

/// Elementwise product of equally shaped tensors.
template <typename Scalar>
Tensor<Scalar> cwise_product(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.shape() != b.shape()) detail::shape_error("cwise_product", a, b);
    Matrix<Scalar> out = a.value().cwiseProduct(b.value());
    return detail::make_op<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
        const auto& pa = self.parents[0];
        const auto& pb = self.parents[1];
        if (pa->requires_grad) pa->accumulate(self.grad.cwiseProduct(pb->value));
        if (pb->requires_grad) pb->accumulate(self.grad.cwiseProduct(pa->value));
    });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
    Matrix<Scalar> out = a.value().transpose();
    return detail::make_op<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
        detail::push<Scalar>(self.parents[0], self.grad.transpose());
    });
}

/// [a, b] side by side; row counts must agree.
template <typename Scalar>
Tensor<Scalar> concat_cols(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.rows() != b.rows()) detail::shape_error("concat_cols", a, b);
    Matrix<Scalar> out(a.rows(), a.cols() + b.cols());
    out << a.value(), b.value();
    const Index split = a.cols();
    return detail::make_op<Scalar>(std::move(out), {a, b}, [split](Node<Scalar>& self) {
        const Index right = self.grad.cols() - split;
        detail::push<Scalar>(self.parents[0], self.grad.leftCols(split));
        detail::push<Scalar>(self.parents[1], self.grad.rightCols(right));
    });
}

/// a stacked on top of b; column counts must agree.
template <typename Scalar>
Tensor<Scalar> concat_rows(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.cols() != b.cols()) detail::shape_error("concat_rows", a, b);
    Matrix<Scalar> out(a.rows() + b.rows(), a.cols());
    if (a.rows() > 0) out.topRows(a.rows()) = a.value();
    if (b.rows() > 0) out.bottomRows(b.rows()) = b.value();
    const Index split = a.rows();
    return detail::make_op<Scalar>(std::move(out), {a, b}, [split](Node<Scalar>& self) {
        const Index bottom = self.grad.rows() - split;
        detail::push<Scalar>(self.parents[0], self.grad.topRows(split));
        detail::push<Scalar>(self.parents[1], self.grad.bottomRows(bottom));
    });
}

template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw std::invalid_argument("slice_rows: out of range");
    Matrix<Scalar> out = a.value().middleRows(start, count);
    const Index rows = a.rows();
    const Index cols = a.cols();
    return detail::make_op<Scalar>(std::move(out), {a}, [start, count, rows, cols](Node<Scalar>& self) {
        Matrix<Scalar> g = Matrix<Scalar>::Zero(rows, cols);
        g.middleRows(start, count) = self.grad;
        detail::push(self.parents[0], g);
    });
}

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
    Matrix<Scalar> out = a.value().middleCols(start, count);
    const Index rows = a.rows();
    const Index cols = a.cols();
    return detail::make_op<Scalar>(std::move(out), {a}, [start, count, rows, cols](Node<Scalar>& self) {
        Matrix<Scalar> g = Matrix<Scalar>::Zero(rows, cols);
        g.middleCols(start, count) = self.grad;
        detail::push(self.parents[0], g);
    });
}

/// Repeats a 1 x n row `rows` times.
template <typename Scalar>
Tensor<Scalar> broadcast_rows(const Tensor<Scalar>& a, Index rows) {
    if (a.rows() != 1) throw std::invalid_argument("broadcast_rows: expected a single row");
    Matrix<Scalar> out = a.value().replicate(rows, 1);
    return detail::make_op<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
        detail::push<Scalar>(self.parents[0], self.grad.colwise().sum());
    });
}

/// x for x >= 0, slope * x otherwise.
template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& a, Scalar slope = Scalar(0.01)) {
    Matrix<Scalar> out = a.value().unaryExpr([slope](Scalar x) { return x >= Scalar(0) ? x : slope * x; });
    return detail::make_op<Scalar>(std::move(out), {a}, [slope](Node<Scalar>& self) {
        const auto& in = self.parents[0]->value;
        Matrix<Scalar> d = in.unaryExpr([slope](Scalar x) { return x >= Scalar(0) ? Scalar(1) : slope; });
        detail::push<Scalar>(self.parents[0], self.grad.cwiseProduct(d));
    });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& a) {
    Matrix<Scalar> out = a.value().unaryExpr([](Scalar x) {
        if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
        const Scalar e = std::exp(x);
        return e / (Scalar(1) + e);
    });
    return detail::make_op<Scalar>(Matrix<Scalar>(out), {a}, [out](Node<Scalar>& self) {
        Matrix<Scalar> d = out.cwiseProduct((Scalar(1) - out.array()).matrix());
        detail::push<Scalar>(self.parents[0], self.grad.cwiseProduct(d));
    });
}

template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& a) {
    Matrix<Scalar> out = a.value().array().log().matrix();
    return detail::make_op<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
        detail::push<Scalar>(self.parents[0], self.grad.cwiseQuotient(self.parents[0]->value));
    });
}

/// Clamps into [lo, hi]; the gradient is zero where clamping was active.
template <typename Scalar>
Tensor<Scalar> clamp(const Tensor<Scalar>& a, Scalar lo, Scalar hi) {
    Matrix<Scalar> out = a.value().cwiseMax(lo).cwiseMin(hi);
    return detail::make_op<Scalar>(std::move(out), {a}, [lo, hi](Node<Scalar>& self) {
        const auto& in = self.parents[0]->value;
        Matrix<Scalar> mask = in.unaryExpr([lo, hi](Scalar x) { return x >= lo && x <= hi ? Scalar(1) : Scalar(0); });
        detail::push<Scalar>(self.parents[0], self.grad.cwiseProduct(mask));
    });
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& a) {
    return cwise_product(a, a);
}

/// 1 x 1 sum of all entries.
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
    Matrix<Scalar> out = Matrix<Scalar>::Constant(1, 1, a.value().sum());
    const Index rows = a.rows();
    const Index cols = a.cols();
    return detail::make_op<Scalar>(std::move(out), {a}, [rows, cols](Node<Scalar>& self) {
        detail::push<Scalar>(self.parents[0], Matrix<Scalar>::Constant(rows, cols, self.grad(0, 0)));
    });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
    const auto n = static_cast<Scalar>(a.rows() * a.cols());
    return sum(a) * (n > Scalar(0) ? Scalar(1) / n : Scalar(0));
}

/// 1 x cols average over rows.
template <typename Scalar>
Tensor<Scalar> mean_rows(const Tensor<Scalar>& a) {
    if (a.rows() == 0) throw std::invalid_argument("mean_rows: empty tensor");
    const Index rows = a.rows();
    Matrix<Scalar> out = a.value().colwise().mean();
    return detail::make_op<Scalar>(std::move(out), {a}, [rows](Node<Scalar>& self) {
        detail::push<Scalar>(self.parents[0], self.grad.replicate(rows, 1) / static_cast<Scalar>(rows));
    });
}

namespace detail {

// Row-wise softmax restricted to entries where mask != 0; fully masked rows are zero.
template <typename Scalar>
Matrix<Scalar> softmax_values(const Matrix<Scalar>& x, const Matrix<Scalar>* mask) {
    Matrix<Scalar> out = Matrix<Scalar>::Zero(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        Scalar top = -std::numeric_limits<Scalar>::infinity();
        for (Index j = 0; j < x.cols(); ++j) {
            if (!mask || (*mask)(i, j) != Scalar(0)) top = std::max(top, x(i, j));
        }
        if (!std::isfinite(top)) continue;
        Scalar total = 0;
        for (Index j = 0; j < x.cols(); ++j) {
            if (!mask || (*mask)(i, j) != Scalar(0)) {
                out(i, j) = std::exp(x(i, j) - top);
                total += out(i, j);
            }
        }
        out.row(i) /= total;
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> softmax_op(const Tensor<Scalar>& a, const Matrix<Scalar>* mask) {
    Matrix<Scalar> out = softmax_values(a.value(), mask);
    return make_op<Scalar>(Matrix<Scalar>(out), {a}, [out](Node<Scalar>& self) {
        // dx = y * (dy - <dy, y>) per row
        Matrix<Scalar> inner = self.grad.cwiseProduct(out).rowwise().sum();
        Matrix<Scalar> g = out.cwiseProduct(self.grad - inner.replicate(1, out.cols()));
        push(self.parents[0], g);
    });
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& a) {
    return detail::softmax_op<Scalar>(a, nullptr);
}

/// Softmax of each row over the columns where `mask` is non-zero.
template <typename Scalar>
Tensor<Scalar> masked_softmax_rows(const Tensor<Scalar>& a, const Matrix<Scalar>& mask) {
    if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
        throw std::invalid_argument("masked_softmax_rows: mask shape mismatch");
    }
    return detail::softmax_op<Scalar>(a, &mask);
}

/// Normalizes each row to zero mean and unit variance, then applies `gain` and `bias` (both 1 x cols).
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, const Tensor<Scalar>& bias,
                          Scalar eps = Scalar(1e-5)) {
    if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols()) {
        throw std::invalid_argument("layer_norm: gain/bias must be 1 x cols");
    }
    const Index n = x.cols();
    Matrix<Scalar> normalized(x.rows(), n);
    Matrix<Scalar> inv_std(x.rows(), 1);
    for (Index i = 0; i < x.rows(); ++i) {
        const Scalar mu = x.value().row(i).mean();
        const Scalar var = (x.value().row(i).array() - mu).square().mean();
        inv_std(i, 0) = Scalar(1) / std::sqrt(var + eps);
        normalized.row(i) = (x.value().row(i).array() - mu) * inv_std(i, 0);
    }
    Matrix<Scalar> out = normalized.cwiseProduct(gain.value().replicate(x.rows(), 1)) +
                         bias.value().replicate(x.rows(), 1);
    return detail::make_op<Scalar>(std::move(out), {x, gain, bias}, [normalized, inv_std, n](Node<Scalar>& self) {
        const auto& px = self.parents[0];
        const auto& pg = self.parents[1];
        const auto& pb = self.parents[2];
        if (pg->requires_grad) pg->accumulate(self.grad.cwiseProduct(normalized).colwise().sum());
        if (pb->requires_grad) pb->accumulate(self.grad.colwise().sum());
        if (px->requires_grad) {
            Matrix<Scalar> dn = self.grad.cwiseProduct(pg->value.replicate(self.grad.rows(), 1));
            Matrix<Scalar> g(dn.rows(), n);
            for (Index i = 0; i < dn.rows(); ++i) {
                const Scalar mean_dn = dn.row(i).mean();
                const Scalar mean_dn_n = dn.row(i).cwiseProduct(normalized.row(i)).mean();
                g.row(i) = inv_std(i, 0) *
                           (dn.row(i).array() - mean_dn - normalized.row(i).array() * mean_dn_n).matrix();
            }
            px->accumulate(g);
        }
    });
}

/// Reverse-mode sweep from a 1 x 1 loss. Leaf gradients accumulate across
/// calls; intermediate gradients are recomputed each time.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward: loss must be a 1x1 tensor");
    if (!loss.requires_grad()) return;

    std::vector<Node<Scalar>*> order;
    std::unordered_set<Node<Scalar>*> seen;
    std::vector<std::pair<Node<Scalar>*, bool>> stack{{loss.node().get(), false}};
    while (!stack.empty()) {
        auto [node, expanded] = stack.back();
        stack.pop_back();
        if (expanded) {
            order.push_back(node);
            continue;
        }
        if (!seen.insert(node).second) continue;
        stack.push_back({node, true});
        for (const auto& p : node->parents) {
            if (p->requires_grad && seen.count(p.get()) == 0) stack.push_back({p.get(), false});
        }
    }

    for (auto* node : order) {
        if (!node->is_leaf()) node->grad.resize(0, 0);
    }
    loss.node()->accumulate(Matrix<Scalar>::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<Scalar>& node = **it;
        if (!node.is_leaf() && node.grad.size() != 0) node.backprop(node);
    }
}

/// Named trainable parameters of a model.
template <typename Scalar>
class BasicModelParams {
public:
    using tensor_type = Tensor<Scalar>;

    tensor_type add(const std::string& name, Matrix<Scalar> init) {
        if (tensors_.count(name) != 0) throw std::invalid_argument("duplicate parameter '" + name + "'");
        auto t = tensor_type::parameter(std::move(init));
        tensors_.emplace(name, t);
        return t;
    }

    const std::map<std::string, tensor_type>& tensors() const { return tensors_; }
    const tensor_type& at(const std::string& name) const { return tensors_.at(name); }

    void zero_grad() {
        for (auto& [_, t] : tensors_) t.zero_grad();
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : tensors_) n += static_cast<std::size_t>(t.value().size());
        return n;
    }

    bool all_finite() const {
        for (const auto& [_, t] : tensors_) {
            if (!t.value().allFinite()) return false;
        }
        return true;
    }

    std::map<std::string, Matrix<Scalar>> snapshot() const {
        std::map<std::string, Matrix<Scalar>> out;
        for (const auto& [name, t] : tensors_) out.emplace(name, t.value());
        return out;
    }

    /// Copies values in place; names and shapes must match exactly.
    void restore(const std::map<std::string, Matrix<Scalar>>& values) {
        if (values.size() != tensors_.size()) throw std::invalid_argument("restore: parameter set mismatch");
        for (auto& [name, t] : tensors_) {
            auto it = values.find(name);
            if (it == values.end()) throw std::invalid_argument("restore: missing parameter '" + name + "'");
            if (it->second.rows() != t.rows() || it->second.cols() != t.cols()) {
                throw std::invalid_argument("restore: shape mismatch for '" + name + "'");
            }
            t.mutable_value() = it->second;
        }
    }

private:
    std::map<std::string, tensor_type> tensors_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename Scalar, typename Rng>
Matrix<Scalar> xavier_uniform(Index fan_in, Index fan_out, Rng& rng) {
    const Scalar bound = std::sqrt(Scalar(6) / static_cast<Scalar>(fan_in + fan_out));
    std::uniform_real_distribution<Scalar> dist(-bound, bound);
    Matrix<Scalar> m(fan_in, fan_out);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

}  // namespace cilp::ad
