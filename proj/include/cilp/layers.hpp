#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cilp/autodiff.hpp"

namespace cilp::ad {

/// x . W + b with W of shape (in x out).
template <typename Scalar>
struct Linear {
    Tensor<Scalar> weight;
    Tensor<Scalar> bias;

    Linear() = default;
    template <typename Rng>
    Linear(BasicModelParams<Scalar>& params, const std::string& name, Index in, Index out, Rng& rng)
        : weight(params.add(name + ".weight", xavier_uniform<Scalar>(in, out, rng))),
          bias(params.add(name + ".bias", Matrix<Scalar>::Zero(1, out))) {}

    Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return matmul(x, weight) + bias; }
};

/// Two linear maps with a leaky ReLU between them.
template <typename Scalar>
struct FeedForward {
    Linear<Scalar> hidden;
    Linear<Scalar> output;
    Scalar slope = Scalar(0.01);

    FeedForward() = default;
    template <typename Rng>
    FeedForward(BasicModelParams<Scalar>& params, const std::string& name, Index in, Index width, Index out, Rng& rng,
                Scalar slope_ = Scalar(0.01))
        : hidden(params, name + ".0", in, width, rng), output(params, name + ".1", width, out, rng), slope(slope_) {}

    Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return output(leaky_relu(hidden(x), slope)); }
};

template <typename Scalar>
struct LayerNorm {
    Tensor<Scalar> gain;
    Tensor<Scalar> bias;

    LayerNorm() = default;
    LayerNorm(BasicModelParams<Scalar>& params, const std::string& name, Index width)
        : gain(params.add(name + ".gain", Matrix<Scalar>::Ones(1, width))),
          bias(params.add(name + ".bias", Matrix<Scalar>::Zero(1, width))) {}

    Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return layer_norm(x, gain, bias); }
};

/// softmax(Q K^T / sqrt(m)) V, m = key width.
template <typename Scalar>
Tensor<Scalar> scaled_dot_attention(const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v) {
    if (q.cols() != k.cols()) throw std::invalid_argument("scaled_dot_attention: query/key width mismatch");
    if (k.rows() != v.rows()) throw std::invalid_argument("scaled_dot_attention: key/value length mismatch");
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(k.cols()));
    return matmul(softmax_rows(matmul(q, transpose(k)) * scale), v);
}

template <typename Scalar>
struct MultiHeadAttention {
    Index heads = 1;
    Linear<Scalar> query;
    Linear<Scalar> key;
    Linear<Scalar> value;
    Linear<Scalar> output;

    MultiHeadAttention() = default;
    template <typename Rng>
    MultiHeadAttention(BasicModelParams<Scalar>& params, const std::string& name, Index width, Index heads_, Rng& rng)
        : heads(heads_),
          query(params, name + ".query", width, width, rng),
          key(params, name + ".key", width, width, rng),
          value(params, name + ".value", width, width, rng),
          output(params, name + ".output", width, width, rng) {
        if (heads <= 0 || width % heads != 0) {
            throw std::invalid_argument("multi-head attention: heads must divide width");
        }
    }

    Tensor<Scalar> operator()(const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v) const {
        const auto pq = query(q);
        const auto pk = key(k);
        const auto pv = value(v);
        const Index dim = pq.cols() / heads;
        Tensor<Scalar> joined;
        for (Index h = 0; h < heads; ++h) {
            auto head = scaled_dot_attention(slice_cols(pq, h * dim, dim), slice_cols(pk, h * dim, dim),
                                             slice_cols(pv, h * dim, dim));
            joined = joined.defined() ? concat_cols(joined, head) : head;
        }
        return output(joined);
    }
};

/// Sinusoidal position table: sin on even channels, cos on odd ones.
template <typename Scalar>
Matrix<Scalar> positional_encoding(Index seq_len, Index width) {
    Matrix<Scalar> pe(seq_len, width);
    for (Index pos = 0; pos < seq_len; ++pos) {
        for (Index i = 0; i < width; ++i) {
            const Scalar exponent = static_cast<Scalar>(2 * (i / 2)) / static_cast<Scalar>(width);
            const Scalar angle = static_cast<Scalar>(pos) / std::pow(Scalar(10000), exponent);
            pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

}  // namespace cilp::ad
