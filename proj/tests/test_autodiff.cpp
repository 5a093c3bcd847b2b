#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"

using namespace cilp;
using cilp::testing::T;
using cilp::testing::random_matrix;

TEST_CASE("matmul shapes and identity") {
    std::mt19937_64 rng(1);
    const Mat a = random_matrix(2, 3, rng);
    const auto id = T::constant(Mat::Identity(3, 3));
    CHECK(ad::matmul(T::constant(a), id).value().isApprox(a));
    const auto out = ad::matmul(T::constant(a), T::constant(random_matrix(3, 1, rng)));
    CHECK(out.rows() == 2);
    CHECK(out.cols() == 1);
    CHECK_THROWS_AS(ad::matmul(T::constant(a), T::constant(a)), std::invalid_argument);
}

TEST_CASE("concat and slice shapes") {
    const auto g = T::constant(Mat::Ones(4, 3));
    const auto w = T::constant(Mat::Zero(4, 5));
    const auto e = ad::concat_cols(g, w);
    CHECK(e.cols() == 8);
    CHECK(ad::slice_cols(e, 3, 5).value().isZero());
    CHECK(ad::concat_rows(g, g).rows() == 8);
    CHECK_THROWS_AS(ad::concat_cols(g, T::constant(Mat::Zero(3, 1))), std::invalid_argument);
}

TEST_CASE("leaky relu values") {
    Mat x(1, 3);
    x << 0.0, -1.0, 3.0;
    const Mat y = ad::leaky_relu(T::constant(x), 0.25).value();
    CHECK(y(0, 0) == 0.0);
    CHECK(y(0, 1) == doctest::Approx(-0.25));
    CHECK(y(0, 2) == 3.0);
    CHECK(ad::leaky_relu(T::constant(x)).value()(0, 1) == doctest::Approx(-0.01));
}

TEST_CASE("sigmoid softmax and layer norm definitions") {
    CHECK(ad::sigmoid(T::scalar(0.0)).item() == 0.5);
    const Mat s = ad::softmax_rows(T::constant(Mat::Constant(2, 4, 1.7))).value();
    CHECK(s.isApproxToConstant(0.25));

    std::mt19937_64 rng(2);
    const Mat x = random_matrix(5, 7, rng, -3.0, 3.0);
    const Mat p = ad::softmax_rows(T::constant(x)).value();
    for (int i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);

    const Mat n = ad::layer_norm(T::constant(x), T::constant(Mat::Ones(1, 7)), T::constant(Mat::Zero(1, 7))).value();
    for (int i = 0; i < n.rows(); ++i) {
        const double mean = n.row(i).mean();
        const double var = (n.row(i).array() - mean).square().mean();
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("masked softmax ignores masked entries and zeroes empty rows") {
    Mat x(2, 3);
    x << 1.0, 50.0, 2.0, 4.0, 5.0, 6.0;
    Mat mask(2, 3);
    mask << 1.0, 0.0, 1.0, 0.0, 0.0, 0.0;
    const Mat p = ad::masked_softmax_rows(T::constant(x), mask).value();
    CHECK(p(0, 1) == 0.0);
    CHECK(p(0, 0) + p(0, 2) == doctest::Approx(1.0));
    CHECK(p.row(1).isZero());
}

TEST_CASE("scaled dot attention examples") {
    std::mt19937_64 rng(3);
    const auto v = T::constant(random_matrix(1, 4, rng));
    const auto single = ad::scaled_dot_attention(T::constant(random_matrix(1, 2, rng)),
                                                 T::constant(random_matrix(1, 2, rng)), v);
    CHECK(single.value().isApprox(v.value()));

    const auto one = T::constant(Mat::Ones(1, 1));
    CHECK(ad::scaled_dot_attention(one, one, one).item() == doctest::Approx(1.0));

    const Mat k = Mat::Identity(3, 3);
    const Mat vals = random_matrix(3, 2, rng);
    const Mat q = k.row(1) * 200.0;
    const Mat out = ad::scaled_dot_attention(T::constant(q), T::constant(k), T::constant(vals)).value();
    CHECK((out - vals.row(1)).norm() < 1e-9);

    // Outputs are convex combinations of the value rows.
    const Mat vq = random_matrix(4, 3, rng);
    const Mat vv = random_matrix(5, 2, rng);
    const Mat o = ad::scaled_dot_attention(T::constant(vq), T::constant(random_matrix(5, 3, rng)), T::constant(vv))
                      .value();
    for (int c = 0; c < 2; ++c) {
        CHECK(o.col(c).maxCoeff() <= vv.col(c).maxCoeff() + 1e-12);
        CHECK(o.col(c).minCoeff() >= vv.col(c).minCoeff() - 1e-12);
    }
}

TEST_CASE("multi-head attention shape, single head and permutation equivariance") {
    std::mt19937_64 rng(4);
    ad::BasicModelParams<double> params;
    ad::MultiHeadAttention<double> mha(params, "a", 8, 4, rng);
    const Mat x = random_matrix(5, 8, rng);
    const Mat out = mha(T::constant(x), T::constant(x), T::constant(x)).value();
    CHECK(out.rows() == 5);
    CHECK(out.cols() == 8);

    Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
    perm.indices() << 3, 0, 4, 1, 2;
    const Mat px = perm * x;
    const Mat pout = mha(T::constant(px), T::constant(px), T::constant(px)).value();
    CHECK((pout - perm * out).norm() < 1e-12);

    ad::BasicModelParams<double> p1;
    ad::MultiHeadAttention<double> single(p1, "s", 4, 1, rng);
    const auto xs = T::constant(random_matrix(3, 4, rng));
    const auto expected = single.output(ad::scaled_dot_attention(single.query(xs), single.key(xs), single.value(xs)));
    CHECK(single(xs, xs, xs).value().isApprox(expected.value()));
    CHECK_THROWS_AS(ad::MultiHeadAttention<double>(p1, "bad", 6, 4, rng), std::invalid_argument);
}

TEST_CASE("positional encoding") {
    const Mat pe = ad::positional_encoding<double>(5, 64);
    for (int c = 0; c < 64; c += 2) CHECK(pe(0, c) == 0.0);
    CHECK(pe.cwiseAbs().maxCoeff() <= 1.0);
    CHECK(pe == ad::positional_encoding<double>(5, 64));
}

TEST_CASE("backward basics") {
    std::mt19937_64 rng(5);
    auto theta = T::parameter(random_matrix(3, 2, rng));
    auto input = T::constant(random_matrix(3, 2, rng));
    ad::backward(ad::sum(ad::square(theta)) + ad::sum(ad::cwise_product(theta, input)));
    CHECK(theta.grad().isApprox(2.0 * theta.value() + input.value()));
    CHECK_FALSE(input.has_grad());

    theta.zero_grad();
    ad::backward(ad::sum(theta));
    ad::backward(ad::sum(theta));
    CHECK(theta.grad().isApproxToConstant(2.0));

    CHECK_THROWS_AS(ad::backward(theta), std::invalid_argument);
}

TEST_CASE("gradient checks on small random instances") {
    std::mt19937_64 rng(6);
    for (const auto& c : cilp::testing::gradient_cases()) {
        for (int i = 0; i < 5; ++i) {
            const double err = c.run(rng);
            INFO(c.name << " instance " << i);
            CHECK(err < 1e-4);
        }
    }
}

TEST_CASE("parameter snapshot and restore") {
    std::mt19937_64 rng(7);
    ad::BasicModelParams<double> params;
    ad::Linear<double> layer(params, "l", 3, 2, rng);
    CHECK(params.parameter_count() == 8);
    const auto snap = params.snapshot();
    layer.weight.mutable_value().setZero();
    params.restore(snap);
    CHECK(layer.weight.value() == snap.at("l.weight"));
    CHECK(params.all_finite());
    CHECK_THROWS_AS(params.add("l.weight", Mat::Zero(1, 1)), std::invalid_argument);
}
