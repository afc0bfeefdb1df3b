#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "keyflow/rng.hpp"
#include "keyflow/tape.hpp"

using keyflow::Mat;
using keyflow::Tape;

namespace {

Mat random_mat(std::uint64_t seed, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    keyflow::Rng rng(seed);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
    return m;
}

// Central finite difference of `loss(params)` against tape gradients, for a
// scalar-valued graph defined by `build`. Params are passed by value and the
// graph rebuilt per evaluation, matching the single-use tape contract.
void check_gradients(const std::map<std::string, Mat>& params,
                     const std::function<double(Tape&, const std::map<std::string, Mat>&)>& build,
                     double h = 1e-6, double rel_tol = 1e-6) {
    Tape tape;
    build(tape, params);
    // The last node is the scalar loss by construction in these tests.
    Tape grad_tape;
    const double base [[maybe_unused]] = build(grad_tape, params);
    grad_tape.backward(static_cast<Tape::NodeId>(grad_tape.size() - 1));
    const auto grads = grad_tape.grads();
    for (const auto& [name, value] : params) {
        REQUIRE(grads.count(name) == 1);
        const Mat& g = grads.at(name);
        REQUIRE(g.rows() == value.rows());
        REQUIRE(g.cols() == value.cols());
        for (Eigen::Index i = 0; i < value.rows(); ++i) {
            for (Eigen::Index j = 0; j < value.cols(); ++j) {
                auto perturbed = params;
                perturbed[name](i, j) = value(i, j) + h;
                Tape tp;
                const double up = build(tp, perturbed);
                perturbed[name](i, j) = value(i, j) - h;
                Tape tm;
                const double down = build(tm, perturbed);
                const double fd = (up - down) / (2.0 * h);
                const double scale = std::max({std::abs(fd), std::abs(g(i, j)), 1e-8});
                CHECK(std::abs(fd - g(i, j)) / scale < rel_tol);
            }
        }
    }
}

}  // namespace

TEST_CASE("forward values: basic ops") {
    Tape tape;
    Mat a(2, 2), b(2, 2);
    a << 1, 2, 3, 4;
    b << 5, 6, 7, 8;
    const auto na = tape.input(a);
    const auto nb = tape.input(b);
    CHECK((tape.value(tape.matmul(na, nb)) - (a * b)).norm() == 0.0);
    CHECK((tape.value(tape.add(na, nb)) - (a + b)).norm() == 0.0);
    CHECK((tape.value(tape.sub(na, nb)) - (a - b)).norm() == 0.0);
    Mat row(1, 2);
    row << 10, 20;
    const auto nrow = tape.input(row);
    Mat expect_rowadd = a;
    expect_rowadd.rowwise() += row.row(0);
    CHECK((tape.value(tape.add_rowvec(na, nrow)) - expect_rowadd).norm() == 0.0);
    CHECK((tape.value(tape.colwise_max(na)) - a.colwise().maxCoeff()).norm() == 0.0);
    const auto rep = tape.repeat_row(nrow, 3);
    CHECK(tape.value(rep).rows() == 3);
    CHECK((tape.value(rep).row(2) - row.row(0)).norm() == 0.0);
    const auto h = tape.hcat(na, nb);
    CHECK(tape.value(h).cols() == 4);
    CHECK(tape.value(h)(1, 3) == 8.0);
    const auto v = tape.vcat(na, nb);
    CHECK(tape.value(v).rows() == 4);
    CHECK(tape.value(v)(3, 1) == 8.0);
    const auto sl = tape.rows(v, 1, 2);
    CHECK(tape.value(sl).rows() == 2);
    CHECK(tape.value(sl)(0, 0) == 3.0);
    CHECK(tape.value(sl)(1, 0) == 5.0);
}

TEST_CASE("gelu forward matches the exact erf formula") {
    Tape tape;
    Mat x(1, 5);
    x << -3.0, -1.0, 0.0, 0.5, 2.0;
    const auto y = tape.gelu(tape.input(x));
    for (int j = 0; j < 5; ++j) {
        const double v = x(0, j);
        const double expect = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
        CHECK(tape.value(y)(0, j) == doctest::Approx(expect).epsilon(1e-15));
    }
    CHECK(tape.value(y)(0, 2) == 0.0);  // gelu(0) == 0 exactly
}

TEST_CASE("mse_scalar averages over all entries") {
    Tape tape;
    Mat a(2, 3), b(2, 3);
    a << 1, 2, 3, 4, 5, 6;
    b << 1, 1, 1, 1, 1, 1;
    const auto loss = tape.mse_scalar(tape.input(a), tape.input(b));
    const double expect = (0.0 + 1.0 + 4.0 + 9.0 + 16.0 + 25.0) / 6.0;
    CHECK(tape.value(loss)(0, 0) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("backward requires a scalar root") {
    Tape tape;
    const auto m = tape.param("w", Mat::Ones(2, 2));
    CHECK_THROWS(tape.backward(m));
}

TEST_CASE("gradient: matmul chain") {
    std::map<std::string, Mat> params{{"w1", random_mat(1, 3, 4, 0.5)},
                                      {"w2", random_mat(2, 4, 2, 0.5)}};
    const Mat x = random_mat(3, 5, 3);
    const Mat tgt = random_mat(4, 5, 2);
    check_gradients(params, [&](Tape& t, const std::map<std::string, Mat>& p) {
        const auto h = t.matmul(t.input(x), t.param("w1", p.at("w1")));
        const auto y = t.matmul(h, t.param("w2", p.at("w2")));
        return t.value(t.mse_scalar(y, t.input(tgt)))(0, 0);
    });
}

TEST_CASE("gradient: add, sub, add_rowvec") {
    std::map<std::string, Mat> params{{"a", random_mat(11, 3, 3)},
                                      {"b", random_mat(12, 3, 3)},
                                      {"row", random_mat(13, 1, 3)}};
    const Mat tgt = random_mat(14, 3, 3);
    check_gradients(params, [&](Tape& t, const std::map<std::string, Mat>& p) {
        const auto s = t.sub(t.add(t.param("a", p.at("a")), t.param("b", p.at("b"))),
                             t.input(Mat::Ones(3, 3)));
        const auto y = t.add_rowvec(s, t.param("row", p.at("row")));
        return t.value(t.mse_scalar(y, t.input(tgt)))(0, 0);
    });
}

TEST_CASE("gradient: gelu") {
    // Avoid points too close to zero curvature extremes; spread of normal
    // samples is fine for a central difference at h = 1e-6.
    std::map<std::string, Mat> params{{"x", random_mat(21, 4, 3, 1.5)}};
    const Mat tgt = random_mat(22, 4, 3);
    check_gradients(params, [&](Tape& t, const std::map<std::string, Mat>& p) {
        const auto y = t.gelu(t.param("x", p.at("x")));
        return t.value(t.mse_scalar(y, t.input(tgt)))(0, 0);
    });
}

TEST_CASE("gradient: colwise_max routes to the argmax row") {
    Mat x(3, 2);
    x << 1.0, 5.0, 4.0, 2.0, 3.0, 3.0;
    std::map<std::string, Mat> params{{"x", x}};
    const Mat tgt = random_mat(23, 1, 2);
    check_gradients(params, [&](Tape& t, const std::map<std::string, Mat>& p) {
        const auto y = t.colwise_max(t.param("x", p.at("x")));
        return t.value(t.mse_scalar(y, t.input(tgt)))(0, 0);
    });
}

TEST_CASE("colwise_max tie sends gradient to the first maximal row") {
    Mat x(3, 1);
    x << 2.0, 7.0, 7.0;  // tie between rows 1 and 2
    Tape tape;
    const auto nx = tape.param("x", x);
    const auto y = tape.colwise_max(nx);
    const auto loss = tape.mse_scalar(y, tape.input(Mat::Zero(1, 1)));
    tape.backward(loss);
    const Mat g = tape.grads().at("x");
    CHECK(g(0, 0) == 0.0);
    CHECK(g(1, 0) != 0.0);
    CHECK(g(2, 0) == 0.0);
}

TEST_CASE("gradient: repeat_row, hcat, vcat, rows") {
    std::map<std::string, Mat> params{{"row", random_mat(31, 1, 2)},
                                      {"a", random_mat(32, 2, 2)},
                                      {"b", random_mat(33, 2, 2)}};
    const Mat tgt = random_mat(34, 2, 2);
    check_gradients(params, [&](Tape& t, const std::map<std::string, Mat>& p) {
        const auto rep = t.repeat_row(t.param("row", p.at("row")), 2);   // 2 x 2
        const auto cat = t.hcat(t.param("a", p.at("a")), rep);           // 2 x 4
        const auto stack = t.vcat(cat, t.hcat(rep, t.param("b", p.at("b"))));  // 4 x 4
        const auto slice = t.rows(stack, 1, 2);                          // 2 x 4
        const auto half = t.rows(t.hcat(slice, slice), 0, 2);            // reuse ok
        const auto y = t.matmul(half, t.input(random_mat(35, 8, 2)));
        return t.value(t.mse_scalar(y, t.input(tgt)))(0, 0);
    });
}

TEST_CASE("gradient: parameter used twice accumulates both paths") {
    std::map<std::string, Mat> params{{"w", random_mat(41, 2, 2, 0.7)}};
    const Mat x = random_mat(42, 3, 2);
    const Mat tgt = random_mat(43, 3, 2);
    check_gradients(params, [&](Tape& t, const std::map<std::string, Mat>& p) {
        const auto w = t.param("w", p.at("w"));
        const auto y = t.add(t.matmul(t.input(x), w), t.matmul(t.input(x), w));
        return t.value(t.mse_scalar(y, t.input(tgt)))(0, 0);
    });
}

TEST_CASE("gradient: same name registered as two nodes sums gradients") {
    std::map<std::string, Mat> params{{"w", random_mat(51, 2, 2, 0.7)}};
    const Mat x = random_mat(52, 3, 2);
    const Mat tgt = random_mat(53, 3, 2);
    check_gradients(params, [&](Tape& t, const std::map<std::string, Mat>& p) {
        // Two distinct param nodes sharing the name, as a weight-tied layer.
        const auto w1 = t.param("w", p.at("w"));
        const auto w2 = t.param("w", p.at("w"));
        const auto y = t.matmul(t.matmul(t.input(x), w1), w2);
        return t.value(t.mse_scalar(y, t.input(tgt)))(0, 0);
    });
}

TEST_CASE("gradient: full mini-MLP with pooling") {
    std::map<std::string, Mat> params{{"W1", random_mat(61, 3, 8, 0.5)},
                                      {"b1", random_mat(62, 1, 8, 0.1)},
                                      {"W2", random_mat(63, 8, 4, 0.5)},
                                      {"b2", random_mat(64, 1, 4, 0.1)}};
    const Mat x = random_mat(65, 6, 3);
    const Mat tgt = random_mat(66, 6, 4);
    check_gradients(params, [&](Tape& t, const std::map<std::string, Mat>& p) {
        const auto h = t.gelu(t.add_rowvec(t.matmul(t.input(x), t.param("W1", p.at("W1"))),
                                           t.param("b1", p.at("b1"))));
        const auto pooled = t.colwise_max(h);                       // 1 x 8
        const auto ctx = t.repeat_row(pooled, x.rows());            // 6 x 8
        const auto y = t.add_rowvec(t.matmul(ctx, t.param("W2", p.at("W2"))),
                                    t.param("b2", p.at("b2")));
        return t.value(t.mse_scalar(y, t.input(tgt)))(0, 0);
    }, 1e-6, 2e-6);
}

TEST_CASE("inputs receive no gradient entries") {
    Tape tape;
    const auto x = tape.input(Mat::Ones(2, 2));
    const auto w = tape.param("w", Mat::Ones(2, 2));
    const auto loss = tape.mse_scalar(tape.matmul(x, w), tape.input(Mat::Zero(2, 2)));
    tape.backward(loss);
    const auto grads = tape.grads();
    CHECK(grads.size() == 1);
    CHECK(grads.count("w") == 1);
}

TEST_CASE("shape mismatches throw") {
    Tape tape;
    const auto a = tape.input(Mat::Ones(2, 3));
    const auto b = tape.input(Mat::Ones(2, 3));
    CHECK_THROWS(tape.matmul(a, b));
    CHECK_THROWS(tape.add(a, tape.input(Mat::Ones(3, 2))));
    CHECK_THROWS(tape.add_rowvec(a, tape.input(Mat::Ones(1, 4))));
    CHECK_THROWS(tape.vcat(a, tape.input(Mat::Ones(2, 4))));
    CHECK_THROWS(tape.hcat(a, tape.input(Mat::Ones(3, 3))));
    CHECK_THROWS(tape.rows(a, 1, 5));
    CHECK_THROWS(tape.mse_scalar(a, tape.input(Mat::Ones(3, 2))));
}
