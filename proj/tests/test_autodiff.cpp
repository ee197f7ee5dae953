#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ncm/autodiff.hpp"

using namespace ncm::ad;

namespace {

// Central finite difference of a scalar function of a flat parameter vector.
double fd(const std::function<double(const std::vector<double>&)>& f,
          std::vector<double> x, std::size_t i, double h = 1e-6) {
    x[i] += h;
    const double fp = f(x);
    x[i] -= 2.0 * h;
    const double fm = f(x);
    return (fp - fm) / (2.0 * h);
}

// Checks every component of the gradient of `build` (fresh tape per call,
// returns the scalar root after wiring the leaf from x) against central FD.
void gradcheck(const std::vector<int>& shape, const std::vector<double>& x0,
               const std::function<NodeId(Tape&, NodeId)>& build, double tol = 1e-6) {
    Tape tape;
    const NodeId leaf = tape.leaf(Tensor(shape, x0));
    const NodeId root = tape.reduce_sum(build(tape, leaf));
    tape.backward(root);
    const Tensor analytic = tape.grad(leaf);
    REQUIRE(analytic.size() == x0.size());

    auto eval = [&](const std::vector<double>& x) {
        Tape t;
        const NodeId l = t.leaf(Tensor(shape, x));
        const NodeId r = t.reduce_sum(build(t, l));
        return t.value(r).item();
    };
    for (std::size_t i = 0; i < x0.size(); ++i) {
        const double want = fd(eval, x0, i);
        CHECK(analytic.data[i] == doctest::Approx(want).epsilon(tol).scale(1.0));
    }
}

}  // namespace

TEST_CASE("tensor: construction and validation") {
    const Tensor t({2, 2}, {1, 2, 3, 4});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 2);
    CHECK(t.size() == 4);
    CHECK(Tensor::zeros({3}).data == std::vector<double>{0, 0, 0});
    CHECK(Tensor::full({2}, 1.5).data == std::vector<double>{1.5, 1.5});
    CHECK(Tensor::scalar(2.0).item() == 2.0);
    CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({0}, {}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2}, {1, 2}).item(), std::invalid_argument);
}

TEST_CASE("forward: elementwise ops match closed forms") {
    Tape tape;
    const NodeId x = tape.leaf(Tensor({4}, {-2.0, -0.5, 0.5, 2.0}));
    const auto& neg = tape.value(tape.neg(x));
    CHECK(neg.data == std::vector<double>{2.0, 0.5, -0.5, -2.0});
    const auto& sc = tape.value(tape.scale(x, 3.0));
    CHECK(sc.data[3] == doctest::Approx(6.0));
    const auto& ac = tape.value(tape.add_const(x, 1.0));
    CHECK(ac.data[0] == doctest::Approx(-1.0));
    const auto& ex = tape.value(tape.exp(x));
    CHECK(ex.data[3] == doctest::Approx(std::exp(2.0)));
    const auto& sg = tape.value(tape.sigmoid(x));
    CHECK(sg.data[1] == doctest::Approx(1.0 / (1.0 + std::exp(0.5))));
    const auto& re = tape.value(tape.relu(x));
    CHECK(re.data == std::vector<double>{0.0, 0.0, 0.5, 2.0});

    const NodeId p = tape.leaf(Tensor({2}, {0.25, 4.0}));
    const auto& lg = tape.value(tape.log(p));
    CHECK(lg.data[0] == doctest::Approx(std::log(0.25)));
    const auto& sum = tape.value(tape.reduce_sum(p));
    CHECK(sum.item() == doctest::Approx(4.25));
}

TEST_CASE("forward: log_sigmoid is stable far into the tails") {
    Tape tape;
    const NodeId x = tape.leaf(Tensor({3}, {-800.0, 0.0, 800.0}));
    const auto& v = tape.value(tape.log_sigmoid(x));
    // Naive log(sigmoid(-800)) underflows to -inf; the stable form keeps -800.
    CHECK(v.data[0] == doctest::Approx(-800.0));
    CHECK(v.data[1] == doctest::Approx(std::log(0.5)));
    CHECK(v.data[2] == doctest::Approx(0.0).scale(1.0));
    CHECK(std::isfinite(v.data[0]));
}

TEST_CASE("forward: matmul and add broadcast") {
    Tape tape;
    const NodeId a = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    const NodeId b = tape.leaf(Tensor({3, 2}, {7, 8, 9, 10, 11, 12}));
    const auto& c = tape.value(tape.matmul(a, b));
    CHECK(c.shape == std::vector<int>{2, 2});
    CHECK(c.data == std::vector<double>{58, 64, 139, 154});

    const NodeId bias = tape.leaf(Tensor({3}, {10, 20, 30}));
    const auto& s = tape.value(tape.add(a, bias));
    CHECK(s.shape == std::vector<int>{2, 3});
    CHECK(s.data == std::vector<double>{11, 22, 33, 14, 25, 36});
}

TEST_CASE("forward: log_sum_exp axes and stability") {
    Tape tape;
    const NodeId v = tape.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
    const auto& l1 = tape.value(tape.log_sum_exp(v, 0));
    CHECK(l1.shape == std::vector<int>{1});
    CHECK(l1.item() ==
          doctest::Approx(std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0))));

    const NodeId m = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    const auto& rows = tape.value(tape.log_sum_exp(m, 1));  // per row -> [2]
    CHECK(rows.shape == std::vector<int>{2});
    CHECK(rows.data[0] ==
          doctest::Approx(std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0))));
    const auto& cols = tape.value(tape.log_sum_exp(m, 0));  // per column -> [3]
    CHECK(cols.shape == std::vector<int>{3});
    CHECK(cols.data[2] == doctest::Approx(std::log(std::exp(3.0) + std::exp(6.0))));

    // Max-shifting keeps huge magnitudes finite.
    const NodeId big = tape.leaf(Tensor({2}, {1000.0, 1000.0}));
    CHECK(tape.value(tape.log_sum_exp(big, 0)).item() ==
          doctest::Approx(1000.0 + std::log(2.0)));
}

TEST_CASE("forward: reshape reinterprets without copying semantics") {
    Tape tape;
    const NodeId a = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    const NodeId r = tape.reshape(a, {3, 2});
    CHECK(tape.value(r).shape == std::vector<int>{3, 2});
    CHECK(tape.value(r).data == tape.value(a).data);
}

TEST_CASE("shape validation rejects incompatible operands") {
    Tape tape;
    const NodeId a23 = tape.leaf(Tensor({2, 3}, std::vector<double>(6, 1.0)));
    const NodeId a22 = tape.leaf(Tensor({2, 2}, std::vector<double>(4, 1.0)));
    const NodeId v2 = tape.leaf(Tensor({2}, {1, 1}));
    CHECK_THROWS_AS(tape.matmul(a23, a23), std::invalid_argument);
    CHECK_THROWS_AS(tape.add(a23, a22), std::invalid_argument);
    CHECK_THROWS_AS(tape.add(a23, v2), std::invalid_argument);  // bias must be [3]
    CHECK_THROWS_AS(tape.mul(a23, a22), std::invalid_argument);
    CHECK_THROWS_AS(tape.reshape(a23, {4, 2}), std::invalid_argument);
    CHECK_THROWS_AS(tape.log_sum_exp(v2, 1), std::invalid_argument);
    CHECK_THROWS_AS(tape.log_sum_exp(a23, 2), std::invalid_argument);
}

TEST_CASE("backward: root must be scalar and ids must exist") {
    Tape tape;
    const NodeId v = tape.leaf(Tensor({2}, {1, 2}));
    CHECK_THROWS_AS(tape.backward(v), std::invalid_argument);
    CHECK_THROWS_AS(tape.backward(999), std::invalid_argument);
}

TEST_CASE("backward: gradients match finite differences per op") {
    const std::vector<double> x4 = {-1.2, -0.4, 0.3, 1.7};
    gradcheck({4}, x4, [](Tape& t, NodeId l) { return t.neg(l); });
    gradcheck({4}, x4, [](Tape& t, NodeId l) { return t.scale(l, -2.5); });
    gradcheck({4}, x4, [](Tape& t, NodeId l) { return t.add_const(l, 3.0); });
    gradcheck({4}, x4, [](Tape& t, NodeId l) { return t.exp(l); });
    gradcheck({4}, x4, [](Tape& t, NodeId l) { return t.sigmoid(l); });
    gradcheck({4}, x4, [](Tape& t, NodeId l) { return t.log_sigmoid(l); });
    gradcheck({4}, x4, [](Tape& t, NodeId l) { return t.relu(l); });  // all |x|>0.1
    gradcheck({4}, {0.2, 0.9, 1.4, 3.0}, [](Tape& t, NodeId l) { return t.log(l); });
    gradcheck({4}, x4, [](Tape& t, NodeId l) { return t.mul(l, l); });
    gradcheck({4}, x4, [](Tape& t, NodeId l) { return t.add(l, l); });
    gradcheck({4}, x4, [](Tape& t, NodeId l) { return t.log_sum_exp(l, 0); });
    gradcheck({2, 2}, x4, [](Tape& t, NodeId l) { return t.log_sum_exp(l, 0); });
    gradcheck({2, 2}, x4, [](Tape& t, NodeId l) { return t.log_sum_exp(l, 1); });
    gradcheck({2, 2}, x4, [](Tape& t, NodeId l) { return t.reshape(l, {4}); });
}

TEST_CASE("backward: matmul grads for both operands") {
    const std::vector<double> a0 = {0.5, -1.0, 2.0, 1.5, 0.25, -0.75};
    gradcheck({2, 3}, a0, [](Tape& t, NodeId l) {
        const NodeId b = t.constant(Tensor({3, 2}, {1, -2, 0.5, 3, -1, 0.25}));
        return t.matmul(l, b);
    });
    gradcheck({3, 2}, a0, [](Tape& t, NodeId l) {
        const NodeId a = t.constant(Tensor({2, 3}, {1, -2, 0.5, 3, -1, 0.25}));
        return t.matmul(a, l);
    });
}

TEST_CASE("backward: broadcast-add bias gradient sums over rows") {
    // d/d(bias) sum(A + bias) should be the row count in every slot.
    Tape tape;
    const NodeId a = tape.constant(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
    const NodeId bias = tape.leaf(Tensor({2}, {0.0, 0.0}));
    tape.backward(tape.reduce_sum(tape.add(a, bias)));
    CHECK(tape.grad(bias).data == std::vector<double>{3.0, 3.0});

    gradcheck({2}, {0.3, -0.6}, [](Tape& t, NodeId l) {
        const NodeId m = t.constant(Tensor({3, 2}, {1, -2, 0.5, 3, -1, 0.25}));
        return t.exp(t.scale(t.add(m, l), 0.5));
    });
}

TEST_CASE("backward: composite expression against finite differences") {
    // sigmoid -> matmul -> lse chain, the same flavor the density model uses.
    const std::vector<double> w0 = {0.4, -0.7, 1.1, 0.2, -0.3, 0.9};
    gradcheck({2, 3}, w0, [](Tape& t, NodeId l) {
        const NodeId x = t.constant(Tensor({3, 3}, {1, 0, -1, 0.5, 2, 1, -2, 0.25, 0}));
        const NodeId h = t.sigmoid(t.matmul(l, x));       // [2,3]
        return t.log_sum_exp(t.mul(h, h), 1);             // [2]
    }, 1e-5);
}

TEST_CASE("backward: accumulation, constants, and untouched leaves") {
    Tape tape;
    const NodeId used = tape.leaf(Tensor({2}, {1.0, 2.0}));
    const NodeId unused = tape.leaf(Tensor({3}, {5.0, 6.0, 7.0}));
    const NodeId c = tape.constant(Tensor({2}, {3.0, 4.0}));
    const NodeId y = tape.reduce_sum(tape.mul(used, c));
    tape.backward(y);
    CHECK(tape.grad(used).data == std::vector<double>{3.0, 4.0});
    // Constants and untouched leaves both report the shared scalar zero.
    CHECK(tape.grad(c).size() == 1);
    CHECK(tape.grad(c).data[0] == 0.0);
    CHECK(tape.grad(unused).size() == 1);
    CHECK(tape.grad(unused).data[0] == 0.0);
}

TEST_CASE("tape: clear resets ids and storage") {
    Tape tape;
    (void)tape.leaf(Tensor::scalar(1.0));
    (void)tape.leaf(Tensor::scalar(2.0));
    CHECK(tape.size() == 2);
    tape.clear();
    CHECK(tape.size() == 0);
    const NodeId first = tape.leaf(Tensor::scalar(4.0));
    CHECK(first == 0);
    CHECK(tape.value(first).item() == 4.0);
}

TEST_CASE("matmul kernels agree with naive loops") {
    const int m = 3, k = 4, n = 2;
    std::vector<double> a(m * k), b(k * n), bt(n * k), at(m * k);
    for (int i = 0; i < m * k; ++i) a[i] = 0.37 * i - 1.1;
    for (int i = 0; i < k * n; ++i) b[i] = -0.21 * i + 0.4;
    std::vector<double> want(m * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p) want[i * n + j] += a[i * k + p] * b[p * n + j];

    std::vector<double> got(m * n, 0.0);
    mm_nn(a.data(), b.data(), got.data(), m, k, n);
    for (int i = 0; i < m * n; ++i) CHECK(got[i] == doctest::Approx(want[i]));

    // A^T stored as A: mm_tn computes (A^T)B from A stored [M,K] as ([M,K],[M,N])->[K,N].
    // Feed it A laid out [K,M] transposed into 'at' so the product equals want.
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];  // at is [K,M] = A^T
    std::vector<double> got_tn(m * n, 0.0);
    mm_tn(at.data(), b.data(), got_tn.data(), k, m, n);  // (A^T)^T B = A B, result [M,N]
    for (int i = 0; i < m * n; ++i) CHECK(got_tn[i] == doctest::Approx(want[i]));

    for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];  // bt is [N,K] = B^T
    std::vector<double> got_nt(m * n, 0.0);
    // mm_nt contracts over its last argument: a [3,4] x bt [2,4]^T -> [3,2].
    mm_nt(a.data(), bt.data(), got_nt.data(), m, n, k);
    for (int i = 0; i < m * n; ++i) CHECK(got_nt[i] == doctest::Approx(want[i]));
}
