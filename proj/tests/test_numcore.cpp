#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "rsrl/gradcheck.hpp"
#include "rsrl/optim.hpp"
#include "rsrl/rng.hpp"
#include "rsrl/tape.hpp"
#include "rsrl/tensor.hpp"

using namespace rsrl;
using namespace rsrl::num;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Uniform magnitude in [margin, margin+1), random sign. Keeps kinky ops
// (relu, clamp, minimum) away from their nondifferentiable points under
// finite-difference perturbation.
Tensor random_tensor_margin(std::vector<int> shape, Rng& rng, double margin) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        double mag = margin + rng.uniform();
        t[i] = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

}  // namespace

TEST_CASE("dense forward matches hand matrix multiply") {
    Tape tape;
    Var x = tape.leaf(Tensor({1, 2}, {1.0, 1.0}));
    Var w = tape.leaf(Tensor({2, 2}, {2.0, 3.0, 4.0, 5.0}));
    Var b = tape.leaf(Tensor({2}, {1.0, 1.0}));
    Var y = tape.dense(x, w, b);
    CHECK(tape.value(y)[0] == doctest::Approx(7.0));
    CHECK(tape.value(y)[1] == doctest::Approx(9.0));
}

TEST_CASE("dense with identity weights is identity") {
    Tape tape;
    Var x = tape.leaf(Tensor({1, 2}, {1.0, 2.0}));
    Var w = tape.leaf(Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}));
    Var b = tape.leaf(Tensor({2}, {0.0, 0.0}));
    Var y = tape.dense(x, w, b);
    CHECK(tape.value(y)[0] == 1.0);
    CHECK(tape.value(y)[1] == 2.0);
}

TEST_CASE("gradient of sum(dense) w.r.t. bias is all ones") {
    Tape tape;
    Rng rng(7);
    Var x = tape.leaf(random_tensor({3, 4}, rng));
    Var w = tape.leaf(random_tensor({4, 5}, rng));
    Var b = tape.leaf(random_tensor({5}, rng));
    Var loss = tape.sum(tape.dense(x, w, b));
    tape.backward(loss);
    for (std::size_t i = 0; i < 5; ++i) CHECK(tape.grad(b)[i] == doctest::Approx(3.0));  // B rows
}

TEST_CASE("dense rejects mismatched shapes naming both") {
    Tape tape;
    Var x = tape.leaf(Tensor({1, 3}));
    Var w = tape.leaf(Tensor({2, 2}));
    Var b = tape.leaf(Tensor({2}));
    CHECK_THROWS_WITH_AS(tape.dense(x, w, b),
                         doctest::Contains("[1,3]"), std::invalid_argument);
    Tape tape2;
    Var x2 = tape2.leaf(Tensor({1, 3}));
    Var w2 = tape2.leaf(Tensor({2, 2}));
    Var b2 = tape2.leaf(Tensor({2}));
    CHECK_THROWS_WITH_AS(tape2.dense(x2, w2, b2),
                         doctest::Contains("[2,2]"), std::invalid_argument);
}

TEST_CASE("conv1d sliding sums by hand") {
    // x=[1,2,3,4], kernel=[1,1], stride 1 -> [3,5,7]
    {
        Tape tape;
        Var x = tape.leaf(Tensor({1, 1, 4}, {1, 2, 3, 4}));
        Var k = tape.leaf(Tensor({1, 1, 2}, {1, 1}));
        Var b = tape.leaf(Tensor({1}, {0.0}));
        Var y = tape.conv1d(x, k, b, 1);
        REQUIRE(tape.value(y).shape() == std::vector<int>{1, 1, 3});
        CHECK(tape.value(y)[0] == 3.0);
        CHECK(tape.value(y)[1] == 5.0);
        CHECK(tape.value(y)[2] == 7.0);
    }
    // stride 2 -> [3,7]
    {
        Tape tape;
        Var x = tape.leaf(Tensor({1, 1, 4}, {1, 2, 3, 4}));
        Var k = tape.leaf(Tensor({1, 1, 2}, {1, 1}));
        Var b = tape.leaf(Tensor({1}, {0.0}));
        Var y = tape.conv1d(x, k, b, 2);
        REQUIRE(tape.value(y).shape() == std::vector<int>{1, 1, 2});
        CHECK(tape.value(y)[0] == 3.0);
        CHECK(tape.value(y)[1] == 7.0);
    }
}

TEST_CASE("conv1d identity kernel is identity for any input") {
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        int L = 1 + rng.uniform_int(12);
        Tape tape;
        Tensor xin = random_tensor({1, 1, L}, rng, -3.0, 3.0);
        Var x = tape.leaf(xin);
        Var k = tape.leaf(Tensor({1, 1, 1}, {1.0}));
        Var b = tape.leaf(Tensor({1}, {0.0}));
        Var y = tape.conv1d(x, k, b, 1);
        REQUIRE(tape.value(y).size() == xin.size());
        for (std::size_t i = 0; i < xin.size(); ++i) CHECK(tape.value(y)[i] == xin[i]);
    }
}

TEST_CASE("conv1d rejects kernel larger than input and bad stride") {
    Tape tape;
    Var x = tape.leaf(Tensor({1, 1, 2}));
    Var k = tape.leaf(Tensor({1, 1, 3}));
    Var b = tape.leaf(Tensor({1}));
    CHECK_THROWS_AS(tape.conv1d(x, k, b, 1), std::invalid_argument);
    Tape tape2;
    Var x2 = tape2.leaf(Tensor({1, 1, 4}));
    Var k2 = tape2.leaf(Tensor({1, 1, 2}));
    Var b2 = tape2.leaf(Tensor({1}));
    CHECK_THROWS_AS(tape2.conv1d(x2, k2, b2, 0), std::invalid_argument);
}

TEST_CASE("elementwise activations") {
    Tape tape;
    Var x = tape.leaf(Tensor({3}, {-1.0, 0.0, 2.0}));
    Var y = tape.relu(x);
    CHECK(tape.value(y)[0] == 0.0);
    CHECK(tape.value(y)[1] == 0.0);
    CHECK(tape.value(y)[2] == 2.0);

    Tape tape2;
    Var z = tape2.leaf(Tensor::scalar(0.0));
    Var s = tape2.sigmoid(z);
    CHECK(tape2.value(s)[0] == doctest::Approx(0.5));
    tape2.backward(s);
    CHECK(tape2.grad(z)[0] == doctest::Approx(0.25));
}

TEST_CASE("adam: zero gradient is a fixed point, step increments") {
    ParamStore ps;
    Rng rng(3);
    ps.add("w", random_tensor({4, 3}, rng));
    ps.add("b", random_tensor({3}, rng));
    ParamStore before = ps;
    AdamState st = AdamState::init(ps);
    std::vector<Tensor> grads{Tensor({4, 3}), Tensor({3})};
    adam_step(ps, grads, st);
    CHECK(st.step == 1);
    for (int pi = 0; pi < ps.size(); ++pi)
        for (std::size_t i = 0; i < ps.value(pi).size(); ++i)
            CHECK(ps.value(pi)[i] == before.value(pi)[i]);
}

TEST_CASE("adam: one hand-computed step with bias correction") {
    ParamStore ps;
    ps.add("p", Tensor::scalar(0.7));
    AdamState st = AdamState::init(ps);  // lr 1e-3, betas (0.9, 0.999), eps 1e-8
    std::vector<Tensor> grads{Tensor::scalar(1.0)};
    adam_step(ps, grads, st);
    // m=0.1, v=0.001, mhat=1, vhat=1 -> delta = lr/(1+eps)
    const double expected = 0.7 - 1e-3 / (1.0 + 1e-8);
    CHECK(ps.value(0)[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(0.7 - ps.value(0)[0] == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("adam: constant positive gradient decreases param monotonically") {
    ParamStore ps;
    ps.add("p", Tensor::scalar(1.0));
    AdamState st = AdamState::init(ps);
    double prev = 1.0;
    for (int i = 0; i < 5; ++i) {
        std::vector<Tensor> grads{Tensor::scalar(1.0)};
        adam_step(ps, grads, st);
        CHECK(ps.value(0)[0] < prev);
        prev = ps.value(0)[0];
    }
}

TEST_CASE("adam: non-finite gradient errors with parameter name") {
    ParamStore ps;
    ps.add("weights.encoder", Tensor::scalar(1.0));
    AdamState st = AdamState::init(ps);
    std::vector<Tensor> grads{Tensor::scalar(std::nan(""))};
    CHECK_THROWS_WITH_AS(adam_step(ps, grads, st), doctest::Contains("weights.encoder"),
                         std::runtime_error);
}

TEST_CASE("grad_check: sum of squares is quadratically exact") {
    Rng rng(5);
    auto fn = [](Tape& t, const std::vector<Var>& vars) { return t.sum(t.square(vars[0])); };
    double err = grad_check(fn, {random_tensor({3, 4}, rng, -2.0, 2.0)}, 1e-5);
    CHECK(err <= 1e-6);
}

TEST_CASE("grad_check: constant function has exactly zero gradient") {
    auto fn = [](Tape& t, const std::vector<Var>& vars) {
        (void)vars;
        return t.leaf(Tensor::scalar(3.5));
    };
    Tensor x = Tensor({4}, {1.0, -2.0, 0.5, 3.0});
    double err = grad_check(fn, {x}, 1e-5);
    CHECK(err == 0.0);

    Tape tape;
    Var v = tape.leaf(x);
    Var c = tape.leaf(Tensor::scalar(3.5));
    tape.backward(c);
    for (std::size_t i = 0; i < 4; ++i) CHECK(tape.grad(v)[i] == 0.0);
}

TEST_CASE("grad_check: random two-layer net") {
    Rng rng(17);
    for (int rep = 0; rep < 5; ++rep) {
        Tensor x = random_tensor({4, 3}, rng);
        Tensor w1 = random_tensor({3, 8}, rng);
        Tensor b1 = random_tensor({8}, rng);
        Tensor w2 = random_tensor({8, 2}, rng);
        Tensor b2 = random_tensor({2}, rng);
        auto fn = [](Tape& t, const std::vector<Var>& v) {
            Var h = t.sigmoid(t.dense(v[0], v[1], v[2]));
            Var y = t.dense(h, v[3], v[4]);
            return t.mean(t.square(y));
        };
        double err = grad_check(fn, {x, w1, b1, w2, b2}, 1e-5);
        CHECK(err <= 1e-4);
    }
}

TEST_CASE("property: every primitive op matches finite differences (100+ random cases)") {
    Rng rng(20260809);
    int cases = 0;
    auto check_case = [&](const ScalarFn& fn, std::vector<Tensor> inputs) {
        double err = grad_check(fn, std::move(inputs), 1e-5);
        CHECK(err <= 1e-4);
        ++cases;
    };

    for (int rep = 0; rep < 8; ++rep) {
        const int B = 1 + rng.uniform_int(3);
        const int I = 1 + rng.uniform_int(5);
        const int O = 1 + rng.uniform_int(5);
        check_case([](Tape& t, const std::vector<Var>& v) {
            return t.mean(t.square(t.dense(v[0], v[1], v[2])));
        }, {random_tensor({B, I}, rng), random_tensor({I, O}, rng), random_tensor({O}, rng)});

        const int Ci = 1 + rng.uniform_int(3), Co = 1 + rng.uniform_int(3);
        const int K = 1 + rng.uniform_int(3), stride = 1 + rng.uniform_int(2);
        const int L = K + rng.uniform_int(6);
        check_case([stride](Tape& t, const std::vector<Var>& v) {
            return t.mean(t.square(t.conv1d(v[0], v[1], v[2], stride)));
        }, {random_tensor({B, Ci, L}, rng), random_tensor({Co, Ci, K}, rng), random_tensor({Co}, rng)});

        const int opad = rng.uniform_int(stride);
        check_case([stride, opad](Tape& t, const std::vector<Var>& v) {
            return t.mean(t.square(t.conv1d_transpose(v[0], v[1], v[2], stride, opad)));
        }, {random_tensor({B, Ci, L}, rng), random_tensor({Ci, Co, K}, rng), random_tensor({Co}, rng)});

        const int N = 2 + rng.uniform_int(6);
        check_case([](Tape& t, const std::vector<Var>& v) { return t.sum(t.relu(v[0])); },
                   {random_tensor_margin({N}, rng, 0.05)});
        check_case([](Tape& t, const std::vector<Var>& v) { return t.mean(t.sigmoid(v[0])); },
                   {random_tensor({N, 2}, rng)});
        check_case([](Tape& t, const std::vector<Var>& v) { return t.mean(t.exp(v[0])); },
                   {random_tensor({N}, rng)});
        check_case([](Tape& t, const std::vector<Var>& v) { return t.sum(t.square(v[0])); },
                   {random_tensor({N}, rng)});
        check_case([](Tape& t, const std::vector<Var>& v) {
            return t.sum(t.mul(t.add(v[0], v[1]), t.sub(v[0], v[1])));
        }, {random_tensor({N}, rng), random_tensor({N}, rng)});
        check_case([](Tape& t, const std::vector<Var>& v) {
            return t.mean(t.add_scalar(t.scale(v[0], 2.5), -0.75));
        }, {random_tensor({N, 3}, rng)});

        // clamp: keep samples away from the clamp edges
        check_case([](Tape& t, const std::vector<Var>& v) {
            return t.sum(t.square(t.clamp(v[0], -0.8, 0.8)));
        }, {random_tensor_margin({N}, rng, 0.05)});

        // minimum: force a gap between the two operands
        {
            Tensor a = random_tensor({N}, rng);
            Tensor b = a;
            for (std::size_t i = 0; i < b.size(); ++i)
                b[i] += (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.1 + rng.uniform());
            check_case([](Tape& t, const std::vector<Var>& v) {
                return t.sum(t.minimum(v[0], v[1]));
            }, {a, b});
        }

        const int C = 2 + rng.uniform_int(4);
        check_case([](Tape& t, const std::vector<Var>& v) {
            return t.mean(t.square(t.log_softmax_rows(v[0])));
        }, {random_tensor({B, C}, rng, -2.0, 2.0)});

        {
            std::vector<int> idx(static_cast<std::size_t>(B));
            for (auto& ix : idx) ix = rng.uniform_int(C);
            check_case([idx](Tape& t, const std::vector<Var>& v) {
                return t.mean(t.square(t.gather_rows(v[0], idx)));
            }, {random_tensor({B, C}, rng)});
        }

        check_case([I](Tape& t, const std::vector<Var>& v) {
            return t.mean(t.square(t.reshape(v[0], {I * 2})));
        }, {random_tensor({2, I}, rng)});
        check_case([](Tape& t, const std::vector<Var>& v) { return t.mean(v[0]); },
                   {random_tensor({B, I}, rng)});
    }
    CHECK(cases >= 100);
}

TEST_CASE("forward pass is deterministic bit-for-bit") {
    Rng rng(99);
    Tensor x = random_tensor({2, 3, 9}, rng);
    Tensor k = random_tensor({4, 3, 3}, rng);
    Tensor b = random_tensor({4}, rng);
    auto run = [&]() {
        Tape tape;
        Var y = tape.sigmoid(tape.conv1d(tape.leaf(x), tape.leaf(k), tape.leaf(b), 2));
        return tape.value(y);
    };
    Tensor a = run(), c = run();
    REQUIRE(a.size() == c.size());
    CHECK(std::memcmp(a.data(), c.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("conv1d_transpose inverts conv1d geometry including output padding") {
    // 14 -(K4,s2)-> 6 -(tconv K4,s2,opad 0)-> 14 ; 31 needs opad 1 from 14
    Tape tape;
    Var x = tape.leaf(Tensor({1, 1, 6}));
    Var k = tape.leaf(Tensor({1, 1, 4}));
    Var b = tape.leaf(Tensor({1}));
    CHECK(tape.value(tape.conv1d_transpose(x, k, b, 2, 0)).dim(2) == 14);
    Var x2 = tape.leaf(Tensor({1, 1, 14}));
    CHECK(tape.value(tape.conv1d_transpose(x2, k, b, 2, 1)).dim(2) == 31);
}

TEST_CASE("tensor serialization round-trips bit-exactly") {
    Rng rng(42);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<int> shape;
        int r = rng.uniform_int(4);  // ranks 0..3
        for (int i = 0; i < r; ++i) shape.push_back(1 + rng.uniform_int(5));
        Tensor t = random_tensor(shape, rng, -100.0, 100.0);
        std::stringstream ss;
        write_tensor(ss, t);
        Tensor u = read_tensor(ss);
        REQUIRE(u.shape() == t.shape());
        CHECK(std::memcmp(u.data(), t.data(), t.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("param store round-trips with names and order") {
    Rng rng(43);
    ParamStore ps;
    ps.add("enc.w", random_tensor({3, 4}, rng));
    ps.add("enc.b", random_tensor({4}, rng));
    ps.add("dec.w", random_tensor({4, 3}, rng));
    std::stringstream ss;
    ps.save(ss);
    ParamStore qs = ParamStore::load(ss);
    REQUIRE(qs.size() == 3);
    CHECK(qs.name(0) == "enc.w");
    CHECK(qs.name(2) == "dec.w");
    CHECK(qs.parameter_count() == ps.parameter_count());
    for (int i = 0; i < 3; ++i)
        CHECK(std::memcmp(qs.value(i).data(), ps.value(i).data(),
                          ps.value(i).size() * sizeof(double)) == 0);
}

TEST_CASE("seed derivation: distinct tags and counters give distinct streams") {
    auto a = derive_seed(123, "collect", 0);
    auto b = derive_seed(123, "collect", 1);
    auto c = derive_seed(123, "train", 0);
    auto d = derive_seed(124, "collect", 0);
    CHECK(a != b);
    CHECK(a != c);
    CHECK(a != d);
    CHECK(derive_seed(123, "collect", 0) == a);
}
