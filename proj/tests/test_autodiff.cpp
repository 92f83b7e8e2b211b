#include <gtest/gtest.h>

#include "nlt/tape.hpp"
#include "nlt/tensor.hpp"
#include "testutil.hpp"

using nlt::Tape;
using nlt::Tensor;

TEST(Backward, LinearScale) {
    Tape tape;
    auto x = tape.input(Tensor::scalar(5.0f), true);
    auto loss = tape.scale(x, 3.0f);
    tape.backward(loss);
    EXPECT_FLOAT_EQ(tape.grad(x)[0], 3.0f);
}

TEST(Backward, UnusedParameterGetsExactZero) {
    Tape tape;
    auto x = tape.input(Tensor::scalar(5.0f), true);
    auto unused = tape.input(Tensor({3}, {1.0f, 2.0f, 3.0f}), true);
    auto loss = tape.scale(x, 2.0f);
    tape.backward(loss);
    for (float g : tape.grad(unused)) EXPECT_EQ(g, 0.0f);
}

TEST(Backward, NonScalarLossRejected) {
    Tape tape;
    auto x = tape.input(Tensor({2}, {1.0f, 2.0f}), true);
    auto y = tape.scale(x, 2.0f);
    EXPECT_THROW(tape.backward(y), std::invalid_argument);
}

TEST(Backward, ReluMask) {
    Tape tape;
    auto x = tape.input(Tensor({2}, {-1.0f, 2.0f}), true);
    auto loss = tape.sum(tape.relu(x));
    tape.backward(loss);
    EXPECT_FLOAT_EQ(tape.grad(x)[0], 0.0f);
    EXPECT_FLOAT_EQ(tape.grad(x)[1], 1.0f);
}

TEST(Backward, UpsampleBlockSum) {
    Tape tape;
    auto x = tape.input(Tensor({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}), true);
    auto loss = tape.sum(tape.upsample_nearest(x, 2));
    tape.backward(loss);
    for (float g : tape.grad(x)) EXPECT_FLOAT_EQ(g, 4.0f);
}

TEST(Backward, MaxpoolRoutesToArgmax) {
    Tape tape;
    auto x = tape.input(Tensor({1, 1, 2, 2}, {1.0f, 4.0f, 2.0f, 3.0f}), true);
    auto loss = tape.sum(tape.maxpool2(x));
    tape.backward(loss);
    EXPECT_EQ(tape.grad(x)[0], 0.0f);
    EXPECT_EQ(tape.grad(x)[1], 1.0f);
    EXPECT_EQ(tape.grad(x)[2], 0.0f);
    EXPECT_EQ(tape.grad(x)[3], 0.0f);
}

TEST(Backward, FanOutAccumulates) {
    Tape tape;
    auto x = tape.input(Tensor({2}, {1.0f, -2.0f}), true);
    auto branch_a = tape.relu(x);
    auto branch_b = tape.scale(x, 2.0f);
    auto loss = tape.sum(tape.add(branch_a, branch_b));
    tape.backward(loss);
    EXPECT_FLOAT_EQ(tape.grad(x)[0], 3.0f);  // relu mask 1 + scale 2
    EXPECT_FLOAT_EQ(tape.grad(x)[1], 2.0f);  // relu mask 0 + scale 2
}

TEST(Backward, MseGradientMatchesFormulaAndFiniteDifferences) {
    nlt::Rng rng(7);
    Tensor pred = testutil::random_tensor({2, 3}, rng);
    Tensor target = testutil::random_tensor({2, 3}, rng);
    const int n = 2;

    Tape tape;
    auto p = tape.input(pred, true);
    auto t = tape.input(target, false);
    auto loss = tape.mse_loss(p, t, n);
    tape.backward(loss);

    testutil::GradCheck check;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double formula = (static_cast<double>(pred.data[i]) - target.data[i]) / n;
        EXPECT_NEAR(tape.grad(p)[i], formula, 1e-6);
        const double fd = testutil::central_difference(pred.data, i, [&] {
            Tape fresh;
            return fresh.scalar_value(fresh.mse_loss(fresh.input(pred), fresh.input(target), n));
        });
        check.compare(tape.grad(p)[i], fd);
    }
    EXPECT_LE(check.max_rel_err, 1e-3);
}

// Every analytic gradient of a two-conv-layer graph against central
// differences, h = 1e-3.
TEST(Backward, TwoLayerConvGradcheck) {
    nlt::Rng rng(31);
    Tensor x = testutil::random_tensor({1, 2, 6, 6}, rng, 0.0f, 1.0f);
    Tensor w1 = testutil::random_tensor({3, 2, 3, 3}, rng, -0.5f, 0.5f);
    Tensor b1 = testutil::random_tensor({3}, rng, -0.2f, 0.2f);
    Tensor w2 = testutil::random_tensor({1, 3, 3, 3}, rng, -0.5f, 0.5f);
    Tensor b2 = testutil::random_tensor({1}, rng, -0.2f, 0.2f);
    Tensor target = testutil::random_tensor({1, 1, 6, 6}, rng, 0.0f, 1.0f);

    auto loss_fn = [&] {
        Tape tape(false);
        auto h1 = tape.relu(tape.conv2d(tape.input(x), tape.input(w1), tape.input(b1), 1, 1));
        auto pred = tape.conv2d(h1, tape.input(w2), tape.input(b2), 1, 1);
        return tape.scalar_value(tape.mse_loss(pred, tape.input(target), 1));
    };

    Tape tape;
    auto xv = tape.input(x, true);
    auto w1v = tape.input(w1, true);
    auto b1v = tape.input(b1, true);
    auto w2v = tape.input(w2, true);
    auto b2v = tape.input(b2, true);
    auto h1 = tape.relu(tape.conv2d(xv, w1v, b1v, 1, 1));
    auto pred = tape.conv2d(h1, w2v, b2v, 1, 1);
    tape.backward(tape.mse_loss(pred, tape.input(target), 1));

    testutil::GradCheck check;
    auto check_buffer = [&](Tensor& buf, Tape::Var var) {
        for (std::size_t i = 0; i < buf.numel(); ++i) {
            const double fd = testutil::central_difference(buf.data, i, loss_fn);
            check.compare(tape.grad(var)[i], fd);
        }
    };
    check_buffer(w1, w1v);
    check_buffer(b1, b1v);
    check_buffer(w2, w2v);
    check_buffer(b2, b2v);
    check_buffer(x, xv);
    EXPECT_LE(check.max_rel_err, 1e-3) << "checked " << check.checked << " gradients";
}

// Per-op gradcheck on random small tensors.
TEST(Backward, PerOpGradcheck) {
    nlt::Rng rng(77);
    testutil::GradCheck check;

    // conv2d, stride 2 and padding 2 included
    for (int trial = 0; trial < 3; ++trial) {
        Tensor x = testutil::random_tensor({1, 2, 5, 5}, rng);
        Tensor w = testutil::random_tensor({2, 2, 3, 3}, rng);
        Tensor b = testutil::random_tensor({2}, rng);
        const int stride = 1 + trial % 2;
        const int pad = trial;
        auto loss_fn = [&] {
            Tape t(false);
            return t.scalar_value(t.sum(t.conv2d(t.input(x), t.input(w), t.input(b), stride, pad)));
        };
        Tape tape;
        auto xv = tape.input(x, true);
        auto wv = tape.input(w, true);
        auto bv = tape.input(b, true);
        tape.backward(tape.sum(tape.conv2d(xv, wv, bv, stride, pad)));
        for (std::size_t i = 0; i < x.numel(); ++i)
            check.compare(tape.grad(xv)[i], testutil::central_difference(x.data, i, loss_fn));
        for (std::size_t i = 0; i < w.numel(); ++i)
            check.compare(tape.grad(wv)[i], testutil::central_difference(w.data, i, loss_fn));
        for (std::size_t i = 0; i < b.numel(); ++i)
            check.compare(tape.grad(bv)[i], testutil::central_difference(b.data, i, loss_fn));
    }

    // upsample
    {
        Tensor x = testutil::random_tensor({1, 1, 3, 3}, rng);
        auto loss_fn = [&] {
            Tape t(false);
            return t.scalar_value(t.sum(t.upsample_nearest(t.input(x), 3)));
        };
        Tape tape;
        auto xv = tape.input(x, true);
        tape.backward(tape.sum(tape.upsample_nearest(xv, 3)));
        for (std::size_t i = 0; i < x.numel(); ++i)
            check.compare(tape.grad(xv)[i], testutil::central_difference(x.data, i, loss_fn));
    }

    // maxpool (values spaced so the argmax never flips inside the FD step)
    {
        Tensor x({1, 1, 4, 4});
        for (std::size_t i = 0; i < x.numel(); ++i) x.data[i] = static_cast<float>(i % 7) - (i % 3) * 0.25f;
        auto loss_fn = [&] {
            Tape t(false);
            return t.scalar_value(t.sum(t.maxpool2(t.input(x))));
        };
        Tape tape;
        auto xv = tape.input(x, true);
        tape.backward(tape.sum(tape.maxpool2(xv)));
        for (std::size_t i = 0; i < x.numel(); ++i)
            check.compare(tape.grad(xv)[i], testutil::central_difference(x.data, i, loss_fn));
    }

    EXPECT_LE(check.max_rel_err, 1e-3) << "checked " << check.checked << " gradients";
}

TEST(Backward, NonRecordingTapeRefusesBackward) {
    Tape tape(false);
    auto x = tape.input(Tensor::scalar(1.0f), true);
    auto loss = tape.scale(x, 2.0f);
    EXPECT_THROW(tape.backward(loss), std::logic_error);
}
