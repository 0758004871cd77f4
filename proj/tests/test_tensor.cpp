#include <gtest/gtest.h>

#include <cmath>

#include "bytelm/tensor.hpp"

using namespace bytelm;

namespace {

template <class T>
Tensor<T> randn(Shape shape, uint64_t seed, double spread = 1.0, bool grad = true) {
    std::mt19937_64 rng = make_rng(seed);
    Tensor<T> t = Tensor<T>::zeros(std::move(shape), grad);
    for (auto& v : t.value()) v = static_cast<T>((uniform01(rng) * 2.0 - 1.0) * spread);
    return t;
}

}  // namespace

TEST(Softmax, SymmetricPair) {
    Tensor<float> x = Tensor<float>::from_data({2}, {0.0f, 0.0f});
    Tensor<float> y = softmax<float>(nullptr, x);
    EXPECT_FLOAT_EQ(y.value()[0], 0.5f);
    EXPECT_FLOAT_EQ(y.value()[1], 0.5f);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
    Tensor<double> x = randn<double>({4, 7}, 2, 3.0);
    Tensor<double> y = softmax<double>(nullptr, x);
    for (int r = 0; r < 4; ++r) {
        double sum = 0;
        for (int c = 0; c < 7; ++c) sum += y.value()[r * 7 + c];
        EXPECT_NEAR(sum, 1.0, 1e-6);
    }
    Tensor<double> shifted = Tensor<double>::from_data(x.shape(), x.value());
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 7; ++c) shifted.value()[r * 7 + c] += 123.25;
    Tensor<double> y2 = softmax<double>(nullptr, shifted);
    for (int i = 0; i < 28; ++i) EXPECT_NEAR(y.value()[i], y2.value()[i], 1e-6);
}

TEST(Softmax, NonLastAxis) {
    Tensor<double> x = Tensor<double>::from_data({2, 2}, {0.0, 10.0, 0.0, -10.0});
    Tensor<double> y = softmax<double>(nullptr, x, 0);  // columns
    EXPECT_NEAR(y.value()[0] + y.value()[2], 1.0, 1e-12);
    EXPECT_NEAR(y.value()[1] + y.value()[3], 1.0, 1e-12);
    EXPECT_NEAR(y.value()[0], 0.5, 1e-12);
    EXPECT_GT(y.value()[1], 0.999);
}

TEST(RmsNorm, ConstantVector) {
    const double c = 3.0, eps = 1e-6;
    Tensor<double> x = Tensor<double>::full({4}, c);
    Tensor<double> gain = Tensor<double>::full({4}, 1.0);
    Tensor<double> y = rms_norm<double>(nullptr, x, gain, eps);
    const double expected = c / std::sqrt(c * c + eps);
    for (double v : y.value()) EXPECT_NEAR(v, expected, 1e-12);
    // eps -> 0 limit: entries -> 1
    Tensor<double> y0 = rms_norm<double>(nullptr, x, gain, 0.0);
    for (double v : y0.value()) EXPECT_NEAR(v, 1.0, 1e-12);
    // sign preserved
    Tensor<double> xn = Tensor<double>::full({4}, -c);
    Tensor<double> yn = rms_norm<double>(nullptr, xn, gain, eps);
    for (double v : yn.value()) EXPECT_NEAR(v, -expected, 1e-12);
}

TEST(CrossEntropy, PeakedLogitsDriveLossToZero) {
    Tensor<float> logits = Tensor<float>::zeros({2, 5});
    std::vector<int32_t> labels{3, 1};
    logits.value()[0 * 5 + 3] = 50.0f;
    logits.value()[1 * 5 + 1] = 50.0f;
    Tensor<float> loss = cross_entropy_from_logits<float>(nullptr, logits, labels, -1);
    EXPECT_LT(loss.item(), 1e-6f);
}

TEST(CrossEntropy, Errors) {
    Tensor<float> logits = Tensor<float>::zeros({2, 5});
    std::vector<int32_t> all_ignored{-1, -1};
    EXPECT_THROW(cross_entropy_from_logits<float>(nullptr, logits, all_ignored, -1), DataError);
    std::vector<int32_t> out_of_range{5, 0};
    EXPECT_THROW(cross_entropy_from_logits<float>(nullptr, logits, out_of_range, -1), DataError);
    std::vector<int32_t> wrong_count{0};
    EXPECT_THROW(cross_entropy_from_logits<float>(nullptr, logits, wrong_count, -1), ShapeError);
}

TEST(Backward, SquareAtThree) {
    Tensor<double> x = Tensor<double>::from_data({1}, {3.0}, true);
    Tape<double> tape;
    Tensor<double> y = mul(&tape, x, x);
    tape.backward(y);
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, NonScalarLossRejected) {
    Tensor<double> x = randn<double>({3}, 4);
    Tape<double> tape;
    Tensor<double> y = mul(&tape, x, x);
    EXPECT_THROW(tape.backward(y), ShapeError);
}

TEST(Backward, UnreachableParameterHasZeroGradient) {
    Tensor<double> x = randn<double>({3}, 5);
    Tensor<double> unused = randn<double>({4}, 6);
    unused.grad();  // allocate
    Tape<double> tape;
    Tensor<double> loss = sum_all(&tape, mul(&tape, x, x));
    tape.backward(loss);
    for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

// Analytic gradient of a matmul chain against central differences:
// f = sum(w ⊙ (A·B·C)). Double mode must agree to relative 1e-6.
TEST(Backward, MatmulChainFiniteDifferences64) {
    Tensor<double> a = randn<double>({5, 4}, 7);
    Tensor<double> b = randn<double>({4, 6}, 8);
    Tensor<double> c = randn<double>({6, 3}, 9);
    Tensor<double> w = randn<double>({5, 3}, 10, 1.0, false);
    auto loss_fn = [&](Tape<double>* t) { return sum_all(t, mul(t, matmul(t, matmul(t, a, b), c), w)); };

    Tape<double> tape;
    Tensor<double> loss = loss_fn(&tape);
    tape.backward(loss);
    const std::vector<std::vector<double>> analytic{a.grad(), b.grad(), c.grad()};

    const double h = 1e-6;
    Tensor<double>* tensors[3] = {&a, &b, &c};
    for (int pi = 0; pi < 3; ++pi) {
        for (int64_t i = 0; i < tensors[pi]->numel(); ++i) {
            const double orig = tensors[pi]->value()[i];
            tensors[pi]->value()[i] = orig + h;
            const double fp = loss_fn(nullptr).item();
            tensors[pi]->value()[i] = orig - h;
            const double fm = loss_fn(nullptr).item();
            tensors[pi]->value()[i] = orig;
            const double fd = (fp - fm) / (2 * h);
            const double an = analytic[pi][static_cast<size_t>(i)];
            if (std::abs(an) > 1e-8)
                EXPECT_LT(std::abs(an - fd) / std::abs(an), 1e-6);
            else
                EXPECT_LT(std::abs(an - fd), 1e-7);
        }
    }
}

// Same chain in float through grad_check at the 32-bit tolerances.
TEST(Backward, MatmulChainGradCheck32) {
    Tensor<float> a = randn<float>({5, 4}, 7);
    Tensor<float> b = randn<float>({4, 6}, 8);
    Tensor<float> w = randn<float>({5, 6}, 10, 1.0, false);
    auto loss_fn = [&](Tape<float>* t) { return sum_all(t, mul(t, matmul(t, a, b), w)); };
    auto r = grad_check<float>(loss_fn, {{"a", a}, {"b", b}}, {1e-3, 1e-3});
    EXPECT_TRUE(r.passed) << r.worst_coordinate << " rel=" << r.max_rel_error;
}

TEST(GradCheck, SumOfSoftmaxHasZeroGradient) {
    Tensor<double> x = randn<double>({3, 6}, 11, 2.0);
    Tape<double> tape;
    Tensor<double> loss = sum_all(&tape, softmax(&tape, x, -1));
    tape.backward(loss);
    EXPECT_NEAR(loss.item(), 3.0, 1e-9);  // 3 rows, each summing to 1
    for (double g : x.grad()) EXPECT_LT(std::abs(g), 1e-12);
}

TEST(GradCheck, CrossEntropyRandomLogits) {
    Tensor<float> logits = randn<float>({5, 9}, 12, 2.0);
    std::vector<int32_t> labels{0, 3, -1, 8, 2};
    auto loss_fn = [&](Tape<float>* t) { return cross_entropy_from_logits(t, logits, labels, -1); };
    auto r = grad_check<float>(loss_fn, {{"logits", logits}}, {1e-3, 1e-3});
    EXPECT_TRUE(r.passed) << r.worst_coordinate << " rel=" << r.max_rel_error;
}

// Negative control: a deliberately wrong backward must be detected in both
// precisions.
template <class T>
Tensor<T> broken_square(Tape<T>* tape, const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out.value()[i] = x.value()[i] * x.value()[i];
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record([xc, oc]() mutable {
            for (size_t i = 0; i < oc.grad().size(); ++i)
                xc.grad()[i] += oc.grad()[i] * T(3) * xc.value()[i];  // wrong: should be 2x
        });
    }
    return out;
}

TEST(GradCheck, DetectsBrokenBackward) {
    {
        Tensor<float> x = randn<float>({6}, 13, 0.5);
        for (auto& v : x.value()) v += 1.0f;  // keep entries away from zero
        auto fn = [&](Tape<float>* t) { return sum_all(t, broken_square(t, x)); };
        EXPECT_FALSE(grad_check<float>(fn, {{"x", x}}, {1e-3, 1e-3}).passed);
    }
    {
        Tensor<double> x = randn<double>({6}, 13, 0.5);
        for (auto& v : x.value()) v += 1.0;
        auto fn = [&](Tape<double>* t) { return sum_all(t, broken_square(t, x)); };
        EXPECT_FALSE(grad_check<double>(fn, {{"x", x}}, {1e-6, 1e-4}).passed);
    }
}

// Backward of a sum of losses equals the sum of separate backwards.
TEST(Backward, LinearityOfAccumulation) {
    Tensor<double> x = randn<double>({4, 4}, 14);
    Tensor<double> w1 = randn<double>({4, 4}, 15, 1.0, false);
    Tensor<double> w2 = randn<double>({4, 4}, 16, 1.0, false);

    auto l1 = [&](Tape<double>* t) { return sum_all(t, mul(t, gelu(t, x), w1)); };
    auto l2 = [&](Tape<double>* t) { return sum_all(t, mul(t, matmul(t, x, x), w2)); };

    // combined
    Tape<double> tape;
    Tensor<double> sum_loss = add(&tape, l1(&tape), l2(&tape));
    tape.backward(sum_loss);
    const std::vector<double> combined = x.grad();

    // separate, accumulated
    x.zero_grad();
    Tape<double> ta;
    Tensor<double> la = l1(&ta);
    ta.backward(la);
    Tape<double> tb;
    Tensor<double> lb = l2(&tb);
    tb.backward(lb);
    for (size_t i = 0; i < combined.size(); ++i) EXPECT_NEAR(combined[i], x.grad()[i], 1e-6);
}

TEST(Shapes, MismatchErrorsNameBothShapes) {
    Tensor<float> a = Tensor<float>::zeros({2, 3});
    Tensor<float> b = Tensor<float>::zeros({4, 5});
    try {
        matmul<float>(nullptr, a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2,3]"), std::string::npos);
        EXPECT_NE(msg.find("[4,5]"), std::string::npos);
    }
    EXPECT_THROW(add<float>(nullptr, a, b), ShapeError);
    EXPECT_THROW(mul<float>(nullptr, a, b), ShapeError);
}

TEST(Ops, AddBroadcastFoldsGradient) {
    Tensor<double> a = randn<double>({2, 3, 2}, 17);
    Tensor<double> b = randn<double>({3, 2}, 18);
    Tape<double> tape;
    Tensor<double> out = add(&tape, a, b);
    for (int64_t i = 0; i < a.numel(); ++i)
        EXPECT_DOUBLE_EQ(out.value()[i], a.value()[i] + b.value()[i % 6]);
    Tensor<double> loss = sum_all(&tape, out);
    tape.backward(loss);
    for (double g : b.grad()) EXPECT_DOUBLE_EQ(g, 2.0);  // folded over the leading dim
    for (double g : a.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Ops, EmbedLookupGathersAndScatters) {
    Tensor<double> table = randn<double>({5, 3}, 19);
    std::vector<int32_t> ids{4, 0, 4};
    Tape<double> tape;
    Tensor<double> out = embed_lookup(&tape, table, ids, {3});
    for (int i = 0; i < 3; ++i) EXPECT_EQ(out.value()[0 * 3 + i], table.value()[4 * 3 + i]);
    Tensor<double> loss = sum_all(&tape, out);
    tape.backward(loss);
    for (int i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(table.grad()[4 * 3 + i], 2.0);  // looked up twice
        EXPECT_DOUBLE_EQ(table.grad()[0 * 3 + i], 1.0);
        EXPECT_DOUBLE_EQ(table.grad()[1 * 3 + i], 0.0);
    }
    std::vector<int32_t> bad{5};
    EXPECT_THROW(embed_lookup<double>(nullptr, table, bad, {1}), DataError);
}

TEST(Ops, RelativePositionBucketsMatchConvention) {
    // bidirectional, 32 buckets, max distance 128
    EXPECT_EQ(relative_position_bucket(0, true, 32, 128), 0);
    EXPECT_EQ(relative_position_bucket(1, true, 32, 128), 16 + 1);  // future offsets shift half-range
    EXPECT_EQ(relative_position_bucket(-1, true, 32, 128), 1);
    EXPECT_EQ(relative_position_bucket(-7, true, 32, 128), 7);
    EXPECT_EQ(relative_position_bucket(-8, true, 32, 128), 8);  // log region starts at 8
    EXPECT_EQ(relative_position_bucket(-200, true, 32, 128), 15);  // clamped
    EXPECT_EQ(relative_position_bucket(200, true, 32, 128), 31);
    // causal: future positions collapse to bucket 0
    EXPECT_EQ(relative_position_bucket(3, false, 32, 128), 0);
    EXPECT_EQ(relative_position_bucket(-3, false, 32, 128), 3);
    EXPECT_EQ(relative_position_bucket(-1000, false, 32, 128), 31);
}

TEST(Ops, AttentionMaskBlocksExactly) {
    Tensor<float> scores = Tensor<float>::zeros({1, 1, 3, 3});
    std::vector<uint8_t> key_valid{1, 1, 0};
    Tensor<float> masked = apply_attention_mask<float>(nullptr, scores, key_valid, /*causal=*/true);
    Tensor<float> probs = softmax<float>(nullptr, masked, -1);
    // row 0 attends only to key 0; row 1 to keys 0,1; key 2 is always blocked
    EXPECT_FLOAT_EQ(probs.value()[0], 1.0f);
    EXPECT_FLOAT_EQ(probs.value()[1], 0.0f);
    EXPECT_FLOAT_EQ(probs.value()[3], 0.5f);
    EXPECT_FLOAT_EQ(probs.value()[4], 0.5f);
    EXPECT_FLOAT_EQ(probs.value()[8], 0.0f);
}

TEST(Ops, DropoutScalesAndMasks) {
    Tensor<float> x = Tensor<float>::full({10000}, 1.0f, true);
    std::mt19937_64 rng = make_rng(3);
    Tensor<float> y = dropout<float>(nullptr, x, 0.25, rng);
    size_t kept = 0;
    for (float v : y.value()) {
        EXPECT_TRUE(v == 0.0f || std::abs(v - 4.0f / 3.0f) < 1e-6f);
        if (v != 0.0f) ++kept;
    }
    EXPECT_NEAR(static_cast<double>(kept) / 10000.0, 0.75, 0.02);
    // rate 0 is the identity
    std::mt19937_64 rng2 = make_rng(3);
    Tensor<float> same = dropout<float>(nullptr, x, 0.0, rng2);
    EXPECT_EQ(same.id(), x.id());
}

TEST(Determinism, ForwardBitIdentical) {
    Tensor<float> a = randn<float>({8, 8}, 20);
    Tensor<float> b = randn<float>({8, 8}, 21);
    Tensor<float> c1 = matmul<float>(nullptr, a, b);
    Tensor<float> c2 = matmul<float>(nullptr, a, b);
    EXPECT_EQ(c1.value(), c2.value());
    Tensor<float> s1 = softmax<float>(nullptr, c1, -1);
    Tensor<float> s2 = softmax<float>(nullptr, c2, -1);
    EXPECT_EQ(s1.value(), s2.value());
}
