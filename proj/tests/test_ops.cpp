#include <gtest/gtest.h>

#include <cmath>

#include "oslr/gradcheck.hpp"
#include "oslr/ops.hpp"
#include "test_util.hpp"

using namespace oslr;

namespace {

ConvParams<double> rand_conv(int k, int in_c, int out_c, Pcg32& rng,
                             Padding pad = Padding::same, int stride = 1) {
    ConvParams<double> p;
    p.weights = testutil::random_tensor<double>({k, k, in_c, out_c}, rng, -0.5, 0.5);
    p.bias = testutil::random_tensor<double>({out_c}, rng, -0.2, 0.2);
    p.stride = stride;
    p.padding = pad;
    return p;
}

} // namespace

// ============================================================================
// conv2d
// ============================================================================

TEST(Conv2d, OneByOneIdentity) {
    ConvParams<float> p;
    p.weights = Tensor<float>::from({1, 1, 1, 1}, {1.f});
    p.bias = Tensor<float>::zeros({1});
    Pcg32 rng(1);
    Tensor<float> x = testutil::random_tensor<float>({5, 5, 1}, rng);
    Tensor<float> y = conv2d(x, p);
    ASSERT_EQ(y.shape(), x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) EXPECT_FLOAT_EQ(y.at(i), x.at(i));
}

TEST(Conv2d, AllOnesKernelCountsWindow) {
    // 4x4 ones, 3x3 ones kernel, same padding: corners see 4 cells, edges 6,
    // interior 9.
    ConvParams<float> p;
    p.weights = Tensor<float>::full({3, 3, 1, 1}, 1.f);
    p.bias = Tensor<float>::zeros({1});
    Tensor<float> x = Tensor<float>::full({4, 4, 1}, 1.f);
    Tensor<float> y = conv2d(x, p);
    EXPECT_FLOAT_EQ(y.at(0, 0, 0), 4.f);
    EXPECT_FLOAT_EQ(y.at(0, 3, 0), 4.f);
    EXPECT_FLOAT_EQ(y.at(3, 0, 0), 4.f);
    EXPECT_FLOAT_EQ(y.at(3, 3, 0), 4.f);
    EXPECT_FLOAT_EQ(y.at(0, 1, 0), 6.f);
    EXPECT_FLOAT_EQ(y.at(2, 0, 0), 6.f);
    EXPECT_FLOAT_EQ(y.at(1, 1, 0), 9.f);
    EXPECT_FLOAT_EQ(y.at(2, 2, 0), 9.f);
}

TEST(Conv2d, MatchesBruteForceReference) {
    Pcg32 rng(42);
    for (int k : {1, 2, 3}) {
        Tensor<double> x = testutil::random_tensor<double>({6, 7, 3}, rng);
        ConvParams<double> p = rand_conv(k, 3, 4, rng);
        Tensor<double> got = conv2d(x, p);
        Tensor<double> want = testutil::conv2d_reference(x, p.weights, p.bias, 1, true);
        ASSERT_EQ(got.shape(), want.shape()) << "k=" << k;
        for (int64_t i = 0; i < got.numel(); ++i)
            EXPECT_NEAR(got.at(i), want.at(i), 1e-12) << "k=" << k << " i=" << i;
    }
    // valid padding and stride 2
    Tensor<double> x = testutil::random_tensor<double>({8, 8, 2}, rng);
    ConvParams<double> p = rand_conv(3, 2, 3, rng, Padding::valid, 2);
    Tensor<double> got = conv2d(x, p);
    Tensor<double> want = testutil::conv2d_reference(x, p.weights, p.bias, 2, false);
    ASSERT_EQ(got.shape(), want.shape());
    for (int64_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got.at(i), want.at(i), 1e-12);
}

TEST(Conv2d, SamePaddingPreservesShapeForAllKernels) {
    Pcg32 rng(9);
    Tensor<double> x = testutil::random_tensor<double>({10, 12, 2}, rng);
    for (int k : {1, 2, 3}) {
        ConvParams<double> p = rand_conv(k, 2, 5, rng);
        Tensor<double> y = conv2d(x, p);
        EXPECT_EQ(y.dim(0), 10);
        EXPECT_EQ(y.dim(1), 12);
        EXPECT_EQ(y.dim(2), 5);
    }
}

TEST(Conv2d, RejectsBadInputs) {
    Pcg32 rng(2);
    Tensor<float> x = testutil::random_tensor<float>({4, 4, 3}, rng);
    ConvParams<float> p;
    p.weights = testutil::random_tensor<float>({3, 3, 2, 4}, rng); // wrong in_c
    p.bias = Tensor<float>::zeros({4});
    EXPECT_THROW(conv2d(x, p), ShapeError);

    ConvParams<float> q;
    q.weights = testutil::random_tensor<float>({4, 4, 3, 4}, rng); // kernel too big
    q.bias = Tensor<float>::zeros({4});
    EXPECT_THROW(conv2d(x, q), ShapeError);
}

TEST(Conv2d, GradCheckTenSeeds) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Pcg32 rng(seed);
        Tensor<double> x = testutil::random_tensor<double>({6, 6, 2}, rng);
        ConvParams<double> p = rand_conv(3, 2, 3, rng);
        double err = grad_check<double>(
            [&p](const std::vector<Tensor<double>>& ins, Tape<double>* tape) {
                ConvParams<double> q = p;
                q.weights = ins[1];
                q.bias = ins[2];
                return conv2d(ins[0], q, tape);
            },
            {x, p.weights, p.bias}, 1e-4);
        EXPECT_LT(err, 1e-4) << "seed=" << seed;
    }
}

TEST(Conv2d, GradCheckEvenKernelAndValid) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Pcg32 rng(100 + seed);
        Tensor<double> x = testutil::random_tensor<double>({6, 6, 2}, rng);
        ConvParams<double> p = rand_conv(2, 2, 3, rng, seed % 2 ? Padding::valid : Padding::same);
        double err = grad_check<double>(
            [&p](const std::vector<Tensor<double>>& ins, Tape<double>* tape) {
                ConvParams<double> q = p;
                q.weights = ins[1];
                q.bias = ins[2];
                return conv2d(ins[0], q, tape);
            },
            {x, p.weights, p.bias}, 1e-4);
        EXPECT_LT(err, 1e-4) << "seed=" << seed;
    }
}

// ============================================================================
// maxpool2x2 / upsample
// ============================================================================

TEST(MaxPool, ConstantAndBlockExamples) {
    Tensor<float> c = Tensor<float>::full({6, 6, 2}, 3.5f);
    Tensor<float> pc = maxpool2x2(c);
    EXPECT_EQ(pc.dim(0), 3);
    for (int64_t i = 0; i < pc.numel(); ++i) EXPECT_FLOAT_EQ(pc.at(i), 3.5f);

    Tensor<float> b = Tensor<float>::from({2, 2, 1}, {1.f, 2.f, 3.f, 4.f});
    EXPECT_FLOAT_EQ(maxpool2x2(b).at(0), 4.f);
}

TEST(MaxPool, FivePoolsReach8x8From256) {
    Tensor<float> x = Tensor<float>::zeros({256, 256, 1});
    for (int i = 0; i < 5; ++i) x = maxpool2x2(x);
    EXPECT_EQ(x.dim(0), 8);
    EXPECT_EQ(x.dim(1), 8);
}

TEST(MaxPool, OddDimsRejected) {
    Tensor<float> x = Tensor<float>::zeros({5, 4, 1});
    EXPECT_THROW(maxpool2x2(x), ShapeError);
}

TEST(MaxPool, TieBreaksToFirstInScanOrder) {
    Tensor<double> x = Tensor<double>::full({2, 2, 1}, 7.0);
    x.set_requires_grad(true);
    Tape<double> tape;
    Tensor<double> y = maxpool2x2(x, &tape);
    tape.backward(sum_all(y, &tape));
    EXPECT_DOUBLE_EQ(x.grad()[0], 1.0); // first element of the block
    EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
    EXPECT_DOUBLE_EQ(x.grad()[2], 0.0);
    EXPECT_DOUBLE_EQ(x.grad()[3], 0.0);
}

TEST(MaxPool, GradCheckTenSeeds) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Pcg32 rng(200 + seed);
        // Distinct values keep the argmax stable under the probe eps.
        Tensor<double> x = Tensor<double>::zeros({4, 4, 2});
        std::vector<int> order(static_cast<size_t>(x.numel()));
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
        for (int64_t i = 0; i < x.numel(); ++i)
            x.at(i) = 0.01 * order[static_cast<size_t>(i)];
        double err = grad_check<double>(
            [](const std::vector<Tensor<double>>& ins, Tape<double>* tape) {
                return maxpool2x2(ins[0], tape);
            },
            {x}, 1e-4);
        EXPECT_LT(err, 1e-4) << "seed=" << seed;
    }
}

TEST(Upsample, ReplicatesAndInvertsWithPool) {
    Tensor<float> v = Tensor<float>::from({1, 1, 1}, {2.5f});
    Tensor<float> up = upsample_nearest2x(v);
    ASSERT_EQ(up.dim(0), 2);
    for (int64_t i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(up.at(i), 2.5f);

    // maxpool(upsample(x)) == x: the 2x2 block is constant.
    Pcg32 rng(4);
    Tensor<float> x = testutil::random_tensor<float>({3, 5, 2}, rng);
    Tensor<float> roundtrip = maxpool2x2(upsample_nearest2x(x));
    ASSERT_EQ(roundtrip.shape(), x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) EXPECT_FLOAT_EQ(roundtrip.at(i), x.at(i));
}

TEST(Upsample, GradCheckTenSeeds) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Pcg32 rng(300 + seed);
        Tensor<double> x = testutil::random_tensor<double>({3, 4, 2}, rng);
        double err = grad_check<double>(
            [](const std::vector<Tensor<double>>& ins, Tape<double>* tape) {
                return upsample_nearest2x(ins[0], tape);
            },
            {x}, 1e-4);
        EXPECT_LT(err, 1e-4) << "seed=" << seed;
    }
}

// ============================================================================
// tile / concat
// ============================================================================

TEST(Tile, IdentityAndSliceEquality) {
    Pcg32 rng(6);
    Tensor<float> z = testutil::random_tensor<float>({1, 1, 8}, rng);
    Tensor<float> same = tile_spatial(z, 1, 1);
    for (int64_t i = 0; i < z.numel(); ++i) EXPECT_FLOAT_EQ(same.at(i), z.at(i));

    Tensor<float> tiled = tile_spatial(z, 4, 5);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x)
            for (int c = 0; c < 8; ++c) EXPECT_FLOAT_EQ(tiled.at(y, x, c), z.at(0, 0, c));
}

TEST(Tile, RejectsNonUnitSpatial) {
    Tensor<float> z = Tensor<float>::zeros({2, 1, 4});
    EXPECT_THROW(tile_spatial(z, 2, 2), ShapeError);
}

TEST(Tile, GradCheckTenSeeds) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Pcg32 rng(400 + seed);
        Tensor<double> z = testutil::random_tensor<double>({1, 1, 6}, rng);
        double err = grad_check<double>(
            [](const std::vector<Tensor<double>>& ins, Tape<double>* tape) {
                return tile_spatial(ins[0], 3, 4, tape);
            },
            {z}, 1e-4);
        EXPECT_LT(err, 1e-4) << "seed=" << seed;
    }
}

TEST(Concat, LayoutAndSliceRecovery) {
    Pcg32 rng(8);
    Tensor<float> a = testutil::random_tensor<float>({3, 3, 2}, rng);
    Tensor<float> b = testutil::random_tensor<float>({3, 3, 5}, rng);
    Tensor<float> cat = concat_channels(a, b);
    ASSERT_EQ(cat.dim(2), 7);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
            for (int c = 0; c < 2; ++c) EXPECT_FLOAT_EQ(cat.at(y, x, c), a.at(y, x, c));
            for (int c = 0; c < 5; ++c) EXPECT_FLOAT_EQ(cat.at(y, x, 2 + c), b.at(y, x, c));
        }
    Tensor<float> c = Tensor<float>::zeros({2, 3, 1});
    EXPECT_THROW(concat_channels(a, c), ShapeError);
}

TEST(Concat, GradCheckTenSeeds) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Pcg32 rng(500 + seed);
        Tensor<double> a = testutil::random_tensor<double>({3, 4, 2}, rng);
        Tensor<double> b = testutil::random_tensor<double>({3, 4, 3}, rng);
        double err = grad_check<double>(
            [](const std::vector<Tensor<double>>& ins, Tape<double>* tape) {
                return concat_channels(ins[0], ins[1], tape);
            },
            {a, b}, 1e-4);
        EXPECT_LT(err, 1e-4) << "seed=" << seed;
    }
}

// ============================================================================
// relu / sigmoid
// ============================================================================

TEST(Activations, PointValues) {
    Tensor<float> x = Tensor<float>::from({2}, {-1.f, 2.f});
    Tensor<float> r = relu(x);
    EXPECT_FLOAT_EQ(r.at(0), 0.f);
    EXPECT_FLOAT_EQ(r.at(1), 2.f);
    Tensor<float> zero = Tensor<float>::scalar(0.f);
    EXPECT_FLOAT_EQ(sigmoid(zero).at(0), 0.5f);
}

TEST(Activations, SigmoidMonotone) {
    Pcg32 rng(10);
    std::vector<double> xs(64);
    for (double& v : xs) v = rng.uniform(-5.0, 5.0);
    std::sort(xs.begin(), xs.end());
    Tensor<double> x = Tensor<double>::from({64}, xs);
    Tensor<double> s = sigmoid(x);
    for (int64_t i = 1; i < s.numel(); ++i) EXPECT_GE(s.at(i), s.at(i - 1));
}

TEST(Activations, SigmoidGradCheckTenSeeds) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Pcg32 rng(600 + seed);
        Tensor<double> x = testutil::random_tensor<double>({4, 4, 2}, rng, -3.0, 3.0);
        double err = grad_check<double>(
            [](const std::vector<Tensor<double>>& ins, Tape<double>* tape) {
                return sigmoid(ins[0], tape);
            },
            {x}, 1e-4);
        EXPECT_LT(err, 1e-4) << "seed=" << seed;
    }
}

// ============================================================================
// bce_loss
// ============================================================================

TEST(BceLoss, PerfectPredictionIsNearZero) {
    Tensor<double> pred = Tensor<double>::from({2, 2}, {1.0, 0.0, 1.0, 0.0});
    Tensor<double> target = Tensor<double>::from({2, 2}, {1.0, 0.0, 1.0, 0.0});
    double loss = bce_loss(pred, target).at(0);
    EXPECT_GE(loss, 0.0);
    EXPECT_LE(loss, 1.1e-7); // -log(1 - eps)
}

TEST(BceLoss, HalfProbabilityGivesLn2) {
    Tensor<double> pred = Tensor<double>::full({3, 3}, 0.5);
    Tensor<double> target = Tensor<double>::from(
        {3, 3}, {1, 0, 1, 0, 1, 0, 1, 1, 0});
    EXPECT_NEAR(bce_loss(pred, target).at(0), std::log(2.0), 1e-12);
}

TEST(BceLoss, DirectSummationOracle) {
    // -(1/4)(ln .9 + ln .9 + ln .8 + ln .8)
    Tensor<double> pred = Tensor<double>::from({2, 2}, {0.9, 0.1, 0.8, 0.2});
    Tensor<double> target = Tensor<double>::from({2, 2}, {1, 0, 1, 0});
    double expected =
        -0.25 * (std::log(0.9) + std::log(0.9) + std::log(0.8) + std::log(0.8));
    EXPECT_NEAR(bce_loss(pred, target).at(0), expected, 1e-12);
    EXPECT_NEAR(expected, 0.164252, 1e-6);
}

TEST(BceLoss, RejectsBadInputs) {
    Tensor<double> pred = Tensor<double>::full({2, 2}, 0.5);
    Tensor<double> bad_shape = Tensor<double>::full({2, 3}, 1.0);
    EXPECT_THROW(bce_loss(pred, bad_shape), ShapeError);
    Tensor<double> not_binary = Tensor<double>::full({2, 2}, 0.5);
    EXPECT_THROW(bce_loss(pred, not_binary), ShapeError);
}

TEST(BceLoss, NonNegativeProperty) {
    Pcg32 rng(12);
    for (int i = 0; i < 20; ++i) {
        Tensor<double> pred = testutil::random_tensor<double>({4, 4}, rng, 0.01, 0.99);
        Tensor<double> target = Tensor<double>::zeros({4, 4});
        for (int64_t j = 0; j < target.numel(); ++j)
            target.at(j) = rng.chance(0.5) ? 1.0 : 0.0;
        EXPECT_GE(bce_loss(pred, target).at(0), 0.0);
    }
}

TEST(BceLoss, SigmoidCompositeGradCheckTenSeeds) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Pcg32 rng(700 + seed);
        Tensor<double> logits = testutil::random_tensor<double>({4, 4}, rng, -2.0, 2.0);
        Tensor<double> target = Tensor<double>::zeros({4, 4});
        for (int64_t j = 0; j < target.numel(); ++j)
            target.at(j) = rng.chance(0.5) ? 1.0 : 0.0;
        double err = grad_check<double>(
            [&target](const std::vector<Tensor<double>>& ins, Tape<double>* tape) {
                return bce_loss(sigmoid(ins[0], tape), target, tape);
            },
            {logits}, 1e-4);
        EXPECT_LT(err, 1e-4) << "seed=" << seed;
    }
}

// ============================================================================
// cosine_match
// ============================================================================

TEST(CosineMatch, ParallelAndOrthogonal) {
    Tensor<double> f = Tensor<double>::from({1, 2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor<double> code = Tensor<double>::from({1, 1, 2}, {2.0, 0.0});
    Tensor<double> out = cosine_match(f, code);
    // position 0 is parallel to the code: scaling tanh(1)
    EXPECT_NEAR(out.at(0, 0, 0), 1.0 * std::tanh(1.0), 1e-12);
    EXPECT_NEAR(std::tanh(1.0), 0.761594, 1e-6);
    // position 1 is orthogonal: scaling tanh(0) = 0
    EXPECT_NEAR(out.at(0, 1, 1), 0.0, 1e-12);
}

TEST(CosineMatch, ZeroNormIsZero) {
    Tensor<double> f = Tensor<double>::from({1, 1, 2}, {0.0, 0.0});
    Tensor<double> code = Tensor<double>::from({1, 1, 2}, {1.0, 1.0});
    EXPECT_DOUBLE_EQ(cosine_match(f, code).at(0), 0.0);
}

TEST(CosineMatch, GradCheckTenSeeds) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Pcg32 rng(800 + seed);
        // keep vectors away from zero norm
        Tensor<double> f = testutil::random_tensor<double>({3, 3, 4}, rng, 0.3, 1.0);
        Tensor<double> code = testutil::random_tensor<double>({1, 1, 4}, rng, 0.3, 1.0);
        double err = grad_check<double>(
            [](const std::vector<Tensor<double>>& ins, Tape<double>* tape) {
                return cosine_match(ins[0], ins[1], tape);
            },
            {f, code}, 1e-5);
        EXPECT_LT(err, 1e-4) << "seed=" << seed;
    }
}
