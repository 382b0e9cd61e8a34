#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "distileval/errors.hpp"
#include "distileval/layers.hpp"
#include "distileval/rng.hpp"
#include "distileval/tensor.hpp"

using namespace distileval;

namespace {

// Inputs kept away from zero so relu kinks cannot flip within the probe
// step, and continuous so maxpool windows have no ties.
Tensor safe_input(RngStream& rng, std::vector<int> shape) {
    Tensor x(std::move(shape));
    for (auto& v : x.data) {
        double u = rng.uniform(-1.0, 1.0);
        if (std::abs(u) < 0.05) u += u >= 0.0 ? 0.1 : -0.1;
        v = u;
    }
    return x;
}

void randomize_params(Layer& layer, RngStream& rng, double scale = 0.4) {
    std::vector<Param*> params;
    layer.collect_params(params);
    for (Param* p : params) {
        if (!p->trainable) continue;
        for (auto& v : p->value.data) v = rng.uniform(-scale, scale);
    }
}

// Probes d(sum(y * R))/dx and /dtheta with central differences against the
// layer's backward pass. R is a fixed random projection so every output
// element participates.
void fd_check(Layer& layer, const Tensor& x, bool training,
              double tol = 1e-5) {
    RngStream rng{991};
    Tensor y = layer.forward(x, training);
    Tensor r(y.shape);
    for (auto& v : r.data) v = rng.uniform(-1.0, 1.0);

    std::vector<Param*> params;
    layer.collect_params(params);
    for (Param* p : params) p->zero_grad();
    Tensor gx = layer.backward(r);
    REQUIRE(gx.shape == x.shape);

    auto J = [&](const Tensor& xin) {
        Tensor out = layer.forward(xin, training);
        double s = 0.0;
        for (std::size_t i = 0; i < out.data.size(); ++i) s += out[i] * r[i];
        return s;
    };

    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        Tensor xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (J(xp) - J(xm)) / (2.0 * h);
        const double err =
            std::abs(gx[i] - fd) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, err);
    }
    CHECK(worst <= tol);

    worst = 0.0;
    for (Param* p : params) {
        if (!p->trainable) continue;
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            const double keep = p->value[i];
            p->value[i] = keep + h;
            const double jp = J(x);
            p->value[i] = keep - h;
            const double jm = J(x);
            p->value[i] = keep;
            const double fd = (jp - jm) / (2.0 * h);
            const double err =
                std::abs(p->grad[i] - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, err);
        }
    }
    CHECK(worst <= tol);
}

} // namespace

TEST_CASE("conv2d gradients under several geometries") {
    RngStream rng{101};
    struct Geo {
        int in_ch, out_ch, k, s, p;
        bool bias;
        int hw;
    };
    const Geo geos[] = {
        {2, 3, 3, 1, 1, true, 5},  {2, 4, 3, 2, 1, true, 5},
        {3, 2, 1, 2, 0, true, 5},  {2, 2, 5, 1, 2, false, 6},
        {1, 3, 1, 1, 0, true, 4},
    };
    for (const Geo& g : geos) {
        CAPTURE(g.k);
        CAPTURE(g.s);
        Conv2dT<double> conv("c", g.in_ch, g.out_ch, g.k, g.s, g.p, g.bias);
        randomize_params(conv, rng);
        Tensor x = safe_input(rng, {2, g.in_ch, g.hw, g.hw});
        fd_check(conv, x, true);
    }
}

TEST_CASE("conv2d output size uses floor division") {
    Conv2dT<double> c1("c", 1, 1, 3, 2, 0);
    Tensor y1 = c1.forward(Tensor({1, 1, 5, 5}), false);
    CHECK(y1.shape == std::vector<int>{1, 1, 2, 2});

    Conv2dT<double> c2("c", 1, 1, 3, 2, 1);
    Tensor y2 = c2.forward(Tensor({1, 1, 6, 6}), false);
    CHECK(y2.shape == std::vector<int>{1, 1, 3, 3});

    Conv2dT<double> c3("c", 1, 1, 1, 2, 0);
    Tensor y3 = c3.forward(Tensor({1, 1, 5, 5}), false);
    CHECK(y3.shape == std::vector<int>{1, 1, 3, 3});
}

TEST_CASE("conv2d with zero weights emits its bias everywhere") {
    Conv2dT<double> conv("c", 2, 3, 3, 1, 1);
    conv.bias.value[0] = 0.25;
    conv.bias.value[1] = -1.5;
    conv.bias.value[2] = 4.0;
    RngStream rng{102};
    Tensor x = safe_input(rng, {2, 2, 4, 4});
    Tensor y = conv.forward(x, false);
    REQUIRE(y.shape == std::vector<int>{2, 3, 4, 4});
    for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j < 16; ++j)
                CHECK(y[(static_cast<std::size_t>(b) * 3 + c) * 16 + j] ==
                      conv.bias.value[static_cast<std::size_t>(c)]);
}

TEST_CASE("conv2d rejects wrong channel counts") {
    Conv2dT<double> conv("c", 3, 4, 3, 1, 1);
    CHECK_THROWS_AS(conv.forward(Tensor({1, 2, 5, 5}), false), ShapeError);
    CHECK_THROWS_AS(conv.forward(Tensor({1, 3, 5}), false), ShapeError);
}

TEST_CASE("linear gradients and shape handling") {
    RngStream rng{103};
    LinearT<double> lin("fc", 6, 4);
    randomize_params(lin, rng);
    Tensor x = safe_input(rng, {3, 6});
    fd_check(lin, x, true);

    Tensor y = lin.forward(x, false);
    CHECK(y.shape == std::vector<int>{3, 4});
    CHECK_THROWS_AS(lin.forward(Tensor({3, 5}), false), ShapeError);
}

TEST_CASE("batchnorm training normalizes with batch statistics") {
    BatchNorm2dT<double> bn("bn", 2);
    RngStream rng{104};
    Tensor x = safe_input(rng, {3, 2, 4, 4});
    for (auto& v : x.data) v = v * 2.0 + 0.7; // offset so stats are nontrivial
    Tensor y = bn.forward(x, true);

    const std::size_t hw = 16, chw = 32;
    for (int c = 0; c < 2; ++c) {
        double mean = 0.0, var = 0.0, xmean = 0.0;
        for (int b = 0; b < 3; ++b)
            for (std::size_t j = 0; j < hw; ++j) {
                mean += y[static_cast<std::size_t>(b) * chw + c * hw + j];
                xmean += x[static_cast<std::size_t>(b) * chw + c * hw + j];
            }
        mean /= 48.0;
        xmean /= 48.0;
        double xvar = 0.0;
        for (int b = 0; b < 3; ++b)
            for (std::size_t j = 0; j < hw; ++j) {
                const double d =
                    y[static_cast<std::size_t>(b) * chw + c * hw + j] - mean;
                var += d * d;
                const double e =
                    x[static_cast<std::size_t>(b) * chw + c * hw + j] - xmean;
                xvar += e * e;
            }
        var /= 48.0;
        xvar /= 48.0;
        CHECK(std::abs(mean) < 1e-12);
        // output variance is slightly below 1 because of eps
        CHECK(var == doctest::Approx(xvar / (xvar + 1e-5)).epsilon(1e-10));

        // running buffers fold in the biased batch stats with momentum 0.1
        CHECK(bn.running_mean.value[static_cast<std::size_t>(c)] ==
              doctest::Approx(0.1 * xmean).epsilon(1e-12));
        CHECK(bn.running_var.value[static_cast<std::size_t>(c)] ==
              doctest::Approx(0.9 * 1.0 + 0.1 * xvar).epsilon(1e-12));
    }
}

TEST_CASE("batchnorm inference uses running statistics") {
    BatchNorm2dT<double> bn("bn", 1);
    bn.running_mean.value[0] = 2.0;
    bn.running_var.value[0] = 4.0;
    bn.gamma.value[0] = 3.0;
    bn.beta.value[0] = -1.0;
    Tensor x({1, 1, 1, 2}, {2.0, 4.0});
    Tensor y = bn.forward(x, false);
    // (x-2)/sqrt(4+1e-5) * 3 - 1
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(y[1] ==
          doctest::Approx(3.0 * 2.0 / std::sqrt(4.0 + 1e-5) - 1.0)
              .epsilon(1e-12));
    // inference must not move the buffers
    CHECK(bn.running_mean.value[0] == 2.0);
    CHECK(bn.running_var.value[0] == 4.0);
}

TEST_CASE("batchnorm gradients in both modes") {
    RngStream rng{105};
    BatchNorm2dT<double> bn("bn", 3);
    randomize_params(bn, rng);
    for (auto& v : bn.gamma.value.data) v += 1.0; // keep scales away from 0
    Tensor x = safe_input(rng, {2, 3, 3, 3});
    fd_check(bn, x, true, 2e-5);

    // populate running stats, then check the inference-mode path
    bn.forward(x, true);
    fd_check(bn, x, false);
}

TEST_CASE("instance norm applies the same transform in both modes") {
    RngStream rng{106};
    InstanceNorm2dT<double> in("in", 2);
    randomize_params(in, rng);
    for (auto& v : in.gamma.value.data) v += 1.0;
    Tensor x = safe_input(rng, {2, 2, 4, 4});
    Tensor a = in.forward(x, true);
    Tensor b = in.forward(x, false);
    REQUIRE(a.shape == b.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a[i] == b[i]);

    // per-sample, per-channel zero mean when gamma=1, beta=0
    InstanceNorm2dT<double> plain("p", 2);
    Tensor z = plain.forward(x, true);
    for (int s = 0; s < 2; ++s)
        for (int c = 0; c < 2; ++c) {
            double m = 0.0;
            for (int j = 0; j < 16; ++j)
                m += z[(static_cast<std::size_t>(s) * 2 + c) * 16 + j];
            CHECK(std::abs(m / 16.0) < 1e-12);
        }

    fd_check(in, x, true, 2e-5);
}

TEST_CASE("relu gradients and clamping") {
    ReluT<double> relu;
    Tensor x({1, 1, 1, 4}, {-2.0, -0.5, 0.5, 3.0});
    Tensor y = relu.forward(x, true);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 0.5);
    CHECK(y[3] == 3.0);
    Tensor g = relu.backward(Tensor({1, 1, 1, 4}, {1, 1, 1, 1}));
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 1.0);
    CHECK(g[3] == 1.0);

    RngStream rng{107};
    ReluT<double> r2;
    fd_check(r2, safe_input(rng, {2, 3, 4, 4}), true);
}

TEST_CASE("maxpool picks window maxima and routes gradients to them") {
    MaxPool2dT<double> pool(2, 2);
    Tensor x({1, 1, 4, 4}, {1, 2, 3, 4,
                            5, 6, 7, 8,
                            9, 10, 11, 12,
                            13, 14, 15, 16});
    Tensor y = pool.forward(x, true);
    REQUIRE(y.shape == std::vector<int>{1, 1, 2, 2});
    CHECK(y[0] == 6.0);
    CHECK(y[1] == 8.0);
    CHECK(y[2] == 14.0);
    CHECK(y[3] == 16.0);
    Tensor g = pool.backward(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
    CHECK(g[5] == 1.0);
    CHECK(g[7] == 2.0);
    CHECK(g[13] == 3.0);
    CHECK(g[15] == 4.0);
    double total = 0.0;
    for (double v : g.data) total += v;
    CHECK(total == 10.0);

    RngStream rng{108};
    MaxPool2dT<double> p2(3, 2);
    fd_check(p2, safe_input(rng, {2, 2, 5, 5}), true);
}

TEST_CASE("avgpool and global avgpool") {
    AvgPool2dT<double> pool(2, 2);
    Tensor x({1, 1, 2, 2}, {1.0, 3.0, 5.0, 7.0});
    Tensor y = pool.forward(x, true);
    CHECK(y[0] == 4.0);

    GlobalAvgPoolT<double> gap;
    Tensor z({2, 2, 2, 2}, {1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 0, 4, 4, 0});
    Tensor w = gap.forward(z, true);
    REQUIRE(w.shape == std::vector<int>{2, 2});
    CHECK(w[0] == 1.0);
    CHECK(w[1] == 2.0);
    CHECK(w[2] == 3.0);
    CHECK(w[3] == 2.0);

    RngStream rng{109};
    AvgPool2dT<double> p2(2, 2);
    fd_check(p2, safe_input(rng, {2, 2, 4, 4}), true);
    GlobalAvgPoolT<double> g2;
    fd_check(g2, safe_input(rng, {2, 3, 3, 3}), true);
}

TEST_CASE("flatten reshapes and restores") {
    FlattenT<double> fl;
    RngStream rng{110};
    Tensor x = safe_input(rng, {2, 3, 2, 2});
    Tensor y = fl.forward(x, true);
    REQUIRE(y.shape == std::vector<int>{2, 12});
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y[i] == x[i]);
    Tensor g = fl.backward(y);
    REQUIRE(g.shape == x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(g[i] == x[i]);
}

TEST_CASE("sequential composite end to end gradients") {
    RngStream rng{111};
    auto net = std::make_unique<SequentialT<double>>();
    net->add(std::make_unique<Conv2dT<double>>("c1", 2, 3, 3, 1, 1));
    net->add(make_norm<double>(NormKind::batch, "n1", 3));
    net->add(std::make_unique<ReluT<double>>());
    net->add(std::make_unique<MaxPool2dT<double>>(2, 2));
    net->add(std::make_unique<FlattenT<double>>());
    net->add(std::make_unique<LinearT<double>>("fc", 3 * 3 * 3, 4));
    randomize_params(*net, rng);

    std::vector<Param*> params;
    net->collect_params(params);
    int trainable = 0;
    for (Param* p : params)
        if (p->trainable) ++trainable;
    CHECK(trainable == 6); // conv w+b, gamma, beta, linear w+b
    CHECK(params.size() == 8); // plus the two running buffers

    Tensor x = safe_input(rng, {2, 2, 6, 6});
    fd_check(*net, x, true, 2e-5);
    CHECK(net->describe().find("relu") != std::string::npos);
}

TEST_CASE("norm kind parsing") {
    CHECK(norm_kind_from_string("batch") == NormKind::batch);
    CHECK(norm_kind_from_string("instance") == NormKind::instance);
    CHECK_THROWS_AS(norm_kind_from_string("layer"), ConfigError);
    CHECK(to_string(NormKind::instance) == "instance");

    auto n = make_norm<double>(NormKind::instance, "n", 4);
    CHECK(n->describe().find("instance") != std::string::npos);
}
