#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "playtest/dynamics.hpp"
#include "playtest/levels.hpp"

using namespace playtest;

namespace {

Observation random_frame(Rng& rng, int w, int h) {
    Observation f{w, h, {}};
    for (int i = 0; i < w * h; ++i) f.pixels.push_back(static_cast<std::uint8_t>(rng.uniform_int(8)));
    return f;
}

std::vector<Transition> random_transitions(Rng& rng, int n, int w, int h) {
    std::vector<Transition> out;
    for (int i = 0; i < n; ++i)
        out.push_back({random_frame(rng, w, h), action_from_index(static_cast<int>(rng.uniform_int(kNumActions))),
                       random_frame(rng, w, h)});
    return out;
}

}  // namespace

TEST_CASE("encoders are deterministic") {
    Rng rng(1);
    const auto f = random_frame(rng, 6, 5);
    const auto proj = FeatureEncoder::random_projection(6, 5, 16, 9);
    CHECK((proj.encode(f) - proj.encode(f)).norm() == 0.0);
    CHECK(FeatureEncoder::random_projection(6, 5, 16, 9) == proj);
    const auto down = FeatureEncoder::identity_downsample(6, 5, 3, 3);
    CHECK(down.output_dim() == 9);
    CHECK((down.encode(f) - down.encode(f)).norm() == 0.0);
    CHECK(down.encode(f).maxCoeff() <= 1.0);
    CHECK_THROWS_AS(proj.encode(random_frame(rng, 5, 6)), DimensionError);
}

TEST_CASE("random projection separates every single-tile change of a level") {
    const auto level = builtin_level("fig5");
    const RenderConfig rc{1, 0, 0};
    const auto base_state = initial_state(level);
    const auto base = render(level, base_state, rc);
    const auto enc = FeatureEncoder::random_projection(base.width, base.height, 32, 4);
    const Eigen::VectorXd phi = enc.encode(base);
    int checked = 0;
    for (int y = 0; y < base.height; ++y)
        for (int x = 0; x < base.width; ++x) {
            auto changed = base;
            changed.pixels[static_cast<std::size_t>(y * base.width + x)] =
                static_cast<std::uint8_t>((base.at(x, y) + 1) % 8);
            CHECK((enc.encode(changed) - phi).norm() > 0.0);
            ++checked;
        }
    CHECK(checked == 280);
}

TEST_CASE("mlp backward matches finite differences") {
    Rng rng(5);
    auto net = Mlp::init(4, 7, 3, rng);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 5);
    Eigen::MatrixXd target = Eigen::MatrixXd::Random(3, 5);
    auto loss = [&](const Eigen::VectorXd& p) {
        Mlp m = net;
        m.set_parameters(p);
        return 0.5 * (m.forward(x).output - target).squaredNorm();
    };
    const auto cache = net.forward(x);
    const Eigen::VectorXd analytic = net.backward(cache, cache.output - target);
    CHECK(oracle::relative_error(analytic, oracle::numeric_gradient(loss, net.parameters())) < 1e-7);
}

TEST_CASE("icm loss gradients match finite differences") {
    Rng rng(12);
    for (int instance = 0; instance < 5; ++instance) {
        CAPTURE(instance);
        IcmConfig cfg;
        cfg.hidden = 6;
        cfg.seed = static_cast<std::uint64_t>(instance);
        const auto icm = Icm::create(FeatureEncoder::random_projection(4, 3, 5, instance), cfg);
        const auto batch = encode_transitions(icm.encoder, random_transitions(rng, 7, 4, 3));
        const auto l = icm_loss(icm, batch);
        auto fwd = [&](const Eigen::VectorXd& p) {
            Icm m = icm;
            m.forward_model.set_parameters(p);
            return icm_loss(m, batch, false).total;
        };
        auto inv = [&](const Eigen::VectorXd& p) {
            Icm m = icm;
            m.inverse_model.set_parameters(p);
            return icm_loss(m, batch, false).total;
        };
        CHECK(oracle::relative_error(l.forward_grad, oracle::numeric_gradient(fwd, icm.forward_model.parameters())) < 1e-4);
        CHECK(oracle::relative_error(l.inverse_grad, oracle::numeric_gradient(inv, icm.inverse_model.parameters())) < 1e-4);
    }
}

TEST_CASE("training lowers the loss and never touches the encoder") {
    Rng rng(3);
    const auto transitions = random_transitions(rng, 12, 4, 4);
    IcmConfig cfg;
    cfg.hidden = 16;
    auto icm = Icm::create(FeatureEncoder::random_projection(4, 4, 8, 1), cfg);
    const auto encoder_before = icm.encoder;
    IcmTrainConfig tc;
    tc.epochs = 300;
    tc.learning_rate = 0.05;
    const auto curve = train_icm(icm, transitions, tc);
    REQUIRE(curve.size() == 300);
    CHECK(curve.back() < curve.front());
    CHECK(icm.encoder == encoder_before);
    CHECK(icm.encoder.frozen());
}

TEST_CASE("zero epochs leave the models unchanged") {
    Rng rng(3);
    auto icm = Icm::create(FeatureEncoder::random_projection(3, 3, 4, 1), IcmConfig{});
    const auto before = icm;
    IcmTrainConfig tc;
    tc.epochs = 0;
    CHECK(train_icm(icm, random_transitions(rng, 3, 3, 3), tc).empty());
    CHECK(icm == before);
    CHECK_THROWS_AS(train_icm(icm, {}, tc), ValidationError);
}

TEST_CASE("prediction error is zero when the forward model reproduces the features") {
    // Blank frames encode to the zero vector, which a zeroed forward model copies exactly.
    auto icm = Icm::create(FeatureEncoder::random_projection(3, 2, 4, 0), IcmConfig{});
    icm.forward_model.set_parameters(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(icm.forward_model.parameter_count())));
    const Observation zero{3, 2, std::vector<std::uint8_t>(6, 0)};
    CHECK(prediction_error(icm, zero, Action::Up, zero) == 0.0);
}

TEST_CASE("q_mean and the curiosity bonus") {
    Rng rng(8);
    const auto icm = Icm::create(FeatureEncoder::random_projection(3, 3, 4, 2), IcmConfig{});
    const auto ts = random_transitions(rng, 2, 3, 3);
    const double e0 = prediction_error(icm, ts[0].frame, ts[0].action, ts[0].next_frame);
    const double e1 = prediction_error(icm, ts[1].frame, ts[1].action, ts[1].next_frame);
    CHECK(q_mean(icm, ts) == doctest::Approx((e0 + e1) / 2).epsilon(1e-12));
    CHECK(q_mean(icm, {ts[0]}) == doctest::Approx(e0).epsilon(1e-12));
    CHECK_THROWS_AS(q_mean(icm, {}), ValidationError);
    CHECK(curiosity_bonus(0.0, 0.2) == 0.0);
    CHECK(curiosity_bonus(0.5, 0.2) == doctest::Approx(0.1));
    CHECK_THROWS_AS(curiosity_bonus(-1.0, 0.2), ContractViolation);
}

TEST_CASE("icm serialization round trips") {
    const auto icm = Icm::create(FeatureEncoder::random_projection(4, 4, 6, 3), IcmConfig{});
    std::stringstream ss;
    icm.save(ss);
    CHECK(Icm::load(ss) == icm);

    Eigen::MatrixXd w = Eigen::MatrixXd::Random(3, 16);
    const auto t = FeatureEncoder::transferred(4, 4, w, Eigen::VectorXd::Zero(3), Activation::Tanh);
    std::stringstream ts;
    t.save(ts);
    CHECK(FeatureEncoder::load(ts) == t);

    std::stringstream bad("XXXX garbage");
    CHECK_THROWS_AS(FeatureEncoder::load(bad), FormatError);
}
