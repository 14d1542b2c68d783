#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "playtest/apf.hpp"
#include "playtest/levels.hpp"

using namespace playtest;

namespace {

// Frames and actions of a scripted walk through a level.
FrameSequence walk(const LevelSpec& level, const std::vector<Action>& actions, const RenderConfig& rc) {
    FrameSequence seq;
    Rng rng(0);
    auto s = initial_state(level);
    seq.frames.push_back(render(level, s, rc));
    for (auto a : actions) {
        s = step(level, s, a, rng).state;
        seq.frames.push_back(render(level, s, rc));
        seq.actions.push_back(a);
        if (s.terminal()) break;
    }
    return seq;
}

std::vector<Action> repeat(Action a, int n) { return std::vector<Action>(static_cast<std::size_t>(n), a); }

APFConfig small_icm_config() {
    auto c = APFConfig::defaults(ApfBackend::ICM);
    c.render = {1, 0, 0};
    c.icm_features = 16;
    c.icm_hidden = 16;
    c.icm_epochs = 200;
    c.icm_learning_rate = 0.05;
    return c;
}

}  // namespace

TEST_CASE("defaults follow the hyperparameter table") {
    const auto cts = APFConfig::defaults(ApfBackend::CTS);
    CHECK(cts.beta == 0.01);
    CHECK(cts.pos_cap == 0.4);
    CHECK(cts.neg_cap == -0.4);
    const auto icm = APFConfig::defaults(ApfBackend::ICM);
    CHECK(icm.pos_cap == 0.1);
    CHECK(icm.neg_cap == -0.4);
    auto bad = cts;
    bad.neg_cap = 0.1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("feedback formulas match a direct transcription") {
    Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
        const double beta = 0.001 + rng.uniform();
        const double a = -200.0 * rng.uniform();
        const double b = -200.0 * rng.uniform();
        CHECK(cts_feedback(a, b, beta) == doctest::Approx(oracle::cts(a, b, beta)).epsilon(1e-12));
        const double qa = std::exp(-20.0 + 25.0 * rng.uniform());
        const double qb = std::exp(-20.0 + 25.0 * rng.uniform());
        CHECK(icm_feedback(qa, qb, beta) == doctest::Approx(oracle::icm(qa, qb, beta)).epsilon(1e-12));
    }
}

TEST_CASE("feedback boundary values") {
    const double beta = 0.01;
    CHECK(cts_feedback(-5.0, -5.0, beta) == 0.0);
    CHECK(icm_feedback(0.3, 0.3, beta) == 0.0);
    CHECK(cts_feedback(-4.0, -5.0, beta) == doctest::Approx(-beta / 2).epsilon(1e-12));  // p_new / p_min = e
    CHECK(icm_feedback(std::exp(1.0) * 0.2, 0.2, beta) == doctest::Approx(beta / 2).epsilon(1e-12));
    CHECK(cts_feedback(-1e9, -5.0, beta) == doctest::Approx(beta).epsilon(1e-6));
    CHECK(cts_feedback(-1e9, -5.0, beta) < beta);
    CHECK(icm_feedback(0.0, 0.2, beta) > -beta);
    CHECK(std::isfinite(icm_feedback(0.0, 0.0, beta)));
}

TEST_CASE("feedback is bounded and monotone in novelty") {
    const double beta = 0.05;
    double prev_cts = -1.0, prev_icm = -1.0;
    for (int k = 0; k <= 400; ++k) {
        const double x = -20.0 + 0.1 * k;  // log ratio
        const double c = cts_feedback(-x, 0.0, beta);  // larger x = rarer frame
        const double q = icm_feedback(std::exp(x), 1.0, beta);
        CHECK(c > -beta);
        CHECK(c <= beta);
        CHECK(q >= -beta);
        CHECK(q < beta);
        CHECK(c > prev_cts);
        CHECK(q > prev_icm);
        prev_cts = c;
        prev_icm = q;
    }
}

TEST_CASE("cap ledger clamps and spends") {
    CapLedger ledger(APFConfig::defaults(ApfBackend::CTS));
    CHECK(ledger.spend(0.3) == doctest::Approx(0.3));
    CHECK(ledger.spend(0.3) == doctest::Approx(0.1));
    CHECK(ledger.spend(0.3) == 0.0);
    CHECK(ledger.spend(-0.5) == doctest::Approx(-0.4));
    CHECK(ledger.spend(-0.1) == 0.0);
    CapLedger fresh(APFConfig::defaults(ApfBackend::CTS));
    CHECK(fresh.spend(0.0) == 0.0);
    CHECK(fresh.pos_remaining() == 0.4);
    CHECK(fresh.neg_remaining() == -0.4);
}

TEST_CASE("cap ledger never overspends on random streams") {
    Rng rng(9);
    const auto cfg = APFConfig::defaults(ApfBackend::ICM);
    for (int episode = 0; episode < 500; ++episode) {
        CapLedger ledger(cfg);
        double pos = 0.0, neg = 0.0;
        for (int t = 0; t < 100; ++t) {
            const double out = ledger.spend((rng.uniform() - 0.5) * 0.1);
            (out > 0 ? pos : neg) += out;
        }
        CHECK(pos <= cfg.pos_cap + 1e-15);
        CHECK(neg >= cfg.neg_cap - 1e-15);
    }
}

TEST_CASE("pos_bin quantises the remaining positive budget") {
    CapLedger ledger(APFConfig::defaults(ApfBackend::CTS));
    CHECK(ledger.pos_bin(4) == 4);
    ledger.spend(0.15);
    CHECK(ledger.pos_bin(4) == 3);
    ledger.spend(0.3);
    CHECK(ledger.pos_bin(4) == 0);
}

TEST_CASE("masks validate their ranges") {
    auto mask = [](std::vector<std::pair<int, int>> r) { return TrajectoryMask{std::move(r)}; };
    CHECK_NOTHROW(mask({{0, 2}, {3, 5}}).validate(5));
    CHECK_THROWS_AS(mask({{0, 2}, {1, 3}}).validate(5), ValidationError);
    CHECK_THROWS_AS(mask({{2, 2}}).validate(5), ValidationError);
    CHECK_THROWS_AS(mask({{3, 6}}).validate(5), ValidationError);
    CHECK_THROWS_AS(mask({{3, 4}, {0, 1}}).validate(5), ValidationError);
    CHECK(mask({{1, 3}}).excludes(2));
    CHECK_FALSE(mask({{1, 3}}).excludes(3));
}

TEST_CASE("cts boundary is the minimum over the masked-in frames") {
    const auto level = builtin_level("corridor");
    const auto cfg = APFConfig::defaults(ApfBackend::CTS);
    const auto seq = walk(level, repeat(Action::Right, 4), cfg.render);
    const auto mod = train_apf(cfg, {seq});
    double p_min = 0.0;
    for (const auto& f : seq.frames) p_min = std::min(p_min, mod.density().log_prob(f));
    CHECK(mod.boundary() == p_min);
    CHECK(mod.training_size() == seq.frames.size());
    for (std::size_t i = 0; i + 1 < seq.frames.size(); ++i)
        CHECK(raw_feedback(mod, seq.frames[i], seq.actions[i], seq.frames[i + 1]) <= 0.0);
}

TEST_CASE("two trajectories share one boundary over their union") {
    const auto level = builtin_level("two_door");
    const auto cfg = APFConfig::defaults(ApfBackend::CTS);
    const auto left = walk(level, repeat(Action::Left, 4), cfg.render);
    const auto right = walk(level, repeat(Action::Right, 4), cfg.render);
    const auto mod = train_apf(cfg, {left, right});
    double p_min = 0.0;
    for (const auto* s : {&left, &right})
        for (const auto& f : s->frames) p_min = std::min(p_min, mod.density().log_prob(f));
    CHECK(mod.boundary() == p_min);
}

TEST_CASE("masking a range equals deleting it") {
    const auto level = builtin_level("open_lanes");
    std::vector<Action> script = repeat(Action::Right, 6);
    for (auto a : repeat(Action::Up, 3)) script.push_back(a);
    for (auto a : repeat(Action::Right, 4)) script.push_back(a);

    SUBCASE("cts frames") {
        const auto cfg = APFConfig::defaults(ApfBackend::CTS);
        const auto seq = walk(level, script, cfg.render);
        const auto masked = train_apf(cfg, {seq}, {TrajectoryMask{{{3, 7}}}});
        FrameSequence a, b;
        a.frames.assign(seq.frames.begin(), seq.frames.begin() + 3);
        a.actions.assign(seq.actions.begin(), seq.actions.begin() + 2);
        b.frames.assign(seq.frames.begin() + 7, seq.frames.end());
        b.actions.assign(seq.actions.begin() + 7, seq.actions.end());
        const auto deleted = train_apf(cfg, {a, b});
        CHECK(masked.boundary() == deleted.boundary());
        CHECK(masked.density() == deleted.density());
    }
    SUBCASE("icm transitions") {
        const auto cfg = small_icm_config();
        const auto seq = walk(level, script, cfg.render);
        const auto masked = train_apf(cfg, {seq}, {TrajectoryMask{{{3, 7}}}});
        FrameSequence a, b;
        a.frames.assign(seq.frames.begin(), seq.frames.begin() + 4);
        a.actions.assign(seq.actions.begin(), seq.actions.begin() + 3);
        b.frames.assign(seq.frames.begin() + 7, seq.frames.end());
        b.actions.assign(seq.actions.begin() + 7, seq.actions.end());
        const auto deleted = train_apf(cfg, {a, b});
        CHECK(masked.boundary() == deleted.boundary());
        CHECK(masked.icm() == deleted.icm());
    }
    SUBCASE("a mask covering everything is an error") {
        const auto cfg = APFConfig::defaults(ApfBackend::CTS);
        const auto seq = walk(level, script, cfg.render);
        const std::vector<TrajectoryMask> all{TrajectoryMask{{{0, static_cast<int>(seq.frames.size())}}}};
        CHECK_THROWS_AS(train_apf(cfg, {seq}, all), ValidationError);
        CHECK_THROWS_AS(train_apf(cfg, {}), ValidationError);
    }
}

TEST_CASE("icm training transitions average a nonpositive feedback") {
    const auto level = builtin_level("open_lanes");
    const auto cfg = small_icm_config();
    const auto seq = walk(level, repeat(Action::Right, 8), cfg.render);
    const auto mod = train_apf(cfg, {seq});
    double sum = 0.0;
    for (std::size_t i = 0; i < seq.actions.size(); ++i) sum += raw_feedback(mod, seq.frames[i], seq.actions[i], seq.frames[i + 1]);
    CHECK(sum / static_cast<double>(seq.actions.size()) <= 1e-12);
}

TEST_CASE("modulate adds capped feedback to the env reward") {
    const auto level = builtin_level("two_door");
    auto cfg = APFConfig::defaults(ApfBackend::CTS);
    const auto left = walk(level, repeat(Action::Left, 4), cfg.render);
    const auto right = walk(level, repeat(Action::Right, 4), cfg.render);
    const auto mod = train_apf(cfg, {left});
    CapLedger ledger(cfg);
    CHECK(modulate(mod, ledger, 0.0, right.frames[1], right.actions[1], right.frames[2]) > 0.0);
    CHECK(modulate(mod, ledger, 1.0, left.frames[1], left.actions[1], left.frames[2]) <= 1.0);
    cfg.pos_cap = 0.0;
    cfg.neg_cap = 0.0;
    CapLedger empty(cfg);
    CHECK(modulate(mod, empty, 0.25, right.frames[1], right.actions[1], right.frames[2]) == 0.25);
    CHECK(modulate(mod, empty, 0.25, left.frames[1], left.actions[1], left.frames[2]) == 0.25);
}

TEST_CASE("raw feedback never changes the backend") {
    const auto level = builtin_level("two_door");
    const auto cfg = APFConfig::defaults(ApfBackend::CTS);
    const auto left = walk(level, repeat(Action::Left, 4), cfg.render);
    const auto mod = train_apf(cfg, {left});
    const auto copy = mod;
    for (int i = 0; i < 3; ++i) raw_feedback(mod, left.frames[0], Action::Left, left.frames[1]);
    CHECK(mod == copy);
}

TEST_CASE("modulator bundles round trip") {
    const auto level = builtin_level("two_door");
    for (auto backend : {ApfBackend::CTS, ApfBackend::ICM}) {
        auto cfg = backend == ApfBackend::CTS ? APFConfig::defaults(backend) : small_icm_config();
        cfg.icm_epochs = 20;
        const auto seq = walk(level, repeat(Action::Left, 4), cfg.render);
        const auto mod = train_apf(cfg, {seq});
        std::stringstream ss;
        mod.save(ss);
        const auto back = ApfModulator::load(ss);
        CHECK(back == mod);
        CHECK(back.raw_feedback(seq.frames[0], seq.actions[0], seq.frames[1]) ==
              mod.raw_feedback(seq.frames[0], seq.actions[0], seq.frames[1]));
    }
    std::stringstream junk("PTAF");
    CHECK_THROWS_AS(ApfModulator::load(junk), FormatError);
}

TEST_CASE("transferred encoder is required when requested") {
    const auto level = builtin_level("two_door");
    auto cfg = small_icm_config();
    cfg.encoder = EncoderMode::Transferred;
    const auto seq = walk(level, repeat(Action::Left, 4), cfg.render);
    CHECK_THROWS_AS(train_apf(cfg, {seq}), ValidationError);
    const auto first = render(level, initial_state(level), cfg.render);
    Eigen::MatrixXd w = Eigen::MatrixXd::Random(8, first.width * first.height);
    const auto enc = FeatureEncoder::transferred(first.width, first.height, w, Eigen::VectorXd::Zero(8), Activation::Tanh);
    const auto mod = train_apf(cfg, {seq}, {}, enc);
    CHECK(mod.icm().encoder == enc);
}
