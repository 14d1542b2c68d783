#include "playtest/apf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "playtest/binary_io.hpp"

namespace playtest {

namespace {

constexpr std::uint32_t kApfVersion = 1;

}  // namespace

const char* to_string(ApfBackend b) { return b == ApfBackend::CTS ? "CTS" : "ICM"; }

ApfBackend apf_backend_from_string(std::string_view s) {
    if (s == "CTS" || s == "cts") return ApfBackend::CTS;
    if (s == "ICM" || s == "icm") return ApfBackend::ICM;
    throw ValidationError("unknown APF backend '" + std::string(s) + "'");
}

APFConfig APFConfig::defaults(ApfBackend backend) {
    APFConfig c;
    c.backend = backend;
    if (backend == ApfBackend::ICM) c.pos_cap = 0.1;
    return c;
}

void APFConfig::validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ValidationError("APF beta must be non-negative and finite");
    if (!(pos_cap >= 0.0) || !std::isfinite(pos_cap)) throw ValidationError("pos_cap must be finite and >= 0");
    if (!(neg_cap <= 0.0) || !std::isfinite(neg_cap)) throw ValidationError("neg_cap must be finite and <= 0");
    if (render.block <= 0) throw ValidationError("APF render block must be positive");
    if (!(alpha > 0.0)) throw ValidationError("APF density alpha must be positive");
    if (icm_features <= 0 || icm_hidden <= 0) throw ValidationError("ICM sizes must be positive");
    if (icm_epochs < 0) throw ValidationError("icm_epochs must be >= 0");
    if (!(icm_learning_rate > 0.0)) throw ValidationError("icm_learning_rate must be positive");
}

int CapLedger::pos_bin(int bins) const {
    if (pos_cap_ <= 0.0 || pos_remaining_ <= 0.0) return 0;
    return std::clamp(static_cast<int>(std::ceil(pos_remaining_ / pos_cap_ * bins)), 1, bins);
}

double CapLedger::spend(double raw) {
    if (raw > 0.0) {
        const double out = std::min(raw, pos_remaining_);
        pos_remaining_ -= out;
        return out;
    }
    if (raw < 0.0) {
        const double out = std::max(raw, neg_remaining_);
        neg_remaining_ -= out;
        return out;
    }
    return 0.0;
}

bool TrajectoryMask::excludes(int index) const {
    for (const auto& [a, b] : ranges)
        if (index >= a && index < b) return true;
    return false;
}

void TrajectoryMask::validate(int length) const {
    int prev_end = 0;
    for (const auto& [a, b] : ranges) {
        if (a < 0 || b > length || a >= b)
            throw ValidationError("mask range [" + std::to_string(a) + ", " + std::to_string(b) + ") outside [0, " +
                                  std::to_string(length) + "]");
        if (a < prev_end) throw ValidationError("mask ranges overlap or are unsorted");
        prev_end = b;
    }
}

double cts_feedback(double log_p_new, double log_p_min, double beta) {
    const double x = log_p_new - log_p_min;
    if (x > 0.0) return beta / (1.0 + x) - beta;
    return beta - beta / (1.0 - x);
}

double icm_feedback(double q_new, double q_mean, double beta) {
    const double y = std::log(std::max(q_new, kIcmErrorFloor)) - std::log(std::max(q_mean, kIcmErrorFloor));
    if (y > 0.0) return beta - beta / (1.0 + y);
    return beta / (1.0 - y) - beta;
}

ApfModulator train_apf(const APFConfig& config, const std::vector<FrameSequence>& sequences,
                       const std::vector<TrajectoryMask>& masks, const std::optional<FeatureEncoder>& transferred) {
    config.validate();
    if (!masks.empty() && masks.size() != sequences.size())
        throw ValidationError("expected one mask per trajectory, got " + std::to_string(masks.size()) + " for " +
                              std::to_string(sequences.size()));
    for (const auto& s : sequences)
        if (s.frames.size() != s.actions.size() + 1) throw ValidationError("frame sequence needs actions + 1 frames");

    ApfModulator mod;
    mod.config_ = config;

    if (config.backend == ApfBackend::CTS) {
        std::vector<const Observation*> frames;
        for (std::size_t i = 0; i < sequences.size(); ++i) {
            const auto& s = sequences[i];
            if (!masks.empty()) masks[i].validate(static_cast<int>(s.frames.size()));
            for (std::size_t k = 0; k < s.frames.size(); ++k)
                if (masks.empty() || !masks[i].excludes(static_cast<int>(k))) frames.push_back(&s.frames[k]);
        }
        if (frames.empty()) throw ValidationError("APF training set is empty after masking");
        DensityConfig dc;
        dc.width = frames.front()->width;
        dc.height = frames.front()->height;
        dc.filter = ContextFilter::from_shape(config.filter);
        dc.estimator = config.estimator;
        dc.alpha = config.alpha;
        DensityModel model(dc);
        for (const auto* f : frames) model.update(*f);
        double p_min = std::numeric_limits<double>::infinity();
        for (const auto* f : frames) p_min = std::min(p_min, model.log_prob(*f));
        mod.density_ = std::move(model);
        mod.boundary_ = p_min;
        mod.training_size_ = frames.size();
        return mod;
    }

    std::vector<Transition> transitions;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        const auto& s = sequences[i];
        if (!masks.empty()) masks[i].validate(static_cast<int>(s.actions.size()));
        for (std::size_t k = 0; k < s.actions.size(); ++k)
            if (masks.empty() || !masks[i].excludes(static_cast<int>(k)))
                transitions.push_back({s.frames[k], s.actions[k], s.frames[k + 1]});
    }
    if (transitions.empty()) throw ValidationError("APF training set is empty after masking");
    const auto& f0 = transitions.front().frame;
    FeatureEncoder enc;
    switch (config.encoder) {
        case EncoderMode::FixedRandomProjection:
            enc = FeatureEncoder::random_projection(f0.width, f0.height, config.icm_features, config.icm_seed);
            break;
        case EncoderMode::IdentityDownsample: {
            // Keep the aspect ratio while staying at or below icm_features.
            const double s = std::sqrt(static_cast<double>(config.icm_features) / (f0.width * f0.height));
            const int w = std::clamp(static_cast<int>(std::floor(f0.width * s)), 1, f0.width);
            const int h = std::clamp(static_cast<int>(std::floor(f0.height * s)), 1, f0.height);
            enc = FeatureEncoder::identity_downsample(f0.width, f0.height, w, h);
            break;
        }
        case EncoderMode::Transferred:
            if (!transferred) throw ValidationError("transferred encoder requested but none supplied");
            enc = *transferred;
            break;
    }
    IcmConfig ic;
    ic.hidden = config.icm_hidden;
    ic.forward_weight = config.icm_forward_weight;
    ic.seed = config.icm_seed;
    Icm icm = Icm::create(std::move(enc), ic);
    IcmTrainConfig tc;
    tc.epochs = config.icm_epochs;
    tc.learning_rate = config.icm_learning_rate;
    tc.seed = config.icm_seed;
    train_icm(icm, transitions, tc);
    mod.boundary_ = q_mean(icm, transitions);
    mod.icm_ = std::move(icm);
    mod.training_size_ = transitions.size();
    return mod;
}

double ApfModulator::raw_feedback(const Observation& frame, Action action, const Observation& next_frame) const {
    if (config_.backend == ApfBackend::CTS) {
        if (!density_) throw ContractViolation("APF modulator is not trained");
        return cts_feedback(density_->log_prob(next_frame), boundary_, config_.beta);
    }
    if (!icm_) throw ContractViolation("APF modulator is not trained");
    return icm_feedback(prediction_error(*icm_, frame, action, next_frame), boundary_, config_.beta);
}

double raw_feedback(const ApfModulator& mod, const Observation& frame, Action action, const Observation& next_frame) {
    return mod.raw_feedback(frame, action, next_frame);
}

double modulate(const ApfModulator& mod, CapLedger& ledger, double env_reward, const Observation& frame, Action action,
                const Observation& next_frame) {
    return env_reward + ledger.spend(mod.raw_feedback(frame, action, next_frame));
}

void ApfModulator::save(std::ostream& out) const {
    io::Writer w(out);
    w.header("PTAF", kApfVersion);
    const auto& c = config_;
    w.pod(static_cast<std::uint8_t>(c.backend));
    w.pod(c.beta);
    w.pod(c.pos_cap);
    w.pod(c.neg_cap);
    w.pod(static_cast<std::int32_t>(c.render.block));
    w.pod(static_cast<std::int32_t>(c.render.out_width));
    w.pod(static_cast<std::int32_t>(c.render.out_height));
    w.pod(static_cast<std::uint8_t>(c.filter));
    w.pod(static_cast<std::uint8_t>(c.estimator));
    w.pod(c.alpha);
    w.pod(static_cast<std::uint8_t>(c.encoder));
    w.pod(static_cast<std::int32_t>(c.icm_features));
    w.pod(static_cast<std::int32_t>(c.icm_hidden));
    w.pod(static_cast<std::int32_t>(c.icm_epochs));
    w.pod(c.icm_learning_rate);
    w.pod(c.icm_forward_weight);
    w.pod(c.icm_seed);
    w.pod(boundary_);
    w.pod(static_cast<std::uint64_t>(training_size_));
    if (c.backend == ApfBackend::CTS) {
        if (!density_) throw ContractViolation("cannot save an untrained modulator");
        density_->save(out);
    } else {
        if (!icm_) throw ContractViolation("cannot save an untrained modulator");
        icm_->save(out);
    }
}

ApfModulator ApfModulator::load(std::istream& in) {
    io::Reader r(in);
    r.header("PTAF", kApfVersion);
    ApfModulator m;
    auto& c = m.config_;
    const auto backend = r.pod<std::uint8_t>();
    if (backend > 1) throw FormatError("unknown APF backend tag");
    c.backend = static_cast<ApfBackend>(backend);
    c.beta = r.pod<double>();
    c.pos_cap = r.pod<double>();
    c.neg_cap = r.pod<double>();
    c.render.block = r.pod<std::int32_t>();
    c.render.out_width = r.pod<std::int32_t>();
    c.render.out_height = r.pod<std::int32_t>();
    c.filter = static_cast<FilterShape>(r.pod<std::uint8_t>());
    c.estimator = static_cast<EstimatorKind>(r.pod<std::uint8_t>());
    c.alpha = r.pod<double>();
    c.encoder = static_cast<EncoderMode>(r.pod<std::uint8_t>());
    c.icm_features = r.pod<std::int32_t>();
    c.icm_hidden = r.pod<std::int32_t>();
    c.icm_epochs = r.pod<std::int32_t>();
    c.icm_learning_rate = r.pod<double>();
    c.icm_forward_weight = r.pod<double>();
    c.icm_seed = r.pod<std::uint64_t>();
    m.boundary_ = r.pod<double>();
    m.training_size_ = static_cast<std::size_t>(r.pod<std::uint64_t>());
    if (c.backend == ApfBackend::CTS)
        m.density_ = DensityModel::load(in);
    else
        m.icm_ = Icm::load(in);
    return m;
}

void ApfModulator::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    save(out);
    if (!out) throw IoError("write failed for " + path);
}

ApfModulator ApfModulator::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return load(in);
}

bool ApfModulator::operator==(const ApfModulator& o) const {
    return config_ == o.config_ && boundary_ == o.boundary_ && training_size_ == o.training_size_ &&
           density_ == o.density_ && icm_ == o.icm_;
}

}  // namespace playtest
