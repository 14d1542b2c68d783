#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "playtest/density.hpp"
#include "playtest/dynamics.hpp"

namespace playtest {

enum class ApfBackend { CTS, ICM };

const char* to_string(ApfBackend b);
ApfBackend apf_backend_from_string(std::string_view s);

struct APFConfig {
    ApfBackend backend = ApfBackend::CTS;
    double beta = 0.01;
    double pos_cap = 0.4;
    double neg_cap = -0.4;
    // Frames handed to the backend are rendered with this config.
    RenderConfig render{};

    // CTS backend
    FilterShape filter = FilterShape::LShaped;
    EstimatorKind estimator = EstimatorKind::SwitchingTree;
    double alpha = 0.125;

    // ICM backend
    EncoderMode encoder = EncoderMode::FixedRandomProjection;
    int icm_features = 64;
    int icm_hidden = 64;
    int icm_epochs = 300;
    double icm_learning_rate = 1e-3;
    double icm_forward_weight = 0.8;
    std::uint64_t icm_seed = 0;

    // Defaults per backend: pos_cap 0.4 for CTS, 0.1 for ICM.
    static APFConfig defaults(ApfBackend backend);
    void validate() const;
    bool operator==(const APFConfig&) const = default;
};

// Remaining per-episode feedback budget.
class CapLedger {
public:
    CapLedger() = default;
    explicit CapLedger(const APFConfig& config) { reset(config); }

    void reset(const APFConfig& config) {
        pos_cap_ = config.pos_cap;
        pos_remaining_ = config.pos_cap;
        neg_remaining_ = config.neg_cap;
    }
    double pos_remaining() const { return pos_remaining_; }
    double neg_remaining() const { return neg_remaining_; }
    // Remaining positive budget quantised to 0..bins; 0 means exhausted.
    int pos_bin(int bins) const;

    // Clamp raw against the matching budget and spend what is emitted.
    double spend(double raw);

private:
    double pos_cap_ = 0.0;
    double pos_remaining_ = 0.0;
    double neg_remaining_ = 0.0;
};

// Half-open [start, end) ranges excluded from APF training. For the CTS
// backend indices address frames (0..steps), for ICM they address
// transitions (0..steps-1).
struct TrajectoryMask {
    std::vector<std::pair<int, int>> ranges;

    bool excludes(int index) const;
    // Sorted, non-empty, non-overlapping, within [0, length].
    void validate(int length) const;
};

// Frames and actions of one trajectory: frames.size() == actions.size() + 1.
struct FrameSequence {
    std::vector<Observation> frames;
    std::vector<Action> actions;
};

class ApfModulator {
public:
    ApfModulator() = default;

    const APFConfig& config() const { return config_; }
    ApfBackend backend() const { return config_.backend; }
    // log p_min for CTS, q_mean for ICM.
    double boundary() const { return boundary_; }
    const DensityModel& density() const { return *density_; }
    const Icm& icm() const { return *icm_; }
    std::size_t training_size() const { return training_size_; }

    // Pure; never mutates the backend.
    double raw_feedback(const Observation& frame, Action action, const Observation& next_frame) const;

    void save(std::ostream& out) const;
    static ApfModulator load(std::istream& in);
    void save_file(const std::string& path) const;
    static ApfModulator load_file(const std::string& path);

    bool operator==(const ApfModulator& o) const;

private:
    friend ApfModulator train_apf(const APFConfig&, const std::vector<FrameSequence>&, const std::vector<TrajectoryMask>&,
                                  const std::optional<FeatureEncoder>&);

    APFConfig config_;
    std::optional<DensityModel> density_;
    std::optional<Icm> icm_;
    double boundary_ = 0.0;
    std::size_t training_size_ = 0;
};

// masks may be empty (nothing excluded) or one per sequence. A transferred
// encoder is required when config.encoder == Transferred.
ApfModulator train_apf(const APFConfig& config, const std::vector<FrameSequence>& sequences,
                       const std::vector<TrajectoryMask>& masks = {},
                       const std::optional<FeatureEncoder>& transferred = std::nullopt);

// feedback for x = log(p_new / p_min): penalty above the boundary, reward below.
double cts_feedback(double log_p_new, double log_p_min, double beta);
// feedback for q_new against q_mean: reward above the boundary, penalty below.
double icm_feedback(double q_new, double q_mean, double beta);

inline constexpr double kIcmErrorFloor = 1e-12;

double raw_feedback(const ApfModulator& mod, const Observation& frame, Action action, const Observation& next_frame);
inline double capped_feedback(CapLedger& ledger, double raw) { return ledger.spend(raw); }
double modulate(const ApfModulator& mod, CapLedger& ledger, double env_reward, const Observation& frame, Action action,
                const Observation& next_frame);

}  // namespace playtest
