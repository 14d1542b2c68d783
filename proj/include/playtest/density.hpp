#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "playtest/dungeon.hpp"

namespace playtest {

enum class FilterShape { LShaped, PlusShaped, Custom };

const char* to_string(FilterShape s);
FilterShape filter_shape_from_string(std::string_view s);

// Relative pixel offsets that form the prediction context of a pixel. Offsets
// are ordered: a context tree of depth d conditions on the first d of them.
struct ContextFilter {
    FilterShape shape = FilterShape::PlusShaped;
    std::vector<std::pair<int, int>> offsets;  // (dx, dy)

    // left, up-left, up
    static ContextFilter l_shaped();
    // left, up, up-left, up-right
    static ContextFilter plus_shaped();
    static ContextFilter custom(std::vector<std::pair<int, int>> offsets);
    static ContextFilter from_shape(FilterShape shape);

    // Every offset precedes the pixel in raster order.
    bool is_causal() const;
    bool operator==(const ContextFilter&) const = default;
};

enum class EstimatorKind {
    // One Dirichlet estimator per (position, full context).
    LaplaceTable,
    // Context tree over growing context prefixes with switching mixtures.
    SwitchingTree,
};

const char* to_string(EstimatorKind k);
EstimatorKind estimator_from_string(std::string_view s);

struct DensityConfig {
    int width = 0;
    int height = 0;
    ContextFilter filter = ContextFilter::plus_shaped();
    EstimatorKind estimator = EstimatorKind::SwitchingTree;
    // Dirichlet pseudo-count per symbol; 1/8 spreads one unit of prior mass.
    double alpha = 0.125;

    bool operator==(const DensityConfig&) const = default;
};

inline constexpr int kSymbols = 8;
// Context symbol used for neighbours outside the frame.
inline constexpr std::uint8_t kBoundarySymbol = 8;

// Per-pixel context-tree density over 3-bit frames. Probabilities are kept in
// log space; a frame's recoding probability is the product of its pixel
// probabilities.
class DensityModel {
public:
    DensityModel() = default;
    explicit DensityModel(DensityConfig config);

    const DensityConfig& config() const { return config_; }
    std::uint64_t frames_trained() const { return frames_trained_; }
    std::size_t node_count() const { return nodes_.size(); }

    void update(const Observation& frame);
    double log_prob(const Observation& frame) const;
    // Log probability the frame would receive right after update(frame),
    // computed without touching the model.
    double log_prob_after_update(const Observation& frame) const;

    void save(std::ostream& out) const;
    static DensityModel load(std::istream& in);

    bool operator==(const DensityModel& other) const;

private:
    struct Node {
        std::array<std::uint32_t, kSymbols> counts{};
        std::uint32_t total = 0;
        double w_estimator = 0.5;  // posterior weight of this node's own estimator

        bool operator==(const Node&) const = default;
    };

    void check_dims(const Observation& frame) const;
    std::uint8_t context_symbol(const Observation& frame, int x, int y, std::size_t k) const;
    std::uint64_t key(int pos, int depth, const std::array<std::uint8_t, 16>& ctx) const;
    double estimator_prob(const Node* n, int symbol) const;
    double switch_rate(const Node* n) const;

    // Pixel probability before / after a (virtual) update.
    std::pair<double, double> pixel_probs(const Observation& frame, int x, int y) const;
    void update_pixel(const Observation& frame, int x, int y);

    DensityConfig config_;
    std::unordered_map<std::uint64_t, Node> nodes_;
    std::uint64_t frames_trained_ = 0;
};

// Convenience wrappers mirroring the module operations.
inline void update(DensityModel& model, const Observation& frame) { model.update(frame); }
inline double recoding_log_prob(const DensityModel& model, const Observation& frame) { return model.log_prob(frame); }

// Pseudo-count N = p (1 - p') / (p' - p) from the probability before (p) and
// after (p') a virtual update. Infinite when the model does not learn.
double pseudo_count(double log_p, double log_p_after);

// Count-based exploration bonus beta / sqrt(N + 0.01). Trains the model on
// the frame as a side effect (the model keeps learning the visited frames).
double pseudo_count_bonus(DensityModel& model, const Observation& frame, double beta);

}  // namespace playtest
