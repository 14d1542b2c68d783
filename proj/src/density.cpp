#include "playtest/density.hpp"

#include <algorithm>
#include <cmath>

#include "playtest/binary_io.hpp"

namespace playtest {

namespace {
constexpr std::uint32_t kDensityVersion = 1;
constexpr std::size_t kMaxOffsets = 8;
}  // namespace

const char* to_string(FilterShape s) {
    switch (s) {
        case FilterShape::LShaped: return "LShaped";
        case FilterShape::PlusShaped: return "PlusShaped";
        case FilterShape::Custom: return "Custom";
    }
    return "?";
}

FilterShape filter_shape_from_string(std::string_view s) {
    if (s == "LShaped" || s == "l-shaped" || s == "L") return FilterShape::LShaped;
    if (s == "PlusShaped" || s == "plus-shaped" || s == "plus" || s == "+") return FilterShape::PlusShaped;
    if (s == "Custom") return FilterShape::Custom;
    throw ValidationError("unknown filter shape '" + std::string(s) + "'");
}

ContextFilter ContextFilter::l_shaped() { return {FilterShape::LShaped, {{-1, 0}, {-1, -1}, {0, -1}}}; }

ContextFilter ContextFilter::plus_shaped() { return {FilterShape::PlusShaped, {{-1, 0}, {0, -1}, {-1, -1}, {1, -1}}}; }

ContextFilter ContextFilter::custom(std::vector<std::pair<int, int>> offsets) {
    return {FilterShape::Custom, std::move(offsets)};
}

ContextFilter ContextFilter::from_shape(FilterShape shape) {
    switch (shape) {
        case FilterShape::LShaped: return l_shaped();
        case FilterShape::PlusShaped: return plus_shaped();
        case FilterShape::Custom: break;
    }
    throw ValidationError("custom filters need explicit offsets");
}

bool ContextFilter::is_causal() const {
    return std::all_of(offsets.begin(), offsets.end(), [](auto o) { return o.second < 0 || (o.second == 0 && o.first < 0); });
}

const char* to_string(EstimatorKind k) { return k == EstimatorKind::LaplaceTable ? "LaplaceTable" : "SwitchingTree"; }

EstimatorKind estimator_from_string(std::string_view s) {
    if (s == "LaplaceTable" || s == "table") return EstimatorKind::LaplaceTable;
    if (s == "SwitchingTree" || s == "tree") return EstimatorKind::SwitchingTree;
    throw ValidationError("unknown estimator '" + std::string(s) + "'");
}

DensityModel::DensityModel(DensityConfig config) : config_(std::move(config)) {
    if (config_.width <= 0 || config_.height <= 0) throw ValidationError("density model needs positive frame dims");
    if (config_.filter.offsets.empty()) throw ValidationError("context filter needs at least one offset");
    if (config_.filter.offsets.size() > kMaxOffsets) throw ValidationError("context filter has more than 8 offsets");
    if (!config_.filter.is_causal()) throw ValidationError("context filter must be causal in raster order");
    if (!(config_.alpha > 0.0)) throw ValidationError("alpha must be positive");
    if (static_cast<std::uint64_t>(config_.width) * static_cast<std::uint64_t>(config_.height) >= (1ULL << 27))
        throw ValidationError("frame too large for the density model");
}

void DensityModel::check_dims(const Observation& frame) const {
    if (frame.width != config_.width || frame.height != config_.height)
        throw DimensionError("frame is " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                             ", density model expects " + std::to_string(config_.width) + "x" +
                             std::to_string(config_.height));
}

std::uint8_t DensityModel::context_symbol(const Observation& frame, int x, int y, std::size_t k) const {
    const auto [dx, dy] = config_.filter.offsets[k];
    const int nx = x + dx, ny = y + dy;
    if (nx < 0 || ny < 0 || nx >= frame.width || ny >= frame.height) return kBoundarySymbol;
    return frame.at(nx, ny);
}

std::uint64_t DensityModel::key(int pos, int depth, const std::array<std::uint8_t, 16>& ctx) const {
    std::uint64_t bits = 0;
    for (int i = 0; i < depth; ++i) bits |= static_cast<std::uint64_t>(ctx[static_cast<std::size_t>(i)]) << (4 * i);
    return (static_cast<std::uint64_t>(pos) << 36) | (static_cast<std::uint64_t>(depth) << 32) | bits;
}

double DensityModel::estimator_prob(const Node* n, int symbol) const {
    const double a = config_.alpha;
    if (!n) return 1.0 / kSymbols;
    return (n->counts[static_cast<std::size_t>(symbol)] + a) / (n->total + kSymbols * a);
}

double DensityModel::switch_rate(const Node* n) const {
    const double visits = n ? n->total : 0.0;
    return 1.0 / (visits + 2.0);
}

std::pair<double, double> DensityModel::pixel_probs(const Observation& frame, int x, int y) const {
    const int depth_max = static_cast<int>(config_.filter.offsets.size());
    const int pos = y * config_.width + x;
    const int symbol = frame.at(x, y);
    std::array<std::uint8_t, 16> ctx{};
    for (int k = 0; k < depth_max; ++k) ctx[static_cast<std::size_t>(k)] = context_symbol(frame, x, y, static_cast<std::size_t>(k));

    auto find = [&](int depth) -> const Node* {
        auto it = nodes_.find(key(pos, depth, ctx));
        return it == nodes_.end() ? nullptr : &it->second;
    };

    const double a = config_.alpha;
    auto est_after = [&](const Node* n) {
        const double c = n ? n->counts[static_cast<std::size_t>(symbol)] : 0.0;
        const double t = n ? n->total : 0.0;
        return (c + 1.0 + a) / (t + 1.0 + kSymbols * a);
    };

    if (config_.estimator == EstimatorKind::LaplaceTable) {
        const Node* n = find(depth_max);
        return {estimator_prob(n, symbol), est_after(n)};
    }

    // Deepest node first; p / p_after are the mixture probabilities of the
    // subtree below the current depth.
    const Node* leaf = find(depth_max);
    double p = estimator_prob(leaf, symbol);
    double p_after = est_after(leaf);
    for (int d = depth_max - 1; d >= 0; --d) {
        const Node* n = find(d);
        const double w = n ? n->w_estimator : 0.5;
        const double est = estimator_prob(n, symbol);
        const double we = w * est;
        const double wc = (1.0 - w) * p;
        const double mix = we + wc;
        const double rate = switch_rate(n);
        const double w_new = ((1.0 - rate) * we + rate * wc) / mix;
        p_after = w_new * est_after(n) + (1.0 - w_new) * p_after;
        p = mix;
    }
    return {p, p_after};
}

void DensityModel::update_pixel(const Observation& frame, int x, int y) {
    const int depth_max = static_cast<int>(config_.filter.offsets.size());
    const int pos = y * config_.width + x;
    const int symbol = frame.at(x, y);
    std::array<std::uint8_t, 16> ctx{};
    for (int k = 0; k < depth_max; ++k) ctx[static_cast<std::size_t>(k)] = context_symbol(frame, x, y, static_cast<std::size_t>(k));

    auto bump = [&](Node& n) {
        ++n.counts[static_cast<std::size_t>(symbol)];
        ++n.total;
    };

    if (config_.estimator == EstimatorKind::LaplaceTable) {
        bump(nodes_[key(pos, depth_max, ctx)]);
        return;
    }

    Node& leaf = nodes_[key(pos, depth_max, ctx)];
    double p_child = estimator_prob(&leaf, symbol);
    bump(leaf);
    for (int d = depth_max - 1; d >= 0; --d) {
        Node& n = nodes_[key(pos, d, ctx)];
        const double est = estimator_prob(&n, symbol);
        const double we = n.w_estimator * est;
        const double wc = (1.0 - n.w_estimator) * p_child;
        const double mix = we + wc;
        const double rate = switch_rate(&n);
        n.w_estimator = ((1.0 - rate) * we + rate * wc) / mix;
        bump(n);
        p_child = mix;
    }
}

void DensityModel::update(const Observation& frame) {
    check_dims(frame);
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x) update_pixel(frame, x, y);
    ++frames_trained_;
}

double DensityModel::log_prob(const Observation& frame) const {
    check_dims(frame);
    double lp = 0.0;
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x) lp += std::log(pixel_probs(frame, x, y).first);
    return lp;
}

double DensityModel::log_prob_after_update(const Observation& frame) const {
    check_dims(frame);
    double lp = 0.0;
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x) lp += std::log(pixel_probs(frame, x, y).second);
    return lp;
}

void DensityModel::save(std::ostream& out) const {
    io::Writer w(out);
    w.header("PTDM", kDensityVersion);
    w.pod(static_cast<std::int32_t>(config_.width));
    w.pod(static_cast<std::int32_t>(config_.height));
    w.pod(static_cast<std::uint8_t>(config_.filter.shape));
    w.pod(static_cast<std::uint32_t>(config_.filter.offsets.size()));
    for (auto [dx, dy] : config_.filter.offsets) {
        w.pod(static_cast<std::int32_t>(dx));
        w.pod(static_cast<std::int32_t>(dy));
    }
    w.pod(static_cast<std::uint8_t>(config_.estimator));
    w.pod(config_.alpha);
    w.pod(frames_trained_);

    std::vector<std::uint64_t> keys;
    keys.reserve(nodes_.size());
    for (const auto& [k, n] : nodes_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    w.pod(static_cast<std::uint64_t>(keys.size()));
    for (auto k : keys) {
        const Node& n = nodes_.at(k);
        w.pod(k);
        w.pod(n.counts);
        w.pod(n.total);
        w.pod(n.w_estimator);
    }
}

DensityModel DensityModel::load(std::istream& in) {
    io::Reader r(in);
    r.header("PTDM", kDensityVersion);
    DensityConfig cfg;
    cfg.width = r.pod<std::int32_t>();
    cfg.height = r.pod<std::int32_t>();
    cfg.filter.shape = static_cast<FilterShape>(r.pod<std::uint8_t>());
    const auto n_off = r.pod<std::uint32_t>();
    if (n_off > kMaxOffsets) throw FormatError("corrupt filter");
    cfg.filter.offsets.clear();
    for (std::uint32_t i = 0; i < n_off; ++i) {
        const int dx = r.pod<std::int32_t>();
        const int dy = r.pod<std::int32_t>();
        cfg.filter.offsets.emplace_back(dx, dy);
    }
    cfg.estimator = static_cast<EstimatorKind>(r.pod<std::uint8_t>());
    cfg.alpha = r.pod<double>();
    DensityModel model(cfg);
    model.frames_trained_ = r.pod<std::uint64_t>();
    const auto count = r.pod<std::uint64_t>();
    model.nodes_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto k = r.pod<std::uint64_t>();
        Node n;
        n.counts = r.pod<std::array<std::uint32_t, kSymbols>>();
        n.total = r.pod<std::uint32_t>();
        n.w_estimator = r.pod<double>();
        model.nodes_.emplace(k, n);
    }
    return model;
}

bool DensityModel::operator==(const DensityModel& other) const {
    return config_ == other.config_ && frames_trained_ == other.frames_trained_ && nodes_ == other.nodes_;
}

double pseudo_count(double log_p, double log_p_after) {
    const double gain = log_p_after - log_p;
    if (!(gain > 0.0)) return std::numeric_limits<double>::infinity();
    // p (1 - p') / (p' - p) = (1 - p') / (p'/p - 1)
    const double one_minus = -std::expm1(log_p_after);
    const double ratio_minus_one = std::expm1(gain);
    if (std::isinf(ratio_minus_one)) return 0.0;
    return one_minus / ratio_minus_one;
}

double pseudo_count_bonus(DensityModel& model, const Observation& frame, double beta) {
    const double lp = model.log_prob(frame);
    const double lp_after = model.log_prob_after_update(frame);
    model.update(frame);
    if (beta == 0.0) return 0.0;
    const double n = pseudo_count(lp, lp_after);
    if (std::isinf(n)) return 0.0;
    return beta / std::sqrt(n + 0.01);
}

}  // namespace playtest
