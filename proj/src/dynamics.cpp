#include "playtest/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "playtest/binary_io.hpp"

namespace playtest {

namespace {

constexpr std::uint32_t kIcmVersion = 1;

void write_matrix(io::Writer& w, const Eigen::MatrixXd& m) {
    w.pod(static_cast<std::int64_t>(m.rows()));
    w.pod(static_cast<std::int64_t>(m.cols()));
    std::vector<double> flat(m.data(), m.data() + m.size());
    w.vector(flat);
}

Eigen::MatrixXd read_matrix(io::Reader& r) {
    const auto rows = r.pod<std::int64_t>();
    const auto cols = r.pod<std::int64_t>();
    auto flat = r.vector<double>();
    if (rows < 0 || cols < 0 || static_cast<std::int64_t>(flat.size()) != rows * cols)
        throw FormatError("tensor shape does not match its data");
    return Eigen::Map<Eigen::MatrixXd>(flat.data(), rows, cols);
}

void write_mlp(io::Writer& w, const Mlp& m) {
    write_matrix(w, m.w1);
    write_matrix(w, m.b1);
    write_matrix(w, m.w2);
    write_matrix(w, m.b2);
}

Mlp read_mlp(io::Reader& r) {
    Mlp m;
    m.w1 = read_matrix(r);
    m.b1 = read_matrix(r);
    m.w2 = read_matrix(r);
    m.b2 = read_matrix(r);
    if (m.b1.size() != m.w1.rows() || m.w2.cols() != m.w1.rows() || m.b2.size() != m.w2.rows())
        throw FormatError("inconsistent network shapes");
    return m;
}

Eigen::VectorXd frame_vector(const Observation& frame) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(frame.pixels.size()));
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) x[static_cast<Eigen::Index>(i)] = frame.pixels[i] / 7.0;
    return x;
}

}  // namespace

const char* to_string(EncoderMode m) {
    switch (m) {
        case EncoderMode::FixedRandomProjection: return "FixedRandomProjection";
        case EncoderMode::IdentityDownsample: return "IdentityDownsample";
        case EncoderMode::Transferred: return "Transferred";
    }
    return "?";
}

EncoderMode encoder_mode_from_string(std::string_view s) {
    if (s == "FixedRandomProjection" || s == "random") return EncoderMode::FixedRandomProjection;
    if (s == "IdentityDownsample" || s == "downsample") return EncoderMode::IdentityDownsample;
    if (s == "Transferred" || s == "transfer") return EncoderMode::Transferred;
    throw ValidationError("unknown encoder mode '" + std::string(s) + "'");
}

FeatureEncoder FeatureEncoder::random_projection(int frame_width, int frame_height, int output_dim, std::uint64_t seed) {
    if (frame_width <= 0 || frame_height <= 0 || output_dim <= 0) throw ValidationError("encoder dims must be positive");
    FeatureEncoder e;
    e.mode_ = EncoderMode::FixedRandomProjection;
    e.frame_width_ = frame_width;
    e.frame_height_ = frame_height;
    e.output_dim_ = output_dim;
    e.seed_ = seed;
    const int in = frame_width * frame_height;
    Rng rng(seed);
    e.weights_.resize(output_dim, in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index j = 0; j < e.weights_.cols(); ++j)
        for (Eigen::Index i = 0; i < e.weights_.rows(); ++i) e.weights_(i, j) = rng.normal() * scale;
    e.bias_ = Eigen::VectorXd::Zero(output_dim);
    return e;
}

FeatureEncoder FeatureEncoder::identity_downsample(int frame_width, int frame_height, int out_width, int out_height) {
    if (frame_width <= 0 || frame_height <= 0 || out_width <= 0 || out_height <= 0)
        throw ValidationError("encoder dims must be positive");
    FeatureEncoder e;
    e.mode_ = EncoderMode::IdentityDownsample;
    e.frame_width_ = frame_width;
    e.frame_height_ = frame_height;
    e.down_width_ = out_width;
    e.down_height_ = out_height;
    e.output_dim_ = out_width * out_height;
    return e;
}

FeatureEncoder FeatureEncoder::transferred(int frame_width, int frame_height, Eigen::MatrixXd weights,
                                           Eigen::VectorXd bias, Activation activation) {
    if (weights.cols() != static_cast<Eigen::Index>(frame_width) * frame_height)
        throw DimensionError("transferred weights do not match the frame size");
    if (bias.size() != weights.rows()) throw DimensionError("transferred bias does not match the weights");
    FeatureEncoder e;
    e.mode_ = EncoderMode::Transferred;
    e.frame_width_ = frame_width;
    e.frame_height_ = frame_height;
    e.output_dim_ = static_cast<int>(weights.rows());
    e.activation_ = activation;
    e.weights_ = std::move(weights);
    e.bias_ = std::move(bias);
    return e;
}

void FeatureEncoder::check_dims(const Observation& frame) const {
    if (frame.width != frame_width_ || frame.height != frame_height_)
        throw DimensionError("frame is " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                             ", encoder expects " + std::to_string(frame_width_) + "x" + std::to_string(frame_height_));
}

Eigen::VectorXd FeatureEncoder::encode(const Observation& frame) const {
    check_dims(frame);
    if (mode_ == EncoderMode::IdentityDownsample) {
        const auto small = resize_observation(frame, down_width_, down_height_);
        return frame_vector(small);
    }
    Eigen::VectorXd z = weights_ * frame_vector(frame) + bias_;
    if (activation_ == Activation::Tanh) z = z.array().tanh().matrix();
    return z;
}

Eigen::MatrixXd FeatureEncoder::encode_batch(const std::vector<const Observation*>& frames) const {
    Eigen::MatrixXd out(output_dim_, static_cast<Eigen::Index>(frames.size()));
    for (std::size_t i = 0; i < frames.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = encode(*frames[i]);
    return out;
}

void FeatureEncoder::save(std::ostream& out) const {
    io::Writer w(out);
    w.header("PTFE", kIcmVersion);
    w.pod(static_cast<std::uint8_t>(mode_));
    w.pod(static_cast<std::int32_t>(frame_width_));
    w.pod(static_cast<std::int32_t>(frame_height_));
    w.pod(static_cast<std::int32_t>(output_dim_));
    w.pod(static_cast<std::int32_t>(down_width_));
    w.pod(static_cast<std::int32_t>(down_height_));
    w.pod(seed_);
    w.pod(static_cast<std::uint8_t>(activation_));
    write_matrix(w, weights_);
    write_matrix(w, bias_);
}

FeatureEncoder FeatureEncoder::load(std::istream& in) {
    io::Reader r(in);
    r.header("PTFE", kIcmVersion);
    FeatureEncoder e;
    e.mode_ = static_cast<EncoderMode>(r.pod<std::uint8_t>());
    e.frame_width_ = r.pod<std::int32_t>();
    e.frame_height_ = r.pod<std::int32_t>();
    e.output_dim_ = r.pod<std::int32_t>();
    e.down_width_ = r.pod<std::int32_t>();
    e.down_height_ = r.pod<std::int32_t>();
    e.seed_ = r.pod<std::uint64_t>();
    e.activation_ = static_cast<Activation>(r.pod<std::uint8_t>());
    e.weights_ = read_matrix(r);
    Eigen::MatrixXd b = read_matrix(r);
    e.bias_ = Eigen::Map<Eigen::VectorXd>(b.data(), b.size());
    return e;
}

bool FeatureEncoder::operator==(const FeatureEncoder& o) const {
    return mode_ == o.mode_ && frame_width_ == o.frame_width_ && frame_height_ == o.frame_height_ &&
           output_dim_ == o.output_dim_ && down_width_ == o.down_width_ && down_height_ == o.down_height_ &&
           seed_ == o.seed_ && activation_ == o.activation_ && weights_.rows() == o.weights_.rows() &&
           weights_.cols() == o.weights_.cols() && weights_ == o.weights_ && bias_.size() == o.bias_.size() &&
           bias_ == o.bias_;
}

Mlp Mlp::init(int in, int hidden, int out, Rng& rng) {
    auto xavier = [&](int rows, int cols) {
        Eigen::MatrixXd m(rows, cols);
        const double s = std::sqrt(6.0 / (rows + cols));
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = (2.0 * rng.uniform() - 1.0) * s;
        return m;
    };
    Mlp m;
    m.w1 = xavier(hidden, in);
    m.b1 = Eigen::VectorXd::Zero(hidden);
    m.w2 = xavier(out, hidden);
    m.b2 = Eigen::VectorXd::Zero(out);
    return m;
}

Mlp::Cache Mlp::forward(const Eigen::MatrixXd& x) const {
    Cache c;
    c.input = x;
    c.hidden = ((w1 * x).colwise() + b1).array().tanh().matrix();
    c.output = (w2 * c.hidden).colwise() + b2;
    return c;
}

Eigen::VectorXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& d_output) const {
    const Eigen::MatrixXd d_w2 = d_output * cache.hidden.transpose();
    const Eigen::VectorXd d_b2 = d_output.rowwise().sum();
    const Eigen::MatrixXd d_hidden = (w2.transpose() * d_output).array() * (1.0 - cache.hidden.array().square());
    const Eigen::MatrixXd d_w1 = d_hidden * cache.input.transpose();
    const Eigen::VectorXd d_b1 = d_hidden.rowwise().sum();
    Eigen::VectorXd g(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index o = 0;
    g.segment(o, d_w1.size()) = Eigen::Map<const Eigen::VectorXd>(d_w1.data(), d_w1.size());
    o += d_w1.size();
    g.segment(o, d_b1.size()) = d_b1;
    o += d_b1.size();
    g.segment(o, d_w2.size()) = Eigen::Map<const Eigen::VectorXd>(d_w2.data(), d_w2.size());
    o += d_w2.size();
    g.segment(o, d_b2.size()) = d_b2;
    return g;
}

Eigen::VectorXd Mlp::parameters() const {
    Eigen::VectorXd p(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index o = 0;
    p.segment(o, w1.size()) = Eigen::Map<const Eigen::VectorXd>(w1.data(), w1.size());
    o += w1.size();
    p.segment(o, b1.size()) = b1;
    o += b1.size();
    p.segment(o, w2.size()) = Eigen::Map<const Eigen::VectorXd>(w2.data(), w2.size());
    o += w2.size();
    p.segment(o, b2.size()) = b2;
    return p;
}

void Mlp::set_parameters(const Eigen::VectorXd& flat) {
    if (flat.size() != static_cast<Eigen::Index>(parameter_count())) throw DimensionError("parameter vector size mismatch");
    Eigen::Index o = 0;
    Eigen::Map<Eigen::VectorXd>(w1.data(), w1.size()) = flat.segment(o, w1.size());
    o += w1.size();
    b1 = flat.segment(o, b1.size());
    o += b1.size();
    Eigen::Map<Eigen::VectorXd>(w2.data(), w2.size()) = flat.segment(o, w2.size());
    o += w2.size();
    b2 = flat.segment(o, b2.size());
}

Icm Icm::create(FeatureEncoder encoder, const IcmConfig& config) {
    if (config.hidden <= 0) throw ValidationError("ICM hidden width must be positive");
    if (config.forward_weight < 0.0 || config.forward_weight > 1.0) throw ValidationError("forward_weight outside [0, 1]");
    Rng rng(config.seed);
    Icm icm;
    const int dim = encoder.output_dim();
    icm.forward_model = Mlp::init(dim + kNumActions, config.hidden, dim, rng);
    icm.inverse_model = Mlp::init(2 * dim, config.hidden, kNumActions, rng);
    icm.forward_weight = config.forward_weight;
    icm.encoder = std::move(encoder);
    return icm;
}

Eigen::VectorXd Icm::predict_next(const Eigen::VectorXd& features, Action a) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(features.size() + kNumActions);
    x.head(features.size()) = features;
    x[features.size() + index_of(a)] = 1.0;
    return forward_model.forward(x).output.col(0);
}

void Icm::save(std::ostream& out) const {
    encoder.save(out);
    io::Writer w(out);
    w.header("PTIC", kIcmVersion);
    w.pod(forward_weight);
    write_mlp(w, forward_model);
    write_mlp(w, inverse_model);
}

Icm Icm::load(std::istream& in) {
    Icm icm;
    icm.encoder = FeatureEncoder::load(in);
    io::Reader r(in);
    r.header("PTIC", kIcmVersion);
    icm.forward_weight = r.pod<double>();
    icm.forward_model = read_mlp(r);
    icm.inverse_model = read_mlp(r);
    const int dim = icm.encoder.output_dim();
    if (icm.forward_model.input_dim() != dim + kNumActions || icm.forward_model.output_dim() != dim ||
        icm.inverse_model.input_dim() != 2 * dim || icm.inverse_model.output_dim() != kNumActions)
        throw FormatError("ICM network shapes do not match the encoder");
    return icm;
}

FeatureBatch encode_transitions(const FeatureEncoder& encoder, const std::vector<Transition>& transitions) {
    FeatureBatch b;
    const auto n = static_cast<Eigen::Index>(transitions.size());
    b.features.resize(encoder.output_dim(), n);
    b.next_features.resize(encoder.output_dim(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = transitions[static_cast<std::size_t>(i)];
        b.features.col(i) = encoder.encode(t.frame);
        b.next_features.col(i) = encoder.encode(t.next_frame);
        b.actions.push_back(index_of(t.action));
    }
    return b;
}

namespace {

FeatureBatch select(const FeatureBatch& all, const std::vector<int>& idx) {
    FeatureBatch b;
    b.features.resize(all.features.rows(), static_cast<Eigen::Index>(idx.size()));
    b.next_features.resize(all.next_features.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        b.features.col(static_cast<Eigen::Index>(i)) = all.features.col(idx[i]);
        b.next_features.col(static_cast<Eigen::Index>(i)) = all.next_features.col(idx[i]);
        b.actions.push_back(all.actions[static_cast<std::size_t>(idx[i])]);
    }
    return b;
}

}  // namespace

IcmLoss icm_loss(const Icm& icm, const FeatureBatch& batch, bool with_gradients) {
    const Eigen::Index n = batch.size();
    if (n == 0) throw ValidationError("empty ICM batch");
    const Eigen::Index dim = batch.features.rows();

    Eigen::MatrixXd fwd_in = Eigen::MatrixXd::Zero(dim + kNumActions, n);
    fwd_in.topRows(dim) = batch.features;
    for (Eigen::Index i = 0; i < n; ++i) fwd_in(dim + batch.actions[static_cast<std::size_t>(i)], i) = 1.0;
    const auto fwd = icm.forward_model.forward(fwd_in);
    const Eigen::MatrixXd diff = fwd.output - batch.next_features;

    Eigen::MatrixXd inv_in(2 * dim, n);
    inv_in.topRows(dim) = batch.features;
    inv_in.bottomRows(dim) = batch.next_features;
    const auto inv = icm.inverse_model.forward(inv_in);
    // softmax cross-entropy, column-wise with max-shift
    Eigen::MatrixXd probs(kNumActions, n);
    double ce = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd logits = inv.output.col(i);
        const double m = logits.maxCoeff();
        const Eigen::VectorXd e = (logits.array() - m).exp();
        const double z = e.sum();
        probs.col(i) = e / z;
        ce -= (logits[batch.actions[static_cast<std::size_t>(i)]] - m) - std::log(z);
    }

    IcmLoss loss;
    const double inv_n = 1.0 / static_cast<double>(n);
    loss.forward = 0.5 * diff.squaredNorm() * inv_n;
    loss.inverse = ce * inv_n;
    const double wf = icm.forward_weight;
    const double wi = 1.0 - icm.forward_weight;
    loss.total = wf * loss.forward + wi * loss.inverse;
    if (!with_gradients) return loss;

    loss.forward_grad = icm.forward_model.backward(fwd, diff * (wf * inv_n));
    Eigen::MatrixXd d_logits = probs;
    for (Eigen::Index i = 0; i < n; ++i) d_logits(batch.actions[static_cast<std::size_t>(i)], i) -= 1.0;
    loss.inverse_grad = icm.inverse_model.backward(inv, d_logits * (wi * inv_n));
    return loss;
}

std::vector<double> train_icm(Icm& icm, const std::vector<Transition>& transitions, const IcmTrainConfig& config) {
    if (transitions.empty()) throw ValidationError("train_icm needs at least one transition");
    if (config.epochs < 0) throw ValidationError("epochs must be non-negative");
    std::vector<double> curve;
    if (config.epochs == 0) return curve;

    const FeatureBatch all = encode_transitions(icm.encoder, transitions);
    const int n = all.size();
    const int bs = config.batch_size <= 0 ? n : std::min(config.batch_size, n);
    Rng rng(config.seed);
    Eigen::VectorXd vel_f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(icm.forward_model.parameter_count()));
    Eigen::VectorXd vel_i = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(icm.inverse_model.parameter_count()));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (bs < n)
            for (int i = n - 1; i > 0; --i)
                std::swap(order[static_cast<std::size_t>(i)], order[rng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);
        double epoch_loss = 0.0;
        int batches = 0;
        for (int start = 0; start < n; start += bs) {
            const int end = std::min(n, start + bs);
            const FeatureBatch batch =
                bs == n ? all : select(all, std::vector<int>(order.begin() + start, order.begin() + end));
            const IcmLoss l = icm_loss(icm, batch);
            if (!std::isfinite(l.total)) throw DivergenceError("ICM loss became non-finite at epoch " + std::to_string(epoch));
            vel_f = config.momentum * vel_f - config.learning_rate * l.forward_grad;
            vel_i = config.momentum * vel_i - config.learning_rate * l.inverse_grad;
            icm.forward_model.set_parameters(icm.forward_model.parameters() + vel_f);
            icm.inverse_model.set_parameters(icm.inverse_model.parameters() + vel_i);
            epoch_loss += l.total;
            ++batches;
        }
        curve.push_back(epoch_loss / batches);
    }
    return curve;
}

double prediction_error(const Icm& icm, const Observation& frame, Action action, const Observation& next_frame) {
    const Eigen::VectorXd phi = icm.encoder.encode(frame);
    const Eigen::VectorXd phi_next = icm.encoder.encode(next_frame);
    return (icm.predict_next(phi, action) - phi_next).squaredNorm();
}

double q_mean(const Icm& icm, const std::vector<Transition>& transitions) {
    if (transitions.empty()) throw ValidationError("q_mean needs at least one transition");
    double sum = 0.0;
    for (const auto& t : transitions) sum += prediction_error(icm, t.frame, t.action, t.next_frame);
    return sum / static_cast<double>(transitions.size());
}

double curiosity_bonus(double q, double beta) {
    if (q < 0.0) throw ContractViolation("negative prediction error");
    return beta * q;
}

}  // namespace playtest
