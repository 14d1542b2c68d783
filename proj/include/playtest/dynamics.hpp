#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "playtest/dungeon.hpp"

namespace playtest {

enum class EncoderMode { FixedRandomProjection, IdentityDownsample, Transferred };
enum class Activation { Linear, Tanh };

const char* to_string(EncoderMode m);
EncoderMode encoder_mode_from_string(std::string_view s);

// Frozen map from a frame to a feature vector. There is no API that changes
// the weights after construction.
class FeatureEncoder {
public:
    FeatureEncoder() = default;

    static FeatureEncoder random_projection(int frame_width, int frame_height, int output_dim, std::uint64_t seed);
    // Area-averaged downsample to out_width x out_height, scaled to [0, 1].
    static FeatureEncoder identity_downsample(int frame_width, int frame_height, int out_width, int out_height);
    // Weights taken from another network (e.g. the first layer of a trained
    // policy). weights is output_dim x (frame_width * frame_height).
    static FeatureEncoder transferred(int frame_width, int frame_height, Eigen::MatrixXd weights, Eigen::VectorXd bias,
                                      Activation activation);

    Eigen::VectorXd encode(const Observation& frame) const;
    Eigen::MatrixXd encode_batch(const std::vector<const Observation*>& frames) const;

    EncoderMode mode() const { return mode_; }
    int output_dim() const { return output_dim_; }
    int frame_width() const { return frame_width_; }
    int frame_height() const { return frame_height_; }
    bool frozen() const { return true; }
    std::uint64_t seed() const { return seed_; }

    void save(std::ostream& out) const;
    static FeatureEncoder load(std::istream& in);
    bool operator==(const FeatureEncoder& other) const;

private:
    void check_dims(const Observation& frame) const;

    EncoderMode mode_ = EncoderMode::FixedRandomProjection;
    int frame_width_ = 0;
    int frame_height_ = 0;
    int output_dim_ = 0;
    int down_width_ = 0;
    int down_height_ = 0;
    std::uint64_t seed_ = 0;
    Activation activation_ = Activation::Linear;
    Eigen::MatrixXd weights_;
    Eigen::VectorXd bias_;
};

// One hidden tanh layer followed by a linear output layer. Batches are
// column-major: one sample per column.
struct Mlp {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;

    static Mlp init(int in, int hidden, int out, Rng& rng);

    int input_dim() const { return static_cast<int>(w1.cols()); }
    int output_dim() const { return static_cast<int>(w2.rows()); }
    std::size_t parameter_count() const { return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size()); }

    struct Cache {
        Eigen::MatrixXd input;
        Eigen::MatrixXd hidden;  // post-activation
        Eigen::MatrixXd output;
    };
    Cache forward(const Eigen::MatrixXd& x) const;
    // Gradient of the loss w.r.t. the flat parameters given dL/d(output).
    Eigen::VectorXd backward(const Cache& cache, const Eigen::MatrixXd& d_output) const;

    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& flat);

    bool operator==(const Mlp& o) const { return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2; }
};

struct Transition {
    Observation frame;
    Action action = Action::NoOp;
    Observation next_frame;
};

struct IcmConfig {
    int hidden = 64;
    double forward_weight = 0.8;  // inverse gets 1 - forward_weight
    std::uint64_t seed = 0;
};

// Forward/inverse dynamics pair over a frozen encoder.
struct Icm {
    FeatureEncoder encoder;
    Mlp forward_model;   // [phi(s); onehot(a)] -> phi(s')
    Mlp inverse_model;   // [phi(s); phi(s')] -> action logits
    double forward_weight = 0.8;

    static Icm create(FeatureEncoder encoder, const IcmConfig& config);

    Eigen::VectorXd predict_next(const Eigen::VectorXd& features, Action a) const;

    void save(std::ostream& out) const;
    static Icm load(std::istream& in);
    bool operator==(const Icm& o) const {
        return encoder == o.encoder && forward_model == o.forward_model && inverse_model == o.inverse_model &&
               forward_weight == o.forward_weight;
    }
};

// Encoded transitions; the encoder is frozen so features are computed once.
struct FeatureBatch {
    Eigen::MatrixXd features;       // dim x B
    Eigen::MatrixXd next_features;  // dim x B
    std::vector<int> actions;

    int size() const { return static_cast<int>(actions.size()); }
};

FeatureBatch encode_transitions(const FeatureEncoder& encoder, const std::vector<Transition>& transitions);

struct IcmLoss {
    double total = 0.0;
    double forward = 0.0;  // mean 0.5 * ||pred - phi'||^2
    double inverse = 0.0;  // mean cross-entropy
    Eigen::VectorXd forward_grad;
    Eigen::VectorXd inverse_grad;
};

IcmLoss icm_loss(const Icm& icm, const FeatureBatch& batch, bool with_gradients = true);

struct IcmTrainConfig {
    int epochs = 200;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int batch_size = 0;  // 0 = full batch
    std::uint64_t seed = 0;
};

// Per-epoch mean total loss. The encoder is never touched.
std::vector<double> train_icm(Icm& icm, const std::vector<Transition>& transitions, const IcmTrainConfig& config);

// q = || forward(phi(f), a) - phi(f_next) ||^2
double prediction_error(const Icm& icm, const Observation& frame, Action action, const Observation& next_frame);
double q_mean(const Icm& icm, const std::vector<Transition>& transitions);
double curiosity_bonus(double q, double beta);

}  // namespace playtest
