#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmtax/behavior.hpp"
#include "swarmtax/render.hpp"
#include "swarmtax/rng.hpp"

namespace swarmtax {

enum class LayerKind { conv, dense };

/// One layer of the embedding network. Convolutions take square inputs.
struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    int in = 0;   // channels (conv) or features (dense)
    int out = 0;  // channels (conv) or features (dense)
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    bool relu = true;

    // Filled in by NetworkSpec::resolve().
    int in_side = 0;
    int out_side = 0;

    int fan_in() const noexcept { return kind == LayerKind::conv ? in * kernel * kernel : in; }
    std::size_t weight_count() const noexcept { return static_cast<std::size_t>(out) * fan_in(); }

    static LayerSpec conv(int in, int out, int kernel, int stride, int padding, bool relu = true);
    static LayerSpec dense(int in, int out, bool relu = true);

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
    int input_side = kImageSide;
    std::vector<LayerSpec> layers;

    /// conv 1->8 k5 s2 p2, conv 8->16 k3 s2 p1, conv 16->32 k3 s2 p1,
    /// dense 1568->256->64->5; ReLU everywhere except the output.
    static NetworkSpec default_architecture();

    /// Derives spatial sizes and checks that consecutive layers agree.
    void resolve();
    int output_dim() const;
    std::size_t parameter_count() const;

    nlohmann::json to_json() const;
    static NetworkSpec from_json(const nlohmann::json& j);

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Per-layer gradient (or Adam moment) buffers with the network's shapes.
template <typename T>
struct ParamSet {
    std::vector<MatrixX<T>> weights;  // [out, fan_in]
    std::vector<VectorX<T>> biases;   // [out]

    void set_zero();
};

/// Convolutional embedding network, scalar type T (float for training and
/// inference, double for gradient checking).
///
/// Batches are laid out column-major as (channels, n * side * side): image i
/// occupies a contiguous block of columns, pixel (r, c) at column
/// i * side * side + r * side + c. An image input is therefore a
/// (1, n * side * side) matrix; dense layers see (features, n).
template <typename T>
class EmbeddingNet {
  public:
    using Matrix = MatrixX<T>;
    using Vector = VectorX<T>;

    /// Layer inputs and outputs recorded by forward() for backward().
    struct Tape {
        std::vector<Matrix> inputs;   // conv: im2col matrix; dense: input
        std::vector<Matrix> outputs;  // post-activation
        std::size_t batch = 0;
    };

    explicit EmbeddingNet(NetworkSpec spec);  // all-zero parameters

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
    static EmbeddingNet initialized(NetworkSpec spec, std::uint64_t seed);

    const NetworkSpec& spec() const noexcept { return spec_; }
    ParamSet<T>& params() noexcept { return params_; }
    const ParamSet<T>& params() const noexcept { return params_; }
    std::size_t parameter_count() const { return spec_.parameter_count(); }

    /// Pointers to every parameter tensor, weights then bias per layer.
    std::vector<std::span<T>> parameter_views();

    ParamSet<T> zero_like() const;

    /// input: (1, n * side * side). Returns (output_dim, n).
    Matrix forward(const Matrix& input) const;
    Matrix forward(const Matrix& input, Tape& tape) const;

    /// Accumulates d(loss)/d(params) into grads given d(loss)/d(output).
    void backward(const Tape& tape, const Matrix& grad_output, ParamSet<T>& grads) const;

    /// Packs images (all of side spec().input_side) into a forward() input.
    Matrix pack(std::span<const TrajectoryImage* const> images) const;

    BehaviorVector embed(const TrajectoryImage& image) const;

    template <typename U>
    EmbeddingNet<U> cast() const;

  private:
    NetworkSpec spec_;
    ParamSet<T> params_;
};

extern template class EmbeddingNet<float>;
extern template class EmbeddingNet<double>;

// ---------------------------------------------------------------------------
// Triplet objective.

/// max(|a - p| - |a - n| + margin, 0)
template <typename T>
T triplet_loss(std::span<const T> a, std::span<const T> p, std::span<const T> n, T margin);

/// Mean hinge loss over a batch whose embeddings are laid out as columns
/// [anchors | positives | negatives], each block of width `count`. Writes
/// d(mean loss)/d(embeddings) into grad. Inactive hinges contribute zero.
template <typename T>
T triplet_batch_loss(const MatrixX<T>& embeddings, std::size_t count, T margin, MatrixX<T>& grad);

/// Gradients of the mean triplet loss for a batch of image triplets.
template <typename T>
T triplet_gradients(const EmbeddingNet<T>& net, std::span<const TrajectoryImage* const> anchors,
                    std::span<const TrajectoryImage* const> positives, std::span<const TrajectoryImage* const> negatives,
                    T margin, ParamSet<T>& grads);

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
    double learning_rate = 0.08;
    double weight_decay = 1e-6;
    std::size_t batch_size = 4096;
    std::size_t triplets_per_epoch = 16384;
    std::size_t max_epochs = 500;
    std::size_t plateau_patience = 15;
    double plateau_threshold = 1e-4;  // relative improvement
    double plateau_factor = 0.5;
    double stop_loss = 1e-3;
    std::size_t stop_window = 10;
    double margin = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t chunk = 64;  // triplets per forward/backward pass

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

/// Adam with L2 weight decay folded into the gradient.
class AdamOptimizer {
  public:
    AdamOptimizer(const EmbeddingNet<float>& net, const TrainConfig& cfg);
    void step(EmbeddingNet<float>& net, const ParamSet<float>& grads, double learning_rate);

  private:
    ParamSet<float> m_;
    ParamSet<float> v_;
    double beta1_, beta2_, epsilon_, weight_decay_;
    std::uint64_t t_ = 0;
};

/// Indices into an image list; when augment_positive is set the positive is
/// an augmentation of images[positive] drawn at training time.
struct IndexTriplet {
    std::uint32_t anchor = 0;
    std::uint32_t positive = 0;
    std::uint32_t negative = 0;
    bool augment_positive = false;
};

using EpochSampler = std::function<std::vector<IndexTriplet>(std::size_t epoch, Rng& rng)>;

struct TrainResult {
    EmbeddingNet<float> net;
    std::vector<double> loss_log;  // mean triplet loss per epoch
    std::vector<double> lr_log;
    std::string stop_reason;
};

/// Generic triplet training loop: batches of cfg.batch_size, one Adam step per
/// batch, plateau LR halving and the windowed stop rule.
TrainResult train_triplets(EmbeddingNet<float> start, const std::vector<TrajectoryImage>& images,
                           const EpochSampler& sampler, const TrainConfig& cfg, std::uint64_t seed);

/// Self-supervised pretraining: each epoch draws cfg.triplets_per_epoch
/// (anchor, negative) pairs with replacement and uses an augmentation of the
/// anchor as the positive.
TrainResult pretrain(const std::vector<TrajectoryImage>& images, const NetworkSpec& spec, const TrainConfig& cfg,
                     std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoints (.swemb): "SWEMB 1" line, one-line JSON header, then
// little-endian float32 tensors in layer order, weights row-major [out][fan_in]
// followed by biases.

void save_checkpoint(const std::filesystem::path& path, const EmbeddingNet<float>& net,
                     const nlohmann::json& config_echo = nlohmann::json::object());
EmbeddingNet<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace swarmtax
