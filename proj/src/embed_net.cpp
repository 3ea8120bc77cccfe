#include "swarmtax/embed_net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "swarmtax/errors.hpp"

namespace swarmtax {

// ---------------------------------------------------------------------------
// Specs.

LayerSpec LayerSpec::conv(int in, int out, int kernel, int stride, int padding, bool relu) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.in = in;
    s.out = out;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    s.relu = relu;
    return s;
}

LayerSpec LayerSpec::dense(int in, int out, bool relu) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in = in;
    s.out = out;
    s.relu = relu;
    return s;
}

NetworkSpec NetworkSpec::default_architecture() {
    NetworkSpec spec;
    spec.input_side = kImageSide;
    spec.layers = {
        LayerSpec::conv(1, 8, 5, 2, 2),    LayerSpec::conv(8, 16, 3, 2, 1),  LayerSpec::conv(16, 32, 3, 2, 1),
        LayerSpec::dense(32 * 7 * 7, 256), LayerSpec::dense(256, 64),        LayerSpec::dense(64, 5, false),
    };
    spec.resolve();
    return spec;
}

void NetworkSpec::resolve() {
    if (layers.empty()) {
        throw ContractError("network spec has no layers");
    }
    if (input_side <= 0) {
        throw ContractError("network input side must be positive");
    }
    int channels = 1;
    int side = input_side;
    bool flat = false;
    for (auto& l : layers) {
        if (l.in <= 0 || l.out <= 0) {
            throw ContractError("layer widths must be positive");
        }
        if (l.kind == LayerKind::conv) {
            if (flat) {
                throw ContractError("convolution after a dense layer is not supported");
            }
            if (l.kernel <= 0 || l.stride <= 0 || l.padding < 0) {
                throw ContractError("invalid convolution geometry");
            }
            if (l.in != channels) {
                throw ContractError("convolution input channels do not match previous layer");
            }
            l.in_side = side;
            l.out_side = (side + 2 * l.padding - l.kernel) / l.stride + 1;
            if (l.out_side <= 0) {
                throw ContractError("convolution output is empty");
            }
            channels = l.out;
            side = l.out_side;
        } else {
            const int features = flat ? channels : channels * side * side;
            if (l.in != features) {
                throw ContractError("dense layer expects " + std::to_string(l.in) + " inputs, previous layer gives " +
                                    std::to_string(features));
            }
            l.in_side = 0;
            l.out_side = 0;
            channels = l.out;
            flat = true;
        }
    }
}

int NetworkSpec::output_dim() const {
    const auto& last = layers.back();
    return last.kind == LayerKind::dense ? last.out : last.out * last.out_side * last.out_side;
}

std::size_t NetworkSpec::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
        n += l.weight_count() + static_cast<std::size_t>(l.out);
    }
    return n;
}

nlohmann::json NetworkSpec::to_json() const {
    nlohmann::json layers_json = nlohmann::json::array();
    for (const auto& l : layers) {
        nlohmann::json j;
        j["kind"] = l.kind == LayerKind::conv ? "conv" : "dense";
        j["in"] = l.in;
        j["out"] = l.out;
        if (l.kind == LayerKind::conv) {
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            j["in_side"] = l.in_side;
            j["out_side"] = l.out_side;
        }
        j["relu"] = l.relu;
        j["weight_shape"] = {l.out, l.fan_in()};
        j["bias_shape"] = {l.out};
        layers_json.push_back(std::move(j));
    }
    return {{"input_side", input_side}, {"layers", layers_json}};
}

NetworkSpec NetworkSpec::from_json(const nlohmann::json& j) {
    NetworkSpec spec;
    spec.input_side = j.at("input_side").get<int>();
    for (const auto& lj : j.at("layers")) {
        const auto kind = lj.at("kind").get<std::string>();
        if (kind == "conv") {
            spec.layers.push_back(LayerSpec::conv(lj.at("in"), lj.at("out"), lj.at("kernel"), lj.at("stride"),
                                                  lj.at("padding"), lj.value("relu", true)));
        } else if (kind == "dense") {
            spec.layers.push_back(LayerSpec::dense(lj.at("in"), lj.at("out"), lj.value("relu", true)));
        } else {
            throw ContractError("unknown layer kind: " + kind);
        }
    }
    spec.resolve();
    return spec;
}

// ---------------------------------------------------------------------------
// Network.

template <typename T>
void ParamSet<T>::set_zero() {
    for (auto& w : weights) {
        w.setZero();
    }
    for (auto& b : biases) {
        b.setZero();
    }
}

namespace {

template <typename T>
MatrixX<T> reshaped(const MatrixX<T>& m, Eigen::Index rows) {
    if (m.rows() == rows) {
        return m;
    }
    if (m.size() % rows != 0) {
        throw ContractError("activation shape mismatch");
    }
    return Eigen::Map<const MatrixX<T>>(m.data(), rows, m.size() / rows);
}

template <typename T>
MatrixX<T> im2col(const MatrixX<T>& x, const LayerSpec& l, std::size_t n) {
    const int c = l.in;
    const int s = l.in_side;
    const int o = l.out_side;
    const int k = l.kernel;
    MatrixX<T> cols = MatrixX<T>::Zero(static_cast<Eigen::Index>(k) * k * c, static_cast<Eigen::Index>(n) * o * o);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Index in_base = static_cast<Eigen::Index>(i) * s * s;
        const Eigen::Index out_base = static_cast<Eigen::Index>(i) * o * o;
        for (int oh = 0; oh < o; ++oh) {
            for (int ow = 0; ow < o; ++ow) {
                const Eigen::Index col = out_base + oh * o + ow;
                for (int kh = 0; kh < k; ++kh) {
                    const int ih = oh * l.stride - l.padding + kh;
                    if (ih < 0 || ih >= s) {
                        continue;
                    }
                    for (int kw = 0; kw < k; ++kw) {
                        const int iw = ow * l.stride - l.padding + kw;
                        if (iw < 0 || iw >= s) {
                            continue;
                        }
                        cols.col(col).segment((kh * k + kw) * c, c) = x.col(in_base + ih * s + iw);
                    }
                }
            }
        }
    }
    return cols;
}

template <typename T>
MatrixX<T> col2im(const MatrixX<T>& cols, const LayerSpec& l, std::size_t n) {
    const int c = l.in;
    const int s = l.in_side;
    const int o = l.out_side;
    const int k = l.kernel;
    MatrixX<T> x = MatrixX<T>::Zero(c, static_cast<Eigen::Index>(n) * s * s);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Index in_base = static_cast<Eigen::Index>(i) * s * s;
        const Eigen::Index out_base = static_cast<Eigen::Index>(i) * o * o;
        for (int oh = 0; oh < o; ++oh) {
            for (int ow = 0; ow < o; ++ow) {
                const Eigen::Index col = out_base + oh * o + ow;
                for (int kh = 0; kh < k; ++kh) {
                    const int ih = oh * l.stride - l.padding + kh;
                    if (ih < 0 || ih >= s) {
                        continue;
                    }
                    for (int kw = 0; kw < k; ++kw) {
                        const int iw = ow * l.stride - l.padding + kw;
                        if (iw < 0 || iw >= s) {
                            continue;
                        }
                        x.col(in_base + ih * s + iw) += cols.col(col).segment((kh * k + kw) * c, c);
                    }
                }
            }
        }
    }
    return x;
}

}  // namespace

template <typename T>
EmbeddingNet<T>::EmbeddingNet(NetworkSpec spec) : spec_{std::move(spec)} {
    spec_.resolve();
    params_ = zero_like();
}

template <typename T>
ParamSet<T> EmbeddingNet<T>::zero_like() const {
    ParamSet<T> p;
    for (const auto& l : spec_.layers) {
        p.weights.push_back(MatrixX<T>::Zero(l.out, l.fan_in()));
        p.biases.push_back(VectorX<T>::Zero(l.out));
    }
    return p;
}

template <typename T>
EmbeddingNet<T> EmbeddingNet<T>::initialized(NetworkSpec spec, std::uint64_t seed) {
    EmbeddingNet net(std::move(spec));
    Rng rng(seed);
    for (std::size_t li = 0; li < net.spec_.layers.size(); ++li) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(net.spec_.layers[li].fan_in()));
        auto& w = net.params_.weights[li];
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                w(r, c) = static_cast<T>(rng.uniform(-bound, bound));
            }
        }
        for (Eigen::Index r = 0; r < net.params_.biases[li].size(); ++r) {
            net.params_.biases[li](r) = static_cast<T>(rng.uniform(-bound, bound));
        }
    }
    return net;
}

template <typename T>
std::vector<std::span<T>> EmbeddingNet<T>::parameter_views() {
    std::vector<std::span<T>> views;
    for (std::size_t li = 0; li < params_.weights.size(); ++li) {
        views.emplace_back(params_.weights[li].data(), static_cast<std::size_t>(params_.weights[li].size()));
        views.emplace_back(params_.biases[li].data(), static_cast<std::size_t>(params_.biases[li].size()));
    }
    return views;
}

template <typename T>
typename EmbeddingNet<T>::Matrix EmbeddingNet<T>::forward(const Matrix& input) const {
    Tape tape;
    return forward(input, tape);
}

template <typename T>
typename EmbeddingNet<T>::Matrix EmbeddingNet<T>::forward(const Matrix& input, Tape& tape) const {
    const Eigen::Index pixels = static_cast<Eigen::Index>(spec_.input_side) * spec_.input_side;
    if (input.size() == 0 || input.size() % pixels != 0) {
        throw ContractError("forward: input size is not a multiple of the image size");
    }
    const auto n = static_cast<std::size_t>(input.size() / pixels);
    tape.inputs.clear();
    tape.outputs.clear();
    tape.batch = n;

    Matrix act = reshaped<T>(input, 1);
    for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
        const auto& l = spec_.layers[li];
        Matrix x = l.kind == LayerKind::conv ? im2col<T>(reshaped<T>(act, l.in), l, n) : reshaped<T>(act, l.in);
        Matrix y = params_.weights[li] * x;
        y.colwise() += params_.biases[li];
        if (l.relu) {
            y = y.cwiseMax(T(0));
        }
        tape.inputs.push_back(std::move(x));
        tape.outputs.push_back(y);
        act = std::move(y);
    }
    return reshaped<T>(act, spec_.output_dim());
}

template <typename T>
void EmbeddingNet<T>::backward(const Tape& tape, const Matrix& grad_output, ParamSet<T>& grads) const {
    Matrix g = grad_output;
    for (std::size_t li = spec_.layers.size(); li-- > 0;) {
        const auto& l = spec_.layers[li];
        g = reshaped<T>(g, l.out);
        if (l.relu) {
            g = g.cwiseProduct((tape.outputs[li].array() > T(0)).template cast<T>().matrix());
        }
        grads.weights[li].noalias() += g * tape.inputs[li].transpose();
        grads.biases[li] += g.rowwise().sum();
        if (li == 0) {
            break;
        }
        Matrix din = params_.weights[li].transpose() * g;
        g = l.kind == LayerKind::conv ? col2im<T>(din, l, tape.batch) : std::move(din);
    }
}

template <typename T>
typename EmbeddingNet<T>::Matrix EmbeddingNet<T>::pack(std::span<const TrajectoryImage* const> images) const {
    const int s = spec_.input_side;
    const Eigen::Index pixels = static_cast<Eigen::Index>(s) * s;
    Matrix input(1, pixels * static_cast<Eigen::Index>(images.size()));
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i]->side != s) {
            throw ContractError("image side " + std::to_string(images[i]->side) + " does not match network input " +
                                std::to_string(s));
        }
        for (Eigen::Index p = 0; p < pixels; ++p) {
            input(0, static_cast<Eigen::Index>(i) * pixels + p) = static_cast<T>(images[i]->pixels[p]);
        }
    }
    return input;
}

template <typename T>
BehaviorVector EmbeddingNet<T>::embed(const TrajectoryImage& image) const {
    if (spec_.output_dim() != static_cast<int>(kBehaviorDims)) {
        throw ContractError("network output dimension is not 5");
    }
    const TrajectoryImage* ptr = &image;
    const Matrix out = forward(pack(std::span<const TrajectoryImage* const>(&ptr, 1)));
    BehaviorVector b;
    b.mapping_id = "net";
    for (std::size_t i = 0; i < kBehaviorDims; ++i) {
        b.values[i] = static_cast<double>(out(static_cast<Eigen::Index>(i), 0));
    }
    return b;
}

template <typename T>
template <typename U>
EmbeddingNet<U> EmbeddingNet<T>::cast() const {
    EmbeddingNet<U> out(spec_);
    for (std::size_t li = 0; li < params_.weights.size(); ++li) {
        out.params().weights[li] = params_.weights[li].template cast<U>();
        out.params().biases[li] = params_.biases[li].template cast<U>();
    }
    return out;
}

template struct ParamSet<float>;
template struct ParamSet<double>;
template class EmbeddingNet<float>;
template class EmbeddingNet<double>;
template EmbeddingNet<double> EmbeddingNet<float>::cast<double>() const;
template EmbeddingNet<float> EmbeddingNet<double>::cast<float>() const;

// ---------------------------------------------------------------------------
// Triplet loss.

template <typename T>
T triplet_loss(std::span<const T> a, std::span<const T> p, std::span<const T> n, T margin) {
    if (a.size() != p.size() || a.size() != n.size()) {
        throw ContractError("triplet_loss: dimension mismatch");
    }
    T dap = 0;
    T dan = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dap += (a[i] - p[i]) * (a[i] - p[i]);
        dan += (a[i] - n[i]) * (a[i] - n[i]);
    }
    return std::max(std::sqrt(dap) - std::sqrt(dan) + margin, T(0));
}

template float triplet_loss<float>(std::span<const float>, std::span<const float>, std::span<const float>, float);
template double triplet_loss<double>(std::span<const double>, std::span<const double>, std::span<const double>,
                                     double);

namespace {

/// Sum of hinge losses; grad receives d(scale * sum)/d(embeddings).
template <typename T>
T accumulate_triplet_terms(const MatrixX<T>& e, std::size_t count, T margin, T scale, MatrixX<T>& grad) {
    grad = MatrixX<T>::Zero(e.rows(), e.cols());
    T total = 0;
    const auto b = static_cast<Eigen::Index>(count);
    for (Eigen::Index t = 0; t < b; ++t) {
        const VectorX<T> ap = e.col(t) - e.col(b + t);
        const VectorX<T> an = e.col(t) - e.col(2 * b + t);
        const T dap = ap.norm();
        const T dan = an.norm();
        const T loss = dap - dan + margin;
        if (loss <= T(0)) {
            continue;
        }
        total += loss;
        if (dap > T(0)) {
            grad.col(t) += scale * ap / dap;
            grad.col(b + t) -= scale * ap / dap;
        }
        if (dan > T(0)) {
            grad.col(t) -= scale * an / dan;
            grad.col(2 * b + t) += scale * an / dan;
        }
    }
    return total;
}

}  // namespace

template <typename T>
T triplet_batch_loss(const MatrixX<T>& embeddings, std::size_t count, T margin, MatrixX<T>& grad) {
    if (count == 0 || embeddings.cols() != static_cast<Eigen::Index>(3 * count)) {
        throw ContractError("triplet_batch_loss: expected 3 * count embedding columns");
    }
    const T scale = T(1) / static_cast<T>(count);
    return accumulate_triplet_terms<T>(embeddings, count, margin, scale, grad) * scale;
}

template float triplet_batch_loss<float>(const MatrixX<float>&, std::size_t, float, MatrixX<float>&);
template double triplet_batch_loss<double>(const MatrixX<double>&, std::size_t, double, MatrixX<double>&);

template <typename T>
T triplet_gradients(const EmbeddingNet<T>& net, std::span<const TrajectoryImage* const> anchors,
                    std::span<const TrajectoryImage* const> positives, std::span<const TrajectoryImage* const> negatives,
                    T margin, ParamSet<T>& grads) {
    const std::size_t b = anchors.size();
    if (b == 0 || positives.size() != b || negatives.size() != b) {
        throw ContractError("triplet_gradients: batch must be non-empty with matching sizes");
    }
    std::vector<const TrajectoryImage*> all;
    all.reserve(3 * b);
    all.insert(all.end(), anchors.begin(), anchors.end());
    all.insert(all.end(), positives.begin(), positives.end());
    all.insert(all.end(), negatives.begin(), negatives.end());
    typename EmbeddingNet<T>::Tape tape;
    const MatrixX<T> e = net.forward(net.pack(all), tape);
    MatrixX<T> g;
    const T loss = triplet_batch_loss<T>(e, b, margin, g);
    net.backward(tape, g, grads);
    return loss;
}

template float triplet_gradients<float>(const EmbeddingNet<float>&, std::span<const TrajectoryImage* const>,
                                        std::span<const TrajectoryImage* const>,
                                        std::span<const TrajectoryImage* const>, float, ParamSet<float>&);
template double triplet_gradients<double>(const EmbeddingNet<double>&, std::span<const TrajectoryImage* const>,
                                          std::span<const TrajectoryImage* const>,
                                          std::span<const TrajectoryImage* const>, double, ParamSet<double>&);

// ---------------------------------------------------------------------------
// Training.

void TrainConfig::validate() const {
    if (!(learning_rate > 0) || !(weight_decay >= 0) || batch_size == 0 || triplets_per_epoch == 0 ||
        max_epochs == 0 || plateau_patience == 0 || !(stop_loss > 0) || stop_window == 0 || !(margin > 0) ||
        chunk == 0 || !(plateau_factor > 0 && plateau_factor < 1)) {
        throw ContractError("invalid training configuration");
    }
}

nlohmann::json TrainConfig::to_json() const {
    return {
        {"learning_rate", learning_rate},
        {"weight_decay", weight_decay},
        {"batch_size", batch_size},
        {"triplets_per_epoch", triplets_per_epoch},
        {"max_epochs", max_epochs},
        {"plateau_patience", plateau_patience},
        {"plateau_threshold", plateau_threshold},
        {"plateau_factor", plateau_factor},
        {"stop_loss", stop_loss},
        {"stop_window", stop_window},
        {"margin", margin},
        {"beta1", beta1},
        {"beta2", beta2},
        {"epsilon", epsilon},
        {"chunk", chunk},
    };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.triplets_per_epoch = j.value("triplets_per_epoch", c.triplets_per_epoch);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
    c.plateau_threshold = j.value("plateau_threshold", c.plateau_threshold);
    c.plateau_factor = j.value("plateau_factor", c.plateau_factor);
    c.stop_loss = j.value("stop_loss", c.stop_loss);
    c.stop_window = j.value("stop_window", c.stop_window);
    c.margin = j.value("margin", c.margin);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.chunk = j.value("chunk", c.chunk);
    c.validate();
    return c;
}

AdamOptimizer::AdamOptimizer(const EmbeddingNet<float>& net, const TrainConfig& cfg)
    : m_{net.zero_like()},
      v_{net.zero_like()},
      beta1_{cfg.beta1},
      beta2_{cfg.beta2},
      epsilon_{cfg.epsilon},
      weight_decay_{cfg.weight_decay} {}

void AdamOptimizer::step(EmbeddingNet<float>& net, const ParamSet<float>& grads, double learning_rate) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const auto step_size = static_cast<float>(learning_rate / bc1);
    const auto sqrt_bc2 = static_cast<float>(std::sqrt(bc2));
    const auto b1 = static_cast<float>(beta1_);
    const auto b2 = static_cast<float>(beta2_);
    const auto eps = static_cast<float>(epsilon_);
    const auto wd = static_cast<float>(weight_decay_);

    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        auto g = (grad.array() + wd * param.array()).eval();
        m.array() = b1 * m.array() + (1.0f - b1) * g;
        v.array() = b2 * v.array() + (1.0f - b2) * g.square();
        param.array() -= step_size * m.array() / (v.array().sqrt() / sqrt_bc2 + eps);
    };
    auto& p = net.params();
    for (std::size_t li = 0; li < p.weights.size(); ++li) {
        update(p.weights[li], grads.weights[li], m_.weights[li], v_.weights[li]);
        update(p.biases[li], grads.biases[li], m_.biases[li], v_.biases[li]);
    }
}

TrainResult train_triplets(EmbeddingNet<float> start, const std::vector<TrajectoryImage>& images,
                           const EpochSampler& sampler, const TrainConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    TrainResult result{std::move(start), {}, {}, "max_epochs"};
    auto& net = result.net;
    AdamOptimizer adam(net, cfg);
    Rng rng(seed);
    double lr = cfg.learning_rate;
    double best = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs = 0;
    ParamSet<float> grads = net.zero_like();
    const auto margin = static_cast<float>(cfg.margin);

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto triplets = sampler(epoch, rng);
        if (triplets.empty()) {
            result.stop_reason = "no_triplets";
            break;
        }
        double epoch_loss = 0.0;
        for (std::size_t b0 = 0; b0 < triplets.size(); b0 += cfg.batch_size) {
            const std::size_t b1 = std::min(triplets.size(), b0 + cfg.batch_size);
            const auto scale = 1.0f / static_cast<float>(b1 - b0);
            grads.set_zero();
            for (std::size_t c0 = b0; c0 < b1; c0 += cfg.chunk) {
                const std::size_t c1 = std::min(b1, c0 + cfg.chunk);
                const std::size_t count = c1 - c0;
                std::vector<TrajectoryImage> augmented;
                augmented.reserve(count);
                std::vector<const TrajectoryImage*> batch(3 * count);
                for (std::size_t i = 0; i < count; ++i) {
                    const auto& t = triplets[c0 + i];
                    batch[i] = &images.at(t.anchor);
                    if (t.augment_positive) {
                        augmented.push_back(augment(images.at(t.positive), rng));
                        batch[count + i] = &augmented.back();
                    } else {
                        batch[count + i] = &images.at(t.positive);
                    }
                    batch[2 * count + i] = &images.at(t.negative);
                }
                EmbeddingNet<float>::Tape tape;
                const MatrixX<float> e = net.forward(net.pack(batch), tape);
                MatrixX<float> g;
                epoch_loss += accumulate_triplet_terms<float>(e, count, margin, scale, g);
                net.backward(tape, g, grads);
            }
            adam.step(net, grads, lr);
        }
        epoch_loss /= static_cast<double>(triplets.size());
        result.loss_log.push_back(epoch_loss);
        result.lr_log.push_back(lr);

        if (epoch_loss < best * (1.0 - cfg.plateau_threshold)) {
            best = epoch_loss;
            bad_epochs = 0;
        } else if (++bad_epochs > cfg.plateau_patience) {
            lr *= cfg.plateau_factor;
            bad_epochs = 0;
        }
        if (result.loss_log.size() >= cfg.stop_window) {
            const double recent = std::accumulate(result.loss_log.end() - static_cast<std::ptrdiff_t>(cfg.stop_window),
                                                  result.loss_log.end(), 0.0) /
                                  static_cast<double>(cfg.stop_window);
            if (recent < cfg.stop_loss) {
                result.stop_reason = "converged";
                break;
            }
        }
    }
    return result;
}

TrainResult pretrain(const std::vector<TrajectoryImage>& images, const NetworkSpec& spec, const TrainConfig& cfg,
                     std::uint64_t seed) {
    if (images.size() < 2) {
        throw ContractError("pretraining needs at least 2 images");
    }
    const auto n = static_cast<std::uint64_t>(images.size());
    EpochSampler sampler = [&cfg, n](std::size_t, Rng& rng) {
        std::vector<IndexTriplet> out(cfg.triplets_per_epoch);
        for (auto& t : out) {
            t.anchor = static_cast<std::uint32_t>(rng.below(n));
            do {
                t.negative = static_cast<std::uint32_t>(rng.below(n));
            } while (t.negative == t.anchor);
            t.positive = t.anchor;
            t.augment_positive = true;
        }
        return out;
    };
    auto start = EmbeddingNet<float>::initialized(spec, derive_seed(seed, 0x1a17));
    return train_triplets(std::move(start), images, sampler, cfg, derive_seed(seed, 0x7a41));
}

// ---------------------------------------------------------------------------
// Checkpoints.

namespace {

constexpr const char* kCheckpointMagic = "SWEMB 1";

void write_f32_le(std::ostream& out, float value) {
    const auto bits = std::bit_cast<std::uint32_t>(value);
    const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                           static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    out.write(bytes, 4);
}

float read_f32_le(std::istream& in) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
        throw IoError("checkpoint tensor data truncated");
    }
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[3]) << 24);
    return std::bit_cast<float>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EmbeddingNet<float>& net,
                     const nlohmann::json& config_echo) {
    nlohmann::json header = net.spec().to_json();
    header["format"] = "swemb";
    header["version"] = 1;
    header["dtype"] = "float32-le";
    header["parameter_count"] = net.parameter_count();
    header["config"] = config_echo;

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << kCheckpointMagic << '\n' << header.dump() << '\n';
    const auto& p = net.params();
    for (std::size_t li = 0; li < p.weights.size(); ++li) {
        const auto& w = p.weights[li];
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                write_f32_le(out, w(r, c));
            }
        }
        for (Eigen::Index r = 0; r < p.biases[li].size(); ++r) {
            write_f32_le(out, p.biases[li](r));
        }
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

EmbeddingNet<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    std::string magic;
    std::string header_line;
    if (!std::getline(in, magic) || magic != kCheckpointMagic || !std::getline(in, header_line)) {
        throw IoError("not a .swemb checkpoint: " + path.string());
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed checkpoint header: ") + e.what());
    }
    EmbeddingNet<float> net(NetworkSpec::from_json(header));
    auto& p = net.params();
    for (std::size_t li = 0; li < p.weights.size(); ++li) {
        auto& w = p.weights[li];
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                w(r, c) = read_f32_le(in);
            }
        }
        for (Eigen::Index r = 0; r < p.biases[li].size(); ++r) {
            p.biases[li](r) = read_f32_le(in);
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw IoError("checkpoint has trailing data: " + path.string());
    }
    return net;
}

}  // namespace swarmtax
