#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/matrix.hpp"

namespace fedsim {

class RngStream;

enum class Activation { relu, identity };

/// One dense layer: out = act(in * weight + bias), weight is in_dim x out_dim,
/// bias is 1 x out_dim.
struct DenseLayer {
    Matrix weight;
    Matrix bias;
    Activation act = Activation::identity;
};

struct LayerGrads {
    Matrix weight;
    Matrix bias;
};

struct ForwardCache {
    Matrix input;
    std::vector<Matrix> pre_acts;     // per layer, before activation
    std::vector<Matrix> activations;  // per layer, after activation
};

Matrix layers_forward(const std::vector<DenseLayer>& layers, const Matrix& input,
                      ForwardCache* cache = nullptr);

/// Backprop through a layer stack; grad_input is filled only when non-null.
std::vector<LayerGrads> layers_backward(const std::vector<DenseLayer>& layers,
                                        const ForwardCache& cache,
                                        const Matrix& grad_output,
                                        Matrix* grad_input = nullptr);

/// Representation model: hidden layers use ReLU, the output layer is linear
/// so its rows are the raw features r.
struct EncoderParams {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.front().weight.rows(); }
    std::size_t output_dim() const { return layers.back().weight.cols(); }
    std::vector<std::size_t> dims() const;
};

/// dims = {d, hidden..., g}; enforces g < d and at least one layer.
EncoderParams make_encoder(const std::vector<std::size_t>& dims, RngStream& rng);

Matrix encoder_forward(const EncoderParams& phi, const Matrix& batch,
                       ForwardCache* cache = nullptr);

struct EncoderGrads {
    std::vector<LayerGrads> layers;
    Matrix input;
};

EncoderGrads encoder_backward(const EncoderParams& phi, const ForwardCache& cache,
                              const Matrix& grad_features);

enum class HeadKind { logistic, linear_svm, mlp };

std::string head_kind_name(HeadKind kind);
HeadKind head_kind_from_name(const std::string& name);

/// Per-client classifier. logistic / linear_svm are a single linear layer
/// g -> C; mlp adds one ReLU hidden layer.
struct HeadParams {
    HeadKind kind = HeadKind::logistic;
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.front().weight.rows(); }
    std::size_t num_classes() const { return layers.back().weight.cols(); }
};

HeadParams make_head(HeadKind kind, std::size_t feature_dim, std::size_t num_classes,
                     std::size_t mlp_hidden, RngStream& rng);

struct HeadLossResult {
    double loss = 0.0;
    std::vector<LayerGrads> grads;
    Matrix grad_input;  // empty unless requested
};

/// Mean loss over the batch: softmax cross-entropy for logistic/mlp,
/// Crammer-Singer hinge with margin 1 for linear_svm.
HeadLossResult head_forward_loss(const HeadParams& theta, const Matrix& features,
                                 const std::vector<int>& labels,
                                 bool want_input_grad = false);

Matrix head_logits(const HeadParams& theta, const Matrix& features);

/// Argmax predictions; ties resolve to the lowest class index.
std::vector<int> head_predict(const HeadParams& theta, const Matrix& features);
std::vector<int> argmax_rows(const Matrix& logits);

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd;
    double lr = 0.001;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// sgd: p <- p - lr * (g + wd * p)
/// adam: bias-corrected moments with decoupled weight decay.
class OptimizerState {
public:
    explicit OptimizerState(OptimizerConfig config) : config_(config) {}

    void set_learning_rate(double lr) { config_.lr = lr; }
    const OptimizerConfig& config() const { return config_; }
    std::uint64_t step_count() const { return step_; }

    void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads);

private:
    OptimizerConfig config_;
    std::uint64_t step_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

// Parameter traversal in a fixed order (weight, bias per layer); shared by
// the optimizer, aggregation, checkpoints and hashing.
std::vector<Matrix*> param_ptrs(std::vector<DenseLayer>& layers);
std::vector<const Matrix*> param_ptrs(const std::vector<DenseLayer>& layers);
std::vector<Matrix*> param_ptrs(EncoderParams& p);
std::vector<const Matrix*> param_ptrs(const EncoderParams& p);
std::vector<Matrix*> param_ptrs(HeadParams& p);
std::vector<const Matrix*> param_ptrs(const HeadParams& p);
std::vector<const Matrix*> grad_ptrs(const std::vector<LayerGrads>& grads);
std::vector<const Matrix*> grad_ptrs(const EncoderGrads& grads);

std::vector<double> flatten(const std::vector<const Matrix*>& params);
void unflatten(std::span<const double> flat, const std::vector<Matrix*>& params);

/// FNV-1a over the raw bytes of every parameter; bit-exact identity check.
std::uint64_t param_hash(const std::vector<const Matrix*>& params);
std::uint64_t param_hash(const EncoderParams& p);

}  // namespace fedsim
