#include "fedsim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsim/rng.hpp"

namespace fedsim {

namespace {

Matrix add_bias_rows(Matrix m, const Matrix& bias) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double* dst = m.row(i);
        const double* b = bias.row(0);
        for (std::size_t j = 0; j < m.cols(); ++j) {
            dst[j] += b[j];
        }
    }
    return m;
}

Matrix apply_activation(const Matrix& pre, Activation act) {
    if (act == Activation::identity) {
        return pre;
    }
    Matrix out = pre;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.data()[i] < 0.0) {
            out.data()[i] = 0.0;
        }
    }
    return out;
}

Matrix column_sums(const Matrix& m) {
    Matrix out(1, m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* src = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(0, j) += src[j];
        }
    }
    return out;
}

void check_labels(const std::vector<int>& labels, std::size_t batch, std::size_t classes) {
    if (labels.size() != batch) {
        throw ShapeError("head_forward_loss: labels length != batch rows");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw DataError("head_forward_loss: label " + std::to_string(y) +
                            " out of range [0, " + std::to_string(classes) + ")");
        }
    }
}

// Row-wise softmax probabilities, numerically stabilized.
Matrix softmax_rows(const Matrix& logits) {
    Matrix probs(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* src = logits.row(i);
        double* dst = probs.row(i);
        double mx = src[0];
        for (std::size_t j = 1; j < logits.cols(); ++j) {
            mx = std::max(mx, src[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            dst[j] = std::exp(src[j] - mx);
            sum += dst[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            dst[j] *= inv;
        }
    }
    return probs;
}

}  // namespace

Matrix layers_forward(const std::vector<DenseLayer>& layers, const Matrix& input,
                      ForwardCache* cache) {
    if (layers.empty()) {
        throw ContractError("layers_forward: empty layer list");
    }
    if (input.cols() != layers.front().weight.rows()) {
        throw ShapeError("layers_forward: input has " + std::to_string(input.cols()) +
                         " columns, layer expects " +
                         std::to_string(layers.front().weight.rows()));
    }
    if (cache) {
        cache->input = input;
        cache->pre_acts.clear();
        cache->activations.clear();
    }
    Matrix current = input;
    for (const auto& layer : layers) {
        Matrix pre = add_bias_rows(matmul(current, layer.weight), layer.bias);
        Matrix post = apply_activation(pre, layer.act);
        if (cache) {
            cache->pre_acts.push_back(std::move(pre));
            cache->activations.push_back(post);
        }
        current = std::move(post);
    }
    return current;
}

std::vector<LayerGrads> layers_backward(const std::vector<DenseLayer>& layers,
                                        const ForwardCache& cache,
                                        const Matrix& grad_output,
                                        Matrix* grad_input) {
    if (cache.pre_acts.size() != layers.size()) {
        throw ContractError("layers_backward: cache does not match layer count");
    }
    if (grad_output.rows() != cache.input.rows() ||
        grad_output.cols() != layers.back().weight.cols()) {
        throw ContractError("layers_backward: upstream gradient shape mismatch");
    }
    std::vector<LayerGrads> grads(layers.size());
    Matrix delta = grad_output;
    for (std::size_t li = layers.size(); li-- > 0;) {
        const auto& layer = layers[li];
        if (layer.act == Activation::relu) {
            const Matrix& pre = cache.pre_acts[li];
            for (std::size_t i = 0; i < delta.size(); ++i) {
                if (pre.data()[i] <= 0.0) {
                    delta.data()[i] = 0.0;
                }
            }
        }
        const Matrix& below = li == 0 ? cache.input : cache.activations[li - 1];
        grads[li].weight = matmul(transpose(below), delta);
        grads[li].bias = column_sums(delta);
        if (li > 0 || grad_input) {
            Matrix next = matmul(delta, transpose(layer.weight));
            if (li == 0) {
                *grad_input = std::move(next);
            } else {
                delta = std::move(next);
            }
        }
    }
    return grads;
}

std::vector<std::size_t> EncoderParams::dims() const {
    std::vector<std::size_t> d;
    d.push_back(input_dim());
    for (const auto& layer : layers) {
        d.push_back(layer.weight.cols());
    }
    return d;
}

EncoderParams make_encoder(const std::vector<std::size_t>& dims, RngStream& rng) {
    if (dims.size() < 2) {
        throw ConfigError("make_encoder: need at least input and output dims");
    }
    if (dims.back() >= dims.front()) {
        throw ConfigError("make_encoder: embedding dim " + std::to_string(dims.back()) +
                          " must be smaller than input dim " + std::to_string(dims.front()));
    }
    EncoderParams phi;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        DenseLayer layer;
        layer.weight = init_params(dims[i], dims[i + 1], InitScheme::uniform_fan_in, rng);
        layer.bias = Matrix::zeros(1, dims[i + 1]);
        layer.act = (i + 2 < dims.size()) ? Activation::relu : Activation::identity;
        phi.layers.push_back(std::move(layer));
    }
    return phi;
}

Matrix encoder_forward(const EncoderParams& phi, const Matrix& batch, ForwardCache* cache) {
    return layers_forward(phi.layers, batch, cache);
}

EncoderGrads encoder_backward(const EncoderParams& phi, const ForwardCache& cache,
                              const Matrix& grad_features) {
    EncoderGrads grads;
    grads.layers = layers_backward(phi.layers, cache, grad_features, &grads.input);
    return grads;
}

std::string head_kind_name(HeadKind kind) {
    switch (kind) {
        case HeadKind::logistic: return "logistic";
        case HeadKind::linear_svm: return "linear-svm";
        case HeadKind::mlp: return "mlp";
    }
    return "?";
}

HeadKind head_kind_from_name(const std::string& name) {
    if (name == "logistic") return HeadKind::logistic;
    if (name == "linear-svm") return HeadKind::linear_svm;
    if (name == "mlp") return HeadKind::mlp;
    throw ConfigError("unknown head kind '" + name + "'");
}

HeadParams make_head(HeadKind kind, std::size_t feature_dim, std::size_t num_classes,
                     std::size_t mlp_hidden, RngStream& rng) {
    if (feature_dim == 0 || num_classes == 0) {
        throw ConfigError("make_head: zero dimension");
    }
    HeadParams theta;
    theta.kind = kind;
    if (kind == HeadKind::mlp) {
        if (mlp_hidden == 0) {
            throw ConfigError("make_head: mlp hidden width must be positive");
        }
        DenseLayer hidden;
        hidden.weight = init_params(feature_dim, mlp_hidden, InitScheme::uniform_fan_in, rng);
        hidden.bias = Matrix::zeros(1, mlp_hidden);
        hidden.act = Activation::relu;
        theta.layers.push_back(std::move(hidden));
        DenseLayer out;
        out.weight = init_params(mlp_hidden, num_classes, InitScheme::uniform_fan_in, rng);
        out.bias = Matrix::zeros(1, num_classes);
        out.act = Activation::identity;
        theta.layers.push_back(std::move(out));
    } else {
        DenseLayer out;
        out.weight = init_params(feature_dim, num_classes, InitScheme::uniform_fan_in, rng);
        out.bias = Matrix::zeros(1, num_classes);
        out.act = Activation::identity;
        theta.layers.push_back(std::move(out));
    }
    return theta;
}

Matrix head_logits(const HeadParams& theta, const Matrix& features) {
    return layers_forward(theta.layers, features);
}

HeadLossResult head_forward_loss(const HeadParams& theta, const Matrix& features,
                                 const std::vector<int>& labels, bool want_input_grad) {
    const std::size_t n = features.rows();
    if (n == 0) {
        throw ShapeError("head_forward_loss: empty batch");
    }
    ForwardCache cache;
    const Matrix logits = layers_forward(theta.layers, features, &cache);
    const std::size_t classes = logits.cols();
    check_labels(labels, n, classes);

    HeadLossResult result;
    Matrix dlogits(n, classes, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);

    if (theta.kind == HeadKind::linear_svm) {
        // Crammer-Singer multiclass hinge, margin 1, subgradient form.
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* s = logits.row(i);
            const int y = labels[i];
            std::size_t rival = y == 0 ? 1 : 0;
            for (std::size_t c = 0; c < classes; ++c) {
                if (static_cast<int>(c) == y) {
                    continue;
                }
                if (s[c] > s[rival]) {
                    rival = c;
                }
            }
            const double violation = 1.0 + s[rival] - s[y];
            if (violation > 0.0) {
                loss += violation;
                dlogits(i, rival) += inv_n;
                dlogits(i, static_cast<std::size_t>(y)) -= inv_n;
            }
        }
        result.loss = loss * inv_n;
    } else {
        const Matrix probs = softmax_rows(logits);
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const int y = labels[i];
            loss -= std::log(std::max(probs(i, static_cast<std::size_t>(y)), 1e-300));
            const double* p = probs.row(i);
            double* d = dlogits.row(i);
            for (std::size_t c = 0; c < classes; ++c) {
                d[c] = p[c] * inv_n;
            }
            d[static_cast<std::size_t>(y)] -= inv_n;
        }
        result.loss = loss * inv_n;
    }

    Matrix grad_input;
    result.grads = layers_backward(theta.layers, cache, dlogits,
                                   want_input_grad ? &grad_input : nullptr);
    if (want_input_grad) {
        result.grad_input = std::move(grad_input);
    }
    return result;
}

std::vector<int> argmax_rows(const Matrix& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* s = logits.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c) {
            if (s[c] > s[best]) {
                best = c;
            }
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

std::vector<int> head_predict(const HeadParams& theta, const Matrix& features) {
    return argmax_rows(head_logits(theta, features));
}

void OptimizerState::step(const std::vector<Matrix*>& params,
                          const std::vector<const Matrix*>& grads) {
    if (params.size() != grads.size()) {
        throw ContractError("optimizer_step: params/grads count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(*grads[i])) {
            throw ShapeError("optimizer_step: grad shape mismatch at tensor " +
                             std::to_string(i));
        }
        if (!all_finite(*grads[i])) {
            throw NumericError("optimizer_step: non-finite gradient at tensor " +
                               std::to_string(i));
        }
    }
    const double lr = config_.lr;
    const double wd = config_.weight_decay;

    if (config_.kind == OptimizerKind::sgd) {
        ++step_;
        for (std::size_t i = 0; i < params.size(); ++i) {
            double* p = params[i]->data();
            const double* g = grads[i]->data();
            for (std::size_t k = 0; k < params[i]->size(); ++k) {
                p[k] -= lr * (g[k] + wd * p[k]);
            }
        }
        return;
    }

    if (m_.empty()) {
        for (const auto* param : params) {
            m_.emplace_back(param->rows(), param->cols(), 0.0);
            v_.emplace_back(param->rows(), param->cols(), 0.0);
        }
    }
    if (m_.size() != params.size()) {
        throw ContractError("optimizer_step: parameter list changed between steps");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!m_[i].same_shape(*params[i])) {
            throw ShapeError("optimizer_step: moment buffer shape mismatch");
        }
        double* p = params[i]->data();
        const double* g = grads[i]->data();
        double* m = m_[i].data();
        double* v = v_[i].data();
        for (std::size_t k = 0; k < params[i]->size(); ++k) {
            m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
            v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) + wd * p[k]);
        }
    }
}

std::vector<Matrix*> param_ptrs(std::vector<DenseLayer>& layers) {
    std::vector<Matrix*> out;
    for (auto& layer : layers) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    return out;
}

std::vector<const Matrix*> param_ptrs(const std::vector<DenseLayer>& layers) {
    std::vector<const Matrix*> out;
    for (const auto& layer : layers) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    return out;
}

std::vector<Matrix*> param_ptrs(EncoderParams& p) { return param_ptrs(p.layers); }
std::vector<const Matrix*> param_ptrs(const EncoderParams& p) { return param_ptrs(p.layers); }
std::vector<Matrix*> param_ptrs(HeadParams& p) { return param_ptrs(p.layers); }
std::vector<const Matrix*> param_ptrs(const HeadParams& p) { return param_ptrs(p.layers); }

std::vector<const Matrix*> grad_ptrs(const std::vector<LayerGrads>& grads) {
    std::vector<const Matrix*> out;
    for (const auto& g : grads) {
        out.push_back(&g.weight);
        out.push_back(&g.bias);
    }
    return out;
}

std::vector<const Matrix*> grad_ptrs(const EncoderGrads& grads) {
    return grad_ptrs(grads.layers);
}

std::vector<double> flatten(const std::vector<const Matrix*>& params) {
    std::vector<double> flat;
    std::size_t total = 0;
    for (const auto* p : params) {
        total += p->size();
    }
    flat.reserve(total);
    for (const auto* p : params) {
        flat.insert(flat.end(), p->data(), p->data() + p->size());
    }
    return flat;
}

void unflatten(std::span<const double> flat, const std::vector<Matrix*>& params) {
    std::size_t offset = 0;
    for (auto* p : params) {
        if (offset + p->size() > flat.size()) {
            throw ShapeError("unflatten: flat vector too short");
        }
        std::copy(flat.begin() + offset, flat.begin() + offset + p->size(), p->data());
        offset += p->size();
    }
    if (offset != flat.size()) {
        throw ShapeError("unflatten: flat vector too long");
    }
}

std::uint64_t param_hash(const std::vector<const Matrix*>& params) {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto* p : params) {
        const std::uint64_t r = p->rows();
        const std::uint64_t c = p->cols();
        h = fnv1a64(&r, sizeof r, h);
        h = fnv1a64(&c, sizeof c, h);
        h = fnv1a64(p->data(), p->size() * sizeof(double), h);
    }
    return h;
}

std::uint64_t param_hash(const EncoderParams& p) { return param_hash(param_ptrs(p)); }

}  // namespace fedsim
