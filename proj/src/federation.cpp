#include "fedsim/federation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsim/rng.hpp"
#include "fedsim/threading.hpp"

namespace fedsim {

std::string method_name(Method m) {
    switch (m) {
        case Method::repper: return "repper";
        case Method::fedavg: return "fedavg";
        case Method::fedavg_ft: return "fedavg-ft";
        case Method::fedprox: return "fedprox";
        case Method::fedprox_ft: return "fedprox-ft";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    if (name == "repper") return Method::repper;
    if (name == "fedavg") return Method::fedavg;
    if (name == "fedavg-ft") return Method::fedavg_ft;
    if (name == "fedprox") return Method::fedprox;
    if (name == "fedprox-ft") return Method::fedprox_ft;
    throw ConfigError("unknown method '" + name + "'");
}

bool method_is_baseline(Method m) { return m != Method::repper; }

bool method_has_finetune(Method m) {
    return m == Method::fedavg_ft || m == Method::fedprox_ft;
}

std::vector<std::size_t> FederationConfig::encoder_dims(std::size_t input_dim) const {
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), encoder_hidden.begin(), encoder_hidden.end());
    dims.push_back(embed_dim);
    return dims;
}

double FederationConfig::representation_lr_at(std::size_t round) const {
    const std::size_t decay_round = (2 * rounds + 2) / 3;  // ceil(2T/3)
    return round >= decay_round ? lr_representation * lr_decay : lr_representation;
}

void FederationConfig::validate() const {
    if (num_clients == 0) {
        throw ConfigError("clients must be positive");
    }
    if (!(participation > 0.0) || participation > 1.0) {
        throw ConfigError("participation must be in (0, 1]");
    }
    if (rounds == 0 || crl_epochs == 0 || pcl_epochs == 0 || batch_size == 0) {
        throw ConfigError("rounds, local_epochs, pcl_epochs and batch_size must be positive");
    }
    if (!(lr_representation > 0.0) || !(lr_classifier > 0.0)) {
        throw ConfigError("learning rates must be positive");
    }
    if (!(lr_decay > 0.0) || lr_decay > 1.0) {
        throw ConfigError("lr_decay must be in (0, 1]");
    }
    if (!(temperature > 0.0)) {
        throw ConfigError("temperature must be positive");
    }
    if (!(dirichlet_alpha > 0.0)) {
        throw ConfigError("dirichlet_alpha must be positive");
    }
    if (weight_decay < 0.0 || fedprox_mu < 0.0) {
        throw ConfigError("weight_decay and fedprox_mu must be >= 0");
    }
    if (embed_dim == 0) {
        throw ConfigError("embed_dim must be positive");
    }
    if (use_projection_head) {
        throw ConfigError("projection_head is reserved and not available");
    }
    augmentation.validate();
}

std::vector<std::size_t> sample_clients(std::size_t round, std::size_t num_clients,
                                        double participation, std::uint64_t seed) {
    std::size_t m = static_cast<std::size_t>(
        std::floor(participation * static_cast<double>(num_clients)));
    m = std::max<std::size_t>(m, 1);
    m = std::min(m, num_clients);
    RngStream rng(seed, "sample", 0, round);
    const auto perm = rng.permutation(num_clients);
    std::vector<std::size_t> selected(perm.begin(), perm.begin() + m);
    std::sort(selected.begin(), selected.end());
    return selected;
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   RngStream& rng) {
    const auto perm = rng.permutation(n);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(perm.begin() + start, perm.begin() + end);
    }
    return batches;
}

OptimizerConfig optimizer_config(const FederationConfig& config, double lr) {
    OptimizerConfig opt;
    opt.kind = config.optimizer;
    opt.lr = lr;
    opt.weight_decay = config.weight_decay;
    return opt;
}

}  // namespace

EncoderParams client_update_crl(const ClientData& client, const EncoderParams& start,
                                const FederationConfig& config, std::size_t round,
                                double lr, double* mean_loss_out) {
    EncoderParams phi = start;
    RngStream rng(config.seed, "crl", client.client_id, round);
    OptimizerState opt(optimizer_config(config, lr));
    double loss_sum = 0.0;
    std::size_t loss_count = 0;

    for (std::size_t epoch = 0; epoch < config.crl_epochs; ++epoch) {
        const auto batches = make_batches(client.train_x.rows(), config.batch_size, rng);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            try {
                const Matrix batch_x = take_rows(client.train_x, batches[b]);
                std::vector<int> batch_y;
                batch_y.reserve(batches[b].size());
                for (std::size_t idx : batches[b]) {
                    batch_y.push_back(client.train_y[idx]);
                }
                const AugmentedBatch aug =
                    augment_twice(batch_x, batch_y, config.augmentation, rng);

                ForwardCache cache;
                const Matrix features = encoder_forward(phi, aug.samples, &cache);
                RowNormalizeResult norm = l2_normalize_rows(features);
                ContrastiveBatch cb =
                    make_contrastive_batch(std::move(norm.normalized), aug.labels,
                                           config.temperature, std::move(norm.degenerate));

                const ScLossResult loss = sc_loss(cb);
                if (!std::isfinite(loss.mean)) {
                    throw NumericError("non-finite contrastive loss");
                }
                loss_sum += loss.mean;
                ++loss_count;

                // Train on the batch-mean loss: per-anchor feature gradients
                // scaled by 1/rows.
                ScGradRResult grad_r = sc_grad_r(cb, norm.norms);
                grad_r.grad *= 1.0 / static_cast<double>(cb.rows());
                const EncoderGrads grads = encoder_backward(phi, cache, grad_r.grad);
                opt.step(param_ptrs(phi), grad_ptrs(grads));
            } catch (const NumericError& e) {
                throw NumericError("client " + std::to_string(client.client_id) +
                                   ", round " + std::to_string(round) + ", batch " +
                                   std::to_string(b) + ": " + e.what());
            }
        }
    }
    if (mean_loss_out) {
        *mean_loss_out =
            loss_count == 0 ? 0.0 : loss_sum / static_cast<double>(loss_count);
    }
    return phi;
}

void aggregate_params(const std::vector<std::vector<const Matrix*>>& uploads,
                      const std::vector<std::size_t>& counts,
                      const std::vector<Matrix*>& out) {
    if (uploads.empty() || uploads.size() != counts.size()) {
        throw ContractError("aggregate: empty uploads or count mismatch");
    }
    const std::size_t tensors = uploads.front().size();
    if (out.size() != tensors) {
        throw ContractError("aggregate: output tensor count mismatch");
    }
    std::size_t total = 0;
    for (std::size_t n : counts) {
        total += n;
    }
    if (total == 0) {
        throw ContractError("aggregate: all sample counts are zero");
    }
    std::vector<double> weights(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        weights[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    }
    for (const auto& upload : uploads) {
        if (upload.size() != tensors) {
            throw ContractError("aggregate: uploads have differing tensor counts");
        }
        for (std::size_t t = 0; t < tensors; ++t) {
            if (!upload[t]->same_shape(*uploads.front()[t])) {
                throw ContractError("aggregate: upload tensor shape mismatch");
            }
        }
    }
    // Base-plus-correction form: a convex combination of identical uploads
    // contributes zero correction and reproduces the base bit-exactly.
    for (std::size_t t = 0; t < tensors; ++t) {
        const Matrix& base = *uploads.front()[t];
        *out[t] = base;
        double* dst = out[t]->data();
        for (std::size_t k = 0; k < base.size(); ++k) {
            double corr = 0.0;
            for (std::size_t i = 0; i < uploads.size(); ++i) {
                corr += weights[i] * (uploads[i][t]->data()[k] - base.data()[k]);
            }
            if (corr != 0.0) {
                dst[k] = base.data()[k] + corr;
            }
        }
    }
}

EncoderParams aggregate(
    const std::vector<std::pair<const EncoderParams*, std::size_t>>& uploads) {
    if (uploads.empty()) {
        throw ContractError("aggregate: no uploads");
    }
    std::vector<std::vector<const Matrix*>> ptrs;
    std::vector<std::size_t> counts;
    for (const auto& [params, count] : uploads) {
        ptrs.push_back(param_ptrs(*params));
        counts.push_back(count);
    }
    EncoderParams result = *uploads.front().first;
    aggregate_params(ptrs, counts, param_ptrs(result));
    return result;
}

CrlResult run_crl(const LabeledDataset& ds, const ClientPartition& part,
                  const FederationConfig& config) {
    RngStream init_rng(config.seed, "init");
    CrlResult result;
    result.phi = make_encoder(config.encoder_dims(ds.dim()), init_rng);

    std::vector<ClientData> views;
    views.reserve(part.num_clients());
    for (std::size_t i = 0; i < part.num_clients(); ++i) {
        views.push_back(client_view(ds, part, i, config.full_test_eval));
    }

    for (std::size_t t = 0; t < config.rounds; ++t) {
        const auto selected =
            sample_clients(t, part.num_clients(), config.participation, config.seed);
        const double lr = config.representation_lr_at(t);

        std::vector<EncoderParams> updates(selected.size());
        std::vector<double> losses(selected.size(), 0.0);
        parallel_for(selected.size(), [&](std::size_t k) {
            updates[k] = client_update_crl(views[selected[k]], result.phi, config, t,
                                           lr, &losses[k]);
        });

        std::vector<std::pair<const EncoderParams*, std::size_t>> uploads;
        uploads.reserve(selected.size());
        for (std::size_t k = 0; k < selected.size(); ++k) {
            uploads.emplace_back(&updates[k], part.counts[selected[k]]);
        }
        result.phi = aggregate(uploads);

        RoundTrace trace;
        trace.round = t;
        trace.selected = selected;
        double loss_sum = 0.0;
        for (double l : losses) {
            loss_sum += l;
        }
        trace.mean_loss =
            selected.empty() ? 0.0 : loss_sum / static_cast<double>(selected.size());
        result.traces.push_back(std::move(trace));
    }
    return result;
}

Matrix repper_features(const EncoderParams& phi, const Matrix& x) {
    return l2_normalize_rows(encoder_forward(phi, x)).normalized;
}

namespace {

PersonalizedModel train_head_on_frozen_encoder(const EncoderParams& phi,
                                               const ClientData& client, HeadKind kind,
                                               std::size_t epochs,
                                               const FederationConfig& config,
                                               std::size_t num_classes) {
    RngStream rng(config.seed, "pcl", client.client_id, 0);
    const Matrix features = repper_features(phi, client.train_x);

    PersonalizedModel model;
    model.client_id = client.client_id;
    model.encoder_hash = param_hash(phi);
    model.head =
        make_head(kind, phi.output_dim(), num_classes, config.mlp_head_hidden, rng);

    OptimizerState opt(optimizer_config(config, config.lr_classifier));
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const auto batches = make_batches(features.rows(), config.batch_size, rng);
        double loss_sum = 0.0;
        for (const auto& batch : batches) {
            const Matrix batch_x = take_rows(features, batch);
            std::vector<int> batch_y;
            batch_y.reserve(batch.size());
            for (std::size_t idx : batch) {
                batch_y.push_back(client.train_y[idx]);
            }
            const HeadLossResult res = head_forward_loss(model.head, batch_x, batch_y);
            if (!std::isfinite(res.loss)) {
                throw NumericError("client " + std::to_string(client.client_id) +
                                   ": non-finite classifier loss");
            }
            loss_sum += res.loss;
            opt.step(param_ptrs(model.head), grad_ptrs(res.grads));
        }
        model.loss_trace.push_back(
            batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size()));
    }
    return model;
}

}  // namespace

PersonalizedModel run_pcl(const EncoderParams& phi, const ClientData& client,
                          HeadKind kind, const FederationConfig& config,
                          std::size_t num_classes) {
    return train_head_on_frozen_encoder(phi, client, kind, config.pcl_epochs, config,
                                        num_classes);
}

PersonalizedModel adapt_new_client(const EncoderParams& phi, const ClientData& new_client,
                                   HeadKind kind, std::size_t iterations,
                                   const FederationConfig& config) {
    if (new_client.train_x.cols() != phi.input_dim()) {
        throw DataError("adapt_new_client: data dimension " +
                        std::to_string(new_client.train_x.cols()) +
                        " does not match encoder input " +
                        std::to_string(phi.input_dim()));
    }
    int max_label = 0;
    for (int y : new_client.train_y) {
        max_label = std::max(max_label, y);
    }
    for (int y : new_client.test_y) {
        max_label = std::max(max_label, y);
    }
    return train_head_on_frozen_encoder(phi, new_client, kind, iterations, config,
                                        static_cast<std::size_t>(max_label) + 1);
}

std::vector<Matrix*> param_ptrs(JointModel& m) {
    auto out = param_ptrs(m.encoder);
    for (auto* p : param_ptrs(m.head)) {
        out.push_back(p);
    }
    return out;
}

std::vector<const Matrix*> param_ptrs(const JointModel& m) {
    auto out = param_ptrs(m.encoder);
    for (const auto* p : param_ptrs(m.head)) {
        out.push_back(p);
    }
    return out;
}

namespace {

JointModel local_update_joint(const ClientData& client, const JointModel& start,
                              const FederationConfig& config, std::size_t round,
                              double lr, double* mean_loss_out) {
    JointModel model = start;
    RngStream rng(config.seed, "local", client.client_id, round);
    OptimizerState opt(optimizer_config(config, lr));
    const double mu = (config.method == Method::fedprox ||
                       config.method == Method::fedprox_ft)
                          ? config.fedprox_mu
                          : 0.0;
    const auto global_params = param_ptrs(start);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;

    for (std::size_t epoch = 0; epoch < config.crl_epochs; ++epoch) {
        const auto batches = make_batches(client.train_x.rows(), config.batch_size, rng);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            try {
                const Matrix batch_x = take_rows(client.train_x, batches[b]);
                std::vector<int> batch_y;
                batch_y.reserve(batches[b].size());
                for (std::size_t idx : batches[b]) {
                    batch_y.push_back(client.train_y[idx]);
                }
                ForwardCache cache;
                const Matrix features = encoder_forward(model.encoder, batch_x, &cache);
                const HeadLossResult head_res =
                    head_forward_loss(model.head, features, batch_y, true);
                if (!std::isfinite(head_res.loss)) {
                    throw NumericError("non-finite classification loss");
                }
                loss_sum += head_res.loss;
                ++loss_count;
                const EncoderGrads enc_grads =
                    encoder_backward(model.encoder, cache, head_res.grad_input);

                std::vector<Matrix> grads;
                for (const auto* g : grad_ptrs(enc_grads)) {
                    grads.push_back(*g);
                }
                for (const auto* g : grad_ptrs(head_res.grads)) {
                    grads.push_back(*g);
                }
                const auto params = param_ptrs(model);
                if (mu > 0.0) {
                    // Proximal pull toward the round-start global parameters.
                    for (std::size_t p = 0; p < params.size(); ++p) {
                        for (std::size_t k = 0; k < grads[p].size(); ++k) {
                            grads[p].data()[k] +=
                                mu * (params[p]->data()[k] - global_params[p]->data()[k]);
                        }
                    }
                }
                std::vector<const Matrix*> grad_list;
                for (const auto& g : grads) {
                    grad_list.push_back(&g);
                }
                opt.step(params, grad_list);
            } catch (const NumericError& e) {
                throw NumericError("client " + std::to_string(client.client_id) +
                                   ", round " + std::to_string(round) + ", batch " +
                                   std::to_string(b) + ": " + e.what());
            }
        }
    }
    if (mean_loss_out) {
        *mean_loss_out =
            loss_count == 0 ? 0.0 : loss_sum / static_cast<double>(loss_count);
    }
    return model;
}

PersonalizedModel finetune_head(const JointModel& global, const ClientData& client,
                                const FederationConfig& config) {
    PersonalizedModel model;
    model.client_id = client.client_id;
    model.encoder_hash = param_hash(global.encoder);
    model.head = global.head;  // warm start from the shared head

    RngStream rng(config.seed, "ft", client.client_id, 0);
    const Matrix features = encoder_forward(global.encoder, client.train_x);
    OptimizerState opt(optimizer_config(config, config.lr_classifier));
    for (std::size_t epoch = 0; epoch < config.ft_epochs; ++epoch) {
        const auto batches = make_batches(features.rows(), config.batch_size, rng);
        double loss_sum = 0.0;
        for (const auto& batch : batches) {
            const Matrix batch_x = take_rows(features, batch);
            std::vector<int> batch_y;
            for (std::size_t idx : batch) {
                batch_y.push_back(client.train_y[idx]);
            }
            const HeadLossResult res = head_forward_loss(model.head, batch_x, batch_y);
            loss_sum += res.loss;
            opt.step(param_ptrs(model.head), grad_ptrs(res.grads));
        }
        model.loss_trace.push_back(
            batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size()));
    }
    return model;
}

}  // namespace

BaselineResult run_baseline(const LabeledDataset& ds, const ClientPartition& part,
                            const FederationConfig& config) {
    if (!method_is_baseline(config.method)) {
        throw ConfigError("run_baseline: method must be a baseline");
    }
    RngStream init_rng(config.seed, "init");
    RngStream head_rng(config.seed, "init_head");
    BaselineResult result;
    result.global.encoder = make_encoder(config.encoder_dims(ds.dim()), init_rng);
    result.global.head =
        make_head(HeadKind::logistic, config.embed_dim,
                  static_cast<std::size_t>(ds.num_classes), config.mlp_head_hidden,
                  head_rng);

    std::vector<ClientData> views;
    views.reserve(part.num_clients());
    for (std::size_t i = 0; i < part.num_clients(); ++i) {
        views.push_back(client_view(ds, part, i, config.full_test_eval));
    }

    for (std::size_t t = 0; t < config.rounds; ++t) {
        const auto selected =
            sample_clients(t, part.num_clients(), config.participation, config.seed);
        const double lr = config.representation_lr_at(t);

        std::vector<JointModel> updates(selected.size());
        std::vector<double> losses(selected.size(), 0.0);
        parallel_for(selected.size(), [&](std::size_t k) {
            updates[k] = local_update_joint(views[selected[k]], result.global, config, t,
                                            lr, &losses[k]);
        });

        std::vector<std::vector<const Matrix*>> uploads;
        std::vector<std::size_t> counts;
        for (std::size_t k = 0; k < selected.size(); ++k) {
            uploads.push_back(param_ptrs(updates[k]));
            counts.push_back(part.counts[selected[k]]);
        }
        JointModel next = result.global;
        aggregate_params(uploads, counts, param_ptrs(next));
        result.global = std::move(next);

        RoundTrace trace;
        trace.round = t;
        trace.selected = selected;
        double loss_sum = 0.0;
        for (double l : losses) {
            loss_sum += l;
        }
        trace.mean_loss =
            selected.empty() ? 0.0 : loss_sum / static_cast<double>(selected.size());
        result.traces.push_back(std::move(trace));
    }

    if (method_has_finetune(config.method)) {
        result.fine_tuned.resize(part.num_clients());
        parallel_for(part.num_clients(), [&](std::size_t i) {
            result.fine_tuned[i] = finetune_head(result.global, views[i], config);
        });
    }
    return result;
}

std::vector<int> predict_repper(const EncoderParams& phi, const HeadParams& head,
                                const Matrix& x) {
    return head_predict(head, repper_features(phi, x));
}

std::vector<int> predict_joint(const JointModel& model, const Matrix& x) {
    return head_predict(model.head, encoder_forward(model.encoder, x));
}

}  // namespace fedsim
