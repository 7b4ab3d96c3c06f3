#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/nn.hpp"
#include "fedsim/supcon.hpp"

namespace fedsim {

enum class Method { repper, fedavg, fedavg_ft, fedprox, fedprox_ft };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
bool method_is_baseline(Method m);
bool method_has_finetune(Method m);

struct FederationConfig {
    std::size_t num_clients = 20;   // K
    double participation = 0.2;     // C
    std::size_t rounds = 100;       // T
    std::size_t crl_epochs = 10;    // local epochs in stage 1 (E)
    std::size_t pcl_epochs = 10;    // local epochs in stage 2
    std::size_t ft_epochs = 10;     // baseline head fine-tuning epochs
    std::size_t adapt_iterations = 100;  // new-client head epochs
    std::size_t batch_size = 256;   // B
    double lr_representation = 0.001;
    double lr_classifier = 0.001;
    double lr_decay = 0.1;          // factor applied from round ceil(2T/3); 1 disables
    double temperature = 0.1;
    double dirichlet_alpha = 0.5;
    std::size_t min_client_size = 10;
    double fedprox_mu = 0.01;
    OptimizerKind optimizer = OptimizerKind::adam;
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
    Method method = Method::repper;
    AugmentationPolicy augmentation;
    std::vector<std::size_t> encoder_hidden{256, 128};
    std::size_t embed_dim = 64;
    bool use_projection_head = false;  // reserved; rejected when enabled
    HeadKind head_kind = HeadKind::logistic;
    std::size_t mlp_head_hidden = 32;
    bool full_test_eval = false;

    std::vector<std::size_t> encoder_dims(std::size_t input_dim) const;
    double representation_lr_at(std::size_t round) const;
    void validate() const;
};

struct RoundTrace {
    std::size_t round = 0;
    std::vector<std::size_t> selected;
    double mean_loss = 0.0;  // mean over selected clients of their batch-mean loss
};

/// Uniform sample without replacement of max(floor(C*K), 1) clients,
/// deterministic in (seed, round); returned sorted.
std::vector<std::size_t> sample_clients(std::size_t round, std::size_t num_clients,
                                        double participation, std::uint64_t seed);

/// One client's stage-1 work for one round: crl_epochs passes over its data,
/// each batch running augment -> encode -> normalize -> contrastive loss ->
/// analytic feature gradient -> backprop -> optimizer step.
EncoderParams client_update_crl(const ClientData& client, const EncoderParams& start,
                                const FederationConfig& config, std::size_t round,
                                double lr, double* mean_loss_out = nullptr);

/// Weighted average with weights n_i / sum(n_j), renormalized over the
/// uploads present. Exact convex combination: identical uploads return
/// bit-identical parameters.
EncoderParams aggregate(const std::vector<std::pair<const EncoderParams*, std::size_t>>& uploads);

/// Core of aggregate, usable for any parameter list (baselines include
/// head tensors). Uploads must be ordered by client id by the caller.
void aggregate_params(const std::vector<std::vector<const Matrix*>>& uploads,
                      const std::vector<std::size_t>& counts,
                      const std::vector<Matrix*>& out);

struct CrlResult {
    EncoderParams phi;
    std::vector<RoundTrace> traces;
};

CrlResult run_crl(const LabeledDataset& ds, const ClientPartition& part,
                  const FederationConfig& config);

struct PersonalizedModel {
    std::size_t client_id = 0;
    HeadParams head;
    std::uint64_t encoder_hash = 0;  // hash of the frozen phi used for training
    std::vector<double> loss_trace;  // per epoch
};

/// Stage 2: trains a head of the given kind on the frozen encoder's
/// normalized features. phi is bit-unchanged.
PersonalizedModel run_pcl(const EncoderParams& phi, const ClientData& client,
                          HeadKind kind, const FederationConfig& config,
                          std::size_t num_classes);

/// Same trainer with an independently sized head (the new client's class
/// count); `iterations` plays the role of pcl_epochs.
PersonalizedModel adapt_new_client(const EncoderParams& phi, const ClientData& new_client,
                                   HeadKind kind, std::size_t iterations,
                                   const FederationConfig& config);

struct JointModel {
    EncoderParams encoder;
    HeadParams head;
};

std::vector<Matrix*> param_ptrs(JointModel& m);
std::vector<const Matrix*> param_ptrs(const JointModel& m);

struct BaselineResult {
    JointModel global;
    std::vector<RoundTrace> traces;
    std::vector<PersonalizedModel> fine_tuned;  // one per client for +FT methods
};

/// FedAvg / FedProx round loop over a joint encoder+head model trained with
/// cross-entropy; +FT variants then retrain each client's head copy locally.
BaselineResult run_baseline(const LabeledDataset& ds, const ClientPartition& part,
                            const FederationConfig& config);

/// Features the personalization stage consumes: unit-normalized embeddings.
Matrix repper_features(const EncoderParams& phi, const Matrix& x);

std::vector<int> predict_repper(const EncoderParams& phi, const HeadParams& head,
                                const Matrix& x);
std::vector<int> predict_joint(const JointModel& model, const Matrix& x);

}  // namespace fedsim
