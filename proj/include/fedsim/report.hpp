#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/nn.hpp"

namespace fedsim {

struct ClassCount {
    std::size_t correct = 0;
    std::size_t total = 0;

    double accuracy() const {
        return static_cast<double>(correct) / static_cast<double>(total);
    }
};

struct ClientReport {
    std::size_t client_id = 0;
    std::size_t n_test = 0;
    std::size_t n_correct = 0;
    double top1 = 0.0;
    std::map<int, ClassCount> class_counts;  // filled by evaluate
    std::map<int, double> per_class;         // accuracies, the serialized form;
                                             // keys are classes present in the
                                             // client's test set
};

struct EvalReport {
    std::string method;
    std::uint64_t config_hash = 0;
    std::vector<ClientReport> clients;  // sorted by id; clients with empty
                                        // test sets are absent
    double federation_top1_mean = 0.0;      // unweighted mean over clients
    double federation_top1_weighted = 0.0;  // weighted by n_test
};

using PredictFn = std::function<std::vector<int>(std::size_t client, const Matrix& x)>;

/// Argmax evaluation per client; deterministic and independent of client
/// order (clients are processed into fixed slots and reported sorted).
EvalReport evaluate(const std::string& method, std::uint64_t config_hash,
                    const std::vector<ClientData>& clients, const PredictFn& predict);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
void write_report_json(const EvalReport& report, const std::string& path);

struct MetricsRow {
    std::string method;
    std::uint64_t seed = 0;
    std::size_t round = 0;
    double mean_train_loss = 0.0;
};

/// CSV with header `method,seed,round,mean_train_loss`.
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);

/// CSV `label,z0..z{g-1}` of unit-normalized embeddings, one row per sample.
void export_embeddings(const EncoderParams& phi, const LabeledDataset& ds,
                       const std::string& path);

struct NamedTensor {
    std::string name;
    Matrix value;
};

struct Checkpoint {
    int version = 1;
    std::string stage;  // crl | pcl | baseline
    std::uint64_t config_hash = 0;
    std::vector<std::string> config_lines;  // canonical config snapshot
    std::vector<NamedTensor> tensors;
};

/// Textual header plus little-endian f64 payload; round trips bit-exactly.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint encoder_to_checkpoint(const EncoderParams& phi, const std::string& stage,
                                 std::uint64_t config_hash,
                                 std::vector<std::string> config_lines = {});

/// Rebuilds the encoder from layer tensors; throws LoadError with the shape
/// diff when the tensors do not chain.
EncoderParams encoder_from_checkpoint(const Checkpoint& ckpt);

/// Validates the checkpoint's layer shapes against expected dims
/// {d, hidden..., g}; throws LoadError describing the mismatch.
void check_encoder_shapes(const Checkpoint& ckpt, const std::vector<std::size_t>& dims);

}  // namespace fedsim
