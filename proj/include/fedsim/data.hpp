#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/matrix.hpp"

namespace fedsim {

class RngStream;

struct LabeledDataset {
    Matrix features;  // n x d
    std::vector<int> labels;
    int num_classes = 0;
    std::vector<std::uint8_t> split;  // empty = all train; else 0 train, 1 test

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    std::vector<std::size_t> train_indices() const;
    std::vector<std::size_t> test_indices() const;
};

/// CSV with header `label,f0,...,f{d-1}`; class count is max label + 1.
/// Classes with no samples produce a warning on stderr.
LabeledDataset load_csv(const std::string& path);
void write_csv(const LabeledDataset& ds, const std::string& path);

/// Flat binary format: magic "FDS1", u32 n, u32 d, u32 C, n u32 labels,
/// n*d little-endian f32 features.
LabeledDataset load_binary(const std::string& path);
void write_binary(const LabeledDataset& ds, const std::string& path);

/// Assigns a deterministic stratified test split to a dataset that has none.
void assign_test_split(LabeledDataset& ds, double test_fraction, RngStream& rng);

struct GaussianMixture {
    Matrix centroids;  // C x d
    double spread = 1.0;
};

/// Gaussian centroids rescaled so the closest pair sits exactly at
/// `separation`.
GaussianMixture make_gaussian_mixture(int classes, std::size_t dim, double spread,
                                      double separation, RngStream& rng);

/// Samples per_class points from each listed component (all components when
/// the list is empty), relabeling to 0..k-1 in list order; a stratified
/// test_fraction share of each class is tagged as test.
LabeledDataset sample_mixture(const GaussianMixture& mix, std::size_t per_class,
                              double test_fraction, RngStream& rng,
                              const std::vector<int>& components = {});

LabeledDataset synth_gaussian_mixture(int classes, std::size_t per_class, std::size_t dim,
                                      double spread, double separation, RngStream& rng);

struct ClientPartition {
    std::vector<std::vector<std::size_t>> client_indices;  // train indices, disjoint
    std::vector<std::size_t> counts;                        // n_i
    std::vector<double> weights;                            // q_i = n_i / sum
    double alpha = 0.0;
    std::uint64_t seed = 0;

    std::size_t num_clients() const { return client_indices.size(); }
};

/// Class-wise Dirichlet split: for each class, draws client shares from
/// Dir(alpha) and assigns that class's train indices multinomially. Resamples
/// whole configurations violating min_size, up to `retries` attempts.
ClientPartition dirichlet_partition(const LabeledDataset& ds, std::size_t num_clients,
                                    double alpha, std::size_t min_size, RngStream& rng,
                                    std::size_t retries = 100);

std::uint64_t partition_hash(const ClientPartition& part);

struct ClientData {
    std::size_t client_id = 0;
    Matrix train_x;
    std::vector<int> train_y;
    Matrix test_x;
    std::vector<int> test_y;
    std::vector<int> observed_classes;  // sorted, from the train rows
};

/// Train rows come from the partition; test rows are the global test split
/// filtered to the classes the client holds (or all of it when full_test).
ClientData client_view(const LabeledDataset& ds, const ClientPartition& part,
                       std::size_t client, bool full_test = false);

}  // namespace fedsim
