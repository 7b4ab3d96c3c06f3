#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/matrix.hpp"

namespace fedsim {

class RngStream;

/// Per-feature gaussian noise plus random feature masking; flip/shift apply
/// only when the rows are square grids (grid_side > 0).
struct AugmentationPolicy {
    double noise_sigma = 0.05;
    double mask_prob = 0.1;
    bool flip = false;
    int shift_radius = 0;
    int grid_side = 0;

    void validate() const;
};

struct AugmentedBatch {
    Matrix samples;           // 2n rows; rows 2k and 2k+1 derive from input row k
    std::vector<int> labels;  // duplicated pairwise
};

AugmentedBatch augment_twice(const Matrix& samples, const std::vector<int>& labels,
                             const AugmentationPolicy& policy, RngStream& rng);

/// An augmented batch on the unit hypersphere with the anchor index sets.
/// For anchor j: candidates(j) = all other live rows, positives(j) = same
/// label, negatives(j) = the rest. Rows flagged inert (degenerate feature
/// norm) take part in nothing.
struct ContrastiveBatch {
    Matrix z;  // unit-norm rows (except inert rows, which are zero)
    std::vector<int> labels;
    double temperature = 0.1;
    std::vector<std::vector<int>> positives;
    std::vector<std::vector<int>> negatives;
    std::vector<std::uint8_t> inert;

    std::size_t rows() const { return z.rows(); }
};

ContrastiveBatch make_contrastive_batch(Matrix z, std::vector<int> labels,
                                        double temperature,
                                        std::vector<std::uint8_t> inert = {});

struct ScLossResult {
    double sum = 0.0;   // sum of per-anchor terms
    double mean = 0.0;  // sum / rows; the quantity trained on
    std::vector<double> per_anchor;
    std::size_t skipped_anchors = 0;  // anchors with no positives (or inert)
};

ScLossResult sc_loss(const ContrastiveBatch& batch);

/// Softmax of the anchor-candidate similarities over each candidate set:
/// row j holds exp(z_j.z_a / tau) / sum_{a'} exp(z_j.z_a' / tau) for a != j.
Matrix sc_candidate_softmax(const ContrastiveBatch& batch);

/// Per-anchor gradient of its own loss term with respect to z_j, holding the
/// other embeddings fixed. Anchors without positives get a zero row.
Matrix sc_grad_z(const ContrastiveBatch& batch);

struct ScGradRResult {
    Matrix grad;
    std::vector<std::uint8_t> degenerate;
    std::size_t degenerate_count = 0;
};

/// Chains sc_grad_z through the normalization Jacobian
/// (I - z_j z_j^T) / ||r_j||. Rows with degenerate norms are zeroed and
/// flagged.
ScGradRResult sc_grad_r(const ContrastiveBatch& batch, const std::vector<double>& feature_norms);

struct ScGradRTerms {
    Matrix positive_term;  // tangent-projected positive alignment terms
    Matrix negative_term;  // tangent-projected negative repulsion terms
};

/// Direct evaluation of the positive-set / negative-set decomposition of the
/// feature gradient; positive_term + negative_term equals sc_grad_r.
ScGradRTerms sc_grad_r_terms(const ContrastiveBatch& batch,
                             const std::vector<double>& feature_norms);

}  // namespace fedsim
