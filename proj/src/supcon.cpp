#include "fedsim/supcon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedsim/rng.hpp"

namespace fedsim {

namespace {

constexpr double kUnitNormTol = 1e-9;
constexpr double kDegenerateNorm = 1e-12;

void apply_grid_views(double* row, int side, bool do_flip, int dx, int dy,
                      std::vector<double>& scratch) {
    const int n = side * side;
    scratch.assign(row, row + n);
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const int sx = do_flip ? side - 1 - x : x;
            const int ox = sx - dx;
            const int oy = y - dy;
            double v = 0.0;
            if (ox >= 0 && ox < side && oy >= 0 && oy < side) {
                v = scratch[static_cast<std::size_t>(oy) * side + ox];
            }
            row[static_cast<std::size_t>(y) * side + x] = v;
        }
    }
}

void augment_row(double* row, std::size_t dim, const AugmentationPolicy& policy,
                 RngStream& rng, std::vector<double>& scratch) {
    if (policy.grid_side > 0) {
        const bool do_flip = policy.flip && rng.uniform() < 0.5;
        int dx = 0;
        int dy = 0;
        if (policy.shift_radius > 0) {
            const int span = 2 * policy.shift_radius + 1;
            dx = static_cast<int>(rng.below(span)) - policy.shift_radius;
            dy = static_cast<int>(rng.below(span)) - policy.shift_radius;
        }
        if (do_flip || dx != 0 || dy != 0) {
            apply_grid_views(row, policy.grid_side, do_flip, dx, dy, scratch);
        }
    }
    if (policy.noise_sigma > 0.0) {
        for (std::size_t j = 0; j < dim; ++j) {
            row[j] += policy.noise_sigma * rng.normal();
        }
    }
    if (policy.mask_prob > 0.0) {
        for (std::size_t j = 0; j < dim; ++j) {
            if (rng.uniform() < policy.mask_prob) {
                row[j] = 0.0;
            }
        }
    }
}

}  // namespace

void AugmentationPolicy::validate() const {
    if (noise_sigma < 0.0) {
        throw ConfigError("augmentation: noise_sigma must be >= 0");
    }
    if (mask_prob < 0.0 || mask_prob > 1.0) {
        throw ConfigError("augmentation: mask_prob must be in [0, 1]");
    }
    if (shift_radius < 0 || grid_side < 0) {
        throw ConfigError("augmentation: shift_radius and grid_side must be >= 0");
    }
}

AugmentedBatch augment_twice(const Matrix& samples, const std::vector<int>& labels,
                             const AugmentationPolicy& policy, RngStream& rng) {
    policy.validate();
    if (samples.rows() == 0) {
        throw ShapeError("augment_twice: empty batch");
    }
    if (labels.size() != samples.rows()) {
        throw ShapeError("augment_twice: labels length mismatch");
    }
    if (policy.grid_side > 0 &&
        static_cast<std::size_t>(policy.grid_side) * policy.grid_side != samples.cols()) {
        throw ShapeError("augment_twice: grid_side^2 != sample dimension");
    }
    const std::size_t n = samples.rows();
    const std::size_t d = samples.cols();
    AugmentedBatch out;
    out.samples = Matrix(2 * n, d);
    out.labels.resize(2 * n);
    std::vector<double> scratch;
    for (std::size_t k = 0; k < n; ++k) {
        for (int view = 0; view < 2; ++view) {
            double* dst = out.samples.row(2 * k + view);
            const double* src = samples.row(k);
            for (std::size_t j = 0; j < d; ++j) {
                dst[j] = src[j];
            }
            augment_row(dst, d, policy, rng, scratch);
            out.labels[2 * k + view] = labels[k];
        }
    }
    return out;
}

ContrastiveBatch make_contrastive_batch(Matrix z, std::vector<int> labels,
                                        double temperature,
                                        std::vector<std::uint8_t> inert) {
    if (temperature <= 0.0) {
        throw ConfigError("contrastive batch: temperature must be positive");
    }
    const std::size_t n = z.rows();
    if (n == 0) {
        throw ShapeError("contrastive batch: no rows");
    }
    if (labels.size() != n) {
        throw ShapeError("contrastive batch: labels length mismatch");
    }
    if (inert.empty()) {
        inert.assign(n, 0);
    } else if (inert.size() != n) {
        throw ShapeError("contrastive batch: inert flags length mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (inert[i]) {
            continue;
        }
        double sq = 0.0;
        const double* row = z.row(i);
        for (std::size_t j = 0; j < z.cols(); ++j) {
            sq += row[j] * row[j];
        }
        if (std::abs(std::sqrt(sq) - 1.0) > kUnitNormTol) {
            throw ContractError("contrastive batch: row " + std::to_string(i) +
                                " is not unit norm");
        }
    }
    ContrastiveBatch batch;
    batch.z = std::move(z);
    batch.labels = std::move(labels);
    batch.temperature = temperature;
    batch.inert = std::move(inert);
    batch.positives.resize(n);
    batch.negatives.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        if (batch.inert[j]) {
            continue;
        }
        for (std::size_t a = 0; a < n; ++a) {
            if (a == j || batch.inert[a]) {
                continue;
            }
            if (batch.labels[a] == batch.labels[j]) {
                batch.positives[j].push_back(static_cast<int>(a));
            } else {
                batch.negatives[j].push_back(static_cast<int>(a));
            }
        }
    }
    return batch;
}

namespace {

// Shifted exponentials of the anchor-candidate similarities. For each live
// anchor j, fills exps(j, a) = exp((z_j.z_a - max_a)/tau-shift form) for the
// candidates of j, plus the candidate-set and positive-set sums.
struct SimilarityTables {
    Matrix exps;                    // shifted exp values, zero outside A(j)
    std::vector<double> denom_sum;  // sum over candidates
    std::vector<double> pos_sum;    // sum over positives
};

SimilarityTables build_tables(const ContrastiveBatch& batch) {
    const std::size_t n = batch.rows();
    const double inv_tau = 1.0 / batch.temperature;
    Matrix sims = matmul(batch.z, transpose(batch.z));

    SimilarityTables t;
    t.exps = Matrix(n, n, 0.0);
    t.denom_sum.assign(n, 0.0);
    t.pos_sum.assign(n, 0.0);

    for (std::size_t j = 0; j < n; ++j) {
        if (batch.inert[j]) {
            continue;
        }
        const auto& pos = batch.positives[j];
        const auto& neg = batch.negatives[j];
        if (pos.empty()) {
            continue;
        }
        double mx = -std::numeric_limits<double>::infinity();
        for (int a : pos) {
            mx = std::max(mx, sims(j, static_cast<std::size_t>(a)));
        }
        for (int a : neg) {
            mx = std::max(mx, sims(j, static_cast<std::size_t>(a)));
        }
        mx *= inv_tau;
        double denom = 0.0;
        double psum = 0.0;
        for (int a : pos) {
            const double e =
                std::exp(sims(j, static_cast<std::size_t>(a)) * inv_tau - mx);
            t.exps(j, static_cast<std::size_t>(a)) = e;
            denom += e;
            psum += e;
        }
        for (int a : neg) {
            const double e =
                std::exp(sims(j, static_cast<std::size_t>(a)) * inv_tau - mx);
            t.exps(j, static_cast<std::size_t>(a)) = e;
            denom += e;
        }
        t.denom_sum[j] = denom;
        t.pos_sum[j] = psum;
    }
    return t;
}

}  // namespace

ScLossResult sc_loss(const ContrastiveBatch& batch) {
    const std::size_t n = batch.rows();
    const SimilarityTables t = build_tables(batch);
    ScLossResult res;
    res.per_anchor.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (batch.inert[j] || batch.positives[j].empty()) {
            ++res.skipped_anchors;
            continue;
        }
        const double count = static_cast<double>(batch.positives[j].size());
        res.per_anchor[j] =
            std::log(t.denom_sum[j]) - std::log(t.pos_sum[j]) + std::log(count);
        res.sum += res.per_anchor[j];
    }
    res.mean = res.sum / static_cast<double>(n);
    return res;
}

Matrix sc_candidate_softmax(const ContrastiveBatch& batch) {
    const std::size_t n = batch.rows();
    const SimilarityTables t = build_tables(batch);
    Matrix out(n, n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (t.denom_sum[j] <= 0.0) {
            continue;
        }
        const double inv = 1.0 / t.denom_sum[j];
        for (std::size_t a = 0; a < n; ++a) {
            out(j, a) = t.exps(j, a) * inv;
        }
    }
    return out;
}

Matrix sc_grad_z(const ContrastiveBatch& batch) {
    const std::size_t n = batch.rows();
    const SimilarityTables t = build_tables(batch);

    // Coefficients over candidates: P_ja minus, on positives, the
    // positive-set softmax X_ja; the gradient is their z-weighted sum / tau.
    Matrix coeff(n, n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (batch.inert[j] || batch.positives[j].empty()) {
            continue;
        }
        const double inv_denom = 1.0 / t.denom_sum[j];
        const double inv_pos = 1.0 / t.pos_sum[j];
        for (int a : batch.positives[j]) {
            const auto ai = static_cast<std::size_t>(a);
            coeff(j, ai) = t.exps(j, ai) * (inv_denom - inv_pos);
        }
        for (int a : batch.negatives[j]) {
            const auto ai = static_cast<std::size_t>(a);
            coeff(j, ai) = t.exps(j, ai) * inv_denom;
        }
    }
    Matrix grad = matmul(coeff, batch.z);
    grad *= 1.0 / batch.temperature;
    return grad;
}

ScGradRResult sc_grad_r(const ContrastiveBatch& batch,
                        const std::vector<double>& feature_norms) {
    const std::size_t n = batch.rows();
    if (feature_norms.size() != n) {
        throw ShapeError("sc_grad_r: norms length mismatch");
    }
    const Matrix gz = sc_grad_z(batch);
    ScGradRResult res;
    res.grad = Matrix(n, batch.z.cols(), 0.0);
    res.degenerate.assign(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        if (feature_norms[j] <= kDegenerateNorm) {
            res.degenerate[j] = 1;
            ++res.degenerate_count;
            continue;
        }
        const double* zj = batch.z.row(j);
        const double* gj = gz.row(j);
        double dot = 0.0;
        for (std::size_t c = 0; c < batch.z.cols(); ++c) {
            dot += zj[c] * gj[c];
        }
        const double inv_norm = 1.0 / feature_norms[j];
        double* out = res.grad.row(j);
        for (std::size_t c = 0; c < batch.z.cols(); ++c) {
            out[c] = (gj[c] - dot * zj[c]) * inv_norm;
        }
    }
    return res;
}

ScGradRTerms sc_grad_r_terms(const ContrastiveBatch& batch,
                             const std::vector<double>& feature_norms) {
    const std::size_t n = batch.rows();
    const std::size_t g = batch.z.cols();
    if (feature_norms.size() != n) {
        throw ShapeError("sc_grad_r_terms: norms length mismatch");
    }
    const SimilarityTables t = build_tables(batch);
    ScGradRTerms terms;
    terms.positive_term = Matrix(n, g, 0.0);
    terms.negative_term = Matrix(n, g, 0.0);
    Matrix sims = matmul(batch.z, transpose(batch.z));
    for (std::size_t j = 0; j < n; ++j) {
        if (batch.inert[j] || batch.positives[j].empty() ||
            feature_norms[j] <= kDegenerateNorm) {
            continue;
        }
        const double scale = 1.0 / (batch.temperature * feature_norms[j]);
        const double inv_denom = 1.0 / t.denom_sum[j];
        const double inv_pos = 1.0 / t.pos_sum[j];
        const double* zj = batch.z.row(j);
        double* pos_out = terms.positive_term.row(j);
        double* neg_out = terms.negative_term.row(j);
        for (int a : batch.positives[j]) {
            const auto ai = static_cast<std::size_t>(a);
            const double weight =
                t.exps(j, ai) * (inv_denom - inv_pos);  // P_ja - X_ja
            const double dot = sims(j, ai);
            const double* za = batch.z.row(ai);
            for (std::size_t c = 0; c < g; ++c) {
                pos_out[c] += scale * weight * (za[c] - dot * zj[c]);
            }
        }
        for (int a : batch.negatives[j]) {
            const auto ai = static_cast<std::size_t>(a);
            const double weight = t.exps(j, ai) * inv_denom;  // P_ja
            const double dot = sims(j, ai);
            const double* za = batch.z.row(ai);
            for (std::size_t c = 0; c < g; ++c) {
                neg_out[c] += scale * weight * (za[c] - dot * zj[c]);
            }
        }
    }
    return terms;
}

}  // namespace fedsim
