#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/report.hpp"

namespace fedsim {

/// Builds the dataset a run trains on. Synthetic data and the test split of
/// file-backed data both derive from the seed.
LabeledDataset load_experiment_dataset(const ExperimentConfig& config, std::uint64_t seed);

/// Wraps a standalone dataset as a single client: its train split becomes the
/// client's data and its test split is filtered to the train-observed classes.
ClientData dataset_as_client(const LabeledDataset& ds, std::size_t client_id);

struct SeedRun {
    std::uint64_t seed = 0;
    EvalReport report;
    std::vector<RoundTrace> traces;
    EncoderParams encoder;  // repper: converged phi; baselines: joint encoder
    std::optional<JointModel> joint;
    std::vector<PersonalizedModel> heads;  // repper heads, or +FT heads
    ClientPartition partition;
    std::uint64_t partition_digest = 0;
    std::uint64_t config_digest = 0;
};

/// partition -> stage 1 (or baseline rounds) -> stage 2 / fine-tuning ->
/// evaluation. Deterministic in (config, seed) regardless of worker threads.
SeedRun run_seed(const LabeledDataset& ds, const ExperimentConfig& config,
                 std::uint64_t seed, Method method);

}  // namespace fedsim
