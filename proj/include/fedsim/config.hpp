#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/federation.hpp"

namespace fedsim {

enum class DataSource { synth, csv, binary };

/// Everything a run needs: data source, model, federation knobs, seeds and
/// output location. Parsed from a flat `[section] key = value` file; unknown
/// keys are rejected and every field has a documented default.
struct ExperimentConfig {
    DataSource source = DataSource::synth;
    std::string data_path;
    double test_fraction = 0.2;  // csv/binary sources only
    int synth_classes = 10;
    std::size_t synth_per_class = 500;
    std::size_t synth_dim = 32;
    double synth_spread = 1.0;
    double synth_separation = 4.0;

    FederationConfig fed;

    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "out";

    void validate() const;
};

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig parse_config_file(const std::string& path);

/// One line per key: `section.key = default  description`.
std::string config_schema_help();

/// Canonical `key = value` rendering of every field in schema order; the
/// basis for config hashing and checkpoint snapshots.
std::vector<std::string> canonical_config_lines(const ExperimentConfig& config);

/// Hash of the canonical rendering plus the seed actually used by a run.
std::uint64_t config_hash(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace fedsim
