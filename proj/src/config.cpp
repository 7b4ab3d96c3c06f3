#include "fedsim/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "fedsim/rng.hpp"

namespace fedsim {

namespace {

std::string render_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) {
        throw ConfigError("bad numeric value '" + s + "'");
    }
    return v;
}

std::uint64_t parse_u64(const std::string& s) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0' || s.front() == '-') {
        throw ConfigError("bad integer value '" + s + "'");
    }
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "on" || s == "1") return true;
    if (s == "false" || s == "off" || s == "0") return false;
    throw ConfigError("bad boolean value '" + s + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& s) {
    std::vector<T> out;
    std::stringstream row(s);
    std::string field;
    while (std::getline(row, field, ',')) {
        if (!field.empty()) {
            out.push_back(static_cast<T>(parse_u64(field)));
        }
    }
    return out;
}

template <typename T>
std::string render_list(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? "," : "") + std::to_string(v[i]);
    }
    return out;
}

std::string source_name(DataSource s) {
    switch (s) {
        case DataSource::synth: return "synth";
        case DataSource::csv: return "csv";
        case DataSource::binary: return "binary";
    }
    return "?";
}

DataSource source_from_name(const std::string& s) {
    if (s == "synth") return DataSource::synth;
    if (s == "csv") return DataSource::csv;
    if (s == "binary") return DataSource::binary;
    throw ConfigError("unknown data source '" + s + "'");
}

std::string optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind optimizer_from_name(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd") return OptimizerKind::sgd;
    throw ConfigError("unknown optimizer '" + s + "'");
}

struct SchemaEntry {
    const char* section;
    const char* key;
    const char* description;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<SchemaEntry>& schema() {
    using C = ExperimentConfig;
    static const std::vector<SchemaEntry> entries = {
        {"data", "source", "dataset source: synth | csv | binary",
         [](C& c, const std::string& v) { c.source = source_from_name(v); },
         [](const C& c) { return source_name(c.source); }},
        {"data", "path", "input file for csv/binary sources",
         [](C& c, const std::string& v) { c.data_path = v; },
         [](const C& c) { return c.data_path; }},
        {"data", "test_fraction", "held-out test share for csv/binary sources",
         [](C& c, const std::string& v) { c.test_fraction = parse_double(v); },
         [](const C& c) { return render_double(c.test_fraction); }},
        {"data", "classes", "synthetic mixture: number of classes",
         [](C& c, const std::string& v) { c.synth_classes = static_cast<int>(parse_u64(v)); },
         [](const C& c) { return std::to_string(c.synth_classes); }},
        {"data", "per_class", "synthetic mixture: samples per class",
         [](C& c, const std::string& v) { c.synth_per_class = parse_u64(v); },
         [](const C& c) { return std::to_string(c.synth_per_class); }},
        {"data", "dim", "synthetic mixture: feature dimension",
         [](C& c, const std::string& v) { c.synth_dim = parse_u64(v); },
         [](const C& c) { return std::to_string(c.synth_dim); }},
        {"data", "spread", "synthetic mixture: within-class stddev",
         [](C& c, const std::string& v) { c.synth_spread = parse_double(v); },
         [](const C& c) { return render_double(c.synth_spread); }},
        {"data", "separation", "synthetic mixture: closest centroid distance",
         [](C& c, const std::string& v) { c.synth_separation = parse_double(v); },
         [](const C& c) { return render_double(c.synth_separation); }},

        {"model", "encoder_hidden", "encoder hidden widths, comma separated",
         [](C& c, const std::string& v) { c.fed.encoder_hidden = parse_list<std::size_t>(v); },
         [](const C& c) { return render_list(c.fed.encoder_hidden); }},
        {"model", "embed_dim", "encoder output dimension g (must be < input dim)",
         [](C& c, const std::string& v) { c.fed.embed_dim = parse_u64(v); },
         [](const C& c) { return std::to_string(c.fed.embed_dim); }},
        {"model", "projection_head", "reserved flag; must stay off",
         [](C& c, const std::string& v) { c.fed.use_projection_head = parse_bool(v); },
         [](const C& c) { return c.fed.use_projection_head ? "true" : "false"; }},
        {"model", "head", "personalized head kind: logistic | linear-svm | mlp",
         [](C& c, const std::string& v) { c.fed.head_kind = head_kind_from_name(v); },
         [](const C& c) { return head_kind_name(c.fed.head_kind); }},
        {"model", "mlp_head_hidden", "hidden width of the mlp head",
         [](C& c, const std::string& v) { c.fed.mlp_head_hidden = parse_u64(v); },
         [](const C& c) { return std::to_string(c.fed.mlp_head_hidden); }},

        {"augment", "noise_sigma", "gaussian noise stddev per feature",
         [](C& c, const std::string& v) { c.fed.augmentation.noise_sigma = parse_double(v); },
         [](const C& c) { return render_double(c.fed.augmentation.noise_sigma); }},
        {"augment", "mask_prob", "probability of zeroing each feature",
         [](C& c, const std::string& v) { c.fed.augmentation.mask_prob = parse_double(v); },
         [](const C& c) { return render_double(c.fed.augmentation.mask_prob); }},
        {"augment", "flip", "horizontal flip (grid data only)",
         [](C& c, const std::string& v) { c.fed.augmentation.flip = parse_bool(v); },
         [](const C& c) { return c.fed.augmentation.flip ? "true" : "false"; }},
        {"augment", "shift_radius", "max shift in pixels (grid data only)",
         [](C& c, const std::string& v) { c.fed.augmentation.shift_radius = static_cast<int>(parse_u64(v)); },
         [](const C& c) { return std::to_string(c.fed.augmentation.shift_radius); }},
        {"augment", "grid_side", "grid side length; 0 for plain vectors",
         [](C& c, const std::string& v) { c.fed.augmentation.grid_side = static_cast<int>(parse_u64(v)); },
         [](const C& c) { return std::to_string(c.fed.augmentation.grid_side); }},

        {"federation", "method", "repper | fedavg | fedavg-ft | fedprox | fedprox-ft",
         [](C& c, const std::string& v) { c.fed.method = method_from_name(v); },
         [](const C& c) { return method_name(c.fed.method); }},
        {"federation", "clients", "number of clients K",
         [](C& c, const std::string& v) { c.fed.num_clients = parse_u64(v); },
         [](const C& c) { return std::to_string(c.fed.num_clients); }},
        {"federation", "participation", "fraction of clients per round, in (0, 1]",
         [](C& c, const std::string& v) { c.fed.participation = parse_double(v); },
         [](const C& c) { return render_double(c.fed.participation); }},
        {"federation", "rounds", "communication rounds T",
         [](C& c, const std::string& v) { c.fed.rounds = parse_u64(v); },
         [](const C& c) { return std::to_string(c.fed.rounds); }},
        {"federation", "local_epochs", "local epochs per round (stage 1 / baselines)",
         [](C& c, const std::string& v) { c.fed.crl_epochs = parse_u64(v); },
         [](const C& c) { return std::to_string(c.fed.crl_epochs); }},
        {"federation", "pcl_epochs", "personalized head training epochs (stage 2)",
         [](C& c, const std::string& v) { c.fed.pcl_epochs = parse_u64(v); },
         [](const C& c) { return std::to_string(c.fed.pcl_epochs); }},
        {"federation", "ft_epochs", "baseline head fine-tuning epochs",
         [](C& c, const std::string& v) { c.fed.ft_epochs = parse_u64(v); },
         [](const C& c) { return std::to_string(c.fed.ft_epochs); }},
        {"federation", "adapt_iterations", "new-client head training epochs",
         [](C& c, const std::string& v) { c.fed.adapt_iterations = parse_u64(v); },
         [](const C& c) { return std::to_string(c.fed.adapt_iterations); }},
        {"federation", "batch_size", "minibatch size B (source samples)",
         [](C& c, const std::string& v) { c.fed.batch_size = parse_u64(v); },
         [](const C& c) { return std::to_string(c.fed.batch_size); }},
        {"federation", "lr_representation", "stage-1 / baseline learning rate",
         [](C& c, const std::string& v) { c.fed.lr_representation = parse_double(v); },
         [](const C& c) { return render_double(c.fed.lr_representation); }},
        {"federation", "lr_classifier", "head training learning rate",
         [](C& c, const std::string& v) { c.fed.lr_classifier = parse_double(v); },
         [](const C& c) { return render_double(c.fed.lr_classifier); }},
        {"federation", "lr_decay", "factor applied from round ceil(2T/3); 1 disables",
         [](C& c, const std::string& v) { c.fed.lr_decay = parse_double(v); },
         [](const C& c) { return render_double(c.fed.lr_decay); }},
        {"federation", "temperature", "contrastive temperature tau",
         [](C& c, const std::string& v) { c.fed.temperature = parse_double(v); },
         [](const C& c) { return render_double(c.fed.temperature); }},
        {"federation", "dirichlet_alpha", "partition concentration alpha",
         [](C& c, const std::string& v) { c.fed.dirichlet_alpha = parse_double(v); },
         [](const C& c) { return render_double(c.fed.dirichlet_alpha); }},
        {"federation", "min_client_size", "minimum train samples per client",
         [](C& c, const std::string& v) { c.fed.min_client_size = parse_u64(v); },
         [](const C& c) { return std::to_string(c.fed.min_client_size); }},
        {"federation", "fedprox_mu", "proximal coefficient for fedprox",
         [](C& c, const std::string& v) { c.fed.fedprox_mu = parse_double(v); },
         [](const C& c) { return render_double(c.fed.fedprox_mu); }},
        {"federation", "optimizer", "adam | sgd",
         [](C& c, const std::string& v) { c.fed.optimizer = optimizer_from_name(v); },
         [](const C& c) { return optimizer_name(c.fed.optimizer); }},
        {"federation", "weight_decay", "weight decay coefficient",
         [](C& c, const std::string& v) { c.fed.weight_decay = parse_double(v); },
         [](const C& c) { return render_double(c.fed.weight_decay); }},
        {"federation", "full_test_eval", "evaluate on the full test split",
         [](C& c, const std::string& v) { c.fed.full_test_eval = parse_bool(v); },
         [](const C& c) { return c.fed.full_test_eval ? "true" : "false"; }},

        {"run", "seeds", "seed list, comma separated",
         [](C& c, const std::string& v) { c.seeds = parse_list<std::uint64_t>(v); },
         [](const C& c) { return render_list(c.seeds); }},
        {"run", "output_dir", "directory for reports, metrics and checkpoints",
         [](C& c, const std::string& v) { c.output_dir = v; },
         [](const C& c) { return c.output_dir; }},
    };
    return entries;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

void ExperimentConfig::validate() const {
    if (source != DataSource::synth && data_path.empty()) {
        throw ConfigError("data.path is required for csv/binary sources");
    }
    if (test_fraction < 0.0 || test_fraction >= 1.0) {
        throw ConfigError("data.test_fraction must be in [0, 1)");
    }
    if (source == DataSource::synth) {
        if (synth_classes < 2 || synth_dim < 2 || synth_per_class == 0) {
            throw ConfigError("synthetic data needs classes >= 2, dim >= 2, per_class >= 1");
        }
        if (synth_spread < 0.0 || synth_separation <= 0.0) {
            throw ConfigError("synthetic data needs spread >= 0 and separation > 0");
        }
        if (fed.embed_dim >= synth_dim) {
            throw ConfigError("model.embed_dim must be smaller than the input dimension");
        }
    }
    if (seeds.empty()) {
        throw ConfigError("run.seeds must list at least one seed");
    }
    if (output_dir.empty()) {
        throw ConfigError("run.output_dir must not be empty");
    }
    fed.validate();
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig config;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find('#');
        if (comment != std::string::npos) {
            line = line.substr(0, comment);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ParseError(origin + ":" + std::to_string(line_no) +
                                 ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(origin + ":" + std::to_string(line_no) +
                             ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const SchemaEntry* entry = nullptr;
        for (const auto& e : schema()) {
            if (section == e.section && key == e.key) {
                entry = &e;
                break;
            }
        }
        if (!entry) {
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": unknown config key '" + key + "' in section [" +
                              section + "]");
        }
        try {
            entry->set(config, value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return config;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), path);
}

std::string config_schema_help() {
    ExperimentConfig defaults;
    std::string out = "Config keys (key = default):\n";
    const char* current = "";
    for (const auto& e : schema()) {
        if (std::string(current) != e.section) {
            current = e.section;
            out += "\n[" + std::string(e.section) + "]\n";
        }
        std::string value = e.get(defaults);
        if (value.empty()) {
            value = "(empty)";
        }
        out += "  " + std::string(e.key) + " = " + value + "\n      " + e.description + "\n";
    }
    return out;
}

std::vector<std::string> canonical_config_lines(const ExperimentConfig& config) {
    std::vector<std::string> lines;
    for (const auto& e : schema()) {
        lines.push_back(std::string(e.section) + "." + e.key + " = " + e.get(config));
    }
    return lines;
}

std::uint64_t config_hash(const ExperimentConfig& config, std::uint64_t seed) {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& line : canonical_config_lines(config)) {
        h = fnv1a64(line, h);
        h = fnv1a64("\n", h);
    }
    h = fnv1a64(&seed, sizeof seed, h);
    return h;
}

}  // namespace fedsim
