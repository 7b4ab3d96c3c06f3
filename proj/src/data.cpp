#include "fedsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "fedsim/rng.hpp"

namespace fedsim {

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& ds,
                                                       const std::vector<std::size_t>& pool) {
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t idx : pool) {
        by_class[static_cast<std::size_t>(ds.labels[idx])].push_back(idx);
    }
    return by_class;
}

}  // namespace

std::vector<std::size_t> LabeledDataset::train_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i) {
        if (split.empty() || split[i] == 0) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> LabeledDataset::test_indices() const {
    std::vector<std::size_t> out;
    if (split.empty()) {
        return out;
    }
    for (std::size_t i = 0; i < size(); ++i) {
        if (split[i] == 1) {
            out.push_back(i);
        }
    }
    return out;
}

LabeledDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(path + ":1: missing header row");
    }
    if (line.rfind("label", 0) != 0) {
        throw ParseError(path + ":1: header must start with 'label'");
    }
    std::size_t dim = 0;
    for (char c : line) {
        if (c == ',') {
            ++dim;
        }
    }
    if (dim == 0) {
        throw ParseError(path + ":1: no feature columns in header");
    }

    std::vector<int> labels;
    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::stringstream row(line);
        std::string field;
        if (!std::getline(row, field, ',')) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": empty row");
        }
        std::size_t used = 0;
        long label = 0;
        try {
            label = std::stol(field, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != field.size() || label < 0) {
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": label must be a non-negative integer, got '" + field + "'");
        }
        labels.push_back(static_cast<int>(label));
        std::size_t count = 0;
        while (std::getline(row, field, ',')) {
            char* end = nullptr;
            const double v = std::strtod(field.c_str(), &end);
            if (end == field.c_str() || *end != '\0' || !std::isfinite(v)) {
                throw ParseError(path + ":" + std::to_string(line_no) +
                                 ": bad feature value '" + field + "'");
            }
            values.push_back(v);
            ++count;
        }
        if (count != dim) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(dim) + " features, got " + std::to_string(count));
        }
    }
    if (labels.empty()) {
        throw DataError(path + ": no data rows");
    }

    LabeledDataset ds;
    ds.features = Matrix(labels.size(), dim);
    std::copy(values.begin(), values.end(), ds.features.data());
    ds.labels = std::move(labels);
    ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;

    std::vector<std::size_t> counts(ds.num_classes, 0);
    for (int y : ds.labels) {
        ++counts[static_cast<std::size_t>(y)];
    }
    for (int c = 0; c < ds.num_classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            std::cerr << "warning: " << path << ": class " << c << " has no samples\n";
        }
    }
    return ds;
}

void write_csv(const LabeledDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    std::string line = "label";
    for (std::size_t j = 0; j < ds.dim(); ++j) {
        line += ",f" + std::to_string(j);
    }
    line += '\n';
    out << line;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        line = std::to_string(ds.labels[i]);
        const double* row = ds.features.row(i);
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            line += ',';
            append_double(line, row[j]);
        }
        line += '\n';
        out << line;
    }
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

LabeledDataset load_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "FDS1", 4) != 0) {
        throw DataError(path + ": bad magic, not an FDS1 file");
    }
    std::uint32_t n = 0;
    std::uint32_t d = 0;
    std::uint32_t c = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&d), 4);
    in.read(reinterpret_cast<char*>(&c), 4);
    if (!in || n == 0 || d == 0 || c == 0) {
        throw DataError(path + ": bad dimensions in header");
    }
    LabeledDataset ds;
    ds.num_classes = static_cast<int>(c);
    ds.labels.resize(n);
    std::vector<std::uint32_t> raw_labels(n);
    in.read(reinterpret_cast<char*>(raw_labels.data()), 4 * static_cast<std::size_t>(n));
    std::vector<float> raw(static_cast<std::size_t>(n) * d);
    in.read(reinterpret_cast<char*>(raw.data()), 4 * raw.size());
    if (!in) {
        throw DataError(path + ": truncated file");
    }
    ds.features = Matrix(n, d);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        ds.features.data()[i] = static_cast<double>(raw[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (raw_labels[i] >= c) {
            throw DataError(path + ": label out of range at sample " + std::to_string(i));
        }
        ds.labels[i] = static_cast<int>(raw_labels[i]);
    }
    return ds;
}

void write_binary(const LabeledDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    out.write("FDS1", 4);
    const std::uint32_t n = static_cast<std::uint32_t>(ds.size());
    const std::uint32_t d = static_cast<std::uint32_t>(ds.dim());
    const std::uint32_t c = static_cast<std::uint32_t>(ds.num_classes);
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(&c), 4);
    for (int y : ds.labels) {
        const std::uint32_t v = static_cast<std::uint32_t>(y);
        out.write(reinterpret_cast<const char*>(&v), 4);
    }
    std::vector<float> raw(ds.features.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = static_cast<float>(ds.features.data()[i]);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), 4 * raw.size());
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

void assign_test_split(LabeledDataset& ds, double test_fraction, RngStream& rng) {
    if (test_fraction < 0.0 || test_fraction >= 1.0) {
        throw ConfigError("test_fraction must be in [0, 1)");
    }
    ds.split.assign(ds.size(), 0);
    if (test_fraction == 0.0) {
        return;
    }
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        all[i] = i;
    }
    for (const auto& members : indices_by_class(ds, all)) {
        if (members.empty()) {
            continue;
        }
        const std::size_t want =
            static_cast<std::size_t>(std::floor(test_fraction * members.size()));
        const auto perm = rng.permutation(members.size());
        for (std::size_t k = 0; k < want; ++k) {
            ds.split[members[perm[k]]] = 1;
        }
    }
}

GaussianMixture make_gaussian_mixture(int classes, std::size_t dim, double spread,
                                      double separation, RngStream& rng) {
    if (classes < 2 || dim < 2) {
        throw ConfigError("gaussian mixture: need classes >= 2 and dim >= 2");
    }
    if (spread < 0.0 || separation <= 0.0) {
        throw ConfigError("gaussian mixture: spread >= 0 and separation > 0 required");
    }
    Matrix centroids(classes, dim);
    for (std::size_t i = 0; i < centroids.size(); ++i) {
        centroids.data()[i] = rng.normal();
    }
    // Rescale so the closest centroid pair is exactly `separation` apart.
    double min_dist = std::numeric_limits<double>::infinity();
    for (int a = 0; a < classes; ++a) {
        for (int b = a + 1; b < classes; ++b) {
            double sq = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double diff = centroids(a, j) - centroids(b, j);
                sq += diff * diff;
            }
            min_dist = std::min(min_dist, std::sqrt(sq));
        }
    }
    while (min_dist <= 0.0) {
        // Coincident draws are vanishingly rare; redraw one centroid.
        for (std::size_t j = 0; j < dim; ++j) {
            centroids(0, j) = rng.normal();
        }
        min_dist = std::numeric_limits<double>::infinity();
        for (int a = 0; a < classes; ++a) {
            for (int b = a + 1; b < classes; ++b) {
                double sq = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    const double diff = centroids(a, j) - centroids(b, j);
                    sq += diff * diff;
                }
                min_dist = std::min(min_dist, std::sqrt(sq));
            }
        }
    }
    centroids *= separation / min_dist;
    return GaussianMixture{std::move(centroids), spread};
}

LabeledDataset sample_mixture(const GaussianMixture& mix, std::size_t per_class,
                              double test_fraction, RngStream& rng,
                              const std::vector<int>& components) {
    std::vector<int> comps = components;
    if (comps.empty()) {
        for (std::size_t c = 0; c < mix.centroids.rows(); ++c) {
            comps.push_back(static_cast<int>(c));
        }
    }
    const std::size_t dim = mix.centroids.cols();
    LabeledDataset ds;
    ds.num_classes = static_cast<int>(comps.size());
    ds.features = Matrix(per_class * comps.size(), dim);
    ds.labels.resize(per_class * comps.size());
    ds.split.assign(per_class * comps.size(), 0);
    const std::size_t test_count =
        static_cast<std::size_t>(std::floor(test_fraction * per_class));
    std::size_t row = 0;
    for (std::size_t k = 0; k < comps.size(); ++k) {
        const auto comp = static_cast<std::size_t>(comps[k]);
        if (comp >= mix.centroids.rows()) {
            throw ConfigError("sample_mixture: component index out of range");
        }
        for (std::size_t s = 0; s < per_class; ++s, ++row) {
            double* dst = ds.features.row(row);
            const double* mu = mix.centroids.row(comp);
            for (std::size_t j = 0; j < dim; ++j) {
                dst[j] = mu[j] + mix.spread * rng.normal();
            }
            ds.labels[row] = static_cast<int>(k);
            if (s >= per_class - test_count) {
                ds.split[row] = 1;
            }
        }
    }
    return ds;
}

LabeledDataset synth_gaussian_mixture(int classes, std::size_t per_class, std::size_t dim,
                                      double spread, double separation, RngStream& rng) {
    const GaussianMixture mix =
        make_gaussian_mixture(classes, dim, spread, separation, rng);
    return sample_mixture(mix, per_class, 0.2, rng);
}

ClientPartition dirichlet_partition(const LabeledDataset& ds, std::size_t num_clients,
                                    double alpha, std::size_t min_size, RngStream& rng,
                                    std::size_t retries) {
    if (num_clients == 0) {
        throw ConfigError("dirichlet_partition: need at least one client");
    }
    if (alpha <= 0.0) {
        throw ConfigError("dirichlet_partition: alpha must be positive");
    }
    const auto train = ds.train_indices();
    if (train.size() < num_clients * min_size) {
        throw PartitionError("dirichlet_partition: " + std::to_string(train.size()) +
                             " train samples cannot give " + std::to_string(num_clients) +
                             " clients at least " + std::to_string(min_size) + " each");
    }
    const auto by_class = indices_by_class(ds, train);

    for (std::size_t attempt = 0; attempt <= retries; ++attempt) {
        std::vector<std::vector<std::size_t>> assignment(num_clients);
        for (const auto& members : by_class) {
            if (members.empty()) {
                continue;
            }
            const auto shares = rng.dirichlet(alpha, num_clients);
            std::vector<double> cdf(num_clients);
            double acc = 0.0;
            for (std::size_t i = 0; i < num_clients; ++i) {
                acc += shares[i];
                cdf[i] = acc;
            }
            for (std::size_t idx : members) {
                const double u = rng.uniform() * acc;
                const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
                std::size_t client = static_cast<std::size_t>(it - cdf.begin());
                if (client >= num_clients) {
                    client = num_clients - 1;
                }
                assignment[client].push_back(idx);
            }
        }
        bool ok = true;
        for (const auto& bucket : assignment) {
            if (bucket.size() < min_size) {
                ok = false;
                break;
            }
        }
        if (!ok) {
            continue;
        }
        ClientPartition part;
        part.client_indices = std::move(assignment);
        part.alpha = alpha;
        std::size_t total = 0;
        for (auto& bucket : part.client_indices) {
            std::sort(bucket.begin(), bucket.end());
            part.counts.push_back(bucket.size());
            total += bucket.size();
        }
        for (std::size_t n : part.counts) {
            part.weights.push_back(static_cast<double>(n) / static_cast<double>(total));
        }
        return part;
    }
    throw PartitionError("dirichlet_partition: min_size " + std::to_string(min_size) +
                         " not satisfiable within " + std::to_string(retries) + " retries");
}

std::uint64_t partition_hash(const ClientPartition& part) {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& bucket : part.client_indices) {
        const std::uint64_t n = bucket.size();
        h = fnv1a64(&n, sizeof n, h);
        for (std::size_t idx : bucket) {
            const std::uint64_t v = idx;
            h = fnv1a64(&v, sizeof v, h);
        }
    }
    return h;
}

ClientData client_view(const LabeledDataset& ds, const ClientPartition& part,
                       std::size_t client, bool full_test) {
    if (client >= part.num_clients()) {
        throw ContractError("client_view: client index out of range");
    }
    ClientData view;
    view.client_id = client;
    const auto& train_idx = part.client_indices[client];
    view.train_x = take_rows(ds.features, train_idx);
    view.train_y.reserve(train_idx.size());
    std::set<int> classes;
    for (std::size_t idx : train_idx) {
        view.train_y.push_back(ds.labels[idx]);
        classes.insert(ds.labels[idx]);
    }
    view.observed_classes.assign(classes.begin(), classes.end());

    std::vector<std::size_t> test_idx;
    for (std::size_t idx : ds.test_indices()) {
        if (full_test || classes.count(ds.labels[idx]) > 0) {
            test_idx.push_back(idx);
        }
    }
    view.test_x = take_rows(ds.features, test_idx);
    view.test_y.reserve(test_idx.size());
    for (std::size_t idx : test_idx) {
        view.test_y.push_back(ds.labels[idx]);
    }
    return view;
}

}  // namespace fedsim
