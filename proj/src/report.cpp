#include "fedsim/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fedsim/rng.hpp"
#include "fedsim/threading.hpp"

namespace fedsim {

namespace {

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t hash_from_hex(const std::string& s) {
    return std::strtoull(s.c_str(), nullptr, 16);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

EvalReport evaluate(const std::string& method, std::uint64_t config_hash,
                    const std::vector<ClientData>& clients, const PredictFn& predict) {
    std::vector<ClientReport> slots(clients.size());
    std::vector<std::uint8_t> present(clients.size(), 0);
    parallel_for(clients.size(), [&](std::size_t k) {
        const ClientData& client = clients[k];
        if (client.test_x.rows() == 0) {
            return;  // absent from the report, not zero
        }
        const auto preds = predict(client.client_id, client.test_x);
        if (preds.size() != client.test_y.size()) {
            throw ContractError("evaluate: prediction count mismatch");
        }
        ClientReport rep;
        rep.client_id = client.client_id;
        rep.n_test = client.test_y.size();
        for (std::size_t i = 0; i < preds.size(); ++i) {
            auto& cell = rep.class_counts[client.test_y[i]];
            ++cell.total;
            if (preds[i] == client.test_y[i]) {
                ++cell.correct;
                ++rep.n_correct;
            }
        }
        rep.top1 = static_cast<double>(rep.n_correct) / static_cast<double>(rep.n_test);
        for (const auto& [cls, count] : rep.class_counts) {
            rep.per_class[cls] = count.accuracy();
        }
        slots[k] = std::move(rep);
        present[k] = 1;
    });

    EvalReport report;
    report.method = method;
    report.config_hash = config_hash;
    for (std::size_t k = 0; k < slots.size(); ++k) {
        if (present[k]) {
            report.clients.push_back(std::move(slots[k]));
        }
    }
    std::sort(report.clients.begin(), report.clients.end(),
              [](const ClientReport& a, const ClientReport& b) {
                  return a.client_id < b.client_id;
              });
    double mean = 0.0;
    double weighted = 0.0;
    std::size_t total = 0;
    for (const auto& rep : report.clients) {
        mean += rep.top1;
        weighted += static_cast<double>(rep.n_correct);
        total += rep.n_test;
    }
    if (!report.clients.empty()) {
        report.federation_top1_mean = mean / static_cast<double>(report.clients.size());
        report.federation_top1_weighted = weighted / static_cast<double>(total);
    }
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::json doc;
    doc["method"] = report.method;
    doc["config_hash"] = hash_hex(report.config_hash);
    doc["clients"] = nlohmann::json::array();
    for (const auto& rep : report.clients) {
        nlohmann::json c;
        c["id"] = rep.client_id;
        c["n_test"] = rep.n_test;
        c["top1"] = rep.top1;
        nlohmann::json per_class = nlohmann::json::object();
        for (const auto& [cls, acc] : rep.per_class) {
            per_class[std::to_string(cls)] = acc;
        }
        c["per_class"] = per_class;
        doc["clients"].push_back(c);
    }
    doc["federation_top1_mean"] = report.federation_top1_mean;
    doc["federation_top1_weighted"] = report.federation_top1_weighted;
    return doc.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
    const auto doc = nlohmann::json::parse(text);
    EvalReport report;
    report.method = doc.at("method").get<std::string>();
    report.config_hash = hash_from_hex(doc.at("config_hash").get<std::string>());
    for (const auto& c : doc.at("clients")) {
        ClientReport rep;
        rep.client_id = c.at("id").get<std::size_t>();
        rep.n_test = c.at("n_test").get<std::size_t>();
        rep.top1 = c.at("top1").get<double>();
        rep.n_correct = static_cast<std::size_t>(
            std::llround(rep.top1 * static_cast<double>(rep.n_test)));
        for (const auto& [key, value] : c.at("per_class").items()) {
            rep.per_class[std::stoi(key)] = value.get<double>();
        }
        report.clients.push_back(std::move(rep));
    }
    report.federation_top1_mean = doc.at("federation_top1_mean").get<double>();
    report.federation_top1_weighted = doc.at("federation_top1_weighted").get<double>();
    return report;
}

void write_report_json(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    out << report_to_json(report);
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    out << "method,seed,round,mean_train_loss\n";
    for (const auto& row : rows) {
        out << row.method << ',' << row.seed << ',' << row.round << ','
            << format_double(row.mean_train_loss) << '\n';
    }
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

void export_embeddings(const EncoderParams& phi, const LabeledDataset& ds,
                       const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    const auto normalized = l2_normalize_rows(encoder_forward(phi, ds.features));
    std::string line = "label";
    for (std::size_t j = 0; j < phi.output_dim(); ++j) {
        line += ",z" + std::to_string(j);
    }
    out << line << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        line = std::to_string(ds.labels[i]);
        const double* row = normalized.normalized.row(i);
        for (std::size_t j = 0; j < phi.output_dim(); ++j) {
            line += ',';
            line += format_double(row[j]);
        }
        out << line << '\n';
    }
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    out << "FEDCKPT v" << ckpt.version << '\n';
    out << "stage " << ckpt.stage << '\n';
    out << "config_hash " << hash_hex(ckpt.config_hash) << '\n';
    out << "config_lines " << ckpt.config_lines.size() << '\n';
    for (const auto& line : ckpt.config_lines) {
        out << line << '\n';
    }
    out << "tensors " << ckpt.tensors.size() << '\n';
    std::size_t payload = 0;
    for (const auto& t : ckpt.tensors) {
        out << "tensor " << t.name << ' ' << t.value.rows() << ' ' << t.value.cols()
            << '\n';
        payload += t.value.size();
    }
    out << "payload " << payload << '\n';
    for (const auto& t : ckpt.tensors) {
        out.write(reinterpret_cast<const char*>(t.value.data()),
                  static_cast<std::streamsize>(t.value.size() * sizeof(double)));
    }
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    auto fail = [&](const std::string& what) -> LoadError {
        return LoadError(path + ": " + what);
    };
    std::string line;
    if (!std::getline(in, line)) {
        throw fail("empty file");
    }
    Checkpoint ckpt;
    {
        std::istringstream head(line);
        std::string magic;
        std::string version;
        head >> magic >> version;
        if (magic != "FEDCKPT") {
            throw fail("bad magic '" + magic + "'");
        }
        if (version != "v1") {
            throw fail("unsupported version '" + version + "'");
        }
        ckpt.version = 1;
    }
    auto expect_key = [&](const char* key) -> std::string {
        if (!std::getline(in, line)) {
            throw fail(std::string("truncated header, expected '") + key + "'");
        }
        std::istringstream row(line);
        std::string k;
        row >> k;
        if (k != key) {
            throw fail("expected '" + std::string(key) + "', got '" + k + "'");
        }
        std::string rest;
        std::getline(row, rest);
        if (!rest.empty() && rest.front() == ' ') {
            rest.erase(rest.begin());
        }
        return rest;
    };
    ckpt.stage = expect_key("stage");
    ckpt.config_hash = hash_from_hex(expect_key("config_hash"));
    const std::size_t config_count = std::stoul(expect_key("config_lines"));
    for (std::size_t i = 0; i < config_count; ++i) {
        if (!std::getline(in, line)) {
            throw fail("truncated config snapshot");
        }
        ckpt.config_lines.push_back(line);
    }
    const std::size_t tensor_count = std::stoul(expect_key("tensors"));
    std::size_t payload = 0;
    for (std::size_t i = 0; i < tensor_count; ++i) {
        if (!std::getline(in, line)) {
            throw fail("truncated tensor table");
        }
        std::istringstream row(line);
        std::string key;
        NamedTensor t;
        std::size_t rows = 0;
        std::size_t cols = 0;
        row >> key >> t.name >> rows >> cols;
        if (key != "tensor" || t.name.empty() || rows == 0 || cols == 0 || row.fail()) {
            throw fail("bad tensor declaration '" + line + "'");
        }
        t.value = Matrix(rows, cols);
        payload += t.value.size();
        ckpt.tensors.push_back(std::move(t));
    }
    const std::size_t declared_payload = std::stoul(expect_key("payload"));
    if (declared_payload != payload) {
        throw fail("payload size disagrees with tensor table");
    }
    for (auto& t : ckpt.tensors) {
        in.read(reinterpret_cast<char*>(t.value.data()),
                static_cast<std::streamsize>(t.value.size() * sizeof(double)));
        if (in.gcount() !=
            static_cast<std::streamsize>(t.value.size() * sizeof(double))) {
            throw fail("truncated payload at tensor '" + t.name + "'");
        }
    }
    char extra = 0;
    if (in.read(&extra, 1) && in.gcount() == 1) {
        throw fail("trailing bytes after payload");
    }
    return ckpt;
}

Checkpoint encoder_to_checkpoint(const EncoderParams& phi, const std::string& stage,
                                 std::uint64_t config_hash,
                                 std::vector<std::string> config_lines) {
    Checkpoint ckpt;
    ckpt.stage = stage;
    ckpt.config_hash = config_hash;
    ckpt.config_lines = std::move(config_lines);
    for (std::size_t i = 0; i < phi.layers.size(); ++i) {
        ckpt.tensors.push_back(
            {"layer" + std::to_string(i) + ".weight", phi.layers[i].weight});
        ckpt.tensors.push_back(
            {"layer" + std::to_string(i) + ".bias", phi.layers[i].bias});
    }
    return ckpt;
}

EncoderParams encoder_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.tensors.empty() || ckpt.tensors.size() % 2 != 0) {
        throw LoadError("checkpoint does not hold weight/bias pairs");
    }
    EncoderParams phi;
    const std::size_t layer_count = ckpt.tensors.size() / 2;
    for (std::size_t i = 0; i < layer_count; ++i) {
        const auto& w = ckpt.tensors[2 * i];
        const auto& b = ckpt.tensors[2 * i + 1];
        const std::string expected_w = "layer" + std::to_string(i) + ".weight";
        const std::string expected_b = "layer" + std::to_string(i) + ".bias";
        if (w.name != expected_w || b.name != expected_b) {
            throw LoadError("unexpected tensor names '" + w.name + "', '" + b.name + "'");
        }
        if (b.value.rows() != 1 || b.value.cols() != w.value.cols()) {
            throw LoadError("bias shape " + std::to_string(b.value.rows()) + "x" +
                            std::to_string(b.value.cols()) + " does not match weight " +
                            std::to_string(w.value.rows()) + "x" +
                            std::to_string(w.value.cols()));
        }
        if (i > 0 && w.value.rows() != phi.layers.back().weight.cols()) {
            throw LoadError("layer " + std::to_string(i) + " input " +
                            std::to_string(w.value.rows()) +
                            " does not chain from previous output " +
                            std::to_string(phi.layers.back().weight.cols()));
        }
        DenseLayer layer;
        layer.weight = w.value;
        layer.bias = b.value;
        layer.act =
            (i + 1 < layer_count) ? Activation::relu : Activation::identity;
        phi.layers.push_back(std::move(layer));
    }
    return phi;
}

void check_encoder_shapes(const Checkpoint& ckpt, const std::vector<std::size_t>& dims) {
    const EncoderParams phi = encoder_from_checkpoint(ckpt);
    const auto actual = phi.dims();
    if (actual != dims) {
        auto fmt = [](const std::vector<std::size_t>& d) {
            std::string s;
            for (std::size_t i = 0; i < d.size(); ++i) {
                s += (i ? "-" : "") + std::to_string(d[i]);
            }
            return s;
        };
        throw LoadError("encoder shape mismatch: checkpoint has " + fmt(actual) +
                        ", expected " + fmt(dims));
    }
}

}  // namespace fedsim
