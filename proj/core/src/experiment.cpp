#include "xdcl/experiment.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "xdcl/error.hpp"
#include "xdcl/rng.hpp"

namespace xdcl {

namespace {

using nlohmann::json;

constexpr std::uint64_t kDataStream = 0x64617461ULL;
constexpr std::uint64_t kTaskStreamTag = 0x74736b73ULL;

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream is(value);
    while (std::getline(is, part, ',')) {
        part = trim(part);
        if (!part.empty()) parts.push_back(part);
    }
    return parts;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t consumed = 0;
        const long long v = std::stoll(value, &consumed);
        if (consumed != value.size() || v < 0) throw std::invalid_argument(value);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a nonnegative integer, got '" +
                          value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t consumed = 0;
        const unsigned long long v = std::stoull(value, &consumed);
        if (consumed != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + value +
                          "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t consumed = 0;
        const double v = std::stod(value, &consumed);
        if (consumed != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
    }
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "features_path", "num_classes", "num_domains", "input_dim", "per_cell_count",
        "shift_strength", "noise_sigma", "method", "held_out", "seed", "num_tasks",
        "epochs_per_domain", "batch_size", "learning_rate", "lambda", "tau", "gamma",
        "repetitions", "memory_capacity", "memory_mode", "hidden_dims", "feature_dim",
        "activation", "rank", "head_init", "out", "jobs"};
    return keys;
}

void apply_config_entry(ExperimentConfig& config, const std::string& key,
                        const std::string& value) {
    if (key == "features_path") {
        config.data.features_path = value;
    } else if (key == "num_classes") {
        config.data.synthetic.num_classes = parse_size(key, value);
    } else if (key == "num_domains") {
        config.data.synthetic.num_domains = parse_size(key, value);
    } else if (key == "input_dim") {
        config.data.synthetic.feature_dim = parse_size(key, value);
    } else if (key == "per_cell_count") {
        config.data.synthetic.per_cell_count = parse_size(key, value);
    } else if (key == "shift_strength") {
        config.data.synthetic.shift_strength = parse_double(key, value);
    } else if (key == "noise_sigma") {
        config.data.synthetic.noise_sigma = parse_double(key, value);
    } else if (key == "method") {
        config.methods.clear();
        for (const auto& name : split_list(value)) config.methods.push_back(parse_method(name));
        if (config.methods.empty()) throw ConfigError("config key 'method': empty method list");
    } else if (key == "held_out") {
        config.held_out.clear();
        if (value != "all") {
            for (const auto& part : split_list(value)) {
                config.held_out.push_back(parse_size(key, part));
            }
        }
    } else if (key == "seed") {
        config.seeds.clear();
        for (const auto& part : split_list(value)) config.seeds.push_back(parse_u64(key, part));
        if (config.seeds.empty()) throw ConfigError("config key 'seed': empty seed list");
    } else if (key == "num_tasks") {
        config.num_tasks = parse_size(key, value);
    } else if (key == "epochs_per_domain") {
        config.train.epochs_per_domain = parse_size(key, value);
    } else if (key == "batch_size") {
        config.train.batch_size = parse_size(key, value);
    } else if (key == "learning_rate") {
        config.train.learning_rate = parse_double(key, value);
    } else if (key == "lambda") {
        config.train.lambda = parse_double(key, value);
    } else if (key == "tau") {
        config.train.tau = parse_double(key, value);
    } else if (key == "gamma") {
        config.train.gamma = parse_double(key, value);
    } else if (key == "repetitions") {
        config.train.repetitions = parse_size(key, value);
    } else if (key == "memory_capacity") {
        config.train.memory_capacity = parse_size(key, value);
    } else if (key == "memory_mode") {
        if (value == "per_domain") {
            config.train.memory_mode = MemoryMode::per_class_per_domain;
        } else if (value == "per_class") {
            config.train.memory_mode = MemoryMode::per_class;
        } else {
            throw ConfigError("config key 'memory_mode': expected per_domain or per_class, got '" +
                              value + "'");
        }
    } else if (key == "hidden_dims") {
        config.train.hidden_dims.clear();
        for (const auto& part : split_list(value)) {
            config.train.hidden_dims.push_back(parse_size(key, part));
        }
    } else if (key == "feature_dim") {
        config.train.feature_dim = parse_size(key, value);
    } else if (key == "activation") {
        if (value == "relu") {
            config.train.activation = Activation::relu;
        } else if (value == "tanh") {
            config.train.activation = Activation::tanh;
        } else {
            throw ConfigError("config key 'activation': expected relu or tanh, got '" + value +
                              "'");
        }
    } else if (key == "rank") {
        config.train.rank = parse_size(key, value);
    } else if (key == "head_init") {
        if (value == "uniform") {
            config.train.head_init = HeadInit::uniform;
        } else if (value == "class_mean") {
            config.train.head_init = HeadInit::class_mean;
        } else {
            throw ConfigError("config key 'head_init': expected uniform or class_mean, got '" +
                              value + "'");
        }
    } else if (key == "out") {
        config.out_dir = value;
    } else if (key == "jobs") {
        config.jobs = std::max<std::size_t>(1, parse_size(key, value));
    } else {
        std::string valid;
        for (const auto& k : config_keys()) {
            if (!valid.empty()) valid += ", ";
            valid += k;
        }
        throw ConfigError("unknown config key '" + key + "' (valid keys: " + valid + ")");
    }
}

ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    ExperimentConfig config;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value, got '" + line + "'");
        }
        apply_config_entry(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    for (const auto& [key, value] : overrides) apply_config_entry(config, key, value);
    return config;
}

namespace {

json matrix_to_json(const AccuracyMatrix& matrix) {
    const std::size_t q = matrix.num_tasks();
    json rows = json::array();
    for (std::size_t t = 0; t < q; ++t) {
        json row = json::array();
        for (std::size_t j = 0; j < q; ++j) {
            if (j >= t && matrix.is_set(t, j)) {
                row.push_back(matrix.at(t, j));
            } else {
                row.push_back(nullptr);
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

AccuracyMatrix matrix_from_json(const json& rows) {
    AccuracyMatrix matrix(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t j = t; j < rows.size(); ++j) {
            const auto& cell = rows[t][j];
            if (!cell.is_null()) matrix.set(t, j, cell.get<double>());
        }
    }
    return matrix;
}

json domain_results_to_json(const std::vector<AccuracyMatrix>& matrices,
                            const std::vector<double>& avg, const std::vector<double>& bw) {
    json out = json::array();
    for (std::size_t dom = 0; dom < matrices.size(); ++dom) {
        out.push_back(json{{"matrix", matrix_to_json(matrices[dom])},
                           {"average_accuracy", avg[dom]},
                           {"backward_transfer", bw[dom]}});
    }
    return out;
}

json config_to_json(const ExperimentConfig& config) {
    json hidden = json::array();
    for (std::size_t h : config.train.hidden_dims) hidden.push_back(h);
    json out{
        {"features_path", config.data.features_path},
        {"num_classes", config.data.synthetic.num_classes},
        {"num_domains", config.data.synthetic.num_domains},
        {"input_dim", config.data.synthetic.feature_dim},
        {"per_cell_count", config.data.synthetic.per_cell_count},
        {"shift_strength", config.data.synthetic.shift_strength},
        {"noise_sigma", config.data.synthetic.noise_sigma},
        {"num_tasks", config.num_tasks},
        {"epochs_per_domain", config.train.epochs_per_domain},
        {"batch_size", config.train.batch_size},
        {"learning_rate", config.train.learning_rate},
        {"lambda", config.train.lambda},
        {"tau", config.train.tau},
        {"gamma", config.train.gamma},
        {"repetitions", config.train.repetitions},
        {"memory_capacity", config.train.memory_capacity},
        {"memory_mode", config.train.memory_mode == MemoryMode::per_class_per_domain
                            ? "per_domain"
                            : "per_class"},
        {"hidden_dims", hidden},
        {"feature_dim", config.train.feature_dim},
        {"activation", config.train.activation == Activation::relu ? "relu" : "tanh"},
        {"rank", config.train.rank},
        {"head_init", config.train.head_init == HeadInit::uniform ? "uniform" : "class_mean"},
    };
    return out;
}

}  // namespace

std::string report_to_json(const ExperimentConfig& config, const CellResult& cell) {
    json reps = json::array();
    for (const auto& rep : cell.report.reps) {
        json orders = json::array();
        for (const auto& order : rep.domain_orders) orders.push_back(order);
        reps.push_back(json{
            {"domains",
             domain_results_to_json(rep.accuracy, rep.avg_accuracy, rep.backward_transfer)},
            {"domain_orders", std::move(orders)}});
    }
    json doc{
        {"schema_version", 1},
        {"method", method_name(cell.method)},
        {"held_out", cell.held_out},
        {"seed", cell.seed},
        {"config", config_to_json(config)},
        {"seed_provenance", json{{"base_seed", cell.seed}, {"data_seed", cell.data_seed}}},
        {"repetitions", std::move(reps)},
        {"averaged", domain_results_to_json(cell.report.averaged, cell.report.avg_accuracy,
                                            cell.report.backward_transfer)},
        {"unseen_accuracy", cell.report.unseen_accuracy},
        {"seen_accuracy_mean", cell.report.seen_accuracy_mean},
        {"bw_seen_mean", cell.report.bw_seen_mean},
        {"bw_unseen", cell.report.bw_unseen},
        {"wall_clock_sec", cell.wall_clock_sec},
    };
    return doc.dump(2) + "\n";
}

namespace {

void verify_domain_block(const json& block, const char* where) {
    const AccuracyMatrix matrix = matrix_from_json(block.at("matrix"));
    const double stored_avg = block.at("average_accuracy").get<double>();
    const double stored_bw = block.at("backward_transfer").get<double>();
    if (average_accuracy(matrix) != stored_avg) {
        throw Error(std::string("report inconsistency: average_accuracy in ") + where);
    }
    if (backward_transfer(matrix) != stored_bw) {
        throw Error(std::string("report inconsistency: backward_transfer in ") + where);
    }
}

}  // namespace

void verify_report_consistency(const std::string& report_json) {
    const json doc = json::parse(report_json);
    for (const auto& rep : doc.at("repetitions")) {
        for (const auto& block : rep.at("domains")) verify_domain_block(block, "repetition");
    }
    const auto& averaged = doc.at("averaged");
    for (const auto& block : averaged) verify_domain_block(block, "averaged");
    const auto& last = averaged.back();
    if (doc.at("unseen_accuracy").get<double>() != last.at("average_accuracy").get<double>()) {
        throw Error("report inconsistency: unseen_accuracy");
    }
    if (doc.at("bw_unseen").get<double>() != last.at("backward_transfer").get<double>()) {
        throw Error("report inconsistency: bw_unseen");
    }
}

namespace {

struct Cell {
    Method method;
    std::size_t held_out;
    std::uint64_t seed;
};

std::string resolve_out_dir(const ExperimentConfig& config) {
    if (!config.out_dir.empty()) return config.out_dir;
    if (const char* env = std::getenv("XDCL_OUT_DIR"); env != nullptr && *env != '\0') return env;
    return "reports";
}

CellResult run_cell(const ExperimentConfig& config, const Cell& cell,
                    const DomainDataset* shared_raw) {
    const auto started = std::chrono::steady_clock::now();
    CellResult result;
    result.method = cell.method;
    result.held_out = cell.held_out;
    result.seed = cell.seed;
    result.data_seed = derive_seed(cell.seed, {kDataStream});

    DomainDataset raw;
    const DomainDataset* raw_ptr = shared_raw;
    if (raw_ptr == nullptr) {
        SyntheticConfig synth = config.data.synthetic;
        synth.seed = result.data_seed;
        raw = generate_synthetic(synth);
        raw_ptr = &raw;
    }
    const DomainDataset view = hold_out_domain(*raw_ptr, cell.held_out);
    const TaskStream tasks =
        split_tasks(view, config.num_tasks, derive_seed(cell.seed, {kTaskStreamTag}));

    TrainConfig train = config.train;
    train.seed = cell.seed;
    result.report = run_experiment(view, tasks, train, cell.method);
    result.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

std::string report_filename(const Cell& cell) {
    return "report_" + method_name(cell.method) + "_h" + std::to_string(cell.held_out) + "_s" +
           std::to_string(cell.seed) + ".json";
}

}  // namespace

int run_grid(const ExperimentConfig& config) {
    namespace fs = std::filesystem;
    std::vector<Cell> cells;
    DomainDataset loaded;
    const DomainDataset* shared_raw = nullptr;
    std::string out_dir;
    try {
        validate(config.train);
        if (config.methods.empty()) throw ConfigError("no methods configured");
        if (config.seeds.empty()) throw ConfigError("no seeds configured");

        std::size_t num_domains = config.data.synthetic.num_domains;
        if (!config.data.is_synthetic()) {
            loaded = load_features_table(config.data.features_path);
            shared_raw = &loaded;
            num_domains = loaded.num_source_domains();
        }
        if (num_domains < 2) {
            throw ConfigError("leave-one-domain-out needs at least 2 domains, got " +
                              std::to_string(num_domains));
        }
        std::vector<std::size_t> held_out = config.held_out;
        if (held_out.empty()) {
            for (std::size_t k = 0; k < num_domains; ++k) held_out.push_back(k);
        }
        for (std::size_t k : held_out) {
            if (k >= num_domains) {
                throw ConfigError("held_out domain " + std::to_string(k) + " out of range [0, " +
                                  std::to_string(num_domains) + ")");
            }
        }
        for (std::uint64_t seed : config.seeds) {
            for (std::size_t k : held_out) {
                for (Method m : config.methods) cells.push_back(Cell{m, k, seed});
            }
        }
        out_dir = resolve_out_dir(config);
        fs::create_directories(out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntimeError;
    }

    std::vector<CellResult> results(cells.size());
    std::vector<std::string> failures(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex io_mutex;
    const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(config.jobs, 1),
                                                      cells.size());
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            try {
                results[i] = run_cell(config, cells[i], shared_raw);
                std::lock_guard<std::mutex> lock(io_mutex);
                std::cout << "done " << method_name(cells[i].method) << " held_out="
                          << cells[i].held_out << " seed=" << cells[i].seed << " unseen_acc="
                          << results[i].report.unseen_accuracy << "\n";
            } catch (const std::exception& e) {
                failures[i] = e.what();
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    bool any_failed = false;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!failures[i].empty()) {
            any_failed = true;
            std::cerr << "cell " << report_filename(cells[i]) << " FAILED: " << failures[i] << "\n";
            continue;
        }
        const std::string body = report_to_json(config, results[i]);
        verify_report_consistency(body);
        const fs::path path = fs::path(out_dir) / report_filename(cells[i]);
        std::ofstream out(path);
        out << body;
        if (!out) {
            std::cerr << "cannot write " << path << "\n";
            any_failed = true;
        }
    }

    // Summary: methods x held-out domains, unseen-domain accuracy averaged
    // over seeds.
    std::vector<std::size_t> held_out_list;
    for (const Cell& c : cells) {
        if (std::find(held_out_list.begin(), held_out_list.end(), c.held_out) ==
            held_out_list.end()) {
            held_out_list.push_back(c.held_out);
        }
    }
    std::ostringstream csv;
    csv << "method";
    for (std::size_t k : held_out_list) csv << ",held_out_" << k;
    csv << "\n";
    std::ostringstream table;
    table << "\nunseen-domain accuracy (rows: methods, columns: held-out domain)\n";
    for (Method m : config.methods) {
        csv << method_name(m);
        table << "  " << method_name(m);
        for (std::size_t pad = method_name(m).size(); pad < 20; ++pad) table << ' ';
        for (std::size_t k : held_out_list) {
            double sum = 0.0;
            std::size_t count = 0;
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (cells[i].method == m && cells[i].held_out == k && failures[i].empty()) {
                    sum += results[i].report.unseen_accuracy;
                    ++count;
                }
            }
            if (count == 0) {
                csv << ",FAILED";
                table << "  FAILED";
            } else {
                const double mean = sum / static_cast<double>(count);
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.4f", mean);
                csv << "," << buf;
                table << "  " << buf;
            }
        }
        csv << "\n";
        table << "\n";
    }
    {
        const fs::path path = fs::path(out_dir) / "summary.csv";
        std::ofstream out(path);
        out << csv.str();
    }
    std::cout << table.str();
    if (any_failed) {
        std::cerr << "some cells failed; summary marks them FAILED\n";
        return kExitRuntimeError;
    }
    return kExitOk;
}

}  // namespace xdcl
