#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "xdcl/error.hpp"
#include "xdcl/experiment.hpp"

using namespace xdcl;

namespace {

namespace fs = std::filesystem;

std::string write_temp(const std::string& name, const std::string& body) {
    const auto path = (fs::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << body;
    return path;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string strip_wall_clock(const std::string& body) {
    std::istringstream in(body);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find("wall_clock_sec") == std::string::npos) out << line << "\n";
    }
    return out.str();
}

ExperimentConfig smoke_config(const std::string& out_dir) {
    ExperimentConfig config;
    config.data.synthetic.num_classes = 2;
    config.data.synthetic.num_domains = 2;
    config.data.synthetic.feature_dim = 4;
    config.data.synthetic.per_cell_count = 10;
    config.num_tasks = 1;
    config.methods = {Method::msl_mov};
    config.held_out = {1};
    config.train.epochs_per_domain = 1;
    config.train.repetitions = 1;
    config.train.hidden_dims = {4};
    config.train.feature_dim = 4;
    config.out_dir = out_dir;
    return config;
}

}  // namespace

TEST_CASE("parse_config: empty file yields the documented defaults") {
    const auto path = write_temp("xdcl_empty.cfg", "");
    const auto config = parse_config(path, {});
    CHECK(config.data.is_synthetic());
    CHECK(config.methods.size() == 1);
    CHECK(config.methods[0] == Method::msl_mov);
    CHECK(config.held_out.empty());
    CHECK(config.seeds == std::vector<std::uint64_t>{1});
    CHECK(config.num_tasks == 5);
    CHECK(config.train.tau == 2.0);
    CHECK(config.train.gamma == 0.96);
    CHECK(config.train.lambda == 1e-3);
    CHECK(config.train.learning_rate == 2e-2);
    CHECK(config.train.epochs_per_domain == 20);
    CHECK(config.train.batch_size == 32);
    CHECK(config.train.repetitions == 5);
    CHECK(config.train.memory_capacity == 5);
    fs::remove(path);
}

TEST_CASE("parse_config: flags override file values") {
    const auto path = write_temp("xdcl_gamma.cfg", "gamma = 0.96\nlambda = 0.5\n");
    const auto config = parse_config(path, {{"gamma", "0.5"}});
    CHECK(config.train.gamma == 0.5);
    CHECK(config.train.lambda == 0.5);
    fs::remove(path);
}

TEST_CASE("parse_config: rejections carry the offending key") {
    const auto bogus_method = write_temp("xdcl_bogus.cfg", "method = bogus\n");
    CHECK_THROWS_WITH_AS(parse_config(bogus_method, {}), doctest::Contains("msl_mov"), ConfigError);
    fs::remove(bogus_method);

    const auto unknown = write_temp("xdcl_unknown.cfg", "gammma = 0.5\n");
    CHECK_THROWS_WITH_AS(parse_config(unknown, {}), doctest::Contains("gammma"), ConfigError);
    fs::remove(unknown);

    const auto bad_type = write_temp("xdcl_badtype.cfg", "batch_size = large\n");
    CHECK_THROWS_WITH_AS(parse_config(bad_type, {}), doctest::Contains("batch_size"), ConfigError);
    fs::remove(bad_type);

    const auto no_eq = write_temp("xdcl_noeq.cfg", "gamma 0.5\n");
    CHECK_THROWS_AS(parse_config(no_eq, {}), ConfigError);
    fs::remove(no_eq);

    CHECK_THROWS_AS(parse_config("/nonexistent/xdcl.cfg", {}), ConfigError);
}

TEST_CASE("parse_config: comments, lists, and method sets") {
    const auto path = write_temp("xdcl_lists.cfg",
                                 "# experiment grid\n"
                                 "method = msl_mov, erm\n"
                                 "seed = 1,2,3\n"
                                 "held_out = 0,2\n"
                                 "hidden_dims = 16,8\n");
    const auto config = parse_config(path, {});
    CHECK(config.methods == std::vector<Method>{Method::msl_mov, Method::erm});
    CHECK(config.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(config.held_out == std::vector<std::size_t>{0, 2});
    CHECK(config.train.hidden_dims == std::vector<std::size_t>{16, 8});
    fs::remove(path);

    const auto all = write_temp("xdcl_all.cfg", "held_out = all\n");
    CHECK(parse_config(all, {}).held_out.empty());
    fs::remove(all);

    const auto enums = write_temp("xdcl_enums.cfg",
                                  "memory_mode = per_class\n"
                                  "activation = tanh\n"
                                  "head_init = class_mean\n");
    const auto enum_config = parse_config(enums, {});
    CHECK(enum_config.train.memory_mode == MemoryMode::per_class);
    CHECK(enum_config.train.activation == Activation::tanh);
    CHECK(enum_config.train.head_init == HeadInit::class_mean);
    fs::remove(enums);

    const auto bad_enum = write_temp("xdcl_badenum.cfg", "memory_mode = herding\n");
    CHECK_THROWS_WITH_AS(parse_config(bad_enum, {}), doctest::Contains("memory_mode"), ConfigError);
    fs::remove(bad_enum);
}

TEST_CASE("run_grid: smoke run completes, reports verify, reruns are byte-identical") {
    const auto out_a = (fs::temp_directory_path() / "xdcl_smoke_a").string();
    const auto out_b = (fs::temp_directory_path() / "xdcl_smoke_b").string();
    fs::remove_all(out_a);
    fs::remove_all(out_b);

    CHECK(run_grid(smoke_config(out_a)) == kExitOk);
    CHECK(run_grid(smoke_config(out_b)) == kExitOk);

    const fs::path report_a = fs::path(out_a) / "report_msl_mov_h1_s1.json";
    const fs::path report_b = fs::path(out_b) / "report_msl_mov_h1_s1.json";
    REQUIRE(fs::exists(report_a));
    REQUIRE(fs::exists(report_b));
    REQUIRE(fs::exists(fs::path(out_a) / "summary.csv"));

    const std::string body_a = slurp(report_a);
    verify_report_consistency(body_a);
    CHECK(strip_wall_clock(body_a) == strip_wall_clock(slurp(report_b)));
    CHECK(slurp(fs::path(out_a) / "summary.csv") == slurp(fs::path(out_b) / "summary.csv"));

    fs::remove_all(out_a);
    fs::remove_all(out_b);
}

TEST_CASE("XDCL_OUT_DIR supplies the default output directory") {
    const auto out = (fs::temp_directory_path() / "xdcl_envdir").string();
    fs::remove_all(out);
    ExperimentConfig config = smoke_config("");
    REQUIRE(setenv("XDCL_OUT_DIR", out.c_str(), 1) == 0);
    CHECK(run_grid(config) == kExitOk);
    unsetenv("XDCL_OUT_DIR");
    CHECK(fs::exists(fs::path(out) / "summary.csv"));
    fs::remove_all(out);
}

TEST_CASE("run_grid: invalid data path exits 2 and writes nothing") {
    const auto out = (fs::temp_directory_path() / "xdcl_badpath_out").string();
    fs::remove_all(out);
    ExperimentConfig config = smoke_config(out);
    config.data.features_path = "/nonexistent/features.csv";
    CHECK(run_grid(config) == kExitConfigError);
    CHECK_FALSE(fs::exists(out));
}

TEST_CASE("run_grid: held-out domain out of range exits 2") {
    const auto out = (fs::temp_directory_path() / "xdcl_badheld_out").string();
    fs::remove_all(out);
    ExperimentConfig config = smoke_config(out);
    config.held_out = {7};
    CHECK(run_grid(config) == kExitConfigError);
    fs::remove_all(out);
}

TEST_CASE("run_grid: single-domain data cannot hold one out, exits 2") {
    const auto path = write_temp("xdcl_one_domain.csv",
                                 "f0,label,domain,split\n"
                                 "1.0,0,0,train\n"
                                 "2.0,1,0,train\n");
    ExperimentConfig config = smoke_config((fs::temp_directory_path() / "xdcl_one_dom").string());
    config.data.features_path = path;
    config.held_out.clear();
    CHECK(run_grid(config) == kExitConfigError);
    fs::remove(path);
}

TEST_CASE("train_step rejects samples whose feature width disagrees") {
    ExperimentConfig config = smoke_config("");
    SyntheticConfig synth = config.data.synthetic;
    synth.seed = 3;
    const auto data = hold_out_domain(generate_synthetic(synth), 1);
    const auto tasks = split_tasks(data, 1, 3);
    ContinualTrainer trainer(data, tasks, config.train, Method::msl);
    trainer.run_task(0);
    std::vector<Sample> bad = {Sample{{1.0, 2.0}, 0, 0}};  // d is 4 here
    CHECK_THROWS_AS(trainer.train_step(bad), ShapeError);
}

TEST_CASE("report self-consistency check rejects a doctored report") {
    const auto out = (fs::temp_directory_path() / "xdcl_doctor").string();
    fs::remove_all(out);
    REQUIRE(run_grid(smoke_config(out)) == kExitOk);
    std::string body = slurp(fs::path(out) / "report_msl_mov_h1_s1.json");
    const auto pos = body.find("\"unseen_accuracy\": ");
    REQUIRE(pos != std::string::npos);
    body.replace(pos, std::string("\"unseen_accuracy\": ").size(), "\"unseen_accuracy\": 9");
    CHECK_THROWS_AS(verify_report_consistency(body), Error);
    fs::remove_all(out);
}

TEST_CASE("jobs > 1 produces the same reports as a serial run") {
    const auto out_serial = (fs::temp_directory_path() / "xdcl_serial").string();
    const auto out_parallel = (fs::temp_directory_path() / "xdcl_parallel").string();
    fs::remove_all(out_serial);
    fs::remove_all(out_parallel);

    ExperimentConfig config = smoke_config(out_serial);
    config.methods = {Method::msl_mov, Method::erm};
    config.held_out = {0, 1};
    REQUIRE(run_grid(config) == kExitOk);

    config.out_dir = out_parallel;
    config.jobs = 4;
    REQUIRE(run_grid(config) == kExitOk);

    for (const auto& entry : fs::directory_iterator(out_serial)) {
        const auto name = entry.path().filename();
        CHECK(strip_wall_clock(slurp(entry.path())) ==
              strip_wall_clock(slurp(fs::path(out_parallel) / name)));
    }
    fs::remove_all(out_serial);
    fs::remove_all(out_parallel);
}
