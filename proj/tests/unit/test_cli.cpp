#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "atlas/cli/experiment.hpp"
#include "atlas/cli/theory.hpp"
#include "atlas/data/generators.hpp"
#include "atlas/errors.hpp"
#include "doctest.h"

using namespace atlas;
namespace fs = std::filesystem;

namespace {

cli::ExperimentConfig parse(const std::string& text) {
    std::istringstream in(text);
    return cli::parse_config(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("atlas_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

const char* tiny = R"([experiment]
output = unused

[dataset]
kind = gaussians9
n = 180
seed = 4

[model]
num_charts = 3
latent_dim = 2
ambient_dim = 2
encoder_hidden = 6
decoder_hidden = 6,6
predictor_hidden = 6

[train]
seed = 9
epochs_init = 20
epochs_main = 3
lr = 0.003
)";

} // namespace

TEST_CASE("config round trip") {
    auto cfg = parse(tiny);
    CHECK(cfg.dataset.spec.kind == data::DatasetKind::gaussians9);
    CHECK(cfg.dataset.spec.n == 180);
    CHECK(cfg.model.decoder_hidden == std::vector<int>{6, 6});
    CHECK(cfg.train.lr == 0.003);
    CHECK(!cfg.test);
    cfg.train.kl_weight = 0.1 + 0.2;  // not representable in short decimal
    cfg.test = cfg.dataset;
    cfg.test->spec.seed = 77;
    const auto text = cli::config_to_string(cfg);
    const auto back = parse(text);
    CHECK(back == cfg);
    CHECK(cli::config_to_string(back) == text);
}

TEST_CASE("bundled configs parse") {
    for (const char* name : {"gaussians9", "triangles", "circles", "swiss_roll"}) {
        CAPTURE(name);
        const auto path = fs::path(ATLAS_SOURCE_DIR) / "configs" / (std::string(name) + ".ini");
        const auto cfg = cli::load_config(path);
        CHECK_NOTHROW(cfg.validate());
    }
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse("[train]\nlearning_rate = 0.1\n"), ConfigError);
    CHECK_THROWS_AS(parse("[optimizer]\nlr = 0.1\n"), ConfigError);
    CHECK_THROWS_AS(parse("[train]\nlr = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse("[dataset]\nkind = moons\n"), ConfigError);
    CHECK_THROWS_AS(cli::load_config("/nonexistent/run.ini"), IoError);

    auto cfg = parse(tiny);
    cfg.model.ambient_dim = 3;
    CHECK_THROWS_AS(cfg.validate(), DimensionError);
    cfg = parse(tiny);
    cfg.dataset.csv = "/nonexistent/points.csv";
    CHECK_THROWS_AS(cfg.validate(), IoError);
    cfg = parse(tiny);
    cfg.train.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("training runs are reproducible") {
    auto cfg = parse(tiny);
    cfg.samples = 20;
    const auto dir_a = scratch_dir("a"), dir_b = scratch_dir("b");
    cfg.output_dir = dir_a.string();
    const auto a = cli::run_training(cfg);
    cfg.output_dir = dir_b.string();
    const auto b = cli::run_training(cfg);
    CHECK(a.epochs == 3);
    CHECK(a.active_charts == static_cast<int>(a.train_metrics.usage.size()));
    CHECK(a.final_loss.total == b.final_loss.total);
    for (const char* file : {"model.json", "train.csv", "loss.csv", "samples.csv", "report.json"}) {
        CAPTURE(file);
        REQUIRE(fs::exists(dir_a / file));
    }
    for (const char* file : {"model.json", "train.csv", "loss.csv", "samples.csv"}) {
        CAPTURE(file);
        CHECK(slurp(dir_a / file) == slurp(dir_b / file));
    }
    auto ja = cli::to_json(a), jb = cli::to_json(b);
    for (auto* j : {&ja, &jb}) j->erase("wall_seconds");
    CHECK(ja == jb);
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("metrics") {
    auto cfg = parse(tiny);
    cfg.output_dir = scratch_dir("m").string();
    cli::run_training(cfg);
    const auto model = cae::CaeModel::load(fs::path(cfg.output_dir) / "model.json");
    const auto cloud = data::load_csv(fs::path(cfg.output_dir) / "train.csv");
    const auto m = cli::evaluate(model, cloud);
    std::size_t total = 0;
    for (auto u : m.usage) total += u;
    CHECK(total == cloud.size());
    CHECK(m.recon_mse >= 0.0);
    CHECK(!m.accuracy);
    CHECK(!m.function_mse);
    const auto j = cli::to_json(m);
    CHECK(j.at("recon_mse").get<double>() == m.recon_mse);
    fs::remove_all(cfg.output_dir);
}

TEST_CASE("theory commands") {
    cli::TheoryOptions o;
    o.dim = 2;
    o.grid = 4;
    const auto pou = cli::run_theory("pou", o);
    CHECK(pou.at("max_sum_error").get<double>() <= 1e-12);
    CHECK(pou.at("grid_points").get<std::size_t>() == 25);
    CHECK_THROWS_AS(cli::run_theory("fourier", o), ConfigError);

    cli::TheoryOptions r;
    r.dataset.kind = data::DatasetKind::circle_arc;
    r.dataset.n = 200;
    r.dataset.theta_min = 0.0;
    r.dataset.theta_max = 6.283185307179586;
    const auto reach = cli::run_theory("reach", r);
    CHECK(reach.dump().find("reach") != std::string::npos);

    o.out = scratch_dir("t");
    cli::run_theory("pou", o);
    CHECK(fs::exists(*o.out / "report.json"));
    CHECK(fs::exists(*o.out / "pou_samples.csv"));
    fs::remove_all(*o.out);
}
