// atlas_cae: dataset generation, training, sampling, evaluation and theory checks.
//
// Exit codes: 0 ok, 2 config, 3 io / malformed file, 4 dimension mismatch,
// 5 non-finite values, 6 domain error, 1 anything else.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include "CLI11.hpp"
#include "atlas/cae/generation.hpp"
#include "atlas/cli/experiment.hpp"
#include "atlas/cli/theory.hpp"
#include "atlas/data/generators.hpp"
#include "atlas/data/point_cloud.hpp"
#include "atlas/errors.hpp"

using namespace atlas;

namespace {

enum Exit { ok = 0, other = 1, config = 2, io = 3, dimension = 4, numeric = 5, domain = 6 };

void add_dataset_flags(CLI::App* cmd, data::DatasetSpec& spec, std::string& kind) {
    cmd->add_option("--dataset", kind, "swiss_roll | triangles | gaussians9 | circles3 | circle_arc | triangle2chart");
    cmd->add_option("--n", spec.n, "Number of points");
    cmd->add_option("--seed", spec.seed, "Generator seed");
    cmd->add_option("--noise", spec.noise, "Ambient noise standard deviation");
    cmd->add_option("--label-fraction", spec.label_fraction, "Fraction of labeled points");
    cmd->add_option("--height", spec.roll_height, "Swiss roll height");
    cmd->add_option("--separation", spec.separation, "Gap between the triangles");
    cmd->add_option("--spacing", spec.grid_spacing, "Gaussian grid spacing");
    cmd->add_option("--sigma", spec.cluster_sigma, "Gaussian cluster standard deviation");
    cmd->add_option("--theta-min", spec.theta_min, "Arc start angle");
    cmd->add_option("--theta-max", spec.theta_max, "Arc end angle");
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

template <class F>
void write_to(const std::string& path, F&& write) {
    if (path.empty() || path == "-") {
        write(std::cout);
        return;
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    write(out);
    if (!out) throw IoError("write failed for " + path);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chart autoencoder experiments and approximation checks"};
    app.require_subcommand(1);

    // gen
    data::DatasetSpec gen_spec;
    std::string gen_kind = "gaussians9", gen_out;
    auto* gen = app.add_subcommand("gen", "Write a synthetic point cloud as CSV");
    add_dataset_flags(gen, gen_spec, gen_kind);
    gen->add_option("--out", gen_out, "Output CSV (default stdout)");

    // train
    std::string train_config, train_out;
    std::optional<std::uint64_t> train_seed;
    auto* train = app.add_subcommand("train", "Train a chart autoencoder from an INI config");
    train->add_option("--config", train_config, "Experiment config")->required();
    train->add_option("--seed", train_seed, "Override the training seed");
    train->add_option("--out", train_out, "Override the output directory");

    // generate
    std::string gm_model, gm_data, gm_out;
    int gm_n = 1000;
    std::optional<int> gm_class;
    std::uint64_t gm_seed = 0;
    double gm_bandwidth = 0.05;
    auto* generate = app.add_subcommand("generate", "Sample new points from a trained model");
    generate->add_option("--model", gm_model, "Model JSON")->required();
    generate->add_option("--data", gm_data, "Training CSV (default: train.csv beside the model)");
    generate->add_option("--n", gm_n, "Number of samples");
    generate->add_option("--class", gm_class, "Only charts mapped to this class");
    generate->add_option("--seed", gm_seed, "Sampling seed");
    generate->add_option("--bandwidth", gm_bandwidth, "Latent jitter");
    generate->add_option("--out", gm_out, "Output CSV (default stdout)");

    // eval
    std::string ev_model, ev_test, ev_out;
    int ev_samples = 256;
    double ev_threshold = 0.1;
    std::uint64_t ev_seed = 0;
    auto* eval = app.add_subcommand("eval", "Evaluate a trained model on a CSV point cloud");
    eval->add_option("--model", ev_model, "Model JSON")->required();
    eval->add_option("--test", ev_test, "Evaluation CSV")->required();
    eval->add_option("--out", ev_out, "Directory for metrics.json and confusion CSVs");
    eval->add_option("--samples", ev_samples, "Latent samples per chart for chart confusion");
    eval->add_option("--threshold", ev_threshold, "Chart confusion link threshold");
    eval->add_option("--seed", ev_seed, "Seed for chart confusion sampling");

    // theory
    cli::TheoryOptions th;
    std::string th_kind = "circle_arc", th_out;
    auto* theory = app.add_subcommand("theory", "Constructive approximation and geometry checks");
    theory->require_subcommand(1);
    auto common = [&](CLI::App* cmd) {
        cmd->add_option("--out", th_out, "Directory for report.json and CSVs");
        cmd->add_option("--seed", th.seed, "Seed");
    };
    auto* pou = theory->add_subcommand("pou", "Partition-of-unity sum and network error");
    pou->add_option("--d", th.dim, "Dimension");
    pou->add_option("--grid", th.grid, "Grid resolution N");
    pou->add_option("--points", th.points, "Random probe points");
    pou->add_option("--delta", th.delta, "Multiplication accuracy inside the network");
    common(pou);
    auto* mult = theory->add_subcommand("mult", "Multiplication network accuracy");
    mult->add_option("--delta", th.delta, "Target accuracy");
    mult->add_option("--bound", th.bound, "Input range K");
    common(mult);
    auto* dnet = theory->add_subcommand("decoder-net", "Constructed decoder network for the unit circle");
    dnet->add_option("--eps", th.eps, "Target sup error");
    common(dnet);
    auto* regress = theory->add_subcommand("regress", "Local regression convergence table");
    regress->add_option("--n", th.sizes, "Sample counts");
    regress->add_option("--d", th.dim, "Latent dimension");
    regress->add_option("--D", th.ambient, "Output dimension");
    regress->add_option("--degree", th.degree, "Local polynomial degree");
    regress->add_option("--noise", th.noise, "Per-coordinate noise");
    regress->add_option("--repetitions", th.repetitions, "Median over repetitions");
    common(regress);
    auto geometry_flags = [&](CLI::App* cmd) {
        cmd->add_option("--input", th.input, "Point cloud CSV (otherwise generated)");
        add_dataset_flags(cmd, th.dataset, th_kind);
        cmd->add_option("--knn", th.knn, "Neighbors for tangents and normals");
        cmd->add_option("--out", th_out, "Directory for report.json and CSVs");
    };
    auto* reach = theory->add_subcommand("reach", "Reach estimate of a point cloud");
    reach->add_option("--d", th.dim, "Intrinsic dimension");
    geometry_flags(reach);
    auto* project = theory->add_subcommand("project", "Projection bound check");
    project->add_option("--d", th.dim, "Intrinsic dimension");
    project->add_option("--delta", th.delta, "Projection offset");
    geometry_flags(project);
    auto* gaussmap = theory->add_subcommand("gaussmap", "Half-space feasibility of the unit normals");
    geometry_flags(gaussmap);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return Exit::config;
    }

    try {
        if (*gen) {
            gen_spec.kind = data::dataset_kind_from_string(gen_kind);
            if (gen_spec.n <= 0) throw ConfigError("--n must be positive");
            const auto cloud = data::generate(gen_spec);
            write_to(gen_out, [&](std::ostream& o) { data::write_csv(o, cloud); });
        } else if (*train) {
            auto cfg = cli::load_config(train_config);
            if (train_seed) cfg.train.seed = *train_seed;
            if (!train_out.empty()) cfg.output_dir = train_out;
            print_json(cli::to_json(cli::run_training(cfg)));
        } else if (*generate) {
            const auto model = cae::CaeModel::load(gm_model);
            const std::string data_path =
                gm_data.empty() ? (std::filesystem::path(gm_model).parent_path() / "train.csv").string() : gm_data;
            if (!std::filesystem::exists(data_path)) throw IoError("training data not found: " + data_path);
            if (gm_n <= 0) throw ConfigError("--n must be positive");
            const auto cloud = data::load_csv(data_path);
            const auto usage = cae::collect_usage(model, cloud);
            std::mt19937_64 rng(gm_seed);
            const auto s = gm_class ? cae::sample_class(model, usage, *gm_class, gm_n, rng, gm_bandwidth)
                                    : cae::sample(model, usage, gm_n, rng, gm_bandwidth);
            write_to(gm_out, [&](std::ostream& o) { cae::write_samples_csv(o, s); });
        } else if (*eval) {
            const auto model = cae::CaeModel::load(ev_model);
            if (!std::filesystem::exists(ev_test)) throw IoError("test data not found: " + ev_test);
            const auto cloud = data::load_csv(ev_test);
            const auto metrics = cli::evaluate(model, cloud);
            std::mt19937_64 rng(ev_seed);
            const auto conf = cae::confusion_cluster(model, ev_samples, ev_threshold, rng);
            auto j = cli::to_json(metrics);
            j["chart_components"] = conf.component;
            j["num_components"] = conf.num_components;
            if (!ev_out.empty()) {
                const std::filesystem::path dir(ev_out);
                std::filesystem::create_directories(dir);
                cae::save_matrix_csv(dir / "chart_confusion.csv", conf.matrix);
                if (metrics.class_confusion) cae::save_matrix_csv(dir / "class_confusion.csv", *metrics.class_confusion);
                std::ofstream out(dir / "metrics.json");
                if (!out) throw IoError("cannot write " + (dir / "metrics.json").string());
                out << j.dump(2) << '\n';
            }
            print_json(j);
        } else if (*theory) {
            th.dataset.kind = data::dataset_kind_from_string(th_kind);
            if (!th_out.empty()) th.out = th_out;
            const auto* sub = theory->get_subcommands().front();
            print_json(cli::run_theory(sub->get_name(), th));
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return Exit::config;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return Exit::io;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return Exit::io;
    } catch (const DimensionError& e) {
        std::cerr << "dimension error: " << e.what() << '\n';
        return Exit::dimension;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return Exit::numeric;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << '\n';
        return Exit::domain;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return Exit::io;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Exit::other;
    }
    return Exit::ok;
}
