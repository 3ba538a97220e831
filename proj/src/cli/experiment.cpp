#include "atlas/cli/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "atlas/cae/generation.hpp"
#include "atlas/errors.hpp"

namespace atlas::cli {

namespace pt = boost::property_tree;
using Vec = Eigen::VectorXd;

std::string to_string(ExperimentKind kind) {
    switch (kind) {
    case ExperimentKind::train: return "train";
    case ExperimentKind::generate: return "generate";
    case ExperimentKind::evaluate: return "evaluate";
    case ExperimentKind::theory: return "theory";
    }
    return "train";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
    for (auto k : {ExperimentKind::train, ExperimentKind::generate, ExperimentKind::evaluate, ExperimentKind::theory}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown experiment kind '" + name + "'");
}

int DatasetSource::ambient_dim() const {
    if (!csv.empty()) return load().dim();
    return spec.kind == data::DatasetKind::swiss_roll ? 3 : 2;
}

data::PointCloud DatasetSource::load() const {
    if (csv.empty()) return data::generate(spec);
    if (!std::filesystem::exists(csv)) throw IoError("dataset file not found: " + csv);
    return data::load_csv(csv);
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
}

long long parse_integer(const std::string& s) {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::invalid_argument(s);
}

std::vector<int> parse_widths(const std::string& s) {
    std::vector<int> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(' ');
        const auto e = item.find_last_not_of(' ');
        if (b == std::string::npos) throw std::invalid_argument(s);
        out.push_back(static_cast<int>(parse_integer(item.substr(b, e - b + 1))));
    }
    return out;
}

std::string fmt_widths(const std::vector<int>& w) {
    std::string out;
    for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "," : "") + std::to_string(w[i]);
    return out;
}

template <class T>
struct Field {
    std::string key;
    std::function<void(T&, const std::string&)> set;
    std::function<std::string(const T&)> get;
};

#define ATLAS_DOUBLE(T, name, member) \
    Field<T> { name, [](T& c, const std::string& s) { c.member = parse_double(s); }, \
               [](const T& c) { return fmt_double(c.member); } }
#define ATLAS_INT(T, name, member) \
    Field<T> { name, [](T& c, const std::string& s) { c.member = static_cast<decltype(c.member)>(parse_integer(s)); }, \
               [](const T& c) { return std::to_string(c.member); } }
#define ATLAS_BOOL(T, name, member) \
    Field<T> { name, [](T& c, const std::string& s) { c.member = parse_bool(s); }, \
               [](const T& c) { return std::string(c.member ? "true" : "false"); } }
#define ATLAS_WIDTHS(T, name, member) \
    Field<T> { name, [](T& c, const std::string& s) { c.member = parse_widths(s); }, \
               [](const T& c) { return fmt_widths(c.member); } }

const std::vector<Field<ExperimentConfig>>& experiment_fields() {
    using T = ExperimentConfig;
    static const std::vector<Field<T>> f = {
        {"kind", [](T& c, const std::string& s) { c.kind = experiment_kind_from_string(s); },
         [](const T& c) { return to_string(c.kind); }},
        {"output", [](T& c, const std::string& s) { c.output_dir = s; }, [](const T& c) { return c.output_dir; }},
        ATLAS_INT(T, "samples", samples),
        ATLAS_DOUBLE(T, "bandwidth", bandwidth),
    };
    return f;
}

const std::vector<Field<DatasetSource>>& dataset_fields() {
    using T = DatasetSource;
    static const std::vector<Field<T>> f = {
        {"kind", [](T& c, const std::string& s) { c.spec.kind = data::dataset_kind_from_string(s); },
         [](const T& c) { return data::to_string(c.spec.kind); }},
        {"csv", [](T& c, const std::string& s) { c.csv = s; }, [](const T& c) { return c.csv; }},
        ATLAS_INT(T, "n", spec.n),
        ATLAS_DOUBLE(T, "noise", spec.noise),
        ATLAS_INT(T, "seed", spec.seed),
        ATLAS_DOUBLE(T, "label_fraction", spec.label_fraction),
        ATLAS_DOUBLE(T, "roll_height", spec.roll_height),
        ATLAS_DOUBLE(T, "separation", spec.separation),
        ATLAS_DOUBLE(T, "grid_spacing", spec.grid_spacing),
        ATLAS_DOUBLE(T, "cluster_sigma", spec.cluster_sigma),
        ATLAS_DOUBLE(T, "theta_min", spec.theta_min),
        ATLAS_DOUBLE(T, "theta_max", spec.theta_max),
    };
    return f;
}

const std::vector<Field<cae::CaeConfig>>& model_fields() {
    using T = cae::CaeConfig;
    static const std::vector<Field<T>> f = {
        ATLAS_INT(T, "num_charts", num_charts),
        ATLAS_INT(T, "latent_dim", latent_dim),
        ATLAS_INT(T, "ambient_dim", ambient_dim),
        ATLAS_WIDTHS(T, "encoder_hidden", encoder_hidden),
        ATLAS_WIDTHS(T, "decoder_hidden", decoder_hidden),
        ATLAS_WIDTHS(T, "predictor_hidden", predictor_hidden),
        {"latent_function", [](T& c, const std::string& s) { c.latent_function = cae::latent_function_from_string(s); },
         [](const T& c) { return cae::to_string(c.latent_function); }},
        ATLAS_WIDTHS(T, "latent_mlp_hidden", latent_mlp_hidden),
        {"function_output", [](T& c, const std::string& s) { c.function_output = cae::function_output_from_string(s); },
         [](const T& c) { return cae::to_string(c.function_output); }},
        ATLAS_INT(T, "num_classes", num_classes),
    };
    return f;
}

const std::vector<Field<cae::TrainConfig>>& train_fields() {
    using T = cae::TrainConfig;
    static const std::vector<Field<T>> f = {
        ATLAS_DOUBLE(T, "lambda", lambda),
        ATLAS_DOUBLE(T, "ce_weight", ce_weight),
        ATLAS_DOUBLE(T, "lr", lr),
        ATLAS_INT(T, "batch_size", batch_size),
        ATLAS_INT(T, "epochs_init", epochs_init),
        ATLAS_INT(T, "epochs_main", epochs_main),
        ATLAS_DOUBLE(T, "removal_threshold", removal_threshold),
        ATLAS_INT(T, "removal_check_epoch", removal_check_epoch),
        ATLAS_INT(T, "seed", seed),
        {"function_loss", [](T& c, const std::string& s) { c.function_loss = cae::function_loss_from_string(s); },
         [](const T& c) { return cae::to_string(c.function_loss); }},
        ATLAS_DOUBLE(T, "init_lr", init_lr),
        ATLAS_DOUBLE(T, "lift_scale", lift_scale),
        ATLAS_DOUBLE(T, "redundancy_ratio", redundancy_ratio),
        ATLAS_BOOL(T, "sample_latent", sample_latent),
        {"temperature", [](T& c, const std::string& s) { c.temperature = cae::target_temperature_from_string(s); },
         [](const T& c) { return cae::to_string(c.temperature); }},
        ATLAS_DOUBLE(T, "kl_weight", kl_weight),
        ATLAS_BOOL(T, "function_aware_assignment", function_aware_assignment),
    };
    return f;
}

#undef ATLAS_DOUBLE
#undef ATLAS_INT
#undef ATLAS_BOOL
#undef ATLAS_WIDTHS

template <class T>
void read_section(const std::string& section, const pt::ptree& tree, const std::vector<Field<T>>& fields, T& target) {
    for (const auto& [key, node] : tree) {
        if (!node.empty()) throw ConfigError("[" + section + "] " + key + ": nested keys are not allowed");
        const Field<T>* match = nullptr;
        for (const auto& f : fields) {
            if (f.key == key) match = &f;
        }
        if (!match) throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
        const std::string value = node.template get_value<std::string>();
        try {
            match->set(target, value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("[" + section + "] " + key + ": bad value '" + value + "'");
        }
    }
}

template <class T>
void put_section(pt::ptree& root, const std::string& section, const std::vector<Field<T>>& fields, const T& source) {
    pt::ptree sec;
    for (const auto& f : fields) sec.put(pt::ptree::path_type(f.key, '\0'), f.get(source));
    root.add_child(pt::ptree::path_type(section, '\0'), sec);
}

} // namespace

void ExperimentConfig::validate() const {
    if (output_dir.empty()) throw ConfigError("output directory must not be empty");
    if (samples < 0) throw ConfigError("samples must be >= 0");
    if (!(bandwidth >= 0.0)) throw ConfigError("bandwidth must be >= 0");
    model.validate();
    train.validate();
    for (const DatasetSource* src : {&dataset, test ? &*test : nullptr}) {
        if (!src) continue;
        if (src->csv.empty() && src->spec.n <= 0) throw ConfigError("dataset size must be positive");
        if (!src->csv.empty() && !std::filesystem::exists(src->csv)) {
            throw IoError("dataset file not found: " + src->csv);
        }
        const int dim = src->ambient_dim();
        if (dim != model.ambient_dim) {
            throw DimensionError("dataset dimension " + std::to_string(dim) + " differs from model ambient_dim " +
                                 std::to_string(model.ambient_dim));
        }
    }
}

ExperimentConfig parse_config(std::istream& in) {
    pt::ptree root;
    try {
        pt::read_ini(in, root);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    ExperimentConfig cfg;
    for (const auto& [section, tree] : root) {
        if (tree.empty() && !tree.data().empty()) {
            throw ConfigError("key '" + section + "' outside any section");
        }
        if (section == "experiment") {
            read_section(section, tree, experiment_fields(), cfg);
        } else if (section == "dataset") {
            read_section(section, tree, dataset_fields(), cfg.dataset);
        } else if (section == "test") {
            if (!cfg.test) cfg.test = DatasetSource{};
            read_section(section, tree, dataset_fields(), *cfg.test);
        } else if (section == "model") {
            read_section(section, tree, model_fields(), cfg.model);
        } else if (section == "train") {
            read_section(section, tree, train_fields(), cfg.train);
        } else {
            throw ConfigError("unknown section [" + section + "]");
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    return parse_config(in);
}

void write_config(std::ostream& out, const ExperimentConfig& config) {
    pt::ptree root;
    put_section(root, "experiment", experiment_fields(), config);
    put_section(root, "dataset", dataset_fields(), config.dataset);
    if (config.test) put_section(root, "test", dataset_fields(), *config.test);
    put_section(root, "model", model_fields(), config.model);
    put_section(root, "train", train_fields(), config.train);
    pt::write_ini(out, root);
}

std::string config_to_string(const ExperimentConfig& config) {
    std::ostringstream out;
    write_config(out, config);
    return out.str();
}

Metrics evaluate(const cae::CaeModel& model, const data::PointCloud& cloud) {
    cloud.validate();
    if (cloud.dim() != model.config().ambient_dim) throw DimensionError("cloud dimension differs from the model");
    if (cloud.size() == 0) throw DimensionError("empty evaluation set");
    Metrics m;
    const auto& mc = model.config();
    const bool has_head = mc.latent_function != cae::LatentFunctionKind::none;
    const bool categorical = has_head && mc.function_output == cae::FunctionOutput::categorical && cloud.labels;
    const bool valued = has_head && mc.function_output != cae::FunctionOutput::categorical && cloud.function_values;
    Eigen::MatrixXd confusion;
    if (categorical) confusion = Eigen::MatrixXd::Zero(mc.num_classes, mc.num_classes);
    std::size_t correct = 0;
    double sq = 0.0, fsq = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec x = cloud.points.row(static_cast<Eigen::Index>(i)).transpose();
        sq += (model.reconstruct(x, cae::ReconstructMode::best) - x).squaredNorm();
        if (categorical) {
            Eigen::Index label = 0;
            model.predict_function(x).maxCoeff(&label);
            const int truth = (*cloud.labels)[i];
            if (truth < 0 || truth >= mc.num_classes) throw DimensionError("label outside the model's classes");
            confusion(truth, label) += 1.0;
            correct += label == truth;
        } else if (valued) {
            double r = model.predict_function(x)(0) - (*cloud.function_values)[i];
            if (mc.function_output == cae::FunctionOutput::angle) {
                r = std::remainder(r, 2.0 * std::numbers::pi);
            }
            fsq += r * r;
        }
    }
    const double n = static_cast<double>(cloud.size());
    m.recon_mse = sq / n;
    if (categorical) {
        m.accuracy = static_cast<double>(correct) / n;
        m.class_confusion = confusion;
    }
    if (valued) m.function_mse = fsq / n;
    m.usage = cae::collect_usage(model, cloud).counts;
    return m;
}

nlohmann::json to_json(const Metrics& m) {
    nlohmann::json j;
    j["recon_mse"] = m.recon_mse;
    j["usage"] = m.usage;
    if (m.accuracy) j["accuracy"] = *m.accuracy;
    if (m.function_mse) j["function_mse"] = *m.function_mse;
    if (m.class_confusion) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < m.class_confusion->rows(); ++r) {
            std::vector<double> row(static_cast<std::size_t>(m.class_confusion->cols()));
            for (Eigen::Index c = 0; c < m.class_confusion->cols(); ++c) row[static_cast<std::size_t>(c)] = (*m.class_confusion)(r, c);
            rows.push_back(row);
        }
        j["class_confusion"] = rows;
    }
    return j;
}

nlohmann::json to_json(const cae::LossBreakdown& l) {
    return {{"min_recon", l.min_recon},       {"weighted_recon", l.weighted_recon}, {"function_loss", l.function_loss},
            {"kl", l.kl},                     {"predictor_ce", l.predictor_ce},     {"total", l.total}};
}

nlohmann::json to_json(const RunReport& r) {
    nlohmann::json j;
    j["seed"] = r.seed;
    j["epochs"] = r.epochs;
    j["final_loss"] = to_json(r.final_loss);
    j["active_charts"] = r.active_charts;
    j["removed"] = r.removed;
    j["train_metrics"] = to_json(r.train_metrics);
    if (r.test_metrics) j["test_metrics"] = to_json(*r.test_metrics);
    j["wall_seconds"] = r.wall_seconds;
    j["artifacts"] = r.artifacts;
    return j;
}

RunReport run_training(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    config.validate();
    const std::filesystem::path dir(config.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

    const auto cloud = config.dataset.load();
    cae::CaeModel model(config.model, config.train.seed);
    cae::initialize(model, cloud, config.train);
    const auto result = cae::train(model, cloud, config.train);

    RunReport report;
    report.seed = config.train.seed;
    report.epochs = static_cast<int>(result.log.size());
    if (!result.log.empty()) report.final_loss = result.log.back().loss;
    report.active_charts = model.num_charts();
    report.removed = result.removed;
    report.train_metrics = evaluate(model, cloud);

    model.save(dir / "model.json");
    data::save_csv(dir / "train.csv", cloud);
    cae::save_loss_log(dir / "loss.csv", result.log);
    {
        std::ofstream out(dir / "config.ini");
        if (!out) throw IoError("cannot write " + (dir / "config.ini").string());
        write_config(out, config);
    }
    report.artifacts = {"model.json", "train.csv", "loss.csv", "config.ini"};
    if (config.test) {
        const auto test = config.test->load();
        report.test_metrics = evaluate(model, test);
        data::save_csv(dir / "test.csv", test);
        report.artifacts.push_back("test.csv");
    }
    if (config.samples > 0) {
        const auto usage = cae::collect_usage(model, cloud);
        std::mt19937_64 rng(config.train.seed + 1);
        cae::save_samples_csv(dir / "samples.csv", cae::sample(model, usage, config.samples, rng, config.bandwidth));
        report.artifacts.push_back("samples.csv");
    }
    report.artifacts.push_back("report.json");
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ofstream out(dir / "report.json");
    if (!out) throw IoError("cannot write " + (dir / "report.json").string());
    out << to_json(report).dump(2) << '\n';
    return report;
}

} // namespace atlas::cli
