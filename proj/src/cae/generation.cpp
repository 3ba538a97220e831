#include "atlas/cae/generation.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "atlas/errors.hpp"

namespace atlas::cae {

std::size_t ChartUsage::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

ChartUsage collect_usage(const CaeModel& model, const data::PointCloud& cloud) {
    if (cloud.dim() != model.config().ambient_dim) throw DimensionError("cloud dimension does not match model");
    const int N = model.num_charts();
    ChartUsage u;
    u.counts.assign(static_cast<std::size_t>(N), 0);
    u.codes.resize(static_cast<std::size_t>(N));
    u.label_counts.resize(static_cast<std::size_t>(N));
    const Mat x = cloud.points.transpose();
    const Mat p = model.chart_probabilities_batch(x);
    const auto mus = model.encode_mu_batch(x);
    for (Eigen::Index b = 0; b < x.cols(); ++b) {
        Eigen::Index arg = 0;
        for (Eigen::Index i = 1; i < N; ++i) {
            if (p(i, b) > p(arg, b)) arg = i;
        }
        const auto a = static_cast<std::size_t>(arg);
        ++u.counts[a];
        u.codes[a].push_back(mus[a].col(b));
        const auto row = static_cast<std::size_t>(b);
        if (cloud.labels && cloud.labeled[row]) ++u.label_counts[a][(*cloud.labels)[row]];
    }
    return u;
}

std::vector<int> chart_classes(const CaeModel& model, const ChartUsage& usage) {
    const auto& mc = model.config();
    std::vector<int> out(static_cast<std::size_t>(model.num_charts()), -1);
    const bool constant_heads =
        mc.latent_function == LatentFunctionKind::constant && mc.function_output == FunctionOutput::categorical;
    for (int i = 0; i < model.num_charts(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (constant_heads) {
            const Vec f = model.latent_function(i, Vec::Constant(mc.latent_dim, 0.5));
            Eigen::Index arg = 0;
            for (Eigen::Index c = 1; c < f.size(); ++c) {
                if (f(c) > f(arg)) arg = c;
            }
            out[k] = static_cast<int>(arg);
        } else if (k < usage.label_counts.size() && !usage.label_counts[k].empty()) {
            std::size_t best = 0;
            for (const auto& [label, count] : usage.label_counts[k]) {
                if (count > best) {
                    best = count;
                    out[k] = label;
                }
            }
        }
    }
    return out;
}

namespace {

Samples draw(const CaeModel& model, const ChartUsage& usage, const std::vector<double>& weights, int n,
             std::mt19937_64& rng, double bandwidth) {
    if (n <= 0) throw ConfigError("sample count must be positive");
    if (!(bandwidth >= 0.0)) throw ConfigError("bandwidth must be >= 0");
    if (usage.counts.size() != static_cast<std::size_t>(model.num_charts())) {
        throw DimensionError("usage does not match the model's chart count");
    }
    if (std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0) {
        throw ConfigError("no chart has positive usage");
    }
    const int d = model.config().latent_dim;
    const auto classes = chart_classes(model, usage);
    std::discrete_distribution<int> pick_chart(weights.begin(), weights.end());
    std::normal_distribution<double> gauss(0.0, 1.0);
    Samples s;
    s.points.resize(n, model.config().ambient_dim);
    for (int k = 0; k < n; ++k) {
        const int c = pick_chart(rng);
        const auto& codes = usage.codes[static_cast<std::size_t>(c)];
        std::uniform_int_distribution<std::size_t> pick_code(0, codes.size() - 1);
        Vec z = codes[pick_code(rng)];
        if (bandwidth > 0.0) {
            for (int r = 0; r < d; ++r) z(r) += bandwidth * gauss(rng);
        }
        z = z.cwiseMax(0.0).cwiseMin(1.0);
        s.points.row(k) = model.decode(c, z).transpose();
        s.charts.push_back(c);
        s.classes.push_back(classes[static_cast<std::size_t>(c)]);
    }
    return s;
}

} // namespace

Samples sample(const CaeModel& model, const ChartUsage& usage, int n, std::mt19937_64& rng, double bandwidth) {
    std::vector<double> w(usage.counts.begin(), usage.counts.end());
    return draw(model, usage, w, n, rng, bandwidth);
}

Samples sample_class(const CaeModel& model, const ChartUsage& usage, int class_label, int n, std::mt19937_64& rng,
                     double bandwidth) {
    const auto classes = chart_classes(model, usage);
    std::vector<double> w(usage.counts.size(), 0.0);
    bool any = false;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (classes[i] == class_label) {
            any = true;
            w[i] = static_cast<double>(usage.counts[i]);
        }
    }
    if (!any) throw ConfigError("no chart is mapped to class " + std::to_string(class_label));
    return draw(model, usage, w, n, rng, bandwidth);
}

ConfusionResult confusion_cluster(const CaeModel& model, int samples_per_chart, double threshold,
                                  std::mt19937_64& rng) {
    if (samples_per_chart <= 0) throw ConfigError("samples_per_chart must be positive");
    const int N = model.num_charts();
    const int d = model.config().latent_dim;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    ConfusionResult r;
    r.matrix = Eigen::MatrixXd::Zero(N, N);
    for (int i = 0; i < N; ++i) {
        Mat z(d, samples_per_chart);
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            for (Eigen::Index k = 0; k < d; ++k) z(k, c) = unif(rng);
        }
        const Mat p = model.chart_probabilities_batch(model.decode_batch(i, z));
        r.matrix.row(i) = p.rowwise().mean().transpose();
    }
    const Eigen::MatrixXd sym = 0.5 * (r.matrix + r.matrix.transpose());
    std::vector<int> parent(static_cast<std::size_t>(N));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    };
    for (int i = 0; i < N; ++i) {
        for (int j = i + 1; j < N; ++j) {
            if (sym(i, j) >= threshold) parent[static_cast<std::size_t>(find(j))] = find(i);
        }
    }
    std::vector<int> label(static_cast<std::size_t>(N), -1);
    r.component.assign(static_cast<std::size_t>(N), -1);
    for (int i = 0; i < N; ++i) {
        const int root = find(i);
        if (label[static_cast<std::size_t>(root)] < 0) label[static_cast<std::size_t>(root)] = r.num_components++;
        r.component[static_cast<std::size_t>(i)] = label[static_cast<std::size_t>(root)];
    }
    return r;
}

void write_samples_csv(std::ostream& out, const Samples& s) {
    for (Eigen::Index k = 0; k < s.points.cols(); ++k) out << 'x' << (k + 1) << ',';
    out << "chart,class\n" << std::setprecision(17);
    for (Eigen::Index r = 0; r < s.points.rows(); ++r) {
        for (Eigen::Index k = 0; k < s.points.cols(); ++k) out << s.points(r, k) << ',';
        out << s.charts[static_cast<std::size_t>(r)] << ',' << s.classes[static_cast<std::size_t>(r)] << '\n';
    }
}

void save_samples_csv(const std::filesystem::path& path, const Samples& s) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_samples_csv(out, s);
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << "chart" << c;
    out << '\n' << std::setprecision(17);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
        out << '\n';
    }
}

void save_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_matrix_csv(out, m);
}

} // namespace atlas::cae
