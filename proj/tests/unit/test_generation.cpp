#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "atlas/cae/generation.hpp"
#include "atlas/data/generators.hpp"
#include "atlas/errors.hpp"
#include "doctest.h"

using namespace atlas;
using cae::Vec;

namespace {

cae::CaeModel random_model(cae::CaeConfig cfg, std::uint64_t seed) {
    cae::CaeModel model(cfg, seed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Vec p(static_cast<Eigen::Index>(model.parameter_count()));
    for (Eigen::Index k = 0; k < p.size(); ++k) p(k) = g(rng);
    model.set_flat_params(p);
    return model;
}

cae::CaeConfig planar(int charts) {
    cae::CaeConfig c;
    c.num_charts = charts;
    c.latent_dim = 1;
    c.ambient_dim = 2;
    c.encoder_hidden = {6};
    c.decoder_hidden = {6};
    c.predictor_hidden = {6};
    return c;
}

} // namespace

TEST_CASE("usage and proportional chart draws") {
    const auto cloud = data::gen_gaussians9(900, 4.0, 0.3, 1);
    auto model = random_model(planar(3), 11);
    model.fit_normalizer(cloud.points);
    const auto usage = cae::collect_usage(model, cloud);
    CHECK(usage.total() == cloud.size());
    int used = 0;
    for (std::size_t i = 0; i < usage.counts.size(); ++i) {
        CHECK(usage.codes[i].size() == usage.counts[i]);
        used += usage.counts[i] > 0;
    }
    REQUIRE(used >= 2);

    std::mt19937_64 rng(3);
    const int n = 100000;
    const auto s = cae::sample(model, usage, n, rng);
    CHECK(s.points.rows() == n);
    std::vector<double> freq(3, 0.0);
    for (int c : s.charts) freq[static_cast<std::size_t>(c)] += 1.0 / n;
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(freq[i] - static_cast<double>(usage.counts[i]) / cloud.size()) <= 0.02);
    }
    CHECK_THROWS_AS(cae::sample(model, usage, 0, rng), ConfigError);
    CHECK_THROWS_AS(cae::sample(model, usage, 5, rng, -1.0), ConfigError);
}

TEST_CASE("zero bandwidth decodes observed codes") {
    const auto cloud = data::gen_gaussians9(90, 4.0, 0.3, 2);
    auto model = random_model(planar(2), 5);
    model.fit_normalizer(cloud.points);
    const auto usage = cae::collect_usage(model, cloud);
    std::mt19937_64 rng(8);
    const auto s = cae::sample(model, usage, 50, rng, 0.0);
    for (Eigen::Index r = 0; r < s.points.rows(); ++r) {
        const int c = s.charts[static_cast<std::size_t>(r)];
        double best = 1e300;
        for (const auto& z : usage.codes[static_cast<std::size_t>(c)]) {
            best = std::min(best, (model.decode(c, z) - s.points.row(r).transpose()).norm());
        }
        CHECK(best == 0.0);
    }
}

TEST_CASE("sampling is reproducible") {
    const auto cloud = data::gen_gaussians9(90, 4.0, 0.3, 2);
    auto model = random_model(planar(2), 5);
    model.fit_normalizer(cloud.points);
    const auto usage = cae::collect_usage(model, cloud);
    std::mt19937_64 a(4), b(4);
    std::ostringstream sa, sb;
    cae::write_samples_csv(sa, cae::sample(model, usage, 40, a));
    cae::write_samples_csv(sb, cae::sample(model, usage, 40, b));
    CHECK(sa.str() == sb.str());
    CHECK(sa.str().rfind("x1,x2,chart,class\n", 0) == 0);
}

TEST_CASE("class-conditional sampling") {
    auto cfg = planar(3);
    cfg.latent_function = cae::LatentFunctionKind::constant;
    cfg.function_output = cae::FunctionOutput::categorical;
    cfg.num_classes = 2;
    const auto cloud = data::gen_circles3(300, 1.0, 3);
    auto model = random_model(cfg, 9);
    model.fit_normalizer(cloud.points);
    const auto usage = cae::collect_usage(model, cloud);
    const auto classes = cae::chart_classes(model, usage);
    REQUIRE(classes.size() == 3);
    for (int c : classes) CHECK((c == 0 || c == 1));
    for (int label = 0; label < 2; ++label) {
        bool mapped = false;
        for (std::size_t i = 0; i < 3; ++i) mapped |= classes[i] == label && usage.counts[i] > 0;
        std::mt19937_64 rng(1);
        if (!mapped) {
            CHECK_THROWS(cae::sample_class(model, usage, label, 10, rng));
            continue;
        }
        const auto s = cae::sample_class(model, usage, label, 500, rng);
        for (std::size_t k = 0; k < s.charts.size(); ++k) {
            CHECK(classes[static_cast<std::size_t>(s.charts[k])] == label);
            CHECK(s.classes[k] == label);
        }
    }
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(cae::sample_class(model, usage, 7, 10, rng), ConfigError);
}

TEST_CASE("majority labels map charts to classes") {
    const auto cloud = data::gen_circles3(300, 0.5, 3);
    auto model = random_model(planar(3), 2);
    model.fit_normalizer(cloud.points);
    const auto usage = cae::collect_usage(model, cloud);
    const auto classes = cae::chart_classes(model, usage);
    for (std::size_t i = 0; i < 3; ++i) {
        if (usage.label_counts[i].empty()) {
            CHECK(classes[i] == -1);
            continue;
        }
        std::size_t best = 0;
        for (const auto& [label, count] : usage.label_counts[i]) best = std::max(best, count);
        CHECK(usage.label_counts[i].at(classes[i]) == best);
    }
}

TEST_CASE("chart confusion clustering") {
    auto model = random_model(planar(4), 6);
    std::mt19937_64 rng(2);
    const auto r = cae::confusion_cluster(model, 200, 0.0, rng);
    REQUIRE(r.matrix.rows() == 4);
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(r.matrix.row(i).sum() - 1.0) <= 1e-12);
    CHECK(r.num_components == 1);

    const Eigen::MatrixXd sym = 0.5 * (r.matrix + r.matrix.transpose());
    double off = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i) {
        for (Eigen::Index j = 0; j < 4; ++j) {
            if (i != j) off = std::max(off, sym(i, j));
        }
    }
    std::mt19937_64 again(2);
    const auto split = cae::confusion_cluster(model, 200, off + 1e-9, again);
    CHECK(split.num_components == 4);
    CHECK((split.matrix.array() == r.matrix.array()).all());
    for (int i = 0; i < 4; ++i) CHECK(split.component[static_cast<std::size_t>(i)] == i);
    CHECK_THROWS_AS(cae::confusion_cluster(model, 0, 0.1, again), ConfigError);
}
