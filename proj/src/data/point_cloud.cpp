#include "atlas/data/point_cloud.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "atlas/errors.hpp"

namespace atlas::data {

std::size_t PointCloud::labeled_count() const {
    std::size_t count = 0;
    for (bool b : labeled) {
        count += b ? 1 : 0;
    }
    return count;
}

void PointCloud::validate() const {
    const auto n = size();
    auto check = [n](std::size_t got, const char* what) {
        if (got != n) {
            throw DimensionError(std::string(what) + " column has " + std::to_string(got) + " entries for " +
                                 std::to_string(n) + " points");
        }
    };
    if (labels) check(labels->size(), "label");
    if (function_values) check(function_values->size(), "function");
    if (component_ids) check(component_ids->size(), "component");
    check(labeled.size(), "labeled");
}

PointCloud PointCloud::subset(const std::vector<std::size_t>& indices) const {
    PointCloud out;
    out.points.resize(static_cast<Eigen::Index>(indices.size()), points.cols());
    if (labels) out.labels.emplace();
    if (function_values) out.function_values.emplace();
    if (component_ids) out.component_ids.emplace();
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto i = indices[k];
        out.points.row(static_cast<Eigen::Index>(k)) = points.row(static_cast<Eigen::Index>(i));
        if (labels) out.labels->push_back(labels->at(i));
        if (function_values) out.function_values->push_back(function_values->at(i));
        if (component_ids) out.component_ids->push_back(component_ids->at(i));
        out.labeled.push_back(labeled.at(i));
    }
    return out;
}

void write_csv(std::ostream& out, const PointCloud& cloud) {
    cloud.validate();
    const bool with_mask = cloud.has_supervision();
    for (int k = 0; k < cloud.dim(); ++k) {
        out << (k ? "," : "") << 'x' << (k + 1);
    }
    if (cloud.labels) out << ",label";
    if (cloud.function_values) out << ",f";
    if (cloud.component_ids) out << ",component";
    if (with_mask) out << ",labeled";
    out << '\n';

    out << std::setprecision(17);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        for (int k = 0; k < cloud.dim(); ++k) {
            out << (k ? "," : "") << cloud.points(r, k);
        }
        if (cloud.labels) out << ',' << (*cloud.labels)[i];
        if (cloud.function_values) out << ',' << (*cloud.function_values)[i];
        if (cloud.component_ids) out << ',' << (*cloud.component_ids)[i];
        if (with_mask) out << ',' << (cloud.labeled[i] ? 1 : 0);
        out << '\n';
    }
}

void save_csv(const std::filesystem::path& path, const PointCloud& cloud) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    write_csv(out, cloud);
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

double parse_double(const std::string& s, std::size_t line) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ParseError("expected a number, got '" + s + "'", line);
    }
    if (used != s.size()) {
        throw ParseError("trailing characters in '" + s + "'", line);
    }
    return v;
}

int parse_int(const std::string& s, std::size_t line) {
    int v = 0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        throw ParseError("expected an integer, got '" + s + "'", line);
    }
    return v;
}

} // namespace

PointCloud read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("empty point cloud file", 1);
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split(line);
    int dim = 0;
    int label_col = -1, f_col = -1, comp_col = -1, mask_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto& h = header[c];
        const int col = static_cast<int>(c);
        if (h == "x" + std::to_string(dim + 1) && col == dim) {
            ++dim;
        } else if (h == "label" && label_col < 0) {
            label_col = col;
        } else if (h == "f" && f_col < 0) {
            f_col = col;
        } else if (h == "component" && comp_col < 0) {
            comp_col = col;
        } else if (h == "labeled" && mask_col < 0) {
            mask_col = col;
        } else {
            throw ParseError("unexpected header column '" + h + "'", 1);
        }
    }
    if (dim == 0) {
        throw ParseError("header has no coordinate columns", 1);
    }

    std::vector<double> coords;
    PointCloud cloud;
    if (label_col >= 0) cloud.labels.emplace();
    if (f_col >= 0) cloud.function_values.emplace();
    if (comp_col >= 0) cloud.component_ids.emplace();

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split(line);
        if (fields.size() != header.size()) {
            throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        for (int k = 0; k < dim; ++k) {
            coords.push_back(parse_double(fields[static_cast<std::size_t>(k)], line_no));
        }
        if (label_col >= 0) cloud.labels->push_back(parse_int(fields[static_cast<std::size_t>(label_col)], line_no));
        if (f_col >= 0) cloud.function_values->push_back(parse_double(fields[static_cast<std::size_t>(f_col)], line_no));
        if (comp_col >= 0) cloud.component_ids->push_back(parse_int(fields[static_cast<std::size_t>(comp_col)], line_no));
        if (mask_col >= 0) {
            const int m = parse_int(fields[static_cast<std::size_t>(mask_col)], line_no);
            if (m != 0 && m != 1) {
                throw ParseError("labeled flag must be 0 or 1", line_no);
            }
            cloud.labeled.push_back(m == 1);
        } else {
            cloud.labeled.push_back(cloud.labels.has_value() || cloud.function_values.has_value());
        }
    }
    const auto n = static_cast<Eigen::Index>(cloud.labeled.size());
    cloud.points = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        coords.data(), n, dim);
    return cloud;
}

PointCloud load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return read_csv(in);
}

} // namespace atlas::data
