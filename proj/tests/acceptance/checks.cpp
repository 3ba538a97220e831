#include "checks.hpp"

#include <cstdarg>
#include <cstdio>
#include <vector>

namespace acceptance {

std::string format(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    va_list copy;
    va_copy(copy, args);
    const int len = std::vsnprintf(nullptr, 0, fmt, copy);
    va_end(copy);
    std::vector<char> buf(static_cast<std::size_t>(len) + 1);
    std::vsnprintf(buf.data(), buf.size(), fmt, args);
    va_end(args);
    return std::string(buf.data(), static_cast<std::size_t>(len));
}

const std::map<int, Criterion>& criteria() {
    static const std::map<int, Criterion> table = {
        {1, {"partition of unity", 1, partition_of_unity}},
        {2, {"multiplication network", 10, multiplication_network}},
        {3, {"constructed decoder", 30, constructed_decoder}},
        {4, {"local regression", 60, local_regression}},
        {5, {"arc projection", 10, arc_projection}},
        {6, {"triangle two-chart projection", 5, triangle_projection}},
        {7, {"gauss-map feasibility", 5, gauss_map_feasibility}},
        {8, {"nine gaussians", 300, nine_gaussians}},
        {9, {"triangles clustering", 180, triangles_clustering}},
        {10, {"overlapping circles", 180, overlapping_circles}},
        {11, {"swiss roll", 300, swiss_roll}},
        {12, {"gradient integrity", 1, gradient_integrity}},
    };
    return table;
}

} // namespace acceptance
