#pragma once

#include <functional>
#include <map>
#include <string>

namespace acceptance {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    double time_limit = 0.0;  // seconds
    std::function<Outcome()> run;
};

const std::map<int, Criterion>& criteria();

Outcome partition_of_unity();
Outcome multiplication_network();
Outcome constructed_decoder();
Outcome local_regression();
Outcome arc_projection();
Outcome triangle_projection();
Outcome gauss_map_feasibility();
Outcome nine_gaussians();
Outcome triangles_clustering();
Outcome overlapping_circles();
Outcome swiss_roll();
Outcome gradient_integrity();

/// printf-style helper for detail strings.
std::string format(const char* fmt, ...);

} // namespace acceptance
