#pragma once

#include <span>

namespace lanegame::stats {

double mean(std::span<const double> v);
// Divide-by-N standard deviation.
double population_std(std::span<const double> v);
// Divide-by-(N-1) standard deviation; 0 for fewer than two values.
double sample_std(std::span<const double> v);

// Upper-tail probabilities.
double f_sf(double f, double df1, double df2);
double chi2_sf(double x, double df);
// Two-sided (1 - alpha) Student-t critical value.
double t_critical(double alpha, double df);

}  // namespace lanegame::stats
