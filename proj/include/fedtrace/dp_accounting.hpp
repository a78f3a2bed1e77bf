#pragma once

#include "fedtrace/federated.hpp"

namespace fedtrace {

// Renyi-DP accounting for the subsampled Gaussian mechanism composed over T
// steps: epsilon at dp.delta, minimized over a fixed grid of Renyi orders
// (1.25 to 64 in steps of 0.25, extended sparsely to 1024 so very large sigma
// converts tightly). sigma = 0 returns +inf. q must lie in (0, 1], T >= 1.
double rdp_epsilon(const DpConfig& dp, double q, long long steps);

// RDP of one subsampled-Gaussian step at Renyi order alpha (alpha > 1),
// exposed for verification against independent implementations.
double subsampled_gaussian_rdp(double q, double sigma, double alpha);

// The order grid used by rdp_epsilon.
const std::vector<double>& rdp_alpha_grid();

} // namespace fedtrace
