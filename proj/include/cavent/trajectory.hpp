#pragma once

#include "cavent/hilbert.hpp"

#include <optional>
#include <vector>

namespace cavent {

/// Observables sampled along one integration. Populations are unnormalized
/// full-space diagonal sums.
struct Trajectory {
    std::vector<double> times;
    std::vector<double> rho00, rho01, rho10, rho11;
    std::vector<double> excited_A, excited_B;
    std::vector<double> photons;
    std::vector<double> inversion;
    std::vector<double> concurrence;
    std::vector<double> weight;
    std::vector<double> purity;

    double min_eigenvalue = 1.0;    ///< smallest eigenvalue seen at positivity checkpoints
    double max_trace_error = 0.0;   ///< largest |tr(rho) - 1| over samples
    double max_hermiticity = 0.0;   ///< largest Hermiticity defect before symmetrization
    long long steps = 0;
    long long record_every = 0;     ///< steps between samples
    double dt = 0.0;                ///< step actually used (first step for adaptive runs)
    int reduced_dim = 0;            ///< size of the invariant subspace that was integrated

    std::optional<DensityMatrix> final_state;

    std::size_t size() const { return times.size(); }
};

}  // namespace cavent
