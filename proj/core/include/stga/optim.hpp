#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace stga {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moments of one tensor. `step` is the bias-correction step
/// shared by all tensors of a parameter group.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
    std::int64_t skipped = 0;  // updates skipped for non-finite gradients

    void resize(std::size_t n) {
        m.resize(n, 0.0);
        v.resize(n, 0.0);
    }
};

/// Bias-corrected Adam on one tensor with per-element learning rates
/// (`lr` has one entry, or one per parameter). Moments live at `offset` in
/// `state`. Returns false (and leaves params and moments untouched) when any
/// gradient is non-finite. `step` is the 1-based step used for bias correction.
bool adam_update(std::span<double> params, std::span<const double> grads, AdamState& state,
                 std::size_t offset, std::span<const double> lr, std::int64_t step,
                 const AdamConfig& cfg = {});

/// Single-tensor convenience: increments state.step, then updates.
bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

}  // namespace stga
