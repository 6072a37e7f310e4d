#include "stga/optim.hpp"

#include "stga/types.hpp"

#include <cmath>

namespace stga {

bool adam_update(std::span<double> params, std::span<const double> grads, AdamState& state,
                 std::size_t offset, std::span<const double> lr, std::int64_t step,
                 const AdamConfig& cfg) {
    if (params.size() != grads.size()) throw ArgumentError("adam: parameter and gradient sizes differ");
    if (lr.size() != 1 && lr.size() != params.size()) throw ArgumentError("adam: learning-rate size mismatch");
    if (state.m.size() < offset + params.size()) state.resize(offset + params.size());
    for (double g : grads) {
        if (!std::isfinite(g)) {
            ++state.skipped;
            return false;
        }
    }
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double& m = state.m[offset + i];
        double& v = state.v[offset + i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads[i];
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double rate = lr.size() == 1 ? lr[0] : lr[i];
        if (rate == 0.0) continue;
        params[i] -= rate * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
    }
    return true;
}

bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
    ++state.step;
    const double rate[1] = {lr};
    return adam_update(params, grads, state, 0, rate, state.step, cfg);
}

}  // namespace stga
