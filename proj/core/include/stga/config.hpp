#pragma once

#include "stga/appearance.hpp"
#include "stga/flowdens.hpp"
#include "stga/gaussian.hpp"
#include "stga/optim.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace stga {

/// Ablation arms: full model, no flow-guided density control, LBS only
/// (polynomial terms frozen at zero), SH colors instead of the MLP.
enum class TrainMode { Full, NoFlow, NoStg, Sh };

[[nodiscard]] std::string to_string(TrainMode mode);
/// Throws ArgumentError for an unknown name.
[[nodiscard]] TrainMode parse_mode(const std::string& name);

struct LearningRates {
    double position = 1.6e-4;
    double polynomial = 1.6e-4;
    double rotation = 1e-3;
    double scale = 5e-3;
    double opacity = 5e-2;
    double feature = 5e-3;
    double mlp = 1e-3;
};

struct TrainConfig {
    int iterations = 2000;
    TrainMode mode = TrainMode::Full;
    std::uint64_t seed = 0;
    LearningRates lr;
    AdamConfig adam;
    int densify_interval = 200;
    int densify_from = 500;
    int densify_until = 8000;
    double lambda_ssim = 0.2;
    std::array<double, 3> ratios{0.1, 0.05, 0.01};
    double ema_decay = 0.99;
    int log_interval = 50;

    int init_count = 5000;
    double init_radius = 0.12;
    double init_opacity = 0.1;
    double init_scale = 0.02;
    int max_splats = 20000;

    GaussianLayout layout{2, 1, 8};
    std::vector<int> hidden{64, 64};
    int sh_degree = 2;
    std::array<double, 3> background{0.0, 0.0, 0.0};

    /// Throws ArgumentError when a field is out of range.
    void validate() const;
};

struct Config {
    TrainConfig train;
    DensifyConfig densify;
    EncodingConfig encoding;

    void validate() const;
};

/// {"train": {...}, "densify": {...}, "encoding": {...}}; every field is
/// optional, unknown keys are rejected with ArgumentError.
[[nodiscard]] Config config_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json config_to_json(const Config& c);

}  // namespace stga
