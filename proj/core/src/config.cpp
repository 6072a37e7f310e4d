#include "stga/config.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>

namespace stga {

std::string to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::Full: return "full";
        case TrainMode::NoFlow: return "no-flow";
        case TrainMode::NoStg: return "no-stg";
        case TrainMode::Sh: return "sh";
    }
    return "full";
}

TrainMode parse_mode(const std::string& name) {
    if (name == "full") return TrainMode::Full;
    if (name == "no-flow") return TrainMode::NoFlow;
    if (name == "no-stg") return TrainMode::NoStg;
    if (name == "sh") return TrainMode::Sh;
    throw ArgumentError("unknown mode '" + name + "' (expected full, no-flow, no-stg or sh)");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw ArgumentError("train config: " + what); };
    if (iterations < 0) fail("iterations must be >= 0");
    for (double r : {lr.position, lr.polynomial, lr.rotation, lr.scale, lr.opacity, lr.feature, lr.mlp}) {
        if (!(r > 0.0)) fail("learning rates must be positive");
    }
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) fail("adam betas must be in [0, 1)");
    if (!(adam.eps > 0.0)) fail("adam eps must be positive");
    if (densify_interval <= 0) fail("densify_interval must be positive");
    if (densify_from < 0 || densify_until < densify_from) fail("densify window is empty or negative");
    if (lambda_ssim < 0.0 || lambda_ssim > 1.0) fail("lambda_ssim must be in [0, 1]");
    for (double r : ratios) {
        if (!(r > 0.0 && r < 1.0)) fail("ratios must be in (0, 1)");
    }
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) fail("ema_decay must be in [0, 1)");
    if (log_interval <= 0) fail("log_interval must be positive");
    if (init_count <= 0) fail("init_count must be positive");
    if (!(init_radius > 0.0) || !(init_scale > 0.0)) fail("init_radius and init_scale must be positive");
    if (!(init_opacity > 0.0 && init_opacity < 1.0)) fail("init_opacity must be in (0, 1)");
    if (max_splats < init_count) fail("max_splats must be >= init_count");
    if (layout.motion_order < 0 || layout.rotation_order < 0 || layout.feature_width < 0) fail("layout orders must be >= 0");
    if (hidden.empty()) fail("hidden must list at least one layer");
    for (int h : hidden) {
        if (h <= 0) fail("hidden layer sizes must be positive");
    }
    if (sh_degree < 0 || sh_degree > 2) fail("sh_degree must be 0, 1 or 2");
}

void Config::validate() const {
    train.validate();
    densify.validate();
    if (encoding.position_frequencies < 0 || encoding.view_frequencies < 0 || encoding.pose_frequencies < 0 ||
        encoding.motion_width < 0) {
        throw ArgumentError("encoding config: frequencies and widths must be >= 0");
    }
}

namespace {

using json = nlohmann::json;

// Field table: name -> (reader, writer). Readers throw ArgumentError on type errors.
struct Field {
    std::function<void(const json&)> read;
    std::function<json()> write;
};
using Fields = std::map<std::string, Field>;

template <typename T>
Field field(T& ref) {
    return Field{[&ref](const json& j) { ref = j.get<T>(); }, [&ref] { return json(ref); }};
}

void read_section(const json& j, const Fields& fields, const std::string& section) {
    if (!j.is_object()) throw ArgumentError("config: '" + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        const auto it = fields.find(key);
        if (it == fields.end()) throw ArgumentError("config: unknown key '" + section + "." + key + "'");
        try {
            it->second.read(value);
        } catch (const json::exception& e) {
            throw ArgumentError("config: bad value for '" + section + "." + key + "': " + e.what());
        }
    }
}

json write_section(const Fields& fields) {
    json j = json::object();
    for (const auto& [key, f] : fields) j[key] = f.write();
    return j;
}

Fields lr_fields(LearningRates& lr) {
    return {{"position", field(lr.position)}, {"polynomial", field(lr.polynomial)},
            {"rotation", field(lr.rotation)}, {"scale", field(lr.scale)},
            {"opacity", field(lr.opacity)},   {"feature", field(lr.feature)},
            {"mlp", field(lr.mlp)}};
}

Fields train_fields(TrainConfig& t) {
    Fields f{{"iterations", field(t.iterations)},
             {"seed", field(t.seed)},
             {"densify_interval", field(t.densify_interval)},
             {"densify_from", field(t.densify_from)},
             {"densify_until", field(t.densify_until)},
             {"lambda_ssim", field(t.lambda_ssim)},
             {"ratios", field(t.ratios)},
             {"ema_decay", field(t.ema_decay)},
             {"log_interval", field(t.log_interval)},
             {"init_count", field(t.init_count)},
             {"init_radius", field(t.init_radius)},
             {"init_opacity", field(t.init_opacity)},
             {"init_scale", field(t.init_scale)},
             {"max_splats", field(t.max_splats)},
             {"motion_order", field(t.layout.motion_order)},
             {"rotation_order", field(t.layout.rotation_order)},
             {"feature_width", field(t.layout.feature_width)},
             {"hidden", field(t.hidden)},
             {"sh_degree", field(t.sh_degree)},
             {"background", field(t.background)},
             {"adam_beta1", field(t.adam.beta1)},
             {"adam_beta2", field(t.adam.beta2)},
             {"adam_eps", field(t.adam.eps)}};
    f["mode"] = Field{[&t](const json& j) { t.mode = parse_mode(j.get<std::string>()); },
                      [&t] { return json(to_string(t.mode)); }};
    f["lr"] = Field{[&t](const json& j) { read_section(j, lr_fields(t.lr), "train.lr"); },
                    [&t] { return write_section(lr_fields(t.lr)); }};
    return f;
}

Fields densify_fields(DensifyConfig& d) {
    return {{"error_threshold", field(d.error_threshold)},
            {"step", field(d.step)},
            {"spread", field(d.spread)},
            {"flow_protection", field(d.flow_protection)},
            {"window", field(d.window)},
            {"motion_threshold", field(d.motion_threshold)},
            {"consistency_tolerance", field(d.consistency_tolerance)},
            {"density_scale", field(d.density_scale)},
            {"cell_size", field(d.cell_size)},
            {"opacity_floor", field(d.opacity_floor)},
            {"refine_blend", field(d.refine_blend)},
            {"max_new_per_round", field(d.max_new_per_round)}};
}

Fields encoding_fields(EncodingConfig& e) {
    Fields f{{"position_frequencies", field(e.position_frequencies)},
             {"view_frequencies", field(e.view_frequencies)},
             {"pose_frequencies", field(e.pose_frequencies)},
             {"motion_width", field(e.motion_width)}};
    f["view_encoding"] = Field{
        [&e](const json& j) {
            const std::string s = j.get<std::string>();
            if (s == "frequency") {
                e.view_encoding = ViewEncoding::Frequency;
            } else if (s == "sh") {
                e.view_encoding = ViewEncoding::SphericalHarmonics;
            } else {
                throw ArgumentError("config: encoding.view_encoding must be 'frequency' or 'sh'");
            }
        },
        [&e] { return json(e.view_encoding == ViewEncoding::Frequency ? "frequency" : "sh"); }};
    return f;
}

}  // namespace

Config config_from_json(const json& j) {
    Config c;
    Fields top{{"train", Field{[&c](const json& v) { read_section(v, train_fields(c.train), "train"); }, {}}},
               {"densify", Field{[&c](const json& v) { read_section(v, densify_fields(c.densify), "densify"); }, {}}},
               {"encoding", Field{[&c](const json& v) { read_section(v, encoding_fields(c.encoding), "encoding"); }, {}}}};
    read_section(j, top, "config");
    c.validate();
    return c;
}

json config_to_json(const Config& c) {
    Config copy = c;
    return json{{"train", write_section(train_fields(copy.train))},
                {"densify", write_section(densify_fields(copy.densify))},
                {"encoding", write_section(encoding_fields(copy.encoding))}};
}

}  // namespace stga
