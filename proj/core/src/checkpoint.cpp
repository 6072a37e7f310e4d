#include "stga/checkpoint.hpp"

#include "stga/binary_io.hpp"

#include <fstream>

namespace stga {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'S', 'T', 'G', 'A'};

template <typename T>
T take(std::istream& is, const fs::path& path) {
    T v{};
    if (!binio::read(is, v)) throw DataError("truncated checkpoint " + path.string());
    return v;
}

double take_f32(std::istream& is, const fs::path& path) {
    double v = 0.0;
    if (!binio::read_f32(is, v)) throw DataError("truncated checkpoint " + path.string());
    return v;
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    const Model& m = ckpt.model;
    if (m.weights.size() != m.gaussians.size()) throw ArgumentError("checkpoint: weight count does not match splat count");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    os.write(kMagic, 4);
    binio::write<std::uint32_t>(os, kCheckpointVersion);
    binio::write<std::uint64_t>(os, m.gaussians.size());
    binio::write<std::int32_t>(os, m.layout.motion_order);
    binio::write<std::int32_t>(os, m.layout.rotation_order);
    binio::write<std::int32_t>(os, m.layout.feature_width);
    binio::write<std::uint8_t>(os, m.color_mode == ColorMode::Mlp ? 0 : 1);
    binio::write<std::int32_t>(os, m.sh_degree);
    binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(m.mlp.bone_count()));
    const EncodingConfig& enc = m.mlp.encoding();
    binio::write<std::int32_t>(os, enc.position_frequencies);
    binio::write<std::int32_t>(os, enc.view_frequencies);
    binio::write<std::int32_t>(os, enc.pose_frequencies);
    binio::write<std::int32_t>(os, enc.motion_width);
    binio::write<std::int32_t>(os, enc.view_encoding == ViewEncoding::Frequency ? 0 : 1);
    const std::vector<int> sizes = m.mlp.hidden().empty() ? std::vector<int>{} : m.mlp.layer_sizes();
    binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(sizes.size()));
    for (int s : sizes) binio::write<std::int32_t>(os, s);
    binio::write<std::uint64_t>(os, static_cast<std::uint64_t>(m.mlp.parameters().size()));

    std::vector<double> p(static_cast<std::size_t>(m.layout.parameter_count()));
    for (const SpacetimeGaussian& g : m.gaussians) {
        if (!(g.layout() == m.layout)) throw ArgumentError("checkpoint: splat layout differs from the model layout");
        g.pack(p.data());
        for (double v : p) binio::write_f32(os, v);
    }
    for (const BoneWeights& w : m.weights) {
        binio::write<std::int32_t>(os, w.count);
        for (std::int32_t b : w.bones) binio::write<std::int32_t>(os, b);
        for (double v : w.weights) binio::write_f32(os, v);
    }
    const VecX& params = m.mlp.parameters();
    for (Eigen::Index i = 0; i < params.size(); ++i) binio::write_f32(os, params[i]);
    if (!os) throw DataError("write failed: " + path.string());
    os.close();

    std::ofstream js(sidecar_path(path));
    if (!js) throw DataError("cannot write " + sidecar_path(path).string());
    js << ckpt.sidecar.dump(1) << '\n';
    if (!js) throw DataError("write failed: " + sidecar_path(path).string());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path.string());
    char magic[4] = {};
    if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) {
        throw DataError("not a checkpoint (bad magic): " + path.string());
    }
    const auto version = take<std::uint32_t>(is, path);
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + "): " + path.string());
    }
    Checkpoint ck;
    Model& m = ck.model;
    const auto count = take<std::uint64_t>(is, path);
    m.layout.motion_order = take<std::int32_t>(is, path);
    m.layout.rotation_order = take<std::int32_t>(is, path);
    m.layout.feature_width = take<std::int32_t>(is, path);
    const auto mode = take<std::uint8_t>(is, path);
    if (mode > 1) throw DataError("bad color mode in " + path.string());
    m.color_mode = mode == 0 ? ColorMode::Mlp : ColorMode::SphericalHarmonics;
    m.sh_degree = take<std::int32_t>(is, path);
    const auto bones = take<std::uint32_t>(is, path);
    EncodingConfig enc;
    enc.position_frequencies = take<std::int32_t>(is, path);
    enc.view_frequencies = take<std::int32_t>(is, path);
    enc.pose_frequencies = take<std::int32_t>(is, path);
    enc.motion_width = take<std::int32_t>(is, path);
    enc.view_encoding = take<std::int32_t>(is, path) == 0 ? ViewEncoding::Frequency : ViewEncoding::SphericalHarmonics;
    const auto layers = take<std::uint32_t>(is, path);
    if (layers > 64) throw DataError("implausible layer count in " + path.string());
    std::vector<int> sizes(layers);
    for (int& s : sizes) s = take<std::int32_t>(is, path);
    const auto mlp_count = take<std::uint64_t>(is, path);
    if (m.layout.motion_order < 0 || m.layout.rotation_order < 0 || m.layout.feature_width < 0 || count > (1ULL << 32)) {
        throw DataError("corrupt checkpoint header: " + path.string());
    }
    if (sizes.size() >= 2) {
        m.mlp = ColorMLP(enc, m.layout, bones, std::vector<int>(sizes.begin() + 1, sizes.end() - 1));
        if (m.mlp.layer_sizes() != sizes || m.mlp.parameter_count() != mlp_count) {
            throw DataError("MLP shape in " + path.string() + " does not match its header");
        }
    } else if (mlp_count != 0) {
        throw DataError("corrupt checkpoint header: " + path.string());
    }

    std::vector<double> p(static_cast<std::size_t>(m.layout.parameter_count()));
    m.gaussians.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        for (double& v : p) v = take_f32(is, path);
        SpacetimeGaussian g = SpacetimeGaussian::make(m.layout);
        g.unpack(p.data());
        m.gaussians.push_back(std::move(g));
    }
    m.weights.resize(count);
    for (BoneWeights& w : m.weights) {
        w.count = take<std::int32_t>(is, path);
        for (std::int32_t& b : w.bones) b = take<std::int32_t>(is, path);
        for (double& v : w.weights) v = take_f32(is, path);
        if (w.count < 0 || w.count > BoneWeights::kMaxBones) throw DataError("corrupt skinning weights in " + path.string());
    }
    VecX& params = m.mlp.parameters();
    for (Eigen::Index i = 0; i < params.size(); ++i) params[i] = take_f32(is, path);
    char extra = 0;
    if (is.read(&extra, 1)) throw DataError("trailing bytes in checkpoint " + path.string());

    const fs::path side = sidecar_path(path);
    if (fs::exists(side)) {
        std::ifstream js(side);
        try {
            ck.sidecar = nlohmann::json::parse(js);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("malformed sidecar " + side.string() + ": " + e.what());
        }
    }
    return ck;
}

}  // namespace stga
