#include "stga/dataset.hpp"

#include "stga/deform.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace stga {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string numbered(int k, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d%s", k, ext);
    return buf;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path.string());
    os << j.dump(1) << '\n';
    if (!os) throw DataError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

template <typename F>
auto with_path(const fs::path& path, F&& f) {
    try {
        return f();
    } catch (const DataError&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace

double FrameDataset::time(int k) const { return frame_time(k, frame_count()); }

bool FrameDataset::is_holdout(int k) const {
    return std::find(holdout.begin(), holdout.end(), k) != holdout.end();
}

std::vector<int> FrameDataset::training_frames() const {
    std::vector<int> out;
    for (int k = 0; k < frame_count(); ++k) {
        if (!is_holdout(k)) out.push_back(k);
    }
    return out;
}

void FrameDataset::validate() const {
    const int n = frame_count();
    if (n < 2) throw DataError("dataset needs at least 2 frames, has " + std::to_string(n));
    if (skeleton.empty()) throw DataError("dataset skeleton has no bones");
    if (static_cast<int>(cameras.size()) != n) throw DataError("camera count does not match frame count");
    if (static_cast<int>(poses.size()) != n) throw DataError("pose count does not match frame count");
    if (static_cast<int>(flows.size()) != n - 1) throw DataError("expected " + std::to_string(n - 1) + " flow files");
    for (int k = 0; k < n; ++k) {
        const Image& f = frames[k];
        if (f.height != height() || f.width != width() || f.channels != 3) {
            throw DataError("frame " + std::to_string(k) + " has a different shape");
        }
        if (cameras[k].width != width() || cameras[k].height != height()) {
            throw DataError("camera " + std::to_string(k) + " does not match the image size");
        }
        if (poses[k].rotations.size() != skeleton.size()) {
            throw DataError("pose " + std::to_string(k) + " has the wrong bone count");
        }
    }
    for (const FlowField& fl : flows) {
        if (fl.height != height() || fl.width != width()) throw DataError("flow field does not match the image size");
    }
    for (int h : holdout) {
        if (h < 0 || h >= n) throw DataError("holdout frame " + std::to_string(h) + " out of range");
    }
    if (training_frames().empty()) throw DataError("no training frames left after holdout");
}

void save_dataset(const fs::path& dir, const FrameDataset& data) {
    data.validate();
    std::error_code ec;
    for (const char* sub : {"frames", "frames_raw", "flow"}) {
        fs::create_directories(dir / sub, ec);
        if (ec) throw DataError("cannot create " + (dir / sub).string() + ": " + ec.message());
    }
    for (int k = 0; k < data.frame_count(); ++k) {
        write_png(dir / "frames" / numbered(k, ".png"), data.frames[k]);
        write_imgf(dir / "frames_raw" / numbered(k, ".imgf"), data.frames[k]);
    }
    for (std::size_t k = 0; k < data.flows.size(); ++k) {
        write_flo(dir / "flow" / numbered(static_cast<int>(k), ".flo"), data.flows[k]);
    }
    write_json(dir / "cameras.json", cameras_to_json(data.cameras));
    write_json(dir / "poses.json", poses_to_json(data.poses));
    write_json(dir / "skeleton.json", skeleton_to_json(data.skeleton));
    write_json(dir / "meta.json", json{{"version", kDatasetVersion},
                                       {"N", data.frame_count()},
                                       {"H", data.height()},
                                       {"W", data.width()},
                                       {"seed", data.seed},
                                       {"holdout", data.holdout}});
}

FrameDataset load_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
    FrameDataset d;
    const json meta = read_json(dir / "meta.json");
    int n = 0;
    with_path(dir / "meta.json", [&] {
        if (meta.at("version").get<int>() != kDatasetVersion) {
            throw DataError("unsupported dataset version " + meta.at("version").dump());
        }
        n = meta.at("N").get<int>();
        d.seed = meta.at("seed").get<std::uint64_t>();
        d.holdout = meta.value("holdout", std::vector<int>{});
        return 0;
    });
    d.skeleton = with_path(dir / "skeleton.json", [&] { return skeleton_from_json(read_json(dir / "skeleton.json")); });
    d.cameras = with_path(dir / "cameras.json", [&] { return cameras_from_json(read_json(dir / "cameras.json")); });
    d.poses = with_path(dir / "poses.json", [&] { return poses_from_json(read_json(dir / "poses.json")); });
    for (int k = 0; k < n; ++k) {
        const fs::path p = dir / "frames_raw" / numbered(k, ".imgf");
        if (!fs::exists(p)) throw DataError("missing frame " + p.string());
        d.frames.push_back(read_imgf(p));
    }
    for (int k = 0; k + 1 < n; ++k) {
        const fs::path p = dir / "flow" / numbered(k, ".flo");
        if (!fs::exists(p)) throw DataError("missing flow " + p.string());
        d.flows.push_back(read_flo(p));
    }
    d.validate();
    if (meta.at("H").get<int>() != d.height() || meta.at("W").get<int>() != d.width()) {
        throw DataError("meta.json image size does not match the frames");
    }
    return d;
}

std::string dataset_hash(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const char* name : {"meta.json", "skeleton.json", "cameras.json", "poses.json"}) files.push_back(dir / name);
    for (const char* sub : {"frames_raw", "flow"}) {
        std::vector<fs::path> entries;
        if (fs::is_directory(dir / sub)) {
            for (const auto& e : fs::directory_iterator(dir / sub)) entries.push_back(e.path());
        }
        std::sort(entries.begin(), entries.end());
        files.insert(files.end(), entries.begin(), entries.end());
    }
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const fs::path& p : files) {
        std::ifstream is(p, std::ios::binary);
        if (!is) throw DataError("cannot open " + p.string());
        char buf[1 << 15];
        while (is.read(buf, sizeof buf) || is.gcount() > 0) {
            for (std::streamsize i = 0; i < is.gcount(); ++i) {
                h ^= static_cast<unsigned char>(buf[i]);
                h *= 0x100000001b3ULL;
            }
        }
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace stga
