#include "dynagmap/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "dynagmap/config.hpp"
#include "dynagmap/errors.hpp"

namespace dynagmap {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    return out;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Cursor over a netpbm-style header.
struct HeaderReader {
    const std::string& data;
    std::size_t pos = 0;
    const fs::path& path;

    void skip_space() {
        while (pos < data.size()) {
            if (data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    }
    std::string token() {
        skip_space();
        const std::size_t start = pos;
        while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
        if (start == pos) throw LoadError(path.string() + ": truncated header");
        return data.substr(start, pos - start);
    }
    long integer() {
        const std::string t = token();
        try {
            std::size_t used = 0;
            const long v = std::stol(t, &used);
            if (used != t.size()) throw std::invalid_argument(t);
            return v;
        } catch (const std::exception&) {
            throw LoadError(path.string() + ": malformed header field '" + t + "'");
        }
    }
    void single_whitespace() {
        if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos])))
            throw LoadError(path.string() + ": malformed header");
        ++pos;
    }
};

std::uint8_t to_byte(double v) {
    if (!(v >= 0.0)) v = 0.0;  // NaN maps to 0
    return static_cast<std::uint8_t>(std::lround(std::min(v, 1.0) * 255.0));
}

void put_f32(std::string& out, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_f32(const std::string& in, std::size_t pos, bool little) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) {
        const auto byte = static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i]));
        bits |= little ? byte << (8 * i) : byte << (8 * (3 - i));
    }
    return std::bit_cast<float>(bits);
}

std::int32_t get_i32(const std::string& in, std::size_t pos) {
    return static_cast<std::int32_t>(std::bit_cast<std::uint32_t>(get_f32(in, pos, true)));
}

}  // namespace

void write_ppm(const fs::path& path, const RgbImage& img) {
    if (img.channels() != 3) throw ShapeError("write_ppm needs a 3-channel image");
    std::string out = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    for (double v : img.data()) out.push_back(static_cast<char>(to_byte(v)));
    open_out(path) << out;
}

RgbImage read_ppm(const fs::path& path) {
    const std::string data = slurp(path);
    HeaderReader h{data, 0, path};
    if (h.token() != "P6") throw LoadError(path.string() + ": not a binary PPM (P6)");
    const long w = h.integer(), ht = h.integer(), maxval = h.integer();
    if (w <= 0 || ht <= 0 || maxval != 255) throw LoadError(path.string() + ": unsupported PPM header");
    h.single_whitespace();
    const std::size_t n = static_cast<std::size_t>(w) * ht * 3;
    if (data.size() - h.pos < n) throw LoadError(path.string() + ": truncated PPM pixel data");
    RgbImage img(static_cast<int>(w), static_cast<int>(ht), 3);
    for (std::size_t i = 0; i < n; ++i)
        img.data()[i] = static_cast<unsigned char>(data[h.pos + i]) / 255.0;
    return img;
}

void write_pgm(const fs::path& path, const MaskImage& mask) {
    std::string out = "P5\n" + std::to_string(mask.width()) + " " + std::to_string(mask.height()) + "\n255\n";
    out.append(reinterpret_cast<const char*>(mask.data().data()), mask.data().size());
    open_out(path) << out;
}

MaskImage read_pgm(const fs::path& path) {
    const std::string data = slurp(path);
    HeaderReader h{data, 0, path};
    if (h.token() != "P5") throw LoadError(path.string() + ": not a binary PGM (P5)");
    const long w = h.integer(), ht = h.integer(), maxval = h.integer();
    if (w <= 0 || ht <= 0 || maxval != 255) throw LoadError(path.string() + ": unsupported PGM header");
    h.single_whitespace();
    const std::size_t n = static_cast<std::size_t>(w) * ht;
    if (data.size() - h.pos < n) throw LoadError(path.string() + ": truncated PGM pixel data");
    MaskImage mask(static_cast<int>(w), static_cast<int>(ht), 1);
    std::memcpy(mask.data().data(), data.data() + h.pos, n);
    return mask;
}

void write_pfm(const fs::path& path, const DepthImage& depth) {
    if (depth.channels() != 1) throw ShapeError("write_pfm needs a 1-channel image");
    std::string out = "Pf\n" + std::to_string(depth.width()) + " " + std::to_string(depth.height()) + "\n-1.0\n";
    for (int v = depth.height() - 1; v >= 0; --v)
        for (int u = 0; u < depth.width(); ++u) put_f32(out, static_cast<float>(depth.at(u, v)));
    open_out(path) << out;
}

DepthImage read_pfm(const fs::path& path) {
    const std::string data = slurp(path);
    HeaderReader h{data, 0, path};
    if (h.token() != "Pf") throw LoadError(path.string() + ": not a grayscale PFM");
    const long w = h.integer(), ht = h.integer();
    double scale = 0.0;
    try {
        scale = std::stod(h.token());
    } catch (const std::exception&) {
        throw LoadError(path.string() + ": malformed PFM scale");
    }
    if (w <= 0 || ht <= 0 || scale == 0.0) throw LoadError(path.string() + ": unsupported PFM header");
    h.single_whitespace();
    const std::size_t n = static_cast<std::size_t>(w) * ht;
    if (data.size() - h.pos < 4 * n) throw LoadError(path.string() + ": truncated PFM data");
    DepthImage depth(static_cast<int>(w), static_cast<int>(ht), 1);
    std::size_t p = h.pos;
    for (long v = ht - 1; v >= 0; --v)
        for (long u = 0; u < w; ++u, p += 4)
            depth.at(static_cast<int>(u), static_cast<int>(v)) = get_f32(data, p, scale < 0.0);
    return depth;
}

void write_flo(const fs::path& path, const FlowImage& flow) {
    if (flow.channels() != 2) throw ShapeError("write_flo needs a 2-channel image");
    std::string out;
    put_f32(out, 202021.25f);
    put_f32(out, std::bit_cast<float>(static_cast<std::uint32_t>(flow.width())));
    put_f32(out, std::bit_cast<float>(static_cast<std::uint32_t>(flow.height())));
    for (double v : flow.data()) put_f32(out, std::isfinite(v) ? static_cast<float>(v) : 1e10f);
    open_out(path) << out;
}

FlowImage read_flo(const fs::path& path) {
    const std::string data = slurp(path);
    if (data.size() < 12 || get_f32(data, 0, true) != 202021.25f)
        throw LoadError(path.string() + ": bad .flo magic number");
    const std::int32_t w = get_i32(data, 4), h = get_i32(data, 8);
    if (w <= 0 || h <= 0) throw LoadError(path.string() + ": bad .flo dimensions");
    const std::size_t n = static_cast<std::size_t>(w) * h * 2;
    if (data.size() - 12 < 4 * n) throw LoadError(path.string() + ": truncated .flo data");
    FlowImage flow(w, h, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const float f = get_f32(data, 12 + 4 * i, true);
        flow.data()[i] = std::abs(f) > 1e9f ? std::numeric_limits<double>::quiet_NaN() : f;
    }
    return flow;
}

std::string frame_file(std::int64_t t, const std::string& suffix) {
    std::ostringstream ss;
    ss << "frame_" << std::setw(6) << std::setfill('0') << t << "." << suffix;
    return ss.str();
}

namespace {

std::string fmt17(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

}  // namespace

void write_intrinsics(const fs::path& path, const CameraModel& cam) {
    open_out(path) << fmt17(cam.fx) << " " << fmt17(cam.fy) << " " << fmt17(cam.cx) << " "
                   << fmt17(cam.cy) << " " << cam.width << " " << cam.height << "\n";
}

CameraModel read_intrinsics(const fs::path& path) {
    if (!fs::exists(path)) throw LoadError("missing intrinsics file " + path.string());
    std::istringstream in(slurp(path));
    CameraModel cam;
    if (!(in >> cam.fx >> cam.fy >> cam.cx >> cam.cy >> cam.width >> cam.height))
        throw LoadError(path.string() + ": expected 'fx fy cx cy width height'");
    try {
        cam.validate();
    } catch (const Error& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
    return cam;
}

Pose parse_pose(const std::string& text) {
    std::istringstream in(text);
    double v[7];
    for (double& x : v)
        if (!(in >> x)) throw InvalidParameter("pose needs 'tx ty tz qx qy qz qw', got '" + text + "'");
    std::string extra;
    if (in >> extra) throw InvalidParameter("trailing text after pose: '" + text + "'");
    Pose p;
    p.translation = Vec3(v[0], v[1], v[2]);
    p.rotation = Quat(v[6], v[3], v[4], v[5]);
    if (!(p.rotation.norm() > 0.0)) throw InvalidParameter("pose quaternion is zero");
    p.rotation.normalize();
    p.validate();
    return p;
}

std::string format_pose(const Pose& p) {
    return fmt17(p.translation.x()) + " " + fmt17(p.translation.y()) + " " + fmt17(p.translation.z()) +
           " " + fmt17(p.rotation.x()) + " " + fmt17(p.rotation.y()) + " " + fmt17(p.rotation.z()) +
           " " + fmt17(p.rotation.w());
}

void write_sequence(const fs::path& dir, const Sequence& seq) {
    fs::create_directories(dir);
    write_intrinsics(dir / "intrinsics.txt", seq.cam);
    std::string poses;
    for (const auto& f : seq.frames) {
        write_ppm(dir / frame_file(f.timestamp, "rgb.ppm"), f.rgb);
        write_pfm(dir / frame_file(f.timestamp, "depth.pfm"), f.depth);
        if (f.flow_back) write_flo(dir / frame_file(f.timestamp, "flow.flo"), *f.flow_back);
        if (f.motion_mask) write_pgm(dir / frame_file(f.timestamp, "mask.pgm"), *f.motion_mask);
        poses += std::to_string(f.timestamp) + " " + format_pose(f.pose) + "\n";
    }
    open_out(dir / "poses.txt") << poses;
}

LoadedSequence load_sequence(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw LoadError("sequence directory " + dir.string() + " does not exist");
    LoadedSequence seq;
    seq.cam = read_intrinsics(dir / "intrinsics.txt");

    const fs::path pose_path = dir / "poses.txt";
    if (!fs::exists(pose_path)) throw LoadError("missing pose file " + pose_path.string());
    std::map<std::int64_t, Pose> poses;
    {
        std::istringstream in(slurp(pose_path));
        std::string line;
        int lineno = 0;
        std::int64_t last = std::numeric_limits<std::int64_t>::min();
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            std::istringstream ls(line);
            std::int64_t idx;
            if (!(ls >> idx)) throw LoadError(pose_path.string() + ":" + std::to_string(lineno) + ": bad frame index");
            std::string rest;
            std::getline(ls, rest);
            try {
                poses[idx] = parse_pose(rest);
            } catch (const Error& e) {
                throw LoadError(pose_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
            }
            if (idx <= last) throw LoadError(pose_path.string() + ": pose lines are not sorted by frame");
            last = idx;
        }
    }

    static const std::regex rgb_re(R"(frame_(\d{6})\.rgb\.ppm)");
    std::vector<std::int64_t> indices;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (std::regex_match(name, m, rgb_re)) indices.push_back(std::stoll(m[1].str()));
    }
    std::sort(indices.begin(), indices.end());
    if (indices.empty()) throw LoadError(dir.string() + ": no frame_XXXXXX.rgb.ppm files");

    bool any_flow = false;
    for (std::int64_t t : indices) {
        FrameBundle f;
        f.timestamp = t;
        const auto it = poses.find(t);
        if (it == poses.end()) throw LoadError(pose_path.string() + ": no pose for frame " + std::to_string(t));
        f.pose = it->second;
        f.rgb = read_ppm(dir / frame_file(t, "rgb.ppm"));
        const fs::path depth_path = dir / frame_file(t, "depth.pfm");
        if (!fs::exists(depth_path)) throw LoadError("missing depth file " + depth_path.string());
        f.depth = read_pfm(depth_path);
        for (double& d : f.depth.data())
            if (!(d > 0.0) || !std::isfinite(d)) d = 0.0;
        const fs::path flow_path = dir / frame_file(t, "flow.flo");
        if (fs::exists(flow_path)) {
            f.flow_back = read_flo(flow_path);
            any_flow = true;
        }
        const fs::path mask_path = dir / frame_file(t, "mask.pgm");
        if (fs::exists(mask_path)) f.motion_mask = read_pgm(mask_path);
        try {
            f.validate(seq.cam);
        } catch (const Error& e) {
            throw LoadError(dir.string() + "/" + frame_file(t, "*") + ": " + e.what());
        }
        seq.frames.push_back(std::move(f));
    }
    if (!any_flow)
        seq.warnings.push_back("no optical flow files found; dynamic Gaussian handling is disabled");
    return seq;
}

// ---- checkpoints ----

namespace {

constexpr int kFormatVersion = 1;

json v3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 v3(const json& j) {
    if (!j.is_array() || j.size() != 3) throw LoadError("checkpoint: expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void require_finite(const Gaussian& g) {
    bool ok = g.mean.allFinite() && g.rotation.coeffs().allFinite() && g.log_scale.allFinite() &&
              std::isfinite(g.opacity_logit);
    for (double v : g.sh) ok = ok && std::isfinite(v);
    if (!ok) throw InvalidParameter("cannot save Gaussian " + std::to_string(g.id) + ": non-finite parameters");
}

ordered_json gaussian_json(const Gaussian& g) {
    require_finite(g);
    ordered_json j;
    j["id"] = g.id;
    j["kind"] = g.is_dynamic() ? "dynamic" : "static";
    j["mean"] = v3(g.mean);
    j["rotation"] = {g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z()};
    j["log_scale"] = v3(g.log_scale);
    j["opacity_logit"] = g.opacity_logit;
    j["sh"] = g.sh;
    j["birth_frame"] = g.birth_frame;
    j["last_observed_frame"] = g.last_observed_frame;
    if (g.spline) {
        const auto& s = *g.spline;
        j["spline"] = {{"m_minus", v3(s.m_minus)}, {"m_plus", v3(s.m_plus)},
                       {"v_minus", v3(s.v_minus)}, {"v_plus", v3(s.v_plus)},
                       {"t_anchor", s.t_anchor},   {"gap", s.gap}};
    }
    if (g.v_prev_plus) j["v_prev_plus"] = v3(*g.v_prev_plus);
    return j;
}

Gaussian gaussian_from(const json& j) {
    Gaussian g;
    g.id = j.at("id").get<std::uint64_t>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind != "static" && kind != "dynamic") throw LoadError("checkpoint: unknown kind '" + kind + "'");
    g.kind = kind == "dynamic" ? GaussianKind::dynamic_kind : GaussianKind::static_kind;
    g.mean = v3(j.at("mean"));
    const auto& r = j.at("rotation");
    if (!r.is_array() || r.size() != 4) throw LoadError("checkpoint: rotation needs 4 values");
    g.rotation = Quat(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>());
    g.log_scale = v3(j.at("log_scale"));
    g.opacity_logit = j.at("opacity_logit").get<double>();
    g.sh = j.at("sh").get<std::vector<double>>();
    g.birth_frame = j.at("birth_frame").get<std::int64_t>();
    g.last_observed_frame = j.at("last_observed_frame").get<std::int64_t>();
    if (j.contains("spline")) {
        const auto& s = j.at("spline");
        MotionSpline sp;
        sp.m_minus = v3(s.at("m_minus"));
        sp.m_plus = v3(s.at("m_plus"));
        sp.v_minus = v3(s.at("v_minus"));
        sp.v_plus = v3(s.at("v_plus"));
        sp.t_anchor = s.at("t_anchor").get<std::int64_t>();
        sp.gap = s.at("gap").get<int>();
        g.spline = sp;
    }
    if (j.contains("v_prev_plus")) g.v_prev_plus = v3(j.at("v_prev_plus"));
    return g;
}

}  // namespace

void save_checkpoint(const fs::path& path, const GaussianMap& map, const CameraModel& cam) {
    ordered_json header;
    header["format_version"] = kFormatVersion;
    header["frame_index"] = map.frame_index;
    header["sh_degree"] = map.config.sh_degree;
    header["next_id"] = map.next_id;
    header["config"] = config_to_json(map.config);
    header["camera"] = {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy},
                        {"width", cam.width}, {"height", cam.height}};
    std::string out = header.dump() + "\n";
    for (const auto& g : map.static_set) out += gaussian_json(g).dump() + "\n";
    for (const auto& g : map.dynamic_set) out += gaussian_json(g).dump() + "\n";
    open_out(path) << out;
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::istringstream in(slurp(path));
    std::string line;
    Checkpoint ck;
    int lineno = 0;
    try {
        if (!std::getline(in, line)) throw LoadError(path.string() + ": empty checkpoint");
        ++lineno;
        const json header = json::parse(line);
        if (header.at("format_version").get<int>() != kFormatVersion)
            throw LoadError(path.string() + ": unsupported checkpoint version");
        ck.map.frame_index = header.at("frame_index").get<std::int64_t>();
        ck.map.config = config_from_json(header.at("config"));
        ck.map.next_id = header.at("next_id").get<std::uint64_t>();
        if (header.at("sh_degree").get<int>() != ck.map.config.sh_degree)
            throw LoadError(path.string() + ": header sh_degree disagrees with config");
        const auto& c = header.at("camera");
        ck.cam = {c.at("fx").get<double>(), c.at("fy").get<double>(), c.at("cx").get<double>(),
                  c.at("cy").get<double>(), c.at("width").get<int>(), c.at("height").get<int>()};
        ck.cam.validate();
        const int basis = sh_basis_count(ck.map.config.sh_degree);
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            Gaussian g = gaussian_from(json::parse(line));
            if (g.sh.size() != 3u * basis) throw LoadError("SH coefficient count does not match sh_degree");
            (g.is_dynamic() ? ck.map.dynamic_set : ck.map.static_set).push_back(std::move(g));
        }
    } catch (const LoadError& e) {
        throw LoadError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const json::exception& e) {
        throw LoadError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
        throw LoadError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    return ck;
}

}  // namespace dynagmap
