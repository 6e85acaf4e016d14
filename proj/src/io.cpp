// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
#include <reflsurf/io.hpp>

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace reflsurf {

namespace {

std::string describe(const std::string &path, const std::string &what,
                     std::optional<std::uint64_t> offset) {
    std::string s = path + ": " + what;
    if (offset) s += " (byte " + std::to_string(*offset) + ")";
    return s;
}

template <class T> T toLittle(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

template <class T> void put(std::string &out, T v) {
    v = toLittle(v);
    out.append(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <class T> T get(const std::string &in, std::size_t at) {
    T v;
    std::memcpy(&v, in.data() + at, sizeof(T));
    return toLittle(v);
}

// ---------------------------------------------------------------- PLY

struct PlyProperty {
    std::string name;
    int size = 8; // 4 for float, 8 for double
};

struct PlyHeader {
    std::vector<PlyProperty> properties;
    std::vector<std::pair<std::string, std::uint64_t>> comments; // text, offset
    std::uint64_t vertexCount = 0;
    std::size_t payload = 0; // offset of the first vertex byte
    std::size_t stride = 0;
};

PlyHeader parsePlyHeader(const std::string &bytes, const std::string &name) {
    PlyHeader h;
    std::size_t pos = 0;
    bool sawFormat = false, sawVertex = false;
    int lineNo = 0;
    for (;;) {
        const std::size_t eol = bytes.find('\n', pos);
        if (eol == std::string::npos) throw IoError(name, "missing end_header", bytes.size());
        std::string line = bytes.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::uint64_t at = pos;
        pos = eol + 1;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (lineNo++ == 0) {
            if (line != "ply") throw IoError(name, "not a PLY file", 0);
            continue;
        }
        if (word == "end_header") break;
        if (word == "format") {
            std::string fmt, ver;
            ls >> fmt >> ver;
            if (fmt != "binary_little_endian" || ver != "1.0")
                throw IoError(name, "unsupported PLY format '" + fmt + " " + ver + "'", at);
            sawFormat = true;
        } else if (word == "comment" || word == "obj_info") {
            std::string rest;
            std::getline(ls, rest);
            const auto first = rest.find_first_not_of(' ');
            h.comments.emplace_back(first == std::string::npos ? "" : rest.substr(first), at);
        } else if (word == "element") {
            std::string el;
            std::string count;
            ls >> el >> count;
            if (el != "vertex") throw IoError(name, "unsupported element '" + el + "'", at);
            if (sawVertex) throw IoError(name, "duplicate vertex element", at);
            std::uint64_t n = 0;
            const auto r = std::from_chars(count.data(), count.data() + count.size(), n);
            if (r.ec != std::errc() || r.ptr != count.data() + count.size())
                throw IoError(name, "bad vertex count '" + count + "'", at);
            h.vertexCount = n;
            sawVertex = true;
        } else if (word == "property") {
            if (!sawVertex) throw IoError(name, "property before element", at);
            std::string type, pname;
            ls >> type >> pname;
            PlyProperty p;
            p.name = pname;
            if (type == "double" || type == "float64") p.size = 8;
            else if (type == "float" || type == "float32") p.size = 4;
            else throw IoError(name, "unsupported property type '" + type + "' for " + pname, at);
            if (pname.empty()) throw IoError(name, "property without a name", at);
            for (const auto &q : h.properties)
                if (q.name == pname) throw IoError(name, "duplicate property " + pname, at);
            h.properties.push_back(p);
        } else {
            throw IoError(name, "unexpected header line '" + line + "'", at);
        }
    }
    if (!sawFormat) throw IoError(name, "missing format line", 0);
    if (!sawVertex) throw IoError(name, "missing vertex element", 0);
    h.payload = pos;
    for (const auto &p : h.properties) h.stride += static_cast<std::size_t>(p.size);
    return h;
}

void checkPayload(const PlyHeader &h, const std::string &bytes, const std::string &name) {
    const std::size_t available = bytes.size() - h.payload;
    const std::uint64_t need = h.vertexCount * h.stride;
    if (available < need) {
        const std::uint64_t have = h.stride == 0 ? 0 : available / h.stride;
        throw IoError(name,
                      "truncated payload: header declares " + std::to_string(h.vertexCount) +
                          " vertices but only " + std::to_string(have) + " are present (deficit " +
                          std::to_string(h.vertexCount - have) + ")",
                      bytes.size());
    }
    if (available > need)
        throw IoError(name, std::to_string(available - need) + " trailing bytes after the payload",
                      h.payload + need);
}

double readProperty(const std::string &bytes, std::size_t at, int size) {
    return size == 8 ? get<double>(bytes, at) : static_cast<double>(get<float>(bytes, at));
}

std::vector<std::string> surfelProperties(bool withBlend) {
    std::vector<std::string> names = {"x",      "y",      "z",           "quat_w",
                                      "quat_x", "quat_y", "quat_z",      "log_scale_u",
                                      "log_scale_v", "raw_opacity"};
    for (int c = 0; c < 3; ++c) names.push_back("f_dc_" + std::to_string(c));
    for (int i = 0; i < 3 * (kShBasisCount - 1); ++i) names.push_back("f_rest_" + std::to_string(i));
    if (withBlend) names.push_back("raw_blend");
    return names;
}

std::string plyHeader(const std::vector<std::string> &props, std::size_t count,
                      const std::vector<std::string> &comments) {
    std::string h = "ply\nformat binary_little_endian 1.0\n";
    for (const auto &c : comments) h += "comment " + c + "\n";
    h += "element vertex " + std::to_string(count) + "\n";
    for (const auto &p : props) h += "property double " + p + "\n";
    h += "end_header\n";
    return h;
}

// ---------------------------------------------------------------- numbers

std::string formatDouble(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

} // namespace

IoError::IoError(const std::string &path, const std::string &what,
                 std::optional<std::uint64_t> offset)
    : std::runtime_error(describe(path, what, offset)), path_(path), offset_(offset) {}

std::string readFile(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void writeFileAtomic(const std::string &path, const std::string &bytes) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(tmp, "cannot open for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError(tmp, "write failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) throw IoError(path, "rename failed: " + ec.message());
}

std::string encodeGaussians(const GaussianSet &set) {
    const auto props = surfelProperties(set.hasBlend());
    std::string out = plyHeader(props, set.size(), {std::string("set_kind ") + toString(set.kind)});
    out.reserve(out.size() + set.size() * props.size() * 8);
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (int k = 0; k < 3; ++k) put(out, set.centers[i][k]);
        for (int k = 0; k < 4; ++k) put(out, set.rotations[i][k]);
        for (int k = 0; k < 2; ++k) put(out, set.logScales[i][k]);
        put(out, set.rawOpacity[i]);
        for (int c = 0; c < 3; ++c) put(out, set.sh[i][static_cast<std::size_t>(c * kShBasisCount)]);
        for (int c = 0; c < 3; ++c)
            for (int j = 1; j < kShBasisCount; ++j)
                put(out, set.sh[i][static_cast<std::size_t>(c * kShBasisCount + j)]);
        if (set.hasBlend()) put(out, set.rawBlend[i]);
    }
    return out;
}

GaussianSet decodeGaussians(const std::string &bytes, const std::string &name) {
    const PlyHeader h = parsePlyHeader(bytes, name);
    std::optional<SetKind> kind;
    for (const auto &[text, at] : h.comments) {
        if (text.rfind("set_kind", 0) != 0) continue;
        std::istringstream cs(text.substr(8));
        std::string value;
        cs >> value;
        if (value == "base") kind = SetKind::Base;
        else if (value == "env") kind = SetKind::Env;
        else throw IoError(name, "unknown set_kind '" + value + "'", at);
    }
    if (!kind) throw IoError(name, "missing 'comment set_kind base|env'", 0);
    const bool withBlend = *kind == SetKind::Base;
    const auto expected = surfelProperties(withBlend);
    std::map<std::string, std::pair<std::size_t, int>> where; // offset in record, size
    std::size_t off = 0;
    for (const auto &p : h.properties) {
        where[p.name] = {off, p.size};
        off += static_cast<std::size_t>(p.size);
    }
    for (const auto &e : expected)
        if (!where.count(e)) throw IoError(name, "missing property " + e, 0);
    if (where.size() != expected.size()) {
        for (const auto &p : h.properties)
            if (std::find(expected.begin(), expected.end(), p.name) == expected.end())
                throw IoError(name, "unexpected property " + p.name + " for set_kind " + toString(*kind), 0);
    }
    checkPayload(h, bytes, name);
    std::vector<std::pair<std::size_t, int>> slots;
    for (const auto &e : expected) slots.push_back(where[e]);

    GaussianSet set(*kind);
    set.reserve(h.vertexCount);
    Gaussian2D g;
    for (std::uint64_t i = 0; i < h.vertexCount; ++i) {
        const std::size_t rec = h.payload + i * h.stride;
        std::size_t s = 0;
        auto next = [&] {
            const auto [o, size] = slots[s++];
            return readProperty(bytes, rec + o, size);
        };
        for (int k = 0; k < 3; ++k) g.center[k] = next();
        for (int k = 0; k < 4; ++k) g.rotation[k] = next();
        for (int k = 0; k < 2; ++k) g.logScales[k] = next();
        g.rawOpacity = next();
        for (int c = 0; c < 3; ++c) g.sh[static_cast<std::size_t>(c * kShBasisCount)] = next();
        for (int c = 0; c < 3; ++c)
            for (int j = 1; j < kShBasisCount; ++j)
                g.sh[static_cast<std::size_t>(c * kShBasisCount + j)] = next();
        if (withBlend) g.rawBlend = next();
        else g.rawBlend.reset();
        set.push_back(g);
    }
    return set;
}

void saveGaussians(const std::string &path, const GaussianSet &set) {
    writeFileAtomic(path, encodeGaussians(set));
}

GaussianSet loadGaussians(const std::string &path) { return decodeGaussians(readFile(path), path); }

void savePoints(const std::string &path, const std::vector<Vec3> &points,
                const std::vector<Vec3> &colors) {
    if (!colors.empty() && colors.size() != points.size())
        throw ContractError("savePoints: color count differs from point count");
    std::vector<std::string> props = {"x", "y", "z"};
    if (!colors.empty()) props.insert(props.end(), {"red", "green", "blue"});
    std::string out = plyHeader(props, points.size(), {});
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (int k = 0; k < 3; ++k) put(out, points[i][k]);
        if (!colors.empty())
            for (int k = 0; k < 3; ++k) put(out, colors[i][k]);
    }
    writeFileAtomic(path, out);
}

void loadPoints(const std::string &path, std::vector<Vec3> &points, std::vector<Vec3> &colors) {
    const std::string bytes = readFile(path);
    const PlyHeader h = parsePlyHeader(bytes, path);
    std::map<std::string, std::pair<std::size_t, int>> where;
    std::size_t off = 0;
    for (const auto &p : h.properties) {
        where[p.name] = {off, p.size};
        off += static_cast<std::size_t>(p.size);
    }
    for (const char *n : {"x", "y", "z"})
        if (!where.count(n)) throw IoError(path, std::string("missing property ") + n, 0);
    checkPayload(h, bytes, path);
    const bool withColor = where.count("red") && where.count("green") && where.count("blue");
    points.clear();
    colors.clear();
    for (std::uint64_t i = 0; i < h.vertexCount; ++i) {
        const std::size_t rec = h.payload + i * h.stride;
        auto val = [&](const char *n) {
            const auto [o, size] = where.at(n);
            return readProperty(bytes, rec + o, size);
        };
        points.emplace_back(val("x"), val("y"), val("z"));
        if (withColor) colors.emplace_back(val("red"), val("green"), val("blue"));
    }
}

// ---------------------------------------------------------------- cameras

std::string encodeCameras(const std::vector<CameraModel> &cameras) {
    std::string out = "reflsurf_cameras 1\ncount " + std::to_string(cameras.size()) + "\n";
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        const CameraModel &c = cameras[i];
        out += "camera " + std::to_string(i) + " " + std::to_string(c.width) + " " +
               std::to_string(c.height);
        for (double v : {c.fx, c.fy, c.cx, c.cy}) out += " " + formatDouble(v);
        for (int r = 0; r < 3; ++r) {
            for (int k = 0; k < 3; ++k) out += " " + formatDouble(c.rotation(r, k));
            out += " " + formatDouble(c.translation[r]);
        }
        out += "\n";
    }
    return out;
}

std::vector<CameraModel> decodeCameras(const std::string &text, const std::string &name) {
    std::vector<CameraModel> cams;
    std::size_t pos = 0;
    int line = 0;
    std::optional<std::size_t> count;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        const std::uint64_t at = pos;
        std::string l = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line;
        if (!l.empty() && l.back() == '\r') l.pop_back();
        if (l.empty() || l[0] == '#') continue;
        std::vector<std::string> tok;
        {
            std::istringstream ls(l);
            std::string t;
            while (ls >> t) tok.push_back(t);
        }
        auto fail = [&](const std::string &why) {
            throw IoError(name, "line " + std::to_string(line) + ": " + why, at);
        };
        if (line == 1 || (cams.empty() && !count && tok[0] == "reflsurf_cameras")) {
            if (tok.size() != 2 || tok[0] != "reflsurf_cameras" || tok[1] != "1")
                fail("expected 'reflsurf_cameras 1'");
            continue;
        }
        if (tok[0] == "count") {
            std::size_t n = 0;
            if (tok.size() != 2 || std::from_chars(tok[1].data(), tok[1].data() + tok[1].size(), n).ec != std::errc())
                fail("bad count line");
            count = n;
            continue;
        }
        if (tok[0] != "camera") fail("unexpected record '" + tok[0] + "'");
        if (tok.size() != 20) fail("camera record needs 19 fields, found " + std::to_string(tok.size() - 1));
        auto num = [&](std::size_t k) {
            double v = 0.0;
            const auto r = std::from_chars(tok[k].data(), tok[k].data() + tok[k].size(), v);
            if (r.ec != std::errc() || r.ptr != tok[k].data() + tok[k].size() || !std::isfinite(v))
                fail("bad number '" + tok[k] + "'");
            return v;
        };
        auto integer = [&](std::size_t k) {
            long v = 0;
            const auto r = std::from_chars(tok[k].data(), tok[k].data() + tok[k].size(), v);
            if (r.ec != std::errc() || r.ptr != tok[k].data() + tok[k].size()) fail("bad integer '" + tok[k] + "'");
            return v;
        };
        const long index = integer(1);
        if (index != static_cast<long>(cams.size()))
            fail("camera index " + std::to_string(index) + " out of sequence");
        CameraModel c;
        c.width = static_cast<int>(integer(2));
        c.height = static_cast<int>(integer(3));
        c.fx = num(4);
        c.fy = num(5);
        c.cx = num(6);
        c.cy = num(7);
        for (int r = 0; r < 3; ++r) {
            for (int k = 0; k < 3; ++k) c.rotation(r, k) = num(8 + static_cast<std::size_t>(r * 4 + k));
            c.translation[r] = num(8 + static_cast<std::size_t>(r * 4 + 3));
        }
        try {
            c.validate(1e-3);
        } catch (const ContractError &e) {
            throw IoError(name, "camera " + std::to_string(index) + ": " + e.what(), at);
        }
        cams.push_back(c);
    }
    if (!count) throw IoError(name, "missing count line", 0);
    if (*count != cams.size())
        throw IoError(name, "count says " + std::to_string(*count) + " cameras, found " +
                                std::to_string(cams.size()),
                      text.size());
    return cams;
}

void saveCameras(const std::string &path, const std::vector<CameraModel> &cameras) {
    writeFileAtomic(path, encodeCameras(cameras));
}

std::vector<CameraModel> loadCameras(const std::string &path) {
    return decodeCameras(readFile(path), path);
}

// ---------------------------------------------------------------- images

Image loadPng(const std::string &path) {
    FILE *fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError(path, "cannot open for reading");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        std::fclose(fp);
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path, "libpng initialisation failed");
    }
    std::string error;
    Image img;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError(path, error.empty() ? "malformed PNG" : error);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int type = png_get_color_type(png, info);
    if (depth != 8) {
        error = "unsupported bit depth " + std::to_string(depth) + " (8-bit only)";
        png_error(png, "bit depth");
    }
    if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (type == PNG_COLOR_TYPE_GRAY || type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const std::size_t rowBytes = png_get_rowbytes(png, info);
    if (rowBytes != static_cast<std::size_t>(w) * 3) {
        error = "unexpected channel layout";
        png_error(png, "layout");
    }
    buffer.resize(rowBytes * static_cast<std::size_t>(h));
    rows.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowBytes * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    img = Image(w, h, 3);
    for (std::size_t i = 0; i < buffer.size(); ++i) img.data[i] = buffer[i] / 255.0;
    return img;
}

void savePng(const std::string &path, const Image &image) {
    if (image.channels != 1 && image.channels != 3)
        throw ContractError("savePng: 1 or 3 channels required");
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    FILE *fp = std::fopen(tmp.c_str(), "wb");
    if (!fp) throw IoError(tmp, "cannot open for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        std::fclose(fp);
        png_destroy_write_struct(&png, &info);
        throw IoError(path, "libpng initialisation failed");
    }
    const int w = image.width, h = image.height;
    std::vector<unsigned char> buffer(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
    for (std::size_t p = 0; p < image.pixelCount(); ++p)
        for (int c = 0; c < 3; ++c) {
            const double v = image.data[p * static_cast<std::size_t>(image.channels) +
                                        static_cast<std::size_t>(image.channels == 1 ? 0 : c)];
            buffer[p * 3 + static_cast<std::size_t>(c)] =
                static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(w) * 3;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError(path, "PNG encoding failed");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) throw IoError(path, "rename failed: " + ec.message());
}

Image loadPfm(const std::string &path) {
    const std::string bytes = readFile(path);
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return std::pair<std::string, std::size_t>(bytes.substr(start, pos - start), start);
    };
    const auto [magic, m0] = token();
    int channels = 0;
    if (magic == "PF") channels = 3;
    else if (magic == "Pf") channels = 1;
    else throw IoError(path, "not a PFM file", m0);
    const auto [ws, w0] = token();
    const auto [hs, h0] = token();
    const auto [ss, s0] = token();
    int w = 0, h = 0;
    double scale = 0.0;
    if (std::from_chars(ws.data(), ws.data() + ws.size(), w).ec != std::errc() || w <= 0)
        throw IoError(path, "bad width '" + ws + "'", w0);
    if (std::from_chars(hs.data(), hs.data() + hs.size(), h).ec != std::errc() || h <= 0)
        throw IoError(path, "bad height '" + hs + "'", h0);
    if (std::from_chars(ss.data(), ss.data() + ss.size(), scale).ec != std::errc() || scale == 0.0)
        throw IoError(path, "bad scale '" + ss + "'", s0);
    ++pos; // single whitespace byte before the raster
    const bool little = scale < 0.0;
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) *
                             static_cast<std::size_t>(channels) * 4;
    if (bytes.size() < pos + need)
        throw IoError(path, "truncated raster: need " + std::to_string(need) + " bytes, have " +
                                std::to_string(bytes.size() - std::min(bytes.size(), pos)),
                      bytes.size());
    Image img(w, h, channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                const std::size_t at =
                    pos + ((static_cast<std::size_t>(h - 1 - y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)) *
                               static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)) * 4;
                std::uint32_t bits;
                std::memcpy(&bits, bytes.data() + at, 4);
                if ((std::endian::native == std::endian::little) != little) bits = __builtin_bswap32(bits);
                float v;
                std::memcpy(&v, &bits, 4);
                img.at(x, y, c) = v;
            }
    return img;
}

void savePfm(const std::string &path, const Image &image) {
    if (image.channels != 1 && image.channels != 3)
        throw ContractError("savePfm: 1 or 3 channels required");
    std::string out = std::string(image.channels == 3 ? "PF" : "Pf") + "\n" +
                      std::to_string(image.width) + " " + std::to_string(image.height) + "\n-1.0\n";
    for (int y = image.height - 1; y >= 0; --y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c)
                put(out, static_cast<float>(image.at(x, y, c)));
    writeFileAtomic(path, out);
}

namespace {
std::string extension(const std::string &path) {
    std::string e = std::filesystem::path(path).extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}
} // namespace

Image loadImage(const std::string &path) {
    const std::string e = extension(path);
    if (e == ".png") return loadPng(path);
    if (e == ".pfm") return loadPfm(path);
    throw IoError(path, "unsupported image extension '" + e + "'");
}

void saveImage(const std::string &path, const Image &image) {
    const std::string e = extension(path);
    if (e == ".png") return savePng(path, image);
    if (e == ".pfm") return savePfm(path, image);
    throw IoError(path, "unsupported image extension '" + e + "'");
}

Image normalsToImage(const std::vector<Vec3> &normals, int width, int height, bool encodeUnit) {
    Image img(width, height, 3);
    for (std::size_t i = 0; i < normals.size(); ++i)
        img.setRgb(i, encodeUnit ? Vec3(0.5 * (normals[i] + Vec3::Ones())) : normals[i]);
    return img;
}

std::vector<Vec3> imageToNormals(const Image &image, bool encodedUnit) {
    std::vector<Vec3> n(image.pixelCount());
    for (std::size_t i = 0; i < n.size(); ++i) {
        const Vec3 v = image.rgb(i);
        n[i] = encodedUnit ? Vec3(2.0 * v - Vec3::Ones()) : v;
        if (encodedUnit && n[i].norm() > 0.5) n[i].normalize();
        else if (encodedUnit) n[i].setZero();
    }
    return n;
}

} // namespace reflsurf
