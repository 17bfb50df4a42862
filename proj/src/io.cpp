#include "difform/io.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace difform {

const char* const kToolVersion = "difform 0.1.0";

namespace {

constexpr int kSchemaVersion = 1;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::invalid_argument(path + ": cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_bytes(const std::string& path, const void* data, size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::invalid_argument(path + ": cannot open for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out)
        throw std::runtime_error(path + ": write failed");
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos)
        return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// one "Key = value" per line; offset points at the start of the offending line
struct HeaderLine {
    std::string key, value;
    size_t offset = 0;
};

std::vector<HeaderLine> parse_header_lines(const std::string& text, const std::string& path) {
    std::vector<HeaderLine> lines;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        const size_t end = (eol == std::string::npos) ? text.size() : eol;
        const std::string raw = text.substr(pos, end - pos);
        const std::string line = trim(raw);
        if (!line.empty()) {
            const size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument(path + ": byte " + std::to_string(pos) +
                                            ": expected 'Key = value'");
            HeaderLine h;
            h.key = trim(line.substr(0, eq));
            h.value = trim(line.substr(eq + 1));
            h.offset = pos;
            if (h.key.empty())
                throw std::invalid_argument(path + ": byte " + std::to_string(pos) +
                                            ": empty key");
            lines.push_back(h);
        }
        pos = (eol == std::string::npos) ? text.size() : eol + 1;
    }
    return lines;
}

const HeaderLine* find_key(const std::vector<HeaderLine>& lines, const std::string& key) {
    for (const HeaderLine& h : lines)
        if (h.key == key)
            return &h;
    return nullptr;
}

const HeaderLine& require_key(const std::vector<HeaderLine>& lines, const std::string& key,
                              const std::string& path) {
    const HeaderLine* h = find_key(lines, key);
    if (!h)
        throw std::invalid_argument(path + ": byte 0: missing required key '" + key + "'");
    return *h;
}

std::vector<double> parse_numbers(const HeaderLine& h, int expect, const std::string& path) {
    std::istringstream ss(h.value);
    std::vector<double> out;
    double v;
    while (ss >> v)
        out.push_back(v);
    std::string rest;
    if (ss.clear(), ss >> rest)
        throw std::invalid_argument(path + ": byte " + std::to_string(h.offset) +
                                    ": non-numeric token in '" + h.key + "'");
    if (static_cast<int>(out.size()) != expect)
        throw std::invalid_argument(path + ": byte " + std::to_string(h.offset) + ": '" +
                                    h.key + "' needs " + std::to_string(expect) + " values");
    return out;
}

std::string raw_path_for(const std::string& mhd_path) {
    std::filesystem::path p(mhd_path);
    p.replace_extension(".raw");
    return p.string();
}

void write_mhd_header(const std::string& path, const GridMeta& m,
                      const std::string& element_type, int channels) {
    std::ostringstream h;
    h << "ObjectType = Image\n";
    h << "NDims = " << m.ndim << "\n";
    h << "DimSize =";
    for (int a = 0; a < m.ndim; ++a)
        h << " " << m.dims[a];
    h << "\nElementSpacing =";
    for (int a = 0; a < m.ndim; ++a)
        h << " " << fmt(m.spacing[a]);
    h << "\nOffset =";
    for (int a = 0; a < m.ndim; ++a)
        h << " " << fmt(m.origin[a]);
    h << "\nElementType = " << element_type << "\n";
    if (channels > 1)
        h << "ElementNumberOfChannels = " << channels << "\n";
    h << "ElementDataFile = "
      << std::filesystem::path(raw_path_for(path)).filename().string() << "\n";
    const std::string s = h.str();
    write_file_bytes(path, s.data(), s.size());
}

struct MhdInfo {
    GridMeta meta;
    std::string element_type;
    int channels = 1;
    std::string raw_path;
};

MhdInfo read_mhd_header(const std::string& path) {
    const std::string text = read_file_bytes(path);
    const std::vector<HeaderLine> lines = parse_header_lines(text, path);

    MhdInfo info;
    const HeaderLine& nd = require_key(lines, "NDims", path);
    const double ndv = parse_numbers(nd, 1, path)[0];
    if (ndv != 2.0 && ndv != 3.0)
        throw std::invalid_argument(path + ": byte " + std::to_string(nd.offset) +
                                    ": NDims must be 2 or 3");
    GridMeta m;
    m.ndim = static_cast<int>(ndv);
    m.dims = {1, 1, 1};
    m.spacing = {1.0, 1.0, 1.0};
    m.origin = {0.0, 0.0, 0.0};

    const HeaderLine& ds = require_key(lines, "DimSize", path);
    const std::vector<double> dims = parse_numbers(ds, m.ndim, path);
    for (int a = 0; a < m.ndim; ++a) {
        if (dims[static_cast<size_t>(a)] < 1 ||
            dims[static_cast<size_t>(a)] != std::floor(dims[static_cast<size_t>(a)]))
            throw std::invalid_argument(path + ": byte " + std::to_string(ds.offset) +
                                        ": DimSize entries must be positive integers");
        m.dims[a] = static_cast<int64_t>(dims[static_cast<size_t>(a)]);
    }
    if (const HeaderLine* sp = find_key(lines, "ElementSpacing")) {
        const std::vector<double> v = parse_numbers(*sp, m.ndim, path);
        for (int a = 0; a < m.ndim; ++a)
            m.spacing[a] = v[static_cast<size_t>(a)];
    }
    if (const HeaderLine* of = find_key(lines, "Offset")) {
        const std::vector<double> v = parse_numbers(*of, m.ndim, path);
        for (int a = 0; a < m.ndim; ++a)
            m.origin[a] = v[static_cast<size_t>(a)];
    }
    try {
        validate_meta(m);
    } catch (const std::exception& e) {
        throw std::invalid_argument(path + ": byte 0: " + e.what());
    }

    const HeaderLine& et = require_key(lines, "ElementType", path);
    info.element_type = et.value;
    if (const HeaderLine* ch = find_key(lines, "ElementNumberOfChannels")) {
        const double c = parse_numbers(*ch, 1, path)[0];
        if (c < 1 || c != std::floor(c))
            throw std::invalid_argument(path + ": byte " + std::to_string(ch->offset) +
                                        ": ElementNumberOfChannels must be a positive integer");
        info.channels = static_cast<int>(c);
    }

    const HeaderLine& df = require_key(lines, "ElementDataFile", path);
    if (df.value.empty() || df.value == "LOCAL")
        throw std::invalid_argument(path + ": byte " + std::to_string(df.offset) +
                                    ": embedded payloads are not supported");
    std::filesystem::path rp(df.value);
    if (rp.is_relative())
        rp = std::filesystem::path(path).parent_path() / rp;
    info.raw_path = rp.string();
    info.meta = m;
    return info;
}

std::string read_raw_exact(const std::string& path, size_t expect_bytes) {
    const std::string bytes = read_file_bytes(path);
    if (bytes.size() != expect_bytes)
        throw std::invalid_argument(path + ": byte " + std::to_string(bytes.size()) +
                                    ": payload is " + std::to_string(bytes.size()) +
                                    " bytes, expected " + std::to_string(expect_bytes));
    return bytes;
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::json manifest_entries(const std::vector<ManifestEntry>& es) {
    nlohmann::json arr = nlohmann::json::array();
    for (const ManifestEntry& e : es)
        arr.push_back({{"path", e.path}, {"sha256", e.sha256}});
    return arr;
}

}  // namespace

void write_image_mhd(const ScalarImage& img, const std::string& path) {
    validate_meta(img.meta);
    write_mhd_header(path, img.meta, "MET_FLOAT", 1);
    std::vector<float> buf(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i)
        buf[i] = static_cast<float>(img.data[i]);
    write_file_bytes(raw_path_for(path), buf.data(), buf.size() * sizeof(float));
}

ScalarImage read_image_mhd(const std::string& path) {
    const MhdInfo info = read_mhd_header(path);
    if (info.element_type != "MET_FLOAT")
        throw std::invalid_argument(path + ": byte 0: expected ElementType MET_FLOAT, got " +
                                    info.element_type);
    if (info.channels != 1)
        throw std::invalid_argument(path + ": byte 0: scalar image cannot have " +
                                    std::to_string(info.channels) + " channels");
    const size_t n = static_cast<size_t>(info.meta.voxel_count());
    const std::string bytes = read_raw_exact(info.raw_path, n * sizeof(float));
    ScalarImage img = make_image(info.meta);
    const float* src = reinterpret_cast<const float*>(bytes.data());
    for (size_t i = 0; i < n; ++i)
        img.data[i] = static_cast<double>(src[i]);
    return img;
}

void write_labels_mhd(const LabelImage& labels, const std::string& path) {
    validate_meta(labels.meta);
    std::vector<int16_t> buf(labels.data.size());
    for (size_t i = 0; i < labels.data.size(); ++i) {
        const int32_t v = labels.data[i];
        if (v < std::numeric_limits<int16_t>::min() || v > std::numeric_limits<int16_t>::max())
            throw std::invalid_argument(path + ": label value " + std::to_string(v) +
                                        " does not fit MET_SHORT");
        buf[i] = static_cast<int16_t>(v);
    }
    write_mhd_header(path, labels.meta, "MET_SHORT", 1);
    write_file_bytes(raw_path_for(path), buf.data(), buf.size() * sizeof(int16_t));
}

LabelImage read_labels_mhd(const std::string& path) {
    const MhdInfo info = read_mhd_header(path);
    if (info.element_type != "MET_SHORT")
        throw std::invalid_argument(path + ": byte 0: expected ElementType MET_SHORT, got " +
                                    info.element_type);
    if (info.channels != 1)
        throw std::invalid_argument(path + ": byte 0: label image cannot have " +
                                    std::to_string(info.channels) + " channels");
    const size_t n = static_cast<size_t>(info.meta.voxel_count());
    const std::string bytes = read_raw_exact(info.raw_path, n * sizeof(int16_t));
    LabelImage labels = make_labels(info.meta);
    const int16_t* src = reinterpret_cast<const int16_t*>(bytes.data());
    for (size_t i = 0; i < n; ++i)
        labels.data[i] = static_cast<int32_t>(src[i]);
    return labels;
}

void write_field_mhd(const VectorField& f, const std::string& path) {
    validate_meta(f.meta);
    write_mhd_header(path, f.meta, "MET_FLOAT", f.meta.ndim);
    std::vector<float> buf(f.data.size());
    for (size_t i = 0; i < f.data.size(); ++i)
        buf[i] = static_cast<float>(f.data[i]);
    write_file_bytes(raw_path_for(path), buf.data(), buf.size() * sizeof(float));
}

VectorField read_field_mhd(const std::string& path) {
    const MhdInfo info = read_mhd_header(path);
    if (info.element_type != "MET_FLOAT")
        throw std::invalid_argument(path + ": byte 0: expected ElementType MET_FLOAT, got " +
                                    info.element_type);
    if (info.channels != info.meta.ndim)
        throw std::invalid_argument(path + ": byte 0: field needs " +
                                    std::to_string(info.meta.ndim) + " channels, got " +
                                    std::to_string(info.channels));
    const size_t n = static_cast<size_t>(info.meta.voxel_count()) *
                     static_cast<size_t>(info.meta.ndim);
    const std::string bytes = read_raw_exact(info.raw_path, n * sizeof(float));
    VectorField f = make_field(info.meta);
    const float* src = reinterpret_cast<const float*>(bytes.data());
    for (size_t i = 0; i < n; ++i)
        f.data[i] = static_cast<double>(src[i]);
    return f;
}

void write_landmarks_csv(const LandmarkSet& pts, const std::string& path) {
    std::ostringstream out;
    out << "id,x_mm,y_mm,z_mm\n";
    for (const Landmark& p : pts) {
        if (p.id.find_first_of(",\r\n") != std::string::npos)
            throw std::invalid_argument(path + ": landmark id '" + p.id +
                                        "' contains a delimiter");
        out << p.id << "," << fmt(p.point_mm[0]) << "," << fmt(p.point_mm[1]) << ","
            << fmt(p.point_mm[2]) << "\n";
    }
    const std::string s = out.str();
    write_file_bytes(path, s.data(), s.size());
}

LandmarkSet read_landmarks_csv(const std::string& path) {
    const std::string text = read_file_bytes(path);
    LandmarkSet pts;
    size_t pos = 0;
    bool first = true;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        const size_t end = (eol == std::string::npos) ? text.size() : eol;
        const std::string line = trim(text.substr(pos, end - pos));
        const size_t line_off = pos;
        pos = (eol == std::string::npos) ? text.size() : eol + 1;
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        size_t c = 0;
        while (true) {
            const size_t comma = line.find(',', c);
            cells.push_back(trim(line.substr(c, comma == std::string::npos
                                                    ? std::string::npos : comma - c)));
            if (comma == std::string::npos)
                break;
            c = comma + 1;
        }
        if (first && cells.size() == 4 && cells[0] == "id") {
            first = false;
            continue;
        }
        first = false;
        if (cells.size() != 4)
            throw std::invalid_argument(path + ": byte " + std::to_string(line_off) +
                                        ": expected 4 comma-separated fields");
        Landmark p;
        p.id = cells[0];
        for (int a = 0; a < 3; ++a) {
            char* endp = nullptr;
            const std::string& cell = cells[static_cast<size_t>(a) + 1];
            p.point_mm[a] = std::strtod(cell.c_str(), &endp);
            if (cell.empty() || endp == cell.c_str() || *endp != '\0')
                throw std::invalid_argument(path + ": byte " + std::to_string(line_off) +
                                            ": non-numeric coordinate '" + cell + "'");
        }
        pts.push_back(std::move(p));
    }
    return pts;
}

void write_pgm(const std::vector<double>& values, int64_t width, int64_t height,
               const std::string& path) {
    if (width < 1 || height < 1 ||
        static_cast<int64_t>(values.size()) != width * height)
        throw std::invalid_argument(path + ": pgm size mismatch");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : values)
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!std::isfinite(lo)) {
        lo = 0.0;
        hi = 0.0;
    }
    const double span = hi - lo;
    std::ostringstream out;
    out << "P5\n" << width << " " << height << "\n255\n";
    std::string s = out.str();
    s.reserve(s.size() + values.size());
    for (double v : values) {
        int b = 0;
        if (std::isfinite(v) && span > 0.0)
            b = static_cast<int>(std::lround(255.0 * (v - lo) / span));
        s.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(b, 0, 255))));
    }
    write_file_bytes(path, s.data(), s.size());
}

void write_pgm_with_range_json(const std::vector<double>& values, int64_t width,
                               int64_t height, const std::string& path) {
    write_pgm(values, width, height, path);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : values)
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!std::isfinite(lo)) {
        lo = 0.0;
        hi = 0.0;
    }
    nlohmann::json j{{"schema_version", kSchemaVersion},
                     {"width", width},
                     {"height", height},
                     {"min", lo},
                     {"max", hi}};
    const std::string s = j.dump(2) + "\n";
    write_file_bytes(path + ".json", s.data(), s.size());
}

std::string sha256_bytes(const void* data, size_t n) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int md_len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data, n) != 1 || EVP_DigestFinal_ex(ctx, md, &md_len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256: digest failure");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * md_len);
    for (unsigned int i = 0; i < md_len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::string sha256_file(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    return sha256_bytes(bytes.data(), bytes.size());
}

nlohmann::json config_to_json(const RegistrationConfig& c, const PyramidSchedule& s) {
    return nlohmann::json{
        {"schema_version", kSchemaVersion},
        {"loss", c.loss == LossKind::ssd ? "ssd" : c.loss == LossKind::lncc ? "lncc" : "dice"},
        {"lncc_radius", c.lncc_radius},
        {"eta", c.eta},
        {"sigma_grad", c.sigma_grad},
        {"sigma_warp", c.sigma_warp},
        {"use_jacobian", c.use_jac},
        {"mode", c.mode == RegMode::direct ? "direct" : "svf"},
        {"svf_steps", c.svf_M},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"eps", c.eps_adam},
        {"step_cap", c.step_cap},
        {"conv_window", c.conv_window},
        {"conv_tol", c.conv_tol},
        {"seed", c.seed},
        {"scales", s.scales},
        {"iterations", s.iterations}};
}

void config_from_json(const nlohmann::json& j, RegistrationConfig& c, PyramidSchedule& s) {
    if (!j.is_object())
        throw std::invalid_argument("config: expected a JSON object");
    const RegistrationConfig def;
    const PyramidSchedule defs = PyramidSchedule::defaults();
    const std::string loss = j.value("loss", "ssd");
    if (loss == "ssd")
        c.loss = LossKind::ssd;
    else if (loss == "lncc")
        c.loss = LossKind::lncc;
    else if (loss == "dice")
        c.loss = LossKind::dice;
    else
        throw std::invalid_argument("config: unknown loss '" + loss + "'");
    const std::string mode = j.value("mode", "direct");
    if (mode == "direct")
        c.mode = RegMode::direct;
    else if (mode == "svf")
        c.mode = RegMode::svf;
    else
        throw std::invalid_argument("config: unknown mode '" + mode + "'");
    c.lncc_radius = j.value("lncc_radius", def.lncc_radius);
    c.eta = j.value("eta", def.eta);
    c.sigma_grad = j.value("sigma_grad", def.sigma_grad);
    c.sigma_warp = j.value("sigma_warp", def.sigma_warp);
    c.use_jac = j.value("use_jacobian", def.use_jac);
    c.svf_M = j.value("svf_steps", def.svf_M);
    c.beta1 = j.value("beta1", def.beta1);
    c.beta2 = j.value("beta2", def.beta2);
    c.eps_adam = j.value("eps", def.eps_adam);
    c.step_cap = j.value("step_cap", def.step_cap);
    c.conv_window = j.value("conv_window", def.conv_window);
    c.conv_tol = j.value("conv_tol", def.conv_tol);
    c.seed = j.value("seed", def.seed);
    s.scales = j.value("scales", defs.scales);
    s.iterations = j.value("iterations", defs.iterations);
    validate_config(c);
    validate_schedule(s);
}

RegistrationConfig load_config(const std::string& path, PyramidSchedule& sched) {
    const std::string text = read_file_bytes(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(path + ": byte " + std::to_string(e.byte) + ": " +
                                    e.what());
    }
    RegistrationConfig c;
    try {
        config_from_json(j, c, sched);
    } catch (const std::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    return c;
}

nlohmann::json affine_to_json(const AffineTransform& T, const GridMeta& fit_meta) {
    const int d = T.ndim;
    std::vector<double> A(static_cast<size_t>(d * d));
    for (int i = 0; i < d * d; ++i)
        A[static_cast<size_t>(i)] = T.A[static_cast<size_t>(i)];
    std::vector<double> t(static_cast<size_t>(d));
    std::vector<int64_t> dims(static_cast<size_t>(d));
    std::vector<double> spacing(static_cast<size_t>(d)), origin(static_cast<size_t>(d));
    for (int a = 0; a < d; ++a) {
        t[static_cast<size_t>(a)] = T.t[static_cast<size_t>(a)];
        dims[static_cast<size_t>(a)] = fit_meta.dims[a];
        spacing[static_cast<size_t>(a)] = fit_meta.spacing[a];
        origin[static_cast<size_t>(a)] = fit_meta.origin[a];
    }
    return nlohmann::json{{"schema_version", kSchemaVersion},
                          {"ndim", d},
                          {"A", A},
                          {"t", t},
                          {"fit_dims", dims},
                          {"fit_spacing", spacing},
                          {"fit_origin", origin}};
}

AffineTransform affine_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("ndim") || !j.contains("A") || !j.contains("t"))
        throw std::invalid_argument("affine: need ndim, A, t");
    const int d = j.at("ndim").get<int>();
    if (d != 2 && d != 3)
        throw std::invalid_argument("affine: ndim must be 2 or 3");
    const std::vector<double> A = j.at("A").get<std::vector<double>>();
    const std::vector<double> t = j.at("t").get<std::vector<double>>();
    if (static_cast<int>(A.size()) != d * d || static_cast<int>(t.size()) != d)
        throw std::invalid_argument("affine: A must have ndim^2 entries and t ndim entries");
    AffineTransform T = identity_affine(d);
    for (int i = 0; i < d * d; ++i)
        T.A[static_cast<size_t>(i)] = A[static_cast<size_t>(i)];
    for (int a = 0; a < d; ++a)
        T.t[static_cast<size_t>(a)] = t[static_cast<size_t>(a)];
    return T;
}

void write_affine_json(const AffineTransform& T, const GridMeta& fit_meta,
                       const std::string& path) {
    const std::string s = affine_to_json(T, fit_meta).dump(2) + "\n";
    write_file_bytes(path, s.data(), s.size());
}

AffineTransform read_affine_json(const std::string& path) {
    const std::string text = read_file_bytes(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(path + ": byte " + std::to_string(e.byte) + ": " +
                                    e.what());
    }
    try {
        return affine_from_json(j);
    } catch (const std::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

nlohmann::json overlap_to_json(const OverlapReport& r) {
    nlohmann::json regions = nlohmann::json::array();
    for (const RegionOverlap& ro : r.regions) {
        nlohmann::json jr{{"label", ro.label},
                          {"fixed_count", ro.fixed_count},
                          {"warped_count", ro.warped_count},
                          {"intersection", ro.intersection},
                          {"mo", ro.mo},
                          {"vs", ro.vs}};
        if (ro.has_to) {
            jr["to"] = ro.to;
            jr["fn"] = ro.fn;
        }
        if (ro.has_fp)
            jr["fp"] = ro.fp;
        regions.push_back(jr);
    }
    return nlohmann::json{
        {"schema_version", kSchemaVersion},
        {"regions", regions},
        {"mean", {{"to", r.to_mean}, {"mo", r.mo_mean}, {"fn", r.fn_mean},
                  {"fp", r.fp_mean}, {"vs", r.vs_mean}}},
        {"klein", {{"to", r.to_klein}, {"mo", r.mo_klein}, {"fn", r.fn_klein},
                   {"fp", r.fp_klein}, {"vs", r.vs_klein}}}};
}

nlohmann::json landmark_errors_to_json(const LandmarkErrors& e) {
    return nlohmann::json{{"schema_version", kSchemaVersion},
                          {"distances_mm", e.distances_mm},
                          {"mean_mm", e.mean},
                          {"max_mm", e.max}};
}

nlohmann::json conditioning_to_json(const ConditioningReport& r) {
    nlohmann::json levels = nlohmann::json::array();
    for (const ConditioningLevel& lv : r.levels)
        levels.push_back({{"factor", lv.factor},
                          {"foreground_count", lv.foreground_count},
                          {"excluded", lv.excluded},
                          {"fraction_above_10", lv.fraction_above_10},
                          {"hist_edges", lv.hist_edges},
                          {"hist_counts", lv.hist_counts}});
    return nlohmann::json{{"schema_version", kSchemaVersion}, {"levels", levels}};
}

void write_runlog_csv(const RunLog& log, const std::string& path) {
    std::ostringstream out;
    out << "scale_index,scale,iter,global_iter,loss,max_step,wall_ms\n";
    for (const IterationRecord& r : log.iterations)
        out << r.scale_index << "," << fmt(r.scale) << "," << r.iter << "," << r.global_iter
            << "," << fmt(r.loss) << "," << fmt(r.max_step) << "," << fmt(r.wall_ms) << "\n";
    const std::string s = out.str();
    write_file_bytes(path, s.data(), s.size());
}

void write_manifest(const RunManifest& m, const std::string& path) {
    RunManifest filled = m;
    if (filled.tool_version.empty())
        filled.tool_version = kToolVersion;
    if (filled.finished_utc.empty())
        filled.finished_utc = utc_now();
    if (filled.started_utc.empty())
        filled.started_utc = filled.finished_utc;
    nlohmann::json j{{"schema_version", kSchemaVersion},
                     {"tool_version", filled.tool_version},
                     {"command", filled.command},
                     {"seed", filled.seed},
                     {"config_sha256", filled.config_hash},
                     {"inputs", manifest_entries(filled.inputs)},
                     {"outputs", manifest_entries(filled.outputs)},
                     {"started_utc", filled.started_utc},
                     {"finished_utc", filled.finished_utc}};
    const std::string s = j.dump(2) + "\n";
    write_file_bytes(path, s.data(), s.size());
}

}  // namespace difform
