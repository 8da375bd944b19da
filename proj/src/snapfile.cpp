#include "sparsebif/snapfile.hpp"

#include <array>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>

namespace sparsebif {

using nlohmann::json;

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

void append_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t read_u32(const std::string& buf, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
    return v;
}

std::uint64_t read_u64(const std::string& buf, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
    return v;
}

std::string row_major_bytes(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    std::string bytes;
    bytes.resize(static_cast<std::size_t>(m.size()) * sizeof(double));
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor rm = m;
    std::memcpy(bytes.data(), rm.data(), bytes.size());
    return bytes;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t crc) {
    static const auto table = make_crc_table();
    const auto* p = static_cast<const unsigned char*>(data);
    crc ^= 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

std::string base64_encode(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        std::uint32_t v = static_cast<std::uint32_t>(p[i]) << 16;
        if (i + 1 < len) v |= static_cast<std::uint32_t>(p[i + 1]) << 8;
        if (i + 2 < len) v |= p[i + 2];
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(i + 1 < len ? kB64Alphabet[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < len ? kB64Alphabet[v & 63] : '=');
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    std::array<int, 256> rev;
    rev.fill(-1);
    for (int i = 0; i < 64; ++i) rev[static_cast<unsigned char>(kB64Alphabet[i])] = i;
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '=') break;
        const int v = rev[static_cast<unsigned char>(c)];
        if (v < 0) throw FormatError("base64: invalid character", i);
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

std::string matrix_to_base64(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    const std::string bytes = row_major_bytes(m);
    return base64_encode(bytes.data(), bytes.size());
}

Eigen::MatrixXd base64_to_matrix(const std::string& text, Eigen::Index rows,
                                 Eigen::Index cols) {
    const std::vector<std::uint8_t> bytes = base64_decode(text);
    const std::size_t expected = static_cast<std::size_t>(rows) *
                                 static_cast<std::size_t>(cols) * sizeof(double);
    if (bytes.size() != expected)
        throw FormatError("base64 matrix: payload size mismatch", bytes.size());
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor rm(rows, cols);
    std::memcpy(rm.data(), bytes.data(), expected);
    return rm;
}

std::uint32_t snapshot_crc(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    const std::string bytes = row_major_bytes(m);
    return crc32(bytes.data(), bytes.size());
}

void write_snapfile(const std::filesystem::path& path,
                    const Eigen::Ref<const Eigen::MatrixXd>& m) {
    std::string out = "SBIF";
    append_u32(out, 1);
    append_u64(out, static_cast<std::uint64_t>(m.rows()));
    append_u64(out, static_cast<std::uint64_t>(m.cols()));
    const std::string payload = row_major_bytes(m);
    out += payload;
    append_u32(out, crc32(payload.data(), payload.size()));
    write_file(path, out);
}

Eigen::MatrixXd read_snapfile(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 28) throw FormatError("SNAP: truncated header in " + path.string(),
                                           buf.size());
    if (buf.compare(0, 4, "SBIF") != 0)
        throw FormatError("SNAP: bad magic in " + path.string(), 0);
    const std::uint32_t version = read_u32(buf, 4);
    if (version != 1)
        throw VersionError("SNAP: unsupported version " + std::to_string(version));
    const std::uint64_t rows = read_u64(buf, 8);
    const std::uint64_t cols = read_u64(buf, 16);
    const std::size_t payload_len = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (buf.size() != 24 + payload_len + 4)
        throw FormatError("SNAP: truncated payload in " + path.string(), buf.size());
    const std::uint32_t stored = read_u32(buf, 24 + payload_len);
    const std::uint32_t actual = crc32(buf.data() + 24, payload_len);
    if (stored != actual)
        throw FormatError("SNAP: CRC mismatch in " + path.string(), 24 + payload_len);
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor rm(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::memcpy(rm.data(), buf.data() + 24, payload_len);
    return rm;
}

std::string dataset_hash(const SnapshotSet& set) {
    std::uint32_t crc = 0;
    for (const auto& t : set.trajectories) {
        const std::uint32_t c = snapshot_crc(t);
        crc = crc32(&c, sizeof(c), crc);
    }
    for (double p : set.params) crc = crc32(&p, sizeof(p), crc);
    crc = crc32(&set.grid.t0, sizeof(double), crc);
    crc = crc32(&set.grid.dt, sizeof(double), crc);
    const std::uint64_t n = static_cast<std::uint64_t>(set.grid.count);
    crc = crc32(&n, sizeof(n), crc);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08x", crc);
    return buf;
}

void write_dataset(const std::filesystem::path& dir, const SnapshotSet& set, bool force) {
    set.validate();
    namespace fs = std::filesystem;
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw IoError(dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir) && !force)
            throw IoError(dir.string() + " is not empty (use --force to overwrite)");
    } else {
        fs::create_directories(dir);
    }

    json manifest;
    manifest["version"] = "sparsebif-dataset-v1";
    manifest["system"] = {{"kind", set.meta.system_kind},
                          {"mu_star", set.meta.mu_star},
                          {"omega", set.meta.omega},
                          {"transverse_dims", set.meta.transverse_dims},
                          {"transverse_rate", set.meta.transverse_rate},
                          {"nonlinear_gain", set.meta.nonlinear_gain}};
    manifest["seed"] = set.meta.seed;
    manifest["stop_tol"] = set.meta.stop_tol;
    manifest["stop_index"] = set.meta.stop_index;
    manifest["params"] = set.params;
    manifest["grid"] = {{"t0", set.grid.t0}, {"dt", set.grid.dt}, {"count", set.grid.count}};
    json layout = json::array();
    for (const auto& f : set.field_layout)
        layout.push_back({{"name", f.name}, {"offset", f.offset}, {"size", f.size}});
    manifest["layout"] = layout;
    const auto now = std::chrono::system_clock::now();
    manifest["created"] = std::chrono::duration_cast<std::chrono::seconds>(
                              now.time_since_epoch())
                              .count();

    json files = json::array();
    for (std::size_t m = 0; m < set.trajectories.size(); ++m) {
        char name[32];
        std::snprintf(name, sizeof(name), "snap_%03zu.snap", m);
        write_snapfile(dir / name, set.trajectories[m]);
        files.push_back(name);
    }
    manifest["files"] = files;
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

SnapshotSet read_dataset(const std::filesystem::path& dir) {
    const std::filesystem::path mpath = dir / "manifest.json";
    json manifest;
    try {
        manifest = json::parse(read_file(mpath));
    } catch (const json::parse_error& e) {
        throw FormatError("manifest: " + std::string(e.what()), e.byte);
    }
    if (manifest.value("version", "") != "sparsebif-dataset-v1")
        throw VersionError("manifest: unsupported version");

    SnapshotSet set;
    set.params = manifest.at("params").get<std::vector<double>>();
    const auto& g = manifest.at("grid");
    set.grid = TimeGrid(g.at("t0").get<double>(), g.at("dt").get<double>(),
                        g.at("count").get<Eigen::Index>());
    for (const auto& f : manifest.at("layout"))
        set.field_layout.push_back({f.at("name").get<std::string>(),
                                    f.at("offset").get<Eigen::Index>(),
                                    f.at("size").get<Eigen::Index>()});
    const auto& sys = manifest.at("system");
    set.meta.system_kind = sys.at("kind").get<std::string>();
    set.meta.mu_star = sys.at("mu_star").get<double>();
    set.meta.omega = sys.at("omega").get<double>();
    set.meta.transverse_dims = sys.at("transverse_dims").get<int>();
    set.meta.transverse_rate = sys.at("transverse_rate").get<double>();
    set.meta.nonlinear_gain = sys.at("nonlinear_gain").get<double>();
    set.meta.seed = manifest.at("seed").get<std::uint64_t>();
    set.meta.stop_tol = manifest.at("stop_tol").get<double>();
    set.meta.stop_index = manifest.at("stop_index").get<std::vector<Eigen::Index>>();

    for (const auto& name : manifest.at("files"))
        set.trajectories.push_back(read_snapfile(dir / name.get<std::string>()));
    set.validate();
    return set;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<Eigen::VectorXd>& columns) {
    if (header.size() != columns.size()) throw InvalidInput("write_csv: header/column mismatch");
    Eigen::Index rows = columns.empty() ? 0 : columns[0].size();
    for (const auto& c : columns)
        if (c.size() != rows) throw InvalidInput("write_csv: ragged columns");
    std::string out;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j) out += ",";
        out += header[j];
    }
    out += "\n";
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < columns.size(); ++j) {
            if (j) out += ",";
            out += format_g17(columns[j][i]);
        }
        out += "\n";
    }
    write_file(path, out);
}

void write_json_columns(const std::filesystem::path& path,
                        const std::vector<std::string>& header,
                        const std::vector<Eigen::VectorXd>& columns) {
    if (header.size() != columns.size())
        throw InvalidInput("write_json_columns: header/column mismatch");
    json doc;
    for (std::size_t j = 0; j < header.size(); ++j) {
        json arr = json::array();
        for (Eigen::Index i = 0; i < columns[j].size(); ++i) arr.push_back(columns[j][i]);
        doc[header[j]] = arr;
    }
    write_file(path, doc.dump(2) + "\n");
}

}  // namespace sparsebif
