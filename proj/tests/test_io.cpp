#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sparsebif/runconfig.hpp"
#include "sparsebif/snapfile.hpp"

using namespace sparsebif;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("sparsebif_test_" + std::to_string(std::rand()) +
                std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

SnapshotSet small_set() {
    Rng rng(77);
    FomSystem sys;
    sys.kind = SystemKind::PitchforkNormalForm;
    LiftMap map = make_lift_map(12, sys.dim(), 0.1, rng);
    TimeGrid grid(0.0, 0.1, 51);
    return generate_dataset(sys, {0.8, 0.9, 1.1}, grid, map, rng, 1e-7);
}

}  // namespace

TEST_CASE("crc32: known vector") {
    // Standard IEEE test vector.
    CHECK(crc32("123456789", 9) == 0xCBF43926u);
    CHECK(crc32("", 0) == 0u);
}

TEST_CASE("base64: byte-exact round trip") {
    Rng rng(8);
    Eigen::MatrixXd m = rng.normal_matrix(7, 5);
    Eigen::MatrixXd back = base64_to_matrix(matrix_to_base64(m), 7, 5);
    CHECK(back == m);  // bitwise
    CHECK_THROWS_AS(base64_to_matrix("AAAA", 7, 5), FormatError);
    CHECK_THROWS_AS(base64_decode("not*valid"), FormatError);
}

TEST_CASE("snapfile: round trip, truncation, bad magic, bad CRC") {
    TempDir tmp;
    Rng rng(9);
    Eigen::MatrixXd m = rng.normal_matrix(13, 4);
    const fs::path file = tmp.path / "m.snap";
    write_snapfile(file, m);
    CHECK(read_snapfile(file) == m);

    // Truncated payload.
    {
        std::ifstream in(file, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        std::ofstream out(tmp.path / "trunc.snap", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
    }
    CHECK_THROWS_AS(read_snapfile(tmp.path / "trunc.snap"), FormatError);

    // Wrong magic.
    {
        std::ifstream in(file, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        bytes[0] = 'X';
        std::ofstream out(tmp.path / "magic.snap", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(read_snapfile(tmp.path / "magic.snap"), FormatError);

    // Flipped payload byte fails the CRC.
    {
        std::ifstream in(file, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        bytes[30] = static_cast<char>(bytes[30] ^ 0x40);
        std::ofstream out(tmp.path / "crc.snap", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    try {
        read_snapfile(tmp.path / "crc.snap");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.byte_offset > 0);
    }
}

TEST_CASE("dataset directory: round trip and refusal to clobber") {
    TempDir tmp;
    SnapshotSet set = small_set();
    const fs::path dir = tmp.path / "data";
    write_dataset(dir, set);
    CHECK_THROWS_AS(write_dataset(dir, set, false), IoError);
    write_dataset(dir, set, true);  // force

    SnapshotSet back = read_dataset(dir);
    CHECK(back.params == set.params);
    CHECK(back.grid.count == set.grid.count);
    CHECK(back.meta.stop_index == set.meta.stop_index);
    CHECK(back.meta.system_kind == "pitchfork");
    for (std::size_t m = 0; m < set.trajectories.size(); ++m)
        CHECK(back.trajectories[m] == set.trajectories[m]);  // bitwise

    CHECK(dataset_hash(back) == dataset_hash(set));
}

TEST_CASE("dataset writes are deterministic modulo the created field") {
    TempDir tmp;
    SnapshotSet set = small_set();
    write_dataset(tmp.path / "a", set);
    write_dataset(tmp.path / "b", set);
    for (const char* name : {"snap_000.snap", "snap_001.snap", "snap_002.snap"}) {
        std::ifstream fa(tmp.path / "a" / name, std::ios::binary);
        std::ifstream fb(tmp.path / "b" / name, std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
        CHECK(sa == sb);
    }
}

TEST_CASE("write_csv: %.17g survives a f64 round trip") {
    TempDir tmp;
    Eigen::VectorXd vals(4);
    vals << 1.0 / 3.0, 1e-300, -2.718281828459045, 12345.678901234567;
    const fs::path file = tmp.path / "vals.csv";
    write_csv(file, {"x"}, {vals});

    std::ifstream in(file);
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "x");
    for (Eigen::Index i = 0; i < vals.size(); ++i) {
        std::getline(in, line);
        CHECK(std::stod(line) == vals[i]);  // exact
    }
}

TEST_CASE("RunConfig: grammar, types, unknown keys") {
    const std::string text = R"(
# a comment
system.kind = pitchfork
system.mu_star = 0.96          # trailing comment
system.params = [0.8, 0.9, 1.0]
grid.dt = 1e-2
ae.encoder_hidden = [8, 4]
analysis.field = "u2"
sindy.aggregation = median
ae.shuffle = true
)";
    RunConfig cfg = RunConfig::parse_string(text);
    CHECK(cfg.get_string("system.kind") == "pitchfork");
    CHECK(cfg.get_number("system.mu_star") == 0.96);
    CHECK(cfg.get_array("system.params") == std::vector<double>{0.8, 0.9, 1.0});
    CHECK(cfg.get_number("grid.dt") == 0.01);
    CHECK(cfg.get_string("analysis.field") == "u2");
    CHECK(cfg.get_bool("ae.shuffle", false));
    CHECK(cfg.get_int("grid.count", 100) == 100);  // fallback

    CHECK_THROWS_AS(RunConfig::parse_string("grid.dtt = 0.1"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse_string("nodot = 1"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse_string("grid.dt 0.1"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse_string("grid.dt = [1, oops]"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse_string("grid.dt = 1\ngrid.dt = 2"), ConfigError);
    CHECK_THROWS_AS(cfg.get_string("system.mu_star"), ConfigError);  // wrong type
    CHECK_THROWS_AS(cfg.require({"grid.count", "grid.t0"}), ConfigError);
}
