#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sparsebif/datagen.hpp"

namespace sparsebif {

/// CRC-32 (IEEE reflected polynomial), seedable for incremental use.
std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t crc = 0);

std::string base64_encode(const void* data, std::size_t len);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// Dense f64 matrix as a base64 little-endian row-major block.
std::string matrix_to_base64(const Eigen::Ref<const Eigen::MatrixXd>& m);
Eigen::MatrixXd base64_to_matrix(const std::string& text, Eigen::Index rows, Eigen::Index cols);

/// SNAP binary layout: magic "SBIF", u32 version = 1, u64 rows, u64 cols,
/// rows*cols f64 payload (row-major, little-endian), u32 CRC-32 of the payload.
void write_snapfile(const std::filesystem::path& path,
                    const Eigen::Ref<const Eigen::MatrixXd>& m);
Eigen::MatrixXd read_snapfile(const std::filesystem::path& path);

/// Payload CRC of a matrix as it would be written to a SNAP file.
std::uint32_t snapshot_crc(const Eigen::Ref<const Eigen::MatrixXd>& m);

/// Deterministic content hash of a whole dataset (hex string).
std::string dataset_hash(const SnapshotSet& set);

/// Dataset directory: manifest.json plus one SNAP file per parameter.
/// Refuses to write into a non-empty directory unless force is set. The
/// manifest's "created" field is the only non-deterministic output byte.
void write_dataset(const std::filesystem::path& dir, const SnapshotSet& set, bool force = false);
SnapshotSet read_dataset(const std::filesystem::path& dir);

/// CSV with a header row; every value uses round-trip "%.17g" formatting.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<Eigen::VectorXd>& columns);

/// JSON array-of-columns export of the same payload.
void write_json_columns(const std::filesystem::path& path,
                        const std::vector<std::string>& header,
                        const std::vector<Eigen::VectorXd>& columns);

}  // namespace sparsebif
