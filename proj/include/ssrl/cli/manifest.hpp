#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>

#include <json.hpp>

namespace ssrl::cli {

/// Hex SHA-1 of "blob <size>\0" followed by the bytes, as `git hash-object` prints it.
std::string git_blob_digest(std::span<const std::uint8_t> bytes);
std::string git_blob_digest_file(const std::filesystem::path& path);

/// SHA-1 over the sorted "<digest> <name>\n" lines of a set of artifacts.
std::string artifact_digest(const std::map<std::string, std::string>& file_digests);

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::string dataset_path;
  std::string dataset_digest;
  std::map<std::string, std::string> outputs;  ///< file name (relative to the run dir) -> blob digest
  std::string outputs_digest;
  double wall_seconds = 0.0;
  nlohmann::json extra;

  /// Hashes every named file under `dir` and fills outputs/outputs_digest.
  void record_outputs(const std::filesystem::path& dir, std::initializer_list<std::string> names);
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

struct VerifyResult {
  bool ok = true;
  std::map<std::string, std::string> mismatches;  ///< name -> reason
};

/// Recomputes the digests of the outputs named in the manifest, resolving
/// them against `dir`.
VerifyResult verify_manifest(const RunManifest& manifest, const std::filesystem::path& dir);

}  // namespace ssrl::cli
