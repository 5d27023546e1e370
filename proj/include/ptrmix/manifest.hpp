#pragma once

// Run manifests: every CLI command that writes artifacts records its resolved
// configuration, the digests of its inputs and outputs, the seed, and the
// tool version, so a run directory is self-describing and reruns can be
// checked for reproducibility.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace ptrmix {

inline constexpr const char* kToolVersion = "0.1.0";

struct ArtifactRecord {
  std::string role;  // e.g. "corpus", "vocabulary", "checkpoint"
  std::string path;
  std::uint64_t bytes = 0;
  std::string fnv1a64;  // 16 hex digits
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string command;
  std::string created_utc;  // ISO 8601, filled by write_manifest if empty
  std::uint64_t seed = 0;
  nlohmann::json config;  // every flag the command resolved, defaults included
  std::vector<ArtifactRecord> inputs;
  std::vector<ArtifactRecord> outputs;
};

// FNV-1a over the file's bytes; throws IoError when unreadable.
std::uint64_t fnv1a64_file(const std::string& path);
std::string hex64(std::uint64_t v);

// Digests the file and appends a record.
void add_artifact(std::vector<ArtifactRecord>& list, const std::string& role,
                  const std::string& path);

nlohmann::json manifest_to_json(const RunManifest& m);
void write_manifest(const RunManifest& m, const std::string& path);
RunManifest read_manifest(const std::string& path);

}  // namespace ptrmix
