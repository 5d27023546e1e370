#include "ptrmix/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "ptrmix/corpus.hpp"  // IoError

namespace ptrmix {

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void add_artifact(std::vector<ArtifactRecord>& list, const std::string& role,
                  const std::string& path) {
  ArtifactRecord rec;
  rec.role = role;
  rec.path = path;
  rec.fnv1a64 = hex64(fnv1a64_file(path));
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  rec.bytes = in ? static_cast<std::uint64_t>(in.tellg()) : 0;
  list.push_back(std::move(rec));
}

static std::string now_utc_iso8601() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

static nlohmann::json artifacts_to_json(const std::vector<ArtifactRecord>& list) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : list)
    arr.push_back(
        {{"role", a.role}, {"path", a.path}, {"bytes", a.bytes}, {"fnv1a64", a.fnv1a64}});
  return arr;
}

nlohmann::json manifest_to_json(const RunManifest& m) {
  return {{"tool_version", m.tool_version},
          {"command", m.command},
          {"created_utc", m.created_utc},
          {"seed", m.seed},
          {"config", m.config},
          {"inputs", artifacts_to_json(m.inputs)},
          {"outputs", artifacts_to_json(m.outputs)}};
}

void write_manifest(const RunManifest& m, const std::string& path) {
  RunManifest filled = m;
  if (filled.created_utc.empty()) filled.created_utc = now_utc_iso8601();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << manifest_to_json(filled).dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

static std::vector<ArtifactRecord> artifacts_from_json(const nlohmann::json& arr) {
  std::vector<ArtifactRecord> list;
  for (const auto& j : arr) {
    ArtifactRecord a;
    a.role = j.at("role").get<std::string>();
    a.path = j.at("path").get<std::string>();
    a.bytes = j.at("bytes").get<std::uint64_t>();
    a.fnv1a64 = j.at("fnv1a64").get<std::string>();
    list.push_back(std::move(a));
  }
  return list;
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  RunManifest m;
  m.tool_version = j.at("tool_version").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.created_utc = j.at("created_utc").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config = j.at("config");
  m.inputs = artifacts_from_json(j.at("inputs"));
  m.outputs = artifacts_from_json(j.at("outputs"));
  return m;
}

}  // namespace ptrmix
