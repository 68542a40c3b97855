#pragma once

#include <filesystem>
#include <fstream>

#include "frameslide/core.hpp"
#include "json.hpp"

namespace frameslide {

// Reproducibility record for one CLI run: the stored argument map fully
// determines re-execution, the digests let a replay be verified bit-exactly.
struct RunManifest {
  std::string command;
  nlohmann::json args;  // flat flag -> value snapshot
  uint64_t seed = 0;
  nlohmann::json schedule;  // {T, beta_start, beta_end}
  std::string denoiser_id;
  std::string denoiser_checksum;  // hex digest of the parameter file, empty for analytic
  std::string rng_algorithm;
  std::vector<std::string> outputs;        // paths relative to the output dir
  std::vector<std::string> output_digests; // hex FNV-1a per output, same order
  double duration_seconds = 0.0;
  long denoiser_calls_per_frame = 0;

  nlohmann::json to_json() const {
    return nlohmann::json{{"command", command},
                          {"args", args},
                          {"seed", seed},
                          {"schedule", schedule},
                          {"denoiser", {{"id", denoiser_id}, {"checksum", denoiser_checksum}}},
                          {"rng", rng_algorithm},
                          {"outputs", outputs},
                          {"output_digests", output_digests},
                          {"duration_seconds", duration_seconds},
                          {"denoiser_calls_per_frame", denoiser_calls_per_frame}};
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.args = j.at("args");
    m.seed = j.at("seed").get<uint64_t>();
    m.schedule = j.value("schedule", nlohmann::json::object());
    m.denoiser_id = j.at("denoiser").value("id", std::string());
    m.denoiser_checksum = j.at("denoiser").value("checksum", std::string());
    m.rng_algorithm = j.value("rng", std::string());
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.output_digests = j.value("output_digests", std::vector<std::string>{});
    m.duration_seconds = j.value("duration_seconds", 0.0);
    m.denoiser_calls_per_frame = j.value("denoiser_calls_per_frame", 0L);
    return m;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write manifest " + path.string());
    os << to_json().dump(2) << "\n";
  }

  static RunManifest load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read manifest " + path.string());
    nlohmann::json j;
    is >> j;
    return from_json(j);
  }
};

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
  return buf;
}

inline uint64_t file_digest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) h = fnv1a(buf, size_t(is.gcount()), h);
  return h;
}

}  // namespace frameslide
