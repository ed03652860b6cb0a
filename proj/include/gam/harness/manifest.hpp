#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "gam/error.hpp"

namespace gam::harness {

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PreconditionError("missing artifact: " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os || !os.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
    throw PreconditionError("cannot write " + path);
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

struct ArtifactRef {
  std::string name;  // relative to the output directory
  std::string sha256;
};

struct RunManifest {
  std::string stage;
  std::string config_sha256;
  std::vector<ArtifactRef> inputs;
  std::vector<ArtifactRef> outputs;
  std::map<std::string, std::string> parents;  // every upstream stage -> its digest
  double wall_clock_s = 0.0;
  std::string digest;

  /// Hash of everything except the timing, in the style of a git object id.
  std::string content_digest() const {
    const std::string body = identity().dump();
    return sha256_hex("manifest " + std::to_string(body.size()) + '\0' + body);
  }

  nlohmann::json to_json() const {
    nlohmann::json j = identity();
    j["wall_clock_s"] = wall_clock_s;
    j["digest"] = digest;
    return j;
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    try {
      m.stage = j.at("stage").get<std::string>();
      m.config_sha256 = j.at("config_sha256").get<std::string>();
      for (const auto& a : j.at("inputs")) m.inputs.push_back({a.at("name"), a.at("sha256")});
      for (const auto& a : j.at("outputs")) m.outputs.push_back({a.at("name"), a.at("sha256")});
      m.parents = j.at("parents").get<std::map<std::string, std::string>>();
      m.wall_clock_s = j.at("wall_clock_s").get<double>();
      m.digest = j.at("digest").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed manifest: ") + e.what());
    }
    return m;
  }

 private:
  nlohmann::json identity() const {
    auto refs = [](const std::vector<ArtifactRef>& v) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& r : v) a.push_back({{"name", r.name}, {"sha256", r.sha256}});
      return a;
    };
    return {{"stage", stage}, {"config_sha256", config_sha256}, {"inputs", refs(inputs)},
            {"outputs", refs(outputs)}, {"parents", parents}};
  }
};

inline std::string manifest_name(const std::string& stage) { return stage + ".manifest.json"; }

inline RunManifest load_manifest(const std::filesystem::path& dir, const std::string& stage) {
  const auto path = (dir / manifest_name(stage)).string();
  if (!std::filesystem::exists(path)) throw PreconditionError("missing upstream stage '" + stage + "' (" + path + ")");
  try {
    return RunManifest::from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed manifest " + path + ": " + e.what());
  }
}

/// Exclusive advisory lock on <dir>/.gam.lock, held for the object's
/// lifetime. flock is released by the kernel if the process dies.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw PreconditionError("cannot create output directory " + dir.string() + ": " + ec.message());
    path_ = (dir / ".gam.lock").string();
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw PreconditionError("cannot open lock file " + path_);
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw PreconditionError("output directory " + dir.string() + " is in use by another gam process");
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;
  ~DirLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }

 private:
  std::string path_;
  int fd_ = -1;
};

}  // namespace gam::harness
