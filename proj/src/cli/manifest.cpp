#include "ssrl/cli/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <iterator>
#include <memory>
#include <stdexcept>
#include <vector>

namespace ssrl::cli {

namespace {

class Sha1 {
 public:
  Sha1() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha1(), nullptr) != 1) {
      throw std::runtime_error("SHA-1 initialisation failed");
    }
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw std::runtime_error("SHA-1 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) {
      throw std::runtime_error("SHA-1 finalisation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(kHex[md[i] >> 4]);
      out.push_back(kHex[md[i] & 0xf]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string git_blob_digest(std::span<const std::uint8_t> bytes) {
  Sha1 h;
  const std::string header = "blob " + std::to_string(bytes.size());
  h.update(header.data(), header.size() + 1);  // includes the terminating NUL
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string git_blob_digest_file(const std::filesystem::path& path) {
  return git_blob_digest(read_file(path));
}

std::string artifact_digest(const std::map<std::string, std::string>& file_digests) {
  Sha1 h;
  for (const auto& [name, digest] : file_digests) {
    const std::string line = digest + " " + name + "\n";
    h.update(line.data(), line.size());
  }
  return h.hex();
}

void RunManifest::record_outputs(const std::filesystem::path& dir,
                                 std::initializer_list<std::string> names) {
  for (const auto& name : names) outputs[name] = git_blob_digest_file(dir / name);
  outputs_digest = artifact_digest(outputs);
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = config;
  j["dataset"] = {{"path", dataset_path}, {"digest", dataset_digest}};
  j["outputs"] = outputs;
  j["outputs_digest"] = outputs_digest;
  j["wall_seconds"] = wall_seconds;
  if (!extra.is_null()) j["extra"] = extra;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.value("config", nlohmann::json::object());
  m.dataset_path = j.at("dataset").at("path").get<std::string>();
  m.dataset_digest = j.at("dataset").at("digest").get<std::string>();
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  m.outputs_digest = j.at("outputs_digest").get<std::string>();
  m.wall_seconds = j.value("wall_seconds", 0.0);
  if (j.contains("extra")) m.extra = j.at("extra");
  return m;
}

void RunManifest::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << to_json().dump(2) << '\n';
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  return from_json(nlohmann::json::parse(f));
}

VerifyResult verify_manifest(const RunManifest& manifest, const std::filesystem::path& dir) {
  VerifyResult r;
  std::map<std::string, std::string> actual;
  for (const auto& [name, digest] : manifest.outputs) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) {
      r.mismatches[name] = "missing";
      continue;
    }
    actual[name] = git_blob_digest_file(path);
    if (actual[name] != digest) r.mismatches[name] = "expected " + digest + ", found " + actual[name];
  }
  if (r.mismatches.empty() && artifact_digest(actual) != manifest.outputs_digest) {
    r.mismatches["<outputs>"] = "combined digest differs";
  }
  r.ok = r.mismatches.empty();
  return r;
}

}  // namespace ssrl::cli
