// SPDX-License-Identifier: Apache-2.0
#include "manifest.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <openssl/evp.h>

#include <chrono>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "procrnn/errors.hpp"
#include "procrnn/fileio.hpp"

#ifndef PROCRNN_VERSION
#define PROCRNN_VERSION "unknown"
#endif

namespace procrnn::cli {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 is unavailable");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  for (unsigned i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string utc_now() {
  const auto now = std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
  const auto secs = std::chrono::time_point_cast<std::chrono::seconds>(now);
  const auto ms = (now - secs).count();
  return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03}Z", secs, ms);
}

nlohmann::json config_json(const TrainConfig& c) {
  nlohmann::json j;
  j["cell"] = std::string(to_string(c.cell));
  j["hidden_size"] = c.hidden_size;
  j["layers"] = c.layers;
  j["vocab_size"] = c.vocab_size ? nlohmann::json(*c.vocab_size) : nlohmann::json(nullptr);
  j["truncate_unknown_runs"] = c.truncate_unknown_runs;
  j["batch_size"] = c.batch_size;
  j["iterations"] = c.iterations;
  j["traces_per_iteration"] = c.traces_per_iteration;
  j["learning_rate"] = c.learning_rate;
  j["clip_norm"] = c.clip_norm;
  j["seed"] = c.seed;
  j["prefix_fractions"] = c.prefix_fractions;
  j["train_prefix_fraction"] = c.train_prefix_fraction;
  return j;
}

Manifest::Manifest(std::filesystem::path path, std::string command) : path_(std::move(path)) {
  doc_["tool"] = "procrnn";
  doc_["version"] = PROCRNN_VERSION;
  doc_["command"] = std::move(command);
  doc_["started_at"] = utc_now();
  doc_["finished_at"] = nullptr;
  doc_["status"] = "running";
  doc_["inputs"] = nlohmann::json::array();
  doc_["outputs"] = nlohmann::json::object();
}

void Manifest::add_input(const std::string& role, const std::filesystem::path& file) {
  if (!std::filesystem::is_regular_file(file)) throw DataError("cannot open " + file.string());
  doc_["inputs"].push_back({{"role", role},
                            {"path", file.string()},
                            {"bytes", std::filesystem::file_size(file)},
                            {"sha256", sha256_file(file)}});
}

void Manifest::add_output(const std::string& role, const std::filesystem::path& file) {
  doc_["outputs"][role] = file.string();
}

void Manifest::write() const {
  const std::string text = doc_.dump(2) + "\n";
  write_file_atomically(path_, [&](std::ostream& out) { out << text; });
}

void Manifest::finish(const std::string& status) {
  doc_["finished_at"] = utc_now();
  doc_["status"] = status;
  write();
}

}  // namespace procrnn::cli
