// SPDX-License-Identifier: Apache-2.0
//
// Run manifest: a JSON record of what a command read, what it wrote and with
// which configuration. Written before work starts (status "running") and
// rewritten when the command finishes.
#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "procrnn/training.hpp"

namespace procrnn::cli {

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Current UTC time as 2024-01-31T12:00:00.123Z.
std::string utc_now();

nlohmann::json config_json(const TrainConfig& config);

class Manifest {
 public:
  Manifest(std::filesystem::path path, std::string command);

  void add_input(const std::string& role, const std::filesystem::path& file);
  void add_output(const std::string& role, const std::filesystem::path& file);
  nlohmann::json& body() noexcept { return doc_; }

  /// Atomically rewrites the file with the current contents.
  void write() const;
  /// Stamps the end time and final status, then writes.
  void finish(const std::string& status);

 private:
  std::filesystem::path path_;
  nlohmann::json doc_;
};

}  // namespace procrnn::cli
