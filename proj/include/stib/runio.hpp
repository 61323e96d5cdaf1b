#pragma once

#include <string>

#include "stib/dataset.hpp"
#include "stib/train.hpp"

namespace stib {

// Flat JSON with exactly the TrainConfig keys. Unknown or missing keys are
// hard errors so hyperparameter typos cannot pass silently.
TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::string& path);
std::string train_config_to_json(const TrainConfig& cfg);

// Metrics manifest. Everything that identifies a run lives under the
// "payload" object and is byte-identical across reruns of the same
// config/seed; wall-clock time sits outside it.
struct RunManifest {
  TrainConfig config;
  std::uint64_t dataset_fingerprint = 0;
  Metrics metrics;
  std::vector<EpochTrace> trace;
  double wall_clock_seconds = 0.0;
};

void save_manifest(const RunManifest& m, const std::string& path);
RunManifest load_manifest(const std::string& path);

// Canonical serialization of the deterministic part (sorted keys, exact
// doubles); the determinism contract compares these bytes.
std::string manifest_payload(const RunManifest& m);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace stib
