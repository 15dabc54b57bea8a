#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "hedge/market.hpp"

namespace hedge {

nlohmann::json generator_config_to_json(const GeneratorConfig& config);
// Strict: unknown keys are rejected.
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

// FNV-1a over the canonical JSON dump; stable across runs.
std::uint64_t config_hash(const nlohmann::json& j);

// Writes states.csv, instruments.csv, features_t.csv, features_t1.csv,
// cashflows.csv and manifest.json into `dir`. All files are written
// atomically (temp file + rename) with deterministic formatting.
void save_dataset(const HistoricDataset& data, const std::filesystem::path& dir);

HistoricDataset load_dataset(const std::filesystem::path& dir);

// Atomic text-file write used for every artifact the tools emit.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// %.17g rendering shared by all CSV writers.
std::string format_double(double x);

} // namespace hedge
