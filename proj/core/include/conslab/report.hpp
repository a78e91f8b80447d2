#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "conslab/metrics.hpp"
#include "conslab/resource.hpp"
#include "conslab/trainer.hpp"

namespace conslab {

/// FNV-1a 64-bit over a byte string.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Content hash of a relation directory (files in name order) and an
/// optional tuple file, as 16 lowercase hex digits.
std::string resource_fingerprint(const std::filesystem::path& resource_dir,
                                 const std::filesystem::path& tuples_file = {});

/// ISO-8601 UTC wall-clock time. Only report field allowed to vary between
/// identical runs.
std::string utc_timestamp();

nlohmann::json to_json(const ResourceStats& stats);
nlohmann::json to_json(const RelationReport& report);
nlohmann::json to_json(const SuiteReport& report);
nlohmann::json to_json(const EpochLog& entry);
nlohmann::json to_json(const TrainConfig& config);

/// Per-relation records plus the requested aggregate blocks.
nlohmann::json suite_to_json(std::span<const RelationReport> reports, bool macro, bool micro);

/// Stable serialization: sorted keys, two-space indent, trailing newline.
std::string dump_report(const nlohmann::json& report);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace conslab
