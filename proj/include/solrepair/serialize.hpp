#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "solrepair/corpus.hpp"
#include "solrepair/executor.hpp"
#include "solrepair/metrics.hpp"
#include "solrepair/repair.hpp"

/// JSON forms of the persisted artifacts. Schema ids are listed in
/// docs/formats.md; readers reject a schema id they do not know.
namespace solrepair::io {

using nlohmann::json;

inline constexpr std::string_view kTaskSchema = "solrepair.task/1";
inline constexpr std::string_view kBuildStatsSchema = "solrepair.build-stats/1";
inline constexpr std::string_view kSessionSchema = "solrepair.session/1";
inline constexpr std::string_view kOutcomeSchema = "solrepair.outcome/1";
inline constexpr std::string_view kManifestSchema = "solrepair.manifest/1";
inline constexpr std::string_view kRunConfigSchema = "solrepair.run-config/1";
inline constexpr std::string_view kReportSchema = "solrepair.report/1";
inline constexpr std::string_view kVerdictSchema = "solrepair.verdict/1";

/// Throws MalformedRecord when `doc` carries a different schema id.
void expect_schema(const json& doc, std::string_view schema);

json to_json(const corpus::FunctionRecord& r);
corpus::FunctionRecord record_from_json(const json& doc);

json to_json(const corpus::FilterReport& r);

json to_json(const executor::Diagnostic& d);
executor::Diagnostic diagnostic_from_json(const json& doc);
/// `with_timing` adds elapsed_ms, which differs between otherwise identical
/// runs.
json to_json(const executor::ExecutionVerdict& v, bool with_timing = true);
executor::ExecutionVerdict verdict_from_json(const json& doc);

json to_json(const metrics::Usage& u);
metrics::Usage usage_from_json(const json& doc);

json to_json(const repair::RepairSession& s, bool with_timing = true);
repair::RepairSession session_from_json(const json& doc);

/// Ordered key-sorted single-line dump used for every JSONL artifact.
std::string dump_line(const json& doc);

/// Reads a JSON-Lines file. A final line without a newline that fails to
/// parse is treated as a torn write and dropped; any other bad line throws
/// MalformedRecord naming the file and line.
std::vector<json> read_jsonl(const std::string& path);

std::string read_file(const std::string& path);
/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::string& path, std::string_view content);

std::vector<corpus::FunctionRecord> read_tasks(const std::string& path);

}  // namespace solrepair::io
