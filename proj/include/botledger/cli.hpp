#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "botledger/features.hpp"
#include "botledger/ingestion.hpp"
#include "botledger/sample_io.hpp"

namespace botledger {

// Exit codes: 0 ok, 1 usage, 2 data or format problem, 3 numeric failure.
int exit_code_for(const Error& e);

// Entry point shared by the botledger binary and the CLI tests. `args`
// excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

struct Featurized {
  SampleSet samples;
  EliminationReport elimination;
  IngestStats parse_stats, timeline_stats;
};

// ingest -> eliminate -> (optional period split) -> window -> scale
Featurized featurize(const std::filesystem::path& logs, const std::filesystem::path& labels,
                     const WindowConfig& window, std::optional<std::int64_t> period_length,
                     std::optional<std::int64_t> anchor = std::nullopt);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace botledger
