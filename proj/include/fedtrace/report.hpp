#pragma once

#include <string>
#include <vector>

#include "fedtrace/evaluation.hpp"

namespace fedtrace {

// Flat cell dump, one row per EvalEntry, full-precision scores so reports can
// be re-rendered from the file byte-identically.
std::string entries_csv(const std::vector<EvalEntry>& entries);
std::vector<EvalEntry> entries_from_csv(const std::string& text);

// Markdown views over a single-aggregation set of cells. Each renders the
// rows it can find and leaves '-' where a cell is missing.
//   main_results:     held-out family x view AUC matrix plus the IID row
//   effect_size:      struct-vs-conv deltas, sorted by improvement
//   complete_results: main_results plus best-view column and the OOD average
//   per_org:          per-org IID and averaged-OOD consistency
std::string main_results_markdown(const std::vector<EvalEntry>& entries);
std::string effect_size_markdown(const std::vector<EvalEntry>& entries);
std::string complete_results_markdown(const std::vector<EvalEntry>& entries);
std::string per_org_markdown(const std::vector<EvalEntry>& entries);

// All applicable tables, grouped into one section per aggregation present.
std::string markdown_report(const std::vector<EvalEntry>& entries);

}  // namespace fedtrace
