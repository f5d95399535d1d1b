#ifndef MWEATTN_CLI_HPP_
#define MWEATTN_CLI_HPP_

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mweattn/attnio.hpp"
#include "mweattn/corpus.hpp"
#include "mweattn/finetune.hpp"
#include "mweattn/metrics.hpp"
#include "mweattn/toyenc.hpp"

namespace mweattn::cli {

// Exit-code contract: 0 success (including partial skips), 1 runtime
// failure, 2 configuration error. Hard failures print a machine-readable
// error JSON on stderr.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct CorpusEntry {
    std::string name;
    std::string path;
    CorpusFormat format = CorpusFormat::canonical_jsonl;
};

struct ModelEntry {
    std::string kind;  // "toy" | "toy_random" | "external"
    TaskTag task_tag = TaskTag::pretrained;
    std::string checkpoint;          // toy
    toyenc::ToyConfig toy;           // toy_random
    int layers = 0, heads = 0, max_len = 0;  // external, informational
};

struct TaskEntry {
    std::string source;
    finetune::SplitSizes sizes;
};

struct RunConfig {
    std::string path;  // where the config was loaded from
    std::uint32_t seed = 0;
    std::string output_dir = "out";
    std::vector<std::string> languages;  // empty = loader defaults
    std::vector<CorpusEntry> corpora;
    std::map<std::string, ModelEntry> models;
    std::map<std::string, TaskEntry> tasks;  // keyed by task tag string
    metrics::MetricPolicy metric_policy;
    std::size_t min_overlap_chars = 1;
    std::string registry = "registry.jsonl";
    std::string checkpoint_dir = "checkpoints";
};

// Parses and validates; throws ConfigError with field-level messages.
RunConfig load_run_config(const std::string& path);

// Instantiates a runner for a registry entry. External entries cannot run
// in-process and raise ConfigError pointing at the archive route.
std::unique_ptr<attnio::ModelRunner> make_runner(const RunConfig& cfg,
                                                 const std::string& model_id);

// One line of the alignment/skip report.
struct AlignmentReportEntry {
    std::string instance_id;
    std::vector<int> token_indices;
    bool contiguous = false;
    bool fully_covered = false;
    std::optional<std::string> skipped_reason;
};

struct ExtractResult {
    std::vector<attnio::ArchiveItem> items;
    std::vector<AlignmentReportEntry> report;
};

// tokenize -> truncation check -> align -> attend -> head_average for every
// instance; deterministic output ordering by instance id regardless of
// worker count.
ExtractResult run_extraction(const corpus::Corpus& c, const RunConfig& cfg,
                             const std::string& model_id, int workers = 1);

struct AnalyzeResult {
    std::vector<metrics::LayerCurve> curves;            // one per MWE type present
    std::vector<AlignmentReportEntry> skipped;          // analyze-time skips
    std::map<std::string, std::vector<double>> special_mass;  // mwe type -> mean curve
    // Mean uniform-attention closed form per MWE type (100*m/T' for
    // context_to_mwe, 100*(m-1)/T' for within_mwe), emitted alongside the
    // curves so MWE-length effects stay visible.
    std::map<std::string, double> uniform_baseline;
};

// Re-aligns archive tokenizations against the corpus and aggregates
// per-instance curves. Pure given its inputs.
AnalyzeResult analyze_items(const std::vector<attnio::ArchiveItem>& items,
                            const corpus::Corpus& c, MetricKind kind,
                            const metrics::MetricPolicy& policy,
                            std::size_t min_overlap_chars, const std::string& model_id,
                            TaskTag task_tag);

std::string alignment_report_to_jsonl(const std::vector<AlignmentReportEntry>& entries);

// argv-style entry point used by main() and by tests.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace mweattn::cli

#endif  // MWEATTN_CLI_HPP_
