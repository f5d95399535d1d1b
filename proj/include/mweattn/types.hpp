#ifndef MWEATTN_TYPES_HPP_
#define MWEATTN_TYPES_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace mweattn {

// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad configuration or unusable input file; maps to exit code 2 in the CLI.
class ConfigError : public Error {
public:
    using Error::Error;
};

enum class MweType { idiom, msu };
enum class TaskTag { pretrained, deprel, pos, ner, topic };
enum class MetricKind { context_to_mwe, within_mwe };
enum class Zone { lower, middle, upper };
enum class CorpusFormat { canonical_jsonl, bio_tagged, parallel_tsv };

std::string to_string(MweType t);
std::string to_string(TaskTag t);
std::string to_string(MetricKind k);
std::string to_string(Zone z);
std::string to_string(CorpusFormat f);

MweType mwe_type_from_string(std::string_view s);
TaskTag task_tag_from_string(std::string_view s);
MetricKind metric_kind_from_string(std::string_view s);
Zone zone_from_string(std::string_view s);
CorpusFormat corpus_format_from_string(std::string_view s);

}  // namespace mweattn

#endif  // MWEATTN_TYPES_HPP_
