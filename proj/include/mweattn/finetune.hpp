#ifndef MWEATTN_FINETUNE_HPP_
#define MWEATTN_FINETUNE_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mweattn/toyenc.hpp"
#include "mweattn/types.hpp"

namespace mweattn::finetune {

class TrainingDiverged : public Error {
public:
    using Error::Error;
};

enum class HeadKind { token_classification, sequence_classification };
enum class F1Average { micro, macro };

// Word/label pairs for DepRel, POS and NER; text/label for Topic.
struct TokenExample {
    std::vector<std::string> words;
    std::vector<std::string> labels;
};

struct SeqExample {
    std::string text;
    std::string label;
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t dev = 0;
    std::size_t test = 0;
};

struct TaskDataset {
    TaskTag task = TaskTag::pos;
    std::string language;
    std::vector<std::string> label_inventory;  // frozen from train, UNK last
    std::vector<TokenExample> train_tok, dev_tok, test_tok;
    std::vector<SeqExample> train_seq, dev_seq, test_seq;
    std::vector<std::string> warnings;

    bool sequence_level() const { return task == TaskTag::topic; }
    std::size_t train_count() const {
        return sequence_level() ? train_seq.size() : train_tok.size();
    }
    std::size_t test_count() const {
        return sequence_level() ? test_seq.size() : test_tok.size();
    }
};

inline constexpr const char* kUnkLabel = "<unk>";

// Seeded subsample of the requested split sizes. Sources: CoNLL-U for
// deprel/pos (columns 2=form, 4=UPOS, 8=deprel), token<TAB>tag blocks for
// ner, text<TAB>label lines for topic. Oversized requests clamp with a
// warning; labels are frozen from the train split plus a reserved UNK.
TaskDataset prepare_task_dataset(TaskTag task, const std::string& language,
                                 const std::string& source_path, const SplitSizes& sizes,
                                 std::uint32_t seed);

// Parsers, exposed for tests.
std::vector<TokenExample> parse_conllu(const std::string& data, TaskTag task);
std::vector<TokenExample> parse_token_tag(const std::string& data);
std::vector<SeqExample> parse_text_label(const std::string& data);

struct FinetuneConfig {
    TaskTag task = TaskTag::pos;
    HeadKind head = HeadKind::token_classification;
    std::size_t train_size = 100;
    int epochs = 10;
    std::uint32_t seed = 7;
    double learning_rate = 5e-3;
    std::size_t batch_size = 8;
    int freeze_layers = 0;
    F1Average f1_average = F1Average::micro;  // micro for token tasks, macro for topic

    static FinetuneConfig for_task(TaskTag task);

    // Enforces head/task pairing and positive train size.
    void validate() const;
};

struct CheckpointRecord {
    std::string model_id;
    std::string base_model_id;
    TaskTag task = TaskTag::pos;
    double f1 = 0.0;  // held-out test split
    std::uint32_t seed = 0;
    std::size_t train_size = 0;
    double dev_f1 = 0.0;
    int best_epoch = 0;  // 0 = untrained weights kept
    double learning_rate = 0.0;
    std::size_t batch_size = 0;
    int epochs = 0;

    std::string to_json() const;
    static CheckpointRecord from_json(const std::string& text);
};

struct TrainResult {
    CheckpointRecord record;
    toyenc::ToyEncoder encoder;
    toyenc::HeadTensors head;
};

// Fine-tunes a copy of `base` on the prepared dataset. Seed-deterministic:
// the same config and base yield an identical record and weights. Throws
// TrainingDiverged on a non-finite loss.
TrainResult train(const FinetuneConfig& config, const toyenc::ToyEncoder& base,
                  const std::string& base_model_id, const TaskDataset& dataset);

// F1 of the (encoder, head) pair on the dataset's test split. Throws on an
// empty test split. Gold labels outside the inventory map to UNK.
double evaluate_f1(const toyenc::ToyEncoder& encoder, const toyenc::HeadTensors& head,
                   const TaskDataset& dataset, F1Average average);

// Same, over an explicit list of examples (used for dev-split selection).
double evaluate_f1_token(const toyenc::ToyEncoder& encoder, const toyenc::HeadTensors& head,
                         const std::vector<TokenExample>& examples, F1Average average);
double evaluate_f1_seq(const toyenc::ToyEncoder& encoder, const toyenc::HeadTensors& head,
                       const std::vector<SeqExample>& examples, F1Average average);

// Generic multi-class F1 over parallel gold/pred label-id vectors.
double f1_score(const std::vector<int>& gold, const std::vector<int>& pred, F1Average average);

// Majority-class baseline: the F1 obtained by always predicting the most
// frequent train label (token-level for token tasks).
double majority_baseline_f1(const TaskDataset& dataset, F1Average average);

// Appends a record to a JSONL registry under an exclusive file lock.
void append_registry(const std::string& path, const CheckpointRecord& record);
std::vector<CheckpointRecord> read_registry(const std::string& path);

}  // namespace mweattn::finetune

#endif  // MWEATTN_FINETUNE_HPP_
