#include "mweattn/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <json.hpp>

#include "mweattn/util.hpp"

namespace mweattn::finetune {

using json = nlohmann::json;
namespace util = mweattn::util;

// ---- parsers -------------------------------------------------------------------

std::vector<TokenExample> parse_conllu(const std::string& data, TaskTag task) {
    if (task != TaskTag::deprel && task != TaskTag::pos) {
        throw Error("parse_conllu: task must be deprel or pos");
    }
    std::vector<TokenExample> out;
    TokenExample cur;
    std::istringstream in(data);
    std::string line;
    auto flush = [&]() {
        if (!cur.words.empty()) out.push_back(std::move(cur));
        cur = TokenExample{};
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush();
            continue;
        }
        if (line[0] == '#') continue;
        const auto cols = util::split(line, '\t');
        if (cols.size() < 8) continue;
        const std::string& id = cols[0];
        // Skip multiword ranges (1-2) and empty nodes (1.1).
        if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) continue;
        cur.words.push_back(cols[1]);
        cur.labels.push_back(task == TaskTag::pos ? cols[3] : cols[7]);
    }
    flush();
    return out;
}

std::vector<TokenExample> parse_token_tag(const std::string& data) {
    std::vector<TokenExample> out;
    TokenExample cur;
    std::istringstream in(data);
    std::string line;
    auto flush = [&]() {
        if (!cur.words.empty()) out.push_back(std::move(cur));
        cur = TokenExample{};
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (util::trim(line).empty()) {
            flush();
            continue;
        }
        if (line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) continue;
        cur.words.push_back(line.substr(0, tab));
        cur.labels.push_back(util::trim(line.substr(tab + 1)));
    }
    flush();
    return out;
}

std::vector<SeqExample> parse_text_label(const std::string& data) {
    std::vector<SeqExample> out;
    std::istringstream in(data);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (util::trim(line).empty() || line[0] == '#') continue;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos) continue;
        SeqExample ex;
        ex.text = line.substr(0, tab);
        ex.label = util::trim(line.substr(tab + 1));
        if (!ex.text.empty() && !ex.label.empty()) out.push_back(std::move(ex));
    }
    return out;
}

// ---- dataset preparation --------------------------------------------------------

namespace {

template <typename Example>
void split_examples(std::vector<Example> all, const SplitSizes& sizes, std::uint32_t seed,
                    std::vector<Example>* train, std::vector<Example>* dev,
                    std::vector<Example>* test, std::vector<std::string>* warnings) {
    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) order[i] = i;
    util::Rng rng(seed);
    rng.shuffle(order);

    std::size_t pos = 0;
    auto take = [&](std::vector<Example>* dst, std::size_t want, const char* name) {
        const std::size_t avail = all.size() - pos;
        std::size_t n = want;
        if (n > avail) {
            if (warnings) {
                warnings->push_back(std::string(name) + " size " + std::to_string(want) +
                                    " clamped to " + std::to_string(avail) + " available examples");
            }
            n = avail;
        }
        for (std::size_t i = 0; i < n; ++i) dst->push_back(all[order[pos + i]]);
        pos += n;
    };
    take(train, sizes.train, "train");
    take(dev, sizes.dev, "dev");
    take(test, sizes.test, "test");
}

}  // namespace

TaskDataset prepare_task_dataset(TaskTag task, const std::string& language,
                                 const std::string& source_path, const SplitSizes& sizes,
                                 std::uint32_t seed) {
    if (task == TaskTag::pretrained) throw ConfigError("cannot prepare a dataset for 'pretrained'");
    if (sizes.train == 0) throw ConfigError("train size must be positive");

    TaskDataset ds;
    ds.task = task;
    ds.language = language;

    const std::string data = util::read_file(source_path);
    std::set<std::string> train_labels;
    if (task == TaskTag::topic) {
        auto all = parse_text_label(data);
        if (all.empty()) throw Error("no examples parsed from " + source_path);
        split_examples(std::move(all), sizes, seed, &ds.train_seq, &ds.dev_seq, &ds.test_seq,
                       &ds.warnings);
        for (const auto& ex : ds.train_seq) train_labels.insert(ex.label);
    } else {
        auto all = task == TaskTag::ner ? parse_token_tag(data) : parse_conllu(data, task);
        if (all.empty()) throw Error("no examples parsed from " + source_path);
        split_examples(std::move(all), sizes, seed, &ds.train_tok, &ds.dev_tok, &ds.test_tok,
                       &ds.warnings);
        for (const auto& ex : ds.train_tok) {
            for (const auto& l : ex.labels) train_labels.insert(l);
        }
    }
    ds.label_inventory.assign(train_labels.begin(), train_labels.end());
    ds.label_inventory.push_back(kUnkLabel);
    return ds;
}

// ---- config --------------------------------------------------------------------

FinetuneConfig FinetuneConfig::for_task(TaskTag task) {
    FinetuneConfig c;
    c.task = task;
    c.head = task == TaskTag::topic ? HeadKind::sequence_classification
                                    : HeadKind::token_classification;
    c.f1_average = task == TaskTag::topic ? F1Average::macro : F1Average::micro;
    return c;
}

void FinetuneConfig::validate() const {
    const bool seq = head == HeadKind::sequence_classification;
    if (seq != (task == TaskTag::topic)) {
        throw ConfigError("head must be sequence_classification iff task is topic");
    }
    if (task == TaskTag::pretrained) throw ConfigError("cannot fine-tune on 'pretrained'");
    if (train_size == 0) throw ConfigError("train_size must be positive");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

// ---- encoding ------------------------------------------------------------------

namespace {

struct EncodedExample {
    std::vector<int> ids;
    std::vector<int> label_ids;  // -1 = ignored position
};

int label_id(const std::vector<std::string>& inventory, const std::string& label) {
    const auto it = std::find(inventory.begin(), inventory.end(), label);
    if (it != inventory.end()) return static_cast<int>(it - inventory.begin());
    return static_cast<int>(inventory.size()) - 1;  // UNK is last
}

// [CLS] + word pieces + [SEP]; the word label sits on the first subword,
// continuations are ignored.
EncodedExample encode_token_example(const toyenc::ToyTokenizer& tokenizer,
                                    const toyenc::ToyConfig& cfg, const TokenExample& ex,
                                    const std::vector<std::string>& inventory) {
    EncodedExample enc;
    enc.ids.push_back(toyenc::ToyTokenizer::kClsId);
    enc.label_ids.push_back(-1);
    const std::size_t budget = static_cast<std::size_t>(cfg.max_len) - 1;  // leave room for [SEP]
    for (std::size_t w = 0; w < ex.words.size() && enc.ids.size() < budget; ++w) {
        const auto pieces = tokenizer.pieces_for_word(ex.words[w]);
        for (std::size_t p = 0; p < pieces.size() && enc.ids.size() < budget; ++p) {
            enc.ids.push_back(tokenizer.id_for_token(pieces[p]));
            enc.label_ids.push_back(p == 0 ? label_id(inventory, ex.labels[w]) : -1);
        }
    }
    enc.ids.push_back(toyenc::ToyTokenizer::kSepId);
    enc.label_ids.push_back(-1);
    return enc;
}

EncodedExample encode_seq_example(const toyenc::ToyTokenizer& tokenizer, const SeqExample& ex,
                                  const std::vector<std::string>& inventory) {
    EncodedExample enc;
    const auto tok = tokenizer.tokenize(ex.text);
    enc.ids = tokenizer.token_ids(tok);
    enc.label_ids.assign(enc.ids.size(), -1);
    enc.label_ids[0] = label_id(inventory, ex.label);  // [CLS] position carries the label
    return enc;
}

// Cross-entropy over labeled positions; fills d_hidden and (optionally)
// accumulates head gradients. `scale` spreads one batch over its examples.
double head_loss_backward(const std::vector<double>& hidden, const EncodedExample& enc,
                          toyenc::HeadTensors& head, std::vector<double>* d_hidden, double scale,
                          bool collect) {
    const int T = static_cast<int>(enc.ids.size());
    const int D = static_cast<int>(head.w.rows);
    const int C = static_cast<int>(head.w.cols);
    int counted = 0;
    for (int lid : enc.label_ids) {
        if (lid >= 0) ++counted;
    }
    if (counted == 0) return 0.0;

    if (d_hidden) d_hidden->assign(static_cast<std::size_t>(T) * D, 0.0);
    double loss = 0.0;
    std::vector<double> logits(static_cast<std::size_t>(C));
    std::vector<double> probs(static_cast<std::size_t>(C));
    for (int t = 0; t < T; ++t) {
        const int gold = enc.label_ids[static_cast<std::size_t>(t)];
        if (gold < 0) continue;
        const double* h = hidden.data() + static_cast<std::size_t>(t) * D;
        for (int c = 0; c < C; ++c) {
            double s = head.b.w[static_cast<std::size_t>(c)];
            for (int j = 0; j < D; ++j) s += h[j] * head.w.at(static_cast<std::size_t>(j), static_cast<std::size_t>(c));
            logits[static_cast<std::size_t>(c)] = s;
        }
        double mx = logits[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, logits[static_cast<std::size_t>(c)]);
        double z = 0.0;
        for (int c = 0; c < C; ++c) {
            probs[static_cast<std::size_t>(c)] = std::exp(logits[static_cast<std::size_t>(c)] - mx);
            z += probs[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < C; ++c) probs[static_cast<std::size_t>(c)] /= z;
        loss += -std::log(std::max(probs[static_cast<std::size_t>(gold)], 1e-300));

        if (d_hidden || collect) {
            const double row_scale = scale / counted;
            for (int c = 0; c < C; ++c) {
                const double dlogit =
                    (probs[static_cast<std::size_t>(c)] - (c == gold ? 1.0 : 0.0)) * row_scale;
                if (collect) {
                    head.b.g[static_cast<std::size_t>(c)] += dlogit;
                    for (int j = 0; j < D; ++j) {
                        head.w.g[static_cast<std::size_t>(j) * C + c] += dlogit * h[j];
                    }
                }
                if (d_hidden) {
                    for (int j = 0; j < D; ++j) {
                        (*d_hidden)[static_cast<std::size_t>(t) * D + j] +=
                            dlogit * head.w.at(static_cast<std::size_t>(j), static_cast<std::size_t>(c));
                    }
                }
            }
        }
    }
    return loss / counted;
}

std::vector<int> predict(const toyenc::ToyEncoder& encoder, const toyenc::HeadTensors& head,
                         const EncodedExample& enc, std::vector<int>* gold_out) {
    const auto hidden = encoder.forward(enc.ids);
    const int D = static_cast<int>(head.w.rows);
    const int C = static_cast<int>(head.w.cols);
    std::vector<int> preds;
    for (std::size_t t = 0; t < enc.ids.size(); ++t) {
        const int gold = enc.label_ids[t];
        if (gold < 0) continue;
        const double* h = hidden.data() + t * static_cast<std::size_t>(D);
        int best = 0;
        double best_score = -1e300;
        for (int c = 0; c < C; ++c) {
            double s = head.b.w[static_cast<std::size_t>(c)];
            for (int j = 0; j < D; ++j) s += h[j] * head.w.at(static_cast<std::size_t>(j), static_cast<std::size_t>(c));
            if (s > best_score) {
                best_score = s;
                best = c;
            }
        }
        preds.push_back(best);
        if (gold_out) gold_out->push_back(gold);
    }
    return preds;
}

}  // namespace

// ---- F1 ------------------------------------------------------------------------

double f1_score(const std::vector<int>& gold, const std::vector<int>& pred, F1Average average) {
    if (gold.size() != pred.size()) throw Error("f1_score: length mismatch");
    if (gold.empty()) throw Error("f1_score: empty inputs");

    if (average == F1Average::micro) {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            if (gold[i] == pred[i]) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(gold.size());
    }

    std::set<int> classes(gold.begin(), gold.end());
    classes.insert(pred.begin(), pred.end());
    double sum = 0.0;
    for (int c : classes) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            if (pred[i] == c && gold[i] == c) ++tp;
            else if (pred[i] == c) ++fp;
            else if (gold[i] == c) ++fn;
        }
        const double denom = 2.0 * tp + fp + fn;
        sum += denom > 0.0 ? 2.0 * tp / denom : 0.0;
    }
    return sum / static_cast<double>(classes.size());
}

double evaluate_f1_token(const toyenc::ToyEncoder& encoder, const toyenc::HeadTensors& head,
                         const std::vector<TokenExample>& examples, F1Average average) {
    if (examples.empty()) throw Error("empty evaluation split");
    toyenc::ToyTokenizer tokenizer(encoder.config());
    std::vector<int> gold, pred;
    for (const auto& ex : examples) {
        const auto enc = encode_token_example(tokenizer, encoder.config(), ex, head.labels);
        const auto p = predict(encoder, head, enc, &gold);
        pred.insert(pred.end(), p.begin(), p.end());
    }
    return f1_score(gold, pred, average);
}

double evaluate_f1_seq(const toyenc::ToyEncoder& encoder, const toyenc::HeadTensors& head,
                       const std::vector<SeqExample>& examples, F1Average average) {
    if (examples.empty()) throw Error("empty evaluation split");
    toyenc::ToyTokenizer tokenizer(encoder.config());
    std::vector<int> gold, pred;
    for (const auto& ex : examples) {
        const auto enc = encode_seq_example(tokenizer, ex, head.labels);
        const auto p = predict(encoder, head, enc, &gold);
        pred.insert(pred.end(), p.begin(), p.end());
    }
    return f1_score(gold, pred, average);
}

double evaluate_f1(const toyenc::ToyEncoder& encoder, const toyenc::HeadTensors& head,
                   const TaskDataset& dataset, F1Average average) {
    if (dataset.test_count() == 0) throw Error("empty test split");
    return dataset.sequence_level()
               ? evaluate_f1_seq(encoder, head, dataset.test_seq, average)
               : evaluate_f1_token(encoder, head, dataset.test_tok, average);
}

double majority_baseline_f1(const TaskDataset& dataset, F1Average average) {
    std::map<std::string, std::size_t> counts;
    if (dataset.sequence_level()) {
        for (const auto& ex : dataset.train_seq) counts[ex.label] += 1;
    } else {
        for (const auto& ex : dataset.train_tok) {
            for (const auto& l : ex.labels) counts[l] += 1;
        }
    }
    if (counts.empty()) throw Error("majority baseline: empty train split");
    std::string majority;
    std::size_t best = 0;
    for (const auto& [label, n] : counts) {
        if (n > best) {
            best = n;
            majority = label;
        }
    }
    const int maj_id = label_id(dataset.label_inventory, majority);

    std::vector<int> gold;
    if (dataset.sequence_level()) {
        for (const auto& ex : dataset.test_seq) {
            gold.push_back(label_id(dataset.label_inventory, ex.label));
        }
    } else {
        for (const auto& ex : dataset.test_tok) {
            for (const auto& l : ex.labels) gold.push_back(label_id(dataset.label_inventory, l));
        }
    }
    if (gold.empty()) throw Error("majority baseline: empty test split");
    const std::vector<int> pred(gold.size(), maj_id);
    return f1_score(gold, pred, average);
}

// ---- training ------------------------------------------------------------------

TrainResult train(const FinetuneConfig& config, const toyenc::ToyEncoder& base,
                  const std::string& base_model_id, const TaskDataset& dataset) {
    config.validate();
    if (dataset.task != config.task) throw ConfigError("dataset/config task mismatch");
    if (dataset.train_count() == 0) throw Error("empty train split");
    if (dataset.label_inventory.size() < 2) throw Error("label inventory too small");

    toyenc::ToyEncoder encoder = base;
    toyenc::ToyTokenizer tokenizer(encoder.config());
    const int D = encoder.config().d_model;
    const std::size_t C = dataset.label_inventory.size();

    util::Rng rng(config.seed);
    toyenc::HeadTensors head;
    head.task = config.task;
    head.labels = dataset.label_inventory;
    head.sequence_level = config.head == HeadKind::sequence_classification;
    head.w.init(static_cast<std::size_t>(D), C);
    head.b.init(1, C);
    for (auto& x : head.w.w) x = rng.gaussian() * 0.02;

    // Pre-encode the train split once; encoding is deterministic.
    std::vector<EncodedExample> train_enc;
    if (dataset.sequence_level()) {
        for (const auto& ex : dataset.train_seq) {
            train_enc.push_back(encode_seq_example(tokenizer, ex, head.labels));
        }
    } else {
        for (const auto& ex : dataset.train_tok) {
            train_enc.push_back(
                encode_token_example(tokenizer, encoder.config(), ex, head.labels));
        }
    }

    const bool have_dev =
        dataset.sequence_level() ? !dataset.dev_seq.empty() : !dataset.dev_tok.empty();
    auto dev_f1 = [&](const toyenc::ToyEncoder& e, const toyenc::HeadTensors& h) {
        return dataset.sequence_level()
                   ? evaluate_f1_seq(e, h, dataset.dev_seq, config.f1_average)
                   : evaluate_f1_token(e, h, dataset.dev_tok, config.f1_average);
    };

    toyenc::ToyEncoder best_encoder = encoder;
    toyenc::HeadTensors best_head = head;
    double best_dev = have_dev ? dev_f1(encoder, head) : -1.0;
    int best_epoch = 0;

    const toyenc::AdamParams adam{config.learning_rate, 0.9, 0.999, 1e-8};
    int step = 0;
    std::vector<std::size_t> order(train_enc.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t batch_end = std::min(start + config.batch_size, order.size());
            const double scale = 1.0 / static_cast<double>(batch_end - start);
            encoder.zero_grad();
            std::fill(head.w.g.begin(), head.w.g.end(), 0.0);
            std::fill(head.b.g.begin(), head.b.g.end(), 0.0);

            double batch_loss = 0.0;
            for (std::size_t i = start; i < batch_end; ++i) {
                const EncodedExample& enc = train_enc[order[i]];
                toyenc::ToyEncoder::Trace trace;
                const auto hidden = encoder.forward(enc.ids, &trace);
                std::vector<double> d_hidden;
                batch_loss +=
                    head_loss_backward(hidden, enc, head, &d_hidden, scale, /*collect=*/true);
                encoder.backward(trace, d_hidden, config.freeze_layers);
            }
            if (!std::isfinite(batch_loss)) {
                throw TrainingDiverged("loss is not finite at epoch " + std::to_string(epoch) +
                                       ", step " + std::to_string(step + 1) +
                                       " (lr=" + util::format_double(config.learning_rate) + ")");
            }
            ++step;
            encoder.adam_step(adam, step, config.freeze_layers);
            toyenc::adam_update(head.w, adam, step);
            toyenc::adam_update(head.b, adam, step);
        }
        if (have_dev) {
            const double f1 = dev_f1(encoder, head);
            if (f1 > best_dev) {
                best_dev = f1;
                best_encoder = encoder;
                best_head = head;
                best_epoch = epoch;
            }
        } else {
            best_encoder = encoder;
            best_head = head;
            best_epoch = epoch;
        }
    }

    TrainResult result{CheckpointRecord{}, std::move(best_encoder), std::move(best_head)};
    result.record.base_model_id = base_model_id;
    result.record.model_id = base_model_id + "-" + to_string(config.task) + "-seed" +
                             std::to_string(config.seed);
    result.record.task = config.task;
    result.record.seed = config.seed;
    result.record.train_size = dataset.train_count();
    result.record.dev_f1 = best_dev < 0.0 ? 0.0 : best_dev;
    result.record.best_epoch = best_epoch;
    result.record.learning_rate = config.learning_rate;
    result.record.batch_size = config.batch_size;
    result.record.epochs = config.epochs;
    result.record.f1 = evaluate_f1(result.encoder, result.head, dataset, config.f1_average);
    return result;
}

// ---- registry ------------------------------------------------------------------

std::string CheckpointRecord::to_json() const {
    json j;
    j["model_id"] = model_id;
    j["base_model_id"] = base_model_id;
    j["task"] = to_string(task);
    j["f1"] = f1;
    j["seed"] = seed;
    j["train_size"] = train_size;
    j["dev_f1"] = dev_f1;
    j["best_epoch"] = best_epoch;
    j["learning_rate"] = learning_rate;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    return j.dump();
}

CheckpointRecord CheckpointRecord::from_json(const std::string& text) {
    const json j = json::parse(text);
    CheckpointRecord r;
    r.model_id = j.at("model_id").get<std::string>();
    r.base_model_id = j.at("base_model_id").get<std::string>();
    r.task = task_tag_from_string(j.at("task").get<std::string>());
    r.f1 = j.at("f1").get<double>();
    r.seed = j.at("seed").get<std::uint32_t>();
    r.train_size = j.at("train_size").get<std::size_t>();
    r.dev_f1 = j.value("dev_f1", 0.0);
    r.best_epoch = j.value("best_epoch", 0);
    r.learning_rate = j.value("learning_rate", 0.0);
    r.batch_size = j.value("batch_size", std::size_t{0});
    r.epochs = j.value("epochs", 0);
    return r;
}

void append_registry(const std::string& path, const CheckpointRecord& record) {
    const int fd = ::open(path.c_str(), O_CREAT | O_WRONLY | O_APPEND, 0644);
    if (fd < 0) throw Error("cannot open registry: " + path);
    if (::flock(fd, LOCK_EX) != 0) {
        ::close(fd);
        throw Error("cannot lock registry: " + path);
    }
    const std::string line = record.to_json() + "\n";
    const ssize_t n = ::write(fd, line.data(), line.size());
    ::flock(fd, LOCK_UN);
    ::close(fd);
    if (n != static_cast<ssize_t>(line.size())) throw Error("registry write failed: " + path);
}

std::vector<CheckpointRecord> read_registry(const std::string& path) {
    std::vector<CheckpointRecord> out;
    for (const auto& line : util::read_lines(path)) {
        if (util::trim(line).empty()) continue;
        out.push_back(CheckpointRecord::from_json(line));
    }
    return out;
}

}  // namespace mweattn::finetune
