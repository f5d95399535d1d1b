#include "mweattn/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "mweattn/align.hpp"
#include "mweattn/report.hpp"
#include "mweattn/util.hpp"

namespace mweattn::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;
namespace util = mweattn::util;

namespace {

std::string now_utc_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string file_hash(const std::string& path) {
    const std::string data = util::read_file(path);
    return util::to_hex(util::fnv1a64(data.data(), data.size()));
}

}  // namespace

// ---- config --------------------------------------------------------------------

RunConfig load_run_config(const std::string& path) {
    json j;
    try {
        j = json::parse(util::read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }

    RunConfig cfg;
    cfg.path = path;
    std::vector<std::string> problems;
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        if (p.empty() || fs::path(p).is_absolute()) return p;
        return (base / p).string();
    };

    try {
        cfg.seed = j.value("seed", 0u);
        cfg.output_dir = resolve(j.value("output_dir", std::string("out")));
        if (j.contains("languages")) {
            cfg.languages = j["languages"].get<std::vector<std::string>>();
        }
        if (j.contains("corpora")) {
            std::size_t i = 0;
            for (const auto& c : j["corpora"]) {
                CorpusEntry e;
                e.name = c.value("name", "corpus" + std::to_string(i));
                e.path = resolve(c.value("path", std::string()));
                if (e.path.empty()) {
                    problems.push_back("corpora[" + std::to_string(i) + "].path: missing");
                } else if (!fs::exists(e.path)) {
                    problems.push_back("corpora[" + std::to_string(i) + "].path: file not found: " +
                                       e.path);
                }
                try {
                    e.format = corpus_format_from_string(
                        c.value("format", std::string("canonical_jsonl")));
                } catch (const std::exception&) {
                    problems.push_back("corpora[" + std::to_string(i) + "].format: unknown value");
                }
                cfg.corpora.push_back(std::move(e));
                ++i;
            }
        }
        if (j.contains("models")) {
            for (const auto& [id, m] : j["models"].items()) {
                ModelEntry e;
                e.kind = m.value("kind", std::string("toy_random"));
                if (e.kind != "toy" && e.kind != "toy_random" && e.kind != "external") {
                    problems.push_back("models." + id + ".kind: must be toy, toy_random or external");
                }
                try {
                    e.task_tag = task_tag_from_string(m.value("task_tag", std::string("pretrained")));
                } catch (const std::exception&) {
                    problems.push_back("models." + id + ".task_tag: unknown value");
                }
                if (e.kind == "toy") {
                    e.checkpoint = resolve(m.value("checkpoint", std::string()));
                    if (e.checkpoint.empty()) {
                        problems.push_back("models." + id + ".checkpoint: missing for kind=toy");
                    }
                } else if (e.kind == "toy_random") {
                    e.toy.seed = m.value("seed", 1u);
                    e.toy.layers = m.value("layers", e.toy.layers);
                    e.toy.heads = m.value("heads", e.toy.heads);
                    e.toy.d_model = m.value("d_model", e.toy.d_model);
                    e.toy.d_ff = m.value("d_ff", e.toy.d_ff);
                    e.toy.vocab_size = m.value("vocab_size", e.toy.vocab_size);
                    e.toy.max_len = m.value("max_len", e.toy.max_len);
                    e.toy.piece_len = m.value("piece_len", e.toy.piece_len);
                } else {
                    e.layers = m.value("layers", 0);
                    e.heads = m.value("heads", 0);
                    e.max_len = m.value("max_len", 0);
                }
                cfg.models[id] = std::move(e);
            }
        }
        if (j.contains("tasks")) {
            for (const auto& [tag, t] : j["tasks"].items()) {
                try {
                    (void)task_tag_from_string(tag);
                } catch (const std::exception&) {
                    problems.push_back("tasks." + tag + ": unknown task tag");
                    continue;
                }
                TaskEntry e;
                e.source = resolve(t.value("source", std::string()));
                if (e.source.empty()) {
                    problems.push_back("tasks." + tag + ".source: missing");
                } else if (!fs::exists(e.source)) {
                    problems.push_back("tasks." + tag + ".source: file not found: " + e.source);
                }
                e.sizes.train = t.value("train", std::size_t{0});
                e.sizes.dev = t.value("dev", std::size_t{0});
                e.sizes.test = t.value("test", std::size_t{0});
                if (e.sizes.train == 0) {
                    problems.push_back("tasks." + tag + ".train: must be positive");
                }
                cfg.tasks[tag] = std::move(e);
            }
        }
        if (j.contains("metrics")) {
            const auto& m = j["metrics"];
            cfg.metric_policy.renormalize_over_nonspecial =
                m.value("renormalize_after_special_exclusion", false);
            cfg.metric_policy.include_diagonal = m.value("include_diagonal_within_mwe", false);
            cfg.min_overlap_chars = m.value("min_overlap_chars", std::size_t{1});
            if (cfg.min_overlap_chars == 0) {
                problems.push_back("metrics.min_overlap_chars: must be positive");
            }
        }
        cfg.registry = resolve(j.value("registry", std::string("registry.jsonl")));
        cfg.checkpoint_dir = resolve(j.value("checkpoint_dir", std::string("checkpoints")));
    } catch (const json::exception& e) {
        problems.push_back(std::string("config structure: ") + e.what());
    }

    if (!problems.empty()) {
        std::string msg = "invalid config " + path + ":";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ConfigError(msg);
    }
    return cfg;
}

std::unique_ptr<attnio::ModelRunner> make_runner(const RunConfig& cfg,
                                                 const std::string& model_id) {
    const auto it = cfg.models.find(model_id);
    if (it == cfg.models.end()) {
        throw ConfigError("model '" + model_id + "' not found in config registry");
    }
    const ModelEntry& e = it->second;
    if (e.kind == "toy_random") {
        return std::make_unique<toyenc::ToyRunner>(model_id, toyenc::ToyEncoder(e.toy));
    }
    if (e.kind == "toy") {
        auto ckpt = toyenc::load_checkpoint(e.checkpoint);
        return std::make_unique<toyenc::ToyRunner>(model_id, std::move(ckpt.encoder));
    }
    throw ConfigError("model '" + model_id +
                      "' is external: run inference elsewhere, dump a tensor archive in the "
                      "documented format and use --from-archive");
}

// ---- extraction ----------------------------------------------------------------

ExtractResult run_extraction(const corpus::Corpus& c, const RunConfig& cfg,
                             const std::string& model_id, int workers) {
    std::vector<const corpus::MweInstance*> order;
    for (const auto& inst : c.instances) order.push_back(&inst);
    std::sort(order.begin(), order.end(),
              [](const corpus::MweInstance* a, const corpus::MweInstance* b) {
                  return a->id < b->id;
              });

    const std::size_t n = order.size();
    std::vector<std::optional<attnio::ArchiveItem>> items(n);
    std::vector<AlignmentReportEntry> report(n);
    const align::OverlapPolicy policy{cfg.min_overlap_chars};

    // One runner per worker, constructed up front so configuration problems
    // fail the command instead of dying inside a thread.
    const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(n ? n : 1)));
    std::vector<std::unique_ptr<attnio::ModelRunner>> runners;
    for (int w = 0; w < n_workers; ++w) runners.push_back(make_runner(cfg, model_id));

    auto process_range = [&](std::size_t begin, std::size_t stride) {
        attnio::ModelRunner* runner = runners[begin % runners.size()].get();
        for (std::size_t i = begin; i < n; i += stride) {
            const corpus::MweInstance& inst = *order[i];
            AlignmentReportEntry& entry = report[i];
            entry.instance_id = inst.id;
            try {
                const auto tok = runner->tokenize(inst.text);
                if (align::span_truncated(inst, tok)) {
                    entry.skipped_reason = "span truncated: MWE lies beyond the tokenized range";
                    continue;
                }
                const auto alignment = align::align(inst, tok, policy);
                entry.token_indices = alignment.token_indices;
                entry.contiguous = alignment.contiguous;
                entry.fully_covered = alignment.fully_covered;

                auto raw = runner->attend(inst.text);
                if (raw.T != static_cast<int>(tok.size())) {
                    entry.skipped_reason = "runner tokenize/attend length mismatch";
                    continue;
                }
                const auto violations = attnio::validate_rows(raw, 1e-4);
                if (!violations.empty()) {
                    entry.skipped_reason = "attention rows not row-stochastic (" +
                                           std::to_string(violations.size()) + " rows)";
                    continue;
                }
                attnio::ArchiveItem item;
                item.instance_id = inst.id;
                item.tok = tok;
                item.stack = attnio::head_average(raw);
                items[i] = std::move(item);
            } catch (const align::AlignmentError& e) {
                entry.skipped_reason = e.what();
            } catch (const std::exception& e) {
                // Must not escape a worker thread; surface as a skip.
                entry.skipped_reason = std::string("extraction failed: ") + e.what();
            }
        }
    };

    if (n_workers == 1) {
        process_range(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) {
            pool.emplace_back(process_range, static_cast<std::size_t>(w),
                              static_cast<std::size_t>(n_workers));
        }
        for (auto& t : pool) t.join();
    }

    ExtractResult out;
    for (std::size_t i = 0; i < n; ++i) {
        if (items[i]) out.items.push_back(std::move(*items[i]));
        out.report.push_back(std::move(report[i]));
    }
    return out;
}

std::string alignment_report_to_jsonl(const std::vector<AlignmentReportEntry>& entries) {
    std::string out;
    for (const auto& e : entries) {
        json j;
        j["instance_id"] = e.instance_id;
        j["token_indices"] = e.token_indices;
        j["contiguous"] = e.contiguous;
        j["fully_covered"] = e.fully_covered;
        if (e.skipped_reason) j["skipped_reason"] = *e.skipped_reason;
        out += j.dump() + "\n";
    }
    return out;
}

// ---- analysis ------------------------------------------------------------------

AnalyzeResult analyze_items(const std::vector<attnio::ArchiveItem>& items,
                            const corpus::Corpus& c, MetricKind kind,
                            const metrics::MetricPolicy& policy,
                            std::size_t min_overlap_chars, const std::string& model_id,
                            TaskTag task_tag) {
    std::map<std::string, const corpus::MweInstance*> by_id;
    for (const auto& inst : c.instances) by_id[inst.id] = &inst;

    struct Group {
        std::vector<std::vector<double>> curves;
        std::vector<double> special_sum;
        double baseline_sum = 0.0;
        int skipped = 0;
    };
    std::map<MweType, Group> groups;
    AnalyzeResult out;

    const align::OverlapPolicy overlap{min_overlap_chars};
    for (const auto& item : items) {
        const auto found = by_id.find(item.instance_id);
        AlignmentReportEntry skip;
        skip.instance_id = item.instance_id;
        if (found == by_id.end()) {
            skip.skipped_reason = "instance not found in corpus";
            out.skipped.push_back(std::move(skip));
            continue;
        }
        const corpus::MweInstance& inst = *found->second;
        Group& group = groups[inst.mwe_type];
        try {
            const auto alignment = align::align(inst, item.tok, overlap);
            std::vector<int> context;
            try {
                context = align::context_indices(item.tok, alignment);
            } catch (const align::ContextEmptyError&) {
                if (kind == MetricKind::context_to_mwe) throw;
                // within_mwe only needs context for renormalization
            }
            auto curve =
                metrics::curve_for_instance(item.stack, alignment.token_indices, context, kind,
                                            policy);
            const auto special = metrics::special_mass_curve(item.stack, item.tok);
            if (group.special_sum.empty()) group.special_sum.assign(special.size(), 0.0);
            for (std::size_t l = 0; l < special.size(); ++l) group.special_sum[l] += special[l];

            const double m = static_cast<double>(alignment.token_indices.size());
            const double t_prime = m + static_cast<double>(context.size());
            group.baseline_sum +=
                kind == MetricKind::context_to_mwe ? 100.0 * m / t_prime
                                                   : 100.0 * (m - 1.0) / t_prime;
            group.curves.push_back(std::move(curve));
        } catch (const Error& e) {
            group.skipped += 1;
            skip.skipped_reason = e.what();
            out.skipped.push_back(std::move(skip));
        }
    }

    for (auto& [type, group] : groups) {
        if (group.curves.empty()) continue;
        out.curves.push_back(metrics::aggregate(group.curves, model_id, task_tag, type, kind,
                                                group.skipped));
        std::vector<double> mean(group.special_sum.size(), 0.0);
        for (std::size_t l = 0; l < mean.size(); ++l) {
            mean[l] = group.special_sum[l] / static_cast<double>(group.curves.size());
        }
        out.special_mass[to_string(type)] = std::move(mean);
        out.uniform_baseline[to_string(type)] =
            group.baseline_sum / static_cast<double>(group.curves.size());
    }
    return out;
}

// ---- commands ------------------------------------------------------------------

namespace {

corpus::LoadOptions load_options_from(const RunConfig* cfg, const std::string& language,
                                      const std::string& mwe_type) {
    corpus::LoadOptions opts;
    if (cfg && !cfg->languages.empty()) opts.allowed_languages = cfg->languages;
    if (!language.empty()) {
        opts.default_language = language;
        if (std::find(opts.allowed_languages.begin(), opts.allowed_languages.end(), language) ==
            opts.allowed_languages.end()) {
            opts.allowed_languages.push_back(language);
        }
    }
    if (!mwe_type.empty()) opts.default_mwe_type = mwe_type_from_string(mwe_type);
    return opts;
}

const CorpusEntry* find_corpus_entry(const RunConfig& cfg, const std::string& name_or_path) {
    for (const auto& e : cfg.corpora) {
        if (e.name == name_or_path || e.path == name_or_path) return &e;
    }
    return nullptr;
}

corpus::LoadResult load_configured_corpus(const RunConfig& cfg, const std::string& name_or_path) {
    if (const CorpusEntry* e = find_corpus_entry(cfg, name_or_path)) {
        return corpus::load_corpus(e->path, e->format, load_options_from(&cfg, "", ""));
    }
    if (!fs::exists(name_or_path)) {
        throw ConfigError("corpus '" + name_or_path + "' not in config and not a file");
    }
    return corpus::load_corpus(name_or_path, CorpusFormat::canonical_jsonl,
                               load_options_from(&cfg, "", ""));
}

std::string curve_stem(const metrics::LayerCurve& c) {
    return util::sanitize_filename(c.model_id + "_" + to_string(c.task_tag) + "_" +
                                   to_string(c.mwe_type) + "_" + to_string(c.metric_kind));
}

struct IngestArgs {
    std::string config_path, in_path, format = "canonical_jsonl", out_path, errors_path;
    std::string language, mwe_type;
    std::size_t balance = 0;
    std::uint32_t seed = 0;
    bool seed_set = false;
};

int cmd_ingest(const IngestArgs& a) {
    std::optional<RunConfig> cfg;
    if (!a.config_path.empty()) cfg = load_run_config(a.config_path);

    const auto opts = load_options_from(cfg ? &*cfg : nullptr, a.language, a.mwe_type);
    auto loaded = corpus::load_corpus(a.in_path, corpus_format_from_string(a.format), opts);

    std::uint32_t seed = a.seed_set ? a.seed : (cfg ? cfg->seed : 0);
    corpus::Corpus result = loaded.corpus;
    if (a.balance > 0) {
        result = corpus::balance_corpus(result, a.balance, seed, &loaded.warnings);
    }

    const auto converted = corpus::convert_corpus(result, CorpusFormat::canonical_jsonl);
    util::write_file(a.out_path, converted.bytes);

    const std::string errors_path =
        a.errors_path.empty() ? a.out_path + ".errors.jsonl" : a.errors_path;
    std::string errors;
    for (const auto& e : loaded.errors) {
        json j;
        j["record_id"] = e.record_id;
        j["message"] = e.message;
        errors += j.dump() + "\n";
    }
    util::write_file(errors_path, errors);

    json summary;
    summary["instances"] = result.instances.size();
    summary["rejected"] = loaded.errors.size();
    summary["warnings"] = loaded.warnings;
    summary["out"] = a.out_path;
    summary["errors_report"] = errors_path;
    summary["mwe_type_counts"] = result.metadata.mwe_type_counts;
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

struct ExtractArgs {
    std::string config_path, corpus, model, archive_dir;
    std::size_t balance = 0;
    std::uint32_t seed = 0;
    bool seed_set = false;
    int workers = 1;
};

int cmd_extract(const ExtractArgs& a) {
    const RunConfig cfg = load_run_config(a.config_path);
    auto loaded = load_configured_corpus(cfg, a.corpus);
    corpus::Corpus c = loaded.corpus;

    const std::uint32_t seed = a.seed_set ? a.seed : cfg.seed;
    std::vector<std::string> warnings = loaded.warnings;
    if (a.balance > 0) c = corpus::balance_corpus(c, a.balance, seed, &warnings);

    const auto result = run_extraction(c, cfg, a.model, a.workers);

    attnio::ArchiveInfo info;
    info.model_id = a.model;
    info.task_tag = cfg.models.at(a.model).task_tag;
    if (const CorpusEntry* e = find_corpus_entry(cfg, a.corpus)) {
        info.corpus_path = e->path;
    } else {
        info.corpus_path = a.corpus;
    }
    info.corpus_hash = file_hash(info.corpus_path);
    attnio::write_archive(result.items, a.archive_dir, info);
    util::write_file((fs::path(a.archive_dir) / "alignment_report.jsonl").string(),
                     alignment_report_to_jsonl(result.report));

    std::size_t skipped = 0;
    for (const auto& e : result.report) {
        if (e.skipped_reason) ++skipped;
    }
    json summary;
    summary["archive"] = a.archive_dir;
    summary["model"] = a.model;
    summary["archived"] = result.items.size();
    summary["skipped"] = skipped;
    summary["warnings"] = warnings;
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

struct AnalyzeArgs {
    std::string config_path, archive_dir, metric = "context_to_mwe", out_dir, corpus_override;
    bool renormalize = false;
};

int cmd_analyze(const AnalyzeArgs& a) {
    const RunConfig cfg = load_run_config(a.config_path);
    const auto archive = attnio::read_archive(a.archive_dir);

    const std::string corpus_path =
        a.corpus_override.empty() ? archive.info.corpus_path : a.corpus_override;
    if (corpus_path.empty()) {
        throw ConfigError("archive manifest has no corpus_path; pass --corpus");
    }
    auto loaded = load_configured_corpus(cfg, corpus_path);

    std::vector<std::string> warnings = loaded.warnings;
    if (a.corpus_override.empty() && !archive.info.corpus_hash.empty() &&
        fs::exists(corpus_path) && file_hash(corpus_path) != archive.info.corpus_hash) {
        warnings.push_back("corpus file changed since extraction (hash mismatch)");
    }

    metrics::MetricPolicy policy = cfg.metric_policy;
    if (a.renormalize) policy.renormalize_over_nonspecial = true;

    const MetricKind kind = metric_kind_from_string(a.metric);
    const auto result = analyze_items(archive.items, loaded.corpus, kind, policy,
                                      cfg.min_overlap_chars, archive.info.model_id,
                                      archive.info.task_tag);

    const std::string out_dir = a.out_dir.empty() ? cfg.output_dir : a.out_dir;
    fs::create_directories(out_dir);
    json summary;
    summary["archive"] = a.archive_dir;
    summary["metric"] = a.metric;
    summary["warnings"] = warnings;
    json curve_files = json::array();
    for (const auto& curve : result.curves) {
        const std::string stem = "curve_" + curve_stem(curve);
        util::write_file((fs::path(out_dir) / (stem + ".json")).string(),
                         metrics::curve_to_json(curve));
        util::write_file((fs::path(out_dir) / (stem + ".csv")).string(),
                         metrics::curve_to_csv(curve));
        curve_files.push_back(stem + ".json");
    }
    json diag;
    diag["special_token_mass"] = result.special_mass;
    diag["uniform_baseline"] = result.uniform_baseline;
    diag["renormalized"] = policy.renormalize_over_nonspecial;
    diag["skipped"] = json::array();
    for (const auto& s : result.skipped) {
        json e;
        e["instance_id"] = s.instance_id;
        e["reason"] = s.skipped_reason ? *s.skipped_reason : "";
        diag["skipped"].push_back(e);
    }
    const std::string diag_name = "diagnostics_" + util::sanitize_filename(a.metric) + "_" +
                                  util::sanitize_filename(archive.info.model_id) + ".json";
    util::write_file((fs::path(out_dir) / diag_name).string(), diag.dump(2) + "\n");
    summary["curves"] = curve_files;
    summary["diagnostics"] = diag_name;
    summary["out_dir"] = out_dir;
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

struct CompareArgs {
    std::string baseline_path, tuned_path, out_dir = ".";
    int top_k = 3;
};

int cmd_compare(const CompareArgs& a) {
    const auto baseline = metrics::curve_from_json(util::read_file(a.baseline_path));
    const auto tuned = metrics::curve_from_json(util::read_file(a.tuned_path));
    const auto result = metrics::compare(tuned, baseline);

    fs::create_directories(a.out_dir);
    const std::string stem = util::sanitize_filename(
        tuned.model_id + "_vs_" + baseline.model_id + "_" + to_string(tuned.mwe_type) + "_" +
        to_string(tuned.metric_kind));
    util::write_file((fs::path(a.out_dir) / ("comparison_" + stem + ".json")).string(),
                     metrics::comparison_to_json(result));
    util::write_file((fs::path(a.out_dir) / ("comparison_" + stem + ".csv")).string(),
                     metrics::comparison_to_csv(result));

    const int k = std::min<int>(a.top_k, static_cast<int>(tuned.values.size()));
    const auto topk_tuned = metrics::top_k(tuned, k);
    const auto topk_base = metrics::top_k(baseline, k);
    util::write_file((fs::path(a.out_dir) / ("topk_" + curve_stem(tuned) + ".csv")).string(),
                     metrics::topk_to_csv(topk_tuned));
    util::write_file((fs::path(a.out_dir) / ("topk_" + curve_stem(baseline) + ".csv")).string(),
                     metrics::topk_to_csv(topk_base));

    json summary;
    summary["comparison"] = "comparison_" + stem + ".json";
    summary["deltas"] = result.deltas;
    json t = json::array();
    for (const auto& e : topk_tuned.entries) {
        json je;
        je["label"] = e.label;
        je["layer"] = e.layer;
        je["zone"] = to_string(e.zone);
        t.push_back(je);
    }
    summary["topk_tuned"] = t;
    summary["out_dir"] = a.out_dir;
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

struct FinetuneArgs {
    std::string config_path, task, base_model, language = "en";
    std::size_t train_size = 0;
    int epochs = -1;
    std::uint32_t seed = 0;
    bool seed_set = false;
    double learning_rate = 0.0;
    std::size_t batch_size = 0;
    int freeze_layers = 0;
};

int cmd_finetune(const FinetuneArgs& a) {
    const RunConfig cfg = load_run_config(a.config_path);
    const TaskTag task = task_tag_from_string(a.task);
    const auto task_it = cfg.tasks.find(a.task);
    if (task_it == cfg.tasks.end()) {
        throw ConfigError("task '" + a.task + "' not configured under tasks.*");
    }
    const auto model_it = cfg.models.find(a.base_model);
    if (model_it == cfg.models.end()) {
        throw ConfigError("base model '" + a.base_model + "' not found in config registry");
    }
    const ModelEntry& base_entry = model_it->second;

    finetune::FinetuneConfig fc = finetune::FinetuneConfig::for_task(task);
    fc.seed = a.seed_set ? a.seed : cfg.seed;
    if (a.epochs >= 0) fc.epochs = a.epochs;
    if (a.learning_rate > 0.0) fc.learning_rate = a.learning_rate;
    if (a.batch_size > 0) fc.batch_size = a.batch_size;
    fc.freeze_layers = a.freeze_layers;

    finetune::SplitSizes sizes = task_it->second.sizes;
    if (a.train_size > 0) sizes.train = a.train_size;
    fc.train_size = sizes.train;

    const auto dataset =
        finetune::prepare_task_dataset(task, a.language, task_it->second.source, sizes, fc.seed);

    toyenc::ToyEncoder base = [&]() {
        if (base_entry.kind == "toy_random") return toyenc::ToyEncoder(base_entry.toy);
        if (base_entry.kind == "toy") return toyenc::load_checkpoint(base_entry.checkpoint).encoder;
        throw ConfigError("base model must be a toy checkpoint; external models cannot be "
                          "fine-tuned in-process");
    }();

    auto result = finetune::train(fc, base, a.base_model, dataset);

    fs::create_directories(cfg.checkpoint_dir);
    const std::string ckpt_path =
        (fs::path(cfg.checkpoint_dir) /
         (util::sanitize_filename(result.record.model_id) + ".mwetoy"))
            .string();
    toyenc::save_checkpoint(ckpt_path, result.record.model_id, result.encoder, &result.head);
    finetune::append_registry(cfg.registry, result.record);

    json summary = json::parse(result.record.to_json());
    summary["checkpoint"] = ckpt_path;
    summary["registry"] = cfg.registry;
    summary["majority_baseline_f1"] =
        finetune::majority_baseline_f1(dataset, fc.f1_average);
    summary["dataset_warnings"] = dataset.warnings;
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

struct ReportArgs {
    std::string config_path, in_dir, out_dir;
};

int cmd_report(const ReportArgs& a) {
    const RunConfig cfg = load_run_config(a.config_path);
    const std::string out_dir = a.out_dir.empty()
                                    ? (fs::path(cfg.output_dir) / "report").string()
                                    : a.out_dir;

    std::vector<std::string> curve_files, comparison_files;
    for (const auto& entry : fs::recursive_directory_iterator(a.in_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.ends_with(".json") && util::starts_with(name, "curve_")) {
            curve_files.push_back(entry.path().string());
        } else if (name.ends_with(".json") && util::starts_with(name, "comparison_")) {
            comparison_files.push_back(entry.path().string());
        }
    }
    std::sort(curve_files.begin(), curve_files.end());
    std::sort(comparison_files.begin(), comparison_files.end());
    if (curve_files.empty() && comparison_files.empty()) {
        throw Error("no curve_*.json or comparison_*.json files under " + a.in_dir);
    }

    report::ReportBundle bundle;
    std::set<std::string> model_ids;
    for (const auto& f : curve_files) {
        auto curve = metrics::curve_from_json(util::read_file(f));
        model_ids.insert(curve.model_id);
        const int k = std::min<int>(3, static_cast<int>(curve.values.size()));
        bundle.topk.push_back({curve.model_id + " " + to_string(curve.task_tag) + " " +
                                   to_string(curve.mwe_type) + " " + to_string(curve.metric_kind),
                               metrics::top_k(curve, k)});
        bundle.curves.push_back(std::move(curve));
    }
    for (const auto& f : comparison_files) {
        auto cmp = metrics::comparison_from_json(util::read_file(f));
        model_ids.insert(cmp.baseline.model_id);
        model_ids.insert(cmp.tuned.model_id);
        bundle.comparisons.push_back(std::move(cmp));
    }

    std::vector<std::uint64_t> corpus_hashes;
    for (const auto& e : cfg.corpora) {
        corpus_hashes.push_back(util::fnv1a64(util::read_file(e.path)));
    }
    bundle.provenance.corpus_hash =
        corpus_hashes.empty()
            ? "none"
            : util::to_hex(util::fnv1a64(corpus_hashes.data(),
                                         corpus_hashes.size() * sizeof(std::uint64_t)));
    bundle.provenance.config_hash = file_hash(cfg.path);
    bundle.provenance.model_ids.assign(model_ids.begin(), model_ids.end());
    bundle.provenance.timestamp = now_utc_iso8601();

    report::write_report(bundle, out_dir);

    json summary;
    summary["report"] = out_dir;
    summary["curves"] = bundle.curves.size();
    summary["comparisons"] = bundle.comparisons.size();
    summary["topk_tables"] = bundle.topk.size();
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

// ---- dispatch ------------------------------------------------------------------

int run(const std::vector<std::string>& args) {
    CLI::App app{"layer-wise attention analysis for annotated multiword-expression spans"};
    app.require_subcommand(1);

    IngestArgs ingest;
    auto* ing = app.add_subcommand("ingest", "convert a corpus to canonical JSONL");
    ing->add_option("--in", ingest.in_path, "input corpus file")->required();
    ing->add_option("--format", ingest.format, "canonical_jsonl | bio | tsv");
    ing->add_option("--out", ingest.out_path, "canonical JSONL output")->required();
    ing->add_option("--errors", ingest.errors_path, "error report path (JSONL)");
    ing->add_option("--config", ingest.config_path, "run config (for language set)");
    ing->add_option("--language", ingest.language, "default language for formats without one");
    ing->add_option("--mwe-type", ingest.mwe_type, "default MWE type (idiom|msu)");
    ing->add_option("--balance", ingest.balance, "seeded uniform subsample to N instances");
    ing->add_option("--seed", ingest.seed, "sampling seed")->each([&](const std::string&) {
        ingest.seed_set = true;
    });

    ExtractArgs extract;
    auto* ext = app.add_subcommand("extract", "run a model over a corpus and dump a tensor archive");
    ext->add_option("--config", extract.config_path, "run config")->required();
    ext->add_option("--corpus", extract.corpus, "corpus name from config, or a file path")
        ->required();
    ext->add_option("--model", extract.model, "model id from config")->required();
    ext->add_option("--dump-archive", extract.archive_dir, "output archive directory")->required();
    ext->add_option("--balance", extract.balance, "seeded uniform subsample to N instances");
    ext->add_option("--seed", extract.seed, "sampling seed")->each([&](const std::string&) {
        extract.seed_set = true;
    });
    ext->add_option("--workers", extract.workers, "parallel extraction workers")
        ->check(CLI::Range(1, 64));

    AnalyzeArgs analyze;
    auto* ana = app.add_subcommand("analyze", "compute layer curves from a tensor archive");
    ana->add_option("--config", analyze.config_path, "run config")->required();
    ana->add_option("--from-archive", analyze.archive_dir, "tensor archive directory")->required();
    ana->add_option("--metric", analyze.metric, "context_to_mwe | within_mwe");
    ana->add_option("--out-dir", analyze.out_dir, "output directory (default: config output_dir)");
    ana->add_option("--corpus", analyze.corpus_override, "override the corpus recorded in the archive");
    ana->add_flag("--renormalize", analyze.renormalize,
                  "renormalize rows over non-special tokens");

    CompareArgs compare;
    auto* cmp = app.add_subcommand("compare", "deltas and top-k tables for two curves");
    cmp->add_option("--baseline", compare.baseline_path, "baseline curve JSON")->required();
    cmp->add_option("--tuned", compare.tuned_path, "tuned curve JSON")->required();
    cmp->add_option("--out-dir", compare.out_dir, "output directory");
    cmp->add_option("--top-k", compare.top_k, "ranking depth")->check(CLI::Range(1, 64));

    FinetuneArgs finetune_args;
    auto* fin = app.add_subcommand("finetune", "fine-tune a toy base model on a configured task");
    fin->add_option("--config", finetune_args.config_path, "run config")->required();
    fin->add_option("--task", finetune_args.task, "deprel | pos | ner | topic")->required();
    fin->add_option("--base", finetune_args.base_model, "base model id from config")->required();
    fin->add_option("--language", finetune_args.language, "dataset language tag");
    fin->add_option("--train-size", finetune_args.train_size, "override configured train size");
    fin->add_option("--epochs", finetune_args.epochs, "training epochs");
    fin->add_option("--seed", finetune_args.seed, "training seed")->each([&](const std::string&) {
        finetune_args.seed_set = true;
    });
    fin->add_option("--learning-rate", finetune_args.learning_rate, "Adam learning rate");
    fin->add_option("--batch-size", finetune_args.batch_size, "batch size");
    fin->add_option("--freeze-layers", finetune_args.freeze_layers,
                    "freeze the N bottom encoder layers");

    ReportArgs report_args;
    auto* rep = app.add_subcommand("report", "render curves, deltas and top-k tables");
    rep->add_option("--config", report_args.config_path, "run config")->required();
    rep->add_option("--in", report_args.in_dir, "directory with analyze/compare outputs")
        ->required();
    rep->add_option("--out", report_args.out_dir, "report output directory");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        json err;
        err["error"] = {{"kind", "config"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return kExitConfig;
    }

    try {
        if (ing->parsed()) return cmd_ingest(ingest);
        if (ext->parsed()) return cmd_extract(extract);
        if (ana->parsed()) return cmd_analyze(analyze);
        if (cmp->parsed()) return cmd_compare(compare);
        if (fin->parsed()) return cmd_finetune(finetune_args);
        if (rep->parsed()) return cmd_report(report_args);
        throw ConfigError("no subcommand given");
    } catch (const ConfigError& e) {
        json err;
        err["error"] = {{"kind", "config"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        json err;
        err["error"] = {{"kind", "runtime"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return kExitRuntime;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace mweattn::cli
