#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mweattn/cli.hpp"
#include "mweattn/toyenc.hpp"
#include "mweattn/report.hpp"
#include "mweattn/util.hpp"

using namespace mweattn;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;
const std::string kFixtureDir = MWEATTN_FIXTURE_DIR;

struct Workspace {
    fs::path root;
    std::string config_path;

    explicit Workspace(const char* tag) {
        root = fs::temp_directory_path() /
               (std::string("mweattn_cli_") + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(root);
        fs::create_directories(root);

        json cfg;
        cfg["seed"] = 7;
        cfg["output_dir"] = (root / "out").string();
        cfg["registry"] = (root / "registry.jsonl").string();
        cfg["checkpoint_dir"] = (root / "ckpt").string();
        cfg["corpora"] = json::array({{{"name", "fixture"},
                                       {"path", kFixtureDir + "/corpus_20.jsonl"},
                                       {"format", "canonical_jsonl"}}});
        cfg["models"] = {
            {"toy-base",
             {{"kind", "toy_random"}, {"task_tag", "pretrained"}, {"seed", 1}, {"layers", 2},
              {"heads", 2}, {"d_model", 32}, {"d_ff", 64}, {"vocab_size", 512}, {"max_len", 64}}},
            {"bert-large-external",
             {{"kind", "external"}, {"task_tag", "pretrained"}, {"layers", 24}, {"heads", 16},
              {"max_len", 512}}},
        };
        cfg["tasks"] = {
            {"pos",
             {{"source", kFixtureDir + "/ud_fixture.conllu"}, {"train", 40}, {"dev", 5},
              {"test", 5}}},
        };
        config_path = (root / "config.json").string();
        util::write_file(config_path, cfg.dump(2));
    }
    ~Workspace() { fs::remove_all(root); }

    std::string path(const std::string& rel) const { return (root / rel).string(); }
};

int run_cli(const std::vector<std::string>& args) { return cli::run(args); }

}  // namespace

TEST_CASE("cli: bad config exits with the config code") {
    Workspace ws("badcfg");
    util::write_file(ws.path("broken.json"), "{ not json");
    CHECK(run_cli({"analyze", "--config", ws.path("broken.json"), "--from-archive", "x"}) ==
          cli::kExitConfig);

    // Field-level validation: nonexistent corpus path.
    json cfg = json::parse(util::read_file(ws.config_path));
    cfg["corpora"][0]["path"] = ws.path("missing.jsonl");
    util::write_file(ws.path("bad_paths.json"), cfg.dump());
    try {
        cli::load_run_config(ws.path("bad_paths.json"));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("corpora[0].path") != std::string::npos);
    }
}

TEST_CASE("cli: unknown flags and missing subcommand are config errors") {
    CHECK(run_cli({}) == cli::kExitConfig);
    CHECK(run_cli({"extract", "--nonsense"}) == cli::kExitConfig);
}

TEST_CASE("cli: external models cannot run in-process") {
    Workspace ws("external");
    CHECK(run_cli({"extract", "--config", ws.config_path, "--corpus", "fixture", "--model",
                   "bert-large-external", "--dump-archive", ws.path("arch")}) == cli::kExitConfig);
}

TEST_CASE("cli: ingest writes canonical output and an error report") {
    Workspace ws("ingest");
    CHECK(run_cli({"ingest", "--in", kFixtureDir + "/corpus_bio.bio", "--format", "bio", "--out",
                   ws.path("canonical.jsonl")}) == cli::kExitOk);
    CHECK(fs::exists(ws.path("canonical.jsonl")));
    CHECK(fs::exists(ws.path("canonical.jsonl.errors.jsonl")));
    const auto lines = util::read_lines(ws.path("canonical.jsonl"));
    CHECK(lines.size() == 3);

    // Balanced subsetting is honored.
    CHECK(run_cli({"ingest", "--in", kFixtureDir + "/corpus_20.jsonl", "--out",
                   ws.path("balanced.jsonl"), "--balance", "6", "--seed", "3"}) == cli::kExitOk);
    CHECK(util::read_lines(ws.path("balanced.jsonl")).size() == 6);
}

TEST_CASE("cli: extract -> analyze -> compare -> report round trip") {
    Workspace ws("pipeline");

    REQUIRE(run_cli({"extract", "--config", ws.config_path, "--corpus", "fixture", "--model",
                     "toy-base", "--dump-archive", ws.path("arch")}) == cli::kExitOk);
    CHECK(fs::exists(ws.path("arch/manifest.json")));
    CHECK(fs::exists(ws.path("arch/alignment_report.jsonl")));

    // The truncation fixture instance is skipped and reported.
    const auto report_lines = util::read_lines(ws.path("arch/alignment_report.jsonl"));
    CHECK(report_lines.size() == 20);
    bool truncated = false;
    for (const auto& line : report_lines) {
        if (line.find("en-201") != std::string::npos &&
            line.find("truncated") != std::string::npos) {
            truncated = true;
        }
    }
    CHECK(truncated);

    REQUIRE(run_cli({"analyze", "--config", ws.config_path, "--from-archive", ws.path("arch"),
                     "--metric", "context_to_mwe", "--out-dir", ws.path("out")}) == cli::kExitOk);
    const std::string idiom_curve = "curve_toy-base_pretrained_idiom_context_to_mwe.json";
    const std::string msu_curve = "curve_toy-base_pretrained_msu_context_to_mwe.json";
    REQUIRE(fs::exists(ws.path("out/" + idiom_curve)));
    REQUIRE(fs::exists(ws.path("out/" + msu_curve)));

    // Self-comparison has all-zero deltas and exits cleanly.
    REQUIRE(run_cli({"compare", "--baseline", ws.path("out/" + idiom_curve), "--tuned",
                     ws.path("out/" + idiom_curve), "--out-dir", ws.path("out")}) == cli::kExitOk);
    bool found_cmp = false;
    for (const auto& e : fs::directory_iterator(ws.path("out"))) {
        const auto name = e.path().filename().string();
        if (name.rfind("comparison_", 0) == 0 && name.ends_with(".json")) {
            found_cmp = true;
            const auto cmp = metrics::comparison_from_json(util::read_file(e.path().string()));
            for (double d : cmp.deltas) CHECK(d == 0.0);
        }
    }
    CHECK(found_cmp);

    REQUIRE(run_cli({"report", "--config", ws.config_path, "--in", ws.path("out"), "--out",
                     ws.path("report")}) == cli::kExitOk);
    CHECK(fs::exists(ws.path("report/report.md")));
    CHECK(fs::exists(ws.path("report/provenance.json")));
    bool have_curve_svg = false;
    for (const auto& e : fs::recursive_directory_iterator(ws.path("report"))) {
        if (e.path().extension() == ".svg") have_curve_svg = true;
    }
    CHECK(have_curve_svg);
}

TEST_CASE("cli: extraction is deterministic and worker-count independent") {
    Workspace ws("determinism");
    REQUIRE(run_cli({"extract", "--config", ws.config_path, "--corpus", "fixture", "--model",
                     "toy-base", "--dump-archive", ws.path("a1")}) == cli::kExitOk);
    REQUIRE(run_cli({"extract", "--config", ws.config_path, "--corpus", "fixture", "--model",
                     "toy-base", "--dump-archive", ws.path("a2"), "--workers", "4"}) ==
            cli::kExitOk);
    CHECK(util::read_file(ws.path("a1/manifest.json")) ==
          util::read_file(ws.path("a2/manifest.json")));
    // Tensor payloads byte-identical too.
    const auto m = json::parse(util::read_file(ws.path("a1/manifest.json")));
    for (const auto& e : m["entries"]) {
        const std::string f = e["file"].get<std::string>();
        CHECK(util::read_file(ws.path("a1/" + f)) == util::read_file(ws.path("a2/" + f)));
    }
}

TEST_CASE("pipeline composition: archive route equals the in-memory route") {
    Workspace ws("composition");
    const auto cfg = cli::load_run_config(ws.config_path);
    const auto loaded = corpus::load_corpus(kFixtureDir + "/corpus_20.jsonl",
                                            CorpusFormat::canonical_jsonl);

    // In-memory route.
    const auto extraction = cli::run_extraction(loaded.corpus, cfg, "toy-base", 1);
    const auto direct =
        cli::analyze_items(extraction.items, loaded.corpus, MetricKind::context_to_mwe,
                           cfg.metric_policy, cfg.min_overlap_chars, "toy-base",
                           TaskTag::pretrained);

    // Archive route.
    attnio::write_archive(extraction.items, ws.path("arch"),
                          {"toy-base", TaskTag::pretrained, "p", "h"});
    const auto archive = attnio::read_archive(ws.path("arch"));
    const auto via_archive =
        cli::analyze_items(archive.items, loaded.corpus, MetricKind::context_to_mwe,
                           cfg.metric_policy, cfg.min_overlap_chars, "toy-base",
                           TaskTag::pretrained);

    REQUIRE(direct.curves.size() == via_archive.curves.size());
    for (std::size_t i = 0; i < direct.curves.size(); ++i) {
        CHECK(direct.curves[i].values == via_archive.curves[i].values);
        CHECK(direct.curves[i].n_instances == via_archive.curves[i].n_instances);
        CHECK(direct.curves[i].n_skipped == via_archive.curves[i].n_skipped);
    }
}

TEST_CASE("cli: finetune trains, registers and reports above-baseline F1") {
    Workspace ws("finetune");
    REQUIRE(run_cli({"finetune", "--config", ws.config_path, "--task", "pos", "--base",
                     "toy-base", "--train-size", "40", "--epochs", "4", "--seed", "7"}) ==
            cli::kExitOk);
    const auto records = finetune::read_registry(ws.path("registry.jsonl"));
    REQUIRE(records.size() == 1);
    CHECK(records[0].model_id == "toy-base-pos-seed7");
    CHECK(records[0].f1 > 0.0);
    CHECK(fs::exists(ws.path("ckpt/toy-base-pos-seed7.mwetoy")));

    // The checkpoint can back a registered toy model for extraction.
    json cfg = json::parse(util::read_file(ws.config_path));
    cfg["models"]["toy-pos"] = {{"kind", "toy"},
                                {"task_tag", "pos"},
                                {"checkpoint", ws.path("ckpt/toy-base-pos-seed7.mwetoy")}};
    util::write_file(ws.config_path, cfg.dump(2));
    REQUIRE(run_cli({"extract", "--config", ws.config_path, "--corpus", "fixture", "--model",
                     "toy-pos", "--dump-archive", ws.path("arch_pos")}) == cli::kExitOk);
    const auto manifest = json::parse(util::read_file(ws.path("arch_pos/manifest.json")));
    CHECK(manifest["task_tag"] == "pos");
    CHECK(manifest["model_id"] == "toy-pos");

    // Pretrained vs fine-tuned end to end: the emitted deltas equal an
    // independent subtraction of the two curve files.
    REQUIRE(run_cli({"extract", "--config", ws.config_path, "--corpus", "fixture", "--model",
                     "toy-base", "--dump-archive", ws.path("arch_base")}) == cli::kExitOk);
    for (const char* arch : {"arch_base", "arch_pos"}) {
        REQUIRE(run_cli({"analyze", "--config", ws.config_path, "--from-archive", ws.path(arch),
                         "--metric", "context_to_mwe", "--out-dir", ws.path("out")}) ==
                cli::kExitOk);
    }
    const auto base_curve = metrics::curve_from_json(util::read_file(
        ws.path("out/curve_toy-base_pretrained_idiom_context_to_mwe.json")));
    const auto pos_curve = metrics::curve_from_json(
        util::read_file(ws.path("out/curve_toy-pos_pos_idiom_context_to_mwe.json")));
    REQUIRE(run_cli({"compare", "--baseline",
                     ws.path("out/curve_toy-base_pretrained_idiom_context_to_mwe.json"),
                     "--tuned", ws.path("out/curve_toy-pos_pos_idiom_context_to_mwe.json"),
                     "--out-dir", ws.path("cmp")}) == cli::kExitOk);
    bool checked_deltas = false;
    for (const auto& e : fs::directory_iterator(ws.path("cmp"))) {
        const auto name = e.path().filename().string();
        if (name.rfind("comparison_", 0) == 0 && name.ends_with(".json")) {
            const auto cmp = metrics::comparison_from_json(util::read_file(e.path().string()));
            REQUIRE(cmp.deltas.size() == base_curve.values.size());
            for (std::size_t l = 0; l < cmp.deltas.size(); ++l) {
                CHECK(cmp.deltas[l] == pos_curve.values[l] - base_curve.values[l]);
            }
            checked_deltas = true;
        }
    }
    CHECK(checked_deltas);
    // Fine-tuning actually moved the curve somewhere.
    bool moved = false;
    for (std::size_t l = 0; l < base_curve.values.size(); ++l) {
        if (base_curve.values[l] != pos_curve.values[l]) moved = true;
    }
    CHECK(moved);
}

TEST_CASE("cli: analyze on a missing archive is a runtime failure") {
    Workspace ws("missing");
    CHECK(run_cli({"analyze", "--config", ws.config_path, "--from-archive",
                   ws.path("nonexistent")}) == cli::kExitRuntime);
}

TEST_CASE("analyze: uniform stacks land on the emitted closed-form baseline") {
    Workspace ws("uniform");
    const auto cfg = cli::load_run_config(ws.config_path);
    const auto loaded = corpus::load_corpus(kFixtureDir + "/corpus_20.jsonl",
                                            CorpusFormat::canonical_jsonl);
    toyenc::ToyConfig tc;
    toyenc::ToyTokenizer tokenizer(tc);

    // Hand-built archive: every query row uniform over non-special columns.
    std::vector<attnio::ArchiveItem> items;
    std::map<std::string, std::pair<double, int>> expected;  // type -> (sum, n)
    for (const auto& inst : loaded.corpus.instances) {
        const auto tok = tokenizer.tokenize(inst.text);
        if (align::span_truncated(inst, tok)) continue;
        const auto alignment = align::align(inst, tok);
        std::vector<int> context;
        try {
            context = align::context_indices(tok, alignment);
        } catch (const align::ContextEmptyError&) {
            continue;
        }
        const int T = static_cast<int>(tok.size());
        int t_prime = 0;
        for (bool s : tok.is_special) {
            if (!s) ++t_prime;
        }
        attnio::ArchiveItem item;
        item.instance_id = inst.id;
        item.tok = tok;
        item.stack = attnio::AttentionStack::zeros(2, T);
        for (int l = 0; l < 2; ++l) {
            for (int q = 0; q < T; ++q) {
                for (int k = 0; k < T; ++k) {
                    if (!tok.is_special[static_cast<std::size_t>(k)]) {
                        item.stack.at(l, q, k) = 1.0f / static_cast<float>(t_prime);
                    }
                }
            }
        }
        items.push_back(std::move(item));
        auto& [sum, n] = expected[to_string(inst.mwe_type)];
        sum += 100.0 * static_cast<double>(alignment.token_indices.size()) / t_prime;
        n += 1;
    }
    REQUIRE(!items.empty());

    const auto result = cli::analyze_items(items, loaded.corpus, MetricKind::context_to_mwe,
                                           cfg.metric_policy, cfg.min_overlap_chars, "toy-base",
                                           TaskTag::pretrained);
    for (const auto& curve : result.curves) {
        const auto& [sum, n] = expected.at(to_string(curve.mwe_type));
        const double want = sum / n;
        for (double v : curve.values) {
            CHECK(v == doctest::Approx(want).epsilon(1e-4));  // float32 storage
        }
        // The emitted uniform baseline is the same number, computed exactly.
        CHECK(result.uniform_baseline.at(to_string(curve.mwe_type)) ==
              doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("analyze: single-token MWEs are skipped and counted for within_mwe") {
    Workspace ws("skips");
    const auto cfg = cli::load_run_config(ws.config_path);
    const auto loaded = corpus::load_corpus(kFixtureDir + "/corpus_20.jsonl",
                                            CorpusFormat::canonical_jsonl);
    const auto extraction = cli::run_extraction(loaded.corpus, cfg, "toy-base", 1);
    const auto within =
        cli::analyze_items(extraction.items, loaded.corpus, MetricKind::within_mwe,
                           cfg.metric_policy, cfg.min_overlap_chars, "toy-base",
                           TaskTag::pretrained);
    // en-106 maps "soon" to a single subword.
    bool msu_skip_counted = false;
    for (const auto& curve : within.curves) {
        if (curve.mwe_type == MweType::msu) msu_skip_counted = curve.n_skipped >= 1;
    }
    CHECK(msu_skip_counted);
    bool saw_en106 = false;
    for (const auto& s : within.skipped) {
        if (s.instance_id == "en-106") saw_en106 = true;
    }
    CHECK(saw_en106);
}
