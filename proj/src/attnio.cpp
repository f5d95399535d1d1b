#include "mweattn/attnio.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mweattn/util.hpp"

namespace mweattn::attnio {

using json = nlohmann::json;
namespace fs = std::filesystem;
namespace util = mweattn::util;

RawAttention RawAttention::zeros(int L, int H, int T) {
    RawAttention r;
    r.L = L;
    r.H = H;
    r.T = T;
    r.values.assign(static_cast<std::size_t>(L) * H * T * T, 0.0f);
    return r;
}

AttentionStack AttentionStack::zeros(int L, int T) {
    AttentionStack s;
    s.L = L;
    s.T = T;
    s.values.assign(static_cast<std::size_t>(L) * T * T, 0.0f);
    return s;
}

AttentionStack head_average(const RawAttention& raw) {
    if (raw.H <= 0) throw Error("head_average: head count must be positive");
    if (raw.L <= 0 || raw.T <= 0) throw Error("head_average: bad tensor shape");
    AttentionStack out = AttentionStack::zeros(raw.L, raw.T);
    const double inv_h = 1.0 / raw.H;
    for (int l = 0; l < raw.L; ++l) {
        for (int q = 0; q < raw.T; ++q) {
            for (int k = 0; k < raw.T; ++k) {
                double acc = 0.0;
                for (int h = 0; h < raw.H; ++h) acc += raw.at(l, h, q, k);
                out.at(l, q, k) = static_cast<float>(acc * inv_h);
            }
        }
    }
    return out;
}

namespace {

template <typename IndexFn>
std::vector<RowViolation> validate_rows_impl(const float* data, std::size_t n_rows, int T,
                                             double tol, IndexFn index_of) {
    std::vector<RowViolation> out;
    for (std::size_t r = 0; r < n_rows; ++r) {
        double sum = 0.0;
        const float* row = data + r * static_cast<std::size_t>(T);
        for (int k = 0; k < T; ++k) sum += row[k];
        if (std::abs(sum - 1.0) > tol) {
            out.push_back({index_of(r), sum});
        }
    }
    return out;
}

}  // namespace

std::vector<RowViolation> validate_rows(const RawAttention& raw, double tol) {
    const std::size_t n_rows = static_cast<std::size_t>(raw.L) * raw.H * raw.T;
    return validate_rows_impl(raw.values.data(), n_rows, raw.T, tol, [&](std::size_t r) {
        const int q = static_cast<int>(r % raw.T);
        const int h = static_cast<int>((r / raw.T) % raw.H);
        const int l = static_cast<int>(r / (static_cast<std::size_t>(raw.T) * raw.H));
        return std::vector<int>{l, h, q};
    });
}

std::vector<RowViolation> validate_rows(const AttentionStack& stack, double tol) {
    const std::size_t n_rows = static_cast<std::size_t>(stack.L) * stack.T;
    return validate_rows_impl(stack.values.data(), n_rows, stack.T, tol, [&](std::size_t r) {
        const int q = static_cast<int>(r % stack.T);
        const int l = static_cast<int>(r / stack.T);
        return std::vector<int>{l, q};
    });
}

namespace {

json tok_to_json(const align::TokenizedSentence& tok) {
    json j;
    j["tokens"] = tok.tokens;
    json offs = json::array();
    for (const auto& o : tok.offsets) {
        if (o) offs.push_back({o->first, o->second});
        else offs.push_back(nullptr);
    }
    j["offsets"] = offs;
    json spec = json::array();
    for (bool b : tok.is_special) spec.push_back(b);
    j["special"] = spec;
    return j;
}

align::TokenizedSentence tok_from_json(const json& j) {
    align::TokenizedSentence tok;
    tok.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& o : j.at("offsets")) {
        if (o.is_null()) {
            tok.offsets.push_back(std::nullopt);
        } else {
            tok.offsets.emplace_back(
                corpus::CharSpan{o[0].get<std::size_t>(), o[1].get<std::size_t>()});
        }
    }
    for (const auto& b : j.at("special")) tok.is_special.push_back(b.get<bool>());
    return tok;
}

std::string tensor_bytes(const AttentionStack& stack) {
    std::string bytes(stack.values.size() * sizeof(float), '\0');
    // Little-endian float32; byte layout matches in-memory floats on all
    // supported targets.
    std::memcpy(bytes.data(), stack.values.data(), bytes.size());
    return bytes;
}

}  // namespace

std::string write_archive(const std::vector<ArchiveItem>& items, const std::string& dir,
                          const ArchiveInfo& info) {
    fs::create_directories(dir);

    std::vector<const ArchiveItem*> ordered;
    ordered.reserve(items.size());
    for (const auto& it : items) ordered.push_back(&it);
    std::sort(ordered.begin(), ordered.end(), [](const ArchiveItem* a, const ArchiveItem* b) {
        return a->instance_id < b->instance_id;
    });

    json manifest;
    manifest["archive_version"] = 1;
    manifest["model_id"] = info.model_id;
    manifest["task_tag"] = to_string(info.task_tag);
    manifest["corpus_path"] = info.corpus_path;
    manifest["corpus_hash"] = info.corpus_hash;
    json entries = json::array();
    std::set<std::string> used_names;
    for (const ArchiveItem* it : ordered) {
        const std::string fname = util::sanitize_filename(it->instance_id) + ".f32";
        if (!used_names.insert(fname).second) {
            throw Error("archive filename collision for instance id '" + it->instance_id + "'");
        }
        const std::string bytes = tensor_bytes(it->stack);
        util::write_file((fs::path(dir) / fname).string(), bytes);

        json e;
        e["instance_id"] = it->instance_id;
        e["file"] = fname;
        e["shape"] = {it->stack.L, it->stack.T, it->stack.T};
        e["dtype"] = "f32";
        e["checksum"] = util::to_hex(util::fnv1a64(bytes.data(), bytes.size()));
        json t = tok_to_json(it->tok);
        e["tokens"] = t["tokens"];
        e["offsets"] = t["offsets"];
        e["special"] = t["special"];
        entries.push_back(std::move(e));
    }
    manifest["entries"] = std::move(entries);

    const std::string text = manifest.dump(2) + "\n";
    util::write_file((fs::path(dir) / "manifest.json").string(), text);
    return text;
}

Archive read_archive(const std::string& dir) {
    const fs::path root(dir);
    const std::string manifest_text = util::read_file((root / "manifest.json").string());
    json manifest;
    try {
        manifest = json::parse(manifest_text);
    } catch (const json::exception& e) {
        throw Error("bad manifest.json in " + dir + ": " + e.what());
    }

    Archive archive;
    archive.info.model_id = manifest.value("model_id", "");
    archive.info.task_tag = task_tag_from_string(manifest.value("task_tag", "pretrained"));
    archive.info.corpus_path = manifest.value("corpus_path", "");
    archive.info.corpus_hash = manifest.value("corpus_hash", "");

    for (const auto& e : manifest.at("entries")) {
        ArchiveItem item;
        item.instance_id = e.at("instance_id").get<std::string>();
        const std::string fname = e.at("file").get<std::string>();
        const fs::path tensor_path = root / fname;
        if (!fs::exists(tensor_path)) {
            throw Error("archive entry '" + item.instance_id + "': missing tensor file " + fname);
        }
        const std::string bytes = util::read_file(tensor_path.string());
        const std::string checksum = util::to_hex(util::fnv1a64(bytes.data(), bytes.size()));
        if (checksum != e.at("checksum").get<std::string>()) {
            throw Error("archive entry '" + item.instance_id + "': checksum mismatch for " + fname);
        }
        const auto shape = e.at("shape").get<std::vector<int>>();
        if (shape.size() != 3 || shape[1] != shape[2]) {
            throw Error("archive entry '" + item.instance_id + "': bad shape");
        }
        const std::size_t expect = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
        if (bytes.size() != expect * sizeof(float)) {
            throw Error("archive entry '" + item.instance_id + "': tensor size mismatch");
        }
        item.stack = AttentionStack::zeros(shape[0], shape[1]);
        std::memcpy(item.stack.values.data(), bytes.data(), bytes.size());
        item.tok = tok_from_json(e);
        archive.items.push_back(std::move(item));
    }
    return archive;
}

}  // namespace mweattn::attnio
