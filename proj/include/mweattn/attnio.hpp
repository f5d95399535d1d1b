#ifndef MWEATTN_ATTNIO_HPP_
#define MWEATTN_ATTNIO_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "mweattn/align.hpp"
#include "mweattn/types.hpp"

namespace mweattn::attnio {

// Per-head attention for one input: L x H x T x T, rows (fixed l,h,q)
// sum to 1 within 1e-4.
struct RawAttention {
    int L = 0;
    int H = 0;
    int T = 0;
    std::vector<float> values;  // row-major [l][h][q][k]

    float& at(int l, int h, int q, int k) {
        return values[static_cast<std::size_t>(((l * H + h) * T + q)) * T + k];
    }
    float at(int l, int h, int q, int k) const {
        return values[static_cast<std::size_t>(((l * H + h) * T + q)) * T + k];
    }
    static RawAttention zeros(int L, int H, int T);
};

// Head-averaged attention: L x T x T.
struct AttentionStack {
    int L = 0;
    int T = 0;
    std::vector<float> values;  // row-major [l][q][k]

    float& at(int l, int q, int k) {
        return values[static_cast<std::size_t>((l * T + q)) * T + k];
    }
    float at(int l, int q, int k) const {
        return values[static_cast<std::size_t>((l * T + q)) * T + k];
    }
    const float* layer(int l) const {
        return values.data() + static_cast<std::size_t>(l) * T * T;
    }
    static AttentionStack zeros(int L, int T);
};

// Inference backend contract. Any implementation qualifies as long as
// tokenize() yields character offsets and attend() yields L x H x T x T
// attention probabilities with tokenize(text).size() == attend(text).T.
class ModelRunner {
public:
    virtual ~ModelRunner() = default;
    virtual const std::string& model_id() const = 0;
    virtual int layer_count() const = 0;
    virtual int head_count() const = 0;
    virtual int max_len() const = 0;
    virtual align::TokenizedSentence tokenize(const std::string& text) const = 0;
    virtual RawAttention attend(const std::string& text) const = 0;
};

// Elementwise mean over heads per layer. Throws on H == 0.
AttentionStack head_average(const RawAttention& raw);

struct RowViolation {
    std::vector<int> index;  // leading indices of the row (e.g. {l, h, q})
    double row_sum = 0.0;
};

// Report-only row-stochasticity check: every row with |sum - 1| > tol.
std::vector<RowViolation> validate_rows(const RawAttention& raw, double tol);
std::vector<RowViolation> validate_rows(const AttentionStack& stack, double tol);

// ---- tensor archive ---------------------------------------------------------
// Directory with manifest.json plus one little-endian float32 file per
// instance, decoupling analysis from inference.

struct ArchiveItem {
    std::string instance_id;
    align::TokenizedSentence tok;
    AttentionStack stack;
};

struct ArchiveInfo {
    std::string model_id;
    TaskTag task_tag = TaskTag::pretrained;
    std::string corpus_path;   // corpus the tensors were extracted from
    std::string corpus_hash;   // fnv1a64 of the corpus file, hex
};

// Writes items (sorted by instance id) and returns the manifest JSON text.
// Tensor payloads round-trip byte-exactly; checksums are stored and
// verified on read.
std::string write_archive(const std::vector<ArchiveItem>& items, const std::string& dir,
                          const ArchiveInfo& info = {});

struct Archive {
    ArchiveInfo info;
    std::vector<ArchiveItem> items;
};

// Throws on checksum mismatch or a missing tensor file.
Archive read_archive(const std::string& dir);

}  // namespace mweattn::attnio

#endif  // MWEATTN_ATTNIO_HPP_
