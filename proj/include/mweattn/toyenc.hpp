#ifndef MWEATTN_TOYENC_HPP_
#define MWEATTN_TOYENC_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mweattn/attnio.hpp"
#include "mweattn/types.hpp"

namespace mweattn::toyenc {

// Tiny trainable BERT-style encoder. Everything is seed-deterministic:
// initialization, tokenization and training use explicit algorithms on top
// of mt19937, so the same seed gives bit-identical results everywhere.
// It exists so the pipeline and the fine-tuning harness can be exercised
// end to end without a full-scale model; real checkpoints enter the
// pipeline through tensor archives instead.

struct ToyConfig {
    int layers = 2;
    int heads = 2;
    int d_model = 32;
    int d_ff = 64;
    int vocab_size = 512;
    int max_len = 64;
    int piece_len = 4;  // max code points per subword piece
    std::uint32_t seed = 1;
};

// Parameter tensor with gradient and Adam state.
struct Tensor {
    std::size_t rows = 0, cols = 0;
    std::vector<double> w, g, m, v;

    void init(std::size_t r, std::size_t c) {
        rows = r;
        cols = c;
        w.assign(r * c, 0.0);
        g.assign(r * c, 0.0);
        m.assign(r * c, 0.0);
        v.assign(r * c, 0.0);
    }
    double& at(std::size_t i, std::size_t j) { return w[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return w[i * cols + j]; }
};

struct AdamParams {
    double lr = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void adam_update(Tensor& t, const AdamParams& p, int step);

// Deterministic hash-vocabulary subword tokenizer with code point offsets.
// [CLS] opens, [SEP] closes; words longer than piece_len code points are
// chunked, continuations carry a "##" prefix.
class ToyTokenizer {
public:
    explicit ToyTokenizer(const ToyConfig& cfg) : cfg_(cfg) {}

    align::TokenizedSentence tokenize(const std::string& text) const;

    // Chunks one pre-tokenized word (no punctuation splitting); used by the
    // fine-tuning harness to keep word/label alignment.
    std::vector<std::string> pieces_for_word(const std::string& word) const;

    std::vector<int> token_ids(const align::TokenizedSentence& tok) const;
    int id_for_token(const std::string& token) const;

    static constexpr int kClsId = 0;
    static constexpr int kSepId = 1;

private:
    ToyConfig cfg_;
};

struct LayerWeights {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_g, ln1_b;
    Tensor w1, b1, w2, b2;
    Tensor ln2_g, ln2_b;
};

class ToyEncoder {
public:
    explicit ToyEncoder(const ToyConfig& cfg);

    const ToyConfig& config() const { return cfg_; }

    // Forward intermediates kept for backward.
    struct LayerTrace {
        std::vector<double> input, q, k, v;
        std::vector<double> probs;  // H x T x T
        std::vector<double> ctx, r1, x1_hat, x1, f1, a1, r2, x2_hat, x2;
        std::vector<double> inv_std1, inv_std2;  // per row
    };
    struct Trace {
        std::vector<int> ids;
        int T = 0;
        std::vector<double> x0;
        std::vector<LayerTrace> layers;
    };

    // Final hidden states, T x d_model row-major. Optionally records the
    // trace for backward and/or the per-layer per-head attention.
    std::vector<double> forward(const std::vector<int>& ids, Trace* trace = nullptr,
                                attnio::RawAttention* attn = nullptr) const;

    // Accumulates parameter gradients; d_hidden is dLoss/dHidden (T x d_model).
    // Layers below freeze_layers still propagate but skip their own grads.
    void backward(const Trace& trace, const std::vector<double>& d_hidden,
                  int freeze_layers = 0);

    void zero_grad();
    void adam_step(const AdamParams& p, int step, int freeze_layers = 0);

    void for_each_tensor(const std::function<void(const std::string&, Tensor&)>& fn);
    void for_each_tensor(const std::function<void(const std::string&, const Tensor&)>& fn) const;

    // Hash over all weights; equal fingerprints mean identical parameters.
    std::uint64_t fingerprint() const;

private:
    ToyConfig cfg_;
    Tensor tok_emb_, pos_emb_;
    std::vector<LayerWeights> layers_;
};

// Task head attached during fine-tuning: a single linear layer over token
// states (token classification) or over the [CLS] state (sequence
// classification).
struct HeadTensors {
    Tensor w;  // d_model x n_labels
    Tensor b;  // 1 x n_labels
    std::vector<std::string> labels;
    TaskTag task = TaskTag::pos;
    bool sequence_level = false;
};

// ---- checkpoints -------------------------------------------------------------

struct Checkpoint {
    std::string model_id;
    ToyConfig config;
    ToyEncoder encoder;
    std::optional<HeadTensors> head;
};

void save_checkpoint(const std::string& path, const std::string& model_id,
                     const ToyEncoder& encoder, const HeadTensors* head = nullptr);
Checkpoint load_checkpoint(const std::string& path);

// ---- runner ------------------------------------------------------------------

class ToyRunner : public attnio::ModelRunner {
public:
    ToyRunner(std::string model_id, ToyEncoder encoder);

    const std::string& model_id() const override { return model_id_; }
    int layer_count() const override { return encoder_.config().layers; }
    int head_count() const override { return encoder_.config().heads; }
    int max_len() const override { return encoder_.config().max_len; }
    align::TokenizedSentence tokenize(const std::string& text) const override;
    attnio::RawAttention attend(const std::string& text) const override;

    const ToyEncoder& encoder() const { return encoder_; }

private:
    std::string model_id_;
    ToyEncoder encoder_;
    ToyTokenizer tokenizer_;
};

}  // namespace mweattn::toyenc

#endif  // MWEATTN_TOYENC_HPP_
