#include "mweattn/toyenc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mweattn/util.hpp"

namespace mweattn::toyenc {

using json = nlohmann::json;
namespace util = mweattn::util;

void adam_update(Tensor& t, const AdamParams& p, int step) {
    const double bc1 = 1.0 - std::pow(p.beta1, step);
    const double bc2 = 1.0 - std::pow(p.beta2, step);
    for (std::size_t i = 0; i < t.w.size(); ++i) {
        t.m[i] = p.beta1 * t.m[i] + (1.0 - p.beta1) * t.g[i];
        t.v[i] = p.beta2 * t.v[i] + (1.0 - p.beta2) * t.g[i] * t.g[i];
        const double mhat = t.m[i] / bc1;
        const double vhat = t.v[i] / bc2;
        t.w[i] -= p.lr * mhat / (std::sqrt(vhat) + p.eps);
    }
}

// ---- tokenizer ----------------------------------------------------------------

namespace {

bool is_ascii_punct(char c) {
    static const std::string punct = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
    return punct.find(c) != std::string::npos;
}

}  // namespace

std::vector<std::string> ToyTokenizer::pieces_for_word(const std::string& word) const {
    const auto starts = util::utf8_code_point_starts(word);
    const std::size_t n_cp = starts.size() - 1;
    std::vector<std::string> pieces;
    const std::size_t step = static_cast<std::size_t>(cfg_.piece_len);
    for (std::size_t cp = 0; cp < n_cp; cp += step) {
        const std::size_t end = std::min(cp + step, n_cp);
        std::string piece = util::utf8_substr(word, cp, end);
        if (cp > 0) piece = "##" + piece;
        pieces.push_back(std::move(piece));
    }
    return pieces;
}

align::TokenizedSentence ToyTokenizer::tokenize(const std::string& text) const {
    const auto starts = util::utf8_code_point_starts(text);
    const std::size_t n_cp = starts.size() - 1;

    struct Piece {
        std::string token;
        std::size_t start, end;
    };
    std::vector<Piece> pieces;

    auto chunk = [&](std::size_t s, std::size_t e, bool continuation_prefixes) {
        const std::size_t step = static_cast<std::size_t>(cfg_.piece_len);
        for (std::size_t cp = s; cp < e; cp += step) {
            const std::size_t pe = std::min(cp + step, e);
            std::string tok = util::utf8_substr(text, cp, pe);
            if (continuation_prefixes && cp > s) tok = "##" + tok;
            pieces.push_back({std::move(tok), cp, pe});
        }
    };

    std::size_t cp = 0;
    while (cp < n_cp) {
        while (cp < n_cp && util::is_ascii_space(text[starts[cp]])) ++cp;
        if (cp >= n_cp) break;
        std::size_t we = cp;
        while (we < n_cp && !util::is_ascii_space(text[starts[we]])) ++we;

        // Leading and trailing ASCII punctuation become single-char tokens.
        std::size_t core_s = cp;
        while (core_s < we && starts[core_s + 1] - starts[core_s] == 1 &&
               is_ascii_punct(text[starts[core_s]])) {
            ++core_s;
        }
        std::size_t core_e = we;
        while (core_e > core_s && starts[core_e] - starts[core_e - 1] == 1 &&
               is_ascii_punct(text[starts[core_e - 1]])) {
            --core_e;
        }
        for (std::size_t i = cp; i < core_s; ++i) chunk(i, i + 1, false);
        if (core_s < core_e) chunk(core_s, core_e, true);
        for (std::size_t i = core_e; i < we; ++i) chunk(i, i + 1, false);
        cp = we;
    }

    const std::size_t budget = static_cast<std::size_t>(std::max(cfg_.max_len - 2, 0));
    if (pieces.size() > budget) pieces.resize(budget);

    align::TokenizedSentence out;
    out.tokens.push_back("[CLS]");
    out.offsets.push_back(std::nullopt);
    out.is_special.push_back(true);
    for (auto& p : pieces) {
        out.tokens.push_back(std::move(p.token));
        out.offsets.emplace_back(corpus::CharSpan{p.start, p.end});
        out.is_special.push_back(false);
    }
    out.tokens.push_back("[SEP]");
    out.offsets.push_back(std::nullopt);
    out.is_special.push_back(true);
    return out;
}

int ToyTokenizer::id_for_token(const std::string& token) const {
    if (token == "[CLS]") return kClsId;
    if (token == "[SEP]") return kSepId;
    const std::uint64_t h = util::fnv1a64(token);
    return 2 + static_cast<int>(h % static_cast<std::uint64_t>(cfg_.vocab_size - 2));
}

std::vector<int> ToyTokenizer::token_ids(const align::TokenizedSentence& tok) const {
    std::vector<int> ids;
    ids.reserve(tok.size());
    for (const auto& t : tok.tokens) ids.push_back(id_for_token(t));
    return ids;
}

// ---- dense helpers -------------------------------------------------------------

namespace {

// C[m x n] = A[m x k] * B[k x n], accumulating when acc is set.
void matmul(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
    if (!acc) std::fill(C, C + static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double a = A[static_cast<std::size_t>(i) * k + p];
            if (a == 0.0) continue;
            const double* brow = B + static_cast<std::size_t>(p) * n;
            double* crow = C + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[m x n] = A[m x k] * B[n x k]^T.
void matmul_abt(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            const double* arow = A + static_cast<std::size_t>(i) * k;
            const double* brow = B + static_cast<std::size_t>(j) * k;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            double& c = C[static_cast<std::size_t>(i) * n + j];
            c = acc ? c + s : s;
        }
    }
}

// C[m x n] = A[k x m]^T * B[k x n].
void matmul_atb(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
    if (!acc) std::fill(C, C + static_cast<std::size_t>(m) * n, 0.0);
    for (int p = 0; p < k; ++p) {
        const double* arow = A + static_cast<std::size_t>(p) * m;
        const double* brow = B + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double a = arow[i];
            if (a == 0.0) continue;
            double* crow = C + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

// y[T x n] = x[T x m] * w[m x n] + b.
void linear(const double* x, const Tensor& w, const Tensor& b, double* y, int T) {
    const int m = static_cast<int>(w.rows);
    const int n = static_cast<int>(w.cols);
    matmul(x, w.w.data(), y, T, m, n, false);
    for (int t = 0; t < T; ++t) {
        for (int j = 0; j < n; ++j) y[static_cast<std::size_t>(t) * n + j] += b.w[static_cast<std::size_t>(j)];
    }
}

// Backward of linear: accumulates dW, db; writes or accumulates dx.
void linear_backward(const double* x, const double* dy, Tensor& w, Tensor& b, double* dx, int T,
                     bool acc_dx, bool collect_param_grads) {
    const int m = static_cast<int>(w.rows);
    const int n = static_cast<int>(w.cols);
    if (collect_param_grads) {
        matmul_atb(x, dy, w.g.data(), m, T, n, true);
        for (int t = 0; t < T; ++t) {
            for (int j = 0; j < n; ++j) b.g[static_cast<std::size_t>(j)] += dy[static_cast<std::size_t>(t) * n + j];
        }
    }
    if (dx) matmul_abt(dy, w.w.data(), dx, T, n, m, acc_dx);
}

constexpr double kLnEps = 1e-5;

// Row-wise layer norm; caches xhat and 1/std per row.
void layer_norm(const double* x, const Tensor& g, const Tensor& b, double* y, double* xhat,
                double* inv_std, int T, int D) {
    for (int t = 0; t < T; ++t) {
        const double* row = x + static_cast<std::size_t>(t) * D;
        double mu = 0.0;
        for (int j = 0; j < D; ++j) mu += row[j];
        mu /= D;
        double var = 0.0;
        for (int j = 0; j < D; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= D;
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        inv_std[t] = inv;
        for (int j = 0; j < D; ++j) {
            const double xh = (row[j] - mu) * inv;
            xhat[static_cast<std::size_t>(t) * D + j] = xh;
            y[static_cast<std::size_t>(t) * D + j] = g.w[static_cast<std::size_t>(j)] * xh + b.w[static_cast<std::size_t>(j)];
        }
    }
}

void layer_norm_backward(const double* dy, const double* xhat, const double* inv_std,
                         Tensor& g, Tensor& b, double* dx, int T, int D,
                         bool collect_param_grads) {
    std::vector<double> dxhat(static_cast<std::size_t>(D));
    for (int t = 0; t < T; ++t) {
        const double* dyr = dy + static_cast<std::size_t>(t) * D;
        const double* xhr = xhat + static_cast<std::size_t>(t) * D;
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int j = 0; j < D; ++j) {
            dxhat[static_cast<std::size_t>(j)] = dyr[j] * g.w[static_cast<std::size_t>(j)];
            mean_dxhat += dxhat[static_cast<std::size_t>(j)];
            mean_dxhat_xhat += dxhat[static_cast<std::size_t>(j)] * xhr[j];
            if (collect_param_grads) {
                g.g[static_cast<std::size_t>(j)] += dyr[j] * xhr[j];
                b.g[static_cast<std::size_t>(j)] += dyr[j];
            }
        }
        mean_dxhat /= D;
        mean_dxhat_xhat /= D;
        for (int j = 0; j < D; ++j) {
            dx[static_cast<std::size_t>(t) * D + j] =
                inv_std[t] * (dxhat[static_cast<std::size_t>(j)] - mean_dxhat - xhr[j] * mean_dxhat_xhat);
        }
    }
}

void softmax_rows(double* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double* row = x + static_cast<std::size_t>(r) * cols;
        double mx = row[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        for (int c = 0; c < cols; ++c) row[c] /= sum;
    }
}

}  // namespace

// ---- encoder -------------------------------------------------------------------

ToyEncoder::ToyEncoder(const ToyConfig& cfg) : cfg_(cfg) {
    if (cfg_.d_model % cfg_.heads != 0) {
        throw ConfigError("toy encoder: d_model must be divisible by heads");
    }
    if (cfg_.vocab_size < 3 || cfg_.max_len < 3 || cfg_.layers < 1) {
        throw ConfigError("toy encoder: bad config");
    }
    const auto D = static_cast<std::size_t>(cfg_.d_model);
    const auto F = static_cast<std::size_t>(cfg_.d_ff);
    tok_emb_.init(static_cast<std::size_t>(cfg_.vocab_size), D);
    pos_emb_.init(static_cast<std::size_t>(cfg_.max_len), D);
    layers_.resize(static_cast<std::size_t>(cfg_.layers));
    for (auto& lw : layers_) {
        lw.wq.init(D, D);
        lw.bq.init(1, D);
        lw.wk.init(D, D);
        lw.bk.init(1, D);
        lw.wv.init(D, D);
        lw.bv.init(1, D);
        lw.wo.init(D, D);
        lw.bo.init(1, D);
        lw.ln1_g.init(1, D);
        lw.ln1_b.init(1, D);
        lw.w1.init(D, F);
        lw.b1.init(1, F);
        lw.w2.init(F, D);
        lw.b2.init(1, D);
        lw.ln2_g.init(1, D);
        lw.ln2_b.init(1, D);
    }

    util::Rng rng(cfg_.seed);
    const double scale = 0.02;
    auto fill_gaussian = [&](Tensor& t) {
        for (auto& x : t.w) x = rng.gaussian() * scale;
    };
    auto fill_ones = [&](Tensor& t) {
        std::fill(t.w.begin(), t.w.end(), 1.0);
    };
    fill_gaussian(tok_emb_);
    fill_gaussian(pos_emb_);
    for (auto& lw : layers_) {
        fill_gaussian(lw.wq);
        fill_gaussian(lw.wk);
        fill_gaussian(lw.wv);
        fill_gaussian(lw.wo);
        fill_ones(lw.ln1_g);
        fill_gaussian(lw.w1);
        fill_gaussian(lw.w2);
        fill_ones(lw.ln2_g);
    }
}

std::vector<double> ToyEncoder::forward(const std::vector<int>& ids, Trace* trace,
                                        attnio::RawAttention* attn) const {
    const int T = static_cast<int>(ids.size());
    const int D = cfg_.d_model;
    const int H = cfg_.heads;
    const int Dh = D / H;
    const int F = cfg_.d_ff;
    if (T < 1) throw Error("toy encoder: empty input");
    if (T > cfg_.max_len) throw Error("toy encoder: input exceeds max_len");
    for (int id : ids) {
        if (id < 0 || id >= cfg_.vocab_size) throw Error("toy encoder: token id out of range");
    }

    if (attn) *attn = attnio::RawAttention::zeros(cfg_.layers, H, T);
    if (trace) {
        trace->ids = ids;
        trace->T = T;
        trace->layers.assign(static_cast<std::size_t>(cfg_.layers), LayerTrace{});
    }

    const auto TD = static_cast<std::size_t>(T) * D;
    std::vector<double> x(TD);
    for (int t = 0; t < T; ++t) {
        const double* te = tok_emb_.w.data() + static_cast<std::size_t>(ids[static_cast<std::size_t>(t)]) * D;
        const double* pe = pos_emb_.w.data() + static_cast<std::size_t>(t) * D;
        for (int j = 0; j < D; ++j) x[static_cast<std::size_t>(t) * D + j] = te[j] + pe[j];
    }
    if (trace) trace->x0 = x;

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(Dh));
    std::vector<double> q(TD), k(TD), v(TD), ctx(TD), ao(TD), r1(TD), x1(TD), x1h(TD);
    std::vector<double> f1(static_cast<std::size_t>(T) * F), a1(static_cast<std::size_t>(T) * F);
    std::vector<double> f2(TD), r2(TD), x2(TD), x2h(TD);
    std::vector<double> inv1(static_cast<std::size_t>(T)), inv2(static_cast<std::size_t>(T));
    std::vector<double> qh(static_cast<std::size_t>(T) * Dh), kh(qh.size()), vh(qh.size()),
        ch(qh.size());
    std::vector<double> scores(static_cast<std::size_t>(T) * T);

    for (int l = 0; l < cfg_.layers; ++l) {
        const LayerWeights& lw = layers_[static_cast<std::size_t>(l)];
        LayerTrace* lt = trace ? &trace->layers[static_cast<std::size_t>(l)] : nullptr;
        if (lt) lt->input = x;

        linear(x.data(), lw.wq, lw.bq, q.data(), T);
        linear(x.data(), lw.wk, lw.bk, k.data(), T);
        linear(x.data(), lw.wv, lw.bv, v.data(), T);

        if (lt) lt->probs.assign(static_cast<std::size_t>(H) * T * T, 0.0);
        for (int h = 0; h < H; ++h) {
            for (int t = 0; t < T; ++t) {
                for (int j = 0; j < Dh; ++j) {
                    qh[static_cast<std::size_t>(t) * Dh + j] = q[static_cast<std::size_t>(t) * D + h * Dh + j];
                    kh[static_cast<std::size_t>(t) * Dh + j] = k[static_cast<std::size_t>(t) * D + h * Dh + j];
                    vh[static_cast<std::size_t>(t) * Dh + j] = v[static_cast<std::size_t>(t) * D + h * Dh + j];
                }
            }
            matmul_abt(qh.data(), kh.data(), scores.data(), T, Dh, T, false);
            for (auto& s : scores) s *= inv_sqrt;
            softmax_rows(scores.data(), T, T);
            if (lt) {
                std::copy(scores.begin(), scores.end(),
                          lt->probs.begin() + static_cast<std::size_t>(h) * T * T);
            }
            if (attn) {
                for (int qi = 0; qi < T; ++qi) {
                    for (int ki = 0; ki < T; ++ki) {
                        attn->at(l, h, qi, ki) =
                            static_cast<float>(scores[static_cast<std::size_t>(qi) * T + ki]);
                    }
                }
            }
            matmul(scores.data(), vh.data(), ch.data(), T, T, Dh, false);
            for (int t = 0; t < T; ++t) {
                for (int j = 0; j < Dh; ++j) {
                    ctx[static_cast<std::size_t>(t) * D + h * Dh + j] = ch[static_cast<std::size_t>(t) * Dh + j];
                }
            }
        }

        linear(ctx.data(), lw.wo, lw.bo, ao.data(), T);
        for (std::size_t i = 0; i < TD; ++i) r1[i] = x[i] + ao[i];
        layer_norm(r1.data(), lw.ln1_g, lw.ln1_b, x1.data(), x1h.data(), inv1.data(), T, D);

        linear(x1.data(), lw.w1, lw.b1, f1.data(), T);
        for (std::size_t i = 0; i < f1.size(); ++i) a1[i] = f1[i] > 0.0 ? f1[i] : 0.0;
        linear(a1.data(), lw.w2, lw.b2, f2.data(), T);
        for (std::size_t i = 0; i < TD; ++i) r2[i] = x1[i] + f2[i];
        layer_norm(r2.data(), lw.ln2_g, lw.ln2_b, x2.data(), x2h.data(), inv2.data(), T, D);

        if (lt) {
            lt->q = q;
            lt->k = k;
            lt->v = v;
            lt->ctx = ctx;
            lt->r1 = r1;
            lt->x1_hat = x1h;
            lt->x1 = x1;
            lt->inv_std1 = inv1;
            lt->f1 = f1;
            lt->a1 = a1;
            lt->r2 = r2;
            lt->x2_hat = x2h;
            lt->x2 = x2;
            lt->inv_std2 = inv2;
        }
        x = x2;
    }
    return x;
}

void ToyEncoder::backward(const Trace& trace, const std::vector<double>& d_hidden,
                          int freeze_layers) {
    const int T = trace.T;
    const int D = cfg_.d_model;
    const int H = cfg_.heads;
    const int Dh = D / H;
    const int F = cfg_.d_ff;
    const auto TD = static_cast<std::size_t>(T) * D;
    if (d_hidden.size() != TD) throw Error("backward: gradient shape mismatch");

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(Dh));
    std::vector<double> dx = d_hidden;
    std::vector<double> dr2(TD), dx1(TD), df2(TD), da1(static_cast<std::size_t>(T) * F),
        df1(static_cast<std::size_t>(T) * F), dr1(TD), dctx(TD), dq(TD), dk(TD), dv(TD),
        dinput(TD);
    std::vector<double> qh(static_cast<std::size_t>(T) * Dh), kh(qh.size()), vh(qh.size()),
        dch(qh.size()), dqh(qh.size()), dkh(qh.size()), dvh(qh.size());
    std::vector<double> dprobs(static_cast<std::size_t>(T) * T), dscores(dprobs.size());

    for (int l = cfg_.layers - 1; l >= 0; --l) {
        LayerWeights& lw = layers_[static_cast<std::size_t>(l)];
        const LayerTrace& lt = trace.layers[static_cast<std::size_t>(l)];
        const bool collect = l >= freeze_layers;

        layer_norm_backward(dx.data(), lt.x2_hat.data(), lt.inv_std2.data(), lw.ln2_g, lw.ln2_b,
                            dr2.data(), T, D, collect);
        // r2 = x1 + f2
        dx1 = dr2;
        df2 = dr2;
        linear_backward(lt.a1.data(), df2.data(), lw.w2, lw.b2, da1.data(), T, false, collect);
        for (std::size_t i = 0; i < df1.size(); ++i) df1[i] = lt.f1[i] > 0.0 ? da1[i] : 0.0;
        linear_backward(lt.x1.data(), df1.data(), lw.w1, lw.b1, dx1.data(), T, true, collect);

        layer_norm_backward(dx1.data(), lt.x1_hat.data(), lt.inv_std1.data(), lw.ln1_g, lw.ln1_b,
                            dr1.data(), T, D, collect);
        // r1 = input + attn_out
        dinput = dr1;
        linear_backward(lt.ctx.data(), dr1.data(), lw.wo, lw.bo, dctx.data(), T, false, collect);

        std::fill(dq.begin(), dq.end(), 0.0);
        std::fill(dk.begin(), dk.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        for (int h = 0; h < H; ++h) {
            const double* probs = lt.probs.data() + static_cast<std::size_t>(h) * T * T;
            for (int t = 0; t < T; ++t) {
                for (int j = 0; j < Dh; ++j) {
                    qh[static_cast<std::size_t>(t) * Dh + j] = lt.q[static_cast<std::size_t>(t) * D + h * Dh + j];
                    kh[static_cast<std::size_t>(t) * Dh + j] = lt.k[static_cast<std::size_t>(t) * D + h * Dh + j];
                    vh[static_cast<std::size_t>(t) * Dh + j] = lt.v[static_cast<std::size_t>(t) * D + h * Dh + j];
                    dch[static_cast<std::size_t>(t) * Dh + j] = dctx[static_cast<std::size_t>(t) * D + h * Dh + j];
                }
            }
            matmul_abt(dch.data(), vh.data(), dprobs.data(), T, Dh, T, false);
            matmul_atb(probs, dch.data(), dvh.data(), T, T, Dh, false);
            // softmax backward per row
            for (int r = 0; r < T; ++r) {
                const double* prow = probs + static_cast<std::size_t>(r) * T;
                const double* dprow = dprobs.data() + static_cast<std::size_t>(r) * T;
                double dot = 0.0;
                for (int c = 0; c < T; ++c) dot += prow[c] * dprow[c];
                for (int c = 0; c < T; ++c) {
                    dscores[static_cast<std::size_t>(r) * T + c] = prow[c] * (dprow[c] - dot);
                }
            }
            matmul(dscores.data(), kh.data(), dqh.data(), T, T, Dh, false);
            matmul_atb(dscores.data(), qh.data(), dkh.data(), T, T, Dh, false);
            for (int t = 0; t < T; ++t) {
                for (int j = 0; j < Dh; ++j) {
                    dq[static_cast<std::size_t>(t) * D + h * Dh + j] += dqh[static_cast<std::size_t>(t) * Dh + j] * inv_sqrt;
                    dk[static_cast<std::size_t>(t) * D + h * Dh + j] += dkh[static_cast<std::size_t>(t) * Dh + j] * inv_sqrt;
                    dv[static_cast<std::size_t>(t) * D + h * Dh + j] += dvh[static_cast<std::size_t>(t) * Dh + j];
                }
            }
        }
        linear_backward(lt.input.data(), dq.data(), lw.wq, lw.bq, dinput.data(), T, true, collect);
        linear_backward(lt.input.data(), dk.data(), lw.wk, lw.bk, dinput.data(), T, true, collect);
        linear_backward(lt.input.data(), dv.data(), lw.wv, lw.bv, dinput.data(), T, true, collect);
        dx = dinput;
    }

    if (freeze_layers == 0) {
        for (int t = 0; t < T; ++t) {
            const int id = trace.ids[static_cast<std::size_t>(t)];
            for (int j = 0; j < D; ++j) {
                tok_emb_.g[static_cast<std::size_t>(id) * D + j] += dx[static_cast<std::size_t>(t) * D + j];
                pos_emb_.g[static_cast<std::size_t>(t) * D + j] += dx[static_cast<std::size_t>(t) * D + j];
            }
        }
    }
}

void ToyEncoder::zero_grad() {
    for_each_tensor([](const std::string&, Tensor& t) {
        std::fill(t.g.begin(), t.g.end(), 0.0);
    });
}

void ToyEncoder::adam_step(const AdamParams& p, int step, int freeze_layers) {
    if (freeze_layers == 0) {
        adam_update(tok_emb_, p, step);
        adam_update(pos_emb_, p, step);
    }
    for (int l = 0; l < cfg_.layers; ++l) {
        if (l < freeze_layers) continue;
        LayerWeights& lw = layers_[static_cast<std::size_t>(l)];
        for (Tensor* t : {&lw.wq, &lw.bq, &lw.wk, &lw.bk, &lw.wv, &lw.bv, &lw.wo, &lw.bo,
                          &lw.ln1_g, &lw.ln1_b, &lw.w1, &lw.b1, &lw.w2, &lw.b2, &lw.ln2_g,
                          &lw.ln2_b}) {
            adam_update(*t, p, step);
        }
    }
}

void ToyEncoder::for_each_tensor(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("tok_emb", tok_emb_);
    fn("pos_emb", pos_emb_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        LayerWeights& lw = layers_[l];
        fn(p + "wq", lw.wq);
        fn(p + "bq", lw.bq);
        fn(p + "wk", lw.wk);
        fn(p + "bk", lw.bk);
        fn(p + "wv", lw.wv);
        fn(p + "bv", lw.bv);
        fn(p + "wo", lw.wo);
        fn(p + "bo", lw.bo);
        fn(p + "ln1_g", lw.ln1_g);
        fn(p + "ln1_b", lw.ln1_b);
        fn(p + "w1", lw.w1);
        fn(p + "b1", lw.b1);
        fn(p + "w2", lw.w2);
        fn(p + "b2", lw.b2);
        fn(p + "ln2_g", lw.ln2_g);
        fn(p + "ln2_b", lw.ln2_b);
    }
}

void ToyEncoder::for_each_tensor(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
    const_cast<ToyEncoder*>(this)->for_each_tensor(
        [&](const std::string& name, Tensor& t) { fn(name, t); });
}

std::uint64_t ToyEncoder::fingerprint() const {
    std::vector<std::uint64_t> hashes;
    for_each_tensor([&](const std::string&, const Tensor& t) {
        hashes.push_back(util::fnv1a64(t.w.data(), t.w.size() * sizeof(double)));
    });
    return util::fnv1a64(hashes.data(), hashes.size() * sizeof(std::uint64_t));
}

// ---- checkpoints ---------------------------------------------------------------

namespace {

constexpr const char* kMagic = "MWETOY01";

json config_to_json(const ToyConfig& c) {
    json j;
    j["layers"] = c.layers;
    j["heads"] = c.heads;
    j["d_model"] = c.d_model;
    j["d_ff"] = c.d_ff;
    j["vocab_size"] = c.vocab_size;
    j["max_len"] = c.max_len;
    j["piece_len"] = c.piece_len;
    j["seed"] = c.seed;
    return j;
}

ToyConfig config_from_json(const json& j) {
    ToyConfig c;
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.piece_len = j.at("piece_len").get<int>();
    c.seed = j.at("seed").get<std::uint32_t>();
    return c;
}

void write_tensor(std::ofstream& out, const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.w.data()),
              static_cast<std::streamsize>(t.w.size() * sizeof(double)));
}

void read_tensor(std::ifstream& in, Tensor& t) {
    in.read(reinterpret_cast<char*>(t.w.data()),
            static_cast<std::streamsize>(t.w.size() * sizeof(double)));
    if (!in) throw Error("checkpoint truncated while reading tensor");
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& model_id,
                     const ToyEncoder& encoder, const HeadTensors* head) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint: " + path);

    json meta;
    meta["model_id"] = model_id;
    meta["config"] = config_to_json(encoder.config());
    if (head) {
        json h;
        h["task"] = to_string(head->task);
        h["labels"] = head->labels;
        h["sequence_level"] = head->sequence_level;
        meta["head"] = h;
    }
    out << kMagic << "\n" << meta.dump() << "\n";

    encoder.for_each_tensor([&](const std::string&, const Tensor& t) { write_tensor(out, t); });
    if (head) {
        write_tensor(out, head->w);
        write_tensor(out, head->b);
    }
    if (!out) throw Error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    std::string magic, meta_line;
    std::getline(in, magic);
    if (magic != kMagic) throw Error("not a toy encoder checkpoint: " + path);
    std::getline(in, meta_line);
    json meta;
    try {
        meta = json::parse(meta_line);
    } catch (const json::exception& e) {
        throw Error("bad checkpoint metadata: " + std::string(e.what()));
    }

    Checkpoint ckpt{meta.value("model_id", ""), config_from_json(meta.at("config")),
                    ToyEncoder(config_from_json(meta.at("config"))), std::nullopt};
    ckpt.encoder.for_each_tensor([&](const std::string&, Tensor& t) { read_tensor(in, t); });
    if (meta.contains("head")) {
        HeadTensors head;
        head.task = task_tag_from_string(meta["head"].at("task").get<std::string>());
        head.labels = meta["head"].at("labels").get<std::vector<std::string>>();
        head.sequence_level = meta["head"].at("sequence_level").get<bool>();
        head.w.init(static_cast<std::size_t>(ckpt.config.d_model), head.labels.size());
        head.b.init(1, head.labels.size());
        read_tensor(in, head.w);
        read_tensor(in, head.b);
        ckpt.head = std::move(head);
    }
    return ckpt;
}

// ---- runner --------------------------------------------------------------------

ToyRunner::ToyRunner(std::string model_id, ToyEncoder encoder)
    : model_id_(std::move(model_id)), encoder_(std::move(encoder)),
      tokenizer_(encoder_.config()) {}

align::TokenizedSentence ToyRunner::tokenize(const std::string& text) const {
    return tokenizer_.tokenize(text);
}

attnio::RawAttention ToyRunner::attend(const std::string& text) const {
    const auto tok = tokenizer_.tokenize(text);
    const auto ids = tokenizer_.token_ids(tok);
    attnio::RawAttention attn;
    encoder_.forward(ids, nullptr, &attn);
    return attn;
}

}  // namespace mweattn::toyenc
