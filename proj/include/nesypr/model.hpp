#pragma once

// Decoder-only toy LM with a slot working memory, a vector-quantized
// procedure-book, and gated integration.
//
// DecoderBlock(H, M):
//   E_self = H + SelfAttn(LN(H))                  (causal, `heads` heads)
//   A      = softmax(Q K^T / sqrt(D)),  Q = E_self W_Q, K = M W_K
//   E_work = A (M W_V)                            (memory cross-attention)
//   alpha_up = normalize_cols(A)^T E_work         (slot-side readout, S x D)
//   g_up   = sigmoid(alpha_up W_up)
//   M'     = g_up . alpha_up + (1 - g_up) . M     (gated memory update)
//   R      = quantize(M')                         (nearest book units, STE)
//   g_out  = sigmoid(E_work W_out)
//   P      = E_work + g_out . (A R)
//   H'     = P + FFN(LN(P))                       (pre-LN residual MLP)
// The single memory M is threaded through the layers; a single book is
// shared by all layers. Final LN + output projection produce logits.
//
// Per-layer VQ loss: ||sg(M') - R||^2 + beta ||M' - sg(R)||^2. The book is
// trained by EMA only, so the first term carries value but no gradient; the
// commitment term sends 2*beta*(M'-R) into M'.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "nesypr/tensor.hpp"
#include "nesypr/util.hpp"

namespace nesypr {

struct ModelConfig {
    int layers = 2;       // L
    int width = 64;       // D
    int slots = 16;       // S
    int heads = 2;        // self-attention heads
    int ffn_mult = 4;
    int book_size = 256;  // K
    int unit_dim = 32;    // d
    double beta = 0.25;   // commitment weight
    double lambda = 1.0;  // VQ loss weight
    double ema_decay = 0.99;
    int vocab = 0;
    int max_seq = 512;
    std::uint64_t seed = 0;
    bool use_book = true;  // false: quantization is the identity (ablation)

    int chunks_per_slot() const { return width / unit_dim; }  // q

    void validate() const {
        if (layers < 1 || width < 1 || slots < 1 || heads < 1 || ffn_mult < 1)
            throw std::invalid_argument("model config: dimensions must be positive");
        if (book_size < 1) throw std::invalid_argument("model config: K >= 1 required");
        if (width % unit_dim != 0)
            throw std::invalid_argument("model config: unit dim " + std::to_string(unit_dim) +
                                        " must divide width " + std::to_string(width));
        if (width % heads != 0)
            throw std::invalid_argument("model config: heads must divide width");
        if (vocab < 5) throw std::invalid_argument("model config: vocabulary too small");
        if (max_seq < 2) throw std::invalid_argument("model config: max_seq too small");
    }
};

struct ProcedureBook {
    int num_units = 0;  // K
    int unit_dim = 0;   // d
    std::vector<double> units;       // K x d
    std::vector<double> ema_counts;  // K
    std::vector<double> ema_sums;    // K x d
    std::vector<int> usage_age;      // K, steps since last assignment

    static constexpr double kEps = 1e-5;
    static constexpr int kReseedAge = 100;

    void init(int K, int d) {
        num_units = K;
        unit_dim = d;
        units.assign(static_cast<std::size_t>(K) * d, 0.0);
        ema_counts.assign(static_cast<std::size_t>(K), 0.0);
        ema_sums.assign(static_cast<std::size_t>(K) * d, 0.0);
        usage_age.assign(static_cast<std::size_t>(K), 0);
    }

    const double* unit(int k) const { return units.data() + static_cast<std::size_t>(k) * unit_dim; }

    // Seed units from a pool of chunks (row-major n x d), sampled without
    // replacement while the pool lasts.
    void seed_from_chunks(const std::vector<double>& chunks, Rng& rng) {
        const int n = static_cast<int>(chunks.size()) / std::max(unit_dim, 1);
        if (n <= 0) throw std::runtime_error("procedure book: empty seed pool");
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        shuffle_inplace(rng, order);
        for (int k = 0; k < num_units; ++k) {
            const int src = order[static_cast<std::size_t>(k % n)];
            for (int j = 0; j < unit_dim; ++j)
                units[static_cast<std::size_t>(k) * unit_dim + j] =
                    chunks[static_cast<std::size_t>(src) * unit_dim + j];
        }
    }
};

struct RuntimeProcedure {
    std::vector<double> composites;  // S x D, chunks replaced by book units
    std::vector<int> chunk_indices;  // S x q chosen unit ids
};

// Nearest-unit quantization of every d-chunk of every slot row. Ties break
// toward the smallest unit index (strict less-than comparison on distance).
inline RuntimeProcedure quantize(const std::vector<double>& slots, int S, int D,
                                 const ProcedureBook& book) {
    const int d = book.unit_dim;
    const int q = D / d;
    RuntimeProcedure rp;
    rp.composites.assign(static_cast<std::size_t>(S) * D, 0.0);
    rp.chunk_indices.assign(static_cast<std::size_t>(S) * q, -1);
    for (int i = 0; i < S; ++i) {
        for (int r = 0; r < q; ++r) {
            const double* chunk = slots.data() + static_cast<std::size_t>(i) * D + r * d;
            int best = 0;
            double best_dist = std::numeric_limits<double>::infinity();
            for (int k = 0; k < book.num_units; ++k) {
                const double* u = book.unit(k);
                double dist = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double diff = chunk[j] - u[j];
                    dist += diff * diff;
                }
                if (dist < best_dist) {
                    best_dist = dist;
                    best = k;
                }
            }
            rp.chunk_indices[static_cast<std::size_t>(i) * q + r] = best;
            const double* u = book.unit(best);
            double* out = rp.composites.data() + static_cast<std::size_t>(i) * D + r * d;
            for (int j = 0; j < d; ++j) out[j] = u[j];
        }
    }
    return rp;
}

// EMA book update from one training step's assignments. `chunks` holds all
// quantized chunks of the step (row-major n x d), `assigned` the chosen unit
// per chunk. Only assigned units move; the rest age and are eventually
// reseeded from a random chunk of the current step.
inline void ema_update(ProcedureBook& book, const std::vector<double>& chunks,
                       const std::vector<int>& assigned, double decay, Rng& rng) {
    const int d = book.unit_dim;
    const int n = static_cast<int>(assigned.size());
    std::vector<double> batch_count(static_cast<std::size_t>(book.num_units), 0.0);
    std::vector<double> batch_sum(static_cast<std::size_t>(book.num_units) * d, 0.0);
    for (int c = 0; c < n; ++c) {
        const int k = assigned[static_cast<std::size_t>(c)];
        batch_count[static_cast<std::size_t>(k)] += 1.0;
        const double* src = chunks.data() + static_cast<std::size_t>(c) * d;
        double* dst = batch_sum.data() + static_cast<std::size_t>(k) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
    for (int k = 0; k < book.num_units; ++k) {
        if (batch_count[static_cast<std::size_t>(k)] > 0.0) {
            book.ema_counts[static_cast<std::size_t>(k)] =
                decay * book.ema_counts[static_cast<std::size_t>(k)] +
                (1.0 - decay) * batch_count[static_cast<std::size_t>(k)];
            for (int j = 0; j < d; ++j) {
                const std::size_t idx = static_cast<std::size_t>(k) * d + j;
                book.ema_sums[idx] = decay * book.ema_sums[idx] + (1.0 - decay) * batch_sum[idx];
                book.units[idx] =
                    book.ema_sums[idx] /
                    (book.ema_counts[static_cast<std::size_t>(k)] + ProcedureBook::kEps);
            }
            book.usage_age[static_cast<std::size_t>(k)] = 0;
        } else {
            ++book.usage_age[static_cast<std::size_t>(k)];
            if (book.usage_age[static_cast<std::size_t>(k)] >= ProcedureBook::kReseedAge && n > 0) {
                const int src = static_cast<int>(rng_below(rng, static_cast<std::uint64_t>(n)));
                for (int j = 0; j < d; ++j)
                    book.units[static_cast<std::size_t>(k) * d + j] =
                        chunks[static_cast<std::size_t>(src) * d + j];
                book.ema_counts[static_cast<std::size_t>(k)] = 0.0;
                for (int j = 0; j < d; ++j) book.ema_sums[static_cast<std::size_t>(k) * d + j] = 0.0;
                book.usage_age[static_cast<std::size_t>(k)] = 0;
            }
        }
    }
}

struct LayerTrace {
    std::vector<double> memory;      // S x D, M' after the gated update
    std::vector<double> composites;  // S x D, R as used by integrate
    std::vector<int> chunk_indices;  // S x q (empty on the book-free path)
    std::vector<double> e_work;      // T x D
    std::vector<double> attention;   // T x S
};

enum class ForwardMode { Train, InferPlain, InferPos, InferNeg };

// Bank-side reconstruction hook (Eq. 10): given the layer and the quantized
// procedure, return the composite matrix to use instead (S x D values).
using ReconstructHook =
    std::function<std::vector<double>(int layer, const RuntimeProcedure&)>;

struct ForwardResult {
    Tensor logits;      // T x V
    Tensor vq_loss;     // scalar, graph-connected to memory path
    Tensor memory_out;  // S x D node after the last layer's update
    std::vector<LayerTrace> trace;
};

class Model {
  public:
    ModelConfig cfg;
    std::vector<std::string> names;
    std::vector<Tensor> params;
    ProcedureBook book;

    Tensor param(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return params[i];
        throw std::runtime_error("unknown parameter: " + name);
    }

    Tensor memory_init() const { return param("memory_init"); }
};

inline Model make_model(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    auto add_param = [&](const std::string& name, int r, int c, double scale) {
        std::vector<double> data(static_cast<std::size_t>(r) * c);
        for (auto& x : data) x = rng_normal(rng) * scale;
        m.names.push_back(name);
        m.params.push_back(make_tensor(r, c, std::move(data), true));
    };
    const int D = cfg.width;
    const double proj = 1.0 / std::sqrt(static_cast<double>(D));
    add_param("token_embed", cfg.vocab, D, 0.02);
    add_param("pos_embed", cfg.max_seq, D, 0.02);
    add_param("memory_init", cfg.slots, D, 0.02);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        add_param(p + "self_wq", D, D, proj);
        add_param(p + "self_wk", D, D, proj);
        add_param(p + "self_wv", D, D, proj);
        add_param(p + "self_wo", D, D, proj);
        add_param(p + "cross_wq", D, D, proj);
        add_param(p + "cross_wk", D, D, proj);
        add_param(p + "cross_wv", D, D, proj);
        add_param(p + "mem_wup", D, D, proj);
        add_param(p + "out_wgate", D, D, proj);
        add_param(p + "ffn_w1", D, cfg.ffn_mult * D, proj);
        add_param(p + "ffn_b1", 1, cfg.ffn_mult * D, 0.0);
        add_param(p + "ffn_w2", cfg.ffn_mult * D, D, proj / std::sqrt(2.0 * cfg.layers));
        add_param(p + "ffn_b2", 1, D, 0.0);
    }
    add_param("out_proj", D, cfg.vocab, 0.02);
    add_param("out_bias", 1, cfg.vocab, 0.0);
    m.book.init(cfg.book_size, cfg.unit_dim);
    return m;
}

namespace modeldetail {

inline Tensor ones_like(int r, int c) {
    return make_tensor(r, c, std::vector<double>(static_cast<std::size_t>(r) * c, 1.0), false);
}

inline Tensor causal_mask(int T) {
    std::vector<double> mask(static_cast<std::size_t>(T) * T, 0.0);
    for (int i = 0; i < T; ++i)
        for (int j = i + 1; j < T; ++j) mask[static_cast<std::size_t>(i) * T + j] = -1e30;
    return make_tensor(T, T, std::move(mask), false);
}

// Pre-LN residual causal self-attention.
inline Tensor self_attention(const Model& m, int layer, const Tensor& h, const Tensor& mask) {
    const std::string p = "layer" + std::to_string(layer) + ".";
    const int D = m.cfg.width;
    const int H = m.cfg.heads;
    const int dh = D / H;
    Tensor x = layer_norm(h);
    Tensor q = matmul(x, m.param(p + "self_wq"));
    Tensor k = matmul(x, m.param(p + "self_wk"));
    Tensor v = matmul(x, m.param(p + "self_wv"));
    std::vector<Tensor> head_ctx;
    for (int hd = 0; hd < H; ++hd) {
        Tensor qh = slice_cols(q, hd * dh, (hd + 1) * dh);
        Tensor kh = slice_cols(k, hd * dh, (hd + 1) * dh);
        Tensor vh = slice_cols(v, hd * dh, (hd + 1) * dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
        Tensor probs = softmax_rows(add(scores, mask));
        head_ctx.push_back(matmul(probs, vh));
    }
    Tensor ctx = H == 1 ? head_ctx[0] : concat_cols(head_ctx);
    return add(h, matmul(ctx, m.param(p + "self_wo")));
}

}  // namespace modeldetail

// Memory cross-attention (Eq. 3): returns E_work and the attention matrix A.
inline std::pair<Tensor, Tensor> memory_cross_attention(const Tensor& e_self, const Tensor& memory,
                                                        const Tensor& wq, const Tensor& wk,
                                                        const Tensor& wv) {
    const int D = e_self.cols();
    Tensor q = matmul(e_self, wq);
    Tensor k = matmul(memory, wk);
    Tensor v = matmul(memory, wv);
    Tensor a = softmax_rows(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(D))));
    return {matmul(a, v), a};
}

// Gated working-memory update (Eq. 4).
inline Tensor working_memory_update(const Tensor& memory, const Tensor& e_work, const Tensor& a,
                                    const Tensor& w_up) {
    Tensor alpha = matmul(transpose(normalize_cols(a)), e_work);  // S x D readout
    Tensor gate = sigmoid(matmul(alpha, w_up));
    Tensor keep = sub(modeldetail::ones_like(gate.rows(), gate.cols()), gate);
    return add(hadamard(gate, alpha), hadamard(keep, memory));
}

// Gated integration of the runtime procedure (Eq. 7).
inline Tensor integrate(const Model& m, int layer, const Tensor& e_work, const Tensor& r,
                        const Tensor& a) {
    const std::string p = "layer" + std::to_string(layer) + ".";
    Tensor gate = sigmoid(matmul(e_work, m.param(p + "out_wgate")));
    Tensor pre = add(e_work, hadamard(gate, matmul(a, r)));
    Tensor x = layer_norm(pre);
    Tensor hidden = gelu(add(matmul(x, m.param(p + "ffn_w1")), m.param(p + "ffn_b1")));
    Tensor mlp = add(matmul(hidden, m.param(p + "ffn_w2")), m.param(p + "ffn_b2"));
    return add(pre, mlp);
}

// Per-layer VQ loss (Eq. 8). Both terms carry value; only the commitment
// term carries gradient (into the memory side). The book side learns by EMA.
inline Tensor vq_layer_loss(const Tensor& memory, const std::vector<double>& composites,
                            double beta) {
    Tensor r_const = make_tensor(memory.rows(), memory.cols(), composites, false);
    Tensor book_term = sum_sq(sub(detach(memory), r_const));  // value only
    Tensor commit = scale(sum_sq(sub(memory, r_const)), beta);
    return add(book_term, commit);
}

// Full forward pass over a token sequence.
inline ForwardResult forward(const Model& m, const std::vector<int>& ids, const Tensor& memory_in,
                             ForwardMode mode = ForwardMode::Train,
                             const ReconstructHook& reconstruct = nullptr) {
    const int T = static_cast<int>(ids.size());
    if (T < 1) throw std::runtime_error("forward: empty sequence");
    if (T > m.cfg.max_seq)
        throw std::runtime_error("forward: sequence length " + std::to_string(T) +
                                 " exceeds max " + std::to_string(m.cfg.max_seq));
    if (memory_in.rows() != m.cfg.slots || memory_in.cols() != m.cfg.width)
        throw std::runtime_error("forward: memory shape " + memory_in.shape_str());

    ForwardResult out;
    std::vector<int> positions(ids.size());
    for (int t = 0; t < T; ++t) positions[static_cast<std::size_t>(t)] = t;
    Tensor h = add(embedding_lookup(m.param("token_embed"), ids),
                   embedding_lookup(m.param("pos_embed"), positions));
    Tensor mask = modeldetail::causal_mask(T);
    Tensor memory = memory_in;
    Tensor vq_total = make_tensor(1, 1, {0.0}, false);

    for (int l = 0; l < m.cfg.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        Tensor e_self = modeldetail::self_attention(m, l, h, mask);
        // Cross-attention runs as a pre-LN sublayer on the residual stream:
        // the memory readout augments the token representations instead of
        // replacing them, so token identity survives into later layers.
        auto [e_attn, a] =
            memory_cross_attention(layer_norm(e_self), memory, m.param(p + "cross_wq"),
                                   m.param(p + "cross_wk"), m.param(p + "cross_wv"));
        Tensor e_work = add(e_self, e_attn);
        Tensor updated = working_memory_update(memory, e_work, a, m.param(p + "mem_wup"));

        LayerTrace trace;
        trace.memory = updated.value();
        trace.e_work = e_work.value();
        trace.attention = a.value();

        Tensor r;
        if (m.cfg.use_book) {
            RuntimeProcedure rp = quantize(updated.value(), m.cfg.slots, m.cfg.width, m.book);
            if ((mode == ForwardMode::InferPos || mode == ForwardMode::InferNeg) && reconstruct)
                rp.composites = reconstruct(l, rp);
            trace.composites = rp.composites;
            trace.chunk_indices = rp.chunk_indices;
            r = straight_through(updated, rp.composites);
            vq_total = add(vq_total, vq_layer_loss(updated, rp.composites, m.cfg.beta));
        } else {
            // Book-free path: quantization is the identity.
            trace.composites = updated.value();
            r = updated;
        }

        h = integrate(m, l, e_work, r, a);
        memory = updated;
        out.trace.push_back(std::move(trace));
    }

    Tensor final_h = layer_norm(h);
    out.logits = add(matmul(final_h, m.param("out_proj")), m.param("out_bias"));
    out.vq_loss = vq_total;
    out.memory_out = memory;
    return out;
}

// Eq. 9: token-mean NLL over the plan region plus lambda * sum of VQ losses.
inline Tensor total_loss(const Tensor& logits, const std::vector<int>& targets,
                         const Tensor& vq_loss, double lambda) {
    Tensor nll = cross_entropy(logits, targets);
    return add(nll, scale(vq_loss, lambda));
}

// Plain greedy rollout: re-run the forward pass over the growing sequence and
// take the argmax of the last position (exact ties -> smaller token id).
// Starts each step from `memory_in` — the prompt is reprocessed in full, so
// the working memory genuinely reflects everything generated so far.
// Returns only the generated tokens, including the terminating EOS if hit.
inline std::vector<int> greedy_decode(const Model& m, const std::vector<int>& prompt,
                                      const Tensor& memory_in, int max_new, int eos_id) {
    std::vector<int> ids = prompt;
    std::vector<int> out;
    for (int step = 0; step < max_new; ++step) {
        if (static_cast<int>(ids.size()) >= m.cfg.max_seq) break;
        ForwardResult r = forward(m, ids, memory_in, ForwardMode::InferPlain);
        const int t = r.logits.rows() - 1;
        int best = 0;
        double best_v = r.logits.at(t, 0);
        for (int v = 1; v < r.logits.cols(); ++v)
            if (r.logits.at(t, v) > best_v) {
                best_v = r.logits.at(t, v);
                best = v;
            }
        out.push_back(best);
        ids.push_back(best);
        if (best == eos_id) break;
    }
    return out;
}

}  // namespace nesypr
