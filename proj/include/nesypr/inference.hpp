#pragma once
// Test-time planning without the symbolic tool: per-layer procedure banks
// labeled by task feedback, composite reconstruction against those banks,
// dual forward passes, and contrastive decoding that promotes tokens likely
// under successful procedures and suppresses those aligned with failures.

#include <chrono>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "nesypr/encoding.hpp"
#include "nesypr/model.hpp"
#include "nesypr/planner.hpp"
#include "nesypr/strips.hpp"

namespace nesypr {

inline double cosine_sim(const double* a, const double* b, int n) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// One feedback-labeled procedure store: per decoder layer, a FIFO of
// D-dimensional composite vectors with near-duplicate suppression.
struct ProcedureBank {
    bool positive = true;
    int capacity = 4096;  // per layer
    std::vector<std::deque<std::vector<double>>> layers;

    void init(int n_layers) { layers.assign(static_cast<std::size_t>(n_layers), {}); }

    std::size_t total_entries() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.size();
        return n;
    }

    bool empty() const { return total_entries() == 0; }

    // Returns true when the entry was stored (not a near-duplicate).
    bool add(int layer, const double* vec, int D) {
        for (int j = 0; j < D; ++j)
            if (!std::isfinite(vec[j]))
                throw std::logic_error("procedure bank: non-finite entry rejected");
        auto& q = layers[static_cast<std::size_t>(layer)];
        for (const auto& e : q)
            if (cosine_sim(e.data(), vec, D) > 0.999) return false;
        q.emplace_back(vec, vec + D);
        while (static_cast<int>(q.size()) > capacity) q.pop_front();
        return true;
    }
};

struct Banks {
    ProcedureBank pos;
    ProcedureBank neg;
    bool final_layer_only = false;  // bank only the last layer's composites
};

inline Banks make_banks(int n_layers, int capacity = 4096, bool final_layer_only = false) {
    Banks b;
    b.pos.positive = true;
    b.neg.positive = false;
    b.pos.capacity = capacity;
    b.neg.capacity = capacity;
    b.pos.init(n_layers);
    b.neg.init(n_layers);
    b.final_layer_only = final_layer_only;
    return b;
}

// Per-composite bank matching: each row is replaced by the most similar bank
// entry when that similarity reaches the threshold, otherwise kept as is.
// Ties on similarity resolve to the earliest-inserted entry.
inline std::vector<double> reconstruct(const std::vector<double>& composites, int D,
                                       const std::deque<std::vector<double>>& entries,
                                       double upsilon = 0.95) {
    std::vector<double> out = composites;
    if (entries.empty() || D <= 0) return out;
    const int S = static_cast<int>(composites.size()) / D;
    for (int i = 0; i < S; ++i) {
        const double* row = composites.data() + static_cast<std::size_t>(i) * D;
        const std::vector<double>* best = nullptr;
        double best_sim = -2.0;
        for (const auto& e : entries) {
            const double sim = cosine_sim(row, e.data(), D);
            if (sim > best_sim) {
                best_sim = sim;
                best = &e;
            }
        }
        if (best != nullptr && best_sim >= upsilon)
            std::copy(best->begin(), best->end(),
                      out.begin() + static_cast<std::size_t>(i) * D);
    }
    return out;
}

// Numerically stable softmax over raw logit values.
inline std::vector<double> softmax_values(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

// Adaptive plausibility set: tokens within a factor theta of the best token.
// Always contains the argmax.
inline std::vector<int> adaptive_head(const std::vector<double>& p_plus, double theta = 0.1) {
    double mx = 0.0;
    for (double v : p_plus) mx = std::max(mx, v);
    const double cutoff = theta * mx;
    std::vector<int> head;
    for (std::size_t i = 0; i < p_plus.size(); ++i)
        if (p_plus[i] >= cutoff) head.push_back(static_cast<int>(i));
    return head;
}

// Contrastive score per head token: log-ratio of the success-conditioned to
// the failure-conditioned probability, floored at 1e-12 before the logs.
inline std::vector<double> contrastive_scores(const std::vector<double>& p_plus,
                                              const std::vector<double>& p_minus,
                                              const std::vector<int>& head) {
    constexpr double kFloor = 1e-12;
    std::vector<double> s(head.size());
    for (std::size_t j = 0; j < head.size(); ++j) {
        const std::size_t x = static_cast<std::size_t>(head[j]);
        s[j] = std::log(std::max(p_plus[x], kFloor)) - std::log(std::max(p_minus[x], kFloor));
    }
    return s;
}

// Reshaped next-token distribution: softmax of the contrastive scores scaled
// by the head's total plus-mass on head tokens, the plain plus-probability on
// the tail. Redistribution preserves total mass; checked live.
inline std::vector<double> cp_distribution(const std::vector<double>& p_plus,
                                           const std::vector<double>& scores,
                                           const std::vector<int>& head) {
    std::vector<double> p_cp = p_plus;
    double head_mass = 0.0;
    for (int x : head) head_mass += p_plus[static_cast<std::size_t>(x)];
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double z = 0.0;
    std::vector<double> e(scores.size());
    for (std::size_t j = 0; j < scores.size(); ++j) {
        e[j] = std::exp(scores[j] - mx);
        z += e[j];
    }
    for (std::size_t j = 0; j < head.size(); ++j)
        p_cp[static_cast<std::size_t>(head[j])] = e[j] / z * head_mass;

    double sum = 0.0;
    for (double v : p_cp) sum += v;
    if (std::fabs(sum - 1.0) > 1e-9)
        throw std::logic_error("cp_distribution: mass not preserved, sum = " +
                               std::to_string(sum));
    return p_cp;
}

struct DecodeConfig {
    int max_tokens = 96;            // generation budget per decode call
    double theta = 0.1;             // adaptive-head truncation
    double upsilon = 0.95;          // reconstruction threshold
    bool use_cp = true;             // contrastive reshaping of the distribution
    bool use_banks = true;          // procedure reconstruction from the banks
    bool follow_negative = false;   // thread the failure-conditioned stream
};

struct CpDecodeResult {
    std::vector<int> tokens;  // generated tokens, including EOS when reached
    bool hit_eos = false;
    // Final decoding step's reconstructed procedures, one S*D block per layer.
    std::vector<std::vector<double>> r_plus, r_minus;
    std::vector<std::vector<int>> chunk_indices;  // followed stream, layer -> S*q
    Tensor memory_out;  // followed stream's working memory after the last step
};

// Greedy contrastive decoding: per token, one forward conditioned on the
// positive bank and one on the negative bank, reshaped per the contrastive
// rule, argmax with ties broken toward higher plus-probability then smaller
// token id. With empty banks both passes coincide and the tie-break makes the
// output identical to plain greedy decoding.
inline CpDecodeResult cp_decode(const Model& m, const std::vector<int>& prompt,
                                const Tensor& memory_in, const Banks& banks,
                                const DecodeConfig& cfg, int eos_id) {
    CpDecodeResult res;
    res.memory_out = memory_in;
    std::vector<int> ids = prompt;
    const int D = m.cfg.width;

    ReconstructHook hook_pos = nullptr, hook_neg = nullptr;
    if (cfg.use_banks) {
        hook_pos = [&](int layer, const RuntimeProcedure& rp) {
            return reconstruct(rp.composites, D, banks.pos.layers[static_cast<std::size_t>(layer)],
                               cfg.upsilon);
        };
        hook_neg = [&](int layer, const RuntimeProcedure& rp) {
            return reconstruct(rp.composites, D, banks.neg.layers[static_cast<std::size_t>(layer)],
                               cfg.upsilon);
        };
    }

    for (int step = 0; step < cfg.max_tokens; ++step) {
        if (static_cast<int>(ids.size()) >= m.cfg.max_seq) break;  // truncated
        ForwardResult fp = forward(m, ids, memory_in, ForwardMode::InferPos, hook_pos);
        const int t = fp.logits.rows() - 1;
        std::vector<double> plus_logits(static_cast<std::size_t>(fp.logits.cols()));
        for (int v = 0; v < fp.logits.cols(); ++v)
            plus_logits[static_cast<std::size_t>(v)] = fp.logits.at(t, v);
        const std::vector<double> p_plus = softmax_values(plus_logits);

        int pick;
        ForwardResult* followed = &fp;
        ForwardResult fn;
        if (cfg.use_cp) {
            fn = forward(m, ids, memory_in, ForwardMode::InferNeg, hook_neg);
            std::vector<double> minus_logits(static_cast<std::size_t>(fn.logits.cols()));
            for (int v = 0; v < fn.logits.cols(); ++v)
                minus_logits[static_cast<std::size_t>(v)] = fn.logits.at(t, v);
            const std::vector<double> p_minus = softmax_values(minus_logits);
            const std::vector<int> head = adaptive_head(p_plus, cfg.theta);
            const std::vector<double> scores = contrastive_scores(p_plus, p_minus, head);
            const std::vector<double> p_cp = cp_distribution(p_plus, scores, head);
            pick = 0;
            for (int v = 1; v < static_cast<int>(p_cp.size()); ++v) {
                const std::size_t a = static_cast<std::size_t>(v);
                const std::size_t b = static_cast<std::size_t>(pick);
                if (p_cp[a] > p_cp[b] || (p_cp[a] == p_cp[b] && p_plus[a] > p_plus[b]))
                    pick = v;
            }
            if (cfg.follow_negative) followed = &fn;
        } else {
            pick = 0;
            for (int v = 1; v < static_cast<int>(p_plus.size()); ++v)
                if (p_plus[static_cast<std::size_t>(v)] > p_plus[static_cast<std::size_t>(pick)])
                    pick = v;
        }

        res.r_plus.clear();
        res.r_minus.clear();
        res.chunk_indices.clear();
        for (int l = 0; l < m.cfg.layers; ++l) {
            res.r_plus.push_back(fp.trace[static_cast<std::size_t>(l)].composites);
            res.r_minus.push_back(cfg.use_cp ? fn.trace[static_cast<std::size_t>(l)].composites
                                             : fp.trace[static_cast<std::size_t>(l)].composites);
            res.chunk_indices.push_back(followed->trace[static_cast<std::size_t>(l)].chunk_indices);
        }
        res.memory_out = followed->memory_out;

        res.tokens.push_back(pick);
        ids.push_back(pick);
        if (pick == eos_id) {
            res.hit_eos = true;
            break;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Episode execution.

struct EpisodeResult {
    std::string instance_id;
    bool success = false;
    int goals_met = 0;
    int goal_total = 0;
    int executed_prefix = 0;  // actions the engine actually applied
    int plan_length = 0;      // open loop: parsed actions; closed loop: attempted steps
    int emitted = 0;          // action emissions, a malformed group counting as one
    int optimal_length = -1;  // planner annotation, evaluation-only
    double latency_s = 0.0;   // encode + decode time
    bool decode_truncated = false;  // ran out of tokens or window before EOS
    bool parse_failed = false;      // token stream had a malformed action group
    std::vector<std::vector<double>> r_plus, r_minus;  // final step, per layer
    std::vector<std::vector<int>> chunk_indices;       // final step, per layer
};

namespace inferdetail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace inferdetail

// One-shot planning: encode (init, goal, DK), emit a full plan, then let the
// symbolic engine judge it. Banks are consulted, never updated here.
inline EpisodeResult run_open_loop(const Model& m, const Vocabulary& vocab, const Domain& dom,
                                   const TaskInstance& inst, const Banks& banks,
                                   const DecodeConfig& cfg, Tensor* memory_io = nullptr) {
    EpisodeResult ep;
    ep.instance_id = inst.id;
    ep.goal_total = static_cast<int>(inst.goal.size());
    ep.optimal_length = inst.optimal_length;

    const auto t0 = std::chrono::steady_clock::now();
    EncodedContext ctx = encode_context(inst.init, inst.goal, dom, vocab);
    Tensor memory = memory_io ? *memory_io : m.memory_init();
    CpDecodeResult dec = cp_decode(m, ctx.ids, memory, banks, cfg, Vocabulary::kEos);
    ep.latency_s = inferdetail::seconds_since(t0);

    if (memory_io) *memory_io = dec.memory_out;
    ep.r_plus = dec.r_plus;
    ep.r_minus = dec.r_minus;
    ep.chunk_indices = dec.chunk_indices;
    ep.decode_truncated = !dec.hit_eos;

    PlanDecode pd = decode_plan(dec.tokens, vocab, dom, inst.objects);
    ep.parse_failed = pd.failure.has_value();
    ep.plan_length = static_cast<int>(pd.actions.size());
    ep.emitted = ep.plan_length + (ep.parse_failed ? 1 : 0);
    ValidationResult val = validate(dom, inst, pd.actions);
    ep.executed_prefix = val.executed_prefix;
    ep.goals_met = val.goals_met;
    ep.success = val.goal_reached;
    return ep;
}

// Sequential planning: one action per environment step, replanning from the
// updated observation. Inapplicable or unparseable actions consume the step
// without changing the state. Working memory threads across steps.
inline EpisodeResult run_closed_loop(const Model& m, const Vocabulary& vocab, const Domain& dom,
                                     const TaskInstance& inst, const Banks& banks,
                                     const DecodeConfig& cfg, int max_steps,
                                     Tensor* memory_io = nullptr) {
    if (max_steps < 1) throw std::invalid_argument("run_closed_loop: max_steps >= 1");
    EpisodeResult ep;
    ep.instance_id = inst.id;
    ep.goal_total = static_cast<int>(inst.goal.size());
    ep.optimal_length = inst.optimal_length;

    SymbolicState state = inst.init;
    Tensor memory = memory_io ? *memory_io : m.memory_init();
    ep.success = goal_satisfied(state, inst.goal);
    const auto t0 = std::chrono::steady_clock::now();
    while (!ep.success && ep.plan_length < max_steps) {
        EncodedContext ctx = encode_context(state, inst.goal, dom, vocab);
        CpDecodeResult dec = cp_decode(m, ctx.ids, memory, banks, cfg, Vocabulary::kEos);
        ++ep.plan_length;
        memory = dec.memory_out;
        ep.r_plus = dec.r_plus;
        ep.r_minus = dec.r_minus;
        ep.chunk_indices = dec.chunk_indices;
        if (!dec.hit_eos) ep.decode_truncated = true;

        PlanDecode pd = decode_plan(dec.tokens, vocab, dom, inst.objects);
        if (pd.actions.empty()) {
            if (pd.failure.has_value()) ep.parse_failed = true;
            continue;
        }
        const GroundedAction& act = pd.actions.front();
        if (applicable(dom, state, act)) {
            state = apply(dom, state, act);
            ++ep.executed_prefix;
        }
        ep.success = goal_satisfied(state, inst.goal);
    }
    ep.latency_s = inferdetail::seconds_since(t0);
    if (memory_io) *memory_io = memory;
    ep.emitted = ep.plan_length;  // every consumed step emitted one attempt
    ep.goals_met = goals_met(state, inst.goal);
    return ep;
}

// Task-level binary feedback routes the final step's reconstructed procedures
// into the matching bank; near-duplicates are dropped, FIFO bounds the size.
inline void update_banks(Banks& banks, const EpisodeResult& ep, int width) {
    const std::vector<std::vector<double>>& src = ep.success ? ep.r_plus : ep.r_minus;
    ProcedureBank& bank = ep.success ? banks.pos : banks.neg;
    const int n_layers = static_cast<int>(src.size());
    for (int l = 0; l < n_layers; ++l) {
        if (banks.final_layer_only && l != n_layers - 1) continue;
        const auto& block = src[static_cast<std::size_t>(l)];
        const int slots = static_cast<int>(block.size()) / width;
        for (int i = 0; i < slots; ++i)
            bank.add(l, block.data() + static_cast<std::size_t>(i) * width, width);
    }
}

}  // namespace nesypr
