#pragma once
// Supervised proceduralization: the planner labels every instance with an
// optimal plan, the model is trained teacher-forced on those targets with
// the combined task + VQ loss, and the procedure-book follows the working
// memory via EMA. Also home to dataset and checkpoint (de)serialization.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nesypr/encoding.hpp"
#include "nesypr/model.hpp"
#include "nesypr/optim.hpp"
#include "nesypr/planner.hpp"
#include "nesypr/strips.hpp"
#include "nesypr/util.hpp"

namespace nesypr {

struct TrainingExample {
    std::string instance_id;
    EncodedContext context;
    std::vector<int> target;  // plan tokens, EOS-terminated
};

struct TrainRunConfig {
    int epochs = 50;
    double lr = 2e-4;
    int batch = 1;  // only batch size 1 is supported
    double grad_clip = 1.0;
    std::uint64_t seed = 0;
    int checkpoint_interval = 10;  // epochs between saves (0 = final only)
    int probe_interval = 10;       // greedy train-CSR probe cadence (0 = never)
    bool use_ema = true;           // false freezes the book after calibration (ablation)
    int warmup_epochs = 0;         // linear ramp from lr/warmup to lr
    double lr_final_factor = 1.0;  // cosine-decay floor as a fraction of lr (1 = constant)
    int stop_after = 0;            // pause after this epoch, keeping the schedule span (0 = run out)
};

// Per-epoch learning rate: linear warmup, then cosine decay toward
// lr * lr_final_factor at the last epoch. A pure function of the epoch
// index, so resumed runs follow the identical schedule.
inline double epoch_lr(const TrainRunConfig& cfg, int epoch) {
    if (cfg.warmup_epochs > 0 && epoch <= cfg.warmup_epochs)
        return cfg.lr * static_cast<double>(epoch) / static_cast<double>(cfg.warmup_epochs);
    const int span = cfg.epochs - cfg.warmup_epochs;
    if (cfg.lr_final_factor >= 1.0 || span <= 1) return cfg.lr;
    const double t = std::min(
        1.0, static_cast<double>(epoch - cfg.warmup_epochs) / static_cast<double>(span));
    const double floor = cfg.lr * cfg.lr_final_factor;
    return floor + (cfg.lr - floor) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

// One labeled example per instance: the planner produces the target plan,
// which is re-validated before it is trusted as supervision.
inline std::vector<TrainingExample> generate_dataset(const Domain& dom,
                                                     const std::vector<TaskInstance>& instances,
                                                     const Vocabulary& vocab,
                                                     const PlannerOptions& opts = {}) {
    std::vector<TrainingExample> out;
    out.reserve(instances.size());
    for (const auto& inst : instances) {
        PlannerReport rep = solve(dom, inst, opts);
        if (!rep.solved())
            throw std::runtime_error("dataset generation: planner failed on " + inst.id + " (" +
                                     (rep.timed_out() ? "timeout" : "unsolvable") + ")");
        ValidationResult check = validate(dom, inst, rep.plan);
        if (!check.goal_reached)
            throw std::runtime_error("dataset generation: plan does not validate on " + inst.id);
        TrainingExample ex;
        ex.instance_id = inst.id;
        ex.context = encode_context(inst.init, inst.goal, dom, vocab);
        ex.target = encode_plan(rep.plan, vocab);
        out.push_back(std::move(ex));
    }
    return out;
}

// Closed-loop variant: one example per plan step, each conditioning on the
// state reached so far and supervising just the next action.
inline std::vector<TrainingExample> generate_dataset_closed_loop(
    const Domain& dom, const std::vector<TaskInstance>& instances, const Vocabulary& vocab,
    const PlannerOptions& opts = {}) {
    std::vector<TrainingExample> out;
    for (const auto& inst : instances) {
        PlannerReport rep = solve(dom, inst, opts);
        if (!rep.solved())
            throw std::runtime_error("dataset generation: planner failed on " + inst.id + " (" +
                                     (rep.timed_out() ? "timeout" : "unsolvable") + ")");
        SymbolicState state = inst.init;
        for (std::size_t t = 0; t < rep.plan.size(); ++t) {
            TrainingExample ex;
            ex.instance_id = inst.id + "#" + std::to_string(t);
            ex.context = encode_context(state, inst.goal, dom, vocab);
            ex.target = encode_action(rep.plan[t], vocab);
            ex.target.push_back(Vocabulary::kEos);
            out.push_back(std::move(ex));
            state = apply(dom, state, rep.plan[t]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset file: magic, version, then length-prefixed records.

inline void save_dataset(const std::string& path, const std::vector<TrainingExample>& examples) {
    std::string buf = "NSPD";
    put_u32(buf, 1);
    put_u32(buf, static_cast<std::uint32_t>(examples.size()));
    for (const auto& ex : examples) {
        put_str(buf, ex.instance_id);
        put_u32(buf, static_cast<std::uint32_t>(ex.context.ids.size()));
        for (int id : ex.context.ids) put_u32(buf, static_cast<std::uint32_t>(id));
        for (int span : {ex.context.dk_begin, ex.context.dk_end, ex.context.obs_begin,
                         ex.context.obs_end, ex.context.goal_begin, ex.context.goal_end})
            put_u32(buf, static_cast<std::uint32_t>(span));
        put_u32(buf, static_cast<std::uint32_t>(ex.target.size()));
        for (int id : ex.target) put_u32(buf, static_cast<std::uint32_t>(id));
    }
    write_text_file(path, buf);
}

inline std::vector<TrainingExample> load_dataset(const std::string& path) {
    const std::string buf = read_text_file(path);
    if (buf.size() < 4 || buf.substr(0, 4) != "NSPD")
        throw std::runtime_error("load_dataset: not a dataset file: " + path);
    ByteReader r(buf);
    r.pos = 4;
    if (r.u32() != 1) throw std::runtime_error("load_dataset: unsupported dataset version");
    const std::uint32_t count = r.u32();
    std::vector<TrainingExample> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        TrainingExample ex;
        ex.instance_id = r.str();
        const std::uint32_t n_ctx = r.u32();
        ex.context.ids.resize(n_ctx);
        for (auto& id : ex.context.ids) id = static_cast<int>(r.u32());
        ex.context.dk_begin = static_cast<int>(r.u32());
        ex.context.dk_end = static_cast<int>(r.u32());
        ex.context.obs_begin = static_cast<int>(r.u32());
        ex.context.obs_end = static_cast<int>(r.u32());
        ex.context.goal_begin = static_cast<int>(r.u32());
        ex.context.goal_end = static_cast<int>(r.u32());
        const std::uint32_t n_tgt = r.u32();
        ex.target.resize(n_tgt);
        for (auto& id : ex.target) id = static_cast<int>(r.u32());
        out.push_back(std::move(ex));
    }
    return out;
}

// Human-readable dump: `id <TAB> context words | target words`, one per line.
inline std::string dataset_text_dump(const std::vector<TrainingExample>& examples,
                                     const Vocabulary& vocab) {
    std::string out;
    for (const auto& ex : examples) {
        out += ex.instance_id;
        out += '\t';
        for (std::size_t i = 0; i < ex.context.ids.size(); ++i) {
            if (i) out += ' ';
            out += vocab.tokens[static_cast<std::size_t>(ex.context.ids[i])];
        }
        out += " | ";
        for (std::size_t i = 0; i < ex.target.size(); ++i) {
            if (i) out += ' ';
            out += vocab.tokens[static_cast<std::size_t>(ex.target[i])];
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trainer state and checkpointing.

struct Trainer {
    Model model;
    AdamW opt;
    Rng rng;  // shuffles, book seeding, dead-unit reseeds
    int epochs_done = 0;
};

inline Trainer make_trainer(const ModelConfig& mcfg, const TrainRunConfig& tcfg) {
    Trainer tr;
    tr.model = make_model(mcfg);
    AdamWConfig oc;
    oc.lr = tcfg.lr;
    tr.opt = AdamW(oc);
    tr.rng.seed(tcfg.seed);
    return tr;
}

namespace detail {

inline void put_f64_vec(std::string& buf, const std::vector<double>& v) {
    put_u32(buf, static_cast<std::uint32_t>(v.size()));
    for (double x : v) put_f64(buf, x);
}

inline std::vector<double> read_f64_vec(ByteReader& r) {
    const std::uint32_t n = r.u32();
    std::vector<double> v(n);
    for (auto& x : v) x = r.f64();
    return v;
}

}  // namespace detail

constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: magic, version, model config, epochs done, named tensors, book,
// optimizer moments, RNG stream, then an FNV-1a checksum of all prior bytes.
inline void save_checkpoint(const std::string& path, const Trainer& tr) {
    const ModelConfig& c = tr.model.cfg;
    std::string buf = "NSPR";
    put_u32(buf, kCheckpointVersion);
    for (int field : {c.layers, c.width, c.slots, c.heads, c.ffn_mult, c.book_size, c.unit_dim,
                      c.vocab, c.max_seq})
        put_u32(buf, static_cast<std::uint32_t>(field));
    put_f64(buf, c.beta);
    put_f64(buf, c.lambda);
    put_f64(buf, c.ema_decay);
    put_u64(buf, c.seed);
    put_u32(buf, c.use_book ? 1 : 0);
    put_u32(buf, static_cast<std::uint32_t>(tr.epochs_done));

    put_u32(buf, static_cast<std::uint32_t>(tr.model.params.size()));
    for (std::size_t i = 0; i < tr.model.params.size(); ++i) {
        put_str(buf, tr.model.names[i]);
        put_u32(buf, static_cast<std::uint32_t>(tr.model.params[i].rows()));
        put_u32(buf, static_cast<std::uint32_t>(tr.model.params[i].cols()));
        for (double x : tr.model.params[i].value()) put_f64(buf, x);
    }

    detail::put_f64_vec(buf, tr.model.book.units);
    detail::put_f64_vec(buf, tr.model.book.ema_counts);
    detail::put_f64_vec(buf, tr.model.book.ema_sums);
    put_u32(buf, static_cast<std::uint32_t>(tr.model.book.usage_age.size()));
    for (int age : tr.model.book.usage_age) put_u32(buf, static_cast<std::uint32_t>(age));

    put_u64(buf, static_cast<std::uint64_t>(tr.opt.step_count));
    put_u32(buf, static_cast<std::uint32_t>(tr.opt.m.size()));
    for (std::size_t i = 0; i < tr.opt.m.size(); ++i) {
        detail::put_f64_vec(buf, tr.opt.m[i]);
        detail::put_f64_vec(buf, tr.opt.v[i]);
    }

    std::ostringstream rng_state;
    rng_state << tr.rng;
    put_str(buf, rng_state.str());

    put_u64(buf, fnv1a(buf.data(), buf.size()));
    const std::string tmp = path + ".tmp";
    write_text_file(tmp, buf);
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("save_checkpoint: cannot rename into place: " + path);
}

inline Trainer load_checkpoint(const std::string& path, int expected_vocab = -1) {
    const std::string buf = read_text_file(path);
    if (buf.size() < 12 || buf.substr(0, 4) != "NSPR")
        throw std::runtime_error("load_checkpoint: not a checkpoint file: " + path);
    ByteReader tail(buf);
    tail.pos = buf.size() - 8;
    if (tail.u64() != fnv1a(buf.data(), buf.size() - 8))
        throw std::runtime_error("load_checkpoint: corrupted file (checksum mismatch)");

    ByteReader r(buf);
    r.pos = 4;
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error("load_checkpoint: unsupported checkpoint version " +
                                 std::to_string(version));
    ModelConfig c;
    c.layers = static_cast<int>(r.u32());
    c.width = static_cast<int>(r.u32());
    c.slots = static_cast<int>(r.u32());
    c.heads = static_cast<int>(r.u32());
    c.ffn_mult = static_cast<int>(r.u32());
    c.book_size = static_cast<int>(r.u32());
    c.unit_dim = static_cast<int>(r.u32());
    c.vocab = static_cast<int>(r.u32());
    c.max_seq = static_cast<int>(r.u32());
    c.beta = r.f64();
    c.lambda = r.f64();
    c.ema_decay = r.f64();
    c.seed = r.u64();
    c.use_book = r.u32() != 0;
    if (expected_vocab >= 0 && c.vocab != expected_vocab)
        throw std::runtime_error("load_checkpoint: config mismatch: checkpoint vocab " +
                                 std::to_string(c.vocab) + ", expected " +
                                 std::to_string(expected_vocab));

    Trainer tr;
    tr.model = make_model(c);
    tr.epochs_done = static_cast<int>(r.u32());

    const std::uint32_t n_params = r.u32();
    if (n_params != tr.model.params.size())
        throw std::runtime_error("load_checkpoint: parameter count mismatch");
    for (std::uint32_t i = 0; i < n_params; ++i) {
        const std::string name = r.str();
        if (name != tr.model.names[i])
            throw std::runtime_error("load_checkpoint: tensor order mismatch at " + name);
        const int rows = static_cast<int>(r.u32());
        const int cols = static_cast<int>(r.u32());
        Tensor p = tr.model.params[i];
        if (rows != p.rows() || cols != p.cols())
            throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
        for (double& x : p.value()) x = r.f64();
    }

    tr.model.book.units = detail::read_f64_vec(r);
    tr.model.book.ema_counts = detail::read_f64_vec(r);
    tr.model.book.ema_sums = detail::read_f64_vec(r);
    const std::uint32_t n_age = r.u32();
    tr.model.book.usage_age.resize(n_age);
    for (auto& age : tr.model.book.usage_age) age = static_cast<int>(r.u32());

    AdamWConfig oc;
    tr.opt = AdamW(oc);
    tr.opt.step_count = static_cast<std::int64_t>(r.u64());
    const std::uint32_t n_opt = r.u32();
    tr.opt.m.resize(n_opt);
    tr.opt.v.resize(n_opt);
    for (std::uint32_t i = 0; i < n_opt; ++i) {
        tr.opt.m[i] = detail::read_f64_vec(r);
        tr.opt.v[i] = detail::read_f64_vec(r);
    }

    std::istringstream rng_state(r.str());
    rng_state >> tr.rng;
    return tr;
}

// ---------------------------------------------------------------------------
// Training loop.

struct EpochLog {
    int epoch = 0;
    double nll = 0.0;
    double vq = 0.0;
    double book_util = 0.0;
    double csr_probe = -1.0;  // -1 when the probe did not run this epoch
};

struct TrainResult {
    std::vector<EpochLog> log;
    bool book_healthy = true;  // final-epoch utilization >= 25% (book runs only)
};

inline std::string training_log_csv(const std::vector<EpochLog>& log) {
    std::string out = "epoch,nll,vq_loss,book_util,train_csr_probe\n";
    char line[256];
    for (const auto& e : log) {
        std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.nll, e.vq,
                      e.book_util, e.csr_probe);
        out += line;
    }
    return out;
}

// Greedy-decode every instance and score the fraction whose decoded plan
// executes to the goal. Used as the in-training progress probe.
inline double train_csr(const Model& model, const Vocabulary& vocab, const Domain& dom,
                        const std::vector<TaskInstance>& instances) {
    if (instances.empty()) return -1.0;
    int solved = 0;
    for (const auto& inst : instances) {
        EncodedContext ctx = encode_context(inst.init, inst.goal, dom, vocab);
        const int room = model.cfg.max_seq - static_cast<int>(ctx.ids.size());
        if (room <= 0) continue;
        std::vector<int> gen =
            greedy_decode(model, ctx.ids, model.memory_init(), room, Vocabulary::kEos);
        PlanDecode dec = decode_plan(gen, vocab, dom, inst.objects);
        if (dec.failure.has_value()) continue;
        ValidationResult val = validate(dom, inst, dec.actions);
        if (val.goal_reached) ++solved;
    }
    return static_cast<double>(solved) / static_cast<double>(instances.size());
}

namespace detail {

// Chunk stream for the EMA update: the continuous post-update memories of
// every layer, paired with the unit each chunk was quantized to.
inline void collect_ema_batch(const ForwardResult& fr, const ModelConfig& cfg,
                              std::vector<double>& chunks, std::vector<int>& assigned) {
    const int d = cfg.unit_dim;
    const int q = cfg.chunks_per_slot();
    for (const auto& layer : fr.trace) {
        for (int i = 0; i < cfg.slots; ++i)
            for (int c = 0; c < q; ++c) {
                const double* src = layer.memory.data() + static_cast<std::size_t>(i) * cfg.width +
                                    static_cast<std::size_t>(c) * d;
                chunks.insert(chunks.end(), src, src + d);
                assigned.push_back(layer.chunk_indices[static_cast<std::size_t>(i) * q + c]);
            }
    }
}

}  // namespace detail

// Data-dependent book initialization: run the dataset once with quantization
// disabled and seed the units from the observed working-memory chunks, so the
// book starts inside the region it has to cover.
inline void calibrate_book(Trainer& tr, const std::vector<TrainingExample>& dataset) {
    if (!tr.model.cfg.use_book || dataset.empty()) return;
    tr.model.cfg.use_book = false;
    std::vector<double> pool;
    for (const auto& ex : dataset) {
        std::vector<int> input = ex.context.ids;
        input.insert(input.end(), ex.target.begin(), ex.target.end());
        input.pop_back();  // teacher forcing never feeds the final token
        ForwardResult fr =
            forward(tr.model, input, tr.model.memory_init(), ForwardMode::InferPlain);
        for (const auto& layer : fr.trace)
            pool.insert(pool.end(), layer.memory.begin(), layer.memory.end());
    }
    tr.model.cfg.use_book = true;
    tr.model.book.seed_from_chunks(pool, tr.rng);
}

// One run of the supervised loop (Alg. 1). Resumable: a fresh trainer starts
// from epoch 1 (calibrating the book first); a loaded one continues after its
// last completed epoch with the identical shuffle stream.
inline TrainResult train(Trainer& tr, const std::vector<TrainingExample>& dataset,
                         const Vocabulary& vocab, const Domain& dom,
                         const std::vector<TaskInstance>& probe_instances,
                         const TrainRunConfig& cfg, const std::string& checkpoint_path = "") {
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs >= 1 required");
    if (cfg.batch != 1) throw std::invalid_argument("train: only batch size 1 is supported");
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    if (tr.model.cfg.vocab != vocab.size())
        throw std::invalid_argument("train: model/vocabulary size mismatch");
    tr.opt.cfg.lr = epoch_lr(cfg, std::max(1, tr.epochs_done + 1));

    Model& model = tr.model;
    const int n = static_cast<int>(dataset.size());
    if (tr.epochs_done == 0) calibrate_book(tr, dataset);

    TrainResult result;
    const int stop_epoch = cfg.stop_after > 0 ? std::min(cfg.stop_after, cfg.epochs) : cfg.epochs;
    for (int epoch = tr.epochs_done + 1; epoch <= stop_epoch; ++epoch) {
        tr.opt.cfg.lr = epoch_lr(cfg, epoch);
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        shuffle_inplace(tr.rng, order);

        double nll_sum = 0.0, vq_sum = 0.0;
        std::vector<char> unit_used(static_cast<std::size_t>(model.cfg.book_size), 0);
        for (int idx : order) {
            const TrainingExample& ex = dataset[static_cast<std::size_t>(idx)];
            std::vector<int> input = ex.context.ids;
            input.insert(input.end(), ex.target.begin(), ex.target.end());
            input.pop_back();

            zero_grad(model.params);
            ForwardResult fr = forward(model, input, model.memory_init(), ForwardMode::Train);
            const int ctx_len = static_cast<int>(ex.context.ids.size());
            Tensor plan_logits = slice_rows(fr.logits, ctx_len - 1,
                                            ctx_len - 1 + static_cast<int>(ex.target.size()));
            Tensor nll = cross_entropy(plan_logits, ex.target);
            Tensor loss = add(nll, scale(fr.vq_loss, model.cfg.lambda));
            backward(loss);
            clip_gradients(model.params, cfg.grad_clip);
            tr.opt.step(model.params);

            if (model.cfg.use_book) {
                std::vector<double> chunks;
                std::vector<int> assigned;
                detail::collect_ema_batch(fr, model.cfg, chunks, assigned);
                if (cfg.use_ema)
                    ema_update(model.book, chunks, assigned, model.cfg.ema_decay, tr.rng);
                for (int k : assigned) unit_used[static_cast<std::size_t>(k)] = 1;
            }
            nll_sum += nll.item();
            vq_sum += fr.vq_loss.item();
        }

        EpochLog log;
        log.epoch = epoch;
        log.nll = nll_sum / n;
        log.vq = vq_sum / n;
        int used = 0;
        for (char u : unit_used) used += u;
        log.book_util =
            model.cfg.use_book ? static_cast<double>(used) / model.cfg.book_size : 0.0;
        const bool probe_now = cfg.probe_interval > 0 && !probe_instances.empty() &&
                               (epoch % cfg.probe_interval == 0 || epoch == cfg.epochs);
        if (probe_now) log.csr_probe = train_csr(model, vocab, dom, probe_instances);
        result.log.push_back(log);
        tr.epochs_done = epoch;

        const bool save_now =
            !checkpoint_path.empty() &&
            (epoch == stop_epoch ||
             (cfg.checkpoint_interval > 0 && epoch % cfg.checkpoint_interval == 0));
        if (save_now) save_checkpoint(checkpoint_path, tr);
    }

    if (model.cfg.use_book && !result.log.empty())
        result.book_healthy = result.log.back().book_util >= 0.25;
    return result;
}

}  // namespace nesypr
