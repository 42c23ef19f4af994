#pragma once
// Evaluation orchestration: plain suite evaluation, the continual-sequence
// protocol (live encounters, bank growth between tasks, frozen periodic
// re-evaluation, empty-bank counterfactuals for forward transfer), the
// planner-vs-model latency study, and the line-oriented config format used
// by the command-line tool.

#include <chrono>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "nesypr/inference.hpp"
#include "nesypr/metrics.hpp"
#include "nesypr/minecraft.hpp"
#include "nesypr/planner.hpp"
#include "nesypr/training.hpp"

namespace nesypr {

// ---------------------------------------------------------------------------
// Plain suite evaluation: one episode per instance against a fixed (or, with
// `update`, task-by-task growing) bank state.

inline std::vector<EpisodeRow> run_suite(const Model& m, const Vocabulary& vocab, const Domain& dom,
                                         const std::vector<TaskInstance>& instances, Banks& banks,
                                         const DecodeConfig& dcfg, bool closed_loop = false,
                                         int max_steps = 24, bool update = false) {
    std::vector<EpisodeRow> rows;
    rows.reserve(instances.size());
    for (const auto& inst : instances) {
        EpisodeResult ep = closed_loop
                               ? run_closed_loop(m, vocab, dom, inst, banks, dcfg, max_steps)
                               : run_open_loop(m, vocab, dom, inst, banks, dcfg);
        rows.push_back(episode_row(ep, inst));
        if (update) update_banks(banks, ep, m.cfg.width);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Continual sequence protocol.

struct SequenceConfig {
    std::vector<std::string> ids;    // task order, possibly with repeats
    std::vector<int> phase_end;      // exclusive ends, strictly increasing,
                                     // the last one covering every task
    std::vector<int> reeval_phases;  // phases that re-run all tasks seen so far
    std::uint64_t seed = 0;
    bool closed_loop = false;
    int max_steps = 24;  // closed-loop step budget
};

inline void validate_sequence(const SequenceConfig& seq,
                              const std::map<std::string, const TaskInstance*>& by_id) {
    if (seq.ids.empty()) throw std::invalid_argument("sequence: no task ids");
    if (seq.phase_end.empty()) throw std::invalid_argument("sequence: no phase boundaries");
    int prev = 0;
    for (int b : seq.phase_end) {
        if (b <= prev)
            throw std::invalid_argument("sequence: phase boundaries must be strictly increasing");
        prev = b;
    }
    if (seq.phase_end.back() != static_cast<int>(seq.ids.size()))
        throw std::invalid_argument("sequence: last phase boundary must equal the task count");
    for (const auto& id : seq.ids)
        if (!by_id.count(id)) throw std::invalid_argument("sequence: unknown task id " + id);
    for (int r : seq.reeval_phases)
        if (r < 0 || r >= static_cast<int>(seq.phase_end.size()))
            throw std::invalid_argument("sequence: re-evaluation phase out of range");
    if (seq.closed_loop && seq.max_steps < 1)
        throw std::invalid_argument("sequence: max_steps >= 1 required");
}

struct ContinualOptions {
    DecodeConfig decode;
    int bank_capacity = 4096;
    bool final_layer_only = false;
    bool update_banks = true;      // off: the stateless ablation
    bool bank_positive = true;     // bank successes into the positive store
    bool bank_negative = true;     // bank failures into the negative store
    bool persist_memory = false;   // thread working memory across live tasks
};

struct ContinualResult {
    std::vector<EpisodeRow> rows;  // full log in execution order
    MetricsReport report;
    Banks banks;  // final bank state
};

// Runs the sequence phase by phase. Each task is evaluated live (banks as
// accumulated so far) and once more under permanently empty banks — the
// forward-transfer counterfactual, which never touches bank state. After a
// phase listed in the re-evaluation schedule, every task seen so far is
// re-run with banks frozen. Working memory is task-scoped unless
// persist_memory threads it across live episodes; counterfactuals and
// re-evaluations always run on throwaway copies.
inline ContinualResult continual_run(const Model& m, const Vocabulary& vocab, const Domain& dom,
                                     const std::vector<TaskInstance>& pool,
                                     const SequenceConfig& seq, const ContinualOptions& opts) {
    std::map<std::string, const TaskInstance*> by_id;
    for (const auto& t : pool) by_id[t.id] = &t;
    validate_sequence(seq, by_id);

    auto run_one = [&](const TaskInstance& inst, const Banks& b, Tensor* mem) {
        return seq.closed_loop
                   ? run_closed_loop(m, vocab, dom, inst, b, opts.decode, seq.max_steps, mem)
                   : run_open_loop(m, vocab, dom, inst, b, opts.decode, mem);
    };

    ContinualResult res;
    res.banks = make_banks(m.cfg.layers, opts.bank_capacity, opts.final_layer_only);
    const Banks empty_banks = make_banks(m.cfg.layers, opts.bank_capacity, opts.final_layer_only);
    Tensor memory = m.memory_init();

    int start = 0;
    for (int k = 0; k < static_cast<int>(seq.phase_end.size()); ++k) {
        const int end = seq.phase_end[static_cast<std::size_t>(k)];
        for (int i = start; i < end; ++i) {
            const TaskInstance& inst = *by_id.at(seq.ids[static_cast<std::size_t>(i)]);
            Tensor pre = memory;  // counterfactual starts where the live run does
            EpisodeResult ep = run_one(inst, res.banks, opts.persist_memory ? &memory : nullptr);
            res.rows.push_back(episode_row(ep, inst, EvalKind::kFirst, k, i));

            Tensor scratch = pre;
            EpisodeResult base =
                run_one(inst, empty_banks, opts.persist_memory ? &scratch : nullptr);
            res.rows.push_back(episode_row(base, inst, EvalKind::kFwtBaseline, k, i));

            if (opts.update_banks && ((ep.success && opts.bank_positive) ||
                                      (!ep.success && opts.bank_negative)))
                update_banks(res.banks, ep, m.cfg.width);
        }
        bool scheduled = false;
        for (int r : seq.reeval_phases) scheduled = scheduled || r == k;
        if (scheduled) {
            for (int i = 0; i < end; ++i) {
                const TaskInstance& inst = *by_id.at(seq.ids[static_cast<std::size_t>(i)]);
                Tensor scratch = memory;
                EpisodeResult re =
                    run_one(inst, res.banks, opts.persist_memory ? &scratch : nullptr);
                res.rows.push_back(episode_row(re, inst, EvalKind::kReeval, k, i));
            }
        }
        start = end;
    }
    res.report = make_report(res.rows);
    return res;
}

// ---------------------------------------------------------------------------
// Planner-vs-model latency study: wall-clock and success per instance, then
// success-under-budget curves for a list of time budgets.

struct PlannerCompareRow {
    std::string instance_id;
    double model_latency_s = 0.0;
    bool model_success = false;
    double planner_latency_s = 0.0;
    bool planner_success = false;
    int model_plan_length = 0;
    int planner_plan_length = 0;
};

struct PlannerCompareStudy {
    std::vector<PlannerCompareRow> rows;
    std::vector<double> budgets;
    std::vector<double> model_under_budget;    // percent solved within budget
    std::vector<double> planner_under_budget;
};

inline PlannerCompareStudy compare_planner(const Model& m, const Vocabulary& vocab,
                                           const Domain& dom,
                                           const std::vector<TaskInstance>& instances,
                                           const Banks& banks, const DecodeConfig& dcfg,
                                           const std::vector<double>& budgets,
                                           double planner_timeout_s = 600.0,
                                           bool planner_bfs = false) {
    if (instances.empty()) throw std::invalid_argument("compare_planner: empty instance set");
    PlannerCompareStudy study;
    study.budgets = budgets;
    for (const auto& inst : instances) {
        PlannerCompareRow row;
        row.instance_id = inst.id;
        EpisodeResult ep = run_open_loop(m, vocab, dom, inst, banks, dcfg);
        row.model_latency_s = ep.latency_s;
        row.model_success = ep.success;
        row.model_plan_length = ep.plan_length;
        PlannerOptions popt;
        popt.timeout_s = planner_timeout_s;
        popt.use_bfs = planner_bfs;
        PlannerReport rep = solve(dom, inst, popt);
        row.planner_latency_s = rep.elapsed_s;
        row.planner_success = rep.solved();
        row.planner_plan_length = static_cast<int>(rep.plan.size());
        study.rows.push_back(std::move(row));
    }
    const double n = static_cast<double>(study.rows.size());
    for (double b : budgets) {
        long mok = 0, pok = 0;
        for (const auto& r : study.rows) {
            if (r.model_success && r.model_latency_s <= b) ++mok;
            if (r.planner_success && r.planner_latency_s <= b) ++pok;
        }
        study.model_under_budget.push_back(100.0 * static_cast<double>(mok) / n);
        study.planner_under_budget.push_back(100.0 * static_cast<double>(pok) / n);
    }
    return study;
}

// Per-instance rows and per-budget summary rows share one CSV; the `section`
// column tells them apart.
inline std::string planner_compare_csv(const PlannerCompareStudy& study) {
    std::string out =
        "section,instance_id,budget_s,model_latency_s,model_success,model_plan_length,"
        "planner_latency_s,planner_success,planner_plan_length,"
        "model_under_budget_pct,planner_under_budget_pct\n";
    for (const auto& r : study.rows) {
        out += "instance," + r.instance_id + ",," + fmt_g17(r.model_latency_s) + "," +
               std::to_string(r.model_success ? 1 : 0) + "," +
               std::to_string(r.model_plan_length) + "," + fmt_g17(r.planner_latency_s) + "," +
               std::to_string(r.planner_success ? 1 : 0) + "," +
               std::to_string(r.planner_plan_length) + ",,\n";
    }
    for (std::size_t i = 0; i < study.budgets.size(); ++i) {
        out += "summary,," + fmt_g17(study.budgets[i]) + ",,,,,,," +
               fmt_g17(study.model_under_budget[i]) + "," +
               fmt_g17(study.planner_under_budget[i]) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config files: `key = value` lines grouped under `[section]` headers, `#`
// starting a comment. Keys are flattened to "section.key".

namespace harnessdetail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace harnessdetail

inline std::map<std::string, std::string> parse_config(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::string section;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = harnessdetail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw std::runtime_error("config line " + std::to_string(line_no) +
                                         ": malformed section header");
            section = harnessdetail::trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw std::runtime_error("config line " + std::to_string(line_no) +
                                         ": empty section name");
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": expected key = value");
        std::string key = harnessdetail::trim(line.substr(0, eq));
        std::string val = harnessdetail::trim(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
        kv[section.empty() ? key : section + "." + key] = val;
    }
    return kv;
}

using ConfigMap = std::map<std::string, std::string>;

inline std::string cfg_str(const ConfigMap& kv, const std::string& key, const std::string& def) {
    auto it = kv.find(key);
    return it == kv.end() ? def : it->second;
}

inline long long cfg_int(const ConfigMap& kv, const std::string& key, long long def) {
    auto it = kv.find(key);
    if (it == kv.end()) return def;
    try {
        std::size_t used = 0;
        long long v = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' expects an integer, got '" +
                                 it->second + "'");
    }
}

inline double cfg_double(const ConfigMap& kv, const std::string& key, double def) {
    auto it = kv.find(key);
    if (it == kv.end()) return def;
    try {
        std::size_t used = 0;
        double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' expects a number, got '" +
                                 it->second + "'");
    }
}

inline bool cfg_bool(const ConfigMap& kv, const std::string& key, bool def) {
    auto it = kv.find(key);
    if (it == kv.end()) return def;
    const std::string& v = it->second;
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw std::runtime_error("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

// Comma- or whitespace-separated value lists.
inline std::vector<std::string> cfg_list(const ConfigMap& kv, const std::string& key) {
    std::string raw = cfg_str(kv, key, "");
    for (char& c : raw)
        if (c == ',') c = ' ';
    return split_ws(raw);
}

// ---------------------------------------------------------------------------
// Config-to-struct adapters shared by the CLI and tests. Only keys present in
// the map override the compiled defaults.

inline SuiteConfig suite_config_from(const ConfigMap& kv) {
    SuiteConfig c;
    c.grid_w = static_cast<int>(cfg_int(kv, "suite.grid_w", c.grid_w));
    c.grid_h = static_cast<int>(cfg_int(kv, "suite.grid_h", c.grid_h));
    c.n_train = static_cast<int>(cfg_int(kv, "suite.n_train", c.n_train));
    c.n_test = static_cast<int>(cfg_int(kv, "suite.n_test", c.n_test));
    c.n_hard = static_cast<int>(cfg_int(kv, "suite.n_hard", c.n_hard));
    c.hard_min_objects =
        static_cast<int>(cfg_int(kv, "suite.hard_min_objects", c.hard_min_objects));
    c.depth_cap = static_cast<int>(cfg_int(kv, "suite.depth_cap", c.depth_cap));
    c.min_plan_length = static_cast<int>(cfg_int(kv, "suite.min_plan_length", c.min_plan_length));
    c.gen_timeout_s = cfg_double(kv, "suite.gen_timeout_s", c.gen_timeout_s);
    return c;
}

inline ModelConfig model_config_from(const ConfigMap& kv) {
    ModelConfig c;
    c.layers = static_cast<int>(cfg_int(kv, "model.layers", c.layers));
    c.width = static_cast<int>(cfg_int(kv, "model.width", c.width));
    c.slots = static_cast<int>(cfg_int(kv, "model.slots", c.slots));
    c.heads = static_cast<int>(cfg_int(kv, "model.heads", c.heads));
    c.ffn_mult = static_cast<int>(cfg_int(kv, "model.ffn_mult", c.ffn_mult));
    c.book_size = static_cast<int>(cfg_int(kv, "model.book_size", c.book_size));
    c.unit_dim = static_cast<int>(cfg_int(kv, "model.unit_dim", c.unit_dim));
    c.beta = cfg_double(kv, "model.beta", c.beta);
    c.lambda = cfg_double(kv, "model.lambda", c.lambda);
    c.ema_decay = cfg_double(kv, "model.ema_decay", c.ema_decay);
    c.max_seq = static_cast<int>(cfg_int(kv, "model.max_seq", c.max_seq));
    c.use_book = cfg_bool(kv, "model.use_book", c.use_book);
    return c;
}

inline TrainRunConfig train_config_from(const ConfigMap& kv) {
    TrainRunConfig c;
    c.epochs = static_cast<int>(cfg_int(kv, "train.epochs", c.epochs));
    c.lr = cfg_double(kv, "train.lr", c.lr);
    c.grad_clip = cfg_double(kv, "train.grad_clip", c.grad_clip);
    c.checkpoint_interval =
        static_cast<int>(cfg_int(kv, "train.checkpoint_interval", c.checkpoint_interval));
    c.probe_interval = static_cast<int>(cfg_int(kv, "train.probe_interval", c.probe_interval));
    c.use_ema = cfg_bool(kv, "train.use_ema", c.use_ema);
    c.warmup_epochs = static_cast<int>(cfg_int(kv, "train.warmup_epochs", c.warmup_epochs));
    c.lr_final_factor = cfg_double(kv, "train.lr_final_factor", c.lr_final_factor);
    c.stop_after = static_cast<int>(cfg_int(kv, "train.stop_after", c.stop_after));
    return c;
}

inline DecodeConfig decode_config_from(const ConfigMap& kv) {
    DecodeConfig c;
    c.max_tokens = static_cast<int>(cfg_int(kv, "decode.max_tokens", c.max_tokens));
    c.theta = cfg_double(kv, "decode.theta", c.theta);
    c.upsilon = cfg_double(kv, "decode.upsilon", c.upsilon);
    c.use_cp = cfg_bool(kv, "decode.use_cp", c.use_cp);
    c.use_banks = cfg_bool(kv, "decode.use_banks", c.use_banks);
    c.follow_negative = cfg_bool(kv, "decode.follow_negative", c.follow_negative);
    return c;
}

}  // namespace nesypr
