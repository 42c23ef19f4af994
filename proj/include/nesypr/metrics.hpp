#pragma once
// Evaluation metrics over persisted episode records. Everything in this
// header is pure over logs: an EpisodeRow carries only deterministic fields
// (no wall-clock), so a report recomputed from the serialized JSON-lines log
// reproduces the original bit for bit. Formulas:
//   CSR = 100 * |successes| / N
//   CGC = 100 * sum(goals met) / sum(goal atoms)
//   Exe = 100 * (executed actions) / (emitted actions), a malformed emission
//         counting as emitted and infeasible
//   SPL = mean over episodes of success * l / max(l, p), l = optimal length,
//         p = executed length
// plus the per-phase continual table (FWT/BWT/FR/RR) defined below.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "nesypr/inference.hpp"
#include "nesypr/strips.hpp"

namespace nesypr {

// Which pass of the protocol produced a row. "first" marks a task's live
// encounter inside a continual sequence (banks evolving), "reeval" a frozen
// re-evaluation pass, "fwt_baseline" the empty-bank counterfactual used by
// forward transfer. Plain one-shot evaluations are "eval".
enum class EvalKind { kEval, kFirst, kReeval, kFwtBaseline };

inline const char* eval_kind_name(EvalKind k) {
    switch (k) {
        case EvalKind::kEval: return "eval";
        case EvalKind::kFirst: return "first";
        case EvalKind::kReeval: return "reeval";
        case EvalKind::kFwtBaseline: return "fwt_baseline";
    }
    throw std::logic_error("eval_kind_name: bad enum");
}

inline EvalKind eval_kind_from(const std::string& s) {
    if (s == "eval") return EvalKind::kEval;
    if (s == "first") return EvalKind::kFirst;
    if (s == "reeval") return EvalKind::kReeval;
    if (s == "fwt_baseline") return EvalKind::kFwtBaseline;
    throw std::runtime_error("eval_kind_from: unknown kind '" + s + "'");
}

struct EpisodeRow {
    std::string instance_id;
    std::string task_type;
    EvalKind kind = EvalKind::kEval;
    int phase = -1;      // continual phase index, -1 outside sequences
    int seq_index = -1;  // position in the task sequence, -1 outside
    bool success = false;
    int goals_met = 0;
    int goal_total = 0;
    int emitted = 0;   // action emissions, malformed groups included
    int executed = 0;  // emissions the engine actually applied
    int plan_length = 0;
    int optimal_length = -1;
    bool parse_failed = false;
    bool decode_truncated = false;
    std::vector<int> chunk_indices;  // flattened final-step unit ids

    friend bool operator==(const EpisodeRow&, const EpisodeRow&) = default;
};

// Flatten a runner result into a log row. Latency is deliberately dropped:
// persisted logs must be byte-identical across reruns of the same seed.
inline EpisodeRow episode_row(const EpisodeResult& ep, const TaskInstance& inst,
                              EvalKind kind = EvalKind::kEval, int phase = -1,
                              int seq_index = -1) {
    EpisodeRow r;
    r.instance_id = ep.instance_id;
    r.task_type = inst.task_type;
    r.kind = kind;
    r.phase = phase;
    r.seq_index = seq_index;
    r.success = ep.success;
    r.goals_met = ep.goals_met;
    r.goal_total = ep.goal_total;
    r.emitted = ep.emitted;
    r.executed = ep.executed_prefix;
    r.plan_length = ep.plan_length;
    r.optimal_length = ep.optimal_length;
    r.parse_failed = ep.parse_failed;
    r.decode_truncated = ep.decode_truncated;
    for (const auto& layer : ep.chunk_indices)
        r.chunk_indices.insert(r.chunk_indices.end(), layer.begin(), layer.end());
    return r;
}

// ---------------------------------------------------------------------------
// Headline metrics.

inline double csr(const std::vector<EpisodeRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("csr: empty results");
    long s = 0;
    for (const auto& r : rows) s += r.success ? 1 : 0;
    return 100.0 * static_cast<double>(s) / static_cast<double>(rows.size());
}

inline double cgc(const std::vector<EpisodeRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("cgc: empty results");
    long met = 0, total = 0;
    for (const auto& r : rows) {
        met += r.goals_met;
        total += r.goal_total;
    }
    if (total == 0) throw std::invalid_argument("cgc: zero goal atoms");
    return 100.0 * static_cast<double>(met) / static_cast<double>(total);
}

inline double exe(const std::vector<EpisodeRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("exe: empty results");
    long ok = 0, emitted = 0;
    for (const auto& r : rows) {
        ok += r.executed;
        emitted += r.emitted;
    }
    if (emitted == 0) throw std::invalid_argument("exe: zero emitted actions");
    return 100.0 * static_cast<double>(ok) / static_cast<double>(emitted);
}

inline double spl(const std::vector<EpisodeRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("spl: empty results");
    double acc = 0.0;
    for (const auto& r : rows) {
        if (r.optimal_length < 0)
            throw std::invalid_argument("spl: missing optimal length for " + r.instance_id);
        if (!r.success) continue;
        // A goal already satisfied at the start has optimal length zero; a
        // zero-action success there is perfectly efficient, anything longer
        // scores zero under l / max(l, p).
        if (r.optimal_length == 0) {
            acc += (r.executed == 0) ? 1.0 : 0.0;
            continue;
        }
        acc += static_cast<double>(r.optimal_length) /
               static_cast<double>(std::max(r.optimal_length, r.executed));
    }
    return acc / static_cast<double>(rows.size());
}

// ---------------------------------------------------------------------------
// Continual phase table.
//
// At a re-evaluation phase k (banks frozen), with a task's prior evaluations
// being its live first encounter plus any earlier re-evaluations:
//   FR_k  = 100 * |{succeeded in some prior evaluation, fails at k}|
//               / |{succeeded in some prior evaluation}|
//   RR_k  = 100 * |{failed in some prior evaluation, succeeds at k}|
//               / |{failed in some prior evaluation}|
//   BWT_k = mean success at k over tasks first seen in phases < k
//           minus their mean success at first encounter
//   FWT_k = mean first-encounter success of phase k's new tasks
//           minus their mean success under empty banks
// Whenever a denominator set is empty the value is pinned to zero and the
// matching *_undef flag is raised.

struct PhaseRow {
    int phase = 0;
    int n_new = 0;     // tasks first encountered in this phase
    int n_reeval = 0;  // rows re-evaluated at this phase
    double fwt = 0.0, bwt = 0.0, fr = 0.0, rr = 0.0;
    bool fwt_undef = false, bwt_undef = false, fr_undef = false, rr_undef = false;

    friend bool operator==(const PhaseRow&, const PhaseRow&) = default;
};

inline std::vector<PhaseRow> continual_metrics(const std::vector<EpisodeRow>& rows) {
    int n_phases = 0;
    for (const auto& r : rows) n_phases = std::max(n_phases, r.phase + 1);

    // Per-task evaluation history ordered by (phase, first-before-reeval).
    struct Eval {
        int key;  // 2*phase for live encounters, 2*phase+1 for re-evaluations
        bool success;
    };
    std::map<std::string, std::vector<Eval>> history;
    std::map<std::string, int> first_phase;        // earliest live encounter
    std::map<std::string, int> first_seq;          // its sequence position
    std::map<std::string, bool> first_success;     // outcome of that encounter
    std::map<std::pair<std::string, int>, bool> baseline;  // (id, seq) -> empty-bank outcome
    for (const auto& r : rows) {
        if (r.kind == EvalKind::kFirst) {
            history[r.instance_id].push_back({2 * r.phase, r.success});
            if (!first_phase.count(r.instance_id)) {
                first_phase[r.instance_id] = r.phase;
                first_seq[r.instance_id] = r.seq_index;
                first_success[r.instance_id] = r.success;
            }
        } else if (r.kind == EvalKind::kReeval) {
            history[r.instance_id].push_back({2 * r.phase + 1, r.success});
        } else if (r.kind == EvalKind::kFwtBaseline) {
            baseline[{r.instance_id, r.seq_index}] = r.success;
        }
    }
    for (auto& [id, evals] : history)
        std::stable_sort(evals.begin(), evals.end(),
                         [](const Eval& a, const Eval& b) { return a.key < b.key; });

    std::vector<PhaseRow> out;
    for (int k = 0; k < n_phases; ++k) {
        PhaseRow ph;
        ph.phase = k;

        // Forward transfer over this phase's new tasks (a repeated id is only
        // new at its earliest encounter): live outcome minus the paired
        // empty-bank counterfactual, averaged over tasks with both.
        long live = 0, base = 0, n_new = 0;
        for (const auto& r : rows) {
            if (r.kind != EvalKind::kFirst || r.phase != k) continue;
            if (first_seq[r.instance_id] != r.seq_index) continue;
            auto it = baseline.find({r.instance_id, r.seq_index});
            if (it == baseline.end()) continue;
            ++n_new;
            live += r.success ? 1 : 0;
            base += it->second ? 1 : 0;
        }
        ph.n_new = static_cast<int>(n_new);
        if (n_new > 0) {
            ph.fwt = 100.0 * static_cast<double>(live) / static_cast<double>(n_new) -
                     100.0 * static_cast<double>(base) / static_cast<double>(n_new);
        } else {
            ph.fwt_undef = true;
        }

        // Transition counts over rows re-evaluated at this phase.
        long fr_den = 0, fr_num = 0, rr_den = 0, rr_num = 0;
        long bwt_n = 0, bwt_now = 0, bwt_first = 0;
        for (const auto& r : rows) {
            if (r.kind != EvalKind::kReeval || r.phase != k) continue;
            ++ph.n_reeval;
            const int now_key = 2 * k + 1;
            bool succeeded_before = false, failed_before = false;
            for (const Eval& e : history[r.instance_id]) {
                if (e.key >= now_key) break;
                (e.success ? succeeded_before : failed_before) = true;
            }
            if (succeeded_before) {
                ++fr_den;
                if (!r.success) ++fr_num;
            }
            if (failed_before) {
                ++rr_den;
                if (r.success) ++rr_num;
            }
            if (first_phase.count(r.instance_id) && first_phase[r.instance_id] < k) {
                ++bwt_n;
                bwt_now += r.success ? 1 : 0;
                bwt_first += first_success[r.instance_id] ? 1 : 0;
            }
        }
        if (fr_den > 0)
            ph.fr = 100.0 * static_cast<double>(fr_num) / static_cast<double>(fr_den);
        else
            ph.fr_undef = true;
        if (rr_den > 0)
            ph.rr = 100.0 * static_cast<double>(rr_num) / static_cast<double>(rr_den);
        else
            ph.rr_undef = true;
        if (bwt_n > 0) {
            ph.bwt = 100.0 * static_cast<double>(bwt_now) / static_cast<double>(bwt_n) -
                     100.0 * static_cast<double>(bwt_first) / static_cast<double>(bwt_n);
        } else {
            ph.bwt_undef = true;
        }
        out.push_back(ph);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Aggregate report.

struct MetricsReport {
    double csr = 0.0, cgc = 0.0, exe = 0.0, spl = 0.0;
    int episodes = 0;  // live rows behind the headline numbers
    std::vector<PhaseRow> phases;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Headline numbers aggregate the live stream (plain evaluations plus first
// encounters); counterfactual and frozen re-evaluation rows feed only the
// phase table.
inline MetricsReport make_report(const std::vector<EpisodeRow>& rows) {
    std::vector<EpisodeRow> live;
    bool continual = false;
    for (const auto& r : rows) {
        if (r.kind == EvalKind::kEval || r.kind == EvalKind::kFirst) live.push_back(r);
        if (r.phase >= 0) continual = true;
    }
    MetricsReport rep;
    rep.csr = csr(live);
    rep.cgc = cgc(live);
    rep.exe = exe(live);
    rep.spl = spl(live);
    rep.episodes = static_cast<int>(live.size());
    if (continual) rep.phases = continual_metrics(rows);
    return rep;
}

// ---------------------------------------------------------------------------
// Procedure-unit usage by task type: how often each unit id appears in the
// banked chunk indices of a task type's episodes, one normalized row per type.

struct UsageReport {
    std::vector<std::string> task_types;     // row labels, sorted
    int num_units = 0;                       // column count
    std::vector<std::vector<double>> rows;   // each sums to 1
};

inline UsageReport codebook_usage(const std::vector<EpisodeRow>& rows, int num_units) {
    if (rows.empty()) throw std::invalid_argument("codebook_usage: empty logs");
    if (num_units < 1) throw std::invalid_argument("codebook_usage: num_units must be positive");
    std::map<std::string, std::vector<long>> counts;
    for (const auto& r : rows) {
        auto& c = counts.try_emplace(r.task_type, std::vector<long>(num_units, 0)).first->second;
        for (int u : r.chunk_indices) {
            if (u < 0 || u >= num_units)
                throw std::logic_error("codebook_usage: unit id out of range");
            ++c[static_cast<std::size_t>(u)];
        }
    }
    UsageReport rep;
    rep.num_units = num_units;
    for (const auto& [type, c] : counts) {
        long total = 0;
        for (long v : c) total += v;
        if (total == 0) continue;  // no banked chunks for this type, nothing to normalize
        rep.task_types.push_back(type);
        std::vector<double> row(c.size());
        for (std::size_t i = 0; i < c.size(); ++i)
            row[i] = static_cast<double>(c[i]) / static_cast<double>(total);
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Serialization. Doubles go through %.17g, which round-trips IEEE binary64.

inline std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline nlohmann::json episode_to_json(const EpisodeRow& r) {
    nlohmann::json j;
    j["id"] = r.instance_id;
    j["task_type"] = r.task_type;
    j["kind"] = eval_kind_name(r.kind);
    j["phase"] = r.phase;
    j["seq"] = r.seq_index;
    j["success"] = r.success;
    j["goals_met"] = r.goals_met;
    j["goal_total"] = r.goal_total;
    j["emitted"] = r.emitted;
    j["executed"] = r.executed;
    j["plan_length"] = r.plan_length;
    j["optimal_length"] = r.optimal_length;
    j["parse_failed"] = r.parse_failed;
    j["decode_truncated"] = r.decode_truncated;
    j["chunks"] = r.chunk_indices;
    return j;
}

inline EpisodeRow episode_from_json(const nlohmann::json& j) {
    EpisodeRow r;
    r.instance_id = j.at("id").get<std::string>();
    r.task_type = j.at("task_type").get<std::string>();
    r.kind = eval_kind_from(j.at("kind").get<std::string>());
    r.phase = j.at("phase").get<int>();
    r.seq_index = j.at("seq").get<int>();
    r.success = j.at("success").get<bool>();
    r.goals_met = j.at("goals_met").get<int>();
    r.goal_total = j.at("goal_total").get<int>();
    r.emitted = j.at("emitted").get<int>();
    r.executed = j.at("executed").get<int>();
    r.plan_length = j.at("plan_length").get<int>();
    r.optimal_length = j.at("optimal_length").get<int>();
    r.parse_failed = j.at("parse_failed").get<bool>();
    r.decode_truncated = j.at("decode_truncated").get<bool>();
    r.chunk_indices = j.at("chunks").get<std::vector<int>>();
    return r;
}

inline std::string episodes_to_jsonl(const std::vector<EpisodeRow>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += episode_to_json(r).dump();
        out += '\n';
    }
    return out;
}

inline std::vector<EpisodeRow> episodes_from_jsonl(const std::string& text) {
    std::vector<EpisodeRow> rows;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        ++line_no;
        std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        try {
            rows.push_back(episode_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("episodes_from_jsonl: line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
    }
    return rows;
}

inline nlohmann::json report_to_json(const MetricsReport& rep) {
    nlohmann::json j;
    j["csr"] = rep.csr;
    j["cgc"] = rep.cgc;
    j["exe"] = rep.exe;
    j["spl"] = rep.spl;
    j["episodes"] = rep.episodes;
    j["phases"] = nlohmann::json::array();
    for (const auto& p : rep.phases) {
        nlohmann::json pj;
        pj["phase"] = p.phase;
        pj["n_new"] = p.n_new;
        pj["n_reeval"] = p.n_reeval;
        pj["fwt"] = p.fwt;
        pj["bwt"] = p.bwt;
        pj["fr"] = p.fr;
        pj["rr"] = p.rr;
        pj["fwt_undef"] = p.fwt_undef;
        pj["bwt_undef"] = p.bwt_undef;
        pj["fr_undef"] = p.fr_undef;
        pj["rr_undef"] = p.rr_undef;
        j["phases"].push_back(pj);
    }
    return j;
}

inline std::string metrics_json(const MetricsReport& rep) { return report_to_json(rep).dump(2) + "\n"; }

inline std::string phases_csv(const std::vector<PhaseRow>& phases) {
    std::string out = "phase,n_new,n_reeval,fwt,bwt,fr,rr,fwt_undef,bwt_undef,fr_undef,rr_undef\n";
    for (const auto& p : phases) {
        out += std::to_string(p.phase) + "," + std::to_string(p.n_new) + "," +
               std::to_string(p.n_reeval) + "," + fmt_g17(p.fwt) + "," + fmt_g17(p.bwt) + "," +
               fmt_g17(p.fr) + "," + fmt_g17(p.rr) + "," + std::to_string(p.fwt_undef ? 1 : 0) +
               "," + std::to_string(p.bwt_undef ? 1 : 0) + "," + std::to_string(p.fr_undef ? 1 : 0) +
               "," + std::to_string(p.rr_undef ? 1 : 0) + "\n";
    }
    return out;
}

inline std::string usage_csv(const UsageReport& rep) {
    std::string out = "task_type";
    for (int u = 0; u < rep.num_units; ++u) out += ",unit_" + std::to_string(u);
    out += "\n";
    for (std::size_t i = 0; i < rep.task_types.size(); ++i) {
        out += rep.task_types[i];
        for (double v : rep.rows[i]) out += "," + fmt_g17(v);
        out += "\n";
    }
    return out;
}

}  // namespace nesypr
