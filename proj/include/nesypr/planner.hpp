#pragma once

// Optimal planner for the STRIPS subset: A* over an indexed grounding with a
// capped goal-count heuristic, plus a plain-BFS fallback. Unit action costs.
//
// Heuristic: h(s) = ceil(unsatisfied_goal_atoms / max_add_effects), where
// max_add_effects is the largest number of add effects any schema carries.
// One action can satisfy at most max_add_effects goal atoms, so h never
// overestimates, and h drops by at most 1 per step, so it is consistent —
// no node reopening is needed and returned plans are optimal.

#include <chrono>
#include <cstdint>
#include <queue>
#include <unordered_map>
#include <vector>

#include "nesypr/strips.hpp"
#include "nesypr/util.hpp"

namespace nesypr {

struct PlannerOptions {
    double timeout_s = 60.0;
    bool use_bfs = false;  // force breadth-first search instead of A*
};

enum class PlannerStatus { Solved, Unsolvable, Timeout };

struct PlannerReport {
    PlannerStatus status = PlannerStatus::Unsolvable;
    std::vector<GroundedAction> plan;   // valid only when status == Solved
    std::uint64_t expanded = 0;
    double elapsed_s = 0.0;

    bool solved() const { return status == PlannerStatus::Solved; }
    bool timed_out() const { return status == PlannerStatus::Timeout; }
};

namespace planidx {

// Fixed-width bitset state over the reachable atom universe.
using Bits = std::vector<std::uint64_t>;

struct BitsHash {
    std::size_t operator()(const Bits& b) const {
        return static_cast<std::size_t>(fnv1a(b.data(), b.size() * 8));
    }
};

inline bool bit_get(const Bits& b, int i) { return (b[i >> 6] >> (i & 63)) & 1; }
inline void bit_set(Bits& b, int i) { b[i >> 6] |= 1ull << (i & 63); }
inline void bit_clear(Bits& b, int i) { b[i >> 6] &= ~(1ull << (i & 63)); }

struct IndexedAction {
    int id = 0;  // position in deterministic grounding order
    std::vector<int> pre_pos, pre_neg, add, del;
};

// Grounded task: atom universe = init atoms plus every add effect of every
// grounded action. Goal atoms outside the universe are statically unreachable.
struct GroundedTask {
    const Domain* dom = nullptr;
    std::vector<Atom> atoms;              // id -> atom
    std::map<Atom, int> atom_ids;
    std::vector<GroundedAction> actions;  // id -> surface action
    std::vector<IndexedAction> indexed;
    std::vector<int> goal_ids;            // -1 marks an unreachable goal atom
    Bits init;
    int words = 0;
    int max_add_effects = 1;

    int atom_id(const Atom& a) const {
        auto it = atom_ids.find(a);
        return it == atom_ids.end() ? -1 : it->second;
    }
};

inline GroundedTask build_grounded_task(const Domain& dom, const TaskInstance& inst) {
    GroundedTask task;
    task.dom = &dom;

    auto intern = [&](const Atom& a) {
        auto [it, fresh] = task.atom_ids.try_emplace(a, static_cast<int>(task.atoms.size()));
        if (fresh) task.atoms.push_back(a);
        return it->second;
    };

    for (const auto& a : inst.init) intern(a);

    task.actions = ground_actions(dom, inst);
    std::vector<std::vector<Atom>> pre(task.actions.size()), pre_neg(task.actions.size());
    std::vector<std::vector<Atom>> add(task.actions.size()), del(task.actions.size());
    for (std::size_t i = 0; i < task.actions.size(); ++i) {
        const ActionSchema* schema = dom.find_schema(task.actions[i].schema);
        for (const auto& lit : schema->precondition)
            (lit.negated ? pre_neg : pre)[i].push_back(ground_literal(*schema, task.actions[i], lit));
        for (const auto& lit : schema->effect)
            (lit.negated ? del : add)[i].push_back(ground_literal(*schema, task.actions[i], lit));
        for (const auto& a : add[i]) intern(a);
        task.max_add_effects = std::max(task.max_add_effects, static_cast<int>(add[i].size()));
    }

    task.words = (static_cast<int>(task.atoms.size()) + 63) / 64;
    if (task.words == 0) task.words = 1;
    task.init.assign(task.words, 0);
    for (const auto& a : inst.init) bit_set(task.init, task.atom_id(a));

    task.indexed.resize(task.actions.size());
    for (std::size_t i = 0; i < task.actions.size(); ++i) {
        IndexedAction& ia = task.indexed[i];
        ia.id = static_cast<int>(i);
        for (const auto& a : pre[i]) {
            const int id = task.atom_id(a);
            if (id < 0) {  // positive precondition can never hold
                ia.pre_pos.assign(1, -1);
                break;
            }
            ia.pre_pos.push_back(id);
        }
        // Negated preconditions over atoms outside the universe always hold.
        for (const auto& a : pre_neg[i]) {
            const int id = task.atom_id(a);
            if (id >= 0) ia.pre_neg.push_back(id);
        }
        for (const auto& a : add[i]) ia.add.push_back(task.atom_id(a));
        for (const auto& a : del[i]) {
            const int id = task.atom_id(a);
            if (id >= 0) ia.del.push_back(id);
        }
    }

    for (const auto& g : inst.goal) task.goal_ids.push_back(task.atom_id(g));
    return task;
}

inline bool action_applicable(const GroundedTask& task, const Bits& s, const IndexedAction& a) {
    for (int id : a.pre_pos)
        if (id < 0 || !bit_get(s, id)) return false;
    for (int id : a.pre_neg)
        if (bit_get(s, id)) return false;
    return true;
}

inline Bits action_apply(const GroundedTask& task, const Bits& s, const IndexedAction& a) {
    (void)task;
    Bits out = s;
    for (int id : a.del) bit_clear(out, id);
    for (int id : a.add) bit_set(out, id);
    return out;
}

inline int unsatisfied_goals(const GroundedTask& task, const Bits& s) {
    int n = 0;
    for (int g : task.goal_ids)
        if (g < 0 || !bit_get(s, g)) ++n;
    return n;
}

}  // namespace planidx

// Search shared by A* and BFS: BFS is A* with h == 0 and FIFO ordering, which
// the (f, insertion-sequence) priority key already provides.
inline PlannerReport solve(const Domain& dom, const TaskInstance& inst, const PlannerOptions& opt = {}) {
    using namespace planidx;
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    PlannerReport report;
    GroundedTask task = build_grounded_task(dom, inst);

    // Static reachability: a goal atom never added by any action and absent
    // from the initial state cannot be achieved.
    for (int g : task.goal_ids) {
        if (g < 0) {
            report.status = PlannerStatus::Unsolvable;
            report.elapsed_s = elapsed();
            return report;
        }
    }

    auto heuristic = [&](const Bits& s) -> int {
        if (opt.use_bfs) return 0;
        const int unsat = unsatisfied_goals(task, s);
        return (unsat + task.max_add_effects - 1) / task.max_add_effects;
    };

    struct NodeInfo {
        int g;
        std::int64_t parent;  // index into `order`
        int via_action;
        std::int64_t idx;
        bool closed = false;
    };
    // Deterministic bookkeeping: states are discovered in a fixed order
    // (actions iterated in grounding order), and the open list breaks f-ties
    // by insertion sequence.
    std::unordered_map<Bits, NodeInfo, BitsHash> best;
    std::vector<NodeInfo*> order;

    using QEntry = std::pair<std::pair<int, std::uint64_t>, std::int64_t>;  // ((f, seq), order index)
    std::priority_queue<QEntry, std::vector<QEntry>, std::greater<>> open;
    std::uint64_t seq = 0;
    std::vector<const Bits*> state_of;  // order index -> state key

    auto push_state = [&](Bits&& s, int g, std::int64_t parent, int via) {
        const int h = heuristic(s);
        auto [it, fresh] = best.try_emplace(std::move(s), NodeInfo{g, parent, via, 0});
        if (fresh) {
            it->second.idx = static_cast<std::int64_t>(order.size());
            order.push_back(&it->second);
            state_of.push_back(&it->first);
        } else {
            if (it->second.closed || it->second.g <= g) return;
            it->second.g = g;
            it->second.parent = parent;
            it->second.via_action = via;
        }
        open.push({{g + h, seq++}, it->second.idx});
    };

    {
        Bits s = task.init;
        push_state(std::move(s), 0, -1, -1);
    }

    while (!open.empty()) {
        const auto [key, idx] = open.top();
        open.pop();
        NodeInfo& info = *order[static_cast<std::size_t>(idx)];
        if (info.closed) continue;
        const Bits& state = *state_of[static_cast<std::size_t>(idx)];
        if (info.g + heuristic(state) < key.first) continue;  // superseded entry
        info.closed = true;

        if (unsatisfied_goals(task, state) == 0) {
            // Reconstruct the plan by walking parents.
            std::vector<GroundedAction> plan;
            std::int64_t cur = idx;
            while (cur >= 0) {
                const NodeInfo& ni = *order[static_cast<std::size_t>(cur)];
                if (ni.via_action >= 0) plan.push_back(task.actions[static_cast<std::size_t>(ni.via_action)]);
                cur = ni.parent;
            }
            std::reverse(plan.begin(), plan.end());
            report.status = PlannerStatus::Solved;
            report.plan = std::move(plan);
            report.elapsed_s = elapsed();
            return report;
        }

        ++report.expanded;
        if ((report.expanded & 1023) == 0 && elapsed() > opt.timeout_s) {
            report.status = PlannerStatus::Timeout;
            report.elapsed_s = elapsed();
            return report;
        }

        const int g_here = info.g;
        for (const auto& ia : task.indexed) {
            if (!action_applicable(task, state, ia)) continue;
            Bits next = action_apply(task, state, ia);
            push_state(std::move(next), g_here + 1, idx, ia.id);
        }
    }

    report.status = PlannerStatus::Unsolvable;
    report.elapsed_s = elapsed();
    return report;
}

struct ValidationResult {
    bool plan_valid = false;      // every action applicable in sequence
    bool goal_reached = false;    // goal satisfied in the final state
    int executed_prefix = 0;      // leading applicable actions
    SymbolicState final_state;
    int goals_met = 0;
};

// Execute a plan from the instance's initial state, stopping at the first
// inapplicable action.
inline ValidationResult validate(const Domain& dom, const TaskInstance& inst,
                                 const std::vector<GroundedAction>& plan) {
    ValidationResult res;
    SymbolicState s = inst.init;
    res.plan_valid = true;
    for (const auto& act : plan) {
        if (!applicable(dom, s, act)) {
            res.plan_valid = false;
            break;
        }
        s = apply(dom, s, act);
        ++res.executed_prefix;
    }
    res.final_state = std::move(s);
    res.goals_met = nesypr::goals_met(res.final_state, inst.goal);
    res.goal_reached = res.goals_met == static_cast<int>(inst.goal.size());
    return res;
}

}  // namespace nesypr
