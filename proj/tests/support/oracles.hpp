#pragma once

// Independent reference implementations used only by tests. Kept deliberately
// naive: plain breadth-first search over the set-based state engine, so the
// production A* (bitset states, priority queue, heuristic) shares no search
// machinery with it.

#include <deque>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "nesypr/strips.hpp"

namespace oracle {

inline std::string state_key(const nesypr::SymbolicState& s) {
    std::string key;
    for (const auto& a : s) key += a.str();
    return key;
}

// Optimal plan length by exhaustive BFS, or nullopt if the goal is not
// reachable within max_depth steps.
inline std::optional<int> bfs_optimal_length(const nesypr::Domain& dom,
                                             const nesypr::TaskInstance& inst, int max_depth) {
    const auto actions = nesypr::ground_actions(dom, inst);
    if (nesypr::goal_satisfied(inst.init, inst.goal)) return 0;

    std::deque<std::pair<nesypr::SymbolicState, int>> frontier;
    std::unordered_set<std::string> visited;
    frontier.emplace_back(inst.init, 0);
    visited.insert(state_key(inst.init));

    while (!frontier.empty()) {
        auto [state, depth] = std::move(frontier.front());
        frontier.pop_front();
        if (depth >= max_depth) continue;
        for (const auto& act : actions) {
            if (!nesypr::applicable(dom, state, act)) continue;
            nesypr::SymbolicState next = nesypr::apply(dom, state, act);
            if (nesypr::goal_satisfied(next, inst.goal)) return depth + 1;
            if (visited.insert(state_key(next)).second)
                frontier.emplace_back(std::move(next), depth + 1);
        }
    }
    return std::nullopt;
}

}  // namespace oracle
