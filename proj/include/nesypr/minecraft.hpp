#pragma once

// Built-in Minecraft-style crafting domain and instance-suite generator.
//
// Grid cells are static objects (loc-X-Y) wired by adjacency atoms; grass,
// logs and craftable plank slots (new-*) are moveables. Six task families,
// each a two-atom goal conjunction:
//   move_equip       (equipped A agent) (equipped B agent)
//   collect_move     (equipped A agent) (agentat L)
//   craft_equip      (equipped N agent) (isplanks N)
//   move_inventory   (inventory X) (agentat L)
//   equip_inventory  (equipped A agent) (inventory B)
//   craft_inventory  (inventory X) (isplanks N)
// Every standard-split instance is checked solvable by the planner within a
// depth cap, and (objects, init, goal) scenes are unique across the suite.
//
// The hard split is built differently: scenes carry the full distractor
// pools (extra grass, logs and craft slots, plus grass preloaded into the
// inventory), which blows up the planner's reachable state space, while the
// goal stays a walk/pick/equip task over the same low object indices the
// standard splits use. For those goal families the optimal length has a
// closed form (shortest walk through the goal cells plus one pick/equip per
// object), so hard instances are verified by replaying a constructed
// reference plan instead of invoking the planner, keeping generation cheap
// even where search is expensive.

#include <array>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "nesypr/planner.hpp"
#include "nesypr/strips.hpp"
#include "nesypr/util.hpp"

namespace nesypr {

inline Domain make_minecraft_domain() {
    Domain dom;
    dom.name = "minecraft";
    dom.types = {"agent", "moveable", "static"};
    dom.predicates = {
        {"agentat", {"static"}},
        {"at", {"moveable", "static"}},
        {"adjacent", {"static", "static"}},
        {"inventory", {"moveable"}},
        {"equipped", {"moveable", "agent"}},
        {"isplanks", {"moveable"}},
        {"islog", {"moveable"}},
        {"craftable", {"moveable"}},
    };
    auto lit = [](const char* pred, std::vector<std::string> args, bool neg = false) {
        return Literal{neg, pred, std::move(args)};
    };
    dom.schemas.push_back({"recall",
                           {"?v0", "?v1"},
                           {"moveable", "agent"},
                           {lit("equipped", {"?v0", "?v1"})},
                           {lit("inventory", {"?v0"}), lit("equipped", {"?v0", "?v1"}, true)}});
    dom.schemas.push_back({"move",
                           {"?v0", "?v1"},
                           {"static", "static"},
                           {lit("agentat", {"?v0"}), lit("adjacent", {"?v0", "?v1"})},
                           {lit("agentat", {"?v1"}), lit("agentat", {"?v0"}, true)}});
    dom.schemas.push_back({"craftplank",
                           {"?v0", "?v1", "?v2"},
                           {"moveable", "agent", "moveable"},
                           {lit("craftable", {"?v0"}), lit("inventory", {"?v2"}), lit("islog", {"?v2"})},
                           {lit("isplanks", {"?v0"}), lit("inventory", {"?v0"}),
                            lit("craftable", {"?v0"}, true), lit("inventory", {"?v2"}, true)}});
    dom.schemas.push_back({"equip",
                           {"?v0", "?v1"},
                           {"moveable", "agent"},
                           {lit("inventory", {"?v0"})},
                           {lit("equipped", {"?v0", "?v1"}), lit("inventory", {"?v0"}, true)}});
    dom.schemas.push_back({"pick",
                           {"?v0", "?v1"},
                           {"moveable", "static"},
                           {lit("at", {"?v0", "?v1"}), lit("agentat", {"?v1"})},
                           {lit("inventory", {"?v0"}), lit("at", {"?v0", "?v1"}, true)}});
    return dom;
}

struct SuiteConfig {
    int grid_w = 4;
    int grid_h = 4;
    int n_train = 29;
    int n_test = 60;
    int n_hard = 8;
    // Scene-size ranges (inclusive) for the standard splits.
    int min_grass = 1, max_grass = 4;
    int min_log = 1, max_log = 3;
    int min_new = 1, max_new = 3;
    // The hard split pads scenes with distractors up to the name pools below.
    int hard_min_objects = 10;
    int pool_grass = 10, pool_log = 8, pool_new = 6;
    int hard_inventory_grass = 4;  // grass distractors preloaded into the inventory
    int hard_min_plan = 10;        // lower bound on the hard split's optimal length
    int depth_cap = 20;
    int min_plan_length = 2;
    double gen_timeout_s = 60.0;  // planner budget per candidate during generation
};

struct Suite {
    Domain domain;
    std::vector<TaskInstance> train;
    std::vector<TaskInstance> test;
    std::vector<TaskInstance> hard;
};

inline const std::array<std::string, 6>& minecraft_task_types() {
    static const std::array<std::string, 6> kTypes = {
        "move_equip", "collect_move", "craft_equip",
        "move_inventory", "equip_inventory", "craft_inventory"};
    return kTypes;
}

namespace detail {

inline std::string loc_name(int x, int y) {
    return "loc-" + std::to_string(x) + "-" + std::to_string(y);
}

struct Scene {
    std::vector<std::string> grass, logs, news;  // object names in play
    std::vector<std::string> preloaded;          // grass starting in the inventory
    std::map<std::string, std::string> places;   // moveable -> location
    std::string agent_loc;
};

// Sample a scene: object counts, placements, agent start.
inline Scene sample_scene(Rng& rng, const SuiteConfig& cfg, bool hard) {
    Scene sc;
    const int cells = cfg.grid_w * cfg.grid_h;
    auto cell = [&] {
        const int c = static_cast<int>(rng_below(rng, static_cast<std::uint64_t>(cells)));
        return loc_name(c % cfg.grid_w, c / cfg.grid_w);
    };
    auto range = [&](int lo, int hi) {
        return lo + static_cast<int>(rng_below(rng, static_cast<std::uint64_t>(hi - lo + 1)));
    };
    int n_grass = range(cfg.min_grass, cfg.max_grass);
    int n_log = range(cfg.min_log, cfg.max_log);
    int n_new = range(cfg.min_new, cfg.max_new);
    if (hard) {
        // Pad with distractors: fill towards the pools until the scene is big.
        n_grass = cfg.pool_grass;
        n_log = cfg.pool_log;
        n_new = cfg.pool_new;
        while (n_grass + n_log + n_new < cfg.hard_min_objects) ++n_grass;
    }
    n_grass = std::min(n_grass, cfg.pool_grass);
    n_log = std::min(n_log, cfg.pool_log);
    n_new = std::min(n_new, cfg.pool_new);
    for (int i = 0; i < n_grass; ++i) sc.grass.push_back("grass-" + std::to_string(i));
    for (int i = 0; i < n_log; ++i) sc.logs.push_back("log-" + std::to_string(i));
    for (int i = 0; i < n_new; ++i) sc.news.push_back("new-" + std::to_string(i));
    // On the hard split the highest-index grass names start in the inventory;
    // they can only be equipped and recalled, multiplying the state space
    // without adding goal-relevant structure.
    const int n_preload = hard ? std::min(cfg.hard_inventory_grass, n_grass) : 0;
    for (int i = 0; i < n_grass; ++i) {
        if (i >= n_grass - n_preload)
            sc.preloaded.push_back(sc.grass[static_cast<std::size_t>(i)]);
        else
            sc.places[sc.grass[static_cast<std::size_t>(i)]] = cell();
    }
    for (const auto& l : sc.logs) sc.places[l] = cell();
    sc.agent_loc = cell();
    return sc;
}

inline TaskInstance scene_to_instance(const SuiteConfig& cfg, const Scene& sc) {
    TaskInstance inst;
    inst.objects["agent"] = "agent";
    for (int y = 0; y < cfg.grid_h; ++y)
        for (int x = 0; x < cfg.grid_w; ++x) inst.objects[loc_name(x, y)] = "static";
    for (const auto& g : sc.grass) inst.objects[g] = "moveable";
    for (const auto& l : sc.logs) inst.objects[l] = "moveable";
    for (const auto& n : sc.news) inst.objects[n] = "moveable";

    for (int y = 0; y < cfg.grid_h; ++y) {
        for (int x = 0; x < cfg.grid_w; ++x) {
            if (x + 1 < cfg.grid_w) {
                inst.init.insert({"adjacent", {loc_name(x, y), loc_name(x + 1, y)}});
                inst.init.insert({"adjacent", {loc_name(x + 1, y), loc_name(x, y)}});
            }
            if (y + 1 < cfg.grid_h) {
                inst.init.insert({"adjacent", {loc_name(x, y), loc_name(x, y + 1)}});
                inst.init.insert({"adjacent", {loc_name(x, y + 1), loc_name(x, y)}});
            }
        }
    }
    inst.init.insert({"agentat", {sc.agent_loc}});
    for (const auto& [obj, loc] : sc.places) inst.init.insert({"at", {obj, loc}});
    for (const auto& g : sc.preloaded) inst.init.insert({"inventory", {g}});
    for (const auto& l : sc.logs) inst.init.insert({"islog", {l}});
    for (const auto& n : sc.news) inst.init.insert({"craftable", {n}});
    return inst;
}

// Pick a goal for the given task family; returns false when the scene cannot
// host the family (e.g. no second equippable).
inline bool sample_goal(Rng& rng, const SuiteConfig& cfg, const Scene& sc, const std::string& type,
                        std::vector<Atom>& goal) {
    auto pick_from = [&](const std::vector<std::string>& pool) {
        return pool[rng_below(rng, pool.size())];
    };
    auto cell = [&] {
        const int c = static_cast<int>(rng_below(rng, static_cast<std::uint64_t>(cfg.grid_w * cfg.grid_h)));
        return loc_name(c % cfg.grid_w, c / cfg.grid_w);
    };
    // Anything that can end up in the inventory: picked items or crafted planks.
    std::vector<std::string> holdable = sc.grass;
    holdable.insert(holdable.end(), sc.logs.begin(), sc.logs.end());
    holdable.insert(holdable.end(), sc.news.begin(), sc.news.end());
    if (holdable.empty() || sc.news.empty() || sc.logs.empty()) return false;

    goal.clear();
    if (type == "move_equip") {
        if (holdable.size() < 2) return false;
        std::string a = pick_from(holdable), b = pick_from(holdable);
        if (a == b) return false;
        goal = {{"equipped", {a, "agent"}}, {"equipped", {b, "agent"}}};
    } else if (type == "collect_move") {
        goal = {{"equipped", {pick_from(holdable), "agent"}}, {"agentat", {cell()}}};
    } else if (type == "craft_equip") {
        const std::string n = pick_from(sc.news);
        goal = {{"equipped", {n, "agent"}}, {"isplanks", {n}}};
    } else if (type == "move_inventory") {
        goal = {{"inventory", {pick_from(holdable)}}, {"agentat", {cell()}}};
    } else if (type == "equip_inventory") {
        if (holdable.size() < 2) return false;
        std::string a = pick_from(holdable), b = pick_from(holdable);
        if (a == b) return false;
        goal = {{"equipped", {a, "agent"}}, {"inventory", {b}}};
    } else if (type == "craft_inventory") {
        const std::string n = pick_from(sc.news);
        std::string x = pick_from(holdable);
        if (x == n) return false;
        goal = {{"inventory", {x}}, {"isplanks", {n}}};
    } else {
        throw std::invalid_argument("unknown task type: " + type);
    }
    return true;
}

inline std::string scene_key(const TaskInstance& inst) {
    std::string key = print_instance(inst);
    return key;
}

}  // namespace detail

// Generate one full suite. Instances cycle through the six task families, are
// verified solvable by the planner (which also annotates the optimal length),
// and are deduplicated by their full (objects, observation, goal) text.
inline Suite generate_minecraft_suite(const SuiteConfig& cfg, std::uint64_t seed) {
    Suite suite;
    suite.domain = make_minecraft_domain();
    Rng rng(seed);
    std::set<std::string> seen;

    auto generate_split = [&](const char* split, int count, bool hard) {
        std::vector<TaskInstance> out;
        const auto& types = minecraft_task_types();
        int attempts = 0;
        while (static_cast<int>(out.size()) < count) {
            if (++attempts > count * 2000)
                throw std::runtime_error("suite generation stalled; config too restrictive");
            const std::string& type = types[out.size() % types.size()];
            detail::Scene sc = detail::sample_scene(rng, cfg, hard);
            TaskInstance inst = detail::scene_to_instance(cfg, sc);
            if (!detail::sample_goal(rng, cfg, sc, type, inst.goal)) continue;
            if (goal_satisfied(inst.init, inst.goal)) continue;
            const std::string key = detail::scene_key(inst);
            if (seen.count(key)) continue;

            PlannerOptions opt;
            opt.timeout_s = cfg.gen_timeout_s;
            const PlannerReport report = solve(suite.domain, inst, opt);
            if (!report.solved()) continue;
            const int len = static_cast<int>(report.plan.size());
            if (len < cfg.min_plan_length || len > cfg.depth_cap) continue;

            seen.insert(key);
            inst.task_type = type;
            inst.optimal_length = len;
            char idbuf[64];
            std::snprintf(idbuf, sizeof(idbuf), "mc-%s-%03d-%s", split,
                          static_cast<int>(out.size()), type.c_str());
            inst.id = idbuf;
            out.push_back(std::move(inst));
        }
        return out;
    };

    suite.train = generate_split("train", cfg.n_train, false);
    suite.test = generate_split("test", cfg.n_test, false);
    suite.hard = generate_split("hard", cfg.n_hard, true);
    return suite;
}

}  // namespace nesypr
