#pragma once

// Symbolic world: a STRIPS subset with typed parameters, conjunctive
// preconditions (positive and negated atoms) and add/delete effects.
// Deliberately excluded: forall / when / or / exists and numeric fluents.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nesypr {

struct Predicate {
    std::string name;
    std::vector<std::string> param_types;
};

// A grounded atom: predicate applied to object names. Ordering gives the
// canonical (sorted) serialization used everywhere determinism matters.
struct Atom {
    std::string pred;
    std::vector<std::string> args;

    auto operator<=>(const Atom&) const = default;

    std::string str() const {
        std::string s = "(" + pred;
        for (const auto& a : args) s += " " + a;
        return s + ")";
    }
};

// Literal inside a schema: predicate over parameter names (or constants),
// possibly negated.
struct Literal {
    bool negated = false;
    std::string pred;
    std::vector<std::string> args;
};

struct ActionSchema {
    std::string name;
    std::vector<std::string> param_names;  // "?v0", "?v1", ...
    std::vector<std::string> param_types;
    std::vector<Literal> precondition;
    std::vector<Literal> effect;  // positive = add, negated = delete
};

struct Domain {
    std::string name = "domain";
    std::vector<std::string> types;
    std::vector<Predicate> predicates;
    std::vector<ActionSchema> schemas;

    const Predicate* find_predicate(const std::string& n) const {
        for (const auto& p : predicates)
            if (p.name == n) return &p;
        return nullptr;
    }
    const ActionSchema* find_schema(const std::string& n) const {
        for (const auto& s : schemas)
            if (s.name == n) return &s;
        return nullptr;
    }
};

// Full world state / observation: a set of grounded atoms (closed world).
using SymbolicState = std::set<Atom>;

struct GroundedAction {
    std::string schema;
    std::vector<std::string> args;

    auto operator<=>(const GroundedAction&) const = default;

    // Plan-file surface form: name(arg1,arg2,...)
    std::string str() const {
        std::string s = schema + "(";
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (i) s += ",";
            s += args[i];
        }
        return s + ")";
    }
};

struct TaskInstance {
    std::string id;
    std::map<std::string, std::string> objects;  // name -> type
    SymbolicState init;
    std::vector<Atom> goal;  // conjunction
    // Annotation filled by the generator (reference optimal plan length);
    // negative when unknown.
    int optimal_length = -1;
    std::string task_type;
};

namespace detail {

inline void check_atom_against_domain(const Domain& dom, const TaskInstance& inst, const Atom& a,
                                      const char* where) {
    const Predicate* p = dom.find_predicate(a.pred);
    if (!p) throw std::runtime_error(std::string(where) + ": unknown predicate " + a.pred);
    if (p->param_types.size() != a.args.size())
        throw std::runtime_error(std::string(where) + ": arity mismatch for " + a.pred);
    for (std::size_t i = 0; i < a.args.size(); ++i) {
        auto it = inst.objects.find(a.args[i]);
        if (it == inst.objects.end())
            throw std::runtime_error(std::string(where) + ": unknown object " + a.args[i]);
        if (it->second != p->param_types[i])
            throw std::runtime_error(std::string(where) + ": type mismatch in " + a.str());
    }
}

}  // namespace detail

// Substitute schema parameters with the action's arguments.
inline Atom ground_literal(const ActionSchema& schema, const GroundedAction& act, const Literal& lit) {
    Atom a;
    a.pred = lit.pred;
    a.args.reserve(lit.args.size());
    for (const auto& arg : lit.args) {
        if (!arg.empty() && arg[0] == '?') {
            auto it = std::find(schema.param_names.begin(), schema.param_names.end(), arg);
            if (it == schema.param_names.end())
                throw std::runtime_error("unbound parameter " + arg + " in schema " + schema.name);
            a.args.push_back(act.args[static_cast<std::size_t>(it - schema.param_names.begin())]);
        } else {
            a.args.push_back(arg);
        }
    }
    return a;
}

inline bool applicable(const Domain& dom, const SymbolicState& s, const GroundedAction& act) {
    const ActionSchema* schema = dom.find_schema(act.schema);
    if (!schema) throw std::runtime_error("unknown action schema: " + act.schema);
    if (schema->param_names.size() != act.args.size())
        throw std::runtime_error("arity mismatch for action " + act.schema);
    for (const auto& lit : schema->precondition) {
        const bool holds = s.count(ground_literal(*schema, act, lit)) > 0;
        if (lit.negated == holds) return false;
    }
    return true;
}

// Apply an action: deletes first, then adds (an atom both deleted and added
// ends up present). Throws if the action is not applicable.
inline SymbolicState apply(const Domain& dom, const SymbolicState& s, const GroundedAction& act) {
    if (!applicable(dom, s, act))
        throw std::runtime_error("action not applicable: " + act.str());
    const ActionSchema* schema = dom.find_schema(act.schema);
    SymbolicState out = s;
    for (const auto& lit : schema->effect)
        if (lit.negated) out.erase(ground_literal(*schema, act, lit));
    for (const auto& lit : schema->effect)
        if (!lit.negated) out.insert(ground_literal(*schema, act, lit));
    return out;
}

inline bool goal_satisfied(const SymbolicState& s, const std::vector<Atom>& goal) {
    for (const auto& g : goal)
        if (!s.count(g)) return false;
    return true;
}

inline int goals_met(const SymbolicState& s, const std::vector<Atom>& goal) {
    int n = 0;
    for (const auto& g : goal) n += s.count(g) ? 1 : 0;
    return n;
}

// Enumerate all type-consistent groundings of every schema. Order is
// deterministic: schemas in declaration order, bindings lexicographic by
// argument tuple (objects are iterated in sorted name order).
inline std::vector<GroundedAction> ground_actions(const Domain& dom, const TaskInstance& inst) {
    std::map<std::string, std::vector<std::string>> by_type;
    for (const auto& [name, type] : inst.objects) by_type[type].push_back(name);
    // std::map iteration is sorted already; keep the vectors sorted too.
    for (auto& [type, names] : by_type) std::sort(names.begin(), names.end());

    std::vector<GroundedAction> out;
    for (const auto& schema : dom.schemas) {
        std::vector<std::string> binding(schema.param_names.size());
        auto rec = [&](auto&& self, std::size_t k) -> void {
            if (k == binding.size()) {
                out.push_back({schema.name, binding});
                return;
            }
            auto it = by_type.find(schema.param_types[k]);
            if (it == by_type.end()) return;
            for (const auto& obj : it->second) {
                binding[k] = obj;
                self(self, k + 1);
            }
        };
        rec(rec, 0);
    }
    return out;
}

// Validate instance contents against the domain (predicates known, arities and
// argument types consistent). Throws on the first violation.
inline void check_instance(const Domain& dom, const TaskInstance& inst) {
    for (const auto& a : inst.init) detail::check_atom_against_domain(dom, inst, a, "observation");
    for (const auto& g : inst.goal) detail::check_atom_against_domain(dom, inst, g, "goal");
}

// ---- canonical text forms (parse(print(x)) round-trips) ----

inline std::string print_domain(const Domain& dom) {
    std::ostringstream out;
    out << "(:types";
    for (const auto& t : dom.types) out << " " << t;
    out << ")\n";
    out << "(:predicates";
    for (const auto& p : dom.predicates) {
        out << " (" << p.name;
        for (std::size_t i = 0; i < p.param_types.size(); ++i)
            out << " ?v" << i << " - " << p.param_types[i];
        out << ")";
    }
    out << ")\n";
    auto put_literal = [&](const Literal& lit) {
        if (lit.negated) out << "(not ";
        out << "(" << lit.pred;
        for (const auto& a : lit.args) out << " " << a;
        out << ")";
        if (lit.negated) out << ")";
    };
    for (const auto& s : dom.schemas) {
        out << "(:action " << s.name << "\n  :parameters (";
        for (std::size_t i = 0; i < s.param_names.size(); ++i) {
            if (i) out << " ";
            out << s.param_names[i] << " - " << s.param_types[i];
        }
        out << ")\n  :precondition (and";
        for (const auto& lit : s.precondition) {
            out << " ";
            put_literal(lit);
        }
        out << ")\n  :effect (and";
        for (const auto& lit : s.effect) {
            out << " ";
            put_literal(lit);
        }
        out << "))\n";
    }
    return out.str();
}

inline std::string print_instance(const TaskInstance& inst) {
    std::ostringstream out;
    out << "(:objects";
    for (const auto& [name, type] : inst.objects) out << " " << name << " - " << type;
    out << ")\n(:observation";
    for (const auto& a : inst.init) out << " " << a.str();
    out << ")\n(:goal (and";
    for (const auto& g : inst.goal) out << " " << g.str();
    out << "))\n";
    return out.str();
}

inline std::string print_plan(const std::vector<GroundedAction>& plan) {
    std::string out;
    for (const auto& a : plan) out += a.str() + "\n";
    return out;
}

}  // namespace nesypr
