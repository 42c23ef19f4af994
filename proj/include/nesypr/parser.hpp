#pragma once

// Text readers for the domain / instance / plan file formats.
//
// Domain files:
//   (:types name ...)
//   (:predicates (name ?v - type ...) ...)
//   (:action name :parameters (?v - type ...)
//            :precondition (and lit ...) :effect (and lit ...))
// where lit is (pred a b) or (not (pred a b)).
//
// Instance files:
//   (:objects name - type ...)
//   (:observation atom ...)
//   (:goal (and atom ...))
//
// Plan files: one action per line, name(arg1,arg2,...).
//
// Anything outside the supported subset (forall, when, or, exists, imply)
// is rejected with an "unsupported construct" error.

#include <cctype>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "nesypr/strips.hpp"

namespace nesypr {

struct ParseError : std::runtime_error {
    int line, col;
    ParseError(const std::string& msg, int line_, int col_)
        : std::runtime_error(msg + " (line " + std::to_string(line_) + ", col " + std::to_string(col_) + ")"),
          line(line_),
          col(col_) {}
};

namespace sexpr {

// S-expression node: either a symbol or a list. Position is tracked for
// error messages.
struct Node {
    bool is_list = false;
    std::string symbol;
    std::vector<Node> items;
    int line = 1, col = 1;
};

struct Lexer {
    const std::string& text;
    std::size_t pos = 0;
    int line = 1, col = 1;

    explicit Lexer(const std::string& t) : text(t) {}

    void advance() {
        if (text[pos] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
        ++pos;
    }
    void skip_ws() {
        while (pos < text.size()) {
            if (std::isspace(static_cast<unsigned char>(text[pos]))) {
                advance();
            } else if (text[pos] == ';') {  // comment to end of line
                while (pos < text.size() && text[pos] != '\n') advance();
            } else {
                break;
            }
        }
    }
    bool done() {
        skip_ws();
        return pos >= text.size();
    }

    Node parse_node() {
        skip_ws();
        if (pos >= text.size()) throw ParseError("unexpected end of input", line, col);
        Node n;
        n.line = line;
        n.col = col;
        if (text[pos] == '(') {
            advance();
            n.is_list = true;
            while (true) {
                skip_ws();
                if (pos >= text.size()) throw ParseError("missing ')'", n.line, n.col);
                if (text[pos] == ')') {
                    advance();
                    break;
                }
                n.items.push_back(parse_node());
            }
        } else if (text[pos] == ')') {
            throw ParseError("unexpected ')'", line, col);
        } else {
            while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos])) &&
                   text[pos] != '(' && text[pos] != ')' && text[pos] != ';') {
                n.symbol += text[pos];
                advance();
            }
        }
        return n;
    }
};

inline std::vector<Node> parse_all(const std::string& text) {
    Lexer lex(text);
    std::vector<Node> nodes;
    while (!lex.done()) nodes.push_back(lex.parse_node());
    return nodes;
}

inline void reject_unsupported(const Node& n) {
    static const char* banned[] = {"forall", "when", "or", "exists", "imply"};
    if (!n.is_list) {
        for (const char* b : banned)
            if (n.symbol == b) throw ParseError(std::string("unsupported construct: ") + b, n.line, n.col);
        return;
    }
    if (!n.items.empty() && !n.items[0].is_list) {
        for (const char* b : banned)
            if (n.items[0].symbol == b)
                throw ParseError(std::string("unsupported construct: ") + b, n.line, n.col);
    }
    for (const auto& item : n.items) reject_unsupported(item);
}

}  // namespace sexpr

namespace detail {

inline const sexpr::Node& expect_symbol(const sexpr::Node& n, const char* what) {
    if (n.is_list) throw ParseError(std::string("expected ") + what, n.line, n.col);
    return n;
}

inline Atom parse_atom_node(const sexpr::Node& n) {
    if (!n.is_list || n.items.empty() || n.items[0].is_list)
        throw ParseError("expected atom (pred args...)", n.line, n.col);
    Atom a;
    a.pred = n.items[0].symbol;
    for (std::size_t i = 1; i < n.items.size(); ++i)
        a.args.push_back(expect_symbol(n.items[i], "argument name").symbol);
    return a;
}

inline Literal parse_literal_node(const sexpr::Node& n) {
    sexpr::reject_unsupported(n);
    if (!n.is_list || n.items.empty()) throw ParseError("expected literal", n.line, n.col);
    if (!n.items[0].is_list && n.items[0].symbol == "not") {
        if (n.items.size() != 2) throw ParseError("(not ...) takes one atom", n.line, n.col);
        Atom a = parse_atom_node(n.items[1]);
        return {true, a.pred, a.args};
    }
    Atom a = parse_atom_node(n);
    return {false, a.pred, a.args};
}

// Parse "(and lit ...)" or a single literal.
inline std::vector<Literal> parse_conjunction(const sexpr::Node& n) {
    sexpr::reject_unsupported(n);
    if (!n.is_list || n.items.empty()) throw ParseError("expected conjunction", n.line, n.col);
    std::vector<Literal> lits;
    if (!n.items[0].is_list && n.items[0].symbol == "and") {
        for (std::size_t i = 1; i < n.items.size(); ++i) lits.push_back(parse_literal_node(n.items[i]));
    } else {
        lits.push_back(parse_literal_node(n));
    }
    return lits;
}

// Parse typed name lists: "name1 name2 - type name3 - type ...".
// Each group of names must be followed by "- type".
inline std::vector<std::pair<std::string, std::string>> parse_typed_names(const sexpr::Node& list) {
    std::vector<std::pair<std::string, std::string>> out;
    std::vector<std::string> pending;
    for (std::size_t i = 0; i < list.items.size(); ++i) {
        const auto& item = expect_symbol(list.items[i], "name or '-'");
        if (item.symbol == "-") {
            if (i + 1 >= list.items.size())
                throw ParseError("expected type after '-'", item.line, item.col);
            const auto& type = expect_symbol(list.items[i + 1], "type name");
            for (const auto& name : pending) out.emplace_back(name, type.symbol);
            pending.clear();
            ++i;
        } else {
            pending.push_back(item.symbol);
        }
    }
    if (!pending.empty())
        throw ParseError("name list without type annotation", list.line, list.col);
    return out;
}

}  // namespace detail

inline Domain parse_domain(const std::string& text) {
    Domain dom;
    for (const auto& form : sexpr::parse_all(text)) {
        sexpr::reject_unsupported(form);
        if (!form.is_list || form.items.empty() || form.items[0].is_list)
            throw ParseError("expected (:types|:predicates|:action ...)", form.line, form.col);
        const std::string& head = form.items[0].symbol;
        if (head == ":types") {
            for (std::size_t i = 1; i < form.items.size(); ++i)
                dom.types.push_back(detail::expect_symbol(form.items[i], "type name").symbol);
        } else if (head == ":predicates") {
            for (std::size_t i = 1; i < form.items.size(); ++i) {
                const auto& p = form.items[i];
                if (!p.is_list || p.items.empty() || p.items[0].is_list)
                    throw ParseError("expected predicate declaration", p.line, p.col);
                Predicate pred;
                pred.name = p.items[0].symbol;
                sexpr::Node rest = p;
                rest.items.erase(rest.items.begin());
                for (const auto& [var, type] : detail::parse_typed_names(rest)) {
                    (void)var;
                    pred.param_types.push_back(type);
                }
                dom.predicates.push_back(std::move(pred));
            }
        } else if (head == ":action") {
            if (form.items.size() < 2)
                throw ParseError("expected action name", form.line, form.col);
            ActionSchema schema;
            schema.name = detail::expect_symbol(form.items[1], "action name").symbol;
            for (std::size_t i = 2; i < form.items.size(); i += 2) {
                const auto& key = detail::expect_symbol(form.items[i], "action section keyword");
                if (i + 1 >= form.items.size())
                    throw ParseError("missing value after " + key.symbol, key.line, key.col);
                const auto& val = form.items[i + 1];
                if (key.symbol == ":parameters") {
                    if (!val.is_list) throw ParseError("expected parameter list", val.line, val.col);
                    for (const auto& [var, type] : detail::parse_typed_names(val)) {
                        if (var.empty() || var[0] != '?')
                            throw ParseError("parameter names must start with '?'", val.line, val.col);
                        schema.param_names.push_back(var);
                        schema.param_types.push_back(type);
                    }
                } else if (key.symbol == ":precondition") {
                    schema.precondition = detail::parse_conjunction(val);
                } else if (key.symbol == ":effect") {
                    schema.effect = detail::parse_conjunction(val);
                } else {
                    throw ParseError("unknown action section " + key.symbol, key.line, key.col);
                }
            }
            dom.schemas.push_back(std::move(schema));
        } else {
            throw ParseError("unknown top-level form " + head, form.line, form.col);
        }
    }
    // Effects must not use negation-as-test constructs beyond plain literals;
    // schema parameters referenced in literals must be declared.
    for (const auto& s : dom.schemas) {
        auto check_lits = [&](const std::vector<Literal>& lits, const char* where) {
            for (const auto& lit : lits) {
                if (!dom.find_predicate(lit.pred))
                    throw std::runtime_error("unknown predicate " + lit.pred + " in " + where +
                                             " of action " + s.name);
                for (const auto& a : lit.args)
                    if (!a.empty() && a[0] == '?' &&
                        std::find(s.param_names.begin(), s.param_names.end(), a) == s.param_names.end())
                        throw std::runtime_error("unbound parameter " + a + " in action " + s.name);
            }
        };
        check_lits(s.precondition, "precondition");
        check_lits(s.effect, "effect");
    }
    return dom;
}

inline TaskInstance parse_instance(const std::string& text, const std::string& id = "instance") {
    TaskInstance inst;
    inst.id = id;
    for (const auto& form : sexpr::parse_all(text)) {
        sexpr::reject_unsupported(form);
        if (!form.is_list || form.items.empty() || form.items[0].is_list)
            throw ParseError("expected (:objects|:observation|:goal ...)", form.line, form.col);
        const std::string& head = form.items[0].symbol;
        if (head == ":objects") {
            sexpr::Node rest = form;
            rest.items.erase(rest.items.begin());
            for (const auto& [name, type] : detail::parse_typed_names(rest)) {
                if (inst.objects.count(name))
                    throw ParseError("duplicate object " + name, form.line, form.col);
                inst.objects[name] = type;
            }
        } else if (head == ":observation") {
            for (std::size_t i = 1; i < form.items.size(); ++i)
                inst.init.insert(detail::parse_atom_node(form.items[i]));
        } else if (head == ":goal") {
            if (form.items.size() != 2)
                throw ParseError(":goal takes one conjunction", form.line, form.col);
            for (const auto& lit : detail::parse_conjunction(form.items[1])) {
                if (lit.negated)
                    throw ParseError("goals are positive conjunctions", form.line, form.col);
                inst.goal.push_back({lit.pred, lit.args});
            }
        } else {
            throw ParseError("unknown top-level form " + head, form.line, form.col);
        }
    }
    return inst;
}

// Plan files: one "name(arg1,arg2,...)" per line; blank lines ignored.
inline std::vector<GroundedAction> parse_plan(const std::string& text) {
    std::vector<GroundedAction> plan;
    int line_no = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t;
        for (char c : line)
            if (!std::isspace(static_cast<unsigned char>(c))) t += c;
        if (t.empty()) continue;
        const auto open = t.find('(');
        if (open == std::string::npos || t.back() != ')')
            throw ParseError("expected name(args...)", line_no, 1);
        GroundedAction act;
        act.schema = t.substr(0, open);
        std::string args = t.substr(open + 1, t.size() - open - 2);
        if (!args.empty()) {
            std::size_t start = 0;
            while (true) {
                const auto comma = args.find(',', start);
                act.args.push_back(args.substr(start, comma - start));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
        }
        if (act.schema.empty()) throw ParseError("empty action name", line_no, 1);
        plan.push_back(std::move(act));
    }
    return plan;
}

}  // namespace nesypr
