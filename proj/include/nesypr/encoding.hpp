#pragma once

// Token-level bridge between the symbolic world and the LM.
//
// Word-level tokens (one per symbol or punctuation mark), closed vocabulary,
// reserved ids PAD=0 BOS=1 EOS=2 SEP=3. Context layout:
//   BOS dk-tokens SEP obs-tokens SEP goal-tokens SEP
// with atoms serialized in sorted order so equal symbolic inputs encode
// identically. The plan region is a concatenation of self-delimiting action
// groups `name ( arg , arg )`, terminated by EOS.

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "nesypr/strips.hpp"

namespace nesypr {

struct OutOfVocabulary : std::runtime_error {
    std::string symbol;
    explicit OutOfVocabulary(const std::string& sym)
        : std::runtime_error("out-of-vocabulary symbol: " + sym), symbol(sym) {}
};

struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kSep = 3;

    std::vector<std::string> tokens;       // id -> token
    std::map<std::string, int> token_ids;  // token -> id

    int size() const { return static_cast<int>(tokens.size()); }

    int id(const std::string& tok) const {
        auto it = token_ids.find(tok);
        if (it == token_ids.end()) throw OutOfVocabulary(tok);
        return it->second;
    }

    bool contains(const std::string& tok) const { return token_ids.count(tok) > 0; }

    const std::string& token(int id) const {
        if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id));
        return tokens[static_cast<std::size_t>(id)];
    }

    // Insertion keeps first-seen order; reserved entries are added by build.
    void add(const std::string& tok) {
        if (token_ids.try_emplace(tok, size()).second) tokens.push_back(tok);
    }

    // Newline-delimited token list; id = line number.
    std::string serialize() const {
        std::string out;
        for (const auto& t : tokens) out += t + "\n";
        return out;
    }

    static Vocabulary deserialize(const std::string& text) {
        Vocabulary v;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            if (v.token_ids.count(line))
                throw std::runtime_error("duplicate token in vocabulary file: " + line);
            v.add(line);
        }
        static const char* expected[] = {"<pad>", "<bos>", "<eos>", "<sep>"};
        for (int i = 0; i < 4; ++i)
            if (v.size() <= i || v.tokens[static_cast<std::size_t>(i)] != expected[i])
                throw std::runtime_error("vocabulary file missing reserved tokens");
        return v;
    }
};

struct EncodedContext {
    std::vector<int> ids;  // BOS dk SEP obs SEP goal SEP
    // Segment spans [begin, end) into ids; separators live between spans.
    int dk_begin = 0, dk_end = 0;
    int obs_begin = 0, obs_end = 0;
    int goal_begin = 0, goal_end = 0;
};

namespace tokenize {

// Domain knowledge: one signature group per schema, `name ( type , type )`.
// Mirrors the action surface so the plan region shares its punctuation.
inline std::vector<std::string> domain_tokens(const Domain& dom) {
    std::vector<std::string> out;
    for (const auto& s : dom.schemas) {
        out.push_back(s.name);
        out.push_back("(");
        for (std::size_t i = 0; i < s.param_types.size(); ++i) {
            if (i) out.push_back(",");
            out.push_back(s.param_types[i]);
        }
        out.push_back(")");
    }
    return out;
}

// Atoms as flat `pred arg arg` words; sets are already sorted, goal
// conjunctions are sorted on the way in by the caller.
inline void append_atom(std::vector<std::string>& out, const Atom& a) {
    out.push_back(a.pred);
    for (const auto& arg : a.args) out.push_back(arg);
}

inline std::vector<std::string> action_tokens(const GroundedAction& act) {
    std::vector<std::string> out;
    out.push_back(act.schema);
    out.push_back("(");
    for (std::size_t i = 0; i < act.args.size(); ++i) {
        if (i) out.push_back(",");
        out.push_back(act.args[i]);
    }
    out.push_back(")");
    return out;
}

}  // namespace tokenize

// Deterministic corpus scan: reserved tokens, domain-knowledge surface,
// predicate names, then object names of each instance in map (sorted) order.
inline Vocabulary build_vocab(const Domain& dom, const std::vector<TaskInstance>& instances) {
    if (dom.schemas.empty()) throw std::invalid_argument("build_vocab: empty domain");
    if (instances.empty()) throw std::invalid_argument("build_vocab: no instances");
    Vocabulary v;
    v.add("<pad>");
    v.add("<bos>");
    v.add("<eos>");
    v.add("<sep>");
    for (const auto& tok : tokenize::domain_tokens(dom)) v.add(tok);
    for (const auto& p : dom.predicates) v.add(p.name);
    for (const auto& inst : instances)
        for (const auto& [name, type] : inst.objects) v.add(name);
    return v;
}

inline EncodedContext encode_context(const SymbolicState& obs, const std::vector<Atom>& goal,
                                     const Domain& dk, const Vocabulary& v) {
    EncodedContext ctx;
    auto push_words = [&](const std::vector<std::string>& words) {
        for (const auto& w : words) ctx.ids.push_back(v.id(w));
    };
    ctx.ids.push_back(Vocabulary::kBos);

    ctx.dk_begin = static_cast<int>(ctx.ids.size());
    push_words(tokenize::domain_tokens(dk));
    ctx.dk_end = static_cast<int>(ctx.ids.size());
    ctx.ids.push_back(Vocabulary::kSep);

    ctx.obs_begin = static_cast<int>(ctx.ids.size());
    std::vector<std::string> words;
    for (const auto& a : obs) tokenize::append_atom(words, a);  // std::set: sorted
    push_words(words);
    ctx.obs_end = static_cast<int>(ctx.ids.size());
    ctx.ids.push_back(Vocabulary::kSep);

    ctx.goal_begin = static_cast<int>(ctx.ids.size());
    std::vector<Atom> sorted_goal = goal;
    std::sort(sorted_goal.begin(), sorted_goal.end());
    words.clear();
    for (const auto& a : sorted_goal) tokenize::append_atom(words, a);
    push_words(words);
    ctx.goal_end = static_cast<int>(ctx.ids.size());
    ctx.ids.push_back(Vocabulary::kSep);
    return ctx;
}

// Plan region for one action; EOS is appended by the caller when the action
// ends the sequence.
inline std::vector<int> encode_action(const GroundedAction& act, const Vocabulary& v) {
    std::vector<int> ids;
    for (const auto& w : tokenize::action_tokens(act)) ids.push_back(v.id(w));
    return ids;
}

inline std::vector<int> encode_plan(const std::vector<GroundedAction>& plan, const Vocabulary& v) {
    std::vector<int> ids;
    for (const auto& act : plan) {
        const auto a = encode_action(act, v);
        ids.insert(ids.end(), a.begin(), a.end());
    }
    ids.push_back(Vocabulary::kEos);
    return ids;
}

struct ParseFailure {
    int position = 0;  // offset of the offending token in the input
    std::string reason;
};

using DecodeResult = std::variant<GroundedAction, ParseFailure>;

// Greedy parse of one `name ( arg , arg )` group. The whole input must be
// consumed (aside from one optional trailing EOS). Schema existence, arity
// and argument types are all checked here: a failure means the emitted
// tokens do not name an executable action.
inline DecodeResult decode_action(const std::vector<int>& ids, const Vocabulary& v,
                                  const Domain& dom,
                                  const std::map<std::string, std::string>& objects) {
    const int n = static_cast<int>(ids.size());
    auto fail = [](int pos, const std::string& why) { return DecodeResult{ParseFailure{pos, why}}; };
    auto word = [&](int pos) -> const std::string& { return v.token(ids[static_cast<std::size_t>(pos)]); };

    int pos = 0;
    if (pos >= n) return fail(pos, "empty action");
    const std::string& name = word(pos);
    const ActionSchema* schema = dom.find_schema(name);
    if (!schema) return fail(pos, "unknown action " + name);
    ++pos;

    if (pos >= n || word(pos) != "(") return fail(pos, "expected '('");
    ++pos;

    GroundedAction act;
    act.schema = name;
    if (pos < n && word(pos) == ")") {
        // zero-argument action
    } else {
        while (true) {
            if (pos >= n) return fail(pos, "truncated action");
            const std::string& arg = word(pos);
            if (arg == "(" || arg == ")" || arg == ",") return fail(pos, "expected argument");
            act.args.push_back(arg);
            ++pos;
            if (pos >= n) return fail(pos, "truncated action");
            if (word(pos) == ")") break;
            if (word(pos) != ",") return fail(pos, "expected ',' or ')'");
            ++pos;
        }
    }
    ++pos;  // consume ')'
    if (pos < n && ids[static_cast<std::size_t>(pos)] == Vocabulary::kEos) ++pos;
    if (pos != n) return fail(pos, "trailing tokens after action");

    if (act.args.size() != schema->param_names.size())
        return fail(0, "arity mismatch for " + name);
    for (std::size_t i = 0; i < act.args.size(); ++i) {
        auto it = objects.find(act.args[i]);
        if (it == objects.end()) return fail(0, "unknown object " + act.args[i]);
        if (it->second != schema->param_types[i])
            return fail(0, "type mismatch: " + act.args[i] + " is not " + schema->param_types[i]);
    }
    return DecodeResult{std::move(act)};
}

struct PlanDecode {
    std::vector<GroundedAction> actions;  // successfully parsed prefix
    std::optional<ParseFailure> failure;  // set when the scan aborted
    bool hit_eos = false;
};

// Split an emitted plan region into action groups and decode each one. A
// group runs from a start token through its closing ')'; EOS ends the scan.
// The first malformed group aborts the scan with its failure recorded.
inline PlanDecode decode_plan(const std::vector<int>& ids, const Vocabulary& v, const Domain& dom,
                              const std::map<std::string, std::string>& objects) {
    PlanDecode out;
    const int n = static_cast<int>(ids.size());
    int pos = 0;
    while (pos < n) {
        if (ids[static_cast<std::size_t>(pos)] == Vocabulary::kEos) {
            out.hit_eos = true;
            return out;
        }
        int end = pos;
        while (end < n && ids[static_cast<std::size_t>(end)] != Vocabulary::kEos &&
               v.token(ids[static_cast<std::size_t>(end)]) != ")")
            ++end;
        const bool closed = end < n && ids[static_cast<std::size_t>(end)] != Vocabulary::kEos;
        if (!closed) {
            out.failure = ParseFailure{pos, "truncated action"};
            return out;
        }
        std::vector<int> group(ids.begin() + pos, ids.begin() + end + 1);
        DecodeResult res = decode_action(group, v, dom, objects);
        if (auto* f = std::get_if<ParseFailure>(&res)) {
            out.failure = ParseFailure{pos + f->position, f->reason};
            return out;
        }
        out.actions.push_back(std::get<GroundedAction>(std::move(res)));
        pos = end + 1;
    }
    return out;  // ran out of tokens without EOS: fine, prefix stands
}

}  // namespace nesypr
