#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "nesypr/harness.hpp"

using namespace nesypr;

namespace {

// A deliberately untrained micro model over a micro suite: protocol tests
// only need deterministic episodes, not competent ones.
struct Fixture {
    Suite suite;
    Vocabulary vocab;
    Model model;
};

Fixture make_fixture() {
    SuiteConfig scfg;
    scfg.n_train = 4;
    scfg.n_test = 2;
    scfg.n_hard = 1;
    scfg.depth_cap = 8;
    Fixture f;
    f.suite = generate_minecraft_suite(scfg, 2024);
    std::vector<TaskInstance> all = f.suite.train;
    all.insert(all.end(), f.suite.test.begin(), f.suite.test.end());
    all.insert(all.end(), f.suite.hard.begin(), f.suite.hard.end());
    f.vocab = build_vocab(f.suite.domain, all);

    ModelConfig mcfg;
    mcfg.layers = 1;
    mcfg.width = 16;
    mcfg.slots = 2;
    mcfg.heads = 2;
    mcfg.ffn_mult = 2;
    mcfg.book_size = 8;
    mcfg.unit_dim = 8;
    mcfg.vocab = f.vocab.size();
    mcfg.max_seq = 352;
    mcfg.seed = 5;
    f.model = make_model(mcfg);
    // Give the book nonzero units so quantization indices vary.
    Rng rng(99);
    std::vector<double> chunks(static_cast<std::size_t>(32 * mcfg.unit_dim));
    for (double& v : chunks) v = rng_normal(rng);
    f.model.book.seed_from_chunks(chunks, rng);
    return f;
}

Fixture& fixture() {
    static Fixture f = make_fixture();
    return f;
}

std::vector<std::string> train_ids(int n) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back(fixture().suite.train[(std::size_t)i].id);
    return ids;
}

DecodeConfig fast_decode() {
    DecodeConfig d;
    d.max_tokens = 24;  // keep junk rollouts from an untrained model short
    return d;
}

}  // namespace

TEST_CASE("parse_config: sections, comments and trimming") {
    std::string text =
        "# top comment\n"
        "seed = 7\n"
        "\n"
        "[model]\n"
        "width = 32   # trailing comment\n"
        "  layers=2\n"
        "[suite]\n"
        "n_train = 3\n";
    ConfigMap kv = parse_config(text);
    CHECK(kv.size() == 4);
    CHECK(kv.at("seed") == "7");
    CHECK(kv.at("model.width") == "32");
    CHECK(kv.at("model.layers") == "2");
    CHECK(kv.at("suite.n_train") == "3");

    // Missing trailing newline is fine.
    CHECK(parse_config("a = 1").at("a") == "1");
    CHECK(parse_config("").empty());
}

TEST_CASE("parse_config: malformed lines carry their line number") {
    CHECK_THROWS_WITH_AS(parse_config("ok = 1\nbroken line\n"),
                         "config line 2: expected key = value", std::runtime_error);
    CHECK_THROWS_WITH_AS(parse_config("[unclosed\n"), "config line 1: malformed section header",
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(parse_config("[ ]\n"), "config line 1: empty section name",
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(parse_config("= 3\n"), "config line 1: empty key", std::runtime_error);
}

TEST_CASE("config getters: typed access with defaults") {
    ConfigMap kv = parse_config("[a]\nx = 12\ny = 0.5\nz = true\nw = hello\nlist = 1, 2 3\n");
    CHECK(cfg_int(kv, "a.x", -1) == 12);
    CHECK(cfg_int(kv, "a.missing", -1) == -1);
    CHECK(cfg_double(kv, "a.y", 0.0) == 0.5);
    CHECK(cfg_bool(kv, "a.z", false));
    CHECK(cfg_bool(kv, "a.missing", true));
    CHECK(cfg_str(kv, "a.w", "") == "hello");
    std::vector<std::string> lst = cfg_list(kv, "a.list");
    REQUIRE(lst.size() == 3);
    CHECK(lst[0] == "1");
    CHECK(lst[2] == "3");
    CHECK(cfg_list(kv, "a.missing").empty());

    CHECK_THROWS_WITH_AS(cfg_int(kv, "a.w", 0), "config: key 'a.w' expects an integer, got 'hello'",
                         std::runtime_error);
    CHECK_THROWS_AS(cfg_double(kv, "a.w", 0.0), std::runtime_error);
    CHECK_THROWS_AS(cfg_bool(kv, "a.x", false), std::runtime_error);
}

TEST_CASE("config adapters override only the keys present") {
    ConfigMap kv = parse_config(
        "[model]\nwidth = 24\nunit_dim = 12\n[suite]\nn_train = 9\n[decode]\nuse_cp = false\n"
        "[train]\nepochs = 3\n");
    ModelConfig mc = model_config_from(kv);
    CHECK(mc.width == 24);
    CHECK(mc.unit_dim == 12);
    CHECK(mc.layers == ModelConfig{}.layers);
    SuiteConfig sc = suite_config_from(kv);
    CHECK(sc.n_train == 9);
    CHECK(sc.n_test == SuiteConfig{}.n_test);
    DecodeConfig dc = decode_config_from(kv);
    CHECK_FALSE(dc.use_cp);
    CHECK(dc.theta == 0.1);
    TrainRunConfig tc = train_config_from(kv);
    CHECK(tc.epochs == 3);
    CHECK(tc.lr == 2e-4);
}

TEST_CASE("validate_sequence: boundary and id invariants") {
    const Fixture& f = fixture();
    std::map<std::string, const TaskInstance*> by_id;
    for (const auto& t : f.suite.train) by_id[t.id] = &t;

    SequenceConfig seq;
    seq.ids = train_ids(4);
    seq.phase_end = {2, 4};
    seq.reeval_phases = {1};
    CHECK_NOTHROW(validate_sequence(seq, by_id));

    SequenceConfig bad = seq;
    bad.ids.clear();
    CHECK_THROWS_WITH_AS(validate_sequence(bad, by_id), "sequence: no task ids",
                         std::invalid_argument);

    bad = seq;
    bad.phase_end = {2, 2};
    CHECK_THROWS_WITH_AS(validate_sequence(bad, by_id),
                         "sequence: phase boundaries must be strictly increasing",
                         std::invalid_argument);

    bad = seq;
    bad.phase_end = {2, 3};
    CHECK_THROWS_WITH_AS(validate_sequence(bad, by_id),
                         "sequence: last phase boundary must equal the task count",
                         std::invalid_argument);

    bad = seq;
    bad.ids[1] = "mc-train-999-nope";
    CHECK_THROWS_WITH_AS(validate_sequence(bad, by_id), "sequence: unknown task id mc-train-999-nope",
                         std::invalid_argument);

    bad = seq;
    bad.reeval_phases = {2};
    CHECK_THROWS_WITH_AS(validate_sequence(bad, by_id), "sequence: re-evaluation phase out of range",
                         std::invalid_argument);

    bad = seq;
    bad.closed_loop = true;
    bad.max_steps = 0;
    CHECK_THROWS_WITH_AS(validate_sequence(bad, by_id), "sequence: max_steps >= 1 required",
                         std::invalid_argument);
}

TEST_CASE("continual_run: protocol shape and log layout") {
    const Fixture& f = fixture();
    SequenceConfig seq;
    seq.ids = train_ids(4);
    seq.phase_end = {2, 4};
    seq.reeval_phases = {0, 1};
    ContinualOptions opts;
    opts.decode = fast_decode();

    ContinualResult res = continual_run(f.model, f.vocab, f.suite.domain, f.suite.train, seq, opts);

    // 4 live + 4 counterfactual + (2 + 4) re-evaluation rows.
    REQUIRE(res.rows.size() == 14);
    int firsts = 0, baselines = 0, reevals = 0;
    for (const auto& r : res.rows) {
        if (r.kind == EvalKind::kFirst) ++firsts;
        if (r.kind == EvalKind::kFwtBaseline) ++baselines;
        if (r.kind == EvalKind::kReeval) ++reevals;
        CHECK(r.phase >= 0);
        CHECK(r.seq_index >= 0);
        CHECK(r.optimal_length >= 2);
    }
    CHECK(firsts == 4);
    CHECK(baselines == 4);
    CHECK(reevals == 6);
    CHECK(res.rows[0].kind == EvalKind::kFirst);
    CHECK(res.rows[1].kind == EvalKind::kFwtBaseline);
    CHECK(res.rows[0].instance_id == seq.ids[0]);
    CHECK(res.rows[0].phase == 0);
    CHECK(res.rows[res.rows.size() - 1].phase == 1);

    CHECK(res.report.episodes == 4);
    REQUIRE(res.report.phases.size() == 2);

    // Determinism: an identical run serializes identically.
    ContinualResult again =
        continual_run(f.model, f.vocab, f.suite.domain, f.suite.train, seq, opts);
    CHECK(episodes_to_jsonl(again.rows) == episodes_to_jsonl(res.rows));
    CHECK(again.report == res.report);

    // Recomputing the report from the persisted log is bit-exact.
    MetricsReport redo = make_report(episodes_from_jsonl(episodes_to_jsonl(res.rows)));
    CHECK(redo == res.report);
    CHECK(metrics_json(redo) == metrics_json(res.report));
}

TEST_CASE("continual_run: re-evaluations leave bank state frozen") {
    const Fixture& f = fixture();
    SequenceConfig seq;
    seq.ids = train_ids(4);
    seq.phase_end = {2, 4};
    ContinualOptions opts;
    opts.decode = fast_decode();

    SequenceConfig with_reeval = seq;
    with_reeval.reeval_phases = {0, 1};
    ContinualResult plain =
        continual_run(f.model, f.vocab, f.suite.domain, f.suite.train, seq, opts);
    ContinualResult reevald =
        continual_run(f.model, f.vocab, f.suite.domain, f.suite.train, with_reeval, opts);
    CHECK(plain.banks.pos.total_entries() == reevald.banks.pos.total_entries());
    CHECK(plain.banks.neg.total_entries() == reevald.banks.neg.total_entries());
    // The untrained model fails these tasks, so failures were banked.
    CHECK(reevald.banks.neg.total_entries() > 0);
}

TEST_CASE("continual_run: bank routing respects the ablation gates") {
    const Fixture& f = fixture();
    SequenceConfig seq;
    seq.ids = train_ids(4);
    seq.phase_end = {4};
    ContinualOptions opts;
    opts.decode = fast_decode();

    ContinualOptions none = opts;
    none.update_banks = false;
    ContinualResult r0 = continual_run(f.model, f.vocab, f.suite.domain, f.suite.train, seq, none);
    CHECK(r0.banks.pos.total_entries() == 0);
    CHECK(r0.banks.neg.total_entries() == 0);

    ContinualOptions pos_only = opts;
    pos_only.bank_negative = false;
    ContinualResult r1 =
        continual_run(f.model, f.vocab, f.suite.domain, f.suite.train, seq, pos_only);
    CHECK(r1.banks.neg.total_entries() == 0);

    ContinualOptions neg_only = opts;
    neg_only.bank_positive = false;
    ContinualResult r2 =
        continual_run(f.model, f.vocab, f.suite.domain, f.suite.train, seq, neg_only);
    CHECK(r2.banks.pos.total_entries() == 0);
    CHECK(r2.banks.neg.total_entries() > 0);
}

TEST_CASE("continual_run: the stateless ablation has exactly zero transfer") {
    const Fixture& f = fixture();
    SequenceConfig seq;
    seq.ids = train_ids(4);
    seq.phase_end = {2, 4};
    seq.reeval_phases = {0, 1};
    ContinualOptions opts;
    opts.decode = fast_decode();
    opts.decode.use_cp = false;
    opts.update_banks = false;

    ContinualResult res = continual_run(f.model, f.vocab, f.suite.domain, f.suite.train, seq, opts);
    for (const PhaseRow& p : res.report.phases) {
        CHECK(p.fwt == 0.0);
        CHECK_FALSE(p.fwt_undef);
        CHECK(p.bwt == 0.0);
        CHECK(p.fr == 0.0);
        CHECK(p.rr == 0.0);
    }
    // Re-evaluations reproduce first encounters task for task.
    std::map<std::string, bool> first;
    for (const auto& r : res.rows)
        if (r.kind == EvalKind::kFirst) first[r.instance_id] = r.success;
    for (const auto& r : res.rows)
        if (r.kind == EvalKind::kReeval) CHECK(r.success == first.at(r.instance_id));
}

TEST_CASE("continual_run: closed loop and threaded memory smoke") {
    const Fixture& f = fixture();
    SequenceConfig seq;
    seq.ids = train_ids(2);
    seq.phase_end = {2};
    seq.reeval_phases = {0};
    seq.closed_loop = true;
    seq.max_steps = 3;
    ContinualOptions opts;
    opts.decode = fast_decode();
    opts.persist_memory = true;

    ContinualResult a = continual_run(f.model, f.vocab, f.suite.domain, f.suite.train, seq, opts);
    ContinualResult b = continual_run(f.model, f.vocab, f.suite.domain, f.suite.train, seq, opts);
    CHECK(episodes_to_jsonl(a.rows) == episodes_to_jsonl(b.rows));
    for (const auto& r : a.rows) CHECK(r.plan_length <= 3);
}

TEST_CASE("run_suite: plain evaluation rows") {
    const Fixture& f = fixture();
    Banks banks = make_banks(f.model.cfg.layers);
    DecodeConfig dcfg = fast_decode();
    std::vector<EpisodeRow> rows =
        run_suite(f.model, f.vocab, f.suite.domain, f.suite.train, banks, dcfg);
    REQUIRE(rows.size() == f.suite.train.size());
    for (const auto& r : rows) {
        CHECK(r.kind == EvalKind::kEval);
        CHECK(r.phase == -1);
        CHECK(!r.task_type.empty());
    }
    CHECK(banks.pos.total_entries() + banks.neg.total_entries() == 0);

    Banks growing = make_banks(f.model.cfg.layers);
    run_suite(f.model, f.vocab, f.suite.domain, f.suite.train, growing, dcfg, false, 24, true);
    CHECK(growing.pos.total_entries() + growing.neg.total_entries() > 0);
}

TEST_CASE("compare_planner: budget endpoints and CSV layout") {
    const Fixture& f = fixture();
    Banks banks = make_banks(f.model.cfg.layers);
    std::vector<double> budgets = {0.0, 1e9};
    PlannerCompareStudy study = compare_planner(f.model, f.vocab, f.suite.domain, f.suite.train,
                                                banks, fast_decode(), budgets, 60.0);
    REQUIRE(study.rows.size() == f.suite.train.size());
    REQUIRE(study.budgets.size() == 2);
    // Nothing finishes in zero seconds.
    CHECK(study.model_under_budget[0] == 0.0);
    CHECK(study.planner_under_budget[0] == 0.0);
    // With an unbounded budget the planner solves the whole solvable suite.
    CHECK(study.planner_under_budget[1] == 100.0);
    for (const auto& r : study.rows) {
        CHECK(r.planner_success);
        CHECK(r.planner_latency_s > 0.0);
        CHECK(r.model_latency_s > 0.0);
        CHECK(r.planner_plan_length >= 2);
    }

    std::string csv = planner_compare_csv(study);
    CHECK(csv.rfind("section,instance_id,budget_s,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') ==
          1 + (long)study.rows.size() + (long)budgets.size());
    CHECK(csv.find("\nsummary,,") != std::string::npos);

    CHECK_THROWS_WITH_AS(
        compare_planner(f.model, f.vocab, f.suite.domain, {}, banks, fast_decode(), budgets),
        "compare_planner: empty instance set", std::invalid_argument);
}

TEST_CASE("codebook usage over a real evaluation log") {
    const Fixture& f = fixture();
    Banks banks = make_banks(f.model.cfg.layers);
    std::vector<EpisodeRow> rows =
        run_suite(f.model, f.vocab, f.suite.domain, f.suite.train, banks, fast_decode());
    UsageReport rep = codebook_usage(rows, f.model.cfg.book_size);
    REQUIRE(!rep.task_types.empty());
    for (const auto& r : rep.rows) {
        double sum = 0;
        for (double v : r) sum += v;
        CHECK(std::fabs(sum - 1.0) <= 1e-9);
    }
    std::string csv = usage_csv(rep);
    CHECK(csv.rfind("task_type,unit_0,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + (long)rep.task_types.size());
}
