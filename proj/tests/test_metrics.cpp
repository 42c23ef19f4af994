#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "nesypr/metrics.hpp"
#include "nesypr/minecraft.hpp"
#include "nesypr/planner.hpp"
#include "nesypr/util.hpp"

using namespace nesypr;

namespace {

// Row builder for formula fixtures; only the fields a given metric reads
// need to be meaningful.
EpisodeRow row(bool success, int goals_met = 1, int goal_total = 1, int emitted = 1,
               int executed = 1, int optimal = 1) {
    EpisodeRow r;
    r.instance_id = "fixture";
    r.task_type = "move_equip";
    r.success = success;
    r.goals_met = goals_met;
    r.goal_total = goal_total;
    r.emitted = emitted;
    r.executed = executed;
    r.plan_length = emitted;
    r.optimal_length = optimal;
    return r;
}

// History builder for the continual table.
EpisodeRow hist(const std::string& id, EvalKind kind, int phase, int seq, bool success) {
    EpisodeRow r;
    r.instance_id = id;
    r.task_type = "move_equip";
    r.kind = kind;
    r.phase = phase;
    r.seq_index = seq;
    r.success = success;
    r.goals_met = success ? 1 : 0;
    r.goal_total = 1;
    r.emitted = 2;
    r.executed = success ? 2 : 1;
    r.plan_length = 2;
    r.optimal_length = 2;
    return r;
}

}  // namespace

TEST_CASE("csr: pinned fixtures") {
    CHECK(csr({row(true), row(true), row(false), row(false)}) == 50.0);
    CHECK(csr({row(true), row(true), row(true)}) == 100.0);
    // An empty-goal task is vacuously satisfied and counts like any success.
    EpisodeRow empty_goal = row(true, 0, 0, 0, 0, 0);
    CHECK(csr({empty_goal, row(false)}) == 50.0);
    CHECK_THROWS_WITH_AS(csr({}), "csr: empty results", std::invalid_argument);
}

TEST_CASE("cgc: pinned fixtures") {
    CHECK(cgc({row(false, 1, 2)}) == 50.0);
    CHECK(cgc({row(true, 2, 2), row(false, 1, 2), row(false, 0, 2)}) == 50.0);
    CHECK_THROWS_WITH_AS(cgc({}), "cgc: empty results", std::invalid_argument);
    CHECK_THROWS_WITH_AS(cgc({row(true, 0, 0)}), "cgc: zero goal atoms", std::invalid_argument);
}

TEST_CASE("cgc equals csr when every task has exactly one goal atom") {
    Rng rng(991);
    std::vector<EpisodeRow> rows;
    for (int i = 0; i < 60; ++i) {
        bool s = rng_below(rng, 2) == 1;
        rows.push_back(row(s, s ? 1 : 0, 1));
    }
    CHECK(csr(rows) == cgc(rows));
}

TEST_CASE("exe: pinned fixtures") {
    CHECK(exe({row(true, 1, 1, 4, 3)}) == 75.0);
    // A malformed emission counts as emitted and infeasible.
    EpisodeRow junk = row(false, 0, 1, 1, 0);
    junk.parse_failed = true;
    CHECK(exe({junk}) == 0.0);
    CHECK_THROWS_WITH_AS(exe({}), "exe: empty results", std::invalid_argument);
    CHECK_THROWS_WITH_AS(exe({row(true, 1, 1, 0, 0)}), "exe: zero emitted actions",
                         std::invalid_argument);
}

TEST_CASE("exe: a planner-validated plan is fully executable") {
    SuiteConfig cfg;
    cfg.n_train = 2;
    cfg.n_test = 0;
    cfg.n_hard = 0;
    cfg.depth_cap = 10;
    Suite suite = generate_minecraft_suite(cfg, 4242);
    std::vector<EpisodeRow> rows;
    for (const auto& inst : suite.train) {
        PlannerReport rep = solve(suite.domain, inst, {});
        REQUIRE(rep.solved());
        ValidationResult val = validate(suite.domain, inst, rep.plan);
        REQUIRE(val.plan_valid);
        EpisodeRow r = row(val.goal_reached, val.goals_met, (int)inst.goal.size(),
                           (int)rep.plan.size(), val.executed_prefix, inst.optimal_length);
        rows.push_back(r);
    }
    CHECK(exe(rows) == 100.0);
    CHECK(spl(rows) == 1.0);  // optimal plans score full efficiency
}

TEST_CASE("spl: pinned fixtures") {
    CHECK(spl({row(true, 1, 1, 2, 2, 2)}) == 1.0);
    CHECK(spl({row(true, 1, 1, 4, 4, 2)}) == 0.5);
    CHECK(spl({row(false, 0, 1, 9, 9, 2)}) == 0.0);
    // Mixed suite: (1 + 0.5 + 0) / 3.
    CHECK(spl({row(true, 1, 1, 2, 2, 2), row(true, 1, 1, 4, 4, 2), row(false, 0, 1, 9, 9, 2)}) ==
          0.5);
    // Zero-length optimum: only a zero-action success is efficient.
    CHECK(spl({row(true, 0, 0, 0, 0, 0)}) == 1.0);
    CHECK(spl({row(true, 0, 0, 3, 3, 0)}) == 0.0);
    CHECK_THROWS_WITH_AS(spl({}), "spl: empty results", std::invalid_argument);
    CHECK_THROWS_WITH_AS(spl({row(true, 1, 1, 2, 2, -1)}),
                         "spl: missing optimal length for fixture", std::invalid_argument);
}

TEST_CASE("metric ranges hold on random rows") {
    Rng rng(313);
    std::vector<EpisodeRow> rows;
    for (int i = 0; i < 200; ++i) {
        int goal_total = 1 + (int)rng_below(rng, 3);
        int met = (int)rng_below(rng, (std::uint64_t)goal_total + 1);
        bool success = met == goal_total;
        int emitted = 1 + (int)rng_below(rng, 6);
        int executed = (int)rng_below(rng, (std::uint64_t)emitted + 1);
        int optimal = 1 + (int)rng_below(rng, 5);
        rows.push_back(row(success, met, goal_total, emitted, executed, optimal));
    }
    CHECK(csr(rows) >= 0.0);
    CHECK(csr(rows) <= 100.0);
    CHECK(cgc(rows) >= 0.0);
    CHECK(cgc(rows) <= 100.0);
    CHECK(exe(rows) >= 0.0);
    CHECK(exe(rows) <= 100.0);
    CHECK(spl(rows) >= 0.0);
    CHECK(spl(rows) <= 1.0);
}

TEST_CASE("continual table: hand-built four-task history with one recovery") {
    // Phase 0 runs t0 (fails) and t1 (succeeds); phase 1 runs t2 and t3 (both
    // succeed) and then re-evaluates everything seen so far with t0 now
    // succeeding: one recovery out of one previously failed task.
    std::vector<EpisodeRow> rows = {
        hist("t0", EvalKind::kFirst, 0, 0, false),
        hist("t0", EvalKind::kFwtBaseline, 0, 0, false),
        hist("t1", EvalKind::kFirst, 0, 1, true),
        hist("t1", EvalKind::kFwtBaseline, 0, 1, true),
        hist("t2", EvalKind::kFirst, 1, 2, true),
        hist("t2", EvalKind::kFwtBaseline, 1, 2, false),  // banks helped here
        hist("t3", EvalKind::kFirst, 1, 3, true),
        hist("t3", EvalKind::kFwtBaseline, 1, 3, true),
        hist("t0", EvalKind::kReeval, 1, 0, true),
        hist("t1", EvalKind::kReeval, 1, 1, true),
        hist("t2", EvalKind::kReeval, 1, 2, true),
        hist("t3", EvalKind::kReeval, 1, 3, true),
    };
    std::vector<PhaseRow> table = continual_metrics(rows);
    REQUIRE(table.size() == 2);

    CHECK(table[0].phase == 0);
    CHECK(table[0].n_new == 2);
    CHECK(table[0].fwt == 0.0);
    CHECK_FALSE(table[0].fwt_undef);
    // No re-evaluation scheduled in phase 0.
    CHECK(table[0].n_reeval == 0);
    CHECK(table[0].bwt == 0.0);
    CHECK(table[0].bwt_undef);
    CHECK(table[0].fr_undef);
    CHECK(table[0].rr_undef);

    CHECK(table[1].n_new == 2);
    CHECK(table[1].fwt == 50.0);  // t2 succeeded live but not under empty banks
    CHECK(table[1].n_reeval == 4);
    // Recovery: the only previously failed task (t0) now succeeds.
    CHECK(table[1].rr == 100.0);
    CHECK_FALSE(table[1].rr_undef);
    // No previously succeeded task fails.
    CHECK(table[1].fr == 0.0);
    CHECK_FALSE(table[1].fr_undef);
    // Tasks first seen before phase 1: t0 and t1, first-encounter mean 50,
    // re-evaluation mean 100.
    CHECK(table[1].bwt == 50.0);
    CHECK_FALSE(table[1].bwt_undef);
}

TEST_CASE("continual table: forgetting is counted against prior successes") {
    std::vector<EpisodeRow> rows = {
        hist("a", EvalKind::kFirst, 0, 0, true),
        hist("b", EvalKind::kFirst, 0, 1, true),
        hist("c", EvalKind::kFirst, 0, 2, false),
        hist("a", EvalKind::kReeval, 1, 0, false),  // forgotten
        hist("b", EvalKind::kReeval, 1, 1, true),
        hist("c", EvalKind::kReeval, 1, 2, false),
    };
    // An empty phase 1 of new tasks still needs a phase marker row; reuse the
    // reeval rows' phase index for sizing.
    std::vector<PhaseRow> table = continual_metrics(rows);
    REQUIRE(table.size() == 2);
    CHECK(table[1].fr == 50.0);  // one of two prior successes now fails
    CHECK(table[1].rr == 0.0);   // the prior failure stays failed
    CHECK_FALSE(table[1].fr_undef);
    CHECK_FALSE(table[1].rr_undef);
    CHECK(table[1].bwt == doctest::Approx(-100.0 / 3.0).epsilon(1e-12));
    CHECK(table[1].fwt_undef);  // no new tasks in phase 1
    CHECK(table[1].fwt == 0.0);
}

TEST_CASE("continual table: a stateless agent has exactly zero transfer") {
    // Baselines coincide with live outcomes and re-evaluations reproduce the
    // first encounters, as a deterministic bankless agent would.
    Rng rng(7);
    std::vector<EpisodeRow> rows;
    std::vector<bool> outcome;
    const int per_phase = 3, phases = 3;
    int seq = 0;
    for (int k = 0; k < phases; ++k) {
        for (int i = 0; i < per_phase; ++i, ++seq) {
            bool s = rng_below(rng, 2) == 1;
            outcome.push_back(s);
            std::string id = "t" + std::to_string(seq);
            rows.push_back(hist(id, EvalKind::kFirst, k, seq, s));
            rows.push_back(hist(id, EvalKind::kFwtBaseline, k, seq, s));
        }
        for (int j = 0; j <= seq - 1; ++j)
            rows.push_back(hist("t" + std::to_string(j), EvalKind::kReeval, k, j, outcome[(std::size_t)j]));
    }
    for (const PhaseRow& p : continual_metrics(rows)) {
        CHECK(p.fwt == 0.0);
        CHECK_FALSE(p.fwt_undef);
        CHECK(p.fr == 0.0);
        CHECK(p.rr == 0.0);
        if (p.phase == 0) {
            CHECK(p.bwt == 0.0);  // first phase: nothing seen earlier
            CHECK(p.bwt_undef);
        } else {
            CHECK(p.bwt == 0.0);
            CHECK_FALSE(p.bwt_undef);
        }
    }
}

TEST_CASE("continual table: division guards pin undefined values to zero") {
    // All first encounters fail: at the re-evaluation there is no prior
    // success, so FR is undefined; RR has a full denominator.
    std::vector<EpisodeRow> rows = {
        hist("x", EvalKind::kFirst, 0, 0, false),
        hist("y", EvalKind::kFirst, 0, 1, false),
        hist("x", EvalKind::kReeval, 1, 0, true),
        hist("y", EvalKind::kReeval, 1, 1, false),
    };
    std::vector<PhaseRow> table = continual_metrics(rows);
    REQUIRE(table.size() == 2);
    CHECK(table[1].fr == 0.0);
    CHECK(table[1].fr_undef);
    CHECK(table[1].rr == 50.0);
    CHECK_FALSE(table[1].rr_undef);
    // Phase 1 has no new tasks and no first encounter happened before phase 0.
    CHECK(table[0].bwt_undef);
    CHECK(table[1].fwt_undef);
}

TEST_CASE("make_report: headline over the live stream only") {
    std::vector<EpisodeRow> rows = {
        hist("t0", EvalKind::kFirst, 0, 0, true),
        hist("t0", EvalKind::kFwtBaseline, 0, 0, false),
        hist("t1", EvalKind::kFirst, 0, 1, false),
        hist("t1", EvalKind::kFwtBaseline, 0, 1, false),
        hist("t0", EvalKind::kReeval, 0, 0, false),
        hist("t1", EvalKind::kReeval, 0, 1, false),
    };
    MetricsReport rep = make_report(rows);
    CHECK(rep.episodes == 2);
    CHECK(rep.csr == 50.0);  // baselines and re-evaluations do not dilute it
    REQUIRE(rep.phases.size() == 1);
    CHECK(rep.phases[0].fwt == 50.0);
}

TEST_CASE("codebook usage: normalized per-type rows") {
    EpisodeRow a = row(true);
    a.task_type = "craft_equip";
    a.chunk_indices = {0, 0, 1, 3};
    EpisodeRow b = a;  // identical episode, same scene
    EpisodeRow c = row(true);
    c.task_type = "move_equip";
    c.chunk_indices = {2, 2, 2, 2};

    UsageReport rep = codebook_usage({a, b, c}, 4);
    REQUIRE(rep.task_types.size() == 2);
    CHECK(rep.task_types[0] == "craft_equip");
    CHECK(rep.task_types[1] == "move_equip");
    for (const auto& r : rep.rows) {
        double sum = 0;
        for (double v : r) sum += v;
        CHECK(std::fabs(sum - 1.0) <= 1e-9);
    }
    // Identical episodes fold into one deterministic row.
    CHECK(rep.rows[0][0] == 0.5);
    CHECK(rep.rows[0][1] == 0.25);
    CHECK(rep.rows[0][2] == 0.0);
    CHECK(rep.rows[0][3] == 0.25);
    CHECK(rep.rows[1][2] == 1.0);

    UsageReport again = codebook_usage({a, b, c}, 4);
    CHECK(again.rows == rep.rows);

    CHECK_THROWS_WITH_AS(codebook_usage({}, 4), "codebook_usage: empty logs",
                         std::invalid_argument);
    EpisodeRow bad = a;
    bad.chunk_indices = {7};
    CHECK_THROWS_AS(codebook_usage({bad}, 4), std::logic_error);
}

TEST_CASE("episode rows round-trip through JSON lines bit-exactly") {
    Rng rng(555);
    std::vector<EpisodeRow> rows;
    const char* kinds_types[] = {"move_equip", "collect_move", "craft_equip"};
    for (int i = 0; i < 40; ++i) {
        EpisodeRow r;
        r.instance_id = "mc-test-" + std::to_string(i);
        r.task_type = kinds_types[rng_below(rng, 3)];
        r.kind = static_cast<EvalKind>(rng_below(rng, 4));
        r.phase = (int)rng_below(rng, 4);
        r.seq_index = i;
        r.success = rng_below(rng, 2) == 1;
        r.goals_met = (int)rng_below(rng, 3);
        r.goal_total = 3;
        r.emitted = 1 + (int)rng_below(rng, 5);
        r.executed = (int)rng_below(rng, (std::uint64_t)r.emitted + 1);
        r.plan_length = r.emitted;
        r.optimal_length = 1 + (int)rng_below(rng, 6);
        r.parse_failed = rng_below(rng, 4) == 0;
        r.decode_truncated = rng_below(rng, 4) == 0;
        for (int c = 0; c < 8; ++c) r.chunk_indices.push_back((int)rng_below(rng, 16));
        rows.push_back(r);
    }
    std::string text = episodes_to_jsonl(rows);
    std::vector<EpisodeRow> back = episodes_from_jsonl(text);
    REQUIRE(back.size() == rows.size());
    CHECK(back == rows);

    // Round-tripping changes nothing the metrics can see.
    CHECK(csr(back) == csr(rows));
    CHECK(cgc(back) == cgc(rows));
    CHECK(exe(back) == exe(rows));
    CHECK(spl(back) == spl(rows));
    CHECK(episodes_to_jsonl(back) == text);

    CHECK_THROWS_AS(episodes_from_jsonl("{not json}\n"), std::runtime_error);
}

TEST_CASE("report serialization is deterministic and recomputable") {
    std::vector<EpisodeRow> rows = {
        hist("t0", EvalKind::kFirst, 0, 0, true),
        hist("t0", EvalKind::kFwtBaseline, 0, 0, false),
        hist("t1", EvalKind::kFirst, 1, 1, false),
        hist("t1", EvalKind::kFwtBaseline, 1, 1, false),
        hist("t0", EvalKind::kReeval, 1, 0, true),
    };
    MetricsReport rep = make_report(rows);
    MetricsReport redo = make_report(episodes_from_jsonl(episodes_to_jsonl(rows)));
    CHECK(rep == redo);
    CHECK(metrics_json(rep) == metrics_json(redo));
    CHECK(phases_csv(rep.phases) == phases_csv(redo.phases));

    std::string csv = phases_csv(rep.phases);
    CHECK(csv.rfind("phase,n_new,n_reeval,fwt,bwt,fr,rr,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 phases

    std::string js = metrics_json(rep);
    CHECK(js.find("\"csr\": 50.0") != std::string::npos);
}

TEST_CASE("fmt_g17 round-trips doubles") {
    Rng rng(8181);
    for (int i = 0; i < 200; ++i) {
        double v = rng_normal(rng) * std::pow(10.0, (double)rng_below(rng, 7) - 3.0);
        CHECK(std::stod(fmt_g17(v)) == v);
    }
    CHECK(fmt_g17(0.5) == "0.5");
}
