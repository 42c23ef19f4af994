// Command-line front end: suite generation, training, evaluation, the
// continual protocol, the planner latency study, codebook inspection and
// ablation sweeps. All state flows through files; every run is reproducible
// from --seed plus the config file.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "nesypr/harness.hpp"

using namespace nesypr;

namespace {

struct GlobalArgs {
    std::uint64_t seed = 0;
    std::string config_path;
    std::string out_dir = "out";
};

ConfigMap load_config(const std::string& path) {
    if (path.empty()) return {};
    return parse_config(read_text_file(path));
}

std::uint64_t scoped_seed(const ConfigMap& kv, const std::string& key, std::uint64_t fallback) {
    return static_cast<std::uint64_t>(cfg_int(kv, key, static_cast<long long>(fallback)));
}

// Suite and vocabulary are regenerated deterministically instead of being
// serialized: the generator is itself a pure function of seed and config.
struct World {
    Suite suite;
    Vocabulary vocab;
    std::vector<TaskInstance> all;
};

World build_world(const ConfigMap& kv, std::uint64_t seed) {
    World w;
    w.suite = generate_minecraft_suite(suite_config_from(kv), scoped_seed(kv, "suite.seed", seed));
    w.all = w.suite.train;
    w.all.insert(w.all.end(), w.suite.test.begin(), w.suite.test.end());
    w.all.insert(w.all.end(), w.suite.hard.begin(), w.suite.hard.end());
    w.vocab = build_vocab(w.suite.domain, w.all);
    return w;
}

const std::vector<TaskInstance>& split_of(const Suite& s, const std::string& name) {
    if (name == "train") return s.train;
    if (name == "test") return s.test;
    if (name == "hard") return s.hard;
    throw std::runtime_error("unknown split '" + name + "' (expected train, test or hard)");
}

std::string out_path(const GlobalArgs& g, const std::string& file) {
    std::filesystem::create_directories(g.out_dir);
    return (std::filesystem::path(g.out_dir) / file).string();
}

Banks banks_from_config(const ConfigMap& kv, int layers) {
    return make_banks(layers, static_cast<int>(cfg_int(kv, "banks.capacity", 4096)),
                      cfg_bool(kv, "banks.final_layer_only", false));
}

// Shared eval-time ablation switches.
struct VariantFlags {
    bool no_cp = false;
    bool no_bank = false;
    std::string bank_mode = "all";  // all | pos-only | neg-only
    std::string follow = "pos";     // pos | neg
    bool persist_memory = false;
};

ContinualOptions variant_options(const ConfigMap& kv, const VariantFlags& f) {
    ContinualOptions opts;
    opts.decode = decode_config_from(kv);
    opts.bank_capacity = static_cast<int>(cfg_int(kv, "banks.capacity", 4096));
    opts.final_layer_only = cfg_bool(kv, "banks.final_layer_only", false);
    if (f.no_cp) opts.decode.use_cp = false;
    if (f.no_bank) opts.update_banks = false;
    if (f.bank_mode == "pos-only")
        opts.bank_negative = false;
    else if (f.bank_mode == "neg-only")
        opts.bank_positive = false;
    else if (f.bank_mode != "all")
        throw std::runtime_error("--bank expects all, pos-only or neg-only");
    if (f.follow == "neg")
        opts.decode.follow_negative = true;
    else if (f.follow != "pos")
        throw std::runtime_error("--follow expects pos or neg");
    opts.persist_memory = f.persist_memory;
    return opts;
}

void print_report(const MetricsReport& rep) {
    std::printf("episodes %d  CSR %.1f%%  CGC %.1f%%  Exe %.1f%%  SPL %.3f\n", rep.episodes,
                rep.csr, rep.cgc, rep.exe, rep.spl);
    for (const auto& p : rep.phases) {
        std::printf("  phase %d: new %d reeval %d  FWT %+.1f  BWT %+.1f  FR %.1f  RR %.1f%s\n",
                    p.phase, p.n_new, p.n_reeval, p.fwt, p.bwt, p.fr, p.rr,
                    (p.fr_undef && p.rr_undef) ? "  (no re-evaluation)" : "");
    }
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const GlobalArgs& g, const ConfigMap& kv) {
    World w = build_world(kv, g.seed);
    auto ds_open = generate_dataset(w.suite.domain, w.suite.train, w.vocab);
    auto ds_closed = generate_dataset_closed_loop(w.suite.domain, w.suite.train, w.vocab);
    auto ds_test = generate_dataset(w.suite.domain, w.suite.test, w.vocab);
    save_dataset(out_path(g, "dataset_train.nspd"), ds_open);
    save_dataset(out_path(g, "dataset_train_closed.nspd"), ds_closed);
    save_dataset(out_path(g, "dataset_test.nspd"), ds_test);
    write_text_file(out_path(g, "dataset_train.txt"), dataset_text_dump(ds_open, w.vocab));

    std::string csv = "split,id,task_type,objects,goal_atoms,optimal_length\n";
    auto add = [&](const char* split, const std::vector<TaskInstance>& v) {
        for (const auto& inst : v)
            csv += std::string(split) + "," + inst.id + "," + inst.task_type + "," +
                   std::to_string(inst.objects.size()) + "," + std::to_string(inst.goal.size()) +
                   "," + std::to_string(inst.optimal_length) + "\n";
    };
    add("train", w.suite.train);
    add("test", w.suite.test);
    add("hard", w.suite.hard);
    write_text_file(out_path(g, "suite.csv"), csv);

    std::printf("suite: %zu train / %zu test / %zu hard, vocabulary %d tokens\n",
                w.suite.train.size(), w.suite.test.size(), w.suite.hard.size(), w.vocab.size());
    std::printf("wrote datasets and suite.csv under %s\n", g.out_dir.c_str());
    return 0;
}

int cmd_train(const GlobalArgs& g, const ConfigMap& kv, bool no_book, bool no_ema,
              bool closed_loop, const std::string& resume, int stop_after) {
    World w = build_world(kv, g.seed);
    auto dataset = closed_loop
                       ? generate_dataset_closed_loop(w.suite.domain, w.suite.train, w.vocab)
                       : generate_dataset(w.suite.domain, w.suite.train, w.vocab);

    TrainRunConfig tc = train_config_from(kv);
    tc.seed = scoped_seed(kv, "train.seed", g.seed);
    if (no_ema) tc.use_ema = false;
    if (stop_after > 0) tc.stop_after = stop_after;

    Trainer tr;
    if (!resume.empty()) {
        tr = load_checkpoint(resume, w.vocab.size());
        std::printf("resuming from %s at epoch %d\n", resume.c_str(), tr.epochs_done);
    } else {
        ModelConfig mc = model_config_from(kv);
        mc.vocab = w.vocab.size();
        mc.seed = scoped_seed(kv, "model.seed", g.seed);
        if (no_book) mc.use_book = false;
        tr = make_trainer(mc, tc);
    }

    const std::string ckpt = out_path(g, "checkpoint.nspc");
    TrainResult res = train(tr, dataset, w.vocab, w.suite.domain, w.suite.train, tc, ckpt);
    write_text_file(out_path(g, "training_log.csv"), training_log_csv(res.log));
    if (!res.log.empty()) {
        const EpochLog& last = res.log.back();
        std::printf("epoch %d  nll %.4f  vq %.4f  book_util %.2f  probe_csr %.3f\n", last.epoch,
                    last.nll, last.vq, last.book_util, last.csr_probe);
    }
    std::printf("checkpoint: %s%s\n", ckpt.c_str(),
                tr.model.cfg.use_book && !res.book_healthy ? "  (warning: low book utilization)"
                                                           : "");
    return 0;
}

int cmd_eval(const GlobalArgs& g, const ConfigMap& kv, const std::string& ckpt,
             const std::string& split, const std::string& loop, bool grow_banks,
             const VariantFlags& flags, bool check, double min_csr, double min_spl) {
    World w = build_world(kv, g.seed);
    Trainer tr = load_checkpoint(ckpt, w.vocab.size());
    ContinualOptions opts = variant_options(kv, flags);

    Banks banks = banks_from_config(kv, tr.model.cfg.layers);
    std::vector<EpisodeRow> rows = run_suite(
        tr.model, w.vocab, w.suite.domain, split_of(w.suite, split), banks, opts.decode,
        loop == "closed", static_cast<int>(cfg_int(kv, "eval.max_steps", 24)), grow_banks);
    MetricsReport rep = make_report(rows);

    write_text_file(out_path(g, "episodes.jsonl"), episodes_to_jsonl(rows));
    write_text_file(out_path(g, "metrics.json"), metrics_json(rep));
    if (tr.model.cfg.use_book)
        write_text_file(out_path(g, "codebook_usage.csv"),
                        usage_csv(codebook_usage(rows, tr.model.cfg.book_size)));
    print_report(rep);

    if (check && (rep.csr < min_csr || rep.spl < min_spl)) {
        std::fprintf(stderr, "check failed: CSR %.2f (min %.2f), SPL %.3f (min %.3f)\n", rep.csr,
                     min_csr, rep.spl, min_spl);
        return 2;
    }
    return 0;
}

SequenceConfig sequence_from_config(const ConfigMap& kv, const World& w, std::uint64_t seed) {
    SequenceConfig seq;
    seq.ids = cfg_list(kv, "continual.ids");
    if (seq.ids.empty())
        for (const auto& inst : w.suite.test) seq.ids.push_back(inst.id);

    for (const std::string& s : cfg_list(kv, "continual.phase_ends"))
        seq.phase_end.push_back(std::stoi(s));
    if (seq.phase_end.empty()) {
        const int n = static_cast<int>(seq.ids.size());
        const int phases =
            std::max(1, static_cast<int>(cfg_int(kv, "continual.phases", std::min(5, n))));
        for (int k = 1; k <= phases; ++k)
            seq.phase_end.push_back(k == phases ? n : k * n / phases);
    }

    std::string reeval = cfg_str(kv, "continual.reeval", "all");
    if (reeval == "all") {
        for (int k = 0; k < static_cast<int>(seq.phase_end.size()); ++k)
            seq.reeval_phases.push_back(k);
    } else if (reeval != "none") {
        ConfigMap tmp{{"x", reeval}};
        for (const std::string& s : cfg_list(tmp, "x")) seq.reeval_phases.push_back(std::stoi(s));
    }

    seq.seed = scoped_seed(kv, "continual.seed", seed);
    seq.closed_loop = cfg_str(kv, "continual.loop", "open") == "closed";
    seq.max_steps = static_cast<int>(cfg_int(kv, "continual.max_steps", 24));
    return seq;
}

int cmd_continual(const GlobalArgs& g, const ConfigMap& kv, const std::string& ckpt,
                  const std::string& loop, const VariantFlags& flags, bool check, double max_fr,
                  double min_rr) {
    World w = build_world(kv, g.seed);
    Trainer tr = load_checkpoint(ckpt, w.vocab.size());
    SequenceConfig seq = sequence_from_config(kv, w, g.seed);
    if (!loop.empty()) seq.closed_loop = loop == "closed";
    ContinualOptions opts = variant_options(kv, flags);

    ContinualResult res = continual_run(tr.model, w.vocab, w.suite.domain, w.all, seq, opts);
    write_text_file(out_path(g, "episodes.jsonl"), episodes_to_jsonl(res.rows));
    write_text_file(out_path(g, "metrics.json"), metrics_json(res.report));
    write_text_file(out_path(g, "phases.csv"), phases_csv(res.report.phases));
    if (tr.model.cfg.use_book)
        write_text_file(out_path(g, "codebook_usage.csv"),
                        usage_csv(codebook_usage(res.rows, tr.model.cfg.book_size)));
    print_report(res.report);
    std::printf("banks: %zu positive / %zu negative entries\n", res.banks.pos.total_entries(),
                res.banks.neg.total_entries());

    if (check) {
        double worst_fr = 0.0, best_rr = 0.0;
        for (const auto& p : res.report.phases) {
            if (p.n_reeval == 0) continue;
            worst_fr = std::max(worst_fr, p.fr);
            best_rr = std::max(best_rr, p.rr);
        }
        if (worst_fr > max_fr || best_rr < min_rr) {
            std::fprintf(stderr, "check failed: FR %.2f (max %.2f), RR %.2f (min %.2f)\n",
                         worst_fr, max_fr, best_rr, min_rr);
            return 2;
        }
    }
    return 0;
}

int cmd_bench_planner(const GlobalArgs& g, const ConfigMap& kv, const std::string& ckpt,
                      const std::string& split, const std::string& budgets_arg, bool bfs,
                      bool check) {
    World w = build_world(kv, g.seed);
    Trainer tr = load_checkpoint(ckpt, w.vocab.size());

    std::vector<double> budgets;
    {
        ConfigMap tmp{{"x", budgets_arg.empty() ? cfg_str(kv, "bench.budgets",
                                                          "0.01 0.05 0.1 0.5 1 2 5 10 30")
                                                : budgets_arg}};
        for (const std::string& s : cfg_list(tmp, "x")) budgets.push_back(std::stod(s));
    }

    Banks banks = banks_from_config(kv, tr.model.cfg.layers);
    DecodeConfig dc = decode_config_from(kv);
    PlannerCompareStudy study =
        compare_planner(tr.model, w.vocab, w.suite.domain, split_of(w.suite, split), banks, dc,
                        budgets, cfg_double(kv, "bench.planner_timeout_s", 120.0), bfs);
    write_text_file(out_path(g, "planner_compare.csv"), planner_compare_csv(study));

    bool crossover = false;
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        std::printf("budget %8.3fs  model %6.1f%%  planner %6.1f%%\n", study.budgets[i],
                    study.model_under_budget[i], study.planner_under_budget[i]);
        crossover = crossover || study.model_under_budget[i] > study.planner_under_budget[i];
    }
    std::printf("crossover within the budget sweep: %s\n", crossover ? "yes" : "no");
    if (check && !crossover) {
        std::fprintf(stderr, "check failed: no budget with model above planner\n");
        return 2;
    }
    return 0;
}

int cmd_inspect_codebook(const GlobalArgs& g, const std::string& episodes_path,
                         const std::string& ckpt, int units) {
    int k = units;
    if (k <= 0) {
        if (ckpt.empty())
            throw std::runtime_error("inspect-codebook needs --units or --ckpt for the book size");
        k = load_checkpoint(ckpt).model.cfg.book_size;
    }
    std::vector<EpisodeRow> rows = episodes_from_jsonl(read_text_file(episodes_path));
    UsageReport rep = codebook_usage(rows, k);
    write_text_file(out_path(g, "codebook_usage.csv"), usage_csv(rep));
    for (std::size_t i = 0; i < rep.task_types.size(); ++i) {
        int best = 0;
        for (int u = 1; u < rep.num_units; ++u)
            if (rep.rows[i][(std::size_t)u] > rep.rows[i][(std::size_t)best]) best = u;
        std::printf("%-18s peak unit %3d (%.1f%% of usage)\n", rep.task_types[i].c_str(), best,
                    100.0 * rep.rows[i][(std::size_t)best]);
    }
    return 0;
}

int cmd_ablate(const GlobalArgs& g, const ConfigMap& kv, const std::string& ckpt,
               const std::string& split, const std::string& loop,
               std::vector<std::string> variants) {
    World w = build_world(kv, g.seed);
    Trainer tr = load_checkpoint(ckpt, w.vocab.size());

    if (variants.empty())
        variants = {"full", "no-cp", "no-bank", "bank-pos-only", "bank-neg-only", "follow-neg"};

    // One single-phase pass per variant; banks grow between tasks, so this is
    // the live protocol rather than a frozen evaluation.
    SequenceConfig seq;
    for (const auto& inst : split_of(w.suite, split)) seq.ids.push_back(inst.id);
    seq.phase_end = {static_cast<int>(seq.ids.size())};
    seq.closed_loop = loop == "closed";
    seq.max_steps = static_cast<int>(cfg_int(kv, "eval.max_steps", 24));

    std::string csv = "variant,csr,cgc,exe,spl,fwt\n";
    for (const std::string& v : variants) {
        VariantFlags f;
        if (v == "no-cp")
            f.no_cp = true;
        else if (v == "no-bank") {
            f.no_bank = true;
            f.no_cp = true;
        } else if (v == "bank-pos-only")
            f.bank_mode = "pos-only";
        else if (v == "bank-neg-only")
            f.bank_mode = "neg-only";
        else if (v == "follow-neg")
            f.follow = "neg";
        else if (v != "full")
            throw std::runtime_error("unknown ablation variant '" + v + "'");
        ContinualResult res = continual_run(tr.model, w.vocab, w.suite.domain, w.all, seq,
                                            variant_options(kv, f));
        const MetricsReport& rep = res.report;
        const double fwt = rep.phases.empty() ? 0.0 : rep.phases[0].fwt;
        std::printf("%-14s CSR %6.1f  CGC %6.1f  Exe %6.1f  SPL %.3f  FWT %+.1f\n", v.c_str(),
                    rep.csr, rep.cgc, rep.exe, rep.spl, fwt);
        csv += v + "," + fmt_g17(rep.csr) + "," + fmt_g17(rep.cgc) + "," + fmt_g17(rep.exe) + "," +
               fmt_g17(rep.spl) + "," + fmt_g17(fwt) + "\n";
    }
    write_text_file(out_path(g, "ablation_summary.csv"), csv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neurosymbolic proceduralization toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalArgs g;
    app.add_option("--seed", g.seed, "master seed for suite, model and training");
    app.add_option("--config", g.config_path, "config file (key = value with [section] headers)");
    app.add_option("--out", g.out_dir, "output directory")->capture_default_str();

    int rc = 0;

    auto* gen = app.add_subcommand("gen-data", "generate the task suite and datasets");
    gen->callback([&] { rc = cmd_gen_data(g, load_config(g.config_path)); });

    auto* train_cmd = app.add_subcommand("train", "train a model on reference plans");
    bool no_book = false, no_ema = false, train_closed = false;
    std::string resume;
    int stop_after = 0;
    train_cmd->add_flag("--no-book", no_book, "ablation: identity quantization, no procedure-book");
    train_cmd->add_flag("--no-ema", no_ema, "ablation: freeze the book after calibration");
    train_cmd->add_flag("--closed-loop", train_closed, "train on per-step state/action pairs");
    train_cmd->add_option("--resume", resume, "checkpoint to continue from");
    train_cmd->add_option("--stop-after", stop_after,
                          "pause after this epoch; the learning-rate schedule keeps spanning "
                          "train.epochs so a later --resume continues it exactly");
    train_cmd->callback([&] {
        rc = cmd_train(g, load_config(g.config_path), no_book, no_ema, train_closed, resume,
                       stop_after);
    });

    std::string ckpt, split = "test", loop, bank_mode = "all", follow = "pos";
    bool no_cp = false, no_bank = false, persist = false, grow_banks = false, check = false;
    auto add_variant_flags = [&](CLI::App* cmd) {
        cmd->add_option("--ckpt", ckpt, "model checkpoint")->required();
        cmd->add_flag("--no-cp", no_cp, "ablation: disable contrastive reshaping");
        cmd->add_flag("--no-bank", no_bank, "ablation: never store episodes in the banks");
        cmd->add_option("--bank", bank_mode, "bank routing: all, pos-only or neg-only");
        cmd->add_option("--follow", follow, "memory stream to thread: pos or neg");
        cmd->add_flag("--persist-memory", persist, "thread working memory across live tasks");
        cmd->add_flag("--check", check, "exit 2 when thresholds are missed");
    };
    auto variant_flags = [&] {
        VariantFlags f;
        f.no_cp = no_cp;
        f.no_bank = no_bank;
        f.bank_mode = bank_mode;
        f.follow = follow;
        f.persist_memory = persist;
        return f;
    };

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on one split");
    double min_csr = 0.0, min_spl = 0.0;
    loop = "open";
    add_variant_flags(eval_cmd);
    eval_cmd->add_option("--split", split, "train, test or hard")->capture_default_str();
    eval_cmd->add_option("--loop", loop, "open or closed")->capture_default_str();
    eval_cmd->add_flag("--banks", grow_banks, "grow banks task by task during the pass");
    eval_cmd->add_option("--min-csr", min_csr, "threshold for --check");
    eval_cmd->add_option("--min-spl", min_spl, "threshold for --check");
    eval_cmd->callback([&] {
        rc = cmd_eval(g, load_config(g.config_path), ckpt, split, loop, grow_banks,
                      variant_flags(), check, min_csr, min_spl);
    });

    auto* cont = app.add_subcommand("continual", "run the continual sequence protocol");
    double max_fr = 100.0, min_rr = 0.0;
    std::string cont_loop;
    add_variant_flags(cont);
    cont->add_option("--loop", cont_loop, "override the configured loop mode (open or closed)");
    cont->add_option("--max-fr", max_fr, "threshold for --check");
    cont->add_option("--min-rr", min_rr, "threshold for --check");
    cont->callback([&] {
        rc = cmd_continual(g, load_config(g.config_path), ckpt, cont_loop, variant_flags(), check,
                           max_fr, min_rr);
    });

    auto* bench = app.add_subcommand("bench-planner", "model vs planner under time budgets");
    std::string bench_split = "hard", budgets_arg;
    bool bench_bfs = false, bench_check = false;
    bench->add_option("--ckpt", ckpt, "model checkpoint")->required();
    bench->add_option("--split", bench_split, "train, test or hard")->capture_default_str();
    bench->add_option("--budgets", budgets_arg, "comma-separated time budgets in seconds");
    bench->add_flag("--bfs", bench_bfs, "benchmark the breadth-first planner instead");
    bench->add_flag("--check", bench_check, "exit 2 when no crossover budget exists");
    bench->callback([&] {
        rc = cmd_bench_planner(g, load_config(g.config_path), ckpt, bench_split, budgets_arg,
                               bench_bfs, bench_check);
    });

    auto* inspect = app.add_subcommand("inspect-codebook", "usage heatmap from an episode log");
    std::string episodes_path = "out/episodes.jsonl", inspect_ckpt;
    int units = 0;
    inspect->add_option("--episodes", episodes_path, "episodes.jsonl path")->capture_default_str();
    inspect->add_option("--ckpt", inspect_ckpt, "checkpoint to read the book size from");
    inspect->add_option("--units", units, "book size when no checkpoint is given");
    inspect->callback([&] { rc = cmd_inspect_codebook(g, episodes_path, inspect_ckpt, units); });

    auto* ablate = app.add_subcommand("ablate", "evaluate a set of ablation variants");
    std::string ablate_split = "test", ablate_loop = "open";
    std::vector<std::string> variants;
    ablate->add_option("--ckpt", ckpt, "model checkpoint")->required();
    ablate->add_option("--split", ablate_split, "train, test or hard")->capture_default_str();
    ablate->add_option("--loop", ablate_loop, "open or closed")->capture_default_str();
    ablate->add_option("--variants", variants, "subset of the ablation presets to run");
    ablate->callback([&] {
        rc = cmd_ablate(g, load_config(g.config_path), ckpt, ablate_split, ablate_loop, variants);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return rc;
}
