#include "gradleak/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>

#include "gradleak/bench.hpp"
#include "gradleak/defense.hpp"
#include "gradleak/errors.hpp"
#include "gradleak/gm.hpp"
#include "gradleak/harness.hpp"
#include "gradleak/io.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/parallel.hpp"
#include "gradleak/rlg.hpp"
#include "gradleak/simulator.hpp"

namespace gradleak::cli {

namespace fs = std::filesystem;
using io::Json;

namespace {

std::uint64_t default_seed() {
    if (const char* env = std::getenv("GRADLEAK_SEED")) {
        try {
            std::size_t used = 0;
            const std::uint64_t v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw InvalidArgument(std::string("GRADLEAK_SEED is not an unsigned integer: ") + env);
    }
    return 0;
}

// A single target when exactly one file is wanted and PATH looks like one;
// otherwise PATH is a directory holding <prefix>-<seed>.json.
fs::path output_path(const fs::path& out, std::size_t count, const std::string& prefix,
                     std::uint64_t seed) {
    if (count == 1 && out.extension() == ".json" && !fs::is_directory(out)) return out;
    return out / (prefix + "-" + std::to_string(seed) + ".json");
}

Json aggregate_json(const metrics::Aggregate& a, std::size_t errors) {
    Json j;
    j["cases"] = a.cases;
    j["precision"] = a.precision;
    j["recall"] = a.recall;
    j["f1"] = a.f1;
    j["exact_match"] = a.exact_match;
    j["length_error"] = a.length_error;
    j["errors"] = errors;
    return j;
}

Json conventions_json() {
    Json j;
    j["empty_prediction_precision"] = "1 if the truth is empty, else 0";
    j["empty_truth_recall"] = 1;
    j["failed_case"] = "scored as an empty prediction with inferred_S = 0";
    return j;
}

// Aggregates every per_case entry whose attack matches, in order.
struct Recomputed {
    metrics::Aggregate aggregate;
    std::size_t errors = 0;
};

Recomputed recompute(const std::vector<Json>& entries) {
    metrics::Accumulator acc;
    Recomputed r;
    for (const Json& e : entries) {
        metrics::SetScore s;
        s.precision = e.at("precision").get<double>();
        s.recall = e.at("recall").get<double>();
        s.f1 = e.at("f1").get<double>();
        s.exact_match = e.at("exact_match").get<bool>();
        acc.add(s, e.at("length_error").get<std::size_t>());
        if (e.contains("error")) ++r.errors;
    }
    r.aggregate = acc.result();
    return r;
}

// ---- subcommands ----------------------------------------------------------

struct SimulateArgs {
    std::string mode = "batch";
    std::size_t n = 1, k = 1, d = 64, classes = 100, count = 1, embed_dim = 0;
    std::string latent = "tanh";
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<double> lr;
    std::vector<std::size_t> labels;
    std::string decoder_out;
    bool grd = false;
};

int do_simulate(const SimulateArgs& a, bool skip_existing, unsigned jobs, std::ostream& out) {
    const std::uint64_t base = a.seed ? *a.seed : default_seed();
    sim::Scenario proto;
    proto.mode = sim::parse_mode(a.mode);
    proto.latent = sim::parse_latent(a.latent);
    proto.n = a.n;
    proto.k = a.k;
    proto.d = a.d;
    proto.classes = a.classes;
    proto.learning_rates = a.lr;
    proto.embed_dim = a.embed_dim;
    if (!a.labels.empty()) proto.fixed_labels = a.labels;
    proto.validate();
    if (a.count < 1) throw InvalidArgument("simulate: --count must be >= 1");

    std::vector<std::string> written(a.count);
    parallel_for(a.count, jobs, [&](std::size_t i) {
        sim::Scenario sc = proto;
        sc.seed = base + i;
        const fs::path path = output_path(a.out, a.count, "case", sc.seed);
        if (skip_existing && fs::exists(path)) return;
        const sim::GradientCase gc = sim::simulate_case(sc);
        io::write_case(path, io::to_case_file(gc), a.grd);
        if (!a.decoder_out.empty()) {
            const fs::path dpath = output_path(a.decoder_out, a.count, "decoder", sc.seed);
            io::write_decoder(dpath, gm::ToyDecoder{gc.initial_state.W, gc.initial_state.b, gc.embedding});
        }
        written[i] = path.string();
    });
    for (const auto& w : written)
        if (!w.empty()) out << w << "\n";
    return kOk;
}

struct AttackArgs {
    std::string attack;
    std::vector<std::string> cases;
    std::optional<std::size_t> assume_s;
    bool use_true_s = false;
    std::optional<double> rank_tol;
    bool no_screen = false;
    std::string report;
};

int do_attack(const AttackArgs& a, bool keep_going, bool skip_existing, unsigned jobs,
              std::ostream& out, std::ostream& err) {
    if (skip_existing && fs::exists(a.report)) {
        out << "skipping existing " << a.report << "\n";
        return kOk;
    }
    const harness::Attack attack = harness::parse_attack(a.attack);
    if (a.assume_s && a.use_true_s) throw InvalidArgument("attack: --assume-s and --use-true-s are exclusive");
    rlg::RlgConfig base;
    base.assume_S = a.assume_s;
    base.rank_tol_rel = a.rank_tol;
    base.screening = !a.no_screen;
    base.validate();

    std::vector<Json> entries(a.cases.size());
    std::vector<std::string> fatal(a.cases.size());
    std::vector<int> fatal_code(a.cases.size(), kOk);
    parallel_for(a.cases.size(), jobs, [&](std::size_t i) {
        const fs::path path = a.cases[i];
        Json e;
        e["case_id"] = path.stem().string();
        e["case"] = a.cases[i];
        e["attack"] = harness::to_string(attack);
        try {
            const io::CaseFile c = io::read_case(path);
            rlg::RlgConfig cfg = base;
            if (a.use_true_s) cfg.assume_S = c.true_S();
            const harness::Outcome o = harness::run_attack(attack, c.delta_w, c.label_set(), cfg);
            e["true_S"] = c.true_S();
            e["inferred_S"] = o.inferred_S;
            e["predicted_labels"] = o.predicted;
            e["true_labels"] = c.label_set();
            e["precision"] = o.score.precision;
            e["recall"] = o.score.recall;
            e["f1"] = o.score.f1;
            e["exact_match"] = o.score.exact_match;
            e["length_error"] = metrics::length_error(o.inferred_S, c.true_S());
            e["wall_time_ms"] = o.wall_ms;
            if (o.error) {
                e["error"] = *o.error;
                if (!keep_going) {
                    fatal[i] = a.cases[i] + ": " + *o.error;
                    fatal_code[i] = kCaseFailed;
                }
            }
        } catch (const Error& ex) {
            if (!keep_going) {
                fatal[i] = a.cases[i] + ": " + ex.what();
                fatal_code[i] = kUsage;
                return;
            }
            e["error"] = ex.what();
            e["inferred_S"] = 0;
            e["predicted_labels"] = Json::array();
            e["precision"] = 0.0;
            e["recall"] = 0.0;
            e["f1"] = 0.0;
            e["exact_match"] = false;
            e["length_error"] = 0;
            e["wall_time_ms"] = 0.0;
        }
        entries[i] = std::move(e);
    });
    for (std::size_t i = 0; i < fatal.size(); ++i) {
        if (fatal_code[i] != kOk) {
            err << "error: " << fatal[i] << "\n";
            return fatal_code[i];
        }
    }

    const Recomputed agg = recompute(entries);
    Json report;
    Json config;
    config["attack"] = harness::to_string(attack);
    config["cases"] = a.cases;
    config["assume_s"] = a.assume_s ? Json(*a.assume_s) : Json(nullptr);
    config["use_true_s"] = a.use_true_s;
    config["rank_tol"] = a.rank_tol ? Json(*a.rank_tol) : Json(nullptr);
    config["screening"] = base.screening;
    config["lp_margin"] = base.lp_margin;
    config["lp_box_bound"] = base.lp_box_bound;
    config["screen_top_m"] = base.screen_top_m;
    config["keep_going"] = keep_going;
    report["config"] = config;
    report["conventions"] = conventions_json();
    report["per_case"] = entries;
    report["aggregate"] = aggregate_json(agg.aggregate, agg.errors);
    io::write_json_atomic(a.report, report);
    const auto& g = agg.aggregate;
    out << harness::to_string(attack) << ": " << g.cases << " cases, P " << g.precision << " R " << g.recall
        << " F1 " << g.f1 << " EM " << g.exact_match << " LE " << g.length_error << "\n";
    return agg.errors == 0 ? kOk : kCaseFailed;
}

struct DefendArgs {
    std::string kind;
    double rate = 0.5;
    std::string input;
    std::string out;
    bool grd = false;
};

int do_defend(const DefendArgs& a, std::ostream& out) {
    defense::DefenseSpec spec;
    if (a.kind == "sign") {
        spec.kind = defense::DefenseKind::SignSgd;
    } else if (a.kind == "drop") {
        spec.kind = defense::DefenseKind::GradDrop;
        spec.rate = a.rate;
    } else {
        throw InvalidArgument("defend: unknown defense '" + a.kind + "' (sign|drop)");
    }
    spec.validate();
    io::CaseFile c = io::read_case(a.input);
    if (c.defense_applied)
        throw InvalidArgument("defend: case already carries defense " + c.defense_applied->describe());
    c.delta_w = defense::apply(spec, c.delta_w);
    c.defense_applied = spec;
    io::write_case(a.out, c, a.grd);
    out << a.out << "\n";
    return kOk;
}

struct GmArgs {
    std::string input;
    std::string decoder;
    bool bow = false;
    double lambda = 1.0;
    std::size_t restarts = 5;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> assume_s;
    std::size_t max_steps = 50000;
    std::string report;
};

int do_gm(const GmArgs& a, bool skip_existing, unsigned jobs, std::ostream& out) {
    if (skip_existing && fs::exists(a.report)) {
        out << "skipping existing " << a.report << "\n";
        return kOk;
    }
    const io::CaseFile c = io::read_case(a.input);
    gm::ToyDecoder dec = io::read_decoder(a.decoder);
    if (dec.W.rows() != c.delta_w.rows() || dec.W.cols() != c.delta_w.cols())
        throw DimensionError("gm: decoder shape does not match the case");

    rlg::RlgConfig cfg;
    cfg.assume_S = a.assume_s;
    const rlg::LabelSetPrediction bag = rlg::rlg_attack(c.delta_w, cfg);
    gm::GMProblem prob = gm::problem_from_capture(c.delta_w, std::move(dec), bag.inferred_S);
    prob.lambda = a.lambda;
    prob.schedule.max_steps = a.max_steps;
    const std::size_t full_vars = prob.variable_count();
    if (a.bow) prob = gm::restrict_to(prob, bag.labels);

    const std::uint64_t seed = a.seed ? *a.seed : default_seed();
    gm::GMResult r = gm::reconstruct(prob, seed, a.restarts, jobs);
    const std::vector<std::size_t> truth = c.sequence ? *c.sequence : c.labels;
    bool em = false;
    if (!truth.empty()) {
        gm::score(r, truth);
        em = r.transcript == truth;
    }

    Json j;
    Json config;
    config["case"] = a.input;
    config["decoder"] = a.decoder;
    config["bow"] = a.bow;
    config["lambda"] = a.lambda;
    config["restarts"] = a.restarts;
    config["seed"] = seed;
    config["assume_s"] = a.assume_s ? Json(*a.assume_s) : Json(nullptr);
    config["max_steps"] = a.max_steps;
    j["config"] = config;
    j["case_id"] = fs::path(a.input).stem().string();
    j["S"] = prob.S;
    j["bag_of_words"] = bag.labels;
    j["transcript"] = r.transcript;
    j["truth"] = truth;
    j["wer"] = r.wer_vs_truth ? Json(*r.wer_vs_truth) : Json(nullptr);
    j["exact_match"] = em;
    j["variable_count"] = r.variable_count;
    j["variable_count_without_bow"] = full_vars;
    j["final_loss"] = r.final_loss;
    j["steps"] = r.steps;
    j["converged"] = r.converged;
    j["best_restart"] = r.best_restart;
    j["restart_losses"] = r.restart_losses;
    if (c.vocab) {
        std::vector<std::string> words;
        for (std::size_t id : r.transcript) {
            auto it = c.vocab->find(id);
            words.push_back(it == c.vocab->end() ? std::to_string(id) : it->second);
        }
        j["transcript_text"] = words;
    }
    io::write_json_atomic(a.report, j);
    out << "transcript";
    for (std::size_t t : r.transcript) out << " " << t;
    out << (em ? " (exact)" : "") << ", #vars " << r.variable_count << "\n";
    return kOk;
}

int do_eval(const std::vector<std::string>& reports, const std::string& format, const std::string& out_path,
            std::ostream& out) {
    if (format != "json" && format != "csv") throw InvalidArgument("eval: --format must be json or csv");
    std::map<std::string, std::vector<Json>> by_attack;
    for (const std::string& path : reports) {
        const Json rep = io::read_json(path);
        if (!rep.contains("per_case") || !rep.contains("aggregate"))
            throw FormatError(path + ": not an attack report");
        std::vector<Json> entries = rep.at("per_case").get<std::vector<Json>>();
        const Recomputed check = recompute(entries);
        const Json& agg = rep.at("aggregate");
        const Json recomputed = aggregate_json(check.aggregate, check.errors);
        for (const char* key : {"precision", "recall", "f1", "exact_match", "length_error"}) {
            const double stored = agg.at(key).get<double>();
            if (std::abs(stored - recomputed.at(key).get<double>()) > 1e-12)
                throw FormatError(path + ": aggregate '" + key + "' does not match its per-case entries");
        }
        for (Json& e : entries) by_attack[e.at("attack").get<std::string>()].push_back(std::move(e));
    }

    std::ostringstream text;
    if (format == "json") {
        Json j = Json::object();
        for (const auto& [attack, entries] : by_attack) {
            const Recomputed r = recompute(entries);
            j[attack] = aggregate_json(r.aggregate, r.errors);
        }
        j["reports"] = reports;
        text << j.dump(1) << "\n";
    } else {
        text << "attack,cases,precision,recall,f1,exact_match,length_error,errors\n";
        text.precision(17);
        for (const auto& [attack, entries] : by_attack) {
            const Recomputed r = recompute(entries);
            const auto& g = r.aggregate;
            text << attack << "," << g.cases << "," << g.precision << "," << g.recall << "," << g.f1 << ","
                 << g.exact_match << "," << g.length_error << "," << r.errors << "\n";
        }
    }
    if (out_path.empty()) {
        out << text.str();
    } else {
        io::write_text_atomic(out_path, text.str());
    }
    return kOk;
}

int do_bench(const std::string& suite, unsigned jobs, std::ostream& out) {
    const std::vector<int> ids = bench::suite_criteria(suite);
    bench::BenchOptions opts;
    opts.jobs = jobs;
    int failed = 0;
    for (int id : ids) {
        const bench::CriterionResult r = bench::run_criterion(id, opts);
        out << bench::format(r) << "\n" << std::flush;
        failed += !r.pass;
    }
    out << failed << " of " << ids.size() << " criteria failed\n";
    return failed == 0 ? kOk : kCaseFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Label leakage from projection-layer gradients"};
    app.name("gradleak");
    app.require_subcommand(1);
    unsigned jobs = 1;
    bool keep_going = false;
    bool skip_existing = false;
    app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--keep-going", keep_going, "record per-case failures instead of stopping");
    app.add_flag("--skip-existing", skip_existing, "leave existing outputs in place");

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "write simulated gradient captures");
    simulate->add_option("--mode", sa.mode, "single|batch|sequence|multistep")->capture_default_str();
    simulate->add_option("--n", sa.n, "batch size or sequence length")->capture_default_str();
    simulate->add_option("--k", sa.k, "steps (multistep)")->capture_default_str();
    simulate->add_option("--d", sa.d, "latent dimension")->capture_default_str();
    simulate->add_option("--classes", sa.classes, "class count")->capture_default_str();
    simulate->add_option("--latent", sa.latent, "relu|tanh|gauss")->capture_default_str();
    simulate->add_option("--seed", sa.seed, "first seed (default GRADLEAK_SEED or 0)");
    simulate->add_option("--count", sa.count, "number of cases, seeds seed..seed+count-1")->capture_default_str();
    simulate->add_option("--lr", sa.lr, "per-step learning rates")->delimiter(',');
    simulate->add_option("--labels", sa.labels, "fixed label list")->delimiter(',');
    simulate->add_option("--embed-dim", sa.embed_dim, "previous-label embedding width (sequence)");
    simulate->add_option("--decoder-out", sa.decoder_out, "also write the decoder state");
    simulate->add_flag("--grd", sa.grd, "store delta_w in a .grd sidecar");
    simulate->add_option("--out", sa.out, "case file, or directory when --count > 1")->required();

    AttackArgs aa;
    auto* attack = app.add_subcommand("attack", "run a label attack and score it");
    attack->add_option("attack", aa.attack, "rlg|idlg|mincol")->required();
    attack->add_option("cases", aa.cases, "case files")->required();
    attack->add_option("--assume-s", aa.assume_s, "override the inferred S");
    attack->add_flag("--use-true-s", aa.use_true_s, "use each case's ground-truth S");
    attack->add_option("--rank-tol", aa.rank_tol, "relative rank tolerance");
    attack->add_flag("--no-screen", aa.no_screen, "disable screening");
    attack->add_option("--report", aa.report, "report path")->required();

    DefendArgs da;
    auto* defend = app.add_subcommand("defend", "apply a defense to a case");
    defend->add_option("kind", da.kind, "sign|drop")->required();
    defend->add_option("case", da.input, "input case")->required();
    defend->add_option("--rate", da.rate, "GradDrop fraction")->capture_default_str();
    defend->add_option("--out", da.out, "output case")->required();
    defend->add_flag("--grd", da.grd, "store delta_w in a .grd sidecar");

    GmArgs ga;
    auto* gmc = app.add_subcommand("gm", "reconstruct a transcript by gradient matching");
    gmc->add_option("case", ga.input, "sequence case")->required();
    gmc->add_option("--decoder", ga.decoder, "decoder state file")->required();
    gmc->add_flag("--bow", ga.bow, "restrict labels to the recovered bag of words");
    gmc->add_option("--lambda", ga.lambda, "row-sum regularizer weight")->capture_default_str();
    gmc->add_option("--restarts", ga.restarts, "independent restarts")->capture_default_str();
    gmc->add_option("--seed", ga.seed, "seed (default GRADLEAK_SEED or 0)");
    gmc->add_option("--assume-s", ga.assume_s, "override the inferred S");
    gmc->add_option("--max-steps", ga.max_steps, "step cap per restart")->capture_default_str();
    gmc->add_option("--report", ga.report, "result path")->required();

    std::vector<std::string> reports;
    std::string format = "json";
    std::string eval_out;
    auto* eval = app.add_subcommand("eval", "merge attack reports");
    eval->add_option("--reports", reports, "report files")->required();
    eval->add_option("--format", format, "json|csv")->capture_default_str();
    eval->add_option("--out", eval_out, "write here instead of standard output");

    std::string suite;
    auto* benchc = app.add_subcommand("bench", "run an acceptance suite");
    benchc->add_option("--suite", suite, "latent|updates|defense|transcript|core|all")->required();

    std::vector<std::string> argv_store;
    argv_store.reserve(args.size() + 1);
    argv_store.push_back("gradleak");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    try {
        if (*simulate) return do_simulate(sa, skip_existing, jobs, out);
        if (*attack) return do_attack(aa, keep_going, skip_existing, jobs, out, err);
        if (*defend) return do_defend(da, out);
        if (*gmc) return do_gm(ga, skip_existing, jobs, out);
        if (*eval) return do_eval(reports, format, eval_out, out);
        if (*benchc) return do_bench(suite, jobs, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const nlohmann::json::exception& e) {
        err << "error: malformed file: " << e.what() << "\n";
        return kUsage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}

}  // namespace gradleak::cli
