#include "gradleak/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "gradleak/baselines.hpp"
#include "gradleak/defense.hpp"
#include "gradleak/errors.hpp"
#include "gradleak/gm.hpp"
#include "gradleak/harness.hpp"
#include "gradleak/linalg.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/parallel.hpp"
#include "gradleak/rlg.hpp"
#include "gradleak/rng.hpp"
#include "gradleak/simulator.hpp"

namespace gradleak::bench {

namespace {

using harness::Attack;
using sim::LatentDist;
using sim::Mode;

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

sim::Scenario scenario(Mode mode, std::size_t n, std::size_t k, LatentDist latent,
                       std::uint64_t seed) {
    sim::Scenario sc;
    sc.mode = mode;
    sc.n = n;
    sc.k = k;
    sc.latent = latent;
    sc.seed = seed;
    return sc;
}

// Runs `attack` over `cases` (in parallel) and aggregates.
struct Sweep {
    std::vector<harness::Outcome> outcomes;
    metrics::Aggregate aggregate;
    std::size_t errors = 0;
};

Sweep sweep(const std::vector<sim::GradientCase>& cases, Attack attack, bool true_s,
            const BenchOptions& opts, const std::function<Matrix(const Matrix&)>& transform = {}) {
    Sweep out;
    out.outcomes.resize(cases.size());
    parallel_for(cases.size(), opts.jobs, [&](std::size_t i) {
        rlg::RlgConfig cfg;
        if (true_s) cfg.assume_S = cases[i].true_S;
        const Matrix dw = transform ? transform(cases[i].delta_w) : cases[i].delta_w;
        out.outcomes[i] = harness::run_attack(attack, dw, cases[i].label_set(), cfg);
        // Length error is against label instances, not distinct labels.
        out.outcomes[i].length_error = metrics::length_error(out.outcomes[i].inferred_S, cases[i].true_S);
    });
    metrics::Accumulator acc;
    for (const auto& o : out.outcomes) {
        acc.add(o.score, o.length_error);
        if (o.error) ++out.errors;
    }
    out.aggregate = acc.result();
    return out;
}

std::vector<sim::GradientCase> simulate(const std::vector<sim::Scenario>& scs, const BenchOptions& opts) {
    std::vector<sim::GradientCase> out(scs.size());
    parallel_for(scs.size(), opts.jobs, [&](std::size_t i) { out[i] = sim::simulate_case(scs[i]); });
    return out;
}

std::vector<sim::GradientCase> batch_sweep(Mode mode, std::size_t n, std::size_t k, LatentDist latent,
                                           std::uint64_t base, std::size_t count,
                                           const BenchOptions& opts) {
    std::vector<sim::Scenario> scs;
    for (std::size_t s = 0; s < count; ++s) scs.push_back(scenario(mode, n, k, latent, base + s));
    return simulate(scs, opts);
}

// ---- criteria -------------------------------------------------------------

CriterionResult sign_structure(const BenchOptions& opts) {
    CriterionResult r{1, "logit-gradient sign structure", false, "", 0, 1.0};
    const LatentDist lats[] = {LatentDist::TanhLike, LatentDist::ReluLike, LatentDist::Gaussian};
    std::vector<sim::Scenario> scs;
    for (std::uint64_t s = 0; s < 100; ++s) scs.push_back(scenario(Mode::MiniBatch, 10, 1, lats[s % 3], 100 + s));
    const auto cases = simulate(scs, opts);
    std::size_t rows = 0, bad = 0;
    for (const auto& gc : cases) {
        for (std::size_t i = 0; i < gc.logit_grads.rows(); ++i, ++rows) {
            std::size_t neg = 0, at = 0;
            auto g = gc.logit_grads.row(i);
            for (std::size_t j = 0; j < g.size(); ++j)
                if (g[j] < 0.0) ++neg, at = j;
            if (neg != 1 || at != gc.true_labels[i]) ++bad;
        }
    }
    r.pass = rows == 1000 && bad == 0;
    r.detail = fmt("%zu rows, %zu violations", rows, bad);
    return r;
}

CriterionResult rank_inference(const BenchOptions& opts) {
    CriterionResult r{2, "rank inference", false, "", 0, 10.0};
    std::vector<sim::Scenario> scs;
    for (std::size_t S = 1; S <= 10; ++S)
        for (std::uint64_t s = 0; s < 100; ++s)
            scs.push_back(scenario(S == 1 ? Mode::SingleSample : Mode::MiniBatch, S, 1,
                                   LatentDist::TanhLike, 2000 + 100 * S + s));
    for (std::uint64_t s = 0; s < 100; ++s)
        scs.push_back(scenario(Mode::MultiStep, 1, 8, LatentDist::TanhLike, 3000 + s));
    const auto cases = simulate(scs, opts);

    std::vector<std::size_t> rank(scs.size()), rank_f32(scs.size());
    parallel_for(scs.size(), opts.jobs, [&](std::size_t i) {
        const Matrix& dw = cases[i].delta_w;
        const double tol = linalg::default_rank_tolerance(dw.rows(), dw.cols());
        rank[i] = linalg::numeric_rank(linalg::svd(dw).singular, tol);
        if (i >= 1000) {
            Matrix f = dw;
            for (double& x : f.data()) x = static_cast<double>(static_cast<float>(x));
            rank_f32[i] = linalg::numeric_rank(linalg::svd(f).singular, tol);
        }
    });
    std::size_t worst = 100;
    for (std::size_t S = 1; S <= 10; ++S) {
        std::size_t hit = 0;
        for (std::size_t s = 0; s < 100; ++s) hit += rank[(S - 1) * 100 + s] == S;
        worst = std::min(worst, hit);
    }
    double le = 0.0, le_f32 = 0.0;
    for (std::size_t i = 1000; i < scs.size(); ++i) {
        le += static_cast<double>(metrics::length_error(rank[i], cases[i].true_S));
        le_f32 += static_cast<double>(metrics::length_error(rank_f32[i], cases[i].true_S));
    }
    le /= 100.0;
    le_f32 /= 100.0;
    r.pass = worst >= 99 && le > 0.0;
    r.detail = fmt("single-step worst S: %zu/100 exact; multistep K=8 mean LE %.3g (needs > 0); "
                   "float32-rounded K=8 capture mean LE %.3g (info)",
                   worst, le, le_f32);
    return r;
}

CriterionResult completeness(const BenchOptions& opts) {
    CriterionResult r{3, "RLG completeness", false, "", 0, 120.0};
    const LatentDist lats[] = {LatentDist::TanhLike, LatentDist::ReluLike, LatentDist::Gaussian};
    std::vector<sim::Scenario> scs;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const LatentDist l = lats[s % 3];
        scs.push_back(scenario(Mode::SingleSample, 1, 1, l, 4000 + s));
        scs.push_back(scenario(Mode::MiniBatch, 10, 1, l, 4100 + s));
        sim::Scenario seq = scenario(Mode::Sequence, 10, 1, l, 4200 + s);
        seq.embed_dim = 8;
        scs.push_back(seq);
        scs.push_back(scenario(Mode::MultiStep, 2, 4, l, 4300 + s));
    }
    const auto cases = simulate(scs, opts);
    const Sweep sw = sweep(cases, Attack::Rlg, true, opts);
    std::size_t incomplete = 0;
    for (const auto& o : sw.outcomes) incomplete += o.score.recall != 1.0;
    r.pass = cases.size() == 400 && incomplete == 0;
    r.detail = fmt("%zu cases, %zu with recall < 1, %zu errors, mean precision %.4f", cases.size(),
                   incomplete, sw.errors, sw.aggregate.precision);
    return r;
}

CriterionResult latent_sweep(const BenchOptions& opts) {
    CriterionResult r{4, "signed vs non-negative latents", false, "", 0, 300.0};
    const auto tanh_cases = batch_sweep(Mode::MiniBatch, 10, 1, LatentDist::TanhLike, 5000, 100, opts);
    const auto relu_cases = batch_sweep(Mode::MiniBatch, 10, 1, LatentDist::ReluLike, 5100, 100, opts);
    const auto rlg_t = sweep(tanh_cases, Attack::Rlg, false, opts).aggregate;
    const auto min_t = sweep(tanh_cases, Attack::MinCol, false, opts).aggregate;
    const auto rlg_r = sweep(relu_cases, Attack::Rlg, false, opts).aggregate;
    const auto min_r = sweep(relu_cases, Attack::MinCol, false, opts).aggregate;
    r.pass = rlg_t.exact_match >= 0.95 && min_t.precision < 0.5 &&
             std::abs(rlg_r.f1 - min_r.f1) <= 0.02;
    r.detail = fmt("tanh: RLG EM %.2f, mincol P %.3f; relu: RLG F1 %.3f vs mincol F1 %.3f", rlg_t.exact_match,
                   min_t.precision, rlg_r.f1, min_r.f1);
    return r;
}

CriterionResult idlg_oracle(const BenchOptions& opts) {
    CriterionResult r{5, "single-sample recovery", false, "", 0, 5.0};
    const LatentDist lats[] = {LatentDist::TanhLike, LatentDist::ReluLike, LatentDist::Gaussian};
    std::vector<sim::Scenario> scs;
    for (std::uint64_t s = 0; s < 1000; ++s) scs.push_back(scenario(Mode::SingleSample, 1, 1, lats[s % 3], 6000 + s));
    const auto cases = simulate(scs, opts);
    std::size_t hit = 0;
    for (const auto& gc : cases) {
        try {
            hit += baseline::idlg_single(gc.delta_w).label == gc.true_labels[0];
        } catch (const Error&) {
        }
    }
    r.pass = hit == 1000;
    r.detail = fmt("%zu/1000 recovered", hit);
    return r;
}

CriterionResult multi_update(const BenchOptions& opts) {
    CriterionResult r{6, "multi-sample and multi-step updates", false, "", 0, 300.0};
    std::string detail;
    bool ok = true;
    for (std::size_t n : {4, 8}) {
        const auto cases = batch_sweep(Mode::MiniBatch, n, 1, LatentDist::TanhLike, 7000 + 100 * n, 50, opts);
        const double em = sweep(cases, Attack::Rlg, true, opts).aggregate.exact_match;
        ok = ok && em == 1.0;
        detail += fmt("N=%zu K=1 EM %.2f; ", n, em);
    }
    for (std::size_t k : {4, 8}) {
        const auto cases = batch_sweep(Mode::MultiStep, 1, k, LatentDist::TanhLike, 7500 + 100 * k, 50, opts);
        const double em_true = sweep(cases, Attack::Rlg, true, opts).aggregate.exact_match;
        const auto inferred = sweep(cases, Attack::Rlg, false, opts).aggregate;
        ok = ok && em_true >= inferred.exact_match;
        detail += fmt("N=1 K=%zu EM %.2f (inferred S: EM %.2f, LE %.2f); ", k, em_true,
                      inferred.exact_match, inferred.length_error);
    }
    detail.resize(detail.size() - 2);
    r.pass = ok;
    r.detail = detail;
    return r;
}

CriterionResult defenses(const BenchOptions& opts) {
    CriterionResult r{7, "defense ordering (true S)", false, "", 0, 300.0};
    const auto cases = batch_sweep(Mode::MiniBatch, 10, 1, LatentDist::TanhLike, 8000, 100, opts);
    const double none = sweep(cases, Attack::Rlg, true, opts).aggregate.exact_match;
    auto with = [&](defense::DefenseSpec spec) {
        return sweep(cases, Attack::Rlg, true, opts,
                     [spec](const Matrix& m) { return defense::apply(spec, m); })
            .aggregate.exact_match;
    };
    const double drop50 = with({defense::DefenseKind::GradDrop, 0.5});
    const double drop90 = with({defense::DefenseKind::GradDrop, 0.9});
    const double sign = with({defense::DefenseKind::SignSgd, 0.0});
    r.pass = none >= drop50 && drop50 >= drop90 && sign <= 0.1;
    r.detail = fmt("EM none %.2f, drop50 %.2f, drop90 %.2f, sign %.2f", none, drop50, drop90, sign);
    return r;
}

// Relative L2 error of the analytic gradient against central differences.
double fd_error(const gm::GMProblem& prob, const gm::Variables& at, gm::Distance form) {
    const gm::ObjectiveGrad og = gm::objective_and_gradient(at, prob, form);
    const double h = 1e-6;
    double num = 0.0, den = 0.0;
    auto probe = [&](auto member, const Matrix& analytic) {
        for (std::size_t t = 0; t < analytic.size(); ++t) {
            gm::Variables plus = at, minus = at;
            (plus.*member).data()[t] += h;
            (minus.*member).data()[t] -= h;
            const double fd = (gm::objective_and_gradient(plus, prob, form).value -
                               gm::objective_and_gradient(minus, prob, form).value) /
                              (2.0 * h);
            const double diff = fd - analytic.data()[t];
            num += diff * diff;
            den += fd * fd;
        }
    };
    probe(&gm::Variables::A, og.dA);
    probe(&gm::Variables::P, og.dP);
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

CriterionResult gm_gradient(const BenchOptions& opts) {
    CriterionResult r{8, "GM analytic gradient", false, "", 0, 30.0};
    std::vector<double> worst(20, 0.0);
    parallel_for(20, opts.jobs, [&](std::size_t i) {
        gm::InstanceSpec spec;
        spec.seed = 9000 + i;
        const gm::Instance inst = gm::make_instance(spec);
        const gm::GMProblem restricted = gm::restrict_to(inst.problem, inst.sequence);
        CounterRng rng = CounterRng(spec.seed).split(99);
        for (const gm::GMProblem* prob : {&inst.problem, &restricted}) {
            gm::Variables v{Matrix(prob->S, prob->decoder.context_dim()), Matrix(prob->S, prob->label_width())};
            for (double& x : v.A.data()) x = rng.normal();
            for (double& x : v.P.data()) x = 0.5 * rng.normal();
            for (gm::Distance form : {gm::Distance::Plain, gm::Distance::Squared})
                worst[i] = std::max(worst[i], fd_error(*prob, v, form));
        }
    });
    const double w = *std::max_element(worst.begin(), worst.end());
    r.pass = w <= 1e-5;
    r.detail = fmt("20 instances x {BoW, full} x {plain, squared}: max relative error %.2e", w);
    return r;
}

CriterionResult bow_reconstruction(const BenchOptions& opts) {
    CriterionResult r{9, "transcript reconstruction with vs without BoW", false, "", 0, 600.0};
    constexpr std::size_t kInstances = 20;
    struct Row {
        bool bow5 = false, bow1 = false, full1 = false, full5 = false;
        std::size_t vars_bow = 0, vars_full = 0;
    };
    std::vector<Row> rows(kInstances);
    parallel_for(kInstances, opts.jobs, [&](std::size_t i) {
        gm::InstanceSpec spec;
        spec.seed = 1000 + i;
        const gm::Instance inst = gm::make_instance(spec);
        const auto bow = rlg::rlg_attack(inst.problem.target_grad, rlg::RlgConfig{}).labels;
        const gm::GMProblem restricted = gm::restrict_to(inst.problem, bow);
        const auto with5 = gm::reconstruct(restricted, spec.seed, 5);
        const auto full1 = gm::reconstruct(inst.problem, spec.seed, 1);
        const auto full5 = gm::reconstruct(inst.problem, spec.seed, 5);
        Row& row = rows[i];
        row.bow5 = with5.transcript == inst.sequence;
        // the first restart of the 5-run is the 1-run result
        row.bow1 = gm::reconstruct(restricted, spec.seed).transcript == inst.sequence;
        row.full1 = full1.transcript == inst.sequence;
        row.full5 = full5.transcript == inst.sequence;
        row.vars_bow = with5.variable_count;
        row.vars_full = full1.variable_count;
    });
    double bow5 = 0, bow1 = 0, full1 = 0, full5 = 0, vb = 0, vf = 0;
    for (const Row& row : rows) {
        bow5 += row.bow5, bow1 += row.bow1, full1 += row.full1, full5 += row.full5;
        vb += static_cast<double>(row.vars_bow), vf += static_cast<double>(row.vars_full);
    }
    const double n = kInstances;
    bow5 /= n, bow1 /= n, full1 /= n, full5 /= n, vb /= n, vf /= n;
    r.pass = bow5 >= 0.9 && bow5 > full1 && bow5 > full5 && vb < vf;
    r.detail = fmt("EM with BoW 5-run %.2f (1-run %.2f), without BoW 1-run %.2f (5-run %.2f); "
                   "#vars %.0f -> %.0f",
                   bow5, bow1, full1, full5, vf, vb);
    return r;
}

CriterionResult invariances(const BenchOptions& opts) {
    CriterionResult r{10, "structural invariances", false, "", 0, 60.0};
    const LatentDist lats[] = {LatentDist::TanhLike, LatentDist::ReluLike, LatentDist::Gaussian};
    std::vector<sim::Scenario> scs;
    for (std::uint64_t s = 0; s < 10; ++s) scs.push_back(scenario(Mode::MiniBatch, 1 + s % 8, 1, lats[s % 3], 10000 + s));
    const auto cases = simulate(scs, opts);
    std::vector<std::size_t> mismatches(cases.size(), 0);
    parallel_for(cases.size(), opts.jobs, [&](std::size_t i) {
        const rlg::RlgConfig cfg;
        const Matrix& dw = cases[i].delta_w;
        const auto base = rlg::rlg_attack(dw, cfg).labels;
        for (double scale : {1e-3, 0.37, 5.0, 1e4})
            mismatches[i] += rlg::rlg_attack(dw * scale, cfg).labels != base;
        CounterRng rng = CounterRng(cases[i].scenario.seed).split(7);
        for (int t = 0; t < 20; ++t) {
            Matrix m(dw.rows(), dw.rows());
            for (double& x : m.data()) x = rng.normal();
            mismatches[i] += rlg::rlg_attack(matmul(m, dw), cfg).labels != base;
        }
    });
    std::size_t total = 0;
    for (std::size_t m : mismatches) total += m;
    r.pass = total == 0;
    r.detail = fmt("10 cases x (4 scalings + 20 mixings): %zu set changes", total);
    return r;
}

CriterionResult svd_quality(const BenchOptions& opts) {
    CriterionResult r{11, "SVD quality gates", false, "", 0, 30.0};
    struct Gate {
        double recon = 0.0, ortho = 0.0;
    };
    std::vector<Gate> gates(100);
    parallel_for(100, opts.jobs, [&](std::size_t i) {
        CounterRng rng = CounterRng(11000 + i);
        std::size_t rows = 1 + rng.below(128);
        std::size_t cols = 1 + rng.below(256);
        if (i == 0) rows = 128, cols = 256;
        if (i == 1) rows = 128, cols = 128;
        Matrix m(rows, cols);
        if (i % 5 == 4) {
            // rank-deficient: product of thin factors
            const std::size_t k = 1 + rng.below(std::min(rows, cols));
            Matrix a(rows, k), b(k, cols);
            for (double& x : a.data()) x = rng.normal();
            for (double& x : b.data()) x = rng.normal();
            m = matmul(a, b);
        } else {
            for (double& x : m.data()) x = rng.normal();
        }
        const linalg::SvdResult s = linalg::svd(m);
        gates[i].recon = relative_frobenius_error(s.reconstruct(), m);
        gates[i].ortho = std::max(linalg::column_orthonormality_error(s.left),
                                  linalg::row_orthonormality_error(s.right));
    });
    double recon = 0.0, ortho = 0.0;
    for (const Gate& g : gates) recon = std::max(recon, g.recon), ortho = std::max(ortho, g.ortho);
    r.pass = recon <= 1e-8 && ortho <= 1e-10;
    r.detail = fmt("100 matrices up to 128x256: max reconstruction %.2e, max orthonormality %.2e", recon, ortho);
    return r;
}

}  // namespace

std::vector<int> suite_criteria(const std::string& suite) {
    if (suite == "latent") return {4};
    if (suite == "updates") return {2, 6};
    if (suite == "defense") return {7};
    if (suite == "transcript") return {8, 9};
    if (suite == "core") return {1, 3, 5, 10, 11};
    if (suite == "all") return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    throw InvalidArgument("unknown suite '" + suite + "' (latent, updates, defense, transcript, core, all)");
}

CriterionResult run_criterion(int id, const BenchOptions& opts) {
    using Fn = CriterionResult (*)(const BenchOptions&);
    static constexpr Fn kTable[kCriterionCount] = {sign_structure, rank_inference, completeness, latent_sweep,
                                                   idlg_oracle,    multi_update,   defenses,     gm_gradient,
                                                   bow_reconstruction, invariances, svd_quality};
    if (id < 1 || id > kCriterionCount) throw InvalidArgument("criterion id out of range");
    const auto start = std::chrono::steady_clock::now();
    CriterionResult r = kTable[id - 1](opts);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (r.seconds >= r.budget_seconds) {
        r.pass = false;
        r.detail += "; over time budget";
    }
    return r;
}

std::string format(const CriterionResult& r) {
    return fmt("%s [%d] %s: %s (%.2f s, budget %.0f s)", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(),
               r.detail.c_str(), r.seconds, r.budget_seconds);
}

}  // namespace gradleak::bench
