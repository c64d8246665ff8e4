#include "gradleak/gm.hpp"

#include <algorithm>
#include <cmath>

#include "gradleak/errors.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/parallel.hpp"
#include "gradleak/rng.hpp"
#include "gradleak/simulator.hpp"

namespace gradleak::gm {

namespace {

constexpr double kInitStd = 0.01;

// Everything the objective and its gradient need from one forward pass.
struct Forward {
    Matrix X;       // S x (d_A + d_E)
    Matrix probs;   // S x C, softmax(z_i)
    Matrix logp;    // S x C, log softmax(z_i)
    std::vector<double> mass;  // sum_k p_i^k
    Matrix U;       // S x C, mass_i * probs_i - ptilde_i
};

void check_shapes(const Variables& v, const GMProblem& prob) {
    if (v.A.rows() != prob.S || v.A.cols() != prob.decoder.context_dim())
        throw DimensionError("gm: A must be S x d_A");
    if (v.P.rows() != prob.S || v.P.cols() != prob.label_width())
        throw DimensionError("gm: P must be S x label width");
}

Forward forward(const Variables& v, const GMProblem& prob) {
    check_shapes(v, prob);
    const ToyDecoder& dec = prob.decoder;
    const std::size_t s = prob.S;
    const std::size_t da = dec.context_dim();
    const std::size_t de = dec.embed_dim();
    const std::size_t c = dec.classes();
    const std::size_t width = prob.label_width();

    Forward f{Matrix(s, da + de), Matrix(s, c), Matrix(s, c), std::vector<double>(s, 0.0),
              Matrix(s, c)};
    for (std::size_t i = 0; i < s; ++i) {
        auto x = f.X.row(i);
        std::copy(v.A.row(i).begin(), v.A.row(i).end(), x.begin());
        if (de == 0) continue;
        if (i == 0) {
            auto e = dec.embedding.row(c);
            std::copy(e.begin(), e.end(), x.begin() + static_cast<std::ptrdiff_t>(da));
        } else {
            for (std::size_t k = 0; k < width; ++k) {
                const double p = v.P(i - 1, k);
                if (p == 0.0) continue;
                auto e = dec.embedding.row(prob.label_id(k));
                for (std::size_t t = 0; t < de; ++t) x[da + t] += p * e[t];
            }
        }
    }

    Matrix z = matmul(f.X, dec.W);
    for (std::size_t i = 0; i < s; ++i) {
        auto zi = z.row(i);
        for (std::size_t j = 0; j < c; ++j) zi[j] += dec.b[j];
        const double m = *std::max_element(zi.begin(), zi.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(zi[j] - m);
        const double lse = m + std::log(sum);
        for (std::size_t j = 0; j < c; ++j) {
            f.logp(i, j) = zi[j] - lse;
            f.probs(i, j) = std::exp(zi[j] - lse);
        }
        for (std::size_t k = 0; k < width; ++k) f.mass[i] += v.P(i, k);
        for (std::size_t j = 0; j < c; ++j) f.U(i, j) = f.mass[i] * f.probs(i, j);
        for (std::size_t k = 0; k < width; ++k) f.U(i, prob.label_id(k)) -= v.P(i, k);
    }
    return f;
}

double sgn(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

}  // namespace

void ToyDecoder::validate() const {
    if (W.cols() < 2) throw InvalidArgument("gm: decoder needs C >= 2");
    if (b.size() != W.cols()) throw DimensionError("gm: decoder bias length must equal C");
    if (!embedding.empty()) {
        if (embedding.rows() != W.cols() + 1)
            throw DimensionError("gm: embedding must have C + 1 rows");
        if (embedding.cols() >= W.rows())
            throw DimensionError("gm: embedding width must be below the decoder input width");
    }
    if (W.rows() == embed_dim()) throw DimensionError("gm: decoder has no context inputs");
    for (double x : b)
        if (!std::isfinite(x)) throw InvalidArgument("gm: decoder bias must be finite");
}

double Schedule::lr(std::size_t step) const {
    double rate = initial_lr;
    for (std::size_t k = halve_every == 0 ? 0 : step / halve_every; k > 0 && rate > min_lr; --k)
        rate *= 0.5;
    return std::max(rate, min_lr);
}

void GMProblem::validate() const {
    decoder.validate();
    if (S < 1) throw InvalidArgument("gm: S must be >= 1");
    if (!(lambda >= 0.0)) throw InvalidArgument("gm: lambda must be >= 0");
    if (!(loss_scale > 0.0)) throw InvalidArgument("gm: loss scale must be > 0");
    if (target_grad.rows() != decoder.W.rows() || target_grad.cols() != decoder.W.cols())
        throw DimensionError("gm: target gradient must match the decoder weight shape");
    if (bow) {
        if (bow->empty()) throw InvalidArgument("gm: BoW must be nonempty when present");
        for (std::size_t id : *bow)
            if (id >= decoder.classes()) throw InvalidArgument("gm: BoW label out of range");
    }
    if (schedule.max_steps == 0) throw InvalidArgument("gm: max_steps must be >= 1");
}

std::size_t GMProblem::label_width() const { return bow ? bow->size() : decoder.classes(); }

std::size_t GMProblem::label_id(std::size_t column) const {
    return bow ? (*bow)[column] : column;
}

std::size_t GMProblem::variable_count() const noexcept {
    return S * (decoder.context_dim() + label_width());
}

double smooth_label_loss(const Variables& v, const GMProblem& prob) {
    const Forward f = forward(v, prob);
    double loss = 0.0;
    for (std::size_t i = 0; i < prob.S; ++i)
        for (std::size_t k = 0; k < prob.label_width(); ++k)
            loss -= v.P(i, k) * f.logp(i, prob.label_id(k));
    return prob.loss_scale * loss;
}

Matrix decoder_gradient(const Variables& v, const GMProblem& prob) {
    const Forward f = forward(v, prob);
    Matrix d = matmul_tn(f.X, f.U);
    d *= prob.loss_scale;
    return d;
}

double row_sum_penalty(const Matrix& P) {
    double r = 0.0;
    for (std::size_t i = 0; i < P.rows(); ++i) {
        double n = 0.0;
        for (double x : P.row(i)) n += std::abs(x);
        r += std::abs(n - 1.0);
    }
    return r;
}

double gm_objective(const Variables& v, const GMProblem& prob) {
    const Matrix d = decoder_gradient(v, prob);
    return (d - prob.target_grad).frobenius_norm() + prob.lambda * row_sum_penalty(v.P);
}

ObjectiveGrad objective_and_gradient(const Variables& v, const GMProblem& prob, Distance form) {
    const Forward f = forward(v, prob);
    const ToyDecoder& dec = prob.decoder;
    const std::size_t s = prob.S;
    const std::size_t da = dec.context_dim();
    const std::size_t de = dec.embed_dim();
    const std::size_t dx = da + de;
    const std::size_t c = dec.classes();
    const std::size_t width = prob.label_width();
    const double scale = prob.loss_scale;

    Matrix resid = matmul_tn(f.X, f.U);
    resid *= scale;
    resid -= prob.target_grad;

    ObjectiveGrad out;
    out.distance = resid.frobenius_norm();
    out.penalty = row_sum_penalty(v.P);
    out.dA = Matrix(s, da);
    out.dP = Matrix(s, width);

    // Outer derivative with respect to D.
    double outer = 0.0;
    if (form == Distance::Squared) {
        out.value = out.distance * out.distance;
        outer = 2.0;
    } else {
        out.value = out.distance;
        outer = out.distance > 0.0 ? 1.0 / out.distance : 0.0;
    }
    out.value += prob.lambda * out.penalty;
    Matrix& gd = resid;
    gd *= outer * scale;  // now (dObjective/dD) * scale

    // gradient with respect to x_i, accumulated before the embedding chain rule
    Matrix gx = matmul(f.U, gd.transposed());  // S x dx, direct term u_i . gd^T
    const Matrix vmat = matmul(f.X, gd);        // S x C, v_i = x_i gd
    std::vector<double> w(c);
    for (std::size_t i = 0; i < s; ++i) {
        auto vi = vmat.row(i);
        auto si = f.probs.row(i);
        const double vs = dot(vi, si);
        for (std::size_t j = 0; j < c; ++j) w[j] = f.mass[i] * si[j] * (vi[j] - vs);
        auto gxi = gx.row(i);
        for (std::size_t l = 0; l < dx; ++l) gxi[l] += dot(dec.W.row(l), w);
        for (std::size_t k = 0; k < width; ++k) out.dP(i, k) += vs - vi[prob.label_id(k)];
    }
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t l = 0; l < da; ++l) out.dA(i, l) = gx(i, l);
        if (de == 0 || i == 0) continue;
        auto ge = gx.row(i).subspan(da);
        for (std::size_t k = 0; k < width; ++k)
            out.dP(i - 1, k) += dot(ge, dec.embedding.row(prob.label_id(k)));
    }
    if (prob.lambda > 0.0) {
        for (std::size_t i = 0; i < s; ++i) {
            double n = 0.0;
            for (double x : v.P.row(i)) n += std::abs(x);
            const double outer_sign = sgn(n - 1.0);
            for (std::size_t k = 0; k < width; ++k)
                out.dP(i, k) += prob.lambda * outer_sign * sgn(v.P(i, k));
        }
    }
    return out;
}

std::vector<std::size_t> transcript(const Matrix& P, const GMProblem& prob) {
    std::vector<std::size_t> t(P.rows());
    for (std::size_t i = 0; i < P.rows(); ++i) {
        auto row = P.row(i);
        const auto best = std::max_element(row.begin(), row.end()) - row.begin();
        t[i] = prob.label_id(static_cast<std::size_t>(best));
    }
    return t;
}

GMResult reconstruct(const GMProblem& prob, std::uint64_t seed) {
    prob.validate();
    CounterRng rng(seed);
    Variables v{Matrix(prob.S, prob.decoder.context_dim()), Matrix(prob.S, prob.label_width())};
    for (double& x : v.A.data()) x = kInitStd * rng.normal();
    for (double& x : v.P.data()) x = kInitStd * rng.normal();

    GMResult out;
    out.variable_count = prob.variable_count();
    out.final_loss = INFINITY;
    std::vector<std::size_t> current = transcript(v.P, prob);
    std::size_t unchanged = 0;
    std::size_t step = 0;
    for (; step < prob.schedule.max_steps; ++step) {
        const ObjectiveGrad og = objective_and_gradient(v, prob, Distance::Squared);
        const double reported = og.distance + prob.lambda * og.penalty;
        if (reported < out.final_loss) {
            out.final_loss = reported;
            out.transcript = current;
        }
        if (unchanged >= prob.schedule.patience) {
            out.converged = true;
            break;
        }
        const double lr = prob.schedule.lr(step);
        auto a = v.A.data();
        auto ga = og.dA.data();
        for (std::size_t t = 0; t < a.size(); ++t) a[t] -= lr * ga[t];
        auto p = v.P.data();
        auto gp = og.dP.data();
        for (std::size_t t = 0; t < p.size(); ++t) p[t] -= lr * gp[t];
        std::vector<std::size_t> next = transcript(v.P, prob);
        if (next == current) {
            ++unchanged;
        } else {
            unchanged = 0;
            current = std::move(next);
        }
    }
    out.steps = step;
    out.restart_losses = {out.final_loss};
    return out;
}

GMResult reconstruct(const GMProblem& prob, std::uint64_t seed, std::size_t restarts,
                     unsigned jobs) {
    if (restarts < 1) throw InvalidArgument("gm: restarts must be >= 1");
    prob.validate();
    const CounterRng root(seed);
    std::vector<GMResult> runs(restarts);
    parallel_for(restarts, jobs, [&](std::size_t r) {
        runs[r] = reconstruct(prob, r == 0 ? seed : root.split(r).key());
    });
    std::size_t best = 0;
    for (std::size_t r = 1; r < restarts; ++r)
        if (runs[r].final_loss < runs[best].final_loss) best = r;
    GMResult out = runs[best];
    out.restarts = restarts;
    out.best_restart = best;
    out.restart_losses.clear();
    for (const GMResult& r : runs) out.restart_losses.push_back(r.final_loss);
    return out;
}

void score(GMResult& r, std::span<const std::size_t> truth) {
    r.wer_vs_truth = metrics::wer(truth, r.transcript);
}

Instance make_instance(const InstanceSpec& spec) {
    if (spec.S < 1) throw InvalidArgument("gm: S must be >= 1");
    if (spec.distinct_labels && spec.S > spec.classes)
        throw InvalidArgument("gm: cannot draw S distinct labels from C classes");

    CounterRng lrng = CounterRng(spec.seed).split(0x6C61626Cu);
    std::vector<std::size_t> labels;
    while (labels.size() < spec.S) {
        const std::size_t y = lrng.below(spec.classes);
        if (spec.distinct_labels && std::find(labels.begin(), labels.end(), y) != labels.end())
            continue;
        labels.push_back(y);
    }

    sim::Scenario sc;
    sc.d = spec.context_dim + spec.embed_dim;
    sc.classes = spec.classes;
    sc.mode = sim::Mode::Sequence;
    sc.n = spec.S;
    sc.latent = sim::LatentDist::TanhLike;
    sc.fixed_labels = labels;
    sc.embed_dim = spec.embed_dim;
    sc.seed = spec.seed;
    const sim::GradientCase gc = sim::simulate_case(sc);

    Instance inst;
    inst.sequence = labels;
    inst.problem = problem_from_capture(
        gc.delta_w, ToyDecoder{gc.initial_state.W, gc.initial_state.b, gc.embedding}, spec.S);
    const GMProblem& prob = inst.problem;

    Matrix a(spec.S, spec.context_dim);
    for (std::size_t i = 0; i < spec.S; ++i)
        for (std::size_t l = 0; l < spec.context_dim; ++l) a(i, l) = gc.inputs(i, l);
    inst.truth = truth_in(prob, a, labels);
    return inst;
}

GMProblem problem_from_capture(const Matrix& delta_w, ToyDecoder decoder, std::size_t S) {
    if (S < 1) throw InvalidArgument("gm: S must be >= 1");
    GMProblem prob;
    prob.decoder = std::move(decoder);
    prob.S = S;
    prob.loss_scale = 1.0;
    prob.target_grad = delta_w * static_cast<double>(S);
    prob.validate();
    return prob;
}

GMProblem restrict_to(const GMProblem& prob, std::span<const std::size_t> bow) {
    GMProblem out = prob;
    std::vector<std::size_t> ids(bow.begin(), bow.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    out.bow = std::move(ids);
    out.validate();
    return out;
}

Variables truth_in(const GMProblem& prob, const Matrix& A, std::span<const std::size_t> sequence) {
    if (sequence.size() != prob.S) throw DimensionError("gm: sequence length must equal S");
    Variables v{A, Matrix(prob.S, prob.label_width())};
    for (std::size_t i = 0; i < prob.S; ++i) {
        std::size_t col = prob.label_width();
        for (std::size_t k = 0; k < prob.label_width(); ++k)
            if (prob.label_id(k) == sequence[i]) col = k;
        if (col == prob.label_width())
            throw InvalidArgument("gm: label " + std::to_string(sequence[i]) + " not in label space");
        v.P(i, col) = 1.0;
    }
    check_shapes(v, prob);
    return v;
}

}  // namespace gradleak::gm
