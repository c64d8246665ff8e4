#include "gradleak/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "gradleak/errors.hpp"
#include "gradleak/rng.hpp"

namespace gradleak::sim {

namespace {

// Stream tags under the scenario seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kLabelStream = 2;
constexpr std::uint64_t kLatentStream = 3;
constexpr std::uint64_t kEmbedStream = 4;

constexpr double kInitStd = 0.1;

double draw_latent(CounterRng& rng, LatentDist dist) {
    const double x = rng.normal();
    switch (dist) {
        case LatentDist::ReluLike: return std::abs(x);
        case LatentDist::TanhLike: return std::tanh(x);
        case LatentDist::Gaussian: return x;
    }
    return x;
}

}  // namespace

void Scenario::validate() const {
    if (d < 1) throw InvalidArgument("scenario: d must be >= 1");
    if (classes < 2) throw InvalidArgument("scenario: C must be >= 2");
    if (mode != Mode::SingleSample && n < 1) throw InvalidArgument("scenario: N/S must be >= 1");
    if (mode == Mode::MultiStep) {
        if (k < 1) throw InvalidArgument("scenario: K must be >= 1");
        if (!learning_rates.empty() && learning_rates.size() != k)
            throw InvalidArgument("scenario: need one learning rate per step");
        for (double a : learning_rates) {
            if (!(a > 0.0) || !std::isfinite(a))
                throw InvalidArgument("scenario: learning rates must be > 0");
        }
    }
    if (embed_dim > 0) {
        if (mode != Mode::Sequence) throw InvalidArgument("scenario: embed_dim needs Sequence mode");
        if (embed_dim >= d) throw InvalidArgument("scenario: embed_dim must be < d");
    }
    if (fixed_labels) {
        if (fixed_labels->size() != total_labels())
            throw InvalidArgument("scenario: fixed label list has " +
                                  std::to_string(fixed_labels->size()) + " entries, expected " +
                                  std::to_string(total_labels()));
        for (std::size_t y : *fixed_labels) {
            if (y >= classes) throw InvalidArgument("scenario: fixed label out of range");
        }
    }
}

double Scenario::learning_rate(std::size_t step) const {
    return learning_rates.empty() ? 0.1 : learning_rates.at(step);
}

std::vector<std::size_t> GradientCase::label_set() const {
    std::vector<std::size_t> s = true_labels;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

std::vector<double> softmax(std::span<const double> z) {
    if (z.empty()) return {};
    const double m = *std::max_element(z.begin(), z.end());
    std::vector<double> out(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

std::vector<double> ce_logit_grad(std::span<const double> z, std::size_t y) {
    if (y >= z.size()) {
        throw InvalidArgument("ce_logit_grad: label " + std::to_string(y) + " out of range for " +
                              std::to_string(z.size()) + " classes");
    }
    std::vector<double> g = softmax(z);
    g[y] -= 1.0;
    return g;
}

ProjectionGrad projection_grad(const Matrix& latents, std::span<const std::size_t> labels,
                               const ProjectionState& state) {
    const std::size_t s = latents.rows();
    const std::size_t d = latents.cols();
    const std::size_t c = state.W.cols();
    if (labels.size() != s) throw DimensionError("projection_grad: one label per latent row");
    if (state.W.rows() != d) throw DimensionError("projection_grad: W rows must equal latent dim");
    if (state.b.size() != c) throw DimensionError("projection_grad: bias length must equal C");
    if (s == 0) throw InvalidArgument("projection_grad: no samples");

    ProjectionGrad out{Matrix(d, c), Matrix(s, c), Matrix(s, d)};
    std::vector<double> z(c);
    const double inv = 1.0 / static_cast<double>(s);
    for (std::size_t i = 0; i < s; ++i) {
        auto h = latents.row(i);
        std::copy(state.b.begin(), state.b.end(), z.begin());
        for (std::size_t l = 0; l < d; ++l) {
            const double hl = h[l];
            auto wrow = state.W.row(l);
            for (std::size_t j = 0; j < c; ++j) z[j] += hl * wrow[j];
        }
        const auto g = ce_logit_grad(z, labels[i]);
        std::copy(g.begin(), g.end(), out.G.row(i).begin());
        for (std::size_t l = 0; l < d; ++l) out.H(i, l) = h[l] * inv;
    }
    out.delta_w = matmul_tn(out.H, out.G);
    return out;
}

ProjectionState initial_state(const Scenario& sc) {
    CounterRng rng = CounterRng(sc.seed).split(kInitStream);
    ProjectionState st{Matrix(sc.d, sc.classes), std::vector<double>(sc.classes)};
    for (double& w : st.W.data()) w = kInitStd * rng.normal();
    for (double& b : st.b) b = kInitStd * rng.normal();
    return st;
}

GradientCase simulate_case(const Scenario& sc) {
    sc.validate();
    const CounterRng root(sc.seed);
    const std::size_t steps = sc.steps();
    const std::size_t per_step = sc.per_step();
    const std::size_t total = sc.total_labels();
    const std::size_t d = sc.d;
    const std::size_t c = sc.classes;

    GradientCase out;
    out.scenario = sc;
    out.initial_state = initial_state(sc);
    out.latents = Matrix(total, d);
    out.inputs = Matrix(total, d);
    out.logit_grads = Matrix(total, c);
    out.true_labels.reserve(total);

    const std::size_t content_dim = d - sc.embed_dim;
    if (sc.embed_dim > 0) {
        CounterRng erng = root.split(kEmbedStream);
        out.embedding = Matrix(c + 1, sc.embed_dim);
        for (double& e : out.embedding.data()) e = draw_latent(erng, sc.latent);
    }

    ProjectionState state = out.initial_state;
    std::size_t offset = 0;
    for (std::size_t step = 0; step < steps; ++step) {
        CounterRng lrng = root.split(kLabelStream).split(step);
        CounterRng hrng = root.split(kLatentStream).split(step);

        std::vector<std::size_t> labels(per_step);
        for (std::size_t i = 0; i < per_step; ++i) {
            labels[i] = sc.fixed_labels ? (*sc.fixed_labels)[offset + i] : lrng.below(c);
        }
        Matrix h(per_step, d);
        for (std::size_t i = 0; i < per_step; ++i) {
            auto row = h.row(i);
            for (std::size_t l = 0; l < content_dim; ++l) row[l] = draw_latent(hrng, sc.latent);
            if (sc.embed_dim > 0) {
                const std::size_t prev = i == 0 ? c : labels[i - 1];
                auto e = out.embedding.row(prev);
                std::copy(e.begin(), e.end(), row.begin() + static_cast<std::ptrdiff_t>(content_dim));
            }
        }

        ProjectionGrad pg = projection_grad(h, labels, state);
        const double alpha = sc.mode == Mode::MultiStep ? sc.learning_rate(step) : 1.0;
        for (std::size_t i = 0; i < per_step; ++i) {
            auto hs = pg.H.row(i);
            auto gs = pg.G.row(i);
            auto raw = h.row(i);
            std::copy(raw.begin(), raw.end(), out.inputs.row(offset + i).begin());
            auto hdst = out.latents.row(offset + i);
            for (std::size_t l = 0; l < d; ++l) hdst[l] = alpha * hs[l];
            std::copy(gs.begin(), gs.end(), out.logit_grads.row(offset + i).begin());
        }

        if (sc.mode == Mode::MultiStep && step + 1 < steps) {
            state.W -= alpha * pg.delta_w;
            for (std::size_t j = 0; j < c; ++j) {
                double gb = 0.0;
                for (std::size_t i = 0; i < per_step; ++i) gb += pg.G(i, j);
                state.b[j] -= alpha * gb / static_cast<double>(per_step);
            }
        }
        out.true_labels.insert(out.true_labels.end(), labels.begin(), labels.end());
        offset += per_step;
    }

    // The factorisation delta_w = H^T G holds by construction.
    out.delta_w = matmul_tn(out.latents, out.logit_grads);
    out.true_S = out.true_labels.size();
    return out;
}

const char* to_string(Mode m) {
    switch (m) {
        case Mode::SingleSample: return "single";
        case Mode::MiniBatch: return "batch";
        case Mode::Sequence: return "sequence";
        case Mode::MultiStep: return "multistep";
    }
    return "?";
}

const char* to_string(LatentDist l) {
    switch (l) {
        case LatentDist::ReluLike: return "relu";
        case LatentDist::TanhLike: return "tanh";
        case LatentDist::Gaussian: return "gauss";
    }
    return "?";
}

Mode parse_mode(const std::string& s) {
    if (s == "single") return Mode::SingleSample;
    if (s == "batch") return Mode::MiniBatch;
    if (s == "sequence") return Mode::Sequence;
    if (s == "multistep") return Mode::MultiStep;
    throw InvalidArgument("unknown mode '" + s + "'");
}

LatentDist parse_latent(const std::string& s) {
    if (s == "relu") return LatentDist::ReluLike;
    if (s == "tanh") return LatentDist::TanhLike;
    if (s == "gauss" || s == "gaussian") return LatentDist::Gaussian;
    throw InvalidArgument("unknown latent distribution '" + s + "'");
}

}  // namespace gradleak::sim
