#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradleak/matrix.hpp"

namespace gradleak::sim {

enum class Mode { SingleSample, MiniBatch, Sequence, MultiStep };

// Distribution of the latent vectors h fed to the projection layer.
//   ReluLike: half-normal |N(0,1)|, entrywise non-negative.
//   TanhLike: tanh(N(0,1)), in (-1, 1), negative with probability 1/2.
//   Gaussian: N(0,1).
enum class LatentDist { ReluLike, TanhLike, Gaussian };

// Describes one capture.  `n` is the batch size (MiniBatch, and per step in
// MultiStep) or the sequence length (Sequence); `k` is the step count
// (MultiStep only).  When `fixed_labels` is set it supplies every label
// instance in generation order.
//
// `embed_dim` > 0 (Sequence only) makes the last `embed_dim` latent
// coordinates of position i the embedding of label i-1, with a start-token
// embedding for position 0, in the manner of a teacher-forced decoder.
struct Scenario {
    std::size_t d = 64;
    std::size_t classes = 100;
    Mode mode = Mode::MiniBatch;
    std::size_t n = 1;
    std::size_t k = 1;
    std::vector<double> learning_rates;  // MultiStep; empty means 0.1 per step
    LatentDist latent = LatentDist::TanhLike;
    std::optional<std::vector<std::size_t>> fixed_labels;
    std::size_t embed_dim = 0;
    std::uint64_t seed = 0;

    void validate() const;  // throws InvalidArgument
    std::size_t steps() const noexcept { return mode == Mode::MultiStep ? k : 1; }
    std::size_t per_step() const noexcept { return mode == Mode::SingleSample ? 1 : n; }
    std::size_t total_labels() const noexcept { return steps() * per_step(); }
    double learning_rate(std::size_t step) const;
};

struct ProjectionState {
    Matrix W;               // d x C
    std::vector<double> b;  // C
};

// A captured projection-layer update together with the hidden ground truth.
//
// `latents` and `logit_grads` are the factors H (S x d) and G (S x C) with
// delta_w == H^T G; `inputs` holds the raw h_i before the 1/N and step-size
// scaling.  All three are only populated by simulate_case.
struct GradientCase {
    Scenario scenario;
    Matrix delta_w;
    std::vector<std::size_t> true_labels;
    std::size_t true_S = 0;
    std::optional<std::map<std::size_t, std::string>> vocab;

    Matrix latents;
    Matrix inputs;
    Matrix logit_grads;
    ProjectionState initial_state;
    Matrix embedding;  // (C + 1) x embed_dim, row C is the start token

    std::vector<std::size_t> label_set() const;  // sorted, deduplicated
};

// Numerically stable softmax (max subtraction).
std::vector<double> softmax(std::span<const double> z);

// dL/dz for cross-entropy on label y: softmax(z) - onehot(y).
std::vector<double> ce_logit_grad(std::span<const double> z, std::size_t y);

struct ProjectionGrad {
    Matrix delta_w;  // d x C, equal to H^T G
    Matrix G;        // S x C, row i = ce_logit_grad(h_i W + b, y_i)
    Matrix H;        // S x d, row i = h_i / S
};

// Mean cross-entropy gradient of the projection layer over the rows of
// `latents` (raw, unscaled h_i).
ProjectionGrad projection_grad(const Matrix& latents, std::span<const std::size_t> labels,
                               const ProjectionState& state);

// Initial projection weights and bias, N(0, 0.1^2), drawn from the seeded
// stream: W row-major, then b.
ProjectionState initial_state(const Scenario& sc);

GradientCase simulate_case(const Scenario& sc);

const char* to_string(Mode m);
const char* to_string(LatentDist l);
Mode parse_mode(const std::string& s);
LatentDist parse_latent(const std::string& s);

}  // namespace gradleak::sim
