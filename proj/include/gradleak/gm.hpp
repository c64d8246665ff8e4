#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gradleak/matrix.hpp"

namespace gradleak::gm {

// Frozen single-layer decoder.  Position i sees x_i = [a_i, e_{i-1}] where
// e_{i-1} is the (smooth) embedding of the previous label and e_{-1} is the
// start-token row.  With embed_dim() == 0 the input is a_i alone.
struct ToyDecoder {
    Matrix W;               // (d_A + d_E) x C
    std::vector<double> b;  // C
    Matrix embedding;       // (C + 1) x d_E, row C = start token; empty when d_E == 0

    std::size_t classes() const noexcept { return W.cols(); }
    std::size_t embed_dim() const noexcept { return embedding.cols(); }
    std::size_t context_dim() const noexcept { return W.rows() - embed_dim(); }
    void validate() const;  // throws DimensionError / InvalidArgument
};

struct Schedule {
    double initial_lr = 0.05;
    std::size_t halve_every = 4000;
    double min_lr = 0.005;
    std::size_t patience = 2000;  // stop once the transcript is unchanged this long
    std::size_t max_steps = 50000;

    double lr(std::size_t step) const;
};

struct GMProblem {
    Matrix target_grad;  // (d_A + d_E) x C
    ToyDecoder decoder;
    std::size_t S = 1;
    std::optional<std::vector<std::size_t>> bow;  // ordered label ids
    double lambda = 1.0;
    // Reduction applied to the smooth-label loss; 1/S matches a per-sequence mean.
    double loss_scale = 1.0;
    Schedule schedule;

    void validate() const;
    std::size_t label_width() const;  // |bow| or C
    std::size_t label_id(std::size_t column) const;
    std::size_t variable_count() const noexcept;  // S * (d_A + label_width)
};

// A is S x d_A, P is S x label_width (columns follow bow order when set).
struct Variables {
    Matrix A;
    Matrix P;
};

// -sum_i sum_k p_i^k log softmax(z_i)^{c_k}, scaled by loss_scale.
double smooth_label_loss(const Variables& v, const GMProblem& prob);

// d(smooth_label_loss)/dW, the synthesized decoder gradient.
Matrix decoder_gradient(const Variables& v, const GMProblem& prob);

// sum_i | ||p_i||_1 - 1 |
double row_sum_penalty(const Matrix& P);

// ||decoder_gradient - target||_F + lambda * R(P).
double gm_objective(const Variables& v, const GMProblem& prob);

enum class Distance { Plain, Squared };

struct ObjectiveGrad {
    double value = 0.0;     // of the chosen form
    double distance = 0.0;  // ||D - T||_F
    double penalty = 0.0;   // R(P)
    Matrix dA;
    Matrix dP;
};

// Value and gradient of ||D - T||_F (Plain) or ||D - T||_F^2 (Squared),
// each plus lambda * R(P).  R uses sign(0) = 0 as its subgradient.
ObjectiveGrad objective_and_gradient(const Variables& v, const GMProblem& prob, Distance form);

// Per-row argmax of P mapped to label ids.
std::vector<std::size_t> transcript(const Matrix& P, const GMProblem& prob);

struct GMResult {
    std::vector<std::size_t> transcript;
    double final_loss = 0.0;  // gm_objective at the returned state
    std::size_t steps = 0;
    bool converged = false;   // transcript stabilised before max_steps
    std::optional<double> wer_vs_truth;
    std::size_t variable_count = 0;
    std::size_t restarts = 1;
    std::size_t best_restart = 0;
    std::vector<double> restart_losses;
};

// Gradient descent on the squared objective from N(0, 0.01^2) init.  Returns
// the lowest-objective state visited.
GMResult reconstruct(const GMProblem& prob, std::uint64_t seed);

// `restarts` independent runs on seeds split from `seed`; keeps the lowest
// final objective.  Runs in parallel when jobs > 1.
GMResult reconstruct(const GMProblem& prob, std::uint64_t seed, std::size_t restarts,
                     unsigned jobs = 1);

// Fills wer_vs_truth.
void score(GMResult& r, std::span<const std::size_t> truth);

// Problem for a captured update averaged over S positions.  The target is
// rescaled by S so the smooth-label loss is the plain sum over positions.
GMProblem problem_from_capture(const Matrix& delta_w, ToyDecoder decoder, std::size_t S);

// A synthetic instance with its hidden ground truth.
struct Instance {
    GMProblem problem;
    Variables truth;  // A* and one-hot P* in the problem's label columns
    std::vector<std::size_t> sequence;
};

struct InstanceSpec {
    std::size_t context_dim = 8;
    std::size_t embed_dim = 4;
    std::size_t classes = 50;
    std::size_t S = 3;
    bool distinct_labels = true;
    std::uint64_t seed = 0;
};

// Decoder, A* and labels drawn from the seeded stream; the target gradient
// is decoder_gradient at the ground truth with an unrestricted label space.
Instance make_instance(const InstanceSpec& spec);

// Same problem with labels restricted to `bow` (sorted copy is used).
GMProblem restrict_to(const GMProblem& prob, std::span<const std::size_t> bow);

// Truth expressed in the columns of `prob` (requires every label in its space).
Variables truth_in(const GMProblem& prob, const Matrix& A, std::span<const std::size_t> sequence);

}  // namespace gradleak::gm
