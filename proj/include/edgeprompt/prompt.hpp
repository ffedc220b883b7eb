#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "edgeprompt/autodiff.hpp"
#include "edgeprompt/gnn.hpp"
#include "edgeprompt/graph.hpp"

namespace edgeprompt {

enum class PromptMethod { ClassifierOnly, EdgePrompt, EdgePromptPlus, Gpf, GpfPlus };

const char* to_string(PromptMethod method) noexcept;
PromptMethod parse_method(std::string_view text);

inline constexpr double kDefaultLeakySlope = 0.2;

// Learnable prompt state for one method, as a named tensor list:
//   edgeprompt   layers.<l>.prompt        1 x D_l       shared edge vector
//   edgeprompt+  layers.<l>.anchors       M x D_l       anchor prompts
//                layers.<l>.score_weight  2 D_l x M     attention score map
//   gpf          prompt                   1 x D_0       feature prompt
//   gpf-plus     basis                    M x D_0
//                score                    D_0 x M
// where D_l is the input width of layer l. classifier-only has no tensors.
class PromptSet {
public:
    PromptSet() = default;

    // Prompt vectors and anchors start at zero; score maps are uniform in
    // [-0.1, 0.1].
    static PromptSet init(PromptMethod method, const GnnModel& backbone, std::size_t anchors,
                          std::uint64_t seed, double leaky_slope = kDefaultLeakySlope);
    // Rebuilds a set from stored tensors, checking names and shapes.
    static PromptSet from_tensors(PromptMethod method, const GnnModel& backbone, std::size_t anchors,
                                  double leaky_slope, std::vector<std::string> names, std::vector<Tensor> tensors);

    PromptMethod method() const noexcept { return method_; }
    std::size_t anchors() const noexcept { return anchors_; }
    double leaky_slope() const noexcept { return slope_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    std::vector<Tensor>& tensors() noexcept { return tensors_; }
    const std::vector<Tensor>& tensors() const noexcept { return tensors_; }

    const Tensor& tensor(std::string_view name) const;

private:
    PromptMethod method_ = PromptMethod::ClassifierOnly;
    std::size_t anchors_ = 0;
    double slope_ = kDefaultLeakySlope;
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
};

// A PromptSet bound to a tape.
class BoundPrompts {
public:
    BoundPrompts(const PromptSet& set, Tape& tape, bool trainable);

    const std::vector<Var>& vars() const noexcept { return vars_; }

    // Node-feature prompts (GPF, GPF-plus); identity for the other methods.
    Var apply_features(Var x) const;

    // Edge prompts for every layer in aggregated form; empty provider for
    // methods without edge prompts. `pg` must outlive the returned provider
    // and any backward() over what it produced.
    PromptProvider provider(const PreparedGraph& pg) const;

private:
    const PromptSet* set_;
    std::vector<Var> vars_;
};

// Every CSR entry at layer l gets the row p^(l).
EdgePromptBundle materialize_edgeprompt(std::span<const Var> shared, const Graph& g);

// Softmax(LeakyReLU([h_i || h_j] W)) for each entry (i <- j); E x M.
Var score_vectors(Var score_weight, Var h_prev, const Graph& g, double leaky_slope);

// Per-node sums of coeff_ij * score_ij under pg's backbone coefficients,
// N x M; the fused form of scale_rows(score_vectors(...)) scattered to rows.
Var aggregated_scores(Var score_weight, Var h_prev, const PreparedGraph& pg, double leaky_slope);

// Score-weighted anchor average per entry, E x D.
Var materialize_edgeprompt_plus(Var anchors, Var score_weight, Var h_prev, const Graph& g, double leaky_slope);

// GPF: X + 1 p. GPF-plus: X + softmax(X S) B.
Var apply_gpf(Var x, Var prompt);
Var apply_gpf_plus(Var x, Var basis, Var score);

}  // namespace edgeprompt
