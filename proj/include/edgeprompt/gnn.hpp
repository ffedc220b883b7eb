#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "edgeprompt/autodiff.hpp"
#include "edgeprompt/graph.hpp"
#include "edgeprompt/tensor.hpp"

namespace edgeprompt {

enum class BackboneKind { Gcn, Gin };
enum class ReadoutKind { Sum, Mean };

const char* to_string(BackboneKind kind) noexcept;
BackboneKind parse_backbone(std::string_view text);
const char* to_string(ReadoutKind kind) noexcept;
ReadoutKind parse_readout(std::string_view text);

// Layer stack D_0 -> D_1 -> ... -> D_L. GCN layers carry (weight, bias); GIN
// layers carry a Linear-ReLU-Linear MLP. ReLU follows every layer but the last.
// Parameters are kept in one flat, named list so optimizers and checkpoints can
// walk them in a fixed order.
class GnnModel {
public:
    GnnModel() = default;

    // Glorot-uniform weights, zero biases.
    static GnnModel create(BackboneKind kind, std::vector<std::size_t> dims, std::uint64_t seed,
                           double gin_epsilon = 0.0);
    // Zero-filled parameters with the right shapes, used by the checkpoint loader.
    static GnnModel shaped(BackboneKind kind, std::vector<std::size_t> dims, double gin_epsilon = 0.0);

    BackboneKind kind() const noexcept { return kind_; }
    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    std::size_t num_layers() const noexcept { return dims_.size() - 1; }
    std::size_t input_dim() const noexcept { return dims_.front(); }
    std::size_t output_dim() const noexcept { return dims_.back(); }
    double gin_epsilon() const noexcept { return epsilon_; }
    std::size_t params_per_layer() const noexcept { return kind_ == BackboneKind::Gcn ? 2 : 4; }

    const std::vector<std::string>& parameter_names() const noexcept { return names_; }
    std::vector<Tensor>& parameters() noexcept { return params_; }
    const std::vector<Tensor>& parameters() const noexcept { return params_; }

private:
    BackboneKind kind_ = BackboneKind::Gcn;
    std::vector<std::size_t> dims_;
    double epsilon_ = 0.0;
    std::vector<std::string> names_;
    std::vector<Tensor> params_;
};

// Model parameters bound to a tape, in parameter_names() order.
struct BoundModel {
    std::vector<Var> params;
};

// Frozen use binds parameters as constants; training binds them as leaves.
BoundModel bind(const GnnModel& model, Tape& tape, bool trainable);

// Graph structure prepared for one backbone kind. Spmm records a pointer to
// `propagate`, so a PreparedGraph must outlive backward() on any tape that
// used it.
struct PreparedGraph {
    const Graph* graph = nullptr;
    BackboneKind kind = BackboneKind::Gcn;
    // GCN: D^-1/2 (A + I) D^-1/2. GIN: A + (1 + eps) I.
    SparseMatrix propagate;
    // Coefficient applied to a prompt travelling along each CSR entry.
    std::vector<double> entry_coeff;
};

PreparedGraph prepare_graph(const Graph& g, BackboneKind kind, double gin_epsilon = 0.0);

// Edge prompts for one layer in one of three equivalent forms:
//   Dense       rows e_ij per CSR entry, E x D
//   Factored    scores per CSR entry (E x M) times anchors (M x D)
//   Aggregated  coefficient-weighted score sums per node (N x M) times anchors
// The factored and aggregated forms avoid allocating E x D on large graphs.
struct LayerPrompt {
    enum class Form { Dense, Factored, Aggregated };

    Var rows;     // dense rows, per-entry scores, or per-node weights
    Var anchors;  // unset for the dense form
    Form form = Form::Dense;

    static LayerPrompt dense(Var rows) { return {rows, Var{}, Form::Dense}; }
    static LayerPrompt factored(Var scores, Var anchors) { return {scores, anchors, Form::Factored}; }
    // `weights` row i must already equal sum over entries (i <- j) of
    // coeff_ij * score_ij for the graph's backbone coefficients.
    static LayerPrompt aggregated(Var weights, Var anchors) { return {weights, anchors, Form::Aggregated}; }
    bool is_factored() const noexcept { return form == Form::Factored; }
};

using EdgePromptBundle = std::vector<std::optional<LayerPrompt>>;

// Supplies the prompt for layer l (0-based) given the representation entering
// that layer; lets prompts depend on h^(l-1).
using PromptProvider = std::function<std::optional<LayerPrompt>(std::size_t layer, Var h_prev)>;

// sum over entries (i <- j) of coeff_ij * e_ij, as an N x D tensor.
Var aggregate_prompts(const PreparedGraph& pg, const LayerPrompt& prompt, std::size_t width);

Var gcn_layer_forward(Var h, const PreparedGraph& pg, Var weight, Var bias, bool activation,
                      const std::optional<LayerPrompt>& prompt);

// (A + (1 + eps) I) h plus aggregated prompts: the GIN input to its MLP.
Var gin_aggregate(Var h, const PreparedGraph& pg, const std::optional<LayerPrompt>& prompt);

struct GinMlp {
    Var w1, b1, w2, b2;
};

Var gin_layer_forward(Var h, const PreparedGraph& pg, const GinMlp& mlp, bool activation,
                      const std::optional<LayerPrompt>& prompt);

Var model_forward(const GnnModel& model, const BoundModel& bound, const PreparedGraph& pg, Var features,
                  const PromptProvider& prompts = {});
Var model_forward(const GnnModel& model, const BoundModel& bound, const PreparedGraph& pg, Var features,
                  const EdgePromptBundle& bundle);

Var readout(Var h, std::span<const std::uint32_t> membership, std::size_t num_graphs, ReadoutKind kind);

struct LinearHead {
    Tensor weight;  // D x C
    Tensor bias;    // 1 x C

    // Uniform(+-1/sqrt(D)) for both weight and bias.
    static LinearHead create(std::size_t in_dim, std::size_t classes, std::uint64_t seed);
};

Var classifier_forward(Var weight, Var bias, Var reps);

// Row-wise argmax, ties to the lowest index.
std::vector<std::size_t> argmax_rows(const Tensor& logits);

}  // namespace edgeprompt
