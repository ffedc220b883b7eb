#include "edgeprompt/prompt.hpp"

#include <memory>

#include "edgeprompt/error.hpp"
#include "edgeprompt/rng.hpp"

namespace edgeprompt {

const char* to_string(PromptMethod method) noexcept {
    switch (method) {
        case PromptMethod::ClassifierOnly: return "classifier-only";
        case PromptMethod::EdgePrompt: return "edgeprompt";
        case PromptMethod::EdgePromptPlus: return "edgeprompt+";
        case PromptMethod::Gpf: return "gpf";
        case PromptMethod::GpfPlus: return "gpf-plus";
    }
    return "?";
}

PromptMethod parse_method(std::string_view text) {
    for (PromptMethod m : {PromptMethod::ClassifierOnly, PromptMethod::EdgePrompt, PromptMethod::EdgePromptPlus,
                           PromptMethod::Gpf, PromptMethod::GpfPlus})
        if (text == to_string(m)) return m;
    throw Error(ErrorKind::Config, "unknown method '" + std::string(text) +
                                       "' (expected edgeprompt|edgeprompt+|gpf|gpf-plus|classifier-only)");
}

namespace {

struct Slot {
    std::string name;
    std::size_t rows;
    std::size_t cols;
    bool random;  // score maps; everything else starts at zero
};

std::vector<Slot> layout(PromptMethod method, const GnnModel& backbone, std::size_t anchors) {
    const bool needs_anchors = method == PromptMethod::EdgePromptPlus || method == PromptMethod::GpfPlus;
    if (needs_anchors && anchors == 0) throw Error(ErrorKind::Config, "anchor count must be at least 1");
    std::vector<Slot> slots;
    const auto& dims = backbone.dims();
    switch (method) {
        case PromptMethod::ClassifierOnly: break;
        case PromptMethod::EdgePrompt:
            for (std::size_t l = 0; l < backbone.num_layers(); ++l)
                slots.push_back({"layers." + std::to_string(l) + ".prompt", 1, dims[l], false});
            break;
        case PromptMethod::EdgePromptPlus:
            for (std::size_t l = 0; l < backbone.num_layers(); ++l) {
                const std::string p = "layers." + std::to_string(l) + ".";
                slots.push_back({p + "anchors", anchors, dims[l], false});
                slots.push_back({p + "score_weight", 2 * dims[l], anchors, true});
            }
            break;
        case PromptMethod::Gpf: slots.push_back({"prompt", 1, dims[0], false}); break;
        case PromptMethod::GpfPlus:
            slots.push_back({"basis", anchors, dims[0], false});
            slots.push_back({"score", dims[0], anchors, true});
            break;
    }
    return slots;
}

}  // namespace

PromptSet PromptSet::init(PromptMethod method, const GnnModel& backbone, std::size_t anchors, std::uint64_t seed,
                          double leaky_slope) {
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
        throw Error(ErrorKind::Range, "leaky slope must lie in (0, 1)");
    PromptSet set;
    set.method_ = method;
    set.slope_ = leaky_slope;
    set.anchors_ = (method == PromptMethod::EdgePromptPlus || method == PromptMethod::GpfPlus) ? anchors : 0;
    Rng rng(seed);
    for (const Slot& s : layout(method, backbone, anchors)) {
        Tensor t(s.rows, s.cols);
        if (s.random)
            for (double& v : t.values()) v = rng.uniform(-0.1, 0.1);
        set.names_.push_back(s.name);
        set.tensors_.push_back(std::move(t));
    }
    return set;
}

PromptSet PromptSet::from_tensors(PromptMethod method, const GnnModel& backbone, std::size_t anchors,
                                  double leaky_slope, std::vector<std::string> names, std::vector<Tensor> tensors) {
    PromptSet set = init(method, backbone, anchors, 0, leaky_slope);
    if (names.size() != set.names_.size())
        throw Error(ErrorKind::Format, "prompt tensor count " + std::to_string(names.size()) + ", expected " +
                                           std::to_string(set.names_.size()));
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] != set.names_[i])
            throw Error(ErrorKind::Format, "prompt tensor '" + names[i] + "', expected '" + set.names_[i] + "'");
        if (!tensors[i].same_shape(set.tensors_[i]))
            throw Error(ErrorKind::Format, "prompt tensor '" + names[i] + "' has shape " + tensors[i].shape_string() +
                                               ", expected " + set.tensors_[i].shape_string());
        set.tensors_[i] = std::move(tensors[i]);
    }
    return set;
}

const Tensor& PromptSet::tensor(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return tensors_[i];
    throw Error(ErrorKind::Index, "no prompt tensor named '" + std::string(name) + "'");
}

BoundPrompts::BoundPrompts(const PromptSet& set, Tape& tape, bool trainable) : set_(&set) {
    for (const Tensor& t : set.tensors()) vars_.push_back(trainable ? tape.parameter(t) : tape.constant(t));
}

Var BoundPrompts::apply_features(Var x) const {
    switch (set_->method()) {
        case PromptMethod::Gpf: return apply_gpf(x, vars_[0]);
        case PromptMethod::GpfPlus: return apply_gpf_plus(x, vars_[0], vars_[1]);
        default: return x;
    }
}

PromptProvider BoundPrompts::provider(const PreparedGraph& pg) const {
    const PreparedGraph* gp = &pg;
    if (set_->method() == PromptMethod::EdgePrompt) {
        // Unit scores: the per-node weight is the row sum of entry
        // coefficients, summed in CSR order like edge_softmax_aggregate.
        const Graph& g = *pg.graph;
        Tensor weights(g.num_nodes(), 1);
        for (std::size_t e = 0; e < g.num_entries(); ++e) weights(g.entry_rows()[e], 0) += pg.entry_coeff[e] * 1.0;
        auto shared = std::make_shared<const Tensor>(std::move(weights));
        return [vars = vars_, shared](std::size_t l, Var h) -> std::optional<LayerPrompt> {
            return LayerPrompt::aggregated(h.tape()->constant(*shared), vars[l]);
        };
    }
    if (set_->method() == PromptMethod::EdgePromptPlus) {
        return [vars = vars_, gp, slope = set_->leaky_slope()](std::size_t l, Var h) -> std::optional<LayerPrompt> {
            return LayerPrompt::aggregated(aggregated_scores(vars[2 * l + 1], h, *gp, slope), vars[2 * l]);
        };
    }
    return {};
}

Var aggregated_scores(Var score_weight, Var h_prev, const PreparedGraph& pg, double leaky_slope) {
    const Graph& g = *pg.graph;
    const std::size_t d = h_prev.cols();
    if (score_weight.rows() != 2 * d || h_prev.rows() != g.num_nodes())
        throw Error(ErrorKind::Shape, "score weight " + score_weight.value().shape_string() + " for representations " +
                                          h_prev.value().shape_string());
    Var top = matmul(h_prev, slice_rows(score_weight, 0, d));
    Var bottom = matmul(h_prev, slice_rows(score_weight, d, 2 * d));
    return edge_softmax_aggregate(top, bottom, g.entry_rows(), g.targets(), pg.entry_coeff, g.num_nodes(),
                                  leaky_slope);
}

EdgePromptBundle materialize_edgeprompt(std::span<const Var> shared, const Graph& g) {
    EdgePromptBundle bundle;
    const std::vector<std::uint32_t> zeros(g.num_entries(), 0);
    for (const Var& p : shared) {
        if (p.rows() != 1) throw Error(ErrorKind::Shape, "shared edge prompt must be a row vector, got " +
                                                             p.value().shape_string());
        bundle.emplace_back(LayerPrompt::dense(gather_rows(p, zeros)));
    }
    return bundle;
}

Var score_vectors(Var score_weight, Var h_prev, const Graph& g, double leaky_slope) {
    const std::size_t d = h_prev.cols();
    if (score_weight.rows() != 2 * d || h_prev.rows() != g.num_nodes())
        throw Error(ErrorKind::Shape, "score weight " + score_weight.value().shape_string() + " for representations " +
                                          h_prev.value().shape_string());
    // [h_i || h_j] W = h_i W_top + h_j W_bottom; projecting per node first
    // keeps the per-entry work at E x M.
    Var top = matmul(h_prev, slice_rows(score_weight, 0, d));
    Var bottom = matmul(h_prev, slice_rows(score_weight, d, 2 * d));
    Var logits = add(gather_rows(top, g.entry_rows()), gather_rows(bottom, g.targets()));
    return softmax_rows(leaky_relu(logits, leaky_slope));
}

Var materialize_edgeprompt_plus(Var anchors, Var score_weight, Var h_prev, const Graph& g, double leaky_slope) {
    if (anchors.cols() != h_prev.cols() || anchors.rows() != score_weight.cols())
        throw Error(ErrorKind::Shape, "anchors " + anchors.value().shape_string() + " with score weight " +
                                          score_weight.value().shape_string());
    return matmul(score_vectors(score_weight, h_prev, g, leaky_slope), anchors);
}

Var apply_gpf(Var x, Var prompt) {
    if (prompt.rows() != 1 || prompt.cols() != x.cols())
        throw Error(ErrorKind::Shape, "feature prompt " + prompt.value().shape_string() + " for features " +
                                          x.value().shape_string());
    return add_bias(x, prompt);
}

Var apply_gpf_plus(Var x, Var basis, Var score) {
    if (score.rows() != x.cols() || basis.cols() != x.cols() || basis.rows() != score.cols())
        throw Error(ErrorKind::Shape, "gpf-plus basis " + basis.value().shape_string() + " and score " +
                                          score.value().shape_string() + " for features " + x.value().shape_string());
    return add(x, matmul(softmax_rows(matmul(x, score)), basis));
}

}  // namespace edgeprompt
