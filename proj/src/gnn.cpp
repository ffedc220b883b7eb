#include "edgeprompt/gnn.hpp"

#include <cmath>

#include "edgeprompt/error.hpp"
#include "edgeprompt/rng.hpp"

namespace edgeprompt {

const char* to_string(BackboneKind kind) noexcept { return kind == BackboneKind::Gcn ? "gcn" : "gin"; }

BackboneKind parse_backbone(std::string_view text) {
    if (text == "gcn") return BackboneKind::Gcn;
    if (text == "gin") return BackboneKind::Gin;
    throw Error(ErrorKind::Config, "unknown backbone '" + std::string(text) + "' (expected gcn|gin)");
}

const char* to_string(ReadoutKind kind) noexcept { return kind == ReadoutKind::Sum ? "sum" : "mean"; }

ReadoutKind parse_readout(std::string_view text) {
    if (text == "sum") return ReadoutKind::Sum;
    if (text == "mean") return ReadoutKind::Mean;
    throw Error(ErrorKind::Config, "unknown readout '" + std::string(text) + "' (expected sum|mean)");
}

namespace {

Tensor glorot(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w(in, out);
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    return w;
}

}  // namespace

GnnModel GnnModel::shaped(BackboneKind kind, std::vector<std::size_t> dims, double gin_epsilon) {
    if (dims.size() < 2) throw Error(ErrorKind::Shape, "a model needs at least one layer");
    for (std::size_t d : dims)
        if (d == 0) throw Error(ErrorKind::Shape, "layer widths must be positive");
    GnnModel m;
    m.kind_ = kind;
    m.dims_ = std::move(dims);
    m.epsilon_ = gin_epsilon;
    for (std::size_t l = 0; l + 1 < m.dims_.size(); ++l) {
        const std::size_t in = m.dims_[l], out = m.dims_[l + 1];
        const std::string p = "layers." + std::to_string(l) + ".";
        if (kind == BackboneKind::Gcn) {
            m.names_.push_back(p + "weight");
            m.params_.emplace_back(in, out);
            m.names_.push_back(p + "bias");
            m.params_.emplace_back(1, out);
        } else {
            m.names_.push_back(p + "mlp.0.weight");
            m.params_.emplace_back(in, out);
            m.names_.push_back(p + "mlp.0.bias");
            m.params_.emplace_back(1, out);
            m.names_.push_back(p + "mlp.1.weight");
            m.params_.emplace_back(out, out);
            m.names_.push_back(p + "mlp.1.bias");
            m.params_.emplace_back(1, out);
        }
    }
    return m;
}

GnnModel GnnModel::create(BackboneKind kind, std::vector<std::size_t> dims, std::uint64_t seed,
                          double gin_epsilon) {
    GnnModel m = shaped(kind, std::move(dims), gin_epsilon);
    Rng rng(seed);
    for (Tensor& t : m.params_)
        if (t.rows() > 1) t = glorot(t.rows(), t.cols(), rng);
    return m;
}

BoundModel bind(const GnnModel& model, Tape& tape, bool trainable) {
    BoundModel b;
    for (const Tensor& t : model.parameters()) b.params.push_back(trainable ? tape.parameter(t) : tape.constant(t));
    return b;
}

PreparedGraph prepare_graph(const Graph& g, BackboneKind kind, double gin_epsilon) {
    PreparedGraph pg;
    pg.graph = &g;
    pg.kind = kind;
    const std::size_t n = g.num_nodes();
    SparseMatrix& s = pg.propagate;
    s.rows = s.cols = n;
    s.offsets.assign(n + 1, 0);
    s.indices.reserve(g.num_entries() + n);
    s.values.reserve(g.num_entries() + n);

    std::vector<double> self(n);
    if (kind == BackboneKind::Gcn) {
        NormalizedAdjacency norm = normalized_adjacency(g, true);
        pg.entry_coeff = std::move(norm.edge_coeff);
        self = std::move(norm.self_coeff);
    } else {
        pg.entry_coeff.assign(g.num_entries(), 1.0);
        self.assign(n, 1.0 + gin_epsilon);
    }
    // Rows keep ascending column order with the diagonal slotted in place.
    for (std::size_t i = 0; i < n; ++i) {
        bool placed = false;
        for (std::size_t e = g.offsets()[i]; e < g.offsets()[i + 1]; ++e) {
            const std::uint32_t j = g.targets()[e];
            if (!placed && j > i) {
                s.indices.push_back(static_cast<std::uint32_t>(i));
                s.values.push_back(self[i]);
                placed = true;
            }
            s.indices.push_back(j);
            s.values.push_back(pg.entry_coeff[e]);
        }
        if (!placed) {
            s.indices.push_back(static_cast<std::uint32_t>(i));
            s.values.push_back(self[i]);
        }
        s.offsets[i + 1] = s.indices.size();
    }
    return pg;
}

Var aggregate_prompts(const PreparedGraph& pg, const LayerPrompt& prompt, std::size_t width) {
    const Graph& g = *pg.graph;
    if (prompt.form == LayerPrompt::Form::Aggregated) {
        const Tensor& anchors = prompt.anchors.value();
        if (prompt.rows.rows() != g.num_nodes() || anchors.cols() != width || anchors.rows() != prompt.rows.cols())
            throw Error(ErrorKind::Shape, "prompt weights " + prompt.rows.value().shape_string() + " with anchors " +
                                              anchors.shape_string() + " for " + std::to_string(g.num_nodes()) +
                                              " nodes of width " + std::to_string(width));
        return matmul(prompt.rows, prompt.anchors);
    }
    const std::size_t entries = g.num_entries();
    if (prompt.rows.rows() != entries)
        throw Error(ErrorKind::Shape, "edge prompt has " + std::to_string(prompt.rows.rows()) +
                                          " rows, graph has " + std::to_string(entries) + " CSR entries");
    const bool unit = pg.kind == BackboneKind::Gin;
    if (prompt.is_factored()) {
        const Tensor& anchors = prompt.anchors.value();
        if (anchors.cols() != width || anchors.rows() != prompt.rows.cols())
            throw Error(ErrorKind::Shape, "prompt scores " + prompt.rows.value().shape_string() + " with anchors " +
                                              anchors.shape_string() + " for width " + std::to_string(width));
        Var weighted = unit ? prompt.rows : scale_rows(prompt.rows, pg.entry_coeff);
        return matmul(scatter_add_rows(weighted, g.entry_rows(), g.num_nodes()), prompt.anchors);
    }
    if (prompt.rows.cols() != width)
        throw Error(ErrorKind::Shape, "edge prompt width " + std::to_string(prompt.rows.cols()) +
                                          " does not match layer input width " + std::to_string(width));
    Var weighted = unit ? prompt.rows : scale_rows(prompt.rows, pg.entry_coeff);
    return scatter_add_rows(weighted, g.entry_rows(), g.num_nodes());
}

Var gcn_layer_forward(Var h, const PreparedGraph& pg, Var weight, Var bias, bool activation,
                      const std::optional<LayerPrompt>& prompt) {
    if (h.rows() != pg.graph->num_nodes() || h.cols() != weight.rows())
        throw Error(ErrorKind::Shape, "gcn layer: input " + h.value().shape_string() + " with weight " +
                                          weight.value().shape_string());
    Var agg = spmm(pg.propagate, h);
    if (prompt) agg = add(agg, aggregate_prompts(pg, *prompt, h.cols()));
    Var out = add_bias(matmul(agg, weight), bias);
    return activation ? relu(out) : out;
}

Var gin_aggregate(Var h, const PreparedGraph& pg, const std::optional<LayerPrompt>& prompt) {
    if (h.rows() != pg.graph->num_nodes())
        throw Error(ErrorKind::Shape, "gin layer: input " + h.value().shape_string() + " for " +
                                          std::to_string(pg.graph->num_nodes()) + " nodes");
    Var agg = spmm(pg.propagate, h);
    if (prompt) agg = add(agg, aggregate_prompts(pg, *prompt, h.cols()));
    return agg;
}

Var gin_layer_forward(Var h, const PreparedGraph& pg, const GinMlp& mlp, bool activation,
                      const std::optional<LayerPrompt>& prompt) {
    if (h.cols() != mlp.w1.rows())
        throw Error(ErrorKind::Shape, "gin layer: input " + h.value().shape_string() + " with weight " +
                                          mlp.w1.value().shape_string());
    Var agg = gin_aggregate(h, pg, prompt);
    Var hidden = relu(add_bias(matmul(agg, mlp.w1), mlp.b1));
    Var out = add_bias(matmul(hidden, mlp.w2), mlp.b2);
    return activation ? relu(out) : out;
}

Var model_forward(const GnnModel& model, const BoundModel& bound, const PreparedGraph& pg, Var features,
                  const PromptProvider& prompts) {
    if (features.cols() != model.input_dim())
        throw Error(ErrorKind::Shape, "features " + features.value().shape_string() + " for model input width " +
                                          std::to_string(model.input_dim()));
    if (pg.kind != model.kind()) throw Error(ErrorKind::Config, "graph prepared for a different backbone kind");
    const std::size_t per = model.params_per_layer();
    Var h = features;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        std::optional<LayerPrompt> prompt;
        if (prompts) prompt = prompts(l, h);
        const bool last = l + 1 == model.num_layers();
        const Var* p = &bound.params[l * per];
        if (model.kind() == BackboneKind::Gcn)
            h = gcn_layer_forward(h, pg, p[0], p[1], !last, prompt);
        else
            h = gin_layer_forward(h, pg, GinMlp{p[0], p[1], p[2], p[3]}, !last, prompt);
    }
    return h;
}

Var model_forward(const GnnModel& model, const BoundModel& bound, const PreparedGraph& pg, Var features,
                  const EdgePromptBundle& bundle) {
    if (!bundle.empty() && bundle.size() != model.num_layers())
        throw Error(ErrorKind::Shape, "prompt bundle has " + std::to_string(bundle.size()) + " layers, model has " +
                                          std::to_string(model.num_layers()));
    if (bundle.empty()) return model_forward(model, bound, pg, features, PromptProvider{});
    return model_forward(model, bound, pg, features,
                         [&bundle](std::size_t l, Var) { return bundle[l]; });
}

Var readout(Var h, std::span<const std::uint32_t> membership, std::size_t num_graphs, ReadoutKind kind) {
    Var pooled = scatter_add_rows(h, membership, num_graphs);
    if (kind == ReadoutKind::Sum) return pooled;
    std::vector<double> inv(num_graphs, 0.0);
    for (std::uint32_t g : membership) inv[g] += 1.0;
    for (double& v : inv) v = v > 0.0 ? 1.0 / v : 0.0;
    return scale_rows(pooled, inv);
}

LinearHead LinearHead::create(std::size_t in_dim, std::size_t classes, std::uint64_t seed) {
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    LinearHead head{Tensor(in_dim, classes), Tensor(1, classes)};
    for (double& v : head.weight.values()) v = rng.uniform(-bound, bound);
    for (double& v : head.bias.values()) v = rng.uniform(-bound, bound);
    return head;
}

Var classifier_forward(Var weight, Var bias, Var reps) {
    if (reps.cols() != weight.rows())
        throw Error(ErrorKind::Shape, "classifier: reps " + reps.value().shape_string() + " with weight " +
                                          weight.value().shape_string());
    return add_bias(matmul(reps, weight), bias);
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
    std::vector<std::size_t> out(logits.rows(), 0);
    for (std::size_t r = 0; r < logits.rows(); ++r)
        for (std::size_t c = 1; c < logits.cols(); ++c)
            if (logits(r, c) > logits(r, out[r])) out[r] = c;
    return out;
}

}  // namespace edgeprompt
