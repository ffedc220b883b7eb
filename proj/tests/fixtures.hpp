#pragma once

// Random inputs, small datasets and gradient checks shared by the unit tests
// and the acceptance binary. Nothing here depends on a test framework.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "edgeprompt/autodiff.hpp"
#include "edgeprompt/checkpoint.hpp"
#include "edgeprompt/gnn.hpp"
#include "edgeprompt/gradcheck.hpp"
#include "edgeprompt/graph.hpp"
#include "edgeprompt/prompt.hpp"
#include "edgeprompt/rng.hpp"
#include "edgeprompt/tensor.hpp"
#include "edgeprompt/tuning.hpp"

namespace testing {

using namespace edgeprompt;

inline constexpr PromptMethod kPromptMethods[] = {PromptMethod::EdgePrompt, PromptMethod::EdgePromptPlus,
                                                  PromptMethod::Gpf, PromptMethod::GpfPlus};

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(rows, cols);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// Erdos-Renyi graph with uniform features; at least one edge when n >= 2.
inline Graph random_graph(std::size_t n, std::size_t dim, double edge_prob, Rng& rng) {
    std::vector<EdgePair> edges;
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = i + 1; j < n; ++j)
            if (rng.bernoulli(edge_prob)) edges.emplace_back(i, j);
    if (edges.empty() && n >= 2) edges.emplace_back(0, 1);
    return Graph::from_edges(n, edges, random_tensor(n, dim, rng));
}

// Weighted sum so that every output entry gets a distinct upstream gradient.
inline Var probe(Var y) {
    Tensor w(y.rows(), y.cols());
    for (std::size_t i = 0; i < w.size(); ++i) w.values()[i] = 0.3 + 0.17 * static_cast<double>(i % 7);
    return sum(mul(y, y.tape()->constant(w)));
}

struct OpCase {
    const char* name;
    std::vector<Tensor> inputs;
    LossBuilder build;
};

// One scalar loss per differentiable op, inputs in [-1, 1].
inline std::vector<OpCase> elementary_op_cases(Rng& rng) {
    const std::vector<std::uint32_t> rows{0, 2, 2, 1, 3, 0}, cols{1, 0, 3, 2, 2, 3};
    const std::vector<double> coeffs{0.5, -0.25, 1.5, 0.75, 1.0, -0.6};
    const std::vector<std::size_t> labels{0, 3, 1};
    const std::vector<double> targets{1.0, 0.0, 1.0, 0.0};
    SparseMatrix sp;
    sp.rows = 3;
    sp.cols = 4;
    sp.offsets = {0, 2, 3, 5};
    sp.indices = {0, 3, 1, 0, 2};
    sp.values = {0.5, -1.0, 2.0, 0.25, 0.75};

    auto t = [&](std::size_t r, std::size_t c) { return random_tensor(r, c, rng); };
    return {
        {"matmul", {t(4, 3), t(3, 2)}, [](Tape&, std::span<const Var> v) { return probe(matmul(v[0], v[1])); }},
        {"matmul_nt", {t(4, 3), t(2, 3)}, [](Tape&, std::span<const Var> v) { return probe(matmul_nt(v[0], v[1])); }},
        {"add", {t(3, 2), t(3, 2)}, [](Tape&, std::span<const Var> v) { return probe(add(v[0], v[1])); }},
        {"sub", {t(3, 2), t(3, 2)}, [](Tape&, std::span<const Var> v) { return probe(sub(v[0], v[1])); }},
        {"mul", {t(3, 2), t(3, 2)}, [](Tape&, std::span<const Var> v) { return probe(mul(v[0], v[1])); }},
        {"scale", {t(3, 2)}, [](Tape&, std::span<const Var> v) { return probe(scale(v[0], -1.7)); }},
        {"add_bias", {t(3, 2), t(1, 2)}, [](Tape&, std::span<const Var> v) { return probe(add_bias(v[0], v[1])); }},
        {"relu", {t(4, 3)}, [](Tape&, std::span<const Var> v) { return probe(relu(v[0])); }},
        {"leaky_relu", {t(4, 3)}, [](Tape&, std::span<const Var> v) { return probe(leaky_relu(v[0], 0.2)); }},
        {"softmax_rows", {t(3, 4)}, [](Tape&, std::span<const Var> v) { return probe(softmax_rows(v[0])); }},
        {"cross_entropy", {t(3, 4)},
         [=](Tape&, std::span<const Var> v) { return cross_entropy_with_logits(v[0], labels); }},
        {"bce_with_logits", {t(4, 1)}, [=](Tape&, std::span<const Var> v) { return bce_with_logits(v[0], targets); }},
        {"sum", {t(3, 2)}, [](Tape&, std::span<const Var> v) { return scale(sum(v[0]), 2.0); }},
        {"mean", {t(3, 2)}, [](Tape&, std::span<const Var> v) { return scale(mean(v[0]), 2.0); }},
        {"sum_cols", {t(3, 4)}, [](Tape&, std::span<const Var> v) { return probe(sum_cols(v[0])); }},
        {"gather_rows", {t(4, 2)}, [=](Tape&, std::span<const Var> v) { return probe(gather_rows(v[0], rows)); }},
        {"scatter_add_rows", {t(6, 2)},
         [=](Tape&, std::span<const Var> v) { return probe(scatter_add_rows(v[0], cols, 4)); }},
        {"scale_rows", {t(6, 2)}, [=](Tape&, std::span<const Var> v) { return probe(scale_rows(v[0], coeffs)); }},
        {"spmm", {t(4, 2)}, [=](Tape&, std::span<const Var> v) { return probe(spmm(sp, v[0])); }},
        {"slice_rows", {t(5, 2)}, [](Tape&, std::span<const Var> v) { return probe(slice_rows(v[0], 1, 4)); }},
        {"concat_cols", {t(3, 2), t(3, 1)},
         [](Tape&, std::span<const Var> v) { return probe(concat_cols(v[0], v[1])); }},
        {"concat_rows", {t(2, 3), t(1, 3)},
         [](Tape&, std::span<const Var> v) { return probe(concat_rows(v[0], v[1])); }},
        {"l2_normalize_rows", {t(3, 4)},
         [](Tape&, std::span<const Var> v) { return probe(l2_normalize_rows(v[0])); }},
        {"edge_softmax_aggregate", {t(4, 3), t(4, 3)},
         [=](Tape&, std::span<const Var> v) {
             return probe(edge_softmax_aggregate(v[0], v[1], rows, cols, coeffs, 4, 0.2));
         }},
    };
}

inline LabeledDataset node_dataset(const Graph& g, std::size_t classes) {
    LabeledDataset ds;
    ds.num_classes = classes;
    ds.graphs.push_back(g);
    std::vector<std::size_t> labels(g.num_nodes());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % classes;
    ds.node_labels.push_back(labels);
    return ds;
}

inline LabeledDataset csbm_node_dataset(std::size_t n_per_class, std::size_t dim, std::uint64_t seed) {
    CsbmSample s = csbm_generate({std::vector<double>(dim, 0.5), std::vector<double>(dim, -0.5), 0.2, 0.02, n_per_class},
                                 seed);
    LabeledDataset ds;
    ds.num_classes = 2;
    ds.graphs.push_back(std::move(s.graph));
    ds.node_labels.push_back(std::move(s.labels));
    return ds;
}

// Graph label k % 2; label 1 swaps the intra and inter edge probabilities.
inline LabeledDataset csbm_graph_dataset(std::size_t count, std::size_t n_per_class, std::size_t dim,
                                         std::uint64_t seed) {
    LabeledDataset ds;
    ds.task = TaskKind::Graph;
    ds.num_classes = 2;
    for (std::size_t k = 0; k < count; ++k) {
        const bool swap = k % 2 == 1;
        CsbmParams params{std::vector<double>(dim, 0.5), std::vector<double>(dim, -0.5), swap ? 0.1 : 0.6,
                          swap ? 0.6 : 0.1, n_per_class};
        ds.graphs.push_back(csbm_generate(params, seed * 1000 + k).graph);
        ds.graph_labels.push_back(k % 2);
    }
    return ds;
}

// Randomizes every prompt tensor so gradients are taken away from the zero init.
inline PromptSet random_prompts(PromptMethod m, const GnnModel& backbone, std::size_t anchors, Rng& rng) {
    PromptSet set = PromptSet::init(m, backbone, anchors, rng.next());
    for (Tensor& t : set.tensors())
        for (double& v : t.values()) v = rng.uniform(-0.5, 0.5);
    return set;
}

// Full tuning loss of one method, recorded on `tape`: node task over `ids`, or
// graph task over the disjoint union of `ids` with sum readout.
inline Var tuning_loss(Tape& tape, const GnnModel& backbone, const BoundPrompts& bp, Var w, Var b,
                       const LabeledDataset& ds, const std::vector<std::size_t>& ids, const GraphBatch* batch,
                       const PreparedGraph& pg) {
    const BoundModel bm = bind(backbone, tape, false);
    Var x = bp.apply_features(tape.constant(pg.graph->features()));
    Var h = model_forward(backbone, bm, pg, x, bp.provider(pg));
    std::vector<std::size_t> labels;
    const auto all = ds.instance_labels();
    for (std::size_t id : ids) labels.push_back(all[id]);
    Var reps = batch ? readout(h, batch->membership, ids.size(), ReadoutKind::Sum)
                     : gather_rows(h, std::vector<std::uint32_t>(ids.begin(), ids.end()));
    return cross_entropy_with_logits(classifier_forward(w, b, reps), labels);
}

// Worst relative error between backward() and central differences over every
// prompt tensor and both head tensors.
inline double worst_tuning_gradient_error(const GnnModel& backbone, const PromptSet& prompts,
                                          const LinearHead& head, const LabeledDataset& ds,
                                          const std::vector<std::size_t>& ids) {
    std::optional<GraphBatch> batch;
    const Graph* g = &ds.graphs[0];
    if (ds.task == TaskKind::Graph) {
        std::vector<const Graph*> members;
        for (std::size_t id : ids) members.push_back(&ds.graphs[id]);
        batch = disjoint_union(members);
        g = &batch->graph;
    }
    const PreparedGraph pg = prepare_graph(*g, backbone.kind(), backbone.gin_epsilon());
    const GraphBatch* bptr = batch ? &*batch : nullptr;

    auto loss_value = [&](const PromptSet& set, const LinearHead& hd) {
        Tape tape;
        BoundPrompts bp(set, tape, false);
        return tuning_loss(tape, backbone, bp, tape.constant(hd.weight), tape.constant(hd.bias), ds, ids, bptr, pg)
            .value()
            .item();
    };

    Tape tape;
    BoundPrompts bp(prompts, tape, true);
    Var w = tape.parameter(head.weight), b = tape.parameter(head.bias);
    const Gradients grads = tape.backward(tuning_loss(tape, backbone, bp, w, b, ds, ids, bptr, pg));

    double worst = 0.0;
    for (std::size_t k = 0; k < prompts.tensors().size(); ++k) {
        const Tensor numeric = finite_difference_gradient(
            [&](const Tensor& value) {
                PromptSet copy = prompts;
                copy.tensors()[k] = value;
                return loss_value(copy, head);
            },
            prompts.tensors()[k]);
        worst = std::max(worst, relative_error(grads.of(bp.vars()[k]), numeric));
    }
    const Tensor nw = finite_difference_gradient(
        [&](const Tensor& value) {
            LinearHead copy = head;
            copy.weight = value;
            return loss_value(prompts, copy);
        },
        head.weight);
    const Tensor nb = finite_difference_gradient(
        [&](const Tensor& value) {
            LinearHead copy = head;
            copy.bias = value;
            return loss_value(prompts, copy);
        },
        head.bias);
    worst = std::max(worst, relative_error(grads.of(w), nw));
    return std::max(worst, relative_error(grads.of(b), nb));
}

inline std::string digest_of(const GnnModel& m) {
    Checkpoint c;
    c.model = m;
    return checkpoint_digest(c);
}

}  // namespace testing
