#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "edgeprompt/autodiff.hpp"
#include "edgeprompt/checkpoint.hpp"
#include "edgeprompt/gnn.hpp"
#include "edgeprompt/graph.hpp"
#include "edgeprompt/rng.hpp"

namespace edgeprompt {

enum class PretrainStrategy { GraphCL, SimGRACE, EpGppt, EpGraphPrompt };

const char* to_string(PretrainStrategy strategy) noexcept;
PretrainStrategy parse_strategy(std::string_view text);

enum class AugmentKind { NodeDrop, EdgePerturb };

struct PretrainConfig {
    PretrainStrategy strategy = PretrainStrategy::GraphCL;
    std::size_t epochs = 50;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    double aug_ratio = 0.2;     // GraphCL node-drop / edge-perturb fraction
    double temperature = 0.5;   // NT-Xent and EP-GraphPrompt
    double noise_scale = 0.1;   // SimGRACE, relative to each tensor's std
    double mask_ratio = 0.2;    // EP-GPPT
    std::size_t views_per_epoch = 4;  // contrastive items per epoch on single-graph datasets
    std::uint64_t seed = 0;

    void validate() const;
};

// Node-drop removes floor(ratio N) nodes (never all of them) and reindexes the
// survivors in their original order. Edge-perturb removes floor(ratio |E|)
// edges and adds as many pairs that are not edges afterwards, so |E| is kept.
Graph augment_graph(const Graph& g, AugmentKind kind, double ratio, std::uint64_t seed);

// NT-Xent over the 2B rows [z1; z2]: row i's positive is row i + B (and back),
// every other row is a negative. Mean over the 2B rows.
Var ntxent_loss(Var z1, Var z2, double temperature);

// Two-layer MLP D -> D -> D with ReLU, used only while pre-training.
struct ProjectionHead {
    Tensor w1, b1, w2, b2;

    static ProjectionHead create(std::size_t dim, std::uint64_t seed);
};

// Copy of `model` with N(0, (scale * std_t)^2) noise added to every tensor t.
// The source model is not touched.
GnnModel perturb_weights(const GnnModel& model, double scale, Rng& rng);

struct PretrainResult {
    Checkpoint checkpoint;
    std::vector<double> loss_history;  // one mean loss per epoch
};

// Contrastive strategies on a dataset. Graph datasets contrast graphs in
// batches; single-graph datasets contrast views_per_epoch augmented copies of
// the graph.
PretrainResult pretrain_graphcl(const GnnModel& init, const LabeledDataset& ds, const PretrainConfig& cfg);
PretrainResult pretrain_simgrace(const GnnModel& init, const LabeledDataset& ds, const PretrainConfig& cfg);

// Link-level strategies on one graph; one full-graph update per epoch.
PretrainResult pretrain_ep_gppt(const GnnModel& init, const Graph& g, const PretrainConfig& cfg);
PretrainResult pretrain_ep_graphprompt(const GnnModel& init, const Graph& g, const PretrainConfig& cfg);

// Runs cfg.strategy. Link-level strategies on graph datasets train on the
// disjoint union of all graphs.
PretrainResult pretrain(const GnnModel& init, const LabeledDataset& ds, const PretrainConfig& cfg);

}  // namespace edgeprompt
