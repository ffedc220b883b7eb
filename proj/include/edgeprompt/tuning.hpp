#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "edgeprompt/gnn.hpp"
#include "edgeprompt/graph.hpp"
#include "edgeprompt/prompt.hpp"

namespace edgeprompt {

struct TuneConfig {
    std::size_t epochs = 200;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;  // graph tasks only; node tasks are full batch
    std::size_t anchors = 10;
    ReadoutKind readout = ReadoutKind::Sum;
    double leaky_slope = kDefaultLeakySlope;
    std::uint64_t seed = 0;

    // 10 anchors for node tasks, 5 for graph tasks.
    static TuneConfig defaults_for(TaskKind task);
    void validate() const;
};

struct TuneHistory {
    std::vector<double> loss;
    std::vector<double> train_accuracy;
};

struct TuneResult {
    PromptSet prompts;
    LinearHead head;
    TuneHistory history;
};

// Trains prompt parameters and a linear head over a frozen backbone. The
// backbone is bound as constants, so its tensors are never written.
//
// Random streams derived from cfg.seed: 1 head init, 2 score-map init,
// 3 batch order.
TuneResult tune_node_classification(const GnnModel& backbone, const LabeledDataset& ds, const FewShotSplit& split,
                                    PromptMethod method, const TuneConfig& cfg);
TuneResult tune_graph_classification(const GnnModel& backbone, const LabeledDataset& ds, const FewShotSplit& split,
                                     PromptMethod method, const TuneConfig& cfg);
// Dispatches on ds.task.
TuneResult tune(const GnnModel& backbone, const LabeledDataset& ds, const FewShotSplit& split, PromptMethod method,
                const TuneConfig& cfg);

// Logits for the given instance ids (nodes or graphs, by ds.task).
Tensor predict_logits(const GnnModel& backbone, const PromptSet& prompts, const LinearHead& head,
                      const LabeledDataset& ds, std::span<const std::size_t> ids, ReadoutKind readout,
                      std::size_t batch_size = 32);

// Fraction of ids whose argmax logit equals the label. Empty ids throw Config.
double evaluate_accuracy(const GnnModel& backbone, const PromptSet& prompts, const LinearHead& head,
                         const LabeledDataset& ds, std::span<const std::size_t> ids,
                         ReadoutKind readout = ReadoutKind::Sum, std::size_t batch_size = 32);

// Checks that a backbone can consume the dataset; throws Config otherwise.
void check_backbone_compatible(const GnnModel& backbone, const LabeledDataset& ds);

}  // namespace edgeprompt
