#include "edgeprompt/tuning.hpp"

#include <memory>

#include "edgeprompt/error.hpp"
#include "edgeprompt/optim.hpp"
#include "edgeprompt/rng.hpp"

namespace edgeprompt {

TuneConfig TuneConfig::defaults_for(TaskKind task) {
    TuneConfig cfg;
    cfg.anchors = task == TaskKind::Node ? 10 : 5;
    return cfg;
}

void TuneConfig::validate() const {
    if (epochs == 0) throw Error(ErrorKind::Config, "epochs must be positive");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::Config, "learning rate must be positive");
    if (batch_size == 0) throw Error(ErrorKind::Config, "batch size must be positive");
    if (anchors == 0) throw Error(ErrorKind::Config, "anchor count must be at least 1");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw Error(ErrorKind::Config, "leaky slope must lie in (0, 1)");
}

void check_backbone_compatible(const GnnModel& backbone, const LabeledDataset& ds) {
    if (ds.feature_dim() != backbone.input_dim())
        throw Error(ErrorKind::Config, "backbone expects " + std::to_string(backbone.input_dim()) +
                                           " input features, dataset has " + std::to_string(ds.feature_dim()));
}

namespace {

// Union of a batch plus its propagation structure; pinned on the heap since
// PreparedGraph points into the batch graph.
struct PreparedBatch {
    GraphBatch batch;
    PreparedGraph pg;
};

std::unique_ptr<PreparedBatch> prepare_batch(const GnnModel& backbone, const LabeledDataset& ds,
                                             std::span<const std::size_t> ids) {
    std::vector<const Graph*> members;
    members.reserve(ids.size());
    for (std::size_t id : ids) members.push_back(&ds.graphs.at(id));
    auto out = std::make_unique<PreparedBatch>();
    out->batch = disjoint_union(members);
    out->pg = prepare_graph(out->batch.graph, backbone.kind(), backbone.gin_epsilon());
    return out;
}

Var prompted_forward(const GnnModel& backbone, const BoundModel& bm, const BoundPrompts& bp, const PreparedGraph& pg,
                     Tape& tape) {
    Var x = bp.apply_features(tape.constant(pg.graph->features()));
    return model_forward(backbone, bm, pg, x, bp.provider(pg));
}

std::vector<std::uint32_t> to_u32(std::span<const std::size_t> ids) { return {ids.begin(), ids.end()}; }

std::vector<std::size_t> labels_of(const LabeledDataset& ds, std::span<const std::size_t> ids) {
    const std::vector<std::size_t> all = ds.instance_labels();
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (std::size_t id : ids) {
        if (id >= all.size())
            throw Error(ErrorKind::Index, "instance id " + std::to_string(id) + " out of range (" +
                                              std::to_string(all.size()) + " instances)");
        out.push_back(all[id]);
    }
    return out;
}

std::size_t count_correct(const Tensor& logits, std::span<const std::size_t> labels) {
    const std::vector<std::size_t> pred = argmax_rows(logits);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < pred.size(); ++r) hits += pred[r] == labels[r];
    return hits;
}

// Trainable state of one tuning run in a fixed order: prompt tensors, then
// head weight and bias.
struct TrainState {
    PromptSet prompts;
    LinearHead head;
    Adam adam;

    void step(const BoundPrompts& bp, Var w, Var b, const Gradients& grads) {
        std::vector<Tensor*> params;
        std::vector<Tensor> g;
        for (std::size_t i = 0; i < prompts.tensors().size(); ++i) {
            params.push_back(&prompts.tensors()[i]);
            g.push_back(grads.of(bp.vars()[i]));
        }
        params.push_back(&head.weight);
        g.push_back(grads.of(w));
        params.push_back(&head.bias);
        g.push_back(grads.of(b));
        adam.step(params, g);
    }
};

TrainState init_state(const GnnModel& backbone, const LabeledDataset& ds, PromptMethod method,
                      const TuneConfig& cfg) {
    cfg.validate();
    check_backbone_compatible(backbone, ds);
    if (ds.num_classes == 0) throw Error(ErrorKind::Config, "dataset declares no classes");
    return TrainState{
        PromptSet::init(method, backbone, cfg.anchors, Rng::derive(cfg.seed, 2).next(), cfg.leaky_slope),
        LinearHead::create(backbone.output_dim(), ds.num_classes, Rng::derive(cfg.seed, 1).next()),
        Adam(AdamOptions{.learning_rate = cfg.learning_rate})};
}

// Graph representations of `ids` under the given prompts, without gradients.
Tensor graph_representations(const GnnModel& backbone, const PromptSet& prompts, const LabeledDataset& ds,
                             std::span<const std::size_t> ids, ReadoutKind readout_kind, std::size_t batch_size) {
    Tensor out(ids.size(), backbone.output_dim());
    for (std::size_t start = 0; start < ids.size(); start += batch_size) {
        const std::size_t stop = std::min(ids.size(), start + batch_size);
        const auto chunk = ids.subspan(start, stop - start);
        auto prepared = prepare_batch(backbone, ds, chunk);
        Tape tape;
        BoundModel bm = bind(backbone, tape, false);
        BoundPrompts bp(prompts, tape, false);
        Var h = prompted_forward(backbone, bm, bp, prepared->pg, tape);
        Var pooled = readout(h, prepared->batch.membership, chunk.size(), readout_kind);
        const Tensor& v = pooled.value();
        std::copy(v.values().begin(), v.values().end(), out.row(start));
    }
    return out;
}

Tensor node_representations(const GnnModel& backbone, const PromptSet& prompts, const PreparedGraph& pg,
                            std::span<const std::size_t> ids) {
    Tape tape;
    BoundModel bm = bind(backbone, tape, false);
    BoundPrompts bp(prompts, tape, false);
    Var h = prompted_forward(backbone, bm, bp, pg, tape);
    return gather_rows(h, to_u32(ids)).value();
}

void require_node_task(const LabeledDataset& ds) {
    if (ds.task != TaskKind::Node) throw Error(ErrorKind::Config, "dataset is not a node-classification dataset");
    if (ds.graphs.size() != 1)
        throw Error(ErrorKind::Config, "node classification expects exactly one graph, dataset has " +
                                           std::to_string(ds.graphs.size()));
}

}  // namespace

TuneResult tune_node_classification(const GnnModel& backbone, const LabeledDataset& ds, const FewShotSplit& split,
                                    PromptMethod method, const TuneConfig& cfg) {
    require_node_task(ds);
    TrainState state = init_state(backbone, ds, method, cfg);
    if (split.train_ids.empty()) throw Error(ErrorKind::Config, "training split is empty");
    const std::vector<std::size_t> labels = labels_of(ds, split.train_ids);
    const std::vector<std::uint32_t> rows = to_u32(split.train_ids);
    const PreparedGraph pg = prepare_graph(ds.graphs[0], backbone.kind(), backbone.gin_epsilon());

    // Without prompts the representations never change; compute them once.
    std::optional<Tensor> cached;
    if (state.prompts.tensors().empty()) cached = node_representations(backbone, state.prompts, pg, split.train_ids);

    TuneHistory history;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Tape tape;
        BoundPrompts bp(state.prompts, tape, true);
        Var reps;
        if (cached) {
            reps = tape.constant(*cached);
        } else {
            BoundModel bm = bind(backbone, tape, false);
            reps = gather_rows(prompted_forward(backbone, bm, bp, pg, tape), rows);
        }
        Var w = tape.parameter(state.head.weight);
        Var b = tape.parameter(state.head.bias);
        Var logits = classifier_forward(w, b, reps);
        Var loss = cross_entropy_with_logits(logits, labels);
        history.loss.push_back(loss.value().item());
        history.train_accuracy.push_back(static_cast<double>(count_correct(logits.value(), labels)) /
                                         static_cast<double>(labels.size()));
        state.step(bp, w, b, tape.backward(loss));
    }
    return TuneResult{std::move(state.prompts), std::move(state.head), std::move(history)};
}

TuneResult tune_graph_classification(const GnnModel& backbone, const LabeledDataset& ds, const FewShotSplit& split,
                                     PromptMethod method, const TuneConfig& cfg) {
    if (ds.task != TaskKind::Graph) throw Error(ErrorKind::Config, "dataset is not a graph-classification dataset");
    TrainState state = init_state(backbone, ds, method, cfg);
    if (split.train_ids.empty()) throw Error(ErrorKind::Config, "training split is empty");
    const std::vector<std::size_t> all_labels = ds.instance_labels();
    labels_of(ds, split.train_ids);  // range check

    std::optional<Tensor> cached;  // rows follow split.train_ids
    std::vector<std::size_t> slot(ds.graphs.size(), 0);
    if (state.prompts.tensors().empty()) {
        cached = graph_representations(backbone, state.prompts, ds, split.train_ids, cfg.readout, cfg.batch_size);
        for (std::size_t i = 0; i < split.train_ids.size(); ++i) slot[split.train_ids[i]] = i;
    }

    Rng order_rng = Rng::derive(cfg.seed, 3);
    std::vector<std::size_t> order = split.train_ids;
    TuneHistory history;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t hits = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const auto chunk = std::span<const std::size_t>(order).subspan(start, stop - start);
            std::vector<std::size_t> labels;
            for (std::size_t id : chunk) labels.push_back(all_labels[id]);

            std::unique_ptr<PreparedBatch> prepared;
            Tape tape;
            BoundPrompts bp(state.prompts, tape, true);
            Var reps;
            if (cached) {
                std::vector<std::uint32_t> picks;
                for (std::size_t id : chunk) picks.push_back(static_cast<std::uint32_t>(slot[id]));
                reps = gather_rows(tape.constant(*cached), picks);
            } else {
                prepared = prepare_batch(backbone, ds, chunk);
                BoundModel bm = bind(backbone, tape, false);
                Var h = prompted_forward(backbone, bm, bp, prepared->pg, tape);
                reps = readout(h, prepared->batch.membership, chunk.size(), cfg.readout);
            }
            Var w = tape.parameter(state.head.weight);
            Var b = tape.parameter(state.head.bias);
            Var logits = classifier_forward(w, b, reps);
            Var loss = cross_entropy_with_logits(logits, labels);
            loss_sum += loss.value().item() * static_cast<double>(chunk.size());
            hits += count_correct(logits.value(), labels);
            state.step(bp, w, b, tape.backward(loss));
        }
        history.loss.push_back(loss_sum / static_cast<double>(order.size()));
        history.train_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(order.size()));
    }
    return TuneResult{std::move(state.prompts), std::move(state.head), std::move(history)};
}

TuneResult tune(const GnnModel& backbone, const LabeledDataset& ds, const FewShotSplit& split, PromptMethod method,
                const TuneConfig& cfg) {
    return ds.task == TaskKind::Node ? tune_node_classification(backbone, ds, split, method, cfg)
                                     : tune_graph_classification(backbone, ds, split, method, cfg);
}

Tensor predict_logits(const GnnModel& backbone, const PromptSet& prompts, const LinearHead& head,
                      const LabeledDataset& ds, std::span<const std::size_t> ids, ReadoutKind readout,
                      std::size_t batch_size) {
    check_backbone_compatible(backbone, ds);
    if (batch_size == 0) throw Error(ErrorKind::Config, "batch size must be positive");
    labels_of(ds, ids);  // range check
    Tensor reps;
    if (ds.task == TaskKind::Node) {
        require_node_task(ds);
        const PreparedGraph pg = prepare_graph(ds.graphs[0], backbone.kind(), backbone.gin_epsilon());
        reps = node_representations(backbone, prompts, pg, ids);
    } else {
        reps = graph_representations(backbone, prompts, ds, ids, readout, batch_size);
    }
    Tape tape;
    return classifier_forward(tape.constant(head.weight), tape.constant(head.bias), tape.constant(std::move(reps)))
        .value();
}

double evaluate_accuracy(const GnnModel& backbone, const PromptSet& prompts, const LinearHead& head,
                         const LabeledDataset& ds, std::span<const std::size_t> ids, ReadoutKind readout,
                         std::size_t batch_size) {
    if (ids.empty()) throw Error(ErrorKind::Config, "cannot evaluate on an empty id list");
    const Tensor logits = predict_logits(backbone, prompts, head, ds, ids, readout, batch_size);
    const std::vector<std::size_t> labels = labels_of(ds, ids);
    return static_cast<double>(count_correct(logits, labels)) / static_cast<double>(ids.size());
}

}  // namespace edgeprompt
