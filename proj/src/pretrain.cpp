#include "edgeprompt/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <unordered_set>

#include "edgeprompt/error.hpp"
#include "edgeprompt/optim.hpp"

namespace edgeprompt {

const char* to_string(PretrainStrategy strategy) noexcept {
    switch (strategy) {
        case PretrainStrategy::GraphCL: return "graphcl";
        case PretrainStrategy::SimGRACE: return "simgrace";
        case PretrainStrategy::EpGppt: return "ep-gppt";
        case PretrainStrategy::EpGraphPrompt: return "ep-graphprompt";
    }
    return "?";
}

PretrainStrategy parse_strategy(std::string_view text) {
    for (PretrainStrategy s : {PretrainStrategy::GraphCL, PretrainStrategy::SimGRACE, PretrainStrategy::EpGppt,
                               PretrainStrategy::EpGraphPrompt})
        if (text == to_string(s)) return s;
    throw Error(ErrorKind::Config, "unknown strategy '" + std::string(text) +
                                       "' (expected graphcl|simgrace|ep-gppt|ep-graphprompt)");
}

void PretrainConfig::validate() const {
    if (epochs == 0) throw Error(ErrorKind::Config, "epochs must be positive");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::Config, "learning rate must be positive");
    if (batch_size == 0) throw Error(ErrorKind::Config, "batch size must be positive");
    if (!(aug_ratio >= 0.0 && aug_ratio <= 1.0)) throw Error(ErrorKind::Config, "augmentation ratio must lie in [0, 1]");
    if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) throw Error(ErrorKind::Config, "mask ratio must lie in [0, 1]");
    if (!(temperature > 0.0)) throw Error(ErrorKind::Config, "temperature must be positive");
    if (!(noise_scale >= 0.0)) throw Error(ErrorKind::Config, "noise scale must be non-negative");
    if (views_per_epoch < 2) throw Error(ErrorKind::Config, "views per epoch must be at least 2");
}

namespace {

using PairSet = std::unordered_set<std::uint64_t>;

std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

PairSet key_set(std::span<const EdgePair> edges) {
    PairSet keys;
    keys.reserve(edges.size() * 2);
    for (const auto& [a, b] : edges) keys.insert(pair_key(a, b));
    return keys;
}

// Up to `count` distinct unordered pairs of distinct nodes absent from
// `present`, uniformly without replacement.
std::vector<EdgePair> sample_non_edges(std::size_t n, const PairSet& present, std::size_t count, Rng& rng) {
    std::vector<EdgePair> out;
    if (n < 2 || count == 0) return out;
    const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    const std::uint64_t available = total - std::min<std::uint64_t>(total, present.size());
    count = static_cast<std::size_t>(std::min<std::uint64_t>(count, available));
    if (total <= (std::uint64_t{1} << 22) || available < total / 4) {
        std::vector<EdgePair> pool;
        pool.reserve(available);
        for (std::uint32_t i = 0; i < n; ++i)
            for (std::uint32_t j = i + 1; j < n; ++j)
                if (!present.contains(pair_key(i, j))) pool.emplace_back(i, j);
        for (std::size_t t = 0; t < count; ++t) std::swap(pool[t], pool[t + rng.index(pool.size() - t)]);
        pool.resize(count);
        return pool;
    }
    PairSet chosen;
    while (out.size() < count) {
        const auto i = static_cast<std::uint32_t>(rng.index(n));
        const auto j = static_cast<std::uint32_t>(rng.index(n));
        if (i == j) continue;
        const std::uint64_t key = pair_key(i, j);
        if (present.contains(key) || !chosen.insert(key).second) continue;
        out.emplace_back(std::min(i, j), std::max(i, j));
    }
    return out;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Everything a forward pass over one union needs to stay alive until
// backward() has run.
struct PreparedUnion {
    GraphBatch batch;
    PreparedGraph pg;
};

std::unique_ptr<PreparedUnion> prepare_union(const std::vector<const Graph*>& members, const GnnModel& model) {
    auto out = std::make_unique<PreparedUnion>();
    out->batch = disjoint_union(members);
    out->pg = prepare_graph(out->batch.graph, model.kind(), model.gin_epsilon());
    return out;
}

struct BoundHead {
    Var w1, b1, w2, b2;
};

Var project(const BoundHead& head, Var h) {
    return add_bias(matmul(relu(add_bias(matmul(h, head.w1), head.b1)), head.w2), head.b2);
}

// Graph-level embeddings of every member of `u`, projected.
Var embed(const GnnModel& model, const BoundModel& bm, const BoundHead& head, const PreparedUnion& u, Tape& tape) {
    Var h = model_forward(model, bm, u.pg, tape.constant(u.batch.graph.features()));
    return project(head, readout(h, u.batch.membership, u.batch.node_offsets.size(), ReadoutKind::Mean));
}

// Trainable backbone and projection head plus their optimizer.
struct ContrastiveState {
    GnnModel model;
    ProjectionHead head;
    Adam adam;

    std::vector<Tensor*> params() {
        std::vector<Tensor*> out;
        for (Tensor& t : model.parameters()) out.push_back(&t);
        for (Tensor* t : {&head.w1, &head.b1, &head.w2, &head.b2}) out.push_back(t);
        return out;
    }
};

BoundHead bind_head(ProjectionHead& head, Tape& tape) {
    return {tape.parameter(head.w1), tape.parameter(head.b1), tape.parameter(head.w2), tape.parameter(head.b2)};
}

void apply_step(Adam& adam, std::vector<Tensor*> params, const BoundModel& bm, const BoundHead* head,
                const Gradients& grads) {
    std::vector<Tensor> g;
    for (const Var& v : bm.params) g.push_back(grads.of(v));
    if (head)
        for (const Var& v : {head->w1, head->b1, head->w2, head->b2}) g.push_back(grads.of(v));
    adam.step(params, g);
}

// Batches of items for one epoch; a trailing singleton joins the previous
// batch so every batch has negatives.
std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> items, std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < items.size(); start += batch_size)
        out.emplace_back(items.begin() + start, items.begin() + std::min(items.size(), start + batch_size));
    if (out.size() > 1 && out.back().size() == 1) {
        out[out.size() - 2].push_back(out.back()[0]);
        out.pop_back();
    }
    return out;
}

AugmentKind pick_augmentation(Rng& rng) { return rng.bernoulli(0.5) ? AugmentKind::NodeDrop : AugmentKind::EdgePerturb; }

// Contrastive items for one epoch: shuffled graph ids on graph datasets,
// repeated copies of the single graph on node datasets.
std::vector<std::size_t> epoch_items(const LabeledDataset& ds, const PretrainConfig& cfg, Rng& rng) {
    if (ds.task == TaskKind::Node) return std::vector<std::size_t>(cfg.views_per_epoch, 0);
    std::vector<std::size_t> items(ds.graphs.size());
    for (std::size_t i = 0; i < items.size(); ++i) items[i] = i;
    rng.shuffle(items);
    return items;
}

void require_contrastive_dataset(const LabeledDataset& ds, const GnnModel& init) {
    if (ds.graphs.empty()) throw Error(ErrorKind::Config, "cannot pre-train on an empty dataset");
    if (ds.task == TaskKind::Graph && ds.graphs.size() < 2)
        throw Error(ErrorKind::Config, "contrastive pre-training needs at least 2 graphs");
    if (ds.feature_dim() != init.input_dim())
        throw Error(ErrorKind::Config, "model expects " + std::to_string(init.input_dim()) +
                                           " input features, dataset has " + std::to_string(ds.feature_dim()));
}

Checkpoint make_checkpoint(GnnModel model, const PretrainConfig& cfg, const std::vector<double>& history) {
    Checkpoint ckpt;
    ckpt.model = std::move(model);
    ckpt.strategy = to_string(cfg.strategy);
    ckpt.seed = cfg.seed;
    ckpt.epochs = cfg.epochs;
    ckpt.metadata["learning_rate"] = format_double(cfg.learning_rate);
    ckpt.metadata["batch_size"] = std::to_string(cfg.batch_size);
    ckpt.metadata["final_loss"] = history.empty() ? "nan" : format_double(history.back());
    switch (cfg.strategy) {
        case PretrainStrategy::GraphCL:
            ckpt.metadata["aug_ratio"] = format_double(cfg.aug_ratio);
            ckpt.metadata["temperature"] = format_double(cfg.temperature);
            break;
        case PretrainStrategy::SimGRACE:
            ckpt.metadata["noise_scale"] = format_double(cfg.noise_scale);
            ckpt.metadata["temperature"] = format_double(cfg.temperature);
            break;
        case PretrainStrategy::EpGppt: ckpt.metadata["mask_ratio"] = format_double(cfg.mask_ratio); break;
        case PretrainStrategy::EpGraphPrompt: ckpt.metadata["temperature"] = format_double(cfg.temperature); break;
    }
    return ckpt;
}

}  // namespace

Graph augment_graph(const Graph& g, AugmentKind kind, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error(ErrorKind::Range, "augmentation ratio must lie in [0, 1]");
    Rng rng(seed);
    const std::size_t n = g.num_nodes();
    if (kind == AugmentKind::NodeDrop) {
        std::size_t drop = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
        if (n > 0) drop = std::min(drop, n - 1);
        if (drop == 0) return g;
        std::vector<std::uint32_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
        rng.shuffle(order);
        std::vector<bool> keep(n, true);
        for (std::size_t t = 0; t < drop; ++t) keep[order[t]] = false;
        std::vector<std::uint32_t> new_id(n, 0);
        std::size_t kept = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (keep[i]) new_id[i] = static_cast<std::uint32_t>(kept++);
        Tensor features(kept, g.feature_dim());
        for (std::size_t i = 0; i < n; ++i)
            if (keep[i]) std::copy_n(g.features().row(i), g.feature_dim(), features.row(new_id[i]));
        std::vector<EdgePair> edges;
        for (const auto& [a, b] : g.edge_list())
            if (keep[a] && keep[b]) edges.emplace_back(new_id[a], new_id[b]);
        return Graph::from_edges(kept, edges, std::move(features));
    }
    std::vector<EdgePair> edges = g.edge_list();
    const std::size_t k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(edges.size())));
    if (k == 0) return g;
    rng.shuffle(edges);
    std::vector<EdgePair> kept(edges.begin() + static_cast<std::ptrdiff_t>(k), edges.end());
    const std::vector<EdgePair> added = sample_non_edges(n, key_set(kept), k, rng);
    kept.insert(kept.end(), added.begin(), added.end());
    return Graph::from_edges(n, kept, g.features());
}

Var ntxent_loss(Var z1, Var z2, double temperature) {
    if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
        throw Error(ErrorKind::Shape, "ntxent views " + z1.value().shape_string() + " and " +
                                          z2.value().shape_string() + " differ");
    const std::size_t b = z1.rows();
    if (b < 2) throw Error(ErrorKind::Config, "ntxent needs a batch of at least 2 (got " + std::to_string(b) + ")");
    if (!(temperature > 0.0)) throw Error(ErrorKind::Config, "temperature must be positive");
    Var z = l2_normalize_rows(concat_rows(z1, z2));
    Var sim = scale(matmul_nt(z, z), 1.0 / temperature);
    // A row is never its own negative.
    Tensor mask(2 * b, 2 * b);
    for (std::size_t i = 0; i < 2 * b; ++i) mask(i, i) = -1e30;
    Var logits = add(sim, z.tape()->constant(std::move(mask)));
    std::vector<std::size_t> labels(2 * b);
    for (std::size_t i = 0; i < b; ++i) {
        labels[i] = i + b;
        labels[i + b] = i;
    }
    return cross_entropy_with_logits(logits, labels);
}

ProjectionHead ProjectionHead::create(std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(2 * dim));
    ProjectionHead h{Tensor(dim, dim), Tensor(1, dim), Tensor(dim, dim), Tensor(1, dim)};
    for (Tensor* w : {&h.w1, &h.w2})
        for (double& v : w->values()) v = rng.uniform(-bound, bound);
    return h;
}

GnnModel perturb_weights(const GnnModel& model, double scale, Rng& rng) {
    GnnModel out = model;
    for (Tensor& t : out.parameters()) {
        const double n = static_cast<double>(t.size());
        double mean = 0.0;
        for (double v : t.values()) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : t.values()) var += (v - mean) * (v - mean);
        const double sd = scale * std::sqrt(var / n);
        for (double& v : t.values()) v += sd * rng.normal();
    }
    return out;
}

PretrainResult pretrain_graphcl(const GnnModel& init, const LabeledDataset& ds, const PretrainConfig& cfg) {
    cfg.validate();
    require_contrastive_dataset(ds, init);
    ContrastiveState st{init, ProjectionHead::create(init.output_dim(), Rng::derive(cfg.seed, 10).next()),
                        Adam(AdamOptions{.learning_rate = cfg.learning_rate})};
    Rng rng = Rng::derive(cfg.seed, 11);
    std::vector<double> history;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t count = 0;
        for (const auto& batch : make_batches(epoch_items(ds, cfg, rng), cfg.batch_size)) {
            std::vector<Graph> views1, views2;
            for (std::size_t id : batch) {
                const Graph& g = ds.graphs[id];
                const AugmentKind k1 = pick_augmentation(rng);
                views1.push_back(augment_graph(g, k1, cfg.aug_ratio, rng.next()));
                const AugmentKind k2 = pick_augmentation(rng);
                views2.push_back(augment_graph(g, k2, cfg.aug_ratio, rng.next()));
            }
            std::vector<const Graph*> m1, m2;
            for (std::size_t i = 0; i < batch.size(); ++i) {
                m1.push_back(&views1[i]);
                m2.push_back(&views2[i]);
            }
            auto u1 = prepare_union(m1, st.model);
            auto u2 = prepare_union(m2, st.model);
            Tape tape;
            BoundModel bm = bind(st.model, tape, true);
            BoundHead head = bind_head(st.head, tape);
            Var loss = ntxent_loss(embed(st.model, bm, head, *u1, tape), embed(st.model, bm, head, *u2, tape),
                                   cfg.temperature);
            loss_sum += loss.value().item() * static_cast<double>(batch.size());
            count += batch.size();
            apply_step(st.adam, st.params(), bm, &head, tape.backward(loss));
        }
        history.push_back(loss_sum / static_cast<double>(count));
    }
    return {make_checkpoint(std::move(st.model), cfg, history), std::move(history)};
}

PretrainResult pretrain_simgrace(const GnnModel& init, const LabeledDataset& ds, const PretrainConfig& cfg) {
    cfg.validate();
    require_contrastive_dataset(ds, init);
    ContrastiveState st{init, ProjectionHead::create(init.output_dim(), Rng::derive(cfg.seed, 10).next()),
                        Adam(AdamOptions{.learning_rate = cfg.learning_rate})};
    Rng rng = Rng::derive(cfg.seed, 11);
    Rng noise = Rng::derive(cfg.seed, 12);
    std::vector<double> history;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t count = 0;
        for (const auto& batch : make_batches(epoch_items(ds, cfg, rng), cfg.batch_size)) {
            // A single graph gives identical items; augment them so the batch
            // has distinct negatives.
            std::vector<Graph> views;
            std::vector<const Graph*> members;
            if (ds.task == TaskKind::Node) {
                for (std::size_t id : batch)
                    views.push_back(augment_graph(ds.graphs[id], pick_augmentation(rng), cfg.aug_ratio, rng.next()));
                for (const Graph& v : views) members.push_back(&v);
            } else {
                for (std::size_t id : batch) members.push_back(&ds.graphs[id]);
            }
            auto u = prepare_union(members, st.model);
            const GnnModel perturbed = perturb_weights(st.model, cfg.noise_scale, noise);
            Tape tape;
            BoundModel bm = bind(st.model, tape, true);
            BoundModel bp = bind(perturbed, tape, false);
            BoundHead head = bind_head(st.head, tape);
            Var loss = ntxent_loss(embed(st.model, bm, head, *u, tape), embed(perturbed, bp, head, *u, tape),
                                   cfg.temperature);
            loss_sum += loss.value().item() * static_cast<double>(batch.size());
            count += batch.size();
            apply_step(st.adam, st.params(), bm, &head, tape.backward(loss));
        }
        history.push_back(loss_sum / static_cast<double>(count));
    }
    return {make_checkpoint(std::move(st.model), cfg, history), std::move(history)};
}

PretrainResult pretrain_ep_gppt(const GnnModel& init, const Graph& g, const PretrainConfig& cfg) {
    cfg.validate();
    if (g.num_edges() == 0) throw Error(ErrorKind::Config, "link pre-training needs a graph with edges");
    if (g.feature_dim() != init.input_dim())
        throw Error(ErrorKind::Config, "model expects " + std::to_string(init.input_dim()) +
                                           " input features, graph has " + std::to_string(g.feature_dim()));
    GnnModel model = init;
    Adam adam(AdamOptions{.learning_rate = cfg.learning_rate});
    Rng rng = Rng::derive(cfg.seed, 11);
    const std::vector<EdgePair> all_edges = g.edge_list();
    const PairSet present = key_set(all_edges);
    const std::size_t n_mask =
        static_cast<std::size_t>(std::floor(cfg.mask_ratio * static_cast<double>(all_edges.size())));

    std::vector<double> history;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<EdgePair> edges = all_edges;
        rng.shuffle(edges);
        std::vector<EdgePair> positives;
        Graph message_graph;
        if (n_mask == 0) {
            positives = all_edges;
            message_graph = g;
        } else {
            positives.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_mask));
            std::vector<EdgePair> kept(edges.begin() + static_cast<std::ptrdiff_t>(n_mask), edges.end());
            message_graph = Graph::from_edges(g.num_nodes(), kept, g.features());
        }
        const std::vector<EdgePair> negatives = sample_non_edges(g.num_nodes(), present, positives.size(), rng);
        std::vector<std::uint32_t> src, dst;
        std::vector<double> targets;
        for (const auto& [a, b] : positives) {
            src.push_back(a);
            dst.push_back(b);
            targets.push_back(1.0);
        }
        for (const auto& [a, b] : negatives) {
            src.push_back(a);
            dst.push_back(b);
            targets.push_back(0.0);
        }
        const PreparedGraph pg = prepare_graph(message_graph, model.kind(), model.gin_epsilon());
        Tape tape;
        BoundModel bm = bind(model, tape, true);
        Var h = model_forward(model, bm, pg, tape.constant(message_graph.features()));
        Var logits = sum_cols(mul(gather_rows(h, src), gather_rows(h, dst)));
        Var loss = bce_with_logits(logits, targets);
        history.push_back(loss.value().item());
        std::vector<Tensor*> params;
        for (Tensor& t : model.parameters()) params.push_back(&t);
        apply_step(adam, params, bm, nullptr, tape.backward(loss));
    }
    Checkpoint ckpt = make_checkpoint(std::move(model), cfg, history);
    // Masking only ever touched per-epoch message graphs; the stored
    // structure is the full graph.
    ckpt.metadata["masked_edges_per_epoch"] = std::to_string(n_mask);
    return {std::move(ckpt), std::move(history)};
}

PretrainResult pretrain_ep_graphprompt(const GnnModel& init, const Graph& g, const PretrainConfig& cfg) {
    cfg.validate();
    if (g.feature_dim() != init.input_dim())
        throw Error(ErrorKind::Config, "model expects " + std::to_string(init.input_dim()) +
                                           " input features, graph has " + std::to_string(g.feature_dim()));
    GnnModel model = init;
    Adam adam(AdamOptions{.learning_rate = cfg.learning_rate});
    Rng rng = Rng::derive(cfg.seed, 11);
    const std::size_t n = g.num_nodes();
    const PreparedGraph pg = prepare_graph(g, model.kind(), model.gin_epsilon());

    std::vector<double> history;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::uint32_t> anchors, pos, neg;
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::size_t deg = g.degree(i);
            if (deg == 0 || deg + 1 >= n) continue;  // no neighbour or no non-neighbour
            anchors.push_back(i);
            pos.push_back(g.targets()[g.offsets()[i] + rng.index(deg)]);
            const std::size_t non = n - 1 - deg;
            if (non * 4 < n) {
                std::vector<std::uint32_t> pool;
                for (std::uint32_t j = 0; j < n; ++j)
                    if (j != i && !g.has_edge(i, j)) pool.push_back(j);
                neg.push_back(pool[rng.index(pool.size())]);
            } else {
                std::uint32_t j;
                do {
                    j = static_cast<std::uint32_t>(rng.index(n));
                } while (j == i || g.has_edge(i, j));
                neg.push_back(j);
            }
        }
        if (anchors.empty()) {
            history.push_back(0.0);
            continue;
        }
        Tape tape;
        BoundModel bm = bind(model, tape, true);
        Var z = l2_normalize_rows(model_forward(model, bm, pg, tape.constant(g.features())));
        Var za = gather_rows(z, anchors);
        const double inv_t = 1.0 / cfg.temperature;
        Var sp = scale(sum_cols(mul(za, gather_rows(z, pos))), inv_t);
        Var sn = scale(sum_cols(mul(za, gather_rows(z, neg))), inv_t);
        const std::vector<std::size_t> labels(anchors.size(), 0);
        Var loss = cross_entropy_with_logits(concat_cols(sp, sn), labels);
        history.push_back(loss.value().item());
        std::vector<Tensor*> params;
        for (Tensor& t : model.parameters()) params.push_back(&t);
        apply_step(adam, params, bm, nullptr, tape.backward(loss));
    }
    return {make_checkpoint(std::move(model), cfg, history), std::move(history)};
}

PretrainResult pretrain(const GnnModel& init, const LabeledDataset& ds, const PretrainConfig& cfg) {
    if (ds.graphs.empty()) throw Error(ErrorKind::Config, "cannot pre-train on an empty dataset");
    switch (cfg.strategy) {
        case PretrainStrategy::GraphCL: return pretrain_graphcl(init, ds, cfg);
        case PretrainStrategy::SimGRACE: return pretrain_simgrace(init, ds, cfg);
        default: break;
    }
    std::vector<const Graph*> members;
    for (const Graph& g : ds.graphs) members.push_back(&g);
    const Graph whole = members.size() == 1 ? ds.graphs[0] : disjoint_union(members).graph;
    return cfg.strategy == PretrainStrategy::EpGppt ? pretrain_ep_gppt(init, whole, cfg)
                                                    : pretrain_ep_graphprompt(init, whole, cfg);
}

}  // namespace edgeprompt
