#include <doctest.h>

#include <cmath>
#include <numeric>

#include "edgeprompt/checkpoint.hpp"
#include "edgeprompt/pretrain.hpp"
#include "helpers.hpp"

using namespace edgeprompt;
using testing::kind_of;
using testing::random_graph;
using testing::random_tensor;

namespace {

LabeledDataset graph_dataset(std::size_t count, std::size_t nodes, std::size_t dim, std::uint64_t seed) {
    LabeledDataset ds;
    ds.task = TaskKind::Graph;
    ds.num_classes = 2;
    for (std::size_t k = 0; k < count; ++k) {
        const bool dense = k % 2 == 1;
        CsbmParams params{std::vector<double>(dim, 0.5), std::vector<double>(dim, -0.5), dense ? 0.8 : 0.2,
                          dense ? 0.2 : 0.8, nodes / 2};
        ds.graphs.push_back(csbm_generate(params, seed + k).graph);
        ds.graph_labels.push_back(k % 2);
    }
    return ds;
}

LabeledDataset node_dataset(std::size_t n_per_class, std::uint64_t seed) {
    CsbmSample s = csbm_generate({{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, 0.3, 0.05, n_per_class}, seed);
    LabeledDataset ds;
    ds.num_classes = 2;
    ds.graphs.push_back(std::move(s.graph));
    ds.node_labels.push_back(std::move(s.labels));
    return ds;
}

double cosine(const double* a, const double* b, std::size_t d) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t k = 0; k < d; ++k) {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    return ab / std::sqrt(aa * bb);
}

// NT-Xent written directly from its definition over the 2B stacked rows.
double brute_ntxent(const Tensor& z1, const Tensor& z2, double tau) {
    const std::size_t b = z1.rows(), d = z1.cols();
    auto row = [&](std::size_t i) { return i < b ? z1.row(i) : z2.row(i - b); };
    double total = 0.0;
    for (std::size_t i = 0; i < 2 * b; ++i) {
        const std::size_t pos = i < b ? i + b : i - b;
        double denom = 0.0;
        for (std::size_t k = 0; k < 2 * b; ++k)
            if (k != i) denom += std::exp(cosine(row(i), row(k), d) / tau);
        total += -std::log(std::exp(cosine(row(i), row(pos), d) / tau) / denom);
    }
    return total / static_cast<double>(2 * b);
}

std::string encode_bare(const GnnModel& m) {
    Checkpoint c;
    c.model = m;
    return encode_checkpoint(c);
}

double mean_of(const std::vector<double>& v, std::size_t begin, std::size_t end) {
    return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(end),
                           0.0) /
           static_cast<double>(end - begin);
}

PretrainConfig small_config(PretrainStrategy s, std::size_t epochs) {
    PretrainConfig cfg;
    cfg.strategy = s;
    cfg.epochs = epochs;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 8;
    cfg.seed = 3;
    return cfg;
}

}  // namespace

TEST_CASE("augment_graph boundaries") {
    Rng rng(1);
    const Graph g = random_graph(10, 3, 0.4, rng);
    for (AugmentKind kind : {AugmentKind::NodeDrop, AugmentKind::EdgePerturb}) {
        const Graph same = augment_graph(g, kind, 0.0, 5);
        CHECK(same.targets() == g.targets());
        CHECK(bitwise_equal(same.features(), g.features()));
    }
    const Graph one = augment_graph(g, AugmentKind::NodeDrop, 1.0, 5);
    CHECK(one.num_nodes() == 1);
    CHECK(one.num_edges() == 0);
    CHECK(kind_of([&] { augment_graph(g, AugmentKind::NodeDrop, 1.5, 5); }) == ErrorKind::Range);
}

TEST_CASE("augmentations keep a valid CSR and the stated counts") {
    Rng rng(2);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 2 + static_cast<std::size_t>(rep % 15);
        const Graph g = random_graph(n, 2, 0.3, rng);
        const double ratio = 0.1 * static_cast<double>(rep % 10);
        const Graph dropped = augment_graph(g, AugmentKind::NodeDrop, ratio, static_cast<std::uint64_t>(rep));
        dropped.validate();
        const auto removed = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
        CHECK(dropped.num_nodes() == std::max<std::size_t>(1, n - removed));
        const Graph perturbed = augment_graph(g, AugmentKind::EdgePerturb, ratio, static_cast<std::uint64_t>(rep));
        perturbed.validate();
        CHECK(perturbed.num_edges() == g.num_edges());
        CHECK(bitwise_equal(perturbed.features(), g.features()));
    }
}

TEST_CASE("node-drop keeps surviving features in their original order") {
    const Graph g = Graph::from_edges(4, std::vector<EdgePair>{{0, 1}, {1, 2}, {2, 3}},
                                      Tensor::from_rows({{0}, {1}, {2}, {3}}));
    const Graph d = augment_graph(g, AugmentKind::NodeDrop, 0.5, 9);
    REQUIRE(d.num_nodes() == 2);
    CHECK(d.features()(0, 0) < d.features()(1, 0));
    const bool adjacent = d.features()(1, 0) - d.features()(0, 0) == 1.0;
    CHECK(d.has_edge(0, 1) == adjacent);
}

TEST_CASE("ntxent examples") {
    Tape t;
    const Tensor eye = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    CHECK(ntxent_loss(t.constant(eye), t.constant(eye), 0.05).value().item() < 1e-6);

    Rng rng(4);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t b = 2 + static_cast<std::size_t>(rep % 4);
        const Tensor z1 = random_tensor(b, 3, rng), z2 = random_tensor(b, 3, rng);
        const double tau = 0.2 + 0.1 * rep;
        const double got = ntxent_loss(t.constant(z1), t.constant(z2), tau).value().item();
        CHECK(std::abs(got - brute_ntxent(z1, z2, tau)) < 1e-12);
        Tensor s1 = z1, s2 = z2;
        for (double& v : s1.values()) v *= 3.7;
        for (double& v : s2.values()) v *= 3.7;
        CHECK(std::abs(ntxent_loss(t.constant(s1), t.constant(s2), tau).value().item() - got) < 1e-12);
    }
    CHECK(kind_of([&] { ntxent_loss(t.constant(Tensor(1, 3, 1.0)), t.constant(Tensor(1, 3, 1.0)), 0.5); }) ==
          ErrorKind::Config);
}

TEST_CASE("weight perturbation leaves the source model untouched") {
    const auto model = GnnModel::create(BackboneKind::Gin, {3, 8, 8}, 4);
    const std::string before = encode_bare(model);
    Rng rng(5);
    const GnnModel noisy = perturb_weights(model, 0.1, rng);
    CHECK(encode_bare(model) == before);
    double moved = 0.0;
    for (std::size_t k = 0; k < model.parameters().size(); ++k)
        moved += max_abs_diff(model.parameters()[k], noisy.parameters()[k]);
    CHECK(moved > 0.0);
    Rng rng0(5);
    const GnnModel same = perturb_weights(model, 0.0, rng0);
    for (std::size_t k = 0; k < model.parameters().size(); ++k)
        CHECK(bitwise_equal(model.parameters()[k], same.parameters()[k]));
}

TEST_CASE("GraphCL smoke run on four tiny graphs") {
    const auto ds = graph_dataset(4, 6, 3, 1);
    const auto init = GnnModel::create(BackboneKind::Gin, {3, 8, 8}, 1);
    const auto r = pretrain_graphcl(init, ds, small_config(PretrainStrategy::GraphCL, 1));
    REQUIRE(r.loss_history.size() == 1);
    CHECK(std::isfinite(r.loss_history[0]));
    CHECK(r.checkpoint.strategy == "graphcl");
}

TEST_CASE("contrastive losses trend downward on CSBM graphs") {
    const auto ds = graph_dataset(32, 12, 4, 7);
    const auto init = GnnModel::create(BackboneKind::Gin, {4, 16, 16}, 2);
    for (PretrainStrategy s : {PretrainStrategy::GraphCL, PretrainStrategy::SimGRACE}) {
        const auto r = pretrain(init, ds, small_config(s, 50));
        REQUIRE(r.loss_history.size() == 50);
        CHECK(mean_of(r.loss_history, 45, 50) < mean_of(r.loss_history, 0, 5));
    }
}

TEST_CASE("every strategy is deterministic under a fixed seed") {
    const auto graphs = graph_dataset(6, 8, 3, 3);
    const auto nodes = node_dataset(15, 3);
    for (PretrainStrategy s : {PretrainStrategy::GraphCL, PretrainStrategy::SimGRACE, PretrainStrategy::EpGppt,
                               PretrainStrategy::EpGraphPrompt}) {
        for (const LabeledDataset* ds : {&graphs, &nodes}) {
            const auto kind = ds->task == TaskKind::Graph ? BackboneKind::Gin : BackboneKind::Gcn;
            const auto init = GnnModel::create(kind, {3, 8, 8}, 6);
            const auto cfg = small_config(s, 3);
            const auto a = pretrain(init, *ds, cfg);
            const auto b = pretrain(init, *ds, cfg);
            CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));
            CHECK(a.loss_history == b.loss_history);
            CHECK(encode_checkpoint(a.checkpoint) != encode_bare(init));
        }
    }
}

TEST_CASE("EP-GPPT separates linked from unlinked pairs") {
    // Disjoint 2-cliques with random features: each node's partner is its only link.
    Rng rng(8);
    const std::size_t pairs = 20;
    std::vector<EdgePair> edges;
    for (std::uint32_t k = 0; k < pairs; ++k) edges.emplace_back(2 * k, 2 * k + 1);
    const Graph g = Graph::from_edges(2 * pairs, edges, random_tensor(2 * pairs, 4, rng));
    const auto init = GnnModel::create(BackboneKind::Gcn, {4, 16, 16}, 8);
    auto cfg = small_config(PretrainStrategy::EpGppt, 100);
    cfg.mask_ratio = 0.0;
    const auto r = pretrain_ep_gppt(init, g, cfg);

    Tape t;
    const PreparedGraph pg = prepare_graph(g, BackboneKind::Gcn);
    const Tensor h = model_forward(r.checkpoint.model, bind(r.checkpoint.model, t, false), pg,
                                   t.constant(g.features()), PromptProvider{})
                         .value();
    auto score = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t d = 0; d < h.cols(); ++d) s += h(i, d) * h(j, d);
        return 1.0 / (1.0 + std::exp(-s));
    };
    double pos = 0.0, neg = 0.0;
    std::size_t negatives = 0;
    for (std::size_t k = 0; k < pairs; ++k) pos += score(2 * k, 2 * k + 1);
    for (std::size_t i = 0; i < 2 * pairs; ++i)
        for (std::size_t j = i + 1; j < 2 * pairs; ++j)
            if (!g.has_edge(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j))) {
                neg += score(i, j);
                ++negatives;
            }
    CHECK(pos / static_cast<double>(pairs) > neg / static_cast<double>(negatives));
    CHECK(mean_of(r.loss_history, 95, 100) < mean_of(r.loss_history, 0, 5));

    const Graph edgeless = Graph::from_edges(3, {}, Tensor(3, 4));
    CHECK(kind_of([&] { pretrain_ep_gppt(init, edgeless, cfg); }) == ErrorKind::Config);
}

TEST_CASE("EP-GraphPrompt learns on a structured graph and tolerates complete graphs") {
    const auto ds = node_dataset(30, 4);
    const auto init = GnnModel::create(BackboneKind::Gcn, {3, 16, 16}, 9);
    const auto r = pretrain_ep_graphprompt(init, ds.graphs[0], small_config(PretrainStrategy::EpGraphPrompt, 60));
    CHECK(mean_of(r.loss_history, 55, 60) < mean_of(r.loss_history, 0, 5));

    std::vector<EdgePair> all;
    for (std::uint32_t i = 0; i < 5; ++i)
        for (std::uint32_t j = i + 1; j < 5; ++j) all.emplace_back(i, j);
    Rng rng(1);
    const Graph complete = Graph::from_edges(5, all, random_tensor(5, 3, rng));
    const auto c = pretrain_ep_graphprompt(init, complete, small_config(PretrainStrategy::EpGraphPrompt, 2));
    for (double l : c.loss_history) CHECK(std::isfinite(l));
}

TEST_CASE("pretraining config validation") {
    PretrainConfig cfg;
    cfg.temperature = 0.0;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::Config);
    cfg = PretrainConfig{};
    cfg.aug_ratio = 1.2;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::Config);
    CHECK(kind_of([] { parse_strategy("dgi"); }) == ErrorKind::Config);
    LabeledDataset empty;
    const auto init = GnnModel::create(BackboneKind::Gin, {3, 4}, 1);
    CHECK(kind_of([&] { pretrain(init, empty, PretrainConfig{}); }) == ErrorKind::Config);
}
