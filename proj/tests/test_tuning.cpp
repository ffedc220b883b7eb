#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "edgeprompt/checkpoint.hpp"
#include "edgeprompt/gradcheck.hpp"
#include "edgeprompt/prompt.hpp"
#include "edgeprompt/tuning.hpp"
#include "helpers.hpp"

using namespace edgeprompt;
using namespace testing;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

}  // namespace

TEST_CASE("materialize_edgeprompt broadcasts one row per CSR entry") {
    const Graph g =
        Graph::from_edges(4, std::vector<EdgePair>{{0, 1}, {1, 2}, {2, 3}}, Tensor(4, 2));
    Tape t;
    const std::vector<Var> shared{t.constant(Tensor::from_rows({{1.5, -2.0}})), t.constant(Tensor(1, 3))};
    const auto bundle = materialize_edgeprompt(shared, g);
    REQUIRE(bundle.size() == 2);
    const Tensor& rows = bundle[0]->rows.value();
    CHECK(rows.rows() == 6);
    for (std::size_t e = 0; e < 6; ++e) {
        CHECK(rows(e, 0) == 1.5);
        CHECK(rows(e, 1) == -2.0);
    }
    CHECK(bitwise_equal(bundle[1]->rows.value(), Tensor(6, 3)));
}

TEST_CASE("score_vectors examples") {
    Rng rng(7);
    const Graph g = random_graph(6, 3, 0.5, rng);
    Tape t;
    const Var h = t.constant(g.features());
    const Tensor one = score_vectors(t.constant(random_tensor(6, 1, rng)), h, g, 0.2).value();
    for (double v : one.values()) CHECK(v == 1.0);
    const Tensor uniform = score_vectors(t.constant(Tensor(6, 4)), h, g, 0.2).value();
    for (double v : uniform.values()) CHECK(v == 0.25);

    const Tensor w = random_tensor(6, 4, rng);
    const Tensor s = score_vectors(t.constant(w), h, g, 0.2).value();
    const Tensor& x = g.features();
    for (std::size_t e = 0; e < g.num_entries(); ++e) {
        const std::size_t i = g.entry_rows()[e], j = g.targets()[e];
        double logits[4], z = 0.0;
        for (std::size_t m = 0; m < 4; ++m) {
            double a = 0.0;
            for (std::size_t d = 0; d < 3; ++d) a += x(i, d) * w(d, m) + x(j, d) * w(3 + d, m);
            logits[m] = std::exp(a > 0 ? a : 0.2 * a);
            z += logits[m];
        }
        double total = 0.0;
        for (std::size_t m = 0; m < 4; ++m) {
            CHECK(std::abs(s(e, m) - logits[m] / z) < 1e-12);
            CHECK(s(e, m) >= 0.0);
            total += s(e, m);
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
    }
    CHECK(kind_of([&] { score_vectors(t.constant(Tensor(5, 4)), h, g, 0.2); }) == ErrorKind::Shape);
}

TEST_CASE("materialize_edgeprompt_plus examples") {
    Rng rng(8);
    const Graph g = random_graph(7, 3, 0.5, rng);
    Tape t;
    const Var h = t.constant(g.features());

    const Tensor p1 = random_tensor(1, 3, rng);
    const Tensor single = materialize_edgeprompt_plus(t.constant(p1), t.constant(random_tensor(6, 1, rng)), h, g, 0.2)
                              .value();
    for (std::size_t e = 0; e < single.rows(); ++e)
        for (std::size_t d = 0; d < 3; ++d) CHECK(single(e, d) == p1(0, d));

    Tensor same(4, 3);
    for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t d = 0; d < 3; ++d) same(m, d) = p1(0, d);
    const Tensor flat =
        materialize_edgeprompt_plus(t.constant(same), t.constant(random_tensor(6, 4, rng)), h, g, 0.2).value();
    for (std::size_t e = 0; e < flat.rows(); ++e)
        for (std::size_t d = 0; d < 3; ++d) CHECK(std::abs(flat(e, d) - p1(0, d)) < 1e-15);

    const Tensor anchors = random_tensor(4, 3, rng), w = random_tensor(6, 4, rng);
    const Tensor rows = materialize_edgeprompt_plus(t.constant(anchors), t.constant(w), h, g, 0.2).value();
    const Tensor s = score_vectors(t.constant(w), h, g, 0.2).value();
    for (std::size_t e = 0; e < rows.rows(); ++e)
        for (std::size_t d = 0; d < 3; ++d) {
            double want = 0.0, lo = anchors(0, d), hi = anchors(0, d);
            for (std::size_t m = 0; m < 4; ++m) {
                want += s(e, m) * anchors(m, d);
                lo = std::min(lo, anchors(m, d));
                hi = std::max(hi, anchors(m, d));
            }
            CHECK(std::abs(rows(e, d) - want) < 1e-12);
            CHECK(rows(e, d) >= lo - 1e-15);
            CHECK(rows(e, d) <= hi + 1e-15);
        }
}

TEST_CASE("fused aggregated scores equal the dense edge prompts they summarize") {
    Rng rng(9);
    for (BackboneKind kind : {BackboneKind::Gcn, BackboneKind::Gin}) {
        const Graph g = random_graph(9, 3, 0.4, rng);
        const PreparedGraph pg = prepare_graph(g, kind);
        Tape t;
        const Var h = t.constant(g.features());
        const Var anchors = t.constant(random_tensor(5, 3, rng)), w = t.constant(random_tensor(6, 5, rng));
        const Tensor dense =
            aggregate_prompts(pg, LayerPrompt::dense(materialize_edgeprompt_plus(anchors, w, h, g, 0.2)), 3).value();
        const Tensor fused =
            aggregate_prompts(pg, LayerPrompt::aggregated(aggregated_scores(w, h, pg, 0.2), anchors), 3).value();
        CHECK(max_abs_diff(dense, fused) < 1e-13);
    }
}

TEST_CASE("node feature prompt examples") {
    Rng rng(10);
    Tape t;
    const Tensor x = random_tensor(5, 3, rng);
    CHECK(bitwise_equal(apply_gpf(t.constant(x), t.constant(Tensor(1, 3))).value(), x));
    const Tensor p = random_tensor(1, 3, rng);
    const Tensor gpf = apply_gpf(t.constant(x), t.constant(p)).value();
    const Tensor plus = apply_gpf_plus(t.constant(x), t.constant(p), t.constant(random_tensor(3, 1, rng))).value();
    CHECK(max_abs_diff(gpf, plus) == 0.0);
    CHECK(kind_of([&] { apply_gpf(t.constant(x), t.constant(Tensor(1, 2))); }) == ErrorKind::Shape);
}

TEST_CASE("prompt set shapes follow the backbone widths") {
    const auto gcn = GnnModel::create(BackboneKind::Gcn, {3, 8, 4}, 1);
    const auto ep = PromptSet::init(PromptMethod::EdgePrompt, gcn, 0, 1);
    CHECK(ep.names() == std::vector<std::string>{"layers.0.prompt", "layers.1.prompt"});
    CHECK(ep.tensor("layers.1.prompt").cols() == 8);
    const auto plus = PromptSet::init(PromptMethod::EdgePromptPlus, gcn, 5, 1);
    CHECK(plus.tensor("layers.1.anchors").rows() == 5);
    CHECK(plus.tensor("layers.1.anchors").cols() == 8);
    CHECK(plus.tensor("layers.1.score_weight").rows() == 16);
    for (double v : plus.tensor("layers.0.anchors").values()) CHECK(v == 0.0);
    for (double v : plus.tensor("layers.0.score_weight").values()) CHECK(std::abs(v) <= 0.1);
    CHECK(PromptSet::init(PromptMethod::GpfPlus, gcn, 5, 1).tensor("score").rows() == 3);
    CHECK(PromptSet::init(PromptMethod::ClassifierOnly, gcn, 0, 1).tensors().empty());
    CHECK(kind_of([&] { PromptSet::init(PromptMethod::EdgePromptPlus, gcn, 0, 1); }) == ErrorKind::Config);
    CHECK(kind_of([] { parse_method("all-in-one"); }) == ErrorKind::Config);
}

TEST_CASE("full tuning losses of every method pass gradient checks on small graphs") {
    Rng rng(11);
    for (BackboneKind kind : {BackboneKind::Gcn, BackboneKind::Gin}) {
        const auto backbone = GnnModel::create(kind, {3, 5, 4}, 3, kind == BackboneKind::Gin ? 0.5 : 0.0);
        for (int rep = 0; rep < 3; ++rep) {
            const Graph g = random_graph(4 + static_cast<std::size_t>(rep) * 3, 3, 0.4, rng);
            const auto ds = node_dataset(g, 3);
            std::vector<std::size_t> ids(g.num_nodes());
            std::iota(ids.begin(), ids.end(), 0);
            const auto head = LinearHead::create(4, 3, rng.next());
            for (PromptMethod m : kPromptMethods) {
                const auto prompts = random_prompts(m, backbone, 3, rng);
                CHECK(worst_tuning_gradient_error(backbone, prompts, head, ds, ids) < 1e-4);
            }
        }
    }
}

TEST_CASE("graph-task tuning losses pass gradient checks") {
    Rng rng(12);
    const auto ds = csbm_graph_dataset(4, 3, 3, 2);
    const auto backbone = GnnModel::create(BackboneKind::Gin, {3, 5, 4}, 4);
    const auto head = LinearHead::create(4, 2, 5);
    const std::vector<std::size_t> ids{0, 1, 2, 3};
    for (PromptMethod m : kPromptMethods)
        CHECK(worst_tuning_gradient_error(backbone, random_prompts(m, backbone, 2, rng), head, ds, ids) < 1e-4);
}

TEST_CASE("tuning never writes the backbone and zero prompts start at the classifier-only loss") {
    const auto ds = csbm_node_dataset(20, 4, 1);
    const auto split = kshot_sample(ds, 5, 1);
    const auto backbone = GnnModel::create(BackboneKind::Gcn, {4, 16, 16}, 2);
    const std::string before = digest_of(backbone);
    TuneConfig cfg;
    cfg.epochs = 5;
    cfg.anchors = 3;
    cfg.seed = 4;
    const double base = tune(backbone, ds, split, PromptMethod::ClassifierOnly, cfg).history.loss[0];
    for (PromptMethod m : kPromptMethods) {
        const auto r = tune(backbone, ds, split, m, cfg);
        CHECK(digest_of(backbone) == before);
        CHECK(r.history.loss.size() == 5);
        CHECK(std::abs(r.history.loss[0] - base) < 1e-12);
    }
}

TEST_CASE("EdgePrompt+ with one anchor reproduces EdgePrompt") {
    const auto ds = csbm_node_dataset(20, 4, 2);
    const auto split = kshot_sample(ds, 5, 3);
    for (BackboneKind kind : {BackboneKind::Gcn, BackboneKind::Gin}) {
        const auto backbone = GnnModel::create(kind, {4, 8, 8}, 5);
        TuneConfig cfg;
        cfg.epochs = 30;
        cfg.learning_rate = 0.01;
        cfg.anchors = 1;
        cfg.seed = 6;
        const auto ep = tune(backbone, ds, split, PromptMethod::EdgePrompt, cfg);
        const auto plus = tune(backbone, ds, split, PromptMethod::EdgePromptPlus, cfg);
        REQUIRE(ep.history.loss.size() == plus.history.loss.size());
        for (std::size_t e = 0; e < ep.history.loss.size(); ++e)
            CHECK(std::abs(ep.history.loss[e] - plus.history.loss[e]) < 1e-12);
        CHECK(ep.history.loss.back() < ep.history.loss.front());

        // Same forward for arbitrary p_1 = p, whatever the score map.
        Rng rng(7);
        PromptSet a = random_prompts(PromptMethod::EdgePrompt, backbone, 1, rng);
        PromptSet b = random_prompts(PromptMethod::EdgePromptPlus, backbone, 1, rng);
        for (std::size_t l = 0; l < backbone.num_layers(); ++l) b.tensors()[2 * l] = a.tensors()[l];
        std::vector<std::size_t> all(ds.graphs[0].num_nodes());
        std::iota(all.begin(), all.end(), 0);
        const Tensor la = predict_logits(backbone, a, ep.head, ds, all, ReadoutKind::Sum);
        const Tensor lb = predict_logits(backbone, b, ep.head, ds, all, ReadoutKind::Sum);
        CHECK(max_abs_diff(la, lb) < 1e-12);
    }
}

TEST_CASE("classifier-only fits linearly separable representations") {
    // Edgeless graph and an identity GCN layer: representations are the features.
    const std::size_t n = 40;
    Rng rng(13);
    Tensor x(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = (i % 2 == 0 ? 2.0 : -2.0) + rng.uniform(-0.5, 0.5);
        x(i, 1) = rng.uniform(-1.0, 1.0);
    }
    const auto ds = node_dataset(Graph::from_edges(n, {}, x), 2);
    auto backbone = GnnModel::create(BackboneKind::Gcn, {2, 2}, 1);
    backbone.parameters()[0] = Tensor::from_rows({{1, 0}, {0, 1}});
    const auto split = kshot_sample(ds, 10, 2);
    TuneConfig cfg;
    cfg.learning_rate = 0.05;
    const auto r = tune(backbone, ds, split, PromptMethod::ClassifierOnly, cfg);
    CHECK(r.history.train_accuracy.back() == 1.0);
}

TEST_CASE("graph batches of one equal the unbatched computation") {
    const auto ds = csbm_graph_dataset(6, 4, 3, 3);
    const auto backbone = GnnModel::create(BackboneKind::Gin, {3, 8, 8}, 2);
    Rng rng(14);
    const auto prompts = random_prompts(PromptMethod::EdgePromptPlus, backbone, 3, rng);
    const auto head = LinearHead::create(8, 2, 3);
    const std::vector<std::size_t> ids{0, 1, 2, 3, 4, 5};
    const Tensor single = predict_logits(backbone, prompts, head, ds, ids, ReadoutKind::Sum, 1);
    const Tensor whole = predict_logits(backbone, prompts, head, ds, ids, ReadoutKind::Sum, 6);
    CHECK(max_abs_diff(single, whole) < 1e-12);
}

TEST_CASE("on 60 synthetic graphs EdgePrompt+ trains at least as well as classifier-only") {
    const auto ds = csbm_graph_dataset(60, 5, 4, 4);
    const auto backbone = GnnModel::create(BackboneKind::Gin, {4, 16, 16}, 7);
    const std::string before = digest_of(backbone);
    std::vector<double> plus, base;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto split = kshot_sample(ds, 20, seed);
        TuneConfig cfg = TuneConfig::defaults_for(TaskKind::Graph);
        cfg.seed = seed;
        plus.push_back(tune(backbone, ds, split, PromptMethod::EdgePromptPlus, cfg).history.train_accuracy.back());
        base.push_back(tune(backbone, ds, split, PromptMethod::ClassifierOnly, cfg).history.train_accuracy.back());
    }
    CHECK(mean(plus) >= mean(base));
    CHECK(digest_of(backbone) == before);
}

TEST_CASE("evaluate_accuracy examples") {
    // One-hot features, identity layer and head on an edgeless graph.
    const std::size_t n = 10;
    Tensor x(n, 2);
    for (std::size_t i = 0; i < n; ++i) x(i, i % 2) = 1.0;
    const auto ds = node_dataset(Graph::from_edges(n, {}, x), 2);
    auto backbone = GnnModel::create(BackboneKind::Gcn, {2, 2}, 1);
    backbone.parameters()[0] = Tensor::from_rows({{1, 0}, {0, 1}});
    const PromptSet none = PromptSet::init(PromptMethod::ClassifierOnly, backbone, 0, 0);
    const LinearHead perfect{Tensor::from_rows({{1, 0}, {0, 1}}), Tensor(1, 2)};
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    CHECK(evaluate_accuracy(backbone, none, perfect, ds, ids) == 1.0);
    const std::vector<std::size_t> empty;
    CHECK(kind_of([&] { evaluate_accuracy(backbone, none, perfect, ds, empty); }) == ErrorKind::Config);

    // Labels independent of the features: any fixed head is a coin flip.
    Rng rng(15);
    const auto big = node_dataset(random_graph(500, 4, 0.01, rng), 2);
    const auto model = GnnModel::create(BackboneKind::Gcn, {4, 8}, 6);
    const PromptSet plain = PromptSet::init(PromptMethod::ClassifierOnly, model, 0, 0);
    std::vector<std::size_t> all(500);
    std::iota(all.begin(), all.end(), 0);
    for (std::uint64_t s = 0; s < 5; ++s)
        CHECK(std::abs(evaluate_accuracy(model, plain, LinearHead::create(8, 2, s), big, all) - 0.5) < 0.1);
    const LinearHead head = LinearHead::create(8, 2, 1);
    CHECK(evaluate_accuracy(model, plain, head, big, all) == evaluate_accuracy(model, plain, head, big, all));
}

TEST_CASE("tuning rejects incompatible inputs") {
    const auto ds = csbm_node_dataset(10, 4, 1);
    const auto split = kshot_sample(ds, 2, 1);
    const auto wrong = GnnModel::create(BackboneKind::Gcn, {3, 8}, 1);
    CHECK(kind_of([&] { tune(wrong, ds, split, PromptMethod::EdgePrompt, TuneConfig{}); }) == ErrorKind::Config);
    const auto right = GnnModel::create(BackboneKind::Gcn, {4, 8}, 1);
    TuneConfig cfg;
    cfg.epochs = 0;
    CHECK(kind_of([&] { tune(right, ds, split, PromptMethod::EdgePrompt, cfg); }) == ErrorKind::Config);
    CHECK(kind_of([&] { tune_graph_classification(right, ds, split, PromptMethod::Gpf, TuneConfig{}); }) ==
          ErrorKind::Config);
}
