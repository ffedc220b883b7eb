#include "edgeprompt/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "edgeprompt/error.hpp"
#include "edgeprompt/io.hpp"
#include "edgeprompt/rng.hpp"

namespace edgeprompt {

using nlohmann::json;

// ---- Graph -----------------------------------------------------------------

Graph Graph::from_edges(std::size_t num_nodes, std::span<const EdgePair> edges, Tensor features,
                        LoadStats* stats) {
    if (features.rows() != num_nodes)
        throw Error(ErrorKind::Shape, "features " + features.shape_string() + " for " +
                                          std::to_string(num_nodes) + " nodes");
    std::vector<EdgePair> undirected;
    undirected.reserve(edges.size());
    std::size_t self_loops = 0;
    for (auto [a, b] : edges) {
        if (a >= num_nodes || b >= num_nodes)
            throw Error(ErrorKind::Index, "edge (" + std::to_string(a) + "," + std::to_string(b) +
                                              ") out of range for " + std::to_string(num_nodes) + " nodes");
        if (a == b) {
            ++self_loops;
            continue;
        }
        undirected.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(undirected.begin(), undirected.end());
    const std::size_t before = undirected.size();
    undirected.erase(std::unique(undirected.begin(), undirected.end()), undirected.end());
    if (stats) {
        stats->self_loops_dropped += self_loops;
        stats->duplicate_edges += before - undirected.size();
    }

    Graph g;
    g.num_nodes_ = num_nodes;
    g.features_ = std::move(features);
    std::vector<std::size_t> degree(num_nodes, 0);
    for (auto [a, b] : undirected) {
        ++degree[a];
        ++degree[b];
    }
    g.offsets_.assign(num_nodes + 1, 0);
    for (std::size_t i = 0; i < num_nodes; ++i) g.offsets_[i + 1] = g.offsets_[i] + degree[i];
    g.targets_.resize(g.offsets_.back());
    g.edge_ids_.resize(g.offsets_.back());
    g.entry_rows_.resize(g.offsets_.back());
    std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
    // Undirected pairs are sorted, so each row receives its neighbours in
    // ascending order: first the smaller ids (as b), then the larger (as a).
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> rows(num_nodes);
    for (std::size_t id = 0; id < undirected.size(); ++id) {
        auto [a, b] = undirected[id];
        rows[a].emplace_back(b, static_cast<std::uint32_t>(id));
        rows[b].emplace_back(a, static_cast<std::uint32_t>(id));
    }
    for (std::size_t i = 0; i < num_nodes; ++i) {
        auto& row = rows[i];
        std::sort(row.begin(), row.end());
        std::size_t e = g.offsets_[i];
        for (auto [j, id] : row) {
            g.targets_[e] = j;
            g.edge_ids_[e] = id;
            g.entry_rows_[e] = static_cast<std::uint32_t>(i);
            ++e;
        }
    }
    return g;
}

bool Graph::has_edge(std::uint32_t i, std::uint32_t j) const {
    if (i >= num_nodes_) return false;
    auto first = targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]);
    auto last = targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]);
    return std::binary_search(first, last, j);
}

std::vector<EdgePair> Graph::edge_list() const {
    std::vector<EdgePair> out(num_edges());
    for (std::size_t i = 0; i < num_nodes_; ++i)
        for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e)
            if (i < targets_[e]) out[edge_ids_[e]] = {static_cast<std::uint32_t>(i), targets_[e]};
    return out;
}

Graph Graph::with_features(Tensor features) const {
    if (features.rows() != num_nodes_)
        throw Error(ErrorKind::Shape, "features " + features.shape_string() + " for " +
                                          std::to_string(num_nodes_) + " nodes");
    Graph g = *this;
    g.features_ = std::move(features);
    return g;
}

void Graph::validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorKind::Validation, m); };
    if (offsets_.size() != num_nodes_ + 1) bad("csr offsets length");
    if (offsets_.front() != 0 || offsets_.back() != targets_.size()) bad("csr offset bounds");
    if (edge_ids_.size() != targets_.size() || entry_rows_.size() != targets_.size()) bad("csr array sizes");
    if (features_.rows() != num_nodes_) bad("feature rows");
    for (std::size_t i = 0; i < num_nodes_; ++i) {
        if (offsets_[i] > offsets_[i + 1]) bad("csr offsets decrease");
        for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
            const std::uint32_t j = targets_[e];
            if (j >= num_nodes_) bad("dangling csr target");
            if (j == i) bad("stored self-loop");
            if (entry_rows_[e] != i) bad("entry row mismatch");
            if (e > offsets_[i] && targets_[e - 1] >= j) bad("unsorted or duplicate row");
            // Reverse entry must exist and share the edge id.
            auto first = targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[j]);
            auto last = targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[j + 1]);
            auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(i));
            if (it == last || *it != i) bad("missing reverse entry");
            if (edge_ids_[static_cast<std::size_t>(it - targets_.begin())] != edge_ids_[e])
                bad("reverse entry has a different edge id");
        }
    }
}

// ---- datasets --------------------------------------------------------------

const char* to_string(TaskKind task) noexcept { return task == TaskKind::Node ? "node" : "graph"; }

TaskKind parse_task(std::string_view text) {
    if (text == "node") return TaskKind::Node;
    if (text == "graph") return TaskKind::Graph;
    throw Error(ErrorKind::Config, "unknown task '" + std::string(text) + "' (expected node|graph)");
}

std::size_t LabeledDataset::feature_dim() const { return graphs.empty() ? 0 : graphs.front().feature_dim(); }

std::vector<std::size_t> LabeledDataset::instance_labels() const {
    if (task == TaskKind::Graph) return graph_labels;
    if (graphs.size() != 1)
        throw Error(ErrorKind::Config, "node-task splits need exactly one graph, dataset has " +
                                           std::to_string(graphs.size()));
    return node_labels.front();
}

void LabeledDataset::validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorKind::Validation, m); };
    if (num_classes == 0) bad("num_classes must be positive");
    if (graphs.empty()) bad("dataset has no graphs");
    const std::size_t dim = feature_dim();
    for (std::size_t g = 0; g < graphs.size(); ++g) {
        graphs[g].validate();
        if (graphs[g].feature_dim() != dim)
            bad("graph " + std::to_string(g) + " has feature dim " + std::to_string(graphs[g].feature_dim()) +
                ", expected " + std::to_string(dim));
    }
    if (task == TaskKind::Node) {
        if (!graph_labels.empty()) bad("node task must not carry graph labels");
        if (node_labels.size() != graphs.size()) bad("node labels missing for some graphs");
        for (std::size_t g = 0; g < graphs.size(); ++g) {
            if (node_labels[g].size() != graphs[g].num_nodes())
                bad("graph " + std::to_string(g) + ": node_labels length mismatch");
            for (std::size_t y : node_labels[g])
                if (y >= num_classes)
                    bad("graph " + std::to_string(g) + ": label " + std::to_string(y) +
                        " >= num_classes " + std::to_string(num_classes));
        }
    } else {
        if (!node_labels.empty()) bad("graph task must not carry node labels");
        if (graph_labels.size() != graphs.size()) bad("graph labels missing for some graphs");
        for (std::size_t g = 0; g < graphs.size(); ++g)
            if (graph_labels[g] >= num_classes)
                bad("graph " + std::to_string(g) + ": label " + std::to_string(graph_labels[g]) +
                    " >= num_classes " + std::to_string(num_classes));
    }
}

namespace {

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
    throw Error(ErrorKind::Parse, field + ": " + what);
}

std::size_t as_index(const json& v, const std::string& field) {
    if (!v.is_number_integer() || v.get<long long>() < 0) field_error(field, "expected a non-negative integer");
    return v.get<std::size_t>();
}

Graph parse_graph(const json& obj, std::size_t index, TaskKind task, LabeledDataset& ds) {
    const std::string where = "graphs[" + std::to_string(index) + "]";
    if (!obj.is_object()) field_error(where, "expected an object");
    static const std::set<std::string> allowed = {"num_nodes", "edges", "features", "node_labels", "graph_label"};
    for (const auto& item : obj.items())
        if (!allowed.count(item.key())) field_error(where + "." + item.key(), "unknown key");
    if (!obj.contains("num_nodes")) field_error(where + ".num_nodes", "missing");
    const std::size_t n = as_index(obj["num_nodes"], where + ".num_nodes");
    if (n == 0) throw Error(ErrorKind::Validation, where + ": graph has no nodes");

    if (!obj.contains("features") || !obj["features"].is_array()) field_error(where + ".features", "missing or not an array");
    const json& feats = obj["features"];
    if (feats.size() != n)
        field_error(where + ".features", std::to_string(feats.size()) + " rows for " + std::to_string(n) + " nodes");
    const std::size_t dim = feats[0].is_array() ? feats[0].size() : 0;
    std::vector<double> values;
    values.reserve(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string f = where + ".features[" + std::to_string(i) + "]";
        if (!feats[i].is_array() || feats[i].size() != dim) field_error(f, "expected " + std::to_string(dim) + " numbers");
        for (const json& x : feats[i]) {
            if (!x.is_number()) field_error(f, "non-numeric feature");
            values.push_back(x.get<double>());
        }
    }

    std::vector<EdgePair> edges;
    if (obj.contains("edges")) {
        const json& es = obj["edges"];
        if (!es.is_array()) field_error(where + ".edges", "expected an array");
        edges.reserve(es.size());
        for (std::size_t e = 0; e < es.size(); ++e) {
            const std::string f = where + ".edges[" + std::to_string(e) + "]";
            if (!es[e].is_array() || es[e].size() != 2) field_error(f, "expected [i, j]");
            const std::size_t a = as_index(es[e][0], f), b = as_index(es[e][1], f);
            if (a >= n || b >= n) field_error(f, "endpoint out of range for " + std::to_string(n) + " nodes");
            edges.emplace_back(static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b));
        }
    }

    if (task == TaskKind::Node) {
        if (!obj.contains("node_labels")) field_error(where + ".node_labels", "required for node tasks");
        if (obj.contains("graph_label")) field_error(where + ".graph_label", "not allowed for node tasks");
        const json& ls = obj["node_labels"];
        if (!ls.is_array() || ls.size() != n) field_error(where + ".node_labels", "expected one label per node");
        std::vector<std::size_t> labels;
        for (std::size_t i = 0; i < n; ++i)
            labels.push_back(as_index(ls[i], where + ".node_labels[" + std::to_string(i) + "]"));
        ds.node_labels.push_back(std::move(labels));
    } else {
        if (!obj.contains("graph_label")) field_error(where + ".graph_label", "required for graph tasks");
        if (obj.contains("node_labels")) field_error(where + ".node_labels", "not allowed for graph tasks");
        ds.graph_labels.push_back(as_index(obj["graph_label"], where + ".graph_label"));
    }
    return Graph::from_edges(n, edges, Tensor(n, dim, std::move(values)), &ds.stats);
}

}  // namespace

LabeledDataset parse_dataset(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        const std::size_t byte = std::min<std::size_t>(e.byte, json_text.size());
        const std::size_t line = 1 + static_cast<std::size_t>(
                                         std::count(json_text.begin(), json_text.begin() + byte, '\n'));
        throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + e.what());
    }
    if (!root.is_object()) field_error("<root>", "expected an object");
    for (const auto& item : root.items())
        if (item.key() != "num_classes" && item.key() != "task" && item.key() != "graphs")
            field_error(item.key(), "unknown top-level key");
    for (const char* key : {"num_classes", "task", "graphs"})
        if (!root.contains(key)) field_error(key, "missing");
    if (!root["task"].is_string()) field_error("task", "expected \"node\" or \"graph\"");
    if (!root["graphs"].is_array()) field_error("graphs", "expected an array");

    LabeledDataset ds;
    ds.num_classes = as_index(root["num_classes"], "num_classes");
    const std::string task = root["task"].get<std::string>();
    if (task != "node" && task != "graph") field_error("task", "expected \"node\" or \"graph\", got \"" + task + "\"");
    ds.task = parse_task(task);
    const json& graphs = root["graphs"];
    for (std::size_t g = 0; g < graphs.size(); ++g) ds.graphs.push_back(parse_graph(graphs[g], g, ds.task, ds));
    ds.validate();
    return ds;
}

LabeledDataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

std::string serialize_dataset(const LabeledDataset& ds) {
    json root;
    root["num_classes"] = ds.num_classes;
    root["task"] = to_string(ds.task);
    json graphs = json::array();
    for (std::size_t g = 0; g < ds.graphs.size(); ++g) {
        const Graph& gr = ds.graphs[g];
        json obj;
        obj["num_nodes"] = gr.num_nodes();
        json edges = json::array();
        for (auto [a, b] : gr.edge_list()) edges.push_back({a, b});
        obj["edges"] = std::move(edges);
        json feats = json::array();
        for (std::size_t i = 0; i < gr.num_nodes(); ++i)
            feats.push_back(std::vector<double>(gr.features().row(i), gr.features().row(i) + gr.feature_dim()));
        obj["features"] = std::move(feats);
        if (ds.task == TaskKind::Node)
            obj["node_labels"] = ds.node_labels[g];
        else
            obj["graph_label"] = ds.graph_labels[g];
        graphs.push_back(std::move(obj));
    }
    root["graphs"] = std::move(graphs);
    return root.dump();
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_dataset(ds));
}

// ---- few-shot splits -------------------------------------------------------

FewShotSplit kshot_sample(const LabeledDataset& ds, std::size_t shots, std::uint64_t seed) {
    const std::vector<std::size_t> labels = ds.instance_labels();
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    FewShotSplit split;
    split.shots_per_class = shots;
    split.seed = seed;
    std::vector<bool> in_train(labels.size(), false);
    for (std::size_t c = 0; c < ds.num_classes; ++c) {
        auto& members = by_class[c];
        if (members.size() < shots)
            throw Error(ErrorKind::InsufficientData, "class " + std::to_string(c) + " has " +
                                                         std::to_string(members.size()) + " instances, need " +
                                                         std::to_string(shots));
        Rng rng = Rng::derive(seed, c);
        rng.shuffle(members);
        for (std::size_t k = 0; k < shots; ++k) {
            split.train_ids.push_back(members[k]);
            in_train[members[k]] = true;
        }
    }
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (!in_train[i]) split.test_ids.push_back(i);
    return split;
}

// ---- CSBM ------------------------------------------------------------------

void CsbmParams::validate() const {
    if (!(p >= 0.0 && p <= 1.0) || !(q >= 0.0 && q <= 1.0))
        throw Error(ErrorKind::Range, "csbm probabilities must lie in [0, 1]");
    if (mu1.size() != mu2.size() || mu1.empty())
        throw Error(ErrorKind::Shape, "csbm means must be non-empty and of equal dimension");
    if (mu1 == mu2) throw Error(ErrorKind::Validation, "csbm means must differ");
}

CsbmSample csbm_generate(const CsbmParams& params, std::uint64_t seed) {
    params.validate();
    const std::size_t n = params.n_per_class, total = 2 * n, dim = params.mu1.size();
    Rng feature_rng = Rng::derive(seed, 0);
    Rng edge_rng = Rng::derive(seed, 1);
    Tensor features(total, dim);
    CsbmSample out;
    out.labels.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t cls = i < n ? 0 : 1;
        out.labels[i] = cls;
        const auto& mu = cls == 0 ? params.mu1 : params.mu2;
        for (std::size_t d = 0; d < dim; ++d) features(i, d) = mu[d] + feature_rng.normal();
    }
    std::vector<EdgePair> edges;
    for (std::size_t i = 0; i < total; ++i)
        for (std::size_t j = i + 1; j < total; ++j) {
            const double prob = out.labels[i] == out.labels[j] ? params.p : params.q;
            if (edge_rng.bernoulli(prob))
                edges.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
        }
    out.graph = Graph::from_edges(total, edges, std::move(features));
    return out;
}

// ---- normalization ---------------------------------------------------------

NormalizedAdjacency normalized_adjacency(const Graph& g, bool add_self_loops) {
    NormalizedAdjacency norm;
    norm.self_loops = add_self_loops;
    const double s = add_self_loops ? 1.0 : 0.0;
    const std::size_t n = g.num_nodes();
    auto deg = [&](std::size_t i) { return static_cast<double>(g.degree(i)) + s; };
    norm.edge_coeff.resize(g.num_entries());
    // Entries exist only between nodes of degree >= 1, so the product is positive.
    for (std::size_t e = 0; e < g.num_entries(); ++e)
        norm.edge_coeff[e] = 1.0 / std::sqrt(deg(g.entry_rows()[e]) * deg(g.targets()[e]));
    norm.self_coeff.assign(n, 0.0);
    if (add_self_loops)
        for (std::size_t i = 0; i < n; ++i) norm.self_coeff[i] = 1.0 / (static_cast<double>(g.degree(i)) + 1.0);
    return norm;
}

Tensor NormalizedAdjacency::to_dense(const Graph& g) const {
    const std::size_t n = g.num_nodes();
    Tensor d(n, n);
    for (std::size_t e = 0; e < g.num_entries(); ++e) d(g.entry_rows()[e], g.targets()[e]) += edge_coeff[e];
    for (std::size_t i = 0; i < n; ++i) d(i, i) += self_coeff[i];
    return d;
}

// ---- batching --------------------------------------------------------------

GraphBatch disjoint_union(std::span<const Graph* const> graphs) {
    if (graphs.empty()) throw Error(ErrorKind::Shape, "disjoint_union of no graphs");
    const std::size_t dim = graphs.front()->feature_dim();
    std::size_t total = 0;
    for (const Graph* g : graphs) {
        if (g->feature_dim() != dim)
            throw Error(ErrorKind::Shape, "disjoint_union: feature dim " + std::to_string(g->feature_dim()) +
                                              " vs " + std::to_string(dim));
        total += g->num_nodes();
    }
    GraphBatch batch;
    std::vector<EdgePair> edges;
    std::vector<double> feats;
    feats.reserve(total * dim);
    batch.membership.reserve(total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < graphs.size(); ++k) {
        const Graph& g = *graphs[k];
        batch.node_offsets.push_back(offset);
        for (auto [a, b] : g.edge_list())
            edges.emplace_back(static_cast<std::uint32_t>(a + offset), static_cast<std::uint32_t>(b + offset));
        feats.insert(feats.end(), g.features().storage().begin(), g.features().storage().end());
        batch.membership.insert(batch.membership.end(), g.num_nodes(), static_cast<std::uint32_t>(k));
        offset += g.num_nodes();
    }
    // Edge lists come out in id order per graph and graphs are offset
    // monotonically, so batched ids are the per-graph ids shifted by the
    // running edge count.
    batch.graph = Graph::from_edges(total, edges, Tensor(total, dim, std::move(feats)));
    return batch;
}

}  // namespace edgeprompt
