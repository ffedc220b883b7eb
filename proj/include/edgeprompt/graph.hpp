#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "edgeprompt/tensor.hpp"

namespace edgeprompt {

using EdgePair = std::pair<std::uint32_t, std::uint32_t>;

struct LoadStats {
    std::size_t self_loops_dropped = 0;
    std::size_t duplicate_edges = 0;
};

// Undirected graph stored as a symmetric CSR. Row i lists the neighbours j of
// node i in ascending order; the entry (i <- j) and its reverse (j <- i) share
// an edge id. Self-loops are never stored.
class Graph {
public:
    Graph() = default;

    // Self-loops are dropped and duplicate pairs (in either orientation)
    // collapsed; both are counted into `stats` when given.
    static Graph from_edges(std::size_t num_nodes, std::span<const EdgePair> edges, Tensor features,
                            LoadStats* stats = nullptr);

    std::size_t num_nodes() const noexcept { return num_nodes_; }
    std::size_t num_entries() const noexcept { return targets_.size(); }
    std::size_t num_edges() const noexcept { return targets_.size() / 2; }
    std::size_t feature_dim() const noexcept { return features_.cols(); }

    const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
    const std::vector<std::uint32_t>& targets() const noexcept { return targets_; }
    const std::vector<std::uint32_t>& edge_ids() const noexcept { return edge_ids_; }
    // Receiving node of each CSR entry (the row owner).
    const std::vector<std::uint32_t>& entry_rows() const noexcept { return entry_rows_; }
    const Tensor& features() const noexcept { return features_; }

    std::size_t degree(std::size_t node) const { return offsets_[node + 1] - offsets_[node]; }
    bool has_edge(std::uint32_t i, std::uint32_t j) const;
    // Undirected edges (i < j) indexed by edge id.
    std::vector<EdgePair> edge_list() const;

    Graph with_features(Tensor features) const;

    // Throws Validation on any broken CSR invariant.
    void validate() const;

private:
    std::size_t num_nodes_ = 0;
    std::vector<std::size_t> offsets_{0};
    std::vector<std::uint32_t> targets_;
    std::vector<std::uint32_t> edge_ids_;
    std::vector<std::uint32_t> entry_rows_;
    Tensor features_;
};

enum class TaskKind { Node, Graph };

const char* to_string(TaskKind task) noexcept;
TaskKind parse_task(std::string_view text);

struct LabeledDataset {
    TaskKind task = TaskKind::Node;
    std::size_t num_classes = 0;
    std::vector<Graph> graphs;
    std::vector<std::vector<std::size_t>> node_labels;  // task == Node, one vector per graph
    std::vector<std::size_t> graph_labels;              // task == Graph
    LoadStats stats;

    std::size_t feature_dim() const;
    // Labels of the instances that few-shot splits index into: nodes of the
    // single graph for node tasks, graphs for graph tasks.
    std::vector<std::size_t> instance_labels() const;
    void validate() const;
};

LabeledDataset parse_dataset(std::string_view json_text);
LabeledDataset load_dataset(const std::filesystem::path& path);
std::string serialize_dataset(const LabeledDataset& ds);
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);

struct FewShotSplit {
    std::vector<std::size_t> train_ids;
    std::vector<std::size_t> test_ids;
    std::size_t shots_per_class = 0;
    std::uint64_t seed = 0;
};

FewShotSplit kshot_sample(const LabeledDataset& ds, std::size_t shots, std::uint64_t seed);

struct CsbmParams {
    std::vector<double> mu1;
    std::vector<double> mu2;
    double p = 0.5;
    double q = 0.5;
    std::size_t n_per_class = 0;

    void validate() const;
};

struct CsbmSample {
    Graph graph;
    std::vector<std::size_t> labels;  // nodes [0, n) are class 0, [n, 2n) class 1
};

CsbmSample csbm_generate(const CsbmParams& params, std::uint64_t seed);

// GCN coefficients: 1/sqrt((d_i+s)(d_j+s)) per CSR entry, 1/(d_i+1) on the
// diagonal when self-loops are enabled (s = 1), zero otherwise.
struct NormalizedAdjacency {
    std::vector<double> edge_coeff;
    std::vector<double> self_coeff;
    bool self_loops = true;

    Tensor to_dense(const Graph& g) const;
};

NormalizedAdjacency normalized_adjacency(const Graph& g, bool add_self_loops);

struct GraphBatch {
    Graph graph;
    std::vector<std::size_t> node_offsets;  // first batched node id of each source graph
    std::vector<std::uint32_t> membership;  // batched node -> source graph index
};

GraphBatch disjoint_union(std::span<const Graph* const> graphs);

}  // namespace edgeprompt
