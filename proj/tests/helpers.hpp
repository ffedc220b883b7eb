#pragma once

// Random inputs and dense reference implementations shared by the unit tests.
// The references are written directly from the definitions, without the
// sparse machinery they check.

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "edgeprompt/error.hpp"
#include "edgeprompt/graph.hpp"
#include "edgeprompt/rng.hpp"
#include "edgeprompt/tensor.hpp"
#include "fixtures.hpp"

namespace testing {

using namespace edgeprompt;

// Kind of the edgeprompt::Error raised by f; fails the test when none is.
inline ErrorKind kind_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an edgeprompt::Error");
    return ErrorKind::State;
}

// Every simple graph on n nodes, by bitmask over the n(n-1)/2 pairs.
inline Graph graph_from_mask(std::size_t n, std::uint64_t mask, Tensor features) {
    std::vector<EdgePair> edges;
    std::size_t bit = 0;
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = i + 1; j < n; ++j, ++bit)
            if (mask >> bit & 1) edges.emplace_back(i, j);
    return Graph::from_edges(n, edges, std::move(features));
}

inline Tensor dense_adjacency(const Graph& g) {
    Tensor a(g.num_nodes(), g.num_nodes());
    for (auto [i, j] : g.edge_list()) a(i, j) = a(j, i) = 1.0;
    return a;
}

inline Tensor dense_matmul(const Tensor& a, const Tensor& b) {
    Tensor c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k)
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
    return c;
}

inline Tensor dense_add(Tensor a, const Tensor& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a.values()[i] += b.values()[i];
    return a;
}

inline Tensor dense_add_row(Tensor a, const Tensor& row) {
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) += row(0, j);
    return a;
}

inline Tensor dense_relu(Tensor a) {
    for (double& v : a.values()) v = v > 0.0 ? v : 0.0;
    return a;
}

// D~^-1/2 (A + I) D~^-1/2.
inline Tensor dense_gcn_operator(const Graph& g) {
    const std::size_t n = g.num_nodes();
    Tensor a = dense_adjacency(g);
    for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
    std::vector<double> d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i] += a(i, j);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) /= std::sqrt(d[i] * d[j]);
    return a;
}

}  // namespace testing
