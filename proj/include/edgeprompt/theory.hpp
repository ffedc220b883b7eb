#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "edgeprompt/graph.hpp"
#include "edgeprompt/tensor.hpp"

namespace edgeprompt {

// |p - q| / (p + q) * ||mu1 - mu2||, the class-centroid distance after one
// neighbour-mean aggregation. p + q = 0 throws Domain.
double csbm_expected_distance(const CsbmParams& params);

struct MaxRatio {
    bool bounded = true;
    double value = 0.0;  // +inf when unbounded
};

// 1 + p / |p - q|; p = q is reported as unbounded.
MaxRatio theorem1_max_ratio(double p, double q);

// Two anchors with expected scores per class pair; further anchors carry zero
// score and are omitted. Entry (i <- j) gets b_{c(i)c(j)} a1 + (1 - b) a2.
struct Theorem1Witness {
    std::vector<double> anchor1;
    std::vector<double> anchor2;
    double b11 = 0.5;
    double b22 = 0.5;
    double b12 = 0.5;
    double b21 = 0.5;
    double target = 1.0;
};

// Anchors (mu1, mu2) and b11 - b22 = (T - 1)(p - q) / p with the smaller score
// at max(0, -delta). Throws Range for T <= 1 or T > T_max, quoting T_max.
Theorem1Witness theorem1_construct_witness(const CsbmParams& params, double target);

// Centroid distance with the witness prompts, in closed form.
double theorem1_prompted_distance(const CsbmParams& params, const Theorem1Witness& witness);

struct DistanceReport {
    double analytic_unprompted = 0.0;
    double analytic_prompted = 0.0;
    double empirical_unprompted = 0.0;  // mean over trials
    double empirical_prompted = 0.0;
    double unprompted_half_width = 0.0;  // 3 standard errors
    double prompted_half_width = 0.0;
    double ratio = 0.0;  // mean of per-trial prompted / unprompted
    double ratio_half_width = 0.0;
    std::vector<double> trial_ratios;
    std::size_t nodes_per_class = 0;
    std::size_t trials = 0;
    double target = 0.0;
    double tolerance = 0.0;
    // |ratio - target| <= max(ratio_half_width, tolerance)
    bool pass = false;
};

// Monte-Carlo check on fresh CSBM graphs: each node takes the mean over its
// neighbours of x_j + e_ij (no self term, no weights). Isolated nodes are left
// out of the class centroids. Trial t draws from Rng::derive(seed, t); graphs
// are streamed, never materialized. n_per_class in `params` is ignored.
DistanceReport theorem1_verify(const CsbmParams& params, const Theorem1Witness& witness, std::size_t n_per_class,
                               std::size_t trials, std::uint64_t seed, double tolerance = 0.05);

// (Deg + N + N eps) / Deg with Deg the sum of node degrees. Edgeless graphs
// throw Domain.
double lemma1_coefficient(const Graph& g, double epsilon);

// Single linear GIN layer: ||Sum((A + (1+eps)I)(X + 1 p_hat) W) -
// Sum(GIN with edge prompt c p_hat) ||_inf, with c = coefficient_scale *
// lemma1_coefficient.
double theorem2_equivalence_check(const Graph& g, const Tensor& p_hat, double epsilon, const Tensor& weight,
                                  double coefficient_scale = 1.0);

}  // namespace edgeprompt
