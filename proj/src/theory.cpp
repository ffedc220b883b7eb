#include "edgeprompt/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "edgeprompt/autodiff.hpp"
#include "edgeprompt/error.hpp"
#include "edgeprompt/gnn.hpp"
#include "edgeprompt/rng.hpp"

namespace edgeprompt {

namespace {

double norm_of_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
}

std::string format(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct MeanSe {
    double mean = 0.0;
    double half_width = 0.0;
};

MeanSe summarize(const std::vector<double>& xs) {
    MeanSe out;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) out.mean += x;
    out.mean /= n;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.half_width = 3.0 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return out;
}

}  // namespace

double csbm_expected_distance(const CsbmParams& params) {
    if (!(params.p + params.q > 0.0))
        throw Error(ErrorKind::Domain, "expected distance is undefined for p + q = 0");
    if (params.mu1.size() != params.mu2.size()) throw Error(ErrorKind::Shape, "mu1 and mu2 differ in dimension");
    return std::abs(params.p - params.q) / (params.p + params.q) * norm_of_diff(params.mu1, params.mu2);
}

MaxRatio theorem1_max_ratio(double p, double q) {
    if (p == q) return {false, std::numeric_limits<double>::infinity()};
    return {true, 1.0 + p / std::abs(p - q)};
}

Theorem1Witness theorem1_construct_witness(const CsbmParams& params, double target) {
    params.validate();
    const MaxRatio max = theorem1_max_ratio(params.p, params.q);
    if (!max.bounded)
        throw Error(ErrorKind::Range, "p = q gives zero class distance; no ratio T > 1 is attainable");
    // Slack absorbs rounding when T is given as T_max itself.
    const double slack = 1e-12 * max.value;
    if (!(target > 1.0) || target > max.value + slack)
        throw Error(ErrorKind::Range, "T = " + format(target) + " is outside (1, T_max] with T_max = " +
                                          format(max.value));
    double delta = (target - 1.0) * (params.p - params.q) / params.p;
    delta = std::clamp(delta, -1.0, 1.0);
    Theorem1Witness w;
    w.anchor1 = params.mu1;
    w.anchor2 = params.mu2;
    w.target = target;
    if (std::abs(delta) < 1e-12) {
        w.b11 = w.b22 = 0.5;
    } else {
        w.b22 = std::max(0.0, -delta);
        w.b11 = w.b22 + delta;
    }
    w.b12 = w.b21 = 0.5;
    return w;
}

double theorem1_prompted_distance(const CsbmParams& params, const Theorem1Witness& w) {
    const double s = params.p + params.q;
    if (!(s > 0.0)) throw Error(ErrorKind::Domain, "expected distance is undefined for p + q = 0");
    const double feature_coeff = (params.p - params.q) / s;
    const double prompt_coeff = (params.p * (w.b11 - w.b22) + params.q * (w.b12 - w.b21)) / s;
    double sq = 0.0;
    for (std::size_t k = 0; k < params.mu1.size(); ++k) {
        const double v = feature_coeff * (params.mu1[k] - params.mu2[k]) +
                         prompt_coeff * (w.anchor1[k] - w.anchor2[k]);
        sq += v * v;
    }
    return std::sqrt(sq);
}

DistanceReport theorem1_verify(const CsbmParams& params, const Theorem1Witness& w, std::size_t n_per_class,
                               std::size_t trials, std::uint64_t seed, double tolerance) {
    CsbmParams shaped = params;
    shaped.n_per_class = n_per_class;
    shaped.validate();
    const std::size_t dim = params.mu1.size();
    if (w.anchor1.size() != dim || w.anchor2.size() != dim)
        throw Error(ErrorKind::Shape, "witness anchors must have the feature dimension " + std::to_string(dim));
    if (n_per_class == 0 || trials == 0) throw Error(ErrorKind::Config, "need at least one node and one trial");

    // Prompt row for entry (i <- j), by class pair.
    std::vector<double> prompt[2][2];
    const double b[2][2] = {{w.b11, w.b12}, {w.b21, w.b22}};
    for (int ci = 0; ci < 2; ++ci)
        for (int cj = 0; cj < 2; ++cj) {
            prompt[ci][cj].resize(dim);
            for (std::size_t k = 0; k < dim; ++k)
                prompt[ci][cj][k] = b[ci][cj] * w.anchor1[k] + (1.0 - b[ci][cj]) * w.anchor2[k];
        }

    const std::size_t n = 2 * n_per_class;
    std::vector<double> plain, prompted, ratios;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng = Rng::derive(seed, t);
        std::vector<double> x(n * dim);
        for (std::size_t i = 0; i < n; ++i) {
            const std::vector<double>& mu = i < n_per_class ? params.mu1 : params.mu2;
            for (std::size_t k = 0; k < dim; ++k) x[i * dim + k] = mu[k] + rng.normal();
        }
        std::vector<double> sums(n * dim, 0.0);
        std::vector<std::size_t> same(n, 0), cross(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const bool ci = i >= n_per_class;
            for (std::size_t j = i + 1; j < n; ++j) {
                const bool is_same = ci == (j >= n_per_class);
                if (!rng.bernoulli(is_same ? params.p : params.q)) continue;
                for (std::size_t k = 0; k < dim; ++k) {
                    sums[i * dim + k] += x[j * dim + k];
                    sums[j * dim + k] += x[i * dim + k];
                }
                if (is_same) {
                    ++same[i];
                    ++same[j];
                } else {
                    ++cross[i];
                    ++cross[j];
                }
            }
        }
        // Class centroids of the aggregated representations.
        std::vector<double> c_plain[2] = {std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
        std::vector<double> c_prompt[2] = {std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
        std::size_t counted[2] = {0, 0};
        for (std::size_t i = 0; i < n; ++i) {
            const int c = i >= n_per_class ? 1 : 0;
            const std::size_t deg = same[i] + cross[i];
            if (deg == 0) continue;
            const double inv = 1.0 / static_cast<double>(deg);
            const double ws = static_cast<double>(same[i]) * inv;
            const double wc = static_cast<double>(cross[i]) * inv;
            const std::vector<double>& ps = prompt[c][c];
            const std::vector<double>& pc = prompt[c][1 - c];
            for (std::size_t k = 0; k < dim; ++k) {
                const double h = sums[i * dim + k] * inv;
                c_plain[c][k] += h;
                c_prompt[c][k] += h + ws * ps[k] + wc * pc[k];
            }
            ++counted[c];
        }
        if (counted[0] == 0 || counted[1] == 0) throw Error(ErrorKind::Domain, "a class has no connected nodes");
        for (int c = 0; c < 2; ++c)
            for (std::size_t k = 0; k < dim; ++k) {
                c_plain[c][k] /= static_cast<double>(counted[c]);
                c_prompt[c][k] /= static_cast<double>(counted[c]);
            }
        const double d = norm_of_diff(c_plain[0], c_plain[1]);
        const double dp = norm_of_diff(c_prompt[0], c_prompt[1]);
        plain.push_back(d);
        prompted.push_back(dp);
        ratios.push_back(dp / d);
    }

    DistanceReport r;
    r.analytic_unprompted = csbm_expected_distance(params);
    r.analytic_prompted = theorem1_prompted_distance(params, w);
    const MeanSe sp = summarize(plain), spp = summarize(prompted), sr = summarize(ratios);
    r.empirical_unprompted = sp.mean;
    r.unprompted_half_width = sp.half_width;
    r.empirical_prompted = spp.mean;
    r.prompted_half_width = spp.half_width;
    r.ratio = sr.mean;
    r.ratio_half_width = sr.half_width;
    r.trial_ratios = std::move(ratios);
    r.nodes_per_class = n_per_class;
    r.trials = trials;
    r.target = w.target;
    r.tolerance = tolerance;
    r.pass = std::abs(r.ratio - r.target) <= std::max(r.ratio_half_width, tolerance);
    return r;
}

double lemma1_coefficient(const Graph& g, double epsilon) {
    const double deg = static_cast<double>(g.num_entries());
    if (deg == 0.0) throw Error(ErrorKind::Domain, "edgeless graph: Deg = 0 makes the coefficient a division by zero");
    const double n = static_cast<double>(g.num_nodes());
    return (deg + n + n * epsilon) / deg;
}

double theorem2_equivalence_check(const Graph& g, const Tensor& p_hat, double epsilon, const Tensor& weight,
                                  double coefficient_scale) {
    const std::size_t d = g.feature_dim();
    if (p_hat.rows() != 1 || p_hat.cols() != d)
        throw Error(ErrorKind::Shape, "feature prompt " + p_hat.shape_string() + " for feature width " +
                                          std::to_string(d));
    if (weight.rows() != d)
        throw Error(ErrorKind::Shape, "weight " + weight.shape_string() + " for feature width " + std::to_string(d));
    const double c = coefficient_scale * lemma1_coefficient(g, epsilon);
    const PreparedGraph pg = prepare_graph(g, BackboneKind::Gin, epsilon);
    const std::vector<std::uint32_t> membership(g.num_nodes(), 0);

    Tape tape;
    Var x = tape.constant(g.features());
    Var w = tape.constant(weight);
    Var feature_side = matmul(gin_aggregate(add_bias(x, tape.constant(p_hat)), pg, std::nullopt), w);

    Tensor edge_prompt = p_hat;
    for (double& v : edge_prompt.values()) v *= c;
    const LayerPrompt prompt =
        LayerPrompt::factored(tape.constant(Tensor(g.num_entries(), 1, 1.0)), tape.constant(edge_prompt));
    Var edge_side = matmul(gin_aggregate(x, pg, prompt), w);

    const Tensor a = readout(feature_side, membership, 1, ReadoutKind::Sum).value();
    const Tensor b = readout(edge_side, membership, 1, ReadoutKind::Sum).value();
    return max_abs_diff(a, b);
}

}  // namespace edgeprompt
