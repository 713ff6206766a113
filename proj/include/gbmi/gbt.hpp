#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "gbmi/parallel.hpp"
#include "gbmi/rng.hpp"
#include "gbmi/tabular.hpp"

namespace gbmi {

enum class Objective { kSquaredError, kLogistic, kSoftmax };

// Booster hyperparameters. Values mirror common gradient-boosting defaults
// at a reduced round count.
struct GbtConfig {
    int rounds = 50;
    double learning_rate = 0.3;  // in (0, 1]
    int max_depth = 3;
    double min_child_weight = 1.0; // Hessian mass per child
    double reg_lambda = 1.0;       // L2 penalty on leaf weights
    double min_split_gain = 0.0;   // gain threshold (gamma)
    double subsample = 1.0;        // row fraction per round, in (0, 1]

    void validate() const {
        if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0))
            throw std::invalid_argument("learning_rate must be in (0, 1]");
        if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
        if (min_child_weight < 0.0) throw std::invalid_argument("min_child_weight must be >= 0");
        if (reg_lambda < 0.0) throw std::invalid_argument("reg_lambda must be >= 0");
        if (min_split_gain < 0.0) throw std::invalid_argument("min_split_gain must be >= 0");
        if (!(subsample > 0.0 && subsample <= 1.0))
            throw std::invalid_argument("subsample must be in (0, 1]");
    }
};

// Node of a regression tree, stored in a flat array with root at index 0.
// Internal nodes route value < threshold to left, >= threshold to right.
struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    bool default_left = true; // unused on complete data; kept for routing robustness
    double weight = 0.0;      // leaf output, -G/(H+lambda)

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    int leaf_for(std::span<const double> features_by_col, std::size_t row,
                 std::size_t n_rows) const {
        int u = 0;
        while (!nodes[u].is_leaf()) {
            const double v = features_by_col[static_cast<std::size_t>(nodes[u].feature) * n_rows + row];
            u = v < nodes[u].threshold ? nodes[u].left : nodes[u].right;
        }
        return u;
    }

    double value(const EncodedMatrix& x, std::size_t row) const {
        int u = 0;
        while (!nodes[u].is_leaf()) {
            const double v = x.at(row, static_cast<std::size_t>(nodes[u].feature));
            u = v < nodes[u].threshold ? nodes[u].left : nodes[u].right;
        }
        return nodes[u].weight;
    }
};

// Additive ensemble: prediction = base_score + learning_rate * sum of tree
// outputs, per class for softmax before the softmax map.
struct GbtModel {
    Objective objective = Objective::kSquaredError;
    int n_classes = 1; // K for softmax, 1 otherwise
    double learning_rate = 0.3;
    std::vector<double> base_score;        // size 1, or K for softmax
    std::vector<std::vector<Tree>> rounds; // rounds x (1 or K)
    std::vector<EncodedColumn> feature_map;
    std::vector<double> train_loss; // mean training loss after each round
};

struct GradHess {
    std::vector<double> g; // class-major blocks of n
    std::vector<double> h;
};

namespace detail {

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Softmax probabilities for one row from class-major raw scores.
inline void softmax_row(std::span<const double> raw, std::size_t n, std::size_t row, int k,
                        double* out) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) mx = std::max(mx, raw[static_cast<std::size_t>(c) * n + row]);
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
        out[c] = std::exp(raw[static_cast<std::size_t>(c) * n + row] - mx);
        sum += out[c];
    }
    for (int c = 0; c < k; ++c) out[c] /= sum;
}

} // namespace detail

// Second-order statistics of the pointwise loss at the current raw scores.
//   squared error: g = yhat - y, h = 1
//   logistic (p = sigmoid(raw)): g = p - y, h = p (1 - p)
//   softmax (p_k):               g_k = p_k - 1{y = k}, h_k = p_k (1 - p_k)
inline GradHess compute_grad_hess(Objective obj, int k_classes, std::span<const double> raw,
                                  std::span<const double> targets) {
    const std::size_t n = targets.size();
    const int k = obj == Objective::kSoftmax ? k_classes : 1;
    if (obj == Objective::kSoftmax && k_classes < 2)
        throw std::invalid_argument("softmax needs at least 2 classes");
    if (raw.size() != n * static_cast<std::size_t>(k))
        throw std::invalid_argument("raw predictions and targets disagree in length");
    for (double v : raw)
        if (!std::isfinite(v)) throw std::runtime_error("non-finite raw prediction");

    GradHess gh;
    gh.g.resize(raw.size());
    gh.h.resize(raw.size());
    switch (obj) {
        case Objective::kSquaredError:
            for (std::size_t i = 0; i < n; ++i) {
                gh.g[i] = raw[i] - targets[i];
                gh.h[i] = 1.0;
            }
            break;
        case Objective::kLogistic:
            for (std::size_t i = 0; i < n; ++i) {
                if (targets[i] != 0.0 && targets[i] != 1.0)
                    throw std::invalid_argument("logistic targets must be 0 or 1");
                const double p = detail::sigmoid(raw[i]);
                gh.g[i] = p - targets[i];
                gh.h[i] = p * (1.0 - p);
            }
            break;
        case Objective::kSoftmax: {
            std::vector<double> p(static_cast<std::size_t>(k));
            for (std::size_t i = 0; i < n; ++i) {
                const double t = targets[i];
                if (t < 0 || t >= k || t != std::floor(t))
                    throw std::invalid_argument("softmax targets must be class indices");
                detail::softmax_row(raw, n, i, k, p.data());
                for (int c = 0; c < k; ++c) {
                    gh.g[static_cast<std::size_t>(c) * n + i] =
                        p[static_cast<std::size_t>(c)] - (static_cast<int>(t) == c ? 1.0 : 0.0);
                    gh.h[static_cast<std::size_t>(c) * n + i] =
                        p[static_cast<std::size_t>(c)] * (1.0 - p[static_cast<std::size_t>(c)]);
                }
            }
            break;
        }
    }
    return gh;
}

struct Split {
    double threshold = 0.0;
    double gain = 0.0;
};

namespace detail {

inline double split_gain(double gl, double hl, double gr, double hr, double g_tot, double h_tot,
                         double lambda, double min_split_gain) {
    return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) -
                  g_tot * g_tot / (h_tot + lambda)) -
           min_split_gain;
}

} // namespace detail

// Exact greedy split over one feature column. `values` must be ascending;
// g and h are aligned with it. Candidates are midpoints between consecutive
// distinct values; gain is the usual second-order formula
//   1/2 [G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)] - gamma.
// Returns nullopt when no candidate has positive gain or every candidate
// violates min_child_weight. Gain ties keep the lowest threshold.
inline std::optional<Split> best_split(std::span<const double> values, std::span<const double> g,
                                       std::span<const double> h, double reg_lambda,
                                       double min_split_gain, double min_child_weight) {
    const std::size_t n = values.size();
    if (n < 2) throw std::invalid_argument("best_split needs at least 2 rows");
    if (g.size() != n || h.size() != n)
        throw std::invalid_argument("best_split: g/h length mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(values[i])) throw std::invalid_argument("best_split: non-finite value");
        if (i && values[i] < values[i - 1])
            throw std::invalid_argument("best_split: values must be sorted ascending");
    }
    double g_tot = 0.0, h_tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        g_tot += g[i];
        h_tot += h[i];
    }
    std::optional<Split> best;
    double gl = 0.0, hl = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        gl += g[i - 1];
        hl += h[i - 1];
        if (values[i] == values[i - 1]) continue;
        const double hr = h_tot - hl;
        if (hl < min_child_weight || hr < min_child_weight) continue;
        const double gain =
            detail::split_gain(gl, hl, g_tot - gl, hr, g_tot, h_tot, reg_lambda, min_split_gain);
        if (!best || gain > best->gain)
            best = Split{0.5 * (values[i - 1] + values[i]), gain};
    }
    if (best && best->gain <= 0.0) return std::nullopt;
    return best;
}

namespace detail {

// One tree fit on (g, h) with presorted feature orders. `node_of_row` holds
// -1 for rows excluded by subsampling; those rows contribute no statistics
// but still receive predictions.
inline Tree grow_tree(const EncodedMatrix& x, std::span<const double> g, std::span<const double> h,
                      const std::vector<std::vector<std::uint32_t>>& sorted_idx,
                      const GbtConfig& cfg, std::vector<int>& node_of_row, int n_threads) {
    const std::size_t n = x.rows();
    const std::size_t q = x.cols();
    Tree tree;

    struct Candidate {
        double gain = 0.0;
        double threshold = 0.0;
        int feature = -1;
    };

    // node stats for the currently active level
    std::vector<int> active; // node ids
    std::vector<double> node_g, node_h;

    tree.nodes.push_back({});
    active.push_back(0);
    node_g.assign(1, 0.0);
    node_h.assign(1, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        if (node_of_row[r] == 0) {
            node_g[0] += g[r];
            node_h[0] += h[r];
        }

    std::vector<int> node_slot(1, 0); // node id -> index into the level arrays

    for (int depth = 0; depth < cfg.max_depth && !active.empty(); ++depth) {
        const std::size_t n_active = active.size();
        node_slot.assign(tree.nodes.size(), -1);
        for (std::size_t s = 0; s < n_active; ++s) node_slot[static_cast<std::size_t>(active[s])] = static_cast<int>(s);

        // Per-feature scan: each feature independently finds its best
        // candidate per node; the reduction below is sequential in feature
        // order so the result never depends on the thread schedule.
        std::vector<std::vector<Candidate>> per_feature(q);
        parallel_for(q, n_threads, [&](std::size_t f) {
            auto& cand = per_feature[f];
            cand.assign(n_active, Candidate{});
            std::vector<double> acc_g(n_active, 0.0), acc_h(n_active, 0.0);
            std::vector<double> last(n_active, 0.0);
            std::vector<std::uint8_t> seen(n_active, 0);
            const auto col = x.col(f);
            for (const std::uint32_t r : sorted_idx[f]) {
                const int u = node_of_row[r];
                if (u < 0 || node_slot[static_cast<std::size_t>(u)] < 0) continue;
                const auto s = static_cast<std::size_t>(node_slot[static_cast<std::size_t>(u)]);
                const double v = col[r];
                if (seen[s] && v > last[s]) {
                    const double hl = acc_h[s];
                    const double hr = node_h[s] - hl;
                    if (hl >= cfg.min_child_weight && hr >= cfg.min_child_weight) {
                        const double gain = split_gain(acc_g[s], hl, node_g[s] - acc_g[s], hr,
                                                       node_g[s], node_h[s], cfg.reg_lambda,
                                                       cfg.min_split_gain);
                        if (cand[s].feature < 0 || gain > cand[s].gain)
                            cand[s] = {gain, 0.5 * (last[s] + v), static_cast<int>(f)};
                    }
                }
                acc_g[s] += g[r];
                acc_h[s] += h[r];
                last[s] = v;
                seen[s] = 1;
            }
        });

        std::vector<Candidate> best(n_active);
        for (std::size_t f = 0; f < q; ++f)
            for (std::size_t s = 0; s < n_active; ++s) {
                const auto& c = per_feature[f][s];
                if (c.feature >= 0 && (best[s].feature < 0 || c.gain > best[s].gain)) best[s] = c;
            }

        std::vector<int> next_active;
        std::vector<double> next_g, next_h;
        for (std::size_t s = 0; s < n_active; ++s) {
            const int u = active[s];
            if (best[s].feature >= 0 && best[s].gain > 0.0) {
                auto& nd = tree.nodes[static_cast<std::size_t>(u)];
                nd.feature = best[s].feature;
                nd.threshold = best[s].threshold;
                nd.left = static_cast<int>(tree.nodes.size());
                nd.right = nd.left + 1;
                tree.nodes.push_back({});
                tree.nodes.push_back({});
                next_active.push_back(nd.left);
                next_active.push_back(nd.right);
                next_g.push_back(0.0);
                next_g.push_back(0.0);
                next_h.push_back(0.0);
                next_h.push_back(0.0);
            } else {
                tree.nodes[static_cast<std::size_t>(u)].weight =
                    -node_g[s] / (node_h[s] + cfg.reg_lambda);
            }
        }

        // Route rows of split nodes and accumulate child stats in row order.
        std::vector<int> slot_of_next(tree.nodes.size(), -1);
        for (std::size_t s = 0; s < next_active.size(); ++s)
            slot_of_next[static_cast<std::size_t>(next_active[s])] = static_cast<int>(s);
        for (std::size_t r = 0; r < n; ++r) {
            const int u = node_of_row[r];
            if (u < 0) continue;
            const auto slot = node_slot[static_cast<std::size_t>(u)];
            if (slot < 0) continue;
            const auto& nd = tree.nodes[static_cast<std::size_t>(u)];
            if (nd.is_leaf()) {
                node_of_row[r] = -2 - u; // settled; decoded after the loop over depths
                continue;
            }
            const double v = x.at(r, static_cast<std::size_t>(nd.feature));
            const int child = v < nd.threshold ? nd.left : nd.right;
            node_of_row[r] = child;
            const int cs = slot_of_next[static_cast<std::size_t>(child)];
            next_g[static_cast<std::size_t>(cs)] += g[r];
            next_h[static_cast<std::size_t>(cs)] += h[r];
        }

        active = std::move(next_active);
        node_g = std::move(next_g);
        node_h = std::move(next_h);
    }

    // Depth cap reached: remaining active nodes become leaves.
    node_slot.assign(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < active.size(); ++s) {
        tree.nodes[static_cast<std::size_t>(active[s])].weight =
            -node_g[s] / (node_h[s] + cfg.reg_lambda);
        node_slot[static_cast<std::size_t>(active[s])] = static_cast<int>(s);
    }
    return tree;
}

inline double mean_loss(Objective obj, int k, std::span<const double> raw,
                        std::span<const double> y) {
    const std::size_t n = y.size();
    double total = 0.0;
    switch (obj) {
        case Objective::kSquaredError:
            for (std::size_t i = 0; i < n; ++i) {
                const double d = raw[i] - y[i];
                total += 0.5 * d * d;
            }
            break;
        case Objective::kLogistic:
            for (std::size_t i = 0; i < n; ++i) {
                const double p = sigmoid(raw[i]);
                total -= y[i] > 0.5 ? std::log(std::max(p, 1e-300))
                                    : std::log(std::max(1.0 - p, 1e-300));
            }
            break;
        case Objective::kSoftmax: {
            std::vector<double> p(static_cast<std::size_t>(k));
            for (std::size_t i = 0; i < n; ++i) {
                softmax_row(raw, n, i, k, p.data());
                total -= std::log(std::max(p[static_cast<std::size_t>(y[i])], 1e-300));
            }
            break;
        }
    }
    return total / static_cast<double>(n);
}

} // namespace detail

// Fits a boosted ensemble on the encoded matrix. The target must be fully
// observed on the supplied rows; classification targets must contain every
// class index at least once. Deterministic given (data, config, seed),
// regardless of n_threads.
inline GbtModel train(const EncodedMatrix& x, std::span<const double> y, Objective obj,
                      int k_classes, const GbtConfig& cfg, std::uint64_t seed, int n_threads = 1) {
    cfg.validate();
    const std::size_t n = x.rows();
    if (n != y.size()) throw std::invalid_argument("train: matrix rows and target length differ");
    if (n < 2) throw std::invalid_argument("train: need at least 2 rows");
    for (double v : y)
        if (!std::isfinite(v)) throw std::invalid_argument("train: non-finite target");

    const int k = obj == Objective::kSoftmax ? k_classes : 1;
    GbtModel model;
    model.objective = obj;
    model.n_classes = k;
    model.learning_rate = cfg.learning_rate;
    model.feature_map = x.column_map();

    // Base score: one-step-converged intercept per objective.
    switch (obj) {
        case Objective::kSquaredError: {
            double mean = 0.0;
            for (double v : y) mean += v;
            model.base_score.assign(1, mean / static_cast<double>(n));
            break;
        }
        case Objective::kLogistic: {
            std::size_t ones = 0;
            for (double v : y) {
                if (v != 0.0 && v != 1.0)
                    throw std::invalid_argument("train: logistic targets must be 0 or 1");
                ones += v == 1.0;
            }
            if (ones == 0 || ones == n)
                throw std::invalid_argument("train: single-class target");
            const double rate = static_cast<double>(ones) / static_cast<double>(n);
            model.base_score.assign(1, std::log(rate / (1.0 - rate)));
            break;
        }
        case Objective::kSoftmax: {
            if (k < 2) throw std::invalid_argument("train: softmax needs K >= 2");
            std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
            for (double v : y) {
                if (v < 0 || v >= k || v != std::floor(v))
                    throw std::invalid_argument("train: softmax targets must be class indices");
                ++counts[static_cast<std::size_t>(v)];
            }
            for (std::size_t c = 0; c < counts.size(); ++c)
                if (counts[c] == 0)
                    throw std::invalid_argument("train: class " + std::to_string(c) +
                                                " absent from target");
            model.base_score.resize(static_cast<std::size_t>(k));
            for (int c = 0; c < k; ++c)
                model.base_score[static_cast<std::size_t>(c)] =
                    std::log(static_cast<double>(counts[static_cast<std::size_t>(c)]) /
                             static_cast<double>(n));
            break;
        }
    }

    // Presorted feature orders, shared by every round.
    const std::size_t q = x.cols();
    std::vector<std::vector<std::uint32_t>> sorted_idx(q);
    parallel_for(q, n_threads, [&](std::size_t f) {
        auto& idx = sorted_idx[f];
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), 0u);
        const auto col = x.col(f);
        std::sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
            return col[a] != col[b] ? col[a] < col[b] : a < b;
        });
    });

    std::vector<double> raw(n * static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c)
        std::fill_n(raw.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c) * n), n,
                    model.base_score[static_cast<std::size_t>(c)]);

    Rng rng(seed, 0x5eed);
    std::vector<int> node_of_row(n);
    model.rounds.reserve(static_cast<std::size_t>(cfg.rounds));
    for (int round = 0; round < cfg.rounds; ++round) {
        const GradHess gh = compute_grad_hess(obj, k, raw, y);

        std::vector<std::uint8_t> sampled(n, 1);
        if (cfg.subsample < 1.0) {
            std::size_t kept = 0;
            for (std::size_t r = 0; r < n; ++r) {
                sampled[r] = rng.bernoulli(cfg.subsample) ? 1 : 0;
                kept += sampled[r];
            }
            if (kept == 0) sampled.assign(n, 1); // degenerate draw; keep the round meaningful
        }

        std::vector<Tree> trees;
        trees.reserve(static_cast<std::size_t>(k));
        for (int c = 0; c < k; ++c) {
            for (std::size_t r = 0; r < n; ++r) node_of_row[r] = sampled[r] ? 0 : -1;
            const std::size_t off = static_cast<std::size_t>(c) * n;
            Tree t = detail::grow_tree(
                x, std::span<const double>(gh.g.data() + off, n),
                std::span<const double>(gh.h.data() + off, n), sorted_idx, cfg, node_of_row,
                n_threads);
            for (std::size_t r = 0; r < n; ++r)
                raw[off + r] += cfg.learning_rate * t.value(x, r);
            trees.push_back(std::move(t));
        }
        model.rounds.push_back(std::move(trees));
        model.train_loss.push_back(detail::mean_loss(obj, k, raw, y));
    }
    return model;
}

inline GbtModel train(const EncodedMatrix& x, std::span<const double> y, Objective obj,
                      const GbtConfig& cfg, std::uint64_t seed, int n_threads = 1) {
    return train(x, y, obj, obj == Objective::kSoftmax ? 0 : 1, cfg, seed, n_threads);
}

enum class PredictKind { kRaw, kValue, kProbability, kClassLabel };

// Evaluates the ensemble. kRaw returns class-major raw scores (n x K for
// softmax). kValue is regression only. kProbability gives P(class 1) for
// logistic and the class-major n x K matrix for softmax. kClassLabel is the
// argmax class, ties to the lowest index.
inline std::vector<double> predict(const GbtModel& model, const EncodedMatrix& x,
                                   PredictKind kind) {
    if (x.column_map() != model.feature_map)
        throw std::invalid_argument("predict: matrix columns do not match the model feature map");
    const std::size_t n = x.rows();
    const int k = model.n_classes;
    std::vector<double> raw(n * static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c)
        std::fill_n(raw.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c) * n), n,
                    model.base_score[static_cast<std::size_t>(c)]);
    for (const auto& round : model.rounds)
        for (int c = 0; c < k; ++c) {
            const std::size_t off = static_cast<std::size_t>(c) * n;
            for (std::size_t r = 0; r < n; ++r)
                raw[off + r] += model.learning_rate * round[static_cast<std::size_t>(c)].value(x, r);
        }

    switch (kind) {
        case PredictKind::kRaw:
            return raw;
        case PredictKind::kValue:
            if (model.objective != Objective::kSquaredError)
                throw std::invalid_argument("predict: kValue is for regression models");
            return raw;
        case PredictKind::kProbability: {
            if (model.objective == Objective::kLogistic) {
                std::vector<double> p(n);
                for (std::size_t r = 0; r < n; ++r) p[r] = detail::sigmoid(raw[r]);
                return p;
            }
            if (model.objective == Objective::kSoftmax) {
                std::vector<double> p(raw.size());
                std::vector<double> row(static_cast<std::size_t>(k));
                for (std::size_t r = 0; r < n; ++r) {
                    detail::softmax_row(raw, n, r, k, row.data());
                    for (int c = 0; c < k; ++c) p[static_cast<std::size_t>(c) * n + r] = row[static_cast<std::size_t>(c)];
                }
                return p;
            }
            throw std::invalid_argument("predict: kProbability is for classification models");
        }
        case PredictKind::kClassLabel: {
            std::vector<double> out(n);
            if (model.objective == Objective::kLogistic) {
                for (std::size_t r = 0; r < n; ++r)
                    out[r] = detail::sigmoid(raw[r]) > 0.5 ? 1.0 : 0.0;
                return out;
            }
            if (model.objective == Objective::kSoftmax) {
                for (std::size_t r = 0; r < n; ++r) {
                    int arg = 0;
                    double best = raw[r];
                    for (int c = 1; c < k; ++c) {
                        const double v = raw[static_cast<std::size_t>(c) * n + r];
                        if (v > best) {
                            best = v;
                            arg = c;
                        }
                    }
                    out[r] = arg;
                }
                return out;
            }
            throw std::invalid_argument("predict: kClassLabel is for classification models");
        }
    }
    throw std::logic_error("unreachable");
}

} // namespace gbmi
