#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "tapkit/core.hpp"
#include "tapkit/pca.hpp"

#include "json.hpp"

namespace tapkit {

struct KMeansModel {
  Matrix centroids;  // k_clusters x d
  double inertia{0.0};
  std::size_t iterations{0};
  bool converged{false};
};

struct KMeansParams {
  std::size_t k_clusters{2};
  std::uint64_t seed{0};
  double tol{1e-6};
  std::size_t max_iter{300};
  std::size_t restarts{16};
};

namespace detail {

inline double sq_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

// Nearest centroid by squared Euclidean distance, ties to the lowest index.
inline std::size_t nearest_centroid(const double* point, const Matrix& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    const double d = sq_distance(point, centroids.row(c), centroids.cols);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

// k-means++ seeding: first centroid uniform, then proportional to squared
// distance from the nearest chosen centroid.
inline Matrix kmeanspp_init(const Matrix& points, std::size_t k, std::mt19937_64& rng) {
  const std::size_t m = points.rows, d = points.cols;
  Matrix centroids(k, d);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  std::size_t first = static_cast<std::size_t>(uni(rng) * static_cast<double>(m));
  if (first >= m) first = m - 1;
  std::copy(points.row(first), points.row(first) + d, centroids.row(0));

  std::vector<double> dist2(m);
  for (std::size_t chosen = 1; chosen < k; ++chosen) {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < chosen; ++c)
        best = std::min(best, sq_distance(points.row(i), centroids.row(c), d));
      dist2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = uni(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        acc += dist2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(uni(rng) * static_cast<double>(m)) % m;
    }
    std::copy(points.row(pick), points.row(pick) + d, centroids.row(chosen));
  }
  return centroids;
}

// inertia_trace, when given, receives the objective value after every
// centroid update (test hook for the monotonicity property).
inline KMeansModel lloyd(const Matrix& points, Matrix centroids, const KMeansParams& params,
                         std::vector<double>* inertia_trace = nullptr) {
  const std::size_t m = points.rows, d = points.cols, k = centroids.rows;
  std::vector<std::size_t> assign(m, 0), prev_assign(m, k);
  KMeansModel model;

  for (std::size_t iter = 0; iter < params.max_iter; ++iter) {
    for (std::size_t i = 0; i < m; ++i) assign[i] = nearest_centroid(points.row(i), centroids);

    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < m; ++i) {
      ++counts[assign[i]];
      for (std::size_t c = 0; c < d; ++c) sums.at(assign[i], c) += points.at(i, c);
    }

    // An emptied cluster is reseeded to the point farthest from its current
    // centroid so the requested cluster count is preserved.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far_i = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double dd = sq_distance(points.row(i), centroids.row(assign[i]), d);
        if (dd > far_d) {
          far_d = dd;
          far_i = i;
        }
      }
      std::copy(points.row(far_i), points.row(far_i) + d, sums.row(c));
      counts[c] = 1;
      // Donor cluster loses the point.
      const std::size_t donor = assign[far_i];
      if (counts[donor] > 1) {
        --counts[donor];
        for (std::size_t cc = 0; cc < d; ++cc) sums.at(donor, cc) -= points.at(far_i, cc);
      }
      assign[far_i] = c;
    }

    double max_move = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t cc = 0; cc < d; ++cc) {
        const double nv = sums.at(c, cc) / static_cast<double>(counts[c]);
        max_move = std::max(max_move, std::abs(nv - centroids.at(c, cc)));
        centroids.at(c, cc) = nv;
      }
    }

    if (inertia_trace) {
      double obj = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        obj += sq_distance(points.row(i), centroids.row(assign[i]), d);
      inertia_trace->push_back(obj);
    }

    model.iterations = iter + 1;
    if (assign == prev_assign || max_move < params.tol) {
      model.converged = true;
      break;
    }
    prev_assign = assign;
  }

  // Polish: single-point moves with exact centroid-shift accounting. Lloyd
  // stops when every point sits with its nearest centroid, but a move can
  // still pay off once the donor and receiver centroids are allowed to
  // shift; applying those moves settles the stronger optimality condition.
  {
    for (std::size_t i = 0; i < m; ++i) assign[i] = nearest_centroid(points.row(i), centroids);
    std::vector<std::size_t> counts(k, 0);
    Matrix sums(k, d);
    for (std::size_t i = 0; i < m; ++i) {
      ++counts[assign[i]];
      for (std::size_t c = 0; c < d; ++c) sums.at(assign[i], c) += points.at(i, c);
    }
    bool moved = true;
    std::size_t polish_rounds = 0;
    while (moved && polish_rounds < params.max_iter) {
      moved = false;
      ++polish_rounds;
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t from = assign[i];
        if (counts[from] <= 1) continue;
        const double na = static_cast<double>(counts[from]);
        const double d_from = sq_distance(points.row(i), centroids.row(from), d);
        double best_gain = 1e-12;  // strictly improving moves only
        std::size_t best_to = from;
        for (std::size_t to = 0; to < k; ++to) {
          if (to == from) continue;
          const double nb = static_cast<double>(counts[to]);
          const double d_to = sq_distance(points.row(i), centroids.row(to), d);
          const double gain = na / (na - 1.0) * d_from - nb / (nb + 1.0) * d_to;
          if (gain > best_gain) {
            best_gain = gain;
            best_to = to;
          }
        }
        if (best_to == from) continue;
        moved = true;
        for (std::size_t c = 0; c < d; ++c) {
          sums.at(from, c) -= points.at(i, c);
          sums.at(best_to, c) += points.at(i, c);
        }
        --counts[from];
        ++counts[best_to];
        assign[i] = best_to;
        for (std::size_t c = 0; c < d; ++c) {
          centroids.at(from, c) = sums.at(from, c) / static_cast<double>(counts[from]);
          centroids.at(best_to, c) = sums.at(best_to, c) / static_cast<double>(counts[best_to]);
        }
      }
    }
  }

  // Final assignment against the final centroids.
  double inertia = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t c = nearest_centroid(points.row(i), centroids);
    inertia += sq_distance(points.row(i), centroids.row(c), d);
  }
  model.centroids = std::move(centroids);
  model.inertia = inertia;
  return model;
}

}  // namespace detail

// Lloyd iterations from k-means++ seeds, best of `restarts` runs by inertia.
inline KMeansModel kmeans_fit(const ScoreMatrix& scores, const KMeansParams& params) {
  const Matrix& points = scores.scores;
  if (points.rows < params.k_clusters) throw std::invalid_argument("kmeans_fit: fewer points than clusters");
  if (params.k_clusters < 1) throw std::invalid_argument("kmeans_fit: need at least one cluster");
  if (!(params.tol > 0.0)) throw std::invalid_argument("kmeans_fit: tol must be > 0");

  KMeansModel best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(1, params.restarts); ++r) {
    std::mt19937_64 rng(mix_seed(params.seed, r));
    Matrix init = detail::kmeanspp_init(points, params.k_clusters, rng);
    KMeansModel model = detail::lloyd(points, std::move(init), params);
    if (model.inertia < best.inertia) best = std::move(model);
  }
  return best;
}

inline std::vector<std::size_t> kmeans_assign(const ScoreMatrix& points, const KMeansModel& model) {
  if (points.scores.cols != model.centroids.cols)
    throw std::invalid_argument("kmeans_assign: dimension mismatch");
  std::vector<std::size_t> labels(points.scores.rows);
  for (std::size_t i = 0; i < points.scores.rows; ++i)
    labels[i] = detail::nearest_centroid(points.scores.row(i), model.centroids);
  return labels;
}

// Majority-vote mapping from cluster ids to class labels. A tied cluster maps
// to unhealthy: in inspection, the costly mistake is calling a defect sound.
inline std::map<std::size_t, Condition> map_clusters_to_classes(
    const std::vector<std::size_t>& cluster_labels, const std::vector<Condition>& true_labels) {
  if (cluster_labels.empty() || cluster_labels.size() != true_labels.size())
    throw std::invalid_argument("map_clusters_to_classes: empty or mismatched inputs");
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> votes;  // cluster -> (healthy, unhealthy)
  for (std::size_t i = 0; i < cluster_labels.size(); ++i) {
    auto& v = votes[cluster_labels[i]];
    if (true_labels[i] == Condition::healthy)
      ++v.first;
    else
      ++v.second;
  }
  std::map<std::size_t, Condition> mapping;
  for (const auto& [cluster, v] : votes)
    mapping[cluster] = (v.first > v.second) ? Condition::healthy : Condition::unhealthy;
  return mapping;
}

// ---------------------------------------------------------------------------
// Decision tree (binary splits on single features, Gini impurity).

struct TreeNode {
  bool is_leaf{true};
  // internal
  std::size_t feature{0};
  double threshold{0.0};
  std::unique_ptr<TreeNode> left;
  std::unique_ptr<TreeNode> right;
  // leaf
  Condition klass{Condition::unhealthy};
  std::size_t count_healthy{0};
  std::size_t count_unhealthy{0};
};

struct DecisionTree {
  std::unique_ptr<TreeNode> root;
  std::size_t max_depth{4};
};

struct TreeParams {
  std::size_t max_depth{4};
  std::size_t min_leaf{2};
};

namespace detail {

inline double gini(std::size_t healthy, std::size_t unhealthy) {
  const double total = static_cast<double>(healthy + unhealthy);
  if (total == 0.0) return 0.0;
  const double ph = static_cast<double>(healthy) / total;
  const double pu = static_cast<double>(unhealthy) / total;
  return 1.0 - ph * ph - pu * pu;
}

inline std::unique_ptr<TreeNode> make_leaf(std::size_t healthy, std::size_t unhealthy) {
  auto leaf = std::make_unique<TreeNode>();
  leaf->is_leaf = true;
  leaf->count_healthy = healthy;
  leaf->count_unhealthy = unhealthy;
  leaf->klass = (healthy > unhealthy) ? Condition::healthy : Condition::unhealthy;
  return leaf;
}

inline std::unique_ptr<TreeNode> grow_tree(const Matrix& x, const std::vector<Condition>& y,
                                           const std::vector<std::size_t>& rows, std::size_t depth,
                                           const TreeParams& params) {
  std::size_t healthy = 0, unhealthy = 0;
  for (std::size_t r : rows)
    (y[r] == Condition::healthy ? healthy : unhealthy) += 1;

  if (healthy == 0 || unhealthy == 0 || depth >= params.max_depth || rows.size() < 2 * params.min_leaf)
    return make_leaf(healthy, unhealthy);

  // Best split: weighted child impurity, ties resolved toward the lowest
  // feature index and then the lowest threshold so training is deterministic.
  const double parent_score = gini(healthy, unhealthy);
  double best_score = parent_score;
  std::size_t best_feature = x.cols;
  double best_threshold = 0.0;

  std::vector<std::pair<double, Condition>> sorted(rows.size());
  for (std::size_t f = 0; f < x.cols; ++f) {
    for (std::size_t i = 0; i < rows.size(); ++i) sorted[i] = {x.at(rows[i], f), y[rows[i]]};
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::size_t lh = 0, lu = 0;
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      (sorted[i].second == Condition::healthy ? lh : lu) += 1;
      if (sorted[i].first == sorted[i + 1].first) continue;  // no midpoint between equal values
      const std::size_t left_n = i + 1, right_n = sorted.size() - left_n;
      if (left_n < params.min_leaf || right_n < params.min_leaf) continue;
      const double score =
          (static_cast<double>(left_n) * gini(lh, lu) +
           static_cast<double>(right_n) * gini(healthy - lh, unhealthy - lu)) /
          static_cast<double>(sorted.size());
      if (score < best_score - 1e-15) {
        best_score = score;
        best_feature = f;
        best_threshold = 0.5 * (sorted[i].first + sorted[i + 1].first);
      }
    }
  }

  if (best_feature >= x.cols) return make_leaf(healthy, unhealthy);

  std::vector<std::size_t> left_rows, right_rows;
  for (std::size_t r : rows)
    (x.at(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);

  auto node = std::make_unique<TreeNode>();
  node->is_leaf = false;
  node->feature = best_feature;
  node->threshold = best_threshold;
  node->count_healthy = healthy;
  node->count_unhealthy = unhealthy;
  node->left = grow_tree(x, y, left_rows, depth + 1, params);
  node->right = grow_tree(x, y, right_rows, depth + 1, params);
  return node;
}

}  // namespace detail

// Greedy binary tree on score rows. A single-class input yields a depth-0
// leaf; an empty input is an error.
inline DecisionTree tree_fit(const ScoreMatrix& scores, const std::vector<Condition>& labels,
                             const TreeParams& params = {}) {
  if (scores.scores.rows == 0) throw std::invalid_argument("tree_fit: empty input");
  if (labels.size() != scores.scores.rows)
    throw std::invalid_argument("tree_fit: one label per row required");
  if (params.min_leaf < 1) throw std::invalid_argument("tree_fit: min_leaf must be >= 1");

  std::vector<std::size_t> rows(scores.scores.rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  DecisionTree tree;
  tree.max_depth = params.max_depth;
  tree.root = detail::grow_tree(scores.scores, labels, rows, 0, params);
  return tree;
}

inline Condition tree_predict_row(const TreeNode* node, const double* row, std::size_t d) {
  while (!node->is_leaf) {
    if (node->feature >= d) throw std::invalid_argument("tree_predict: dimension mismatch");
    node = (row[node->feature] <= node->threshold) ? node->left.get() : node->right.get();
  }
  return node->klass;
}

inline std::vector<Condition> tree_predict(const DecisionTree& tree, const ScoreMatrix& scores) {
  if (!tree.root) throw std::invalid_argument("tree_predict: empty tree");
  std::vector<Condition> out(scores.scores.rows);
  for (std::size_t r = 0; r < scores.scores.rows; ++r)
    out[r] = tree_predict_row(tree.root.get(), scores.scores.row(r), scores.scores.cols);
  return out;
}

inline std::size_t tree_depth(const TreeNode* node) {
  if (!node || node->is_leaf) return 0;
  return 1 + std::max(tree_depth(node->left.get()), tree_depth(node->right.get()));
}

// ---------------------------------------------------------------------------
// JSON persistence

inline nlohmann::json kmeans_to_json(const KMeansModel& m) {
  return nlohmann::json{{"k", m.centroids.rows},
                        {"d", m.centroids.cols},
                        {"centroids", m.centroids.data},
                        {"inertia", m.inertia},
                        {"iterations", m.iterations},
                        {"converged", m.converged}};
}

inline KMeansModel kmeans_from_json(const nlohmann::json& j) {
  KMeansModel m;
  m.centroids.rows = j.at("k").get<std::size_t>();
  m.centroids.cols = j.at("d").get<std::size_t>();
  m.centroids.data = j.at("centroids").get<std::vector<double>>();
  if (m.centroids.data.size() != m.centroids.rows * m.centroids.cols)
    throw IoError("kmeans json: centroid size mismatch");
  m.inertia = j.at("inertia").get<double>();
  m.iterations = j.at("iterations").get<std::size_t>();
  m.converged = j.at("converged").get<bool>();
  return m;
}

inline nlohmann::json tree_node_to_json(const TreeNode* node) {
  if (node->is_leaf) {
    return nlohmann::json{{"class", condition_name(node->klass)},
                          {"count_healthy", node->count_healthy},
                          {"count_unhealthy", node->count_unhealthy}};
  }
  return nlohmann::json{{"feature", node->feature},
                        {"threshold", node->threshold},
                        {"left", tree_node_to_json(node->left.get())},
                        {"right", tree_node_to_json(node->right.get())}};
}

inline std::unique_ptr<TreeNode> tree_node_from_json(const nlohmann::json& j) {
  auto node = std::make_unique<TreeNode>();
  if (j.contains("class")) {
    node->is_leaf = true;
    node->klass = condition_from_name(j.at("class").get<std::string>());
    node->count_healthy = j.at("count_healthy").get<std::size_t>();
    node->count_unhealthy = j.at("count_unhealthy").get<std::size_t>();
  } else {
    node->is_leaf = false;
    node->feature = j.at("feature").get<std::size_t>();
    node->threshold = j.at("threshold").get<double>();
    node->left = tree_node_from_json(j.at("left"));
    node->right = tree_node_from_json(j.at("right"));
  }
  return node;
}

inline nlohmann::json tree_to_json(const DecisionTree& t) {
  return nlohmann::json{{"max_depth", t.max_depth}, {"root", tree_node_to_json(t.root.get())}};
}

inline DecisionTree tree_from_json(const nlohmann::json& j) {
  DecisionTree t;
  t.max_depth = j.at("max_depth").get<std::size_t>();
  t.root = tree_node_from_json(j.at("root"));
  return t;
}

}  // namespace tapkit
