#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bendlab/bendsem.hpp"
#include "bendlab/featex.hpp"

// Classification trees and their supporting cast, built for bit-for-bit
// reproducibility: every source of randomness is an explicit seed, every
// tie has a written rule, and a saved model reloads to identical output.

namespace bendlab {

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

/// Tiny splittable generator with full 2^64 period and no global state.
/// Constants are the standard golden-ratio increment and mixing multipliers
/// for this generator family.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97f4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform-ish draw in [0, n); the modulo bias is irrelevant at the data
  /// sizes involved and keeps the consumption pattern trivial to document.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw std::domain_error("next_below(0)");
    return next() % n;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Decision tree
// ---------------------------------------------------------------------------

enum class ClassWeighting { uniform, balanced };

struct TreeParams {
  std::optional<int> max_depth;  // absent = grow until other limits bite
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  ClassWeighting weighting = ClassWeighting::uniform;
};

/// Binary split node. feature < 0 marks a leaf; otherwise samples with
/// values[feature] <= threshold go left.
struct TreeNode {
  std::array<std::int64_t, num_labels> counts{};  // training samples reaching here
  int feature = -1;
  double threshold = 0;
  int left = -1;
  int right = -1;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // preorder; nodes[0] is the root
  std::array<double, num_labels> class_weights{1, 1, 1, 1};

  bool operator==(const Tree&) const = default;
};

struct SplitCandidate {
  int feature = 0;
  double threshold = 0;
  double gain = 0;
};

namespace learn_detail {

using Counts = std::array<std::int64_t, num_labels>;
using Weights = std::array<double, num_labels>;

inline double weighted_total(const Counts& c, const Weights& w) {
  double t = 0;
  for (int i = 0; i < num_labels; ++i) t += w[static_cast<std::size_t>(i)] * c[static_cast<std::size_t>(i)];
  return t;
}

/// Gini impurity of a weighted class distribution: 1 - sum of squared
/// class shares. Empty distributions count as pure.
inline double gini(const Counts& c, const Weights& w) {
  double total = weighted_total(c, w);
  if (total <= 0) return 0;
  double sumsq = 0;
  for (int i = 0; i < num_labels; ++i) {
    double share = w[static_cast<std::size_t>(i)] * c[static_cast<std::size_t>(i)] / total;
    sumsq += share * share;
  }
  return 1.0 - sumsq;
}

/// Impurity decrease of a parent -> (left, right) split, weighted by the
/// mass that flows into each side.
inline double split_gain(const Counts& parent, const Counts& left, const Counts& right,
                         const Weights& w) {
  double wp = weighted_total(parent, w);
  if (wp <= 0) return 0;
  double wl = weighted_total(left, w);
  double wr = weighted_total(right, w);
  return gini(parent, w) - (wl / wp) * gini(left, w) - (wr / wp) * gini(right, w);
}

/// Exhaustive search over the given features: every midpoint between
/// consecutive distinct values is a candidate; the highest gain wins and
/// ties keep the lowest feature index, then the lowest threshold (the scan
/// order, so "first strictly better" implements it). With
/// require_positive_gain the search reports only strict improvements.
inline std::optional<SplitCandidate> search_split(const std::vector<FeatureRecord>& data,
                                                  const std::vector<std::size_t>& indices,
                                                  const std::vector<int>& features,
                                                  const Weights& weights, int min_samples_leaf,
                                                  bool require_positive_gain) {
  Counts parent{};
  for (std::size_t idx : indices) ++parent[static_cast<std::size_t>(data[idx].label)];

  std::optional<SplitCandidate> best;
  std::vector<std::pair<double, Label>> column;
  column.reserve(indices.size());

  for (int f : features) {
    column.clear();
    for (std::size_t idx : indices)
      column.emplace_back(data[idx].values[static_cast<std::size_t>(f)], data[idx].label);
    std::sort(column.begin(), column.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    Counts left{};
    std::int64_t n_left = 0;
    for (std::size_t i = 0; i + 1 < column.size(); ++i) {
      ++left[static_cast<std::size_t>(column[i].second)];
      ++n_left;
      if (!(column[i].first < column[i + 1].first)) continue;
      std::int64_t n_right = static_cast<std::int64_t>(column.size()) - n_left;
      if (n_left < min_samples_leaf || n_right < min_samples_leaf) continue;
      double threshold = (column[i].first + column[i + 1].first) / 2;
      // Adjacent representable values can round the midpoint onto either
      // endpoint, which would leak a sample across the boundary; skip.
      if (!(column[i].first <= threshold && threshold < column[i + 1].first)) continue;
      Counts right{};
      for (int c = 0; c < num_labels; ++c)
        right[static_cast<std::size_t>(c)] =
            parent[static_cast<std::size_t>(c)] - left[static_cast<std::size_t>(c)];
      double gain = split_gain(parent, left, right, weights);
      if (require_positive_gain && !(gain > 0)) continue;
      if (!best || gain > best->gain) best = SplitCandidate{f, threshold, gain};
    }
  }
  return best;
}

inline std::vector<int> all_features() {
  std::vector<int> fs(num_features);
  for (std::size_t i = 0; i < num_features; ++i) fs[i] = static_cast<int>(i);
  return fs;
}

inline Weights make_weights(const Counts& totals, ClassWeighting weighting) {
  Weights w{1, 1, 1, 1};
  if (weighting == ClassWeighting::balanced) {
    std::int64_t n = 0;
    for (std::int64_t c : totals) n += c;
    for (int i = 0; i < num_labels; ++i) {
      std::int64_t c = totals[static_cast<std::size_t>(i)];
      w[static_cast<std::size_t>(i)] =
          c > 0 ? static_cast<double>(n) / (static_cast<double>(num_labels) * c) : 0.0;
    }
  }
  return w;
}

/// Hands each split node its candidate features; the forest draws a random
/// subset, a lone tree considers them all.
struct FeatureSampler {
  virtual ~FeatureSampler() = default;
  virtual std::vector<int> draw() = 0;
};

inline int grow(const std::vector<FeatureRecord>& data, std::vector<std::size_t>& indices,
                const TreeParams& params, const Weights& weights, FeatureSampler* sampler,
                int depth, Tree& tree) {
  int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(TreeNode{});
  Counts counts{};
  for (std::size_t idx : indices) ++counts[static_cast<std::size_t>(data[idx].label)];
  tree.nodes[static_cast<std::size_t>(id)].counts = counts;

  int distinct = 0;
  for (std::int64_t c : counts)
    if (c > 0) ++distinct;
  bool can_split = distinct > 1 &&
                   static_cast<std::int64_t>(indices.size()) >= params.min_samples_split &&
                   (!params.max_depth || depth < *params.max_depth);
  if (!can_split) return id;

  std::vector<int> features = sampler ? sampler->draw() : all_features();
  // Even a zero-gain split keeps growing an impure node: structure such as
  // exclusive-or needs one uninformative cut before the informative ones.
  auto cand =
      search_split(data, indices, features, weights, params.min_samples_leaf, false);
  if (!cand) return id;

  std::vector<std::size_t> left_idx, right_idx;
  for (std::size_t idx : indices) {
    if (data[idx].values[static_cast<std::size_t>(cand->feature)] <= cand->threshold)
      left_idx.push_back(idx);
    else
      right_idx.push_back(idx);
  }
  indices.clear();
  indices.shrink_to_fit();

  int left = grow(data, left_idx, params, weights, sampler, depth + 1, tree);
  int right = grow(data, right_idx, params, weights, sampler, depth + 1, tree);
  TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
  node.feature = cand->feature;
  node.threshold = cand->threshold;
  node.left = left;
  node.right = right;
  return id;
}

}  // namespace learn_detail

/// Best single split of the given samples over all 33 features, or absent
/// when no split strictly reduces weighted impurity.
inline std::optional<SplitCandidate> best_split(const std::vector<FeatureRecord>& data,
                                                const TreeParams& params = {}) {
  std::vector<std::size_t> indices(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) indices[i] = i;
  learn_detail::Counts totals{};
  for (const FeatureRecord& r : data) ++totals[static_cast<std::size_t>(r.label)];
  auto weights = learn_detail::make_weights(totals, params.weighting);
  return learn_detail::search_split(data, indices, learn_detail::all_features(), weights,
                                    params.min_samples_leaf, true);
}

/// Grows a tree by recursive best-first splitting until nodes are pure,
/// too small, or at max depth. Same data, same params: same tree.
inline Tree fit_tree(const std::vector<FeatureRecord>& data, const TreeParams& params = {}) {
  if (data.empty()) throw std::domain_error("cannot fit a tree on no samples");
  Tree tree;
  learn_detail::Counts totals{};
  for (const FeatureRecord& r : data) ++totals[static_cast<std::size_t>(r.label)];
  tree.class_weights = learn_detail::make_weights(totals, params.weighting);
  std::vector<std::size_t> indices(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) indices[i] = i;
  learn_detail::grow(data, indices, params, tree.class_weights, nullptr, 0, tree);
  return tree;
}

namespace learn_detail {

inline int leaf_for(const Tree& tree, const FeatureVector& values) {
  int at = 0;
  while (!tree.nodes[static_cast<std::size_t>(at)].is_leaf()) {
    const TreeNode& n = tree.nodes[static_cast<std::size_t>(at)];
    at = values[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return at;
}

}  // namespace learn_detail

/// Weighted class distribution at the reached leaf, normalized to sum 1.
inline std::array<double, num_labels> predict_proba(const Tree& tree,
                                                    const FeatureVector& values) {
  if (tree.nodes.empty()) throw std::domain_error("empty tree");
  const TreeNode& leaf =
      tree.nodes[static_cast<std::size_t>(learn_detail::leaf_for(tree, values))];
  std::array<double, num_labels> p{};
  double total = 0;
  for (int c = 0; c < num_labels; ++c) {
    p[static_cast<std::size_t>(c)] =
        tree.class_weights[static_cast<std::size_t>(c)] * leaf.counts[static_cast<std::size_t>(c)];
    total += p[static_cast<std::size_t>(c)];
  }
  if (total > 0)
    for (double& x : p) x /= total;
  return p;
}

/// Most probable label; probability ties go to the earlier label in the
/// canonical order none, up, held, down.
inline Label predict(const Tree& tree, const FeatureVector& values) {
  auto p = predict_proba(tree, values);
  int best = 0;
  for (int c = 1; c < num_labels; ++c)
    if (p[static_cast<std::size_t>(c)] > p[static_cast<std::size_t>(best)]) best = c;
  return static_cast<Label>(best);
}

/// One comparison on the root-to-leaf walk of a prediction.
struct PathStep {
  int node = 0;
  int feature = 0;
  std::string feature_name;
  double threshold = 0;
  double value = 0;
  bool went_left = false;

  bool operator==(const PathStep&) const = default;
};

inline std::vector<PathStep> decision_path(const Tree& tree, const FeatureVector& values) {
  if (tree.nodes.empty()) throw std::domain_error("empty tree");
  std::vector<PathStep> steps;
  int at = 0;
  while (!tree.nodes[static_cast<std::size_t>(at)].is_leaf()) {
    const TreeNode& n = tree.nodes[static_cast<std::size_t>(at)];
    double v = values[static_cast<std::size_t>(n.feature)];
    bool left = v <= n.threshold;
    steps.push_back(PathStep{at, n.feature, feature_registry()[static_cast<std::size_t>(n.feature)].name,
                             n.threshold, v, left});
    at = left ? n.left : n.right;
  }
  return steps;
}

/// Impurity-decrease importances: each split contributes its gain scaled by
/// the weighted share of samples reaching it; the result sums to 1 unless
/// the tree never splits (then all zeros).
inline std::array<double, num_features> feature_importance(const Tree& tree) {
  std::array<double, num_features> imp{};
  if (tree.nodes.empty()) return imp;
  double root_mass = learn_detail::weighted_total(tree.nodes[0].counts, tree.class_weights);
  if (root_mass <= 0) return imp;
  for (const TreeNode& n : tree.nodes) {
    if (n.is_leaf()) continue;
    const TreeNode& l = tree.nodes[static_cast<std::size_t>(n.left)];
    const TreeNode& r = tree.nodes[static_cast<std::size_t>(n.right)];
    double node_mass = learn_detail::weighted_total(n.counts, tree.class_weights);
    double gain = learn_detail::split_gain(n.counts, l.counts, r.counts, tree.class_weights);
    imp[static_cast<std::size_t>(n.feature)] += (node_mass / root_mass) * gain;
  }
  double total = 0;
  for (double x : imp) total += x;
  if (total > 0)
    for (double& x : imp) x /= total;
  return imp;
}

// ---------------------------------------------------------------------------
// Synthetic minority oversampling
// ---------------------------------------------------------------------------

struct SmoteParams {
  int k = 5;                 // neighbours considered per synthetic sample
  double target_ratio = 1.0; // grow each class to ratio * majority count
  std::uint64_t seed = 0;
};

/// Oversamples minority classes by interpolating between a random class
/// member and one of its k nearest same-class neighbours (z-scored
/// Euclidean distance). Integer and boolean dimensions are rounded back to
/// their grid afterwards. Draw order is fixed: classes in canonical order;
/// per sample one base draw, one neighbour draw, one interpolation draw.
inline std::vector<FeatureRecord> smote(const std::vector<FeatureRecord>& data,
                                        const SmoteParams& params,
                                        std::vector<std::string>* warnings = nullptr) {
  if (params.k < 1) throw std::domain_error("smote needs k >= 1");
  if (params.target_ratio <= 0) throw std::domain_error("smote needs a positive target ratio");
  std::vector<FeatureRecord> out = data;
  if (data.empty()) return out;

  std::array<std::vector<std::size_t>, num_labels> by_class;
  for (std::size_t i = 0; i < data.size(); ++i)
    by_class[static_cast<std::size_t>(data[i].label)].push_back(i);
  std::int64_t majority = 0;
  for (const auto& members : by_class)
    majority = std::max(majority, static_cast<std::int64_t>(members.size()));
  std::int64_t target =
      static_cast<std::int64_t>(std::ceil(params.target_ratio * static_cast<double>(majority)));

  // Scale for the distance metric only; constant dimensions drop out.
  std::array<double, num_features> mean{}, sdev{};
  for (const FeatureRecord& r : data)
    for (std::size_t d = 0; d < num_features; ++d) mean[d] += r.values[d];
  for (double& m : mean) m /= static_cast<double>(data.size());
  for (const FeatureRecord& r : data)
    for (std::size_t d = 0; d < num_features; ++d) {
      double diff = r.values[d] - mean[d];
      sdev[d] += diff * diff;
    }
  for (double& s : sdev) s = std::sqrt(s / static_cast<double>(data.size()));

  auto distance2 = [&](const FeatureVector& a, const FeatureVector& b) {
    double acc = 0;
    for (std::size_t d = 0; d < num_features; ++d) {
      if (sdev[d] <= 0) continue;
      double diff = (a[d] - b[d]) / sdev[d];
      acc += diff * diff;
    }
    return acc;
  };

  SplitMix64 rng(params.seed);
  for (int c = 0; c < num_labels; ++c) {
    const std::vector<std::size_t>& members = by_class[static_cast<std::size_t>(c)];
    std::int64_t have = static_cast<std::int64_t>(members.size());
    if (have == 0 || have >= target) continue;
    if (have == 1) {
      if (warnings)
        warnings->push_back(std::string("class ") + label_name(static_cast<Label>(c)) +
                            " has a single sample; cannot synthesize neighbours");
      continue;
    }
    int k = static_cast<int>(std::min<std::int64_t>(params.k, have - 1));
    std::int64_t need = target - have;
    for (std::int64_t s = 0; s < need; ++s) {
      std::size_t base_pos = static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(have)));
      const FeatureRecord& base = data[members[base_pos]];

      // k nearest same-class neighbours of the base, self excluded;
      // distance ties keep the lower member position.
      std::vector<std::pair<double, std::size_t>> dists;
      dists.reserve(members.size() - 1);
      for (std::size_t m = 0; m < members.size(); ++m) {
        if (m == base_pos) continue;
        dists.emplace_back(distance2(base.values, data[members[m]].values), m);
      }
      std::sort(dists.begin(), dists.end());
      std::size_t pick = static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(k)));
      const FeatureRecord& nn = data[members[dists[pick].second]];

      double u = rng.next_double();
      FeatureRecord synth;
      synth.track_id = "synthetic";
      synth.event_index = static_cast<std::size_t>(s);
      synth.label = static_cast<Label>(c);
      for (std::size_t d = 0; d < num_features; ++d) {
        double val = base.values[d] + u * (nn.values[d] - base.values[d]);
        const FeatureInfo& info = feature_registry()[d];
        if (info.kind == ValueKind::boolean) {
          val = val >= 0.5 ? 1.0 : 0.0;
        } else if (info.kind == ValueKind::integer) {
          val = std::floor(val + 0.5);
          val = std::min(std::max(val, info.min), info.max);
        }
        synth.values[d] = val;
      }
      out.push_back(std::move(synth));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

struct ForestParams {
  int num_trees = 100;
  int features_per_split = 0;  // 0 = ceil(sqrt(33)) = 6
  TreeParams tree;
  std::uint64_t seed = 0;
};

struct Forest {
  std::vector<Tree> trees;
  int features_per_split = 0;

  bool operator==(const Forest&) const = default;
};

namespace learn_detail {

/// Draws m distinct feature indices by a partial shuffle, returned in
/// ascending order so split tie-breaking stays the same as for full trees.
struct SubsetSampler : FeatureSampler {
  SplitMix64& rng;
  int m;
  SubsetSampler(SplitMix64& r, int m_) : rng(r), m(m_) {}

  std::vector<int> draw() override {
    std::vector<int> pool = all_features();
    for (int i = 0; i < m; ++i) {
      std::size_t j = static_cast<std::size_t>(i) +
                      static_cast<std::size_t>(rng.next_below(pool.size() - static_cast<std::size_t>(i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(m));
    std::sort(pool.begin(), pool.end());
    return pool;
  }
};

}  // namespace learn_detail

/// Bagged trees: each tree fits a bootstrap resample and draws a fresh
/// feature subset at every split. Tree t's generator is seeded from the
/// t-th draw of a master generator seeded with params.seed, so the forest
/// is reproducible and trees are independent. features_per_split equal to
/// the full feature count disables subsetting entirely.
inline Forest fit_forest(const std::vector<FeatureRecord>& data, const ForestParams& params) {
  if (data.empty()) throw std::domain_error("cannot fit a forest on no samples");
  if (params.num_trees < 1) throw std::domain_error("forest needs at least one tree");
  int m = params.features_per_split;
  if (m == 0) m = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(num_features))));
  if (m < 1 || m > static_cast<int>(num_features))
    throw std::domain_error("features_per_split out of range");

  Forest forest;
  forest.features_per_split = m;
  SplitMix64 master(params.seed);
  for (int t = 0; t < params.num_trees; ++t) {
    SplitMix64 tree_rng(master.next());
    std::vector<FeatureRecord> sample;
    sample.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
      sample.push_back(data[static_cast<std::size_t>(tree_rng.next_below(data.size()))]);

    Tree tree;
    learn_detail::Counts totals{};
    for (const FeatureRecord& r : sample) ++totals[static_cast<std::size_t>(r.label)];
    tree.class_weights = learn_detail::make_weights(totals, params.tree.weighting);
    std::vector<std::size_t> indices(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) indices[i] = i;
    if (m == static_cast<int>(num_features)) {
      learn_detail::grow(sample, indices, params.tree, tree.class_weights, nullptr, 0, tree);
    } else {
      learn_detail::SubsetSampler sampler(tree_rng, m);
      learn_detail::grow(sample, indices, params.tree, tree.class_weights, &sampler, 0, tree);
    }
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

/// Majority vote over the trees; vote ties go to the earlier label in
/// canonical order.
inline Label predict(const Forest& forest, const FeatureVector& values) {
  if (forest.trees.empty()) throw std::domain_error("empty forest");
  std::array<int, num_labels> votes{};
  for (const Tree& t : forest.trees) ++votes[static_cast<std::size_t>(predict(t, values))];
  int best = 0;
  for (int c = 1; c < num_labels; ++c)
    if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
  return static_cast<Label>(best);
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

/// A model file whose feature registry disagrees with this build.
class ModelMismatchError : public std::runtime_error {
 public:
  explicit ModelMismatchError(const std::string& what) : std::runtime_error(what) {}
};

/// A model file that is not a well-formed model at all.
class ModelFormatError : public std::runtime_error {
 public:
  explicit ModelFormatError(const std::string& what) : std::runtime_error(what) {}
};

enum class ModelKind { tree, forest };

struct Model {
  ModelKind kind = ModelKind::tree;
  Tree tree;      // kind == tree
  Forest forest;  // kind == forest

  bool operator==(const Model&) const = default;
};

inline Label predict(const Model& model, const FeatureVector& values) {
  return model.kind == ModelKind::tree ? predict(model.tree, values)
                                       : predict(model.forest, values);
}

namespace learn_detail {

inline nlohmann::json tree_to_json(const Tree& tree) {
  nlohmann::json jt;
  jt["class_weights"] = tree.class_weights;
  nlohmann::json nodes = nlohmann::json::array();
  for (const TreeNode& n : tree.nodes) {
    nlohmann::json jn;
    jn["counts"] = n.counts;
    if (!n.is_leaf()) {
      jn["feature"] = n.feature;
      jn["threshold"] = n.threshold;
      jn["left"] = n.left;
      jn["right"] = n.right;
    }
    nodes.push_back(std::move(jn));
  }
  jt["nodes"] = std::move(nodes);
  return jt;
}

inline Tree tree_from_json(const nlohmann::json& jt, const std::string& where) {
  if (!jt.is_object() || !jt.contains("nodes") || !jt["nodes"].is_array() ||
      !jt.contains("class_weights") || !jt["class_weights"].is_array() ||
      jt["class_weights"].size() != num_labels)
    throw ModelFormatError(where + ": malformed tree object");
  Tree tree;
  for (std::size_t i = 0; i < num_labels; ++i) {
    if (!jt["class_weights"][i].is_number())
      throw ModelFormatError(where + ": class weight is not a number");
    tree.class_weights[i] = jt["class_weights"][i].get<double>();
  }
  const nlohmann::json& nodes = jt["nodes"];
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const nlohmann::json& jn = nodes[i];
    std::string nw = where + ": node " + std::to_string(i);
    if (!jn.is_object() || !jn.contains("counts") || !jn["counts"].is_array() ||
        jn["counts"].size() != num_labels)
      throw ModelFormatError(nw + " malformed");
    TreeNode n;
    for (std::size_t c = 0; c < num_labels; ++c) {
      if (!jn["counts"][c].is_number_integer())
        throw ModelFormatError(nw + " count is not an integer");
      n.counts[c] = jn["counts"][c].get<std::int64_t>();
    }
    if (jn.contains("feature")) {
      if (!jn.contains("threshold") || !jn.contains("left") || !jn.contains("right") ||
          !jn["feature"].is_number_integer() || !jn["threshold"].is_number() ||
          !jn["left"].is_number_integer() || !jn["right"].is_number_integer())
        throw ModelFormatError(nw + " malformed split");
      n.feature = jn["feature"].get<int>();
      n.threshold = jn["threshold"].get<double>();
      n.left = jn["left"].get<int>();
      n.right = jn["right"].get<int>();
      if (n.feature < 0 || n.feature >= static_cast<int>(num_features))
        throw ModelFormatError(nw + " feature index out of range");
      if (n.left < 0 || n.right < 0 || n.left >= static_cast<int>(nodes.size()) ||
          n.right >= static_cast<int>(nodes.size()))
        throw ModelFormatError(nw + " child index out of range");
    }
    tree.nodes.push_back(n);
  }
  if (tree.nodes.empty()) throw ModelFormatError(where + ": tree has no nodes");
  return tree;
}

}  // namespace learn_detail

/// JSON encoding; stable key order and exact float round-trip, so equal
/// models serialize to equal bytes.
inline std::string serialize_model(const Model& model) {
  nlohmann::json doc;
  doc["format"] = "bendlab-model/1";
  nlohmann::json names = nlohmann::json::array();
  for (const FeatureInfo& f : feature_registry()) names.push_back(f.name);
  doc["features"] = std::move(names);
  if (model.kind == ModelKind::tree) {
    doc["kind"] = "tree";
    doc["tree"] = learn_detail::tree_to_json(model.tree);
  } else {
    doc["kind"] = "forest";
    nlohmann::json jf;
    jf["features_per_split"] = model.forest.features_per_split;
    nlohmann::json trees = nlohmann::json::array();
    for (const Tree& t : model.forest.trees) trees.push_back(learn_detail::tree_to_json(t));
    jf["trees"] = std::move(trees);
    doc["forest"] = std::move(jf);
  }
  return doc.dump(2) + "\n";
}

/// Rejects files built against a different feature registry with
/// ModelMismatchError; anything structurally broken is ModelFormatError.
inline Model parse_model(const std::string& source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(source);
  } catch (const nlohmann::json::parse_error& e) {
    throw ModelFormatError(std::string("not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("format") || !doc["format"].is_string())
    throw ModelFormatError("missing format marker");
  if (doc["format"].get<std::string>() != "bendlab-model/1")
    throw ModelFormatError("unsupported format \"" + doc["format"].get<std::string>() + "\"");

  if (!doc.contains("features") || !doc["features"].is_array())
    throw ModelFormatError("missing feature list");
  const nlohmann::json& names = doc["features"];
  if (names.size() != num_features)
    throw ModelMismatchError("model built for " + std::to_string(names.size()) +
                             " features, this build has " + std::to_string(num_features));
  for (std::size_t i = 0; i < num_features; ++i) {
    if (!names[i].is_string() || names[i].get<std::string>() != feature_registry()[i].name)
      throw ModelMismatchError("feature " + std::to_string(i) + " is \"" +
                               (names[i].is_string() ? names[i].get<std::string>() : "?") +
                               "\", this build has \"" + feature_registry()[i].name + "\"");
  }

  if (!doc.contains("kind") || !doc["kind"].is_string()) throw ModelFormatError("missing kind");
  std::string kind = doc["kind"].get<std::string>();
  Model model;
  if (kind == "tree") {
    model.kind = ModelKind::tree;
    if (!doc.contains("tree")) throw ModelFormatError("missing tree object");
    model.tree = learn_detail::tree_from_json(doc["tree"], "tree");
  } else if (kind == "forest") {
    model.kind = ModelKind::forest;
    if (!doc.contains("forest") || !doc["forest"].is_object())
      throw ModelFormatError("missing forest object");
    const nlohmann::json& jf = doc["forest"];
    if (!jf.contains("features_per_split") || !jf["features_per_split"].is_number_integer() ||
        !jf.contains("trees") || !jf["trees"].is_array() || jf["trees"].empty())
      throw ModelFormatError("malformed forest object");
    model.forest.features_per_split = jf["features_per_split"].get<int>();
    for (std::size_t t = 0; t < jf["trees"].size(); ++t)
      model.forest.trees.push_back(
          learn_detail::tree_from_json(jf["trees"][t], "tree " + std::to_string(t)));
  } else {
    throw ModelFormatError("unknown kind \"" + kind + "\"");
  }
  return model;
}

}  // namespace bendlab
