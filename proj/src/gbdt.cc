#include "qarerank/gbdt.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "qarerank/error.h"
#include "qarerank/random.h"

namespace qarerank {

using nlohmann::json;

void validate(const TrainParams& p) {
  if (p.num_rounds < 1) throw InvalidArgument("num_rounds must be at least 1");
  if (!(p.learning_rate > 0.0 && p.learning_rate <= 1.0)) throw InvalidArgument("learning_rate must be in (0, 1]");
  if (p.num_classes < 2) throw InvalidArgument("num_classes must be at least 2");
  if (p.max_depth < 0) throw InvalidArgument("max_depth must be non-negative");
  if (!(p.min_child_weight >= 0.0)) throw InvalidArgument("min_child_weight must be non-negative");
  if (!(p.reg_lambda >= 0.0)) throw InvalidArgument("reg_lambda must be non-negative");
  if (!(p.gamma >= 0.0)) throw InvalidArgument("gamma must be non-negative");
  if (!(p.subsample > 0.0 && p.subsample <= 1.0)) throw InvalidArgument("subsample must be in (0, 1]");
  if (!(p.colsample > 0.0 && p.colsample <= 1.0)) throw InvalidArgument("colsample must be in (0, 1]");
}

double Tree::predict(std::span<const double> x) const {
  std::size_t node = 0;
  while (feature[node] >= 0) {
    node = static_cast<std::size_t>(x[static_cast<std::size_t>(feature[node])] < threshold[node] ? left[node]
                                                                                                : right[node]);
  }
  return weight[node];
}

int Tree::depth() const {
  if (feature.empty()) return 0;
  std::vector<int> d(size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (!is_leaf(i)) {
      d[static_cast<std::size_t>(left[i])] = d[i] + 1;
      d[static_cast<std::size_t>(right[i])] = d[i] + 1;
    }
  }
  return deepest;
}

BoostedModel make_untrained_model(const TrainParams& params, std::vector<std::string> feature_layout) {
  BoostedModel m;
  m.params = params;
  m.feature_layout = std::move(feature_layout);
  return m;
}

namespace {

void softmax_inplace(std::span<double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : v) x /= z;
}

double split_gain(double gl, double hl, double gr, double hr, const TrainParams& p) {
  const double g = gl + gr;
  const double h = hl + hr;
  return 0.5 * (gl * gl / (hl + p.reg_lambda) + gr * gr / (hr + p.reg_lambda) - g * g / (h + p.reg_lambda)) -
         p.gamma;
}

bool better(const SplitCandidate& a, const SplitCandidate& b) {
  if (a.gain != b.gain) return a.gain > b.gain;
  if (a.feature != b.feature) return a.feature < b.feature;
  return a.threshold < b.threshold;
}

// Scans one feature whose node rows are given in ascending value order and
// updates `best` with any admissible split that beats it.
void scan_sorted(std::span<const std::uint32_t> sorted_rows, std::span<const double> column, int feature,
                 std::span<const double> grad, std::span<const double> hess, double g_total, double h_total,
                 const TrainParams& p, std::optional<SplitCandidate>& best) {
  double gl = 0.0;
  double hl = 0.0;
  const std::size_t n = sorted_rows.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::uint32_t r = sorted_rows[i];
    gl += grad[r];
    hl += hess[r];
    const double v = column[r];
    const double next = column[sorted_rows[i + 1]];
    if (!(next > v)) continue;
    const double hr = h_total - hl;
    if (hl < p.min_child_weight || hr < p.min_child_weight) continue;
    const double gain = split_gain(gl, hl, g_total - gl, hr, p);
    if (!(gain > 0.0)) continue;
    double thr = 0.5 * (v + next);
    if (!(thr > v)) thr = next;
    SplitCandidate cand{feature, thr, gain};
    if (!best || better(cand, *best)) best = cand;
  }
}

// Column-major copy of a feature matrix plus, per feature, all row indices
// sorted by (value, row).
struct ColumnStore {
  std::size_t rows = 0;
  std::vector<std::vector<double>> columns;
  std::vector<std::vector<std::uint32_t>> sorted;

  explicit ColumnStore(const FeatureMatrix& m) : rows(m.rows), columns(m.cols()), sorted(m.cols()) {
    for (std::size_t f = 0; f < m.cols(); ++f) {
      auto& col = columns[f];
      col.resize(rows);
      for (std::size_t i = 0; i < rows; ++i) col[i] = m.at(i, f);
      auto& idx = sorted[f];
      idx.resize(rows);
      std::iota(idx.begin(), idx.end(), 0u);
      std::stable_sort(idx.begin(), idx.end(), [&col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    }
  }
};

// Grows one tree depth-first. For every candidate feature the node's rows are
// kept as a contiguous, value-sorted segment; splitting a node stably
// partitions each segment so both children stay sorted.
class TreeBuilder {
 public:
  TreeBuilder(const ColumnStore& store, const TrainParams& params, std::span<const double> grad,
              std::span<const double> hess)
      : store_(store), params_(params), grad_(grad), hess_(hess), goes_left_(store.rows, 0) {}

  Tree build(std::span<const std::uint32_t> sample_rows, const std::vector<char>& in_sample,
             std::vector<std::size_t> features) {
    features_ = std::move(features);
    const std::size_t n = sample_rows.size();
    segments_.assign(features_.size(), {});
    for (std::size_t fi = 0; fi < features_.size(); ++fi) {
      auto& seg = segments_[fi];
      seg.reserve(n);
      for (std::uint32_t r : store_.sorted[features_[fi]]) {
        if (in_sample[r]) seg.push_back(r);
      }
    }
    node_rows_.assign(sample_rows.begin(), sample_rows.end());
    scratch_.resize(n);
    tree_ = Tree{};
    grow(0, n, 0);
    return std::move(tree_);
  }

 private:
  std::size_t add_node() {
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.weight.push_back(0.0);
    return tree_.size() - 1;
  }

  // Rows [begin, end) in every segment (and in node_rows_) belong to the node.
  void grow(std::size_t begin, std::size_t end, int depth) {
    const std::size_t node = add_node();
    double g = 0.0;
    double h = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      g += grad_[node_rows_[i]];
      h += hess_[node_rows_[i]];
    }

    std::optional<SplitCandidate> best;
    if (depth < params_.max_depth && end - begin >= 2 && h >= 2.0 * params_.min_child_weight) {
      for (std::size_t fi = 0; fi < features_.size(); ++fi) {
        const std::span<const std::uint32_t> seg(segments_[fi].data() + begin, end - begin);
        scan_sorted(seg, store_.columns[features_[fi]], static_cast<int>(features_[fi]), grad_, hess_, g, h,
                    params_, best);
      }
    }
    if (!best) {
      tree_.weight[node] = -params_.learning_rate * g / (h + params_.reg_lambda);
      return;
    }

    const auto& column = store_.columns[static_cast<std::size_t>(best->feature)];
    std::size_t n_left = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t r = node_rows_[i];
      goes_left_[r] = column[r] < best->threshold ? 1 : 0;
      n_left += goes_left_[r];
    }
    for (auto& seg : segments_) partition(seg, begin, end);
    partition(node_rows_, begin, end);

    tree_.feature[node] = best->feature;
    tree_.threshold[node] = best->threshold;
    const std::size_t mid = begin + n_left;
    tree_.left[node] = static_cast<int>(tree_.size());
    grow(begin, mid, depth + 1);
    tree_.right[node] = static_cast<int>(tree_.size());
    grow(mid, end, depth + 1);
  }

  void partition(std::vector<std::uint32_t>& seg, std::size_t begin, std::size_t end) {
    std::size_t write = begin;
    std::size_t spill = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t r = seg[i];
      if (goes_left_[r]) {
        seg[write++] = r;
      } else {
        scratch_[spill++] = r;
      }
    }
    std::copy_n(scratch_.begin(), spill, seg.begin() + static_cast<std::ptrdiff_t>(write));
  }

  const ColumnStore& store_;
  const TrainParams& params_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  std::vector<std::size_t> features_;
  std::vector<std::vector<std::uint32_t>> segments_;
  std::vector<std::uint32_t> node_rows_;
  std::vector<std::uint32_t> scratch_;
  std::vector<char> goes_left_;
  Tree tree_;
};

double row_log_loss(std::span<const double> margins, int label) {
  const double mx = *std::max_element(margins.begin(), margins.end());
  double z = 0.0;
  for (double m : margins) z += std::exp(m - mx);
  return -(margins[static_cast<std::size_t>(label)] - mx - std::log(z));
}

constexpr std::uint64_t kRowStream = 0x524f5753ULL;  // "ROWS"

}  // namespace

GradHess softmax_grad_hess(std::span<const double> margins, int label) {
  GradHess out;
  out.grad.assign(margins.begin(), margins.end());
  softmax_inplace(out.grad);
  out.hess.resize(out.grad.size());
  for (std::size_t c = 0; c < out.grad.size(); ++c) {
    const double p = out.grad[c];
    out.hess[c] = std::max(p * (1.0 - p), kHessianFloor);
    if (static_cast<int>(c) == label) out.grad[c] -= 1.0;
  }
  return out;
}

std::optional<SplitCandidate> find_best_split(const FeatureMatrix& x, std::span<const std::size_t> rows,
                                              std::span<const double> grad, std::span<const double> hess,
                                              const TrainParams& params, std::span<const std::size_t> features) {
  std::vector<std::size_t> all;
  if (features.empty()) {
    all.resize(x.cols());
    std::iota(all.begin(), all.end(), 0);
    features = all;
  }
  double g = 0.0;
  double h = 0.0;
  for (std::size_t r : rows) {
    g += grad[r];
    h += hess[r];
  }
  std::optional<SplitCandidate> best;
  std::vector<std::uint32_t> order(rows.size());
  std::vector<double> column(x.rows);
  for (std::size_t f : features) {
    for (std::size_t r : rows) column[r] = x.at(r, f);
    std::transform(rows.begin(), rows.end(), order.begin(), [](std::size_t r) { return static_cast<std::uint32_t>(r); });
    std::stable_sort(order.begin(), order.end(), [&column](std::uint32_t a, std::uint32_t b) {
      return column[a] < column[b] || (column[a] == column[b] && a < b);
    });
    scan_sorted(order, column, static_cast<int>(f), grad, hess, g, h, params, best);
  }
  return best;
}

BoostedModel train(const FeatureMatrix& matrix, const TrainParams& params, const TrainOptions& options) {
  validate(params);
  if (matrix.rows == 0) throw InvalidArgument("cannot train on an empty feature matrix");
  if (matrix.cols() == 0) throw InvalidArgument("feature matrix has no columns");
  if (!matrix.labels || matrix.labels->size() != matrix.rows) {
    throw InvalidArgument("training matrix needs one label per row");
  }
  const auto& labels = *matrix.labels;
  const int num_classes = params.num_classes;
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw InvalidArgument("label " + std::to_string(y) + " outside [0, num_classes)");
  }
  if (std::adjacent_find(labels.begin(), labels.end(), std::not_equal_to<>()) == labels.end()) {
    throw InvalidArgument("training labels must contain at least two distinct classes");
  }
  if (matrix.rows > UINT32_MAX) throw InvalidArgument("too many rows");

  const std::size_t n = matrix.rows;
  const auto n_classes = static_cast<std::size_t>(num_classes);
  const ColumnStore store(matrix);

  BoostedModel model = make_untrained_model(params, matrix.layout);
  std::vector<double> margins(n * n_classes, model.base_margin);
  // Class-major so each tree reads one contiguous gradient column.
  std::vector<std::vector<double>> grad(n_classes, std::vector<double>(n));
  std::vector<std::vector<double>> hess(n_classes, std::vector<double>(n));

  const std::size_t n_features = matrix.cols();
  const auto n_selected = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(params.colsample * static_cast<double>(n_features))));
  const int n_threads = std::clamp(options.num_threads, 1, num_classes);

  std::vector<double> probs(n_classes);
  for (int round = 0; round < params.num_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      std::span<const double> m(margins.data() + i * n_classes, n_classes);
      std::copy(m.begin(), m.end(), probs.begin());
      softmax_inplace(probs);
      for (std::size_t c = 0; c < n_classes; ++c) {
        const double p = probs[c];
        grad[c][i] = p - (static_cast<int>(c) == labels[i] ? 1.0 : 0.0);
        hess[c][i] = std::max(p * (1.0 - p), kHessianFloor);
      }
    }

    std::vector<char> in_sample(n, 1);
    std::vector<std::uint32_t> sample_rows;
    sample_rows.reserve(n);
    if (params.subsample < 1.0) {
      Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(round), kRowStream));
      for (std::size_t i = 0; i < n; ++i) in_sample[i] = rng.uniform() < params.subsample ? 1 : 0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (in_sample[i]) sample_rows.push_back(static_cast<std::uint32_t>(i));
    }

    std::vector<Tree> round_trees(n_classes);
    auto build_class = [&](std::size_t c) {
      std::vector<std::size_t> features(n_features);
      std::iota(features.begin(), features.end(), 0);
      if (n_selected < n_features) {
        Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(round), c + 1));
        rng.shuffle(std::span<std::size_t>(features));
        features.resize(n_selected);
        std::sort(features.begin(), features.end());
      }
      TreeBuilder builder(store, params, grad[c], hess[c]);
      round_trees[c] = builder.build(sample_rows, in_sample, std::move(features));
    };

    if (n_threads == 1) {
      for (std::size_t c = 0; c < n_classes; ++c) build_class(c);
    } else {
      // Each class tree depends only on this round's gradients, so the trees
      // are identical whichever worker builds them.
      std::atomic<std::size_t> next{0};
      std::vector<std::jthread> workers;
      for (int t = 0; t < n_threads; ++t) {
        workers.emplace_back([&] {
          for (std::size_t c = next++; c < n_classes; c = next++) build_class(c);
        });
      }
    }

    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = matrix.row(i);
      std::span<double> m(margins.data() + i * n_classes, n_classes);
      for (std::size_t c = 0; c < n_classes; ++c) m[c] += round_trees[c].predict(row);
      loss += row_log_loss(m, labels[i]);
    }
    model.trees.push_back(std::move(round_trees));
    if (options.on_round) options.on_round(round, loss / static_cast<double>(n));
  }
  return model;
}

std::vector<double> predict_margins(const BoostedModel& model, std::span<const double> x) {
  if (x.size() != model.feature_layout.size()) {
    throw InvalidArgument("feature vector has " + std::to_string(x.size()) + " values, model expects " +
                          std::to_string(model.feature_layout.size()));
  }
  std::vector<double> margins(static_cast<std::size_t>(model.num_classes()), model.base_margin);
  for (const auto& round : model.trees) {
    for (std::size_t c = 0; c < round.size(); ++c) margins[c] += round[c].predict(x);
  }
  return margins;
}

std::vector<double> predict_proba(const BoostedModel& model, std::span<const double> x) {
  auto m = predict_margins(model, x);
  softmax_inplace(m);
  return m;
}

int predict_class(const BoostedModel& model, std::span<const double> x) {
  const auto p = predict_proba(model, x);
  // max_element returns the first maximum, i.e. the smallest class index.
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::vector<double> predict_proba(const BoostedModel& model, const FeatureVector& x) {
  if (x.layout != model.feature_layout) throw InvalidArgument("feature layout differs from the model's layout");
  return predict_proba(model, std::span<const double>(x.values));
}

int predict_class(const BoostedModel& model, const FeatureVector& x) {
  if (x.layout != model.feature_layout) throw InvalidArgument("feature layout differs from the model's layout");
  return predict_class(model, std::span<const double>(x.values));
}

double log_loss(const BoostedModel& model, const FeatureMatrix& matrix) {
  if (!matrix.labels) throw InvalidArgument("log_loss needs a labelled matrix");
  if (matrix.rows == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < matrix.rows; ++i) {
    total += row_log_loss(predict_margins(model, matrix.row(i)), (*matrix.labels)[i]);
  }
  return total / static_cast<double>(matrix.rows);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr const char* kModelFormat = "qarerank-gbdt";
constexpr int kModelSchemaVersion = 1;

json params_to_json(const TrainParams& p) {
  return {{"num_rounds", p.num_rounds},       {"learning_rate", p.learning_rate},
          {"num_classes", p.num_classes},     {"max_depth", p.max_depth},
          {"min_child_weight", p.min_child_weight}, {"reg_lambda", p.reg_lambda},
          {"gamma", p.gamma},                 {"subsample", p.subsample},
          {"colsample", p.colsample},         {"seed", p.seed}};
}

TrainParams params_from_json(const json& j) {
  TrainParams p;
  p.num_rounds = j.at("num_rounds").get<int>();
  p.learning_rate = j.at("learning_rate").get<double>();
  p.num_classes = j.at("num_classes").get<int>();
  p.max_depth = j.at("max_depth").get<int>();
  p.min_child_weight = j.at("min_child_weight").get<double>();
  p.reg_lambda = j.at("reg_lambda").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.subsample = j.at("subsample").get<double>();
  p.colsample = j.at("colsample").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

void check_tree(const Tree& t, std::size_t n_features, int max_depth) {
  const std::size_t n = t.size();
  if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n || t.weight.size() != n) {
    throw SchemaError("model: tree arrays are empty or of unequal length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (t.is_leaf(i)) continue;
    if (static_cast<std::size_t>(t.feature[i]) >= n_features) throw SchemaError("model: feature index out of range");
    // Children always follow their parent in depth-first order.
    for (int child : {t.left[i], t.right[i]}) {
      if (child <= static_cast<int>(i) || static_cast<std::size_t>(child) >= n) {
        throw SchemaError("model: invalid child index");
      }
    }
  }
  if (t.depth() > max_depth) throw SchemaError("model: tree deeper than max_depth");
}

}  // namespace

std::string serialize_model(const BoostedModel& model) {
  json rounds = json::array();
  for (const auto& round : model.trees) {
    json classes = json::array();
    for (const Tree& t : round) {
      classes.push_back({{"feature", t.feature},
                         {"threshold", t.threshold},
                         {"left", t.left},
                         {"right", t.right},
                         {"weight", t.weight}});
    }
    rounds.push_back(std::move(classes));
  }
  json root = {{"format", kModelFormat},
               {"schema_version", kModelSchemaVersion},
               {"params", params_to_json(model.params)},
               {"base_margin", model.base_margin},
               {"feature_layout", model.feature_layout},
               {"attributes", model.attributes},
               {"trees", std::move(rounds)}};
  return root.dump() + "\n";
}

BoostedModel deserialize_model(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("model file is truncated or malformed: ") + e.what());
  }
  try {
    if (root.at("format").get<std::string>() != kModelFormat) throw SchemaError("not a qarerank model file");
    const int version = root.at("schema_version").get<int>();
    if (version != kModelSchemaVersion) {
      throw SchemaError("unsupported model schema_version " + std::to_string(version));
    }
    BoostedModel m;
    m.params = params_from_json(root.at("params"));
    if (m.params.num_classes < 2) throw SchemaError("model: num_classes must be at least 2");
    m.base_margin = root.at("base_margin").get<double>();
    m.feature_layout = root.at("feature_layout").get<std::vector<std::string>>();
    m.attributes = root.at("attributes").get<std::map<std::string, std::string>>();
    for (const json& round : root.at("trees")) {
      if (round.size() != static_cast<std::size_t>(m.params.num_classes)) {
        throw SchemaError("model: round does not hold one tree per class");
      }
      std::vector<Tree> trees;
      for (const json& jt : round) {
        Tree t;
        t.feature = jt.at("feature").get<std::vector<int>>();
        t.threshold = jt.at("threshold").get<std::vector<double>>();
        t.left = jt.at("left").get<std::vector<int>>();
        t.right = jt.at("right").get<std::vector<int>>();
        t.weight = jt.at("weight").get<std::vector<double>>();
        check_tree(t, m.feature_layout.size(), m.params.max_depth);
        trees.push_back(std::move(t));
      }
      m.trees.push_back(std::move(trees));
    }
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("model file does not match the model schema: ") + e.what());
  }
}

void save_model(const BoostedModel& model, const std::filesystem::path& path) {
  const std::string text = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

BoostedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace qarerank
