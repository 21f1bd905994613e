#include "attnamer/baselines.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <set>

#include "attnamer/instrumentation.hpp"

namespace attnamer {

namespace {

template <typename T>
T dot_n(const T* a, const T* b, std::size_t n) {
  std::array<T, 8> acc{};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  }
  T tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail;
}

// In-place softmax of `z`, returns log-sum-exp.
double softmax_inplace(std::span<double> z) {
  double peak = -INFINITY;
  for (double v : z) peak = std::max(peak, v);
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : z) v /= total;
  return peak + std::log(total);
}

Matrix uniform_init(std::size_t rows, std::size_t cols, float bound, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (float& v : m.data()) v = dist(rng);
  return m;
}

bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

// Flags a run whose last 10 losses are not non-increasing (within tol).
bool tail_not_monotone(const std::vector<double>& history, double tol) {
  const std::size_t n = history.size();
  const std::size_t from = n > 10 ? n - 10 : 0;
  for (std::size_t i = from + 1; i < n; ++i) {
    if (history[i] > history[i - 1] + tol) return true;
  }
  return false;
}

// Runs `step` (computes the loss at the current parameters, then applies one
// update and returns that loss) until max_epochs or until the improvement
// stays below tolerance for `patience` consecutive epochs.
template <typename Step>
std::size_t descend(const TrainConfig& config, std::vector<double>& history, Step&& step) {
  std::size_t stalled = 0;
  std::size_t epoch = 0;
  for (; epoch < config.max_epochs; ++epoch) {
    const double loss = step();
    ++counters().gradient_steps;
    if (!history.empty() && history.back() - loss < config.tolerance) {
      ++stalled;
    } else {
      stalled = 0;
    }
    history.push_back(loss);
    if (!std::isfinite(loss) || stalled >= config.patience) {
      ++epoch;
      break;
    }
  }
  return epoch;
}

struct HeadFit {
  Matrix weights;
  std::vector<float> bias;
  std::size_t epochs = 0;
  std::vector<double> history;
};

HeadFit fit_head(const Matrix& features, std::span<const IdentityIndex> labels,
                 std::size_t outputs, const TrainConfig& config, std::uint64_t seed) {
  const std::size_t dim = features.cols();
  std::mt19937_64 rng(seed);
  HeadFit fit;
  fit.weights = uniform_init(outputs, dim, 1.0f / std::sqrt(static_cast<float>(dim)), rng);
  fit.bias.assign(outputs, 0.0f);
  std::vector<float> gw(outputs * dim);
  std::vector<float> gb(outputs);
  fit.epochs = descend(config, fit.history, [&] {
    const double loss = softmax_cross_entropy<float>(fit.weights.data(), fit.bias, features.data(),
                                                     labels, dim, gw, gb);
    axpy(-config.learning_rate, gw, fit.weights.data());
    axpy(-config.learning_rate, gb, fit.bias);
    return loss;
  });
  return fit;
}

void check_classes(const LabeledSet& data) {
  std::vector<std::size_t> counts(data.num_classes, 0);
  for (auto l : data.labels) {
    if (l >= data.num_classes) throw Error(ErrorCode::IndexOutOfRange, "label exceeds class count");
    ++counts[l];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw Error(ErrorCode::EmptyClass, "class " + std::to_string(c) + " has no examples");
    }
  }
}

// Sorted distinct labels and each row's position in that list.
std::pair<std::vector<IdentityIndex>, std::vector<IdentityIndex>> localize(
    std::span<const IdentityIndex> labels) {
  std::vector<IdentityIndex> ids(labels.begin(), labels.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<IdentityIndex> local(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    local[i] = static_cast<IdentityIndex>(
        std::lower_bound(ids.begin(), ids.end(), labels[i]) - ids.begin());
  }
  return {std::move(ids), std::move(local)};
}

// Branch seeds depend on the branch's own identities, not on the order in
// which increments arrive.
std::uint64_t branch_seed(std::uint64_t seed, IdentityIndex first_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(first_id), 0x4c77u};
  std::array<std::uint64_t, 1> out{};
  seq.generate(reinterpret_cast<std::uint32_t*>(out.data()),
               reinterpret_cast<std::uint32_t*>(out.data()) + 2);
  return out[0];
}

Matrix project(const Matrix& trunk, const Matrix& x) {
  Matrix h(x.rows(), trunk.rows());
  for (std::size_t m = 0; m < x.rows(); ++m) {
    for (std::size_t r = 0; r < trunk.rows(); ++r) h(m, r) = dot(trunk.row(r), x.row(m));
  }
  return h;
}

std::vector<float> softmax_row(std::span<const double> logits) {
  std::vector<double> z(logits.begin(), logits.end());
  softmax_inplace(z);
  return {z.begin(), z.end()};
}

// Little-endian byte writer/reader for checkpoints.
class ByteWriter {
 public:
  void magic(const char (&m)[5]) { bytes_.insert(bytes_.end(), m, m + 4); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void floats(std::span<const float> v) {
    for (float x : v) f32(x);
  }
  void append(const std::vector<std::uint8_t>& other) {
    bytes_.insert(bytes_.end(), other.begin(), other.end());
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  void expect_magic(const char (&m)[5]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) {
      throw Error(ErrorCode::ParseError, std::string("bad checkpoint magic, expected ") + m);
    }
    pos_ += 4;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void floats(std::span<float> out) {
    for (float& x : out) x = f32();
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::ParseError, "truncated checkpoint");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kCheckpointVersion = 1;

Branch read_branch(ByteReader& r) {
  r.expect_magic("ANBR");
  if (r.u32() != kCheckpointVersion) throw Error(ErrorCode::ParseError, "checkpoint version");
  const auto rows = r.u32();
  const auto cols = r.u32();
  Branch b;
  b.epochs = r.u32();
  b.ids.resize(rows);
  for (auto& id : b.ids) id = r.u32();
  b.weights = Matrix(rows, cols);
  r.floats(b.weights.data());
  b.bias.resize(rows);
  r.floats(b.bias);
  return b;
}

}  // namespace

template <typename T>
double softmax_cross_entropy(std::span<const T> weights, std::span<const T> bias,
                             std::span<const T> features, std::span<const IdentityIndex> labels,
                             std::size_t dim, std::span<T> grad_weights, std::span<T> grad_bias) {
  const std::size_t outputs = bias.size();
  const std::size_t m_count = labels.size();
  std::fill(grad_weights.begin(), grad_weights.end(), T{0});
  std::fill(grad_bias.begin(), grad_bias.end(), T{0});
  if (m_count == 0) return 0.0;
  const double inv_m = 1.0 / static_cast<double>(m_count);
  std::vector<double> z(outputs);
  double loss = 0.0;
  for (std::size_t m = 0; m < m_count; ++m) {
    const T* x = features.data() + m * dim;
    for (std::size_t k = 0; k < outputs; ++k) {
      z[k] = static_cast<double>(dot_n(weights.data() + k * dim, x, dim) + bias[k]);
    }
    const double label_logit = z[labels[m]];
    loss += softmax_inplace(z) - label_logit;
    for (std::size_t k = 0; k < outputs; ++k) {
      const double g = (z[k] - (k == labels[m] ? 1.0 : 0.0)) * inv_m;
      const T gt = static_cast<T>(g);
      grad_bias[k] += gt;
      T* row = grad_weights.data() + k * dim;
      for (std::size_t i = 0; i < dim; ++i) row[i] += gt * x[i];
    }
  }
  return loss * inv_m;
}

template double softmax_cross_entropy<float>(std::span<const float>, std::span<const float>,
                                             std::span<const float>,
                                             std::span<const IdentityIndex>, std::size_t,
                                             std::span<float>, std::span<float>);
template double softmax_cross_entropy<double>(std::span<const double>, std::span<const double>,
                                              std::span<const double>,
                                              std::span<const IdentityIndex>, std::size_t,
                                              std::span<double>, std::span<double>);

LabeledSet matched_pairs(const KnowledgeStore& store) {
  LabeledSet set;
  set.features = Matrix(0, store.d_key());
  set.num_classes = store.num_ids();
  for (std::size_t m = 0; m < store.num_shots(); ++m) {
    const auto& l = store.labels()[m];
    if (!l.matched()) continue;
    set.features.append_row(store.key(m));
    set.labels.push_back(l.face);
  }
  return set;
}

LabeledSet select_classes(const LabeledSet& set, IdentityIndex first, IdentityIndex last) {
  LabeledSet out;
  out.features = Matrix(0, set.features.cols());
  out.num_classes = set.num_classes;
  for (std::size_t m = 0; m < set.size(); ++m) {
    if (set.labels[m] >= first && set.labels[m] < last) {
      out.features.append_row(set.features.row(m));
      out.labels.push_back(set.labels[m]);
    }
  }
  return out;
}

LinearSoftmaxModel train_tfs(const LabeledSet& data, const TrainConfig& config) {
  if (data.num_classes == 0 || data.size() == 0) {
    throw Error(ErrorCode::EmptyClass, "training set is empty");
  }
  check_classes(data);
  const std::size_t outputs = std::max(config.capacity, data.num_classes);
  HeadFit fit = fit_head(data.features, data.labels, outputs, config, config.seed);
  LinearSoftmaxModel model;
  model.weights = std::move(fit.weights);
  model.bias = std::move(fit.bias);
  model.epochs = fit.epochs;
  model.loss_history = std::move(fit.history);
  model.non_convergence = tail_not_monotone(model.loss_history, config.tolerance) ||
                          !all_finite(model.weights.data()) || !all_finite(model.bias);
  return model;
}

std::vector<std::vector<float>> predict_baseline(const LinearSoftmaxModel& model,
                                                 const Matrix& queries) {
  std::vector<std::vector<float>> out;
  if (queries.rows() == 0) return out;
  if (queries.cols() != model.input_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "query dimension does not match the model");
  }
  std::vector<double> z(model.num_outputs());
  for (std::size_t p = 0; p < queries.rows(); ++p) {
    for (std::size_t k = 0; k < z.size(); ++k) {
      z[k] = static_cast<double>(dot(model.weights.row(k), queries.row(p))) + model.bias[k];
    }
    out.push_back(softmax_row(z));
  }
  return out;
}

std::size_t parameter_bytes(const LinearSoftmaxModel& model) {
  return (model.weights.rows() * model.weights.cols() + model.bias.size()) * sizeof(float);
}

std::size_t BranchedModel::num_outputs() const {
  std::size_t n = 0;
  for (const auto& b : branches) n += b.ids.size();
  return n;
}

bool BranchedModel::covers(IdentityIndex id) const {
  return std::any_of(branches.begin(), branches.end(), [&](const Branch& b) {
    return std::find(b.ids.begin(), b.ids.end(), id) != b.ids.end();
  });
}

BranchedModel pretrain_lwf(const LabeledSet& data, const TrainConfig& config) {
  if (data.size() == 0) throw Error(ErrorCode::EmptyClass, "pretraining set is empty");
  auto [ids, local] = localize(data.labels);
  const std::size_t dim = data.features.cols();
  const std::size_t hidden = config.hidden;
  const std::size_t outputs = ids.size();
  const std::size_t m_count = data.size();
  if (hidden == 0) throw Error(ErrorCode::InvalidSpec, "trunk width must be positive");

  std::mt19937_64 rng(config.seed);
  BranchedModel model;
  model.trunk = uniform_init(hidden, dim, 1.0f / std::sqrt(static_cast<float>(dim)), rng);
  Branch head;
  head.ids = ids;
  head.weights = uniform_init(outputs, hidden, 1.0f / std::sqrt(static_cast<float>(hidden)), rng);
  head.bias.assign(outputs, 0.0f);

  Matrix gw(outputs, hidden);
  std::vector<float> gb(outputs);
  Matrix gh(m_count, hidden);
  Matrix gt(hidden, dim);
  std::vector<double> z(outputs);
  const double inv_m = 1.0 / static_cast<double>(m_count);

  head.epochs = descend(config, head.loss_history, [&] {
    const Matrix h = project(model.trunk, data.features);
    std::fill(gw.data().begin(), gw.data().end(), 0.0f);
    std::fill(gb.begin(), gb.end(), 0.0f);
    std::fill(gt.data().begin(), gt.data().end(), 0.0f);
    double loss = 0.0;
    for (std::size_t m = 0; m < m_count; ++m) {
      for (std::size_t k = 0; k < outputs; ++k) {
        z[k] = static_cast<double>(dot(head.weights.row(k), h.row(m))) + head.bias[k];
      }
      const double label_logit = z[local[m]];
      loss += softmax_inplace(z) - label_logit;
      auto ghm = gh.row(m);
      std::fill(ghm.begin(), ghm.end(), 0.0f);
      for (std::size_t k = 0; k < outputs; ++k) {
        const auto g = static_cast<float>((z[k] - (k == local[m] ? 1.0 : 0.0)) * inv_m);
        gb[k] += g;
        axpy(g, h.row(m), gw.row(k));
        axpy(g, head.weights.row(k), ghm);
      }
      for (std::size_t r = 0; r < hidden; ++r) axpy(ghm[r], data.features.row(m), gt.row(r));
    }
    axpy(-config.learning_rate, gw.data(), head.weights.data());
    axpy(-config.learning_rate, gb, head.bias);
    axpy(-config.learning_rate, gt.data(), model.trunk.data());
    return loss * inv_m;
  });
  model.branches.push_back(std::move(head));
  return model;
}

BranchedModel train_lwf_increment(BranchedModel model, const LabeledSet& new_data,
                                  const TrainConfig& config) {
  if (new_data.size() == 0) throw Error(ErrorCode::EmptyClass, "increment has no examples");
  if (new_data.features.cols() != model.input_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "increment dimension does not match the trunk");
  }
  auto [ids, local] = localize(new_data.labels);
  for (auto id : ids) {
    if (model.covers(id)) {
      throw Error(ErrorCode::OverlappingIds,
                  "identity " + std::to_string(id) + " already has a branch");
    }
  }
  const Matrix features = project(model.trunk, new_data.features);
  HeadFit fit = fit_head(features, local, ids.size(), config, branch_seed(config.seed, ids.front()));
  Branch b;
  b.ids = std::move(ids);
  b.weights = std::move(fit.weights);
  b.bias = std::move(fit.bias);
  b.epochs = fit.epochs;
  b.loss_history = std::move(fit.history);
  model.branches.push_back(std::move(b));
  return model;
}

std::vector<std::vector<float>> predict_baseline(const BranchedModel& model, const Matrix& queries,
                                                 std::size_t num_ids) {
  std::vector<std::vector<float>> out;
  if (queries.rows() == 0) return out;
  if (queries.cols() != model.input_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "query dimension does not match the model");
  }
  const Matrix h = project(model.trunk, queries);
  std::vector<double> z;
  for (std::size_t p = 0; p < queries.rows(); ++p) {
    z.clear();
    for (const auto& b : model.branches) {
      for (std::size_t k = 0; k < b.ids.size(); ++k) {
        z.push_back(static_cast<double>(dot(b.weights.row(k), h.row(p))) + b.bias[k]);
      }
    }
    const auto probs = softmax_row(z);
    std::vector<float> scattered(num_ids, 0.0f);
    std::size_t k = 0;
    for (const auto& b : model.branches) {
      for (auto id : b.ids) {
        if (id < num_ids) scattered[id] += probs[k];
        ++k;
      }
    }
    out.push_back(std::move(scattered));
  }
  return out;
}

std::size_t parameter_bytes(const BranchedModel& model) {
  std::size_t floats = model.trunk.rows() * model.trunk.cols();
  for (const auto& b : model.branches) floats += b.weights.rows() * b.weights.cols() + b.bias.size();
  return floats * sizeof(float);
}

std::vector<std::uint8_t> serialize(const LinearSoftmaxModel& model) {
  ByteWriter w;
  w.magic("ANLS");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.weights.rows()));
  w.u32(static_cast<std::uint32_t>(model.weights.cols()));
  w.u32(static_cast<std::uint32_t>(model.epochs));
  w.floats(model.weights.data());
  w.floats(model.bias);
  return w.take();
}

std::vector<std::uint8_t> serialize(const Branch& branch) {
  ByteWriter w;
  w.magic("ANBR");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(branch.weights.rows()));
  w.u32(static_cast<std::uint32_t>(branch.weights.cols()));
  w.u32(static_cast<std::uint32_t>(branch.epochs));
  for (auto id : branch.ids) w.u32(id);
  w.floats(branch.weights.data());
  w.floats(branch.bias);
  return w.take();
}

std::vector<std::uint8_t> serialize(const BranchedModel& model) {
  ByteWriter w;
  w.magic("ANBM");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.trunk.rows()));
  w.u32(static_cast<std::uint32_t>(model.trunk.cols()));
  w.u32(static_cast<std::uint32_t>(model.branches.size()));
  w.floats(model.trunk.data());
  for (const auto& b : model.branches) w.append(serialize(b));
  return w.take();
}

LinearSoftmaxModel deserialize_linear(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("ANLS");
  if (r.u32() != kCheckpointVersion) throw Error(ErrorCode::ParseError, "checkpoint version");
  const auto rows = r.u32();
  const auto cols = r.u32();
  LinearSoftmaxModel model;
  model.epochs = r.u32();
  model.weights = Matrix(rows, cols);
  r.floats(model.weights.data());
  model.bias.resize(rows);
  r.floats(model.bias);
  if (!r.done()) throw Error(ErrorCode::ParseError, "trailing bytes in checkpoint");
  return model;
}

BranchedModel deserialize_branched(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("ANBM");
  if (r.u32() != kCheckpointVersion) throw Error(ErrorCode::ParseError, "checkpoint version");
  const auto hidden = r.u32();
  const auto dim = r.u32();
  const auto count = r.u32();
  BranchedModel model;
  model.trunk = Matrix(hidden, dim);
  r.floats(model.trunk.data());
  for (std::uint32_t i = 0; i < count; ++i) model.branches.push_back(read_branch(r));
  if (!r.done()) throw Error(ErrorCode::ParseError, "trailing bytes in checkpoint");
  return model;
}

}  // namespace attnamer
