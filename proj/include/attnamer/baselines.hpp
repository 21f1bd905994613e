#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "attnamer/core_types.hpp"
#include "attnamer/matrix.hpp"

namespace attnamer {

// Gradient-descent comparators trained on the same concatenated pair
// embeddings the attention module stores as keys.

struct LabeledSet {
  Matrix features;                    // M x d_key
  std::vector<IdentityIndex> labels;  // global identity index per row
  std::size_t num_classes = 0;        // labels are < num_classes

  std::size_t size() const noexcept { return labels.size(); }
};

// Matched shots of the store, labeled with their identity. Non-matched shots
// carry two labels and have no single class, so they are skipped.
LabeledSet matched_pairs(const KnowledgeStore& store);

// Rows of `set` whose label lies in [first, last).
LabeledSet select_classes(const LabeledSet& set, IdentityIndex first, IdentityIndex last);

struct TrainConfig {
  std::size_t max_epochs = 500;
  float learning_rate = 0.1f;
  // Stop once the loss improves by less than this for `patience` epochs.
  double tolerance = 1e-6;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  // Output rows of the TfS head; 0 means exactly num_classes. A fixed
  // capacity keeps the model size independent of how many IDs are enrolled.
  std::size_t capacity = 0;
  // Width of the LwF shared trunk.
  std::size_t hidden = 32;
};

// Mean softmax cross-entropy of logits = W x + b over `features` (M x dim,
// row-major) and its gradient. Writes dL/dW (rows x dim) and dL/db. Loss is
// accumulated in double for either T.
template <typename T>
double softmax_cross_entropy(std::span<const T> weights, std::span<const T> bias,
                             std::span<const T> features, std::span<const IdentityIndex> labels,
                             std::size_t dim, std::span<T> grad_weights, std::span<T> grad_bias);

struct LinearSoftmaxModel {
  Matrix weights;  // outputs x d_key
  std::vector<float> bias;
  std::size_t epochs = 0;
  std::vector<double> loss_history;
  bool non_convergence = false;

  std::size_t num_outputs() const noexcept { return weights.rows(); }
  std::size_t input_dim() const noexcept { return weights.cols(); }
};

// Full-batch gradient descent from a seeded uniform(+-1/sqrt(d)) start.
// Throws EmptyClass when some class in [0, num_classes) has no rows.
LinearSoftmaxModel train_tfs(const LabeledSet& data, const TrainConfig& config);

// Per-row softmax over the model outputs. `queries` is J x d_key.
std::vector<std::vector<float>> predict_baseline(const LinearSoftmaxModel& model,
                                                 const Matrix& queries);

std::size_t parameter_bytes(const LinearSoftmaxModel& model);

// One LwF output head: maps trunk features to the identities added in one
// increment. Frozen once trained.
struct Branch {
  std::vector<IdentityIndex> ids;  // global identity of each output row
  Matrix weights;                  // ids.size() x hidden
  std::vector<float> bias;
  std::size_t epochs = 0;
  std::vector<double> loss_history;
};

// Shared trunk (hidden x d_key) plus per-increment heads. New heads are
// trained on new data only, through the frozen trunk.
struct BranchedModel {
  Matrix trunk;
  std::vector<Branch> branches;

  std::size_t hidden() const noexcept { return trunk.rows(); }
  std::size_t input_dim() const noexcept { return trunk.cols(); }
  std::size_t num_outputs() const;
  bool covers(IdentityIndex id) const;

  // Trunk only; the heads of the pretraining task are dropped.
  BranchedModel trunk_only() const { return {trunk, {}}; }
};

// Trains trunk and a first head jointly on `data` (all classes present in
// it become branch 0).
BranchedModel pretrain_lwf(const LabeledSet& data, const TrainConfig& config);

// Appends a head for the identities in `new_data`. Existing heads and the
// trunk are left untouched. Throws OverlappingIds if an identity already
// has a head.
BranchedModel train_lwf_increment(BranchedModel model, const LabeledSet& new_data,
                                  const TrainConfig& config);

// Per-row softmax over all heads' outputs, scattered to global identity
// indices (length `num_ids`; identities without a head get 0).
std::vector<std::vector<float>> predict_baseline(const BranchedModel& model, const Matrix& queries,
                                                 std::size_t num_ids);

std::size_t parameter_bytes(const BranchedModel& model);

// Checkpoints: little-endian, 4-byte magic, u32 version, u32 dims, then
// row-major f32 weights followed by the f32 bias.
//   LinearSoftmaxModel: "ANLS" ver rows cols epochs | W | b
//   Branch:             "ANBR" ver rows cols epochs | ids[u32 x rows] | W | b
//   BranchedModel:      "ANBM" ver hidden d n_branches | trunk | Branch...
std::vector<std::uint8_t> serialize(const LinearSoftmaxModel& model);
std::vector<std::uint8_t> serialize(const Branch& branch);
std::vector<std::uint8_t> serialize(const BranchedModel& model);
LinearSoftmaxModel deserialize_linear(std::span<const std::uint8_t> bytes);
BranchedModel deserialize_branched(std::span<const std::uint8_t> bytes);

}  // namespace attnamer
