#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "entfact/corpus.hpp"
#include "entfact/kgraph.hpp"
#include "entfact/rng.hpp"

namespace entfact {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Aggregation { Mean, Sum };

std::string_view aggregation_name(Aggregation aggregation);
std::optional<Aggregation> parse_aggregation(std::string_view name);

struct NodeKey {
  NodeKind kind = NodeKind::Entity;
  std::string surface;  // normalized

  auto operator<=>(const NodeKey&) const = default;
};

// Row 0 is the shared out-of-vocabulary row.
struct NodeVocab {
  std::map<NodeKey, int> rows;
  int oov_row = 0;

  int lookup(NodeKind kind, std::string_view surface) const;
  std::size_t size() const { return rows.size() + 1; }
};

// Admits node keys that occur in at least `min_frequency` graphs.
NodeVocab build_node_vocab(std::span<const FactualGraph> graphs, std::size_t min_frequency);

// Id 0 is the shared out-of-vocabulary token.
struct TokenVocab {
  std::map<std::string, int> ids;
  int oov = 0;

  int lookup(std::string_view token) const;
  std::size_t size() const { return ids.size() + 1; }
  std::vector<int> encode(std::string_view text) const;  // never empty
};

TokenVocab build_token_vocab(std::span<const Document> docs, std::size_t min_frequency);

// h' = tanh(mean_{u in N(v)} W h_u + b); weight is d_out x d_in.
struct GcnLayer {
  Matrix weight;
  Vector bias;
};

// Default document encoder: tanh(projection * mean(token embeddings) + bias).
struct EncoderWeights {
  Matrix token_embeddings;  // vocab x d_token
  Matrix projection;        // d_text x d_token
  Vector bias;              // d_text
};

// Affine classifier head producing two logits.
struct Head {
  Matrix weight;  // 2 x d_in
  Vector bias;    // 2
};

struct Weights {
  Matrix node_embeddings;  // vocab x d_node
  std::vector<GcnLayer> gcn;
  EncoderWeights encoder;
  Head article;
  Head entity;

  Weights zeros_like() const;
  void set_zero();

  // Visits every tensor in a fixed order as a flat span of its storage.
  void for_each(const std::function<void(std::string_view, std::span<double>)>& fn);
  void for_each(const std::function<void(std::string_view, std::span<const double>)>& fn) const;

  std::size_t parameter_count() const;
  double squared_norm() const;
};

struct ModelConfig {
  std::size_t node_dim = 100;
  std::size_t gcn_layers = 2;
  std::size_t gcn_dim = 100;
  std::size_t text_dim = 64;
  double dropout = 0.1;
  Aggregation aggregation = Aggregation::Mean;
  NeighborMode neighbors = NeighborMode::Incoming;
  bool use_graph = true;  // false zeroes the graph half of the fused vector
  double entity_loss_weight = 1.0;
  double entity_positive_weight = 1.0;
  std::size_t min_node_frequency = 10;
  std::size_t min_token_frequency = 1;
  double embedding_init_std = 0.02;
};

struct DetectorParams {
  ModelConfig config;
  NodeVocab nodes;
  TokenVocab tokens;
  Weights weights;
};

// Embedding tables ~ N(0, init_std^2); dense layers Glorot-uniform. Head biases
// start slightly positive so the ReLU logits are not dead at step 0.
DetectorParams init_detector(const ModelConfig& config, NodeVocab nodes, TokenVocab tokens,
                             std::uint64_t seed);

// A document and its graph resolved against a model's vocabularies.
struct PreparedExample {
  std::vector<int> node_rows;
  std::vector<std::vector<int>> neighbors;
  std::vector<int> doc_entity_nodes;
  std::vector<std::string> entity_surfaces;
  std::vector<int> token_ids;
  int label = 0;
  std::vector<int> entity_labels;
};

PreparedExample prepare_example(const Document& doc, const FactualGraph& graph,
                                const DetectorParams& params);

// All layer states, index 0 being h1 (rows are nodes). Nodes with an empty
// neighbor set aggregate to zero. Sums run in ascending neighbor id order.
std::vector<Matrix> gcn_forward(const std::vector<std::vector<int>>& neighbors, const Matrix& h1,
                                std::span<const GcnLayer> layers);

Vector encode_text(std::span<const int> token_ids, const EncoderWeights& encoder);
Vector encode_text(std::string_view text, const TokenVocab& vocab, const EncoderWeights& encoder);

// Inverted dropout in train mode; a null context means inference.
struct DropoutContext {
  double rate = 0.0;
  Rng* rng = nullptr;

  Vector mask(Eigen::Index n) const;
};

Vector aggregate_entities(const Matrix& node_states, std::span<const int> doc_entity_nodes,
                          Aggregation aggregation);

// ReLU(dropout(W [doc_vec; agg] + b)).
Vector fuse_and_score(const Vector& doc_vec, const Matrix& node_states,
                      std::span<const int> doc_entity_nodes, const Head& head,
                      Aggregation aggregation, const DropoutContext* dropout = nullptr);

// dropout(ReLU(W h_v + b)) per document entity.
std::vector<Vector> entity_scores(const Matrix& node_states, std::span<const int> doc_entity_nodes,
                                  const Head& head, const DropoutContext* dropout = nullptr);

double cross_entropy(const Vector& logits, int label);
Vector softmax(const Vector& logits);

struct LossWeights {
  double entity = 1.0;
  double entity_positive = 1.0;
};

double joint_loss(const Vector& article_logits, std::span<const Vector> entity_logits,
                  int article_label, std::span<const int> entity_labels,
                  const LossWeights& weights = {});

struct ForwardCache {
  std::vector<Matrix> layers;
  Vector token_mean;
  Vector doc_vec;
  Vector aggregate;
  Vector article_pre;   // W[doc;agg]+b, before dropout
  Vector article_mask;  // scaled keep mask (ones in inference)
  Vector article_logits;
  std::vector<Vector> entity_pre;
  std::vector<Vector> entity_mask;
  std::vector<Vector> entity_logits;
};

ForwardCache forward(const PreparedExample& example, const DetectorParams& params,
                     const DropoutContext* dropout = nullptr);

double example_loss(const ForwardCache& cache, const PreparedExample& example,
                    const DetectorParams& params);

// Adds the exact gradient of the example's joint loss to `grads`; returns the loss.
double backward(const ForwardCache& cache, const PreparedExample& example,
                const DetectorParams& params, Weights& grads);

// Summed loss and gradient over a batch. With train_mode each example gets a
// dropout stream derived from (dropout_seed, position in batch).
double batch_loss_and_gradients(std::span<const PreparedExample> batch,
                                const DetectorParams& params, Weights& grads, bool train_mode,
                                std::uint64_t dropout_seed);

struct TrainConfig {
  double learning_rate = 2e-5;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  double warmup_fraction = 0.10;
  double clip_norm = 1.0;  // <= 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per example
  double valid_accuracy = 0.0;
};

struct TrainResult {
  DetectorParams params;  // best validation epoch
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
};

// Adam with linear warmup then a constant rate, global-norm clipping and a
// seeded shuffle per epoch.
TrainResult train(DetectorParams params, std::span<const PreparedExample> train_set,
                  std::span<const PreparedExample> valid_set, const TrainConfig& config);

struct Prediction {
  Label label = Label::HumanWritten;
  Vector article_probs;
  std::vector<bool> entity_manipulated;
  std::vector<Vector> entity_probs;
};

// Ties resolve to index 0.
int argmax2(const Vector& logits);

Prediction predict(const PreparedExample& example, const DetectorParams& params);
std::vector<Prediction> predict_batch(std::span<const PreparedExample> examples,
                                      const DetectorParams& params);

// word2vec text format. Surfaces may contain spaces; the last `dim` fields of
// a line are the vector. Returns the number of rows overwritten.
std::size_t load_pretrained_embeddings(DetectorParams& params, const std::filesystem::path& path);
void save_embeddings(const DetectorParams& params, const std::filesystem::path& path);

void save_checkpoint(const DetectorParams& params, const TrainConfig& train_config,
                     const std::filesystem::path& path);

struct Checkpoint {
  DetectorParams params;
  TrainConfig train_config;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace entfact
