#include "entfact/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "entfact/error.hpp"
#include "entfact/parallel.hpp"
#include "entfact/text.hpp"

namespace entfact {

std::string_view aggregation_name(Aggregation aggregation) {
  return aggregation == Aggregation::Mean ? "mean" : "sum";
}

std::optional<Aggregation> parse_aggregation(std::string_view name) {
  if (name == "mean") return Aggregation::Mean;
  if (name == "sum") return Aggregation::Sum;
  return std::nullopt;
}

// ---------------------------------------------------------------- vocabularies

int NodeVocab::lookup(NodeKind kind, std::string_view surface) const {
  auto it = rows.find(NodeKey{kind, normalize_surface(surface)});
  return it == rows.end() ? oov_row : it->second;
}

NodeVocab build_node_vocab(std::span<const FactualGraph> graphs, std::size_t min_frequency) {
  std::map<NodeKey, std::size_t> frequency;
  for (const auto& g : graphs) {
    std::set<NodeKey> present;
    for (const auto& n : g.nodes) present.insert(NodeKey{n.kind, normalize_surface(n.surface)});
    for (const auto& key : present) ++frequency[key];
  }
  NodeVocab vocab;
  int next = 1;
  for (const auto& [key, count] : frequency) {
    if (count >= min_frequency) vocab.rows.emplace(key, next++);
  }
  return vocab;
}

int TokenVocab::lookup(std::string_view token) const {
  auto it = ids.find(std::string(token));
  return it == ids.end() ? oov : it->second;
}

std::vector<int> TokenVocab::encode(std::string_view text) const {
  std::vector<int> out;
  for (const auto& t : tokenize(text)) out.push_back(lookup(t));
  if (out.empty()) out.push_back(oov);
  return out;
}

TokenVocab build_token_vocab(std::span<const Document> docs, std::size_t min_frequency) {
  std::map<std::string, std::size_t> frequency;
  for (const auto& doc : docs) {
    for (auto& t : tokenize(doc.text)) ++frequency[std::move(t)];
  }
  TokenVocab vocab;
  int next = 1;
  for (const auto& [token, count] : frequency) {
    if (count >= min_frequency) vocab.ids.emplace(token, next++);
  }
  return vocab;
}

// ---------------------------------------------------------------- weights

namespace {

template <typename W, typename Span>
std::vector<std::pair<std::string, Span>> collect_tensors(W& w) {
  std::vector<std::pair<std::string, Span>> out;
  auto add = [&](std::string name, auto& m) {
    out.emplace_back(std::move(name), Span(m.data(), static_cast<std::size_t>(m.size())));
  };
  add("node_embeddings", w.node_embeddings);
  for (std::size_t k = 0; k < w.gcn.size(); ++k) {
    add("gcn." + std::to_string(k) + ".weight", w.gcn[k].weight);
    add("gcn." + std::to_string(k) + ".bias", w.gcn[k].bias);
  }
  add("encoder.token_embeddings", w.encoder.token_embeddings);
  add("encoder.projection", w.encoder.projection);
  add("encoder.bias", w.encoder.bias);
  add("article.weight", w.article.weight);
  add("article.bias", w.article.bias);
  add("entity.weight", w.entity.weight);
  add("entity.bias", w.entity.bias);
  return out;
}

std::vector<std::pair<std::string, std::span<double>>> tensors(Weights& w) {
  return collect_tensors<Weights, std::span<double>>(w);
}

std::vector<std::pair<std::string, std::span<const double>>> tensors(const Weights& w) {
  return collect_tensors<const Weights, std::span<const double>>(w);
}

}  // namespace

Weights Weights::zeros_like() const {
  Weights z = *this;
  z.set_zero();
  return z;
}

void Weights::set_zero() {
  for (auto& [name, values] : tensors(*this)) std::fill(values.begin(), values.end(), 0.0);
}

void Weights::for_each(const std::function<void(std::string_view, std::span<double>)>& fn) {
  for (auto& [name, values] : tensors(*this)) fn(name, values);
}

void Weights::for_each(const std::function<void(std::string_view, std::span<const double>)>& fn) const {
  for (const auto& [name, values] : tensors(*this)) fn(name, values);
}

std::size_t Weights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, values] : tensors(*this)) n += values.size();
  return n;
}

double Weights::squared_norm() const {
  double s = 0.0;
  for (const auto& [name, values] : tensors(*this)) {
    for (double v : values) s += v * v;
  }
  return s;
}

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal(0.0, stddev);
  }
  return m;
}

Matrix glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = (2.0 * rng.uniform01() - 1.0) * limit;
  }
  return m;
}

constexpr double kHeadBiasInit = 0.1;

}  // namespace

DetectorParams init_detector(const ModelConfig& config, NodeVocab nodes, TokenVocab tokens,
                             std::uint64_t seed) {
  if (config.gcn_layers == 0) throw Error(ErrorCode::ConfigError, "at least one GCN layer is required");
  DetectorParams p;
  p.config = config;
  p.nodes = std::move(nodes);
  p.tokens = std::move(tokens);

  const auto node_dim = static_cast<Eigen::Index>(config.node_dim);
  const auto gcn_dim = static_cast<Eigen::Index>(config.gcn_dim);
  const auto text_dim = static_cast<Eigen::Index>(config.text_dim);

  Rng emb_rng(derive_seed(seed, "init:node_embeddings"));
  p.weights.node_embeddings =
      gaussian(static_cast<Eigen::Index>(p.nodes.size()), node_dim, config.embedding_init_std, emb_rng);

  Rng gcn_rng(derive_seed(seed, "init:gcn"));
  for (std::size_t k = 0; k < config.gcn_layers; ++k) {
    const Eigen::Index d_in = k == 0 ? node_dim : gcn_dim;
    p.weights.gcn.push_back({glorot(gcn_dim, d_in, gcn_rng), Vector::Zero(gcn_dim)});
  }

  Rng enc_rng(derive_seed(seed, "init:encoder"));
  p.weights.encoder.token_embeddings =
      gaussian(static_cast<Eigen::Index>(p.tokens.size()), text_dim, config.embedding_init_std, enc_rng);
  p.weights.encoder.projection = glorot(text_dim, text_dim, enc_rng);
  p.weights.encoder.bias = Vector::Zero(text_dim);

  Rng head_rng(derive_seed(seed, "init:heads"));
  p.weights.article.weight = glorot(2, text_dim + gcn_dim, head_rng);
  p.weights.article.bias = Vector::Constant(2, kHeadBiasInit);
  p.weights.entity.weight = glorot(2, gcn_dim, head_rng);
  p.weights.entity.bias = Vector::Constant(2, kHeadBiasInit);
  return p;
}

PreparedExample prepare_example(const Document& doc, const FactualGraph& graph,
                                const DetectorParams& params) {
  PreparedExample ex;
  ex.node_rows.reserve(graph.nodes.size());
  for (const auto& n : graph.nodes) ex.node_rows.push_back(params.nodes.lookup(n.kind, n.surface));
  ex.neighbors = neighbor_index(graph, params.config.neighbors);
  ex.doc_entity_nodes = graph.doc_entity_nodes;
  for (int e : graph.doc_entity_nodes) {
    const auto& surface = graph.nodes[static_cast<std::size_t>(e)].surface;
    ex.entity_surfaces.push_back(surface);
    ex.entity_labels.push_back(doc.manipulated_surfaces.count(surface) > 0 ? 1 : 0);
  }
  ex.token_ids = params.tokens.encode(doc.text);
  ex.label = doc.label == Label::Manipulated ? 1 : 0;
  return ex;
}

// ---------------------------------------------------------------- forward pieces

namespace {

Matrix mean_aggregate(const std::vector<std::vector<int>>& neighbors, const Matrix& h) {
  Matrix agg = Matrix::Zero(h.rows(), h.cols());
  for (std::size_t v = 0; v < neighbors.size(); ++v) {
    const auto& in = neighbors[v];
    if (in.empty()) continue;
    for (int u : in) agg.row(static_cast<Eigen::Index>(v)) += h.row(u);
    agg.row(static_cast<Eigen::Index>(v)) /= static_cast<double>(in.size());
  }
  return agg;
}

}  // namespace

std::vector<Matrix> gcn_forward(const std::vector<std::vector<int>>& neighbors, const Matrix& h1,
                                std::span<const GcnLayer> layers) {
  const auto n = static_cast<Eigen::Index>(neighbors.size());
  if (h1.rows() != n) {
    throw Error(ErrorCode::ShapeMismatch, "feature rows " + std::to_string(h1.rows()) +
                                              " != node count " + std::to_string(n));
  }
  for (const auto& in : neighbors) {
    for (int u : in) {
      if (u < 0 || u >= n) throw Error(ErrorCode::ShapeMismatch, "neighbor id out of range");
    }
  }
  std::vector<Matrix> states;
  states.reserve(layers.size() + 1);
  states.push_back(h1);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& layer = layers[k];
    if (layer.weight.cols() != states.back().cols() || layer.bias.size() != layer.weight.rows()) {
      throw Error(ErrorCode::ShapeMismatch, "GCN layer " + std::to_string(k) + " shape mismatch");
    }
    Matrix pre = mean_aggregate(neighbors, states.back()) * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    states.push_back(pre.array().tanh().matrix());
  }
  return states;
}

namespace {

Vector token_mean(std::span<const int> token_ids, const EncoderWeights& encoder) {
  const Eigen::Index width = encoder.token_embeddings.cols();
  Vector mean = Vector::Zero(width);
  const int oov = 0;
  if (token_ids.empty()) return encoder.token_embeddings.row(oov).transpose();
  for (int t : token_ids) {
    if (t < 0 || t >= encoder.token_embeddings.rows()) {
      throw Error(ErrorCode::ShapeMismatch, "token id out of range");
    }
    mean += encoder.token_embeddings.row(t).transpose();
  }
  return mean / static_cast<double>(token_ids.size());
}

Vector encode_from_mean(const Vector& mean, const EncoderWeights& encoder) {
  if (encoder.projection.cols() != mean.size()) {
    throw Error(ErrorCode::ShapeMismatch, "encoder projection does not match embedding width");
  }
  return (encoder.projection * mean + encoder.bias).array().tanh().matrix();
}

}  // namespace

Vector encode_text(std::span<const int> token_ids, const EncoderWeights& encoder) {
  return encode_from_mean(token_mean(token_ids, encoder), encoder);
}

Vector encode_text(std::string_view text, const TokenVocab& vocab, const EncoderWeights& encoder) {
  const auto ids = vocab.encode(text);
  return encode_text(ids, encoder);
}

Vector DropoutContext::mask(Eigen::Index n) const {
  if (rng == nullptr || rate <= 0.0) return Vector::Ones(n);
  Vector m(n);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < n; ++i) m(i) = rng->uniform01() < rate ? 0.0 : keep_scale;
  return m;
}

Vector aggregate_entities(const Matrix& node_states, std::span<const int> doc_entity_nodes,
                          Aggregation aggregation) {
  if (doc_entity_nodes.empty()) throw Error(ErrorCode::NoEntityNodes, "document has no entity nodes");
  Vector agg = Vector::Zero(node_states.cols());
  for (int e : doc_entity_nodes) {
    if (e < 0 || e >= node_states.rows()) throw Error(ErrorCode::ShapeMismatch, "entity node out of range");
    agg += node_states.row(e).transpose();
  }
  if (aggregation == Aggregation::Mean) agg /= static_cast<double>(doc_entity_nodes.size());
  return agg;
}

namespace {

Vector concat(const Vector& a, const Vector& b) {
  Vector x(a.size() + b.size());
  x << a, b;
  return x;
}

Vector affine(const Head& head, const Vector& x) {
  if (head.weight.cols() != x.size() || head.bias.size() != head.weight.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "head expects width " + std::to_string(head.weight.cols()) +
                                              ", got " + std::to_string(x.size()));
  }
  return head.weight * x + head.bias;
}

}  // namespace

Vector fuse_and_score(const Vector& doc_vec, const Matrix& node_states,
                      std::span<const int> doc_entity_nodes, const Head& head,
                      Aggregation aggregation, const DropoutContext* dropout) {
  const Vector agg = aggregate_entities(node_states, doc_entity_nodes, aggregation);
  const Vector pre = affine(head, concat(doc_vec, agg));
  const Vector mask = dropout ? dropout->mask(pre.size()) : Vector::Ones(pre.size());
  return pre.cwiseProduct(mask).cwiseMax(0.0);
}

std::vector<Vector> entity_scores(const Matrix& node_states, std::span<const int> doc_entity_nodes,
                                  const Head& head, const DropoutContext* dropout) {
  std::vector<Vector> out;
  out.reserve(doc_entity_nodes.size());
  for (int e : doc_entity_nodes) {
    const Vector q = affine(head, node_states.row(e).transpose());
    const Vector mask = dropout ? dropout->mask(q.size()) : Vector::Ones(q.size());
    out.push_back(q.cwiseMax(0.0).cwiseProduct(mask));
  }
  return out;
}

double cross_entropy(const Vector& logits, int label) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(label);
}

Vector softmax(const Vector& logits) {
  const Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

double joint_loss(const Vector& article_logits, std::span<const Vector> entity_logits,
                  int article_label, std::span<const int> entity_labels, const LossWeights& weights) {
  if (entity_logits.size() != entity_labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "entity logits and labels differ in length");
  }
  double loss = cross_entropy(article_logits, article_label);
  for (std::size_t i = 0; i < entity_logits.size(); ++i) {
    const double w = weights.entity * (entity_labels[i] == 1 ? weights.entity_positive : 1.0);
    loss += w * cross_entropy(entity_logits[i], entity_labels[i]);
  }
  return loss;
}

// ---------------------------------------------------------------- forward / backward

ForwardCache forward(const PreparedExample& ex, const DetectorParams& params,
                     const DropoutContext* dropout) {
  const auto& w = params.weights;
  const auto& cfg = params.config;
  ForwardCache c;

  Matrix h1(static_cast<Eigen::Index>(ex.node_rows.size()), w.node_embeddings.cols());
  for (std::size_t i = 0; i < ex.node_rows.size(); ++i) {
    h1.row(static_cast<Eigen::Index>(i)) = w.node_embeddings.row(ex.node_rows[i]);
  }
  c.layers = gcn_forward(ex.neighbors, h1, w.gcn);
  const Matrix& top = c.layers.back();

  c.token_mean = token_mean(ex.token_ids, w.encoder);
  c.doc_vec = encode_from_mean(c.token_mean, w.encoder);

  // a document without entities contributes a zero graph aggregate
  if (cfg.use_graph && !ex.doc_entity_nodes.empty()) {
    c.aggregate = aggregate_entities(top, ex.doc_entity_nodes, cfg.aggregation);
  } else {
    c.aggregate = Vector::Zero(top.cols());
  }
  c.article_pre = affine(w.article, concat(c.doc_vec, c.aggregate));
  c.article_mask = dropout ? dropout->mask(2) : Vector::Ones(2);
  c.article_logits = c.article_pre.cwiseProduct(c.article_mask).cwiseMax(0.0);

  for (int e : ex.doc_entity_nodes) {
    Vector q = affine(w.entity, top.row(e).transpose());
    Vector mask = dropout ? dropout->mask(2) : Vector::Ones(2);
    c.entity_logits.push_back(q.cwiseMax(0.0).cwiseProduct(mask));
    c.entity_pre.push_back(std::move(q));
    c.entity_mask.push_back(std::move(mask));
  }
  return c;
}

namespace {

LossWeights loss_weights(const ModelConfig& cfg) {
  return {cfg.entity_loss_weight, cfg.entity_positive_weight};
}

}  // namespace

double example_loss(const ForwardCache& cache, const PreparedExample& ex, const DetectorParams& params) {
  return joint_loss(cache.article_logits, cache.entity_logits, ex.label, ex.entity_labels,
                    loss_weights(params.config));
}

double backward(const ForwardCache& c, const PreparedExample& ex, const DetectorParams& params,
                Weights& g) {
  const auto& w = params.weights;
  const auto& cfg = params.config;
  const double loss = example_loss(c, ex, params);
  const Matrix& top = c.layers.back();
  const Eigen::Index text_dim = c.doc_vec.size();
  const Eigen::Index graph_dim = c.aggregate.size();

  // article head: a = relu(pre * mask)
  Vector d_logits = softmax(c.article_logits);
  d_logits(ex.label) -= 1.0;
  Vector d_pre(2);
  for (Eigen::Index i = 0; i < 2; ++i) {
    const double masked = c.article_pre(i) * c.article_mask(i);
    d_pre(i) = masked > 0.0 ? d_logits(i) * c.article_mask(i) : 0.0;
  }
  const Vector x = concat(c.doc_vec, c.aggregate);
  g.article.weight.noalias() += d_pre * x.transpose();
  g.article.bias += d_pre;
  const Vector d_x = w.article.weight.transpose() * d_pre;

  // encoder: doc = tanh(P m + c), m = mean of token rows
  const Vector d_z = d_x.head(text_dim).cwiseProduct((1.0 - c.doc_vec.array().square()).matrix());
  g.encoder.projection.noalias() += d_z * c.token_mean.transpose();
  g.encoder.bias += d_z;
  const Vector d_mean = w.encoder.projection.transpose() * d_z;
  const double inv_tokens = 1.0 / static_cast<double>(ex.token_ids.size());
  for (int t : ex.token_ids) g.encoder.token_embeddings.row(t) += inv_tokens * d_mean.transpose();

  Matrix d_h = Matrix::Zero(top.rows(), top.cols());
  if (cfg.use_graph && !ex.doc_entity_nodes.empty()) {
    const double scale = cfg.aggregation == Aggregation::Mean
                             ? 1.0 / static_cast<double>(ex.doc_entity_nodes.size())
                             : 1.0;
    const Vector d_agg = d_x.tail(graph_dim) * scale;
    for (int e : ex.doc_entity_nodes) d_h.row(e) += d_agg.transpose();
  }

  // entity head: ef = relu(q) * mask
  const LossWeights lw = loss_weights(cfg);
  for (std::size_t i = 0; i < ex.doc_entity_nodes.size(); ++i) {
    const int e = ex.doc_entity_nodes[i];
    const int y = ex.entity_labels[i];
    const double weight = lw.entity * (y == 1 ? lw.entity_positive : 1.0);
    Vector d_ef = softmax(c.entity_logits[i]);
    d_ef(y) -= 1.0;
    d_ef *= weight;
    Vector d_q(2);
    for (Eigen::Index j = 0; j < 2; ++j) {
      d_q(j) = c.entity_pre[i](j) > 0.0 ? d_ef(j) * c.entity_mask[i](j) : 0.0;
    }
    g.entity.weight.noalias() += d_q * top.row(e);
    g.entity.bias += d_q;
    d_h.row(e) += (w.entity.weight.transpose() * d_q).transpose();
  }

  // GCN layers, last to first
  for (std::size_t k = w.gcn.size(); k-- > 0;) {
    const Matrix& h_out = c.layers[k + 1];
    const Matrix& h_in = c.layers[k];
    const Matrix d_pre_gcn = d_h.cwiseProduct((1.0 - h_out.array().square()).matrix());
    const Matrix agg = mean_aggregate(ex.neighbors, h_in);
    g.gcn[k].weight.noalias() += d_pre_gcn.transpose() * agg;
    g.gcn[k].bias += d_pre_gcn.colwise().sum().transpose();
    const Matrix d_agg = d_pre_gcn * w.gcn[k].weight;
    Matrix d_in = Matrix::Zero(h_in.rows(), h_in.cols());
    for (std::size_t v = 0; v < ex.neighbors.size(); ++v) {
      const auto& in = ex.neighbors[v];
      if (in.empty()) continue;
      const double inv = 1.0 / static_cast<double>(in.size());
      for (int u : in) d_in.row(u) += inv * d_agg.row(static_cast<Eigen::Index>(v));
    }
    d_h = std::move(d_in);
  }
  for (std::size_t i = 0; i < ex.node_rows.size(); ++i) {
    g.node_embeddings.row(ex.node_rows[i]) += d_h.row(static_cast<Eigen::Index>(i));
  }
  return loss;
}

namespace {

double indexed_batch_gradients(std::span<const PreparedExample> data,
                               std::span<const std::size_t> indices, const DetectorParams& params,
                               Weights& grads, bool train_mode, std::uint64_t dropout_seed) {
  double loss = 0.0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& ex = data[indices[i]];
    Rng rng(derive_seed(dropout_seed, "dropout", i));
    DropoutContext ctx{params.config.dropout, &rng};
    const ForwardCache cache = forward(ex, params, train_mode ? &ctx : nullptr);
    loss += backward(cache, ex, params, grads);
  }
  return loss;
}

}  // namespace

double batch_loss_and_gradients(std::span<const PreparedExample> batch, const DetectorParams& params,
                                Weights& grads, bool train_mode, std::uint64_t dropout_seed) {
  std::vector<std::size_t> indices(batch.size());
  std::iota(indices.begin(), indices.end(), 0);
  return indexed_batch_gradients(batch, indices, params, grads, train_mode, dropout_seed);
}

// ---------------------------------------------------------------- training

int argmax2(const Vector& logits) { return logits(1) > logits(0) ? 1 : 0; }

Prediction predict(const PreparedExample& ex, const DetectorParams& params) {
  const ForwardCache c = forward(ex, params, nullptr);
  Prediction p;
  p.article_probs = softmax(c.article_logits);
  p.label = argmax2(c.article_logits) == 1 ? Label::Manipulated : Label::HumanWritten;
  for (const auto& logits : c.entity_logits) {
    p.entity_probs.push_back(softmax(logits));
    p.entity_manipulated.push_back(argmax2(logits) == 1);
  }
  return p;
}

std::vector<Prediction> predict_batch(std::span<const PreparedExample> examples,
                                      const DetectorParams& params) {
  std::vector<Prediction> out(examples.size());
  parallel_for(examples.size(), [&](std::size_t i) { out[i] = predict(examples[i], params); });
  return out;
}

namespace {

double accuracy_on(std::span<const PreparedExample> data, const DetectorParams& params) {
  if (data.empty()) return 0.0;
  const auto predictions = predict_batch(data, params);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int predicted = predictions[i].label == Label::Manipulated ? 1 : 0;
    correct += predicted == data[i].label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

TrainResult train(DetectorParams params, std::span<const PreparedExample> train_set,
                  std::span<const PreparedExample> valid_set, const TrainConfig& config) {
  if (train_set.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  if (config.learning_rate < 0.0 || config.batch_size == 0 || config.warmup_fraction < 0.0 ||
      config.warmup_fraction >= 1.0) {
    throw Error(ErrorCode::ConfigError, "invalid training configuration");
  }

  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  const auto warmup_steps =
      static_cast<std::size_t>(std::floor(config.warmup_fraction * static_cast<double>(total_steps)));

  Weights grads = params.weights.zeros_like();
  Weights first_moment = grads;
  Weights second_moment = grads;

  TrainResult result;
  result.params = params;
  double best_accuracy = -1.0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, "shuffle", epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, n);
      grads.set_zero();
      epoch_loss += indexed_batch_gradients(
          train_set, std::span<const std::size_t>(order).subspan(begin, end - begin), params, grads,
          true, derive_seed(config.seed, "step", step));

      if (config.clip_norm > 0.0) {
        const double norm = std::sqrt(grads.squared_norm());
        if (norm > config.clip_norm) {
          const double scale = config.clip_norm / norm;
          grads.for_each([scale](std::string_view, std::span<double> v) {
            for (double& x : v) x *= scale;
          });
        }
      }

      double lr = config.learning_rate;
      if (warmup_steps > 0 && step < warmup_steps) {
        lr *= static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
      }
      ++step;
      const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));

      auto p_t = tensors(params.weights);
      auto g_t = tensors(grads);
      auto m_t = tensors(first_moment);
      auto v_t = tensors(second_moment);
      for (std::size_t t = 0; t < p_t.size(); ++t) {
        auto p = p_t[t].second;
        auto gr = g_t[t].second;
        auto m = m_t[t].second;
        auto v = v_t[t].second;
        for (std::size_t i = 0; i < p.size(); ++i) {
          m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gr[i];
          v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gr[i] * gr[i];
          const double m_hat = m[i] / correction1;
          const double v_hat = v[i] / correction2;
          p[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(n);
    stats.valid_accuracy = accuracy_on(valid_set, params);
    result.history.push_back(stats);
    if (valid_set.empty() || stats.valid_accuracy > best_accuracy) {
      best_accuracy = stats.valid_accuracy;
      result.params = params;
      result.best_epoch = epoch;
    }
  }
  if (config.epochs == 0) result.params = params;
  return result;
}

// ---------------------------------------------------------------- embeddings file

namespace {

constexpr const char* kOovSurface = "<unk>";

std::string embedding_surface(std::string_view raw) {
  std::string s(raw);
  if (s.rfind("ENTITY/", 0) == 0) s.erase(0, 7);
  std::replace(s.begin(), s.end(), '_', ' ');
  return normalize_surface(s);
}

std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space_byte(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space_byte(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

std::size_t load_pretrained_embeddings(DetectorParams& params, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::FormatError, "embedding file has no header");
  const auto header = fields(line);
  if (header.size() != 2) throw Error(ErrorCode::FormatError, "embedding header must be 'count dim'");
  const std::size_t dim = std::stoul(std::string(header[1]));
  Matrix& table = params.weights.node_embeddings;
  if (dim != static_cast<std::size_t>(table.cols())) {
    throw Error(ErrorCode::DimensionMismatch, "embedding file has dimension " + std::to_string(dim) +
                                                  ", table has " + std::to_string(table.cols()));
  }

  std::multimap<std::string, int> rows_by_surface;
  for (const auto& [key, row] : params.nodes.rows) rows_by_surface.emplace(key.surface, row);

  std::set<int> overwritten;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto parts = fields(line);
    if (parts.empty()) continue;
    if (parts.size() < dim + 1) {
      throw Error(ErrorCode::FormatError, "embedding line " + std::to_string(line_no) + " is too short");
    }
    std::string raw;
    for (std::size_t i = 0; i + dim < parts.size(); ++i) {
      if (i > 0) raw.push_back(' ');
      raw.append(parts[i]);
    }
    Vector values(static_cast<Eigen::Index>(dim));
    for (std::size_t d = 0; d < dim; ++d) {
      values(static_cast<Eigen::Index>(d)) = std::strtod(std::string(parts[parts.size() - dim + d]).c_str(), nullptr);
    }
    std::vector<int> targets;
    if (raw == kOovSurface) {
      targets.push_back(params.nodes.oov_row);
    } else {
      auto [lo, hi] = rows_by_surface.equal_range(embedding_surface(raw));
      for (auto it = lo; it != hi; ++it) targets.push_back(it->second);
    }
    for (int row : targets) {
      table.row(row) = values.transpose();
      overwritten.insert(row);
    }
  }
  return overwritten.size();
}

void save_embeddings(const DetectorParams& params, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + path.string());
  const Matrix& table = params.weights.node_embeddings;
  out << params.nodes.size() << ' ' << table.cols() << '\n';
  char buffer[32];
  auto write_row = [&](const std::string& surface, int row) {
    out << surface;
    for (Eigen::Index d = 0; d < table.cols(); ++d) {
      std::snprintf(buffer, sizeof buffer, " %.17g", table(row, d));
      out << buffer;
    }
    out << '\n';
  };
  write_row(kOovSurface, params.nodes.oov_row);
  std::vector<std::pair<int, std::string>> ordered;
  for (const auto& [key, row] : params.nodes.rows) {
    std::string s = key.surface;
    std::replace(s.begin(), s.end(), ' ', '_');
    ordered.emplace_back(row, std::move(s));
  }
  std::sort(ordered.begin(), ordered.end());
  for (const auto& [row, surface] : ordered) write_row(surface, row);
}

// ---------------------------------------------------------------- checkpoints

namespace {

nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["node_dim"] = c.node_dim;
  j["gcn_layers"] = c.gcn_layers;
  j["gcn_dim"] = c.gcn_dim;
  j["text_dim"] = c.text_dim;
  j["dropout"] = c.dropout;
  j["aggregation"] = aggregation_name(c.aggregation);
  j["neighbors"] = c.neighbors == NeighborMode::Incoming ? "incoming" : "symmetric";
  j["use_graph"] = c.use_graph;
  j["entity_loss_weight"] = c.entity_loss_weight;
  j["entity_positive_weight"] = c.entity_positive_weight;
  j["min_node_frequency"] = c.min_node_frequency;
  j["min_token_frequency"] = c.min_token_frequency;
  j["embedding_init_std"] = c.embedding_init_std;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.node_dim = j.at("node_dim");
  c.gcn_layers = j.at("gcn_layers");
  c.gcn_dim = j.at("gcn_dim");
  c.text_dim = j.at("text_dim");
  c.dropout = j.at("dropout");
  c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>()).value_or(Aggregation::Mean);
  c.neighbors = j.at("neighbors") == "symmetric" ? NeighborMode::Symmetric : NeighborMode::Incoming;
  c.use_graph = j.at("use_graph");
  c.entity_loss_weight = j.at("entity_loss_weight");
  c.entity_positive_weight = j.at("entity_positive_weight");
  c.min_node_frequency = j.at("min_node_frequency");
  c.min_token_frequency = j.at("min_token_frequency");
  c.embedding_init_std = j.at("embedding_init_std");
  return c;
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& t) {
  nlohmann::ordered_json j;
  j["learning_rate"] = t.learning_rate;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["warmup_fraction"] = t.warmup_fraction;
  j["clip_norm"] = t.clip_norm;
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["epsilon"] = t.epsilon;
  j["seed"] = t.seed;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig t;
  t.learning_rate = j.at("learning_rate");
  t.batch_size = j.at("batch_size");
  t.epochs = j.at("epochs");
  t.warmup_fraction = j.at("warmup_fraction");
  t.clip_norm = j.at("clip_norm");
  t.beta1 = j.at("beta1");
  t.beta2 = j.at("beta2");
  t.epsilon = j.at("epsilon");
  t.seed = j.at("seed");
  return t;
}

}  // namespace

void save_checkpoint(const DetectorParams& params, const TrainConfig& train_config,
                     const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "entfact-checkpoint";
  j["version"] = 1;
  j["seed"] = train_config.seed;
  j["config"] = config_to_json(params.config);
  j["train"] = train_config_to_json(train_config);
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& [key, row] : params.nodes.rows) {
    nodes.push_back({node_kind_name(key.kind), key.surface, row});
  }
  j["node_vocab"] = std::move(nodes);
  auto tokens = nlohmann::ordered_json::array();
  for (const auto& [token, id] : params.tokens.ids) tokens.push_back({token, id});
  j["token_vocab"] = std::move(tokens);

  nlohmann::ordered_json tensors_json;
  auto add = [&](const std::string& name, const auto& m) {
    nlohmann::ordered_json t;
    t["rows"] = m.rows();
    t["cols"] = m.cols();
    t["data"] = std::vector<double>(m.data(), m.data() + m.size());
    tensors_json[name] = std::move(t);
  };
  const auto& w = params.weights;
  add("node_embeddings", w.node_embeddings);
  for (std::size_t k = 0; k < w.gcn.size(); ++k) {
    add("gcn." + std::to_string(k) + ".weight", w.gcn[k].weight);
    add("gcn." + std::to_string(k) + ".bias", w.gcn[k].bias);
  }
  add("encoder.token_embeddings", w.encoder.token_embeddings);
  add("encoder.projection", w.encoder.projection);
  add("encoder.bias", w.encoder.bias);
  add("article.weight", w.article.weight);
  add("article.bias", w.article.bias);
  add("entity.weight", w.entity.weight);
  add("entity.bias", w.entity.bias);
  j["tensors"] = std::move(tensors_json);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + path.string());
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::FormatError, std::string("checkpoint is not JSON: ") + e.what());
  }
  if (j.value("format", "") != "entfact-checkpoint" || j.value("version", 0) != 1) {
    throw Error(ErrorCode::FormatError, "unsupported checkpoint format");
  }
  try {
    Checkpoint ck;
    ck.train_config = train_config_from_json(j.at("train"));
    NodeVocab nodes;
    for (const auto& entry : j.at("node_vocab")) {
      const NodeKind kind = entry.at(0) == "relation" ? NodeKind::Relation : NodeKind::Entity;
      nodes.rows.emplace(NodeKey{kind, entry.at(1).get<std::string>()}, entry.at(2).get<int>());
    }
    TokenVocab tokens;
    for (const auto& entry : j.at("token_vocab")) {
      tokens.ids.emplace(entry.at(0).get<std::string>(), entry.at(1).get<int>());
    }
    ck.params = init_detector(config_from_json(j.at("config")), std::move(nodes), std::move(tokens), 0);
    const auto& stored = j.at("tensors");
    ck.params.weights.for_each([&](std::string_view name, std::span<double> values) {
      const auto& t = stored.at(std::string(name));
      const auto data = t.at("data").get<std::vector<double>>();
      if (data.size() != values.size()) {
        throw Error(ErrorCode::DimensionMismatch, "tensor " + std::string(name) + " has the wrong size");
      }
      std::copy(data.begin(), data.end(), values.begin());
    });
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace entfact
