#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "entfact/detector.hpp"
#include "entfact/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace entfact;
using namespace entfact::testing;

namespace {

GcnLayer layer(Matrix w, Vector b) { return {std::move(w), std::move(b)}; }

}  // namespace

TEST(Gcn, IsolatedNodeIsTanhOfBias) {
  const std::vector<GcnLayer> layers{layer(Matrix::Ones(3, 3), Vector::Zero(3))};
  const auto out = gcn_forward({{}}, Matrix::Ones(1, 3), layers);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_TRUE(out[1].isZero(0.0));
}

TEST(Gcn, IdentityWeightsGiveTanhOfNeighbor) {
  Matrix h(2, 3);
  h << 0.1, -0.4, 2.0, 0.0, 0.0, 0.0;
  const std::vector<GcnLayer> layers{layer(Matrix::Identity(3, 3), Vector::Zero(3))};
  const auto out = gcn_forward({{}, {0}}, h, layers);
  for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(out[1](1, j), std::tanh(h(0, j)));
}

TEST(Gcn, MatchesDenseOracle) {
  Rng rng(12);
  const auto nb = random_neighbors(6, 0.4, rng);
  const Matrix h1 = random_matrix(6, 4, rng);
  const std::vector<GcnLayer> layers{layer(random_matrix(5, 4, rng), random_matrix(5, 1, rng)),
                                     layer(random_matrix(3, 5, rng), random_matrix(3, 1, rng))};
  const auto sparse = gcn_forward(nb, h1, layers);
  const auto dense = dense_gcn_oracle(nb, h1, layers);
  for (std::size_t k = 0; k < sparse.size(); ++k) EXPECT_LT((sparse[k] - dense[k]).cwiseAbs().maxCoeff(), 1e-10);
  for (std::size_t k = 1; k < sparse.size(); ++k) EXPECT_LT(sparse[k].cwiseAbs().maxCoeff(), 1.0);
}

TEST(Gcn, ShapeMismatch) {
  const std::vector<GcnLayer> layers{layer(Matrix::Ones(2, 5), Vector::Zero(2))};
  try {
    gcn_forward({{}, {}}, Matrix::Ones(2, 3), layers);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
  EXPECT_THROW(gcn_forward({{}}, Matrix::Ones(2, 3), {}), Error);
}

TEST(Encoder, EmptyTextAndSingleToken) {
  EncoderWeights enc{Matrix::Random(3, 2), Matrix::Random(4, 2), Vector::Random(4)};
  TokenVocab vocab;
  vocab.ids["bosch"] = 1;
  vocab.ids["grew"] = 2;
  const Vector empty = encode_text("", vocab, enc);
  EXPECT_TRUE(empty.allFinite());
  EXPECT_TRUE(empty.isApprox((enc.projection * enc.token_embeddings.row(0).transpose() + enc.bias).array().tanh().matrix()));
  const Vector one = encode_text("Bosch", vocab, enc);
  EXPECT_TRUE(one.isApprox((enc.projection * enc.token_embeddings.row(1).transpose() + enc.bias).array().tanh().matrix()));
  EXPECT_TRUE(encode_text("bosch grew grew", vocab, enc).isApprox(encode_text("grew bosch grew", vocab, enc)));
}

TEST(Fusion, SingleEntityMeanEqualsSum) {
  const Matrix states = Matrix::Random(3, 4);
  const std::vector<int> one{2};
  EXPECT_TRUE(aggregate_entities(states, one, Aggregation::Mean).isApprox(states.row(2).transpose()));
  EXPECT_TRUE(aggregate_entities(states, one, Aggregation::Sum).isApprox(states.row(2).transpose()));
  const std::vector<int> three{0, 1, 2};
  const Vector mean = aggregate_entities(states, three, Aggregation::Mean);
  const Vector hand = (states.row(0) + states.row(1) + states.row(2)).transpose() / 3.0;
  EXPECT_LT((mean - hand).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE((aggregate_entities(states, three, Aggregation::Sum) - 3.0 * mean).isZero(1e-12));
}

TEST(Fusion, ZeroWeightsGiveReluOfBias) {
  Head head{Matrix::Zero(2, 6), Vector(2)};
  head.bias << 0.7, -0.3;
  const std::vector<int> ents{0};
  const Vector logits = fuse_and_score(Vector::Random(2), Matrix::Random(1, 4), ents, head, Aggregation::Mean);
  EXPECT_DOUBLE_EQ(logits(0), 0.7);
  EXPECT_DOUBLE_EQ(logits(1), 0.0);
  try {
    fuse_and_score(Vector::Random(2), Matrix::Random(1, 4), {}, head, Aggregation::Mean);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoEntityNodes);
  }
}

TEST(EntityScores, ReluClampAndIdentity) {
  Head h{Matrix::Zero(2, 3), Vector(2)};
  h.bias << 1, -1;
  const std::vector<int> ents{0};
  auto s = entity_scores(Matrix::Zero(1, 3), ents, h);
  EXPECT_DOUBLE_EQ(s[0](0), 1.0);
  EXPECT_DOUBLE_EQ(s[0](1), 0.0);
  Head id{Matrix::Identity(2, 2), Vector::Zero(2)};
  Matrix states(1, 2);
  states << 0.3, 0.7;
  s = entity_scores(states, ents, id);
  EXPECT_DOUBLE_EQ(s[0](0), 0.3);
  EXPECT_DOUBLE_EQ(s[0](1), 0.7);
}

TEST(EntityScores, DropoutReproducibleWithSeed) {
  Head h{Matrix::Random(2, 3), Vector::Constant(2, 2.0)};
  const Matrix states = Matrix::Random(4, 3);
  const std::vector<int> ents{0, 1, 2, 3};
  Rng a(7), b(7);
  DropoutContext ca{0.5, &a}, cb{0.5, &b};
  const auto x = entity_scores(states, ents, h, &ca);
  const auto y = entity_scores(states, ents, h, &cb);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], y[i]);
}

TEST(Loss, UniformLogits) {
  const std::vector<Vector> ents{Vector::Zero(2)};
  const std::vector<int> labels{1};
  EXPECT_NEAR(joint_loss(Vector::Zero(2), ents, 0, labels), 2.0 * std::log(2.0), 1e-12);
}

TEST(Loss, LargeMarginApproachesZeroAndMatchesOracle) {
  Vector a(2);
  a << 0.0, 60.0;
  const std::vector<Vector> ents{a};
  const std::vector<int> labels{1};
  EXPECT_LT(joint_loss(a, ents, 1, labels), 1e-20);
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Vector l(2);
    l << rng.normal(0, 3), rng.normal(0, 3);
    const int y = static_cast<int>(rng.uniform_index(2));
    const double oracle = -std::log(std::exp(l(y)) / (std::exp(l(0)) + std::exp(l(1))));
    EXPECT_NEAR(cross_entropy(l, y), oracle, 1e-10);
  }
  EXPECT_THROW(joint_loss(a, ents, 1, {}), Error);
}

TEST(Backward, FiniteDifferencesWithoutDropout) {
  const auto toy = make_toy_problem(3, 0.0);
  const auto check = finite_difference_check(toy.batch, toy.params, 1);
  EXPECT_LT(check.max_relative_error, 1e-4);
  EXPECT_GT(check.checked, toy.params.weights.parameter_count() / 2);
}

TEST(Backward, FiniteDifferencesWithFrozenDropout) {
  const auto toy = make_toy_problem(8, 0.3);
  const auto check = finite_difference_check(toy.batch, toy.params, 77);
  EXPECT_LT(check.max_relative_error, 1e-4);
}

TEST(Backward, UntouchedEmbeddingRowsGetZero) {
  auto toy = make_toy_problem(5, 0.0);
  Weights g = toy.params.weights.zeros_like();
  batch_loss_and_gradients(std::span(toy.batch).first(1), toy.params, g, false, 0);
  std::set<int> used(toy.batch[0].node_rows.begin(), toy.batch[0].node_rows.end());
  for (Eigen::Index r = 0; r < g.node_embeddings.rows(); ++r) {
    if (!used.count(static_cast<int>(r))) EXPECT_TRUE(g.node_embeddings.row(r).isZero(0.0)) << r;
  }
}

TEST(Backward, EntityLossWeightScalesEntityHeadGradient) {
  auto toy = make_toy_problem(6, 0.0);
  Weights g1 = toy.params.weights.zeros_like();
  batch_loss_and_gradients(toy.batch, toy.params, g1, false, 0);
  toy.params.config.entity_loss_weight = 2.0;
  Weights g2 = toy.params.weights.zeros_like();
  batch_loss_and_gradients(toy.batch, toy.params, g2, false, 0);
  EXPECT_TRUE(g2.entity.weight.isApprox(2.0 * g1.entity.weight, 1e-12));
  EXPECT_TRUE(g2.entity.bias.isApprox(2.0 * g1.entity.bias, 1e-12));
}

TEST(Backward, NearZeroLossGivesNearZeroGradients) {
  auto toy = make_toy_problem(2, 0.0);
  // push both heads toward the true classes with a huge margin
  auto& w = toy.params.weights;
  w.article.weight.setZero();
  w.entity.weight.setZero();
  const auto& ex = toy.batch[1];  // human doc, no manipulated entities
  w.article.bias << 80.0, 0.0;
  w.entity.bias << 80.0, 0.0;
  Weights g = w.zeros_like();
  const double loss = batch_loss_and_gradients(std::span(&ex, 1), toy.params, g, false, 0);
  EXPECT_LT(loss, 1e-30);
  EXPECT_LT(g.squared_norm(), 1e-60);
}

TEST(Predict, TieResolvesToHumanAndSoftmax) {
  Vector tie = Vector::Zero(2);
  EXPECT_EQ(argmax2(tie), 0);
  Vector l(2);
  l << 0.0, 5.0;
  EXPECT_EQ(argmax2(l), 1);
  EXPECT_NEAR(softmax(l)(1), 0.9933071490757153, 1e-12);
  EXPECT_EQ(argmax2((l.array() + 3.0).matrix()), 1);
}

TEST(Predict, BatchEqualsSingle) {
  const auto toy = make_toy_problem(9, 0.1);
  const auto batch = predict_batch(toy.batch, toy.params);
  for (std::size_t i = 0; i < toy.batch.size(); ++i) {
    const auto one = predict(toy.batch[i], toy.params);
    EXPECT_EQ(one.label, batch[i].label);
    EXPECT_EQ(one.article_probs, batch[i].article_probs);
    EXPECT_EQ(one.entity_manipulated, batch[i].entity_manipulated);
  }
}

namespace {

// 20 documents whose label is readable from a single token.
std::vector<PreparedExample> separable_set(DetectorParams& params) {
  std::vector<Document> docs;
  std::vector<FactualGraph> graphs;
  for (int i = 0; i < 20; ++i) {
    const bool fake = i % 2 == 1;
    auto d = make_doc("s" + std::to_string(i), std::string(fake ? "Zed" : "Ann") + " said words.",
                      {{"Zed", EntityType::Person}, {"Ann", EntityType::Person}});
    if (fake) {
      d.label = Label::Manipulated;
      d.manipulated_surfaces = {"Zed"};
    }
    docs.push_back(d);
  }
  for (const auto& d : docs) graphs.push_back(build_factual_graph(d, KnowledgeBase{}));
  ModelConfig mc;
  mc.node_dim = 6;
  mc.gcn_dim = 6;
  mc.text_dim = 6;
  mc.min_node_frequency = 1;
  mc.dropout = 0.0;
  params = init_detector(mc, build_node_vocab(graphs, 1), build_token_vocab(docs, 1), 1);
  std::vector<PreparedExample> out;
  for (std::size_t i = 0; i < docs.size(); ++i) out.push_back(prepare_example(docs[i], graphs[i], params));
  return out;
}

}  // namespace

TEST(Train, LossDecreasesOnSeparableSet) {
  DetectorParams params;
  const auto data = separable_set(params);
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.epochs = 10;
  tc.batch_size = 4;
  const auto r = train(params, data, data, tc);
  ASSERT_EQ(r.history.size(), 10u);
  EXPECT_LT(r.history[1].train_loss, r.history[0].train_loss);
  EXPECT_LT(r.history[2].train_loss, r.history[1].train_loss);
  EXPECT_DOUBLE_EQ(r.history[r.best_epoch - 1].valid_accuracy, 1.0);
}

TEST(Train, ZeroLearningRateLeavesParameters) {
  DetectorParams params;
  const auto data = separable_set(params);
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.epochs = 2;
  const auto r = train(params, data, data, tc);
  EXPECT_EQ(r.params.weights.node_embeddings, params.weights.node_embeddings);
  EXPECT_EQ(r.params.weights.article.weight, params.weights.article.weight);
  EXPECT_EQ(r.params.weights.encoder.token_embeddings, params.weights.encoder.token_embeddings);
}

TEST(Train, DeterministicAndEmptyDatasetError) {
  DetectorParams params;
  const auto data = separable_set(params);
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.epochs = 3;
  const auto a = train(params, data, data, tc);
  const auto b = train(params, data, data, tc);
  a.params.weights.for_each([&](std::string_view name, std::span<const double> va) {
    b.params.weights.for_each([&](std::string_view other, std::span<const double> vb) {
      if (name == other) EXPECT_TRUE(std::equal(va.begin(), va.end(), vb.begin())) << name;
    });
  });
  try {
    train(params, {}, data, tc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
  }
}

TEST(Embeddings, PartialCoverageAndRoundTrip) {
  auto toy = make_toy_problem(1, 0.0);
  TempDir dir("emb");
  const Matrix before = toy.params.weights.node_embeddings;
  {
    std::ofstream f(dir / "e.txt");
    f << "2 4\nENTITY/Ada_Lovelace 1 2 3 4\nStuttgart 5 6 7 8\n";
  }
  EXPECT_EQ(load_pretrained_embeddings(toy.params, dir / "e.txt"), 2u);
  const int ada = toy.params.nodes.lookup(NodeKind::Entity, "Ada Lovelace");
  EXPECT_EQ(toy.params.weights.node_embeddings(ada, 3), 4.0);
  std::size_t changed = 0;
  for (Eigen::Index r = 0; r < before.rows(); ++r) changed += before.row(r) != toy.params.weights.node_embeddings.row(r);
  EXPECT_EQ(changed, 2u);

  {
    std::ofstream f(dir / "empty.txt");
    f << "0 4\n";
  }
  const Matrix now = toy.params.weights.node_embeddings;
  EXPECT_EQ(load_pretrained_embeddings(toy.params, dir / "empty.txt"), 0u);
  EXPECT_EQ(toy.params.weights.node_embeddings, now);

  save_embeddings(toy.params, dir / "dump.txt");
  auto other = make_toy_problem(99, 0.0);
  load_pretrained_embeddings(other.params, dir / "dump.txt");
  EXPECT_EQ(other.params.weights.node_embeddings, toy.params.weights.node_embeddings);
}

TEST(Embeddings, DimensionMismatch) {
  auto toy = make_toy_problem(1, 0.0);
  TempDir dir("emb");
  {
    std::ofstream f(dir / "e.txt");
    f << "1 100\n";
  }
  try {
    load_pretrained_embeddings(toy.params, dir / "e.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto toy = make_toy_problem(4, 0.2);
  TempDir dir("ck");
  TrainConfig tc;
  tc.seed = 1234;
  tc.learning_rate = 3e-5;
  save_checkpoint(toy.params, tc, dir / "ck.json");
  const auto ck = load_checkpoint(dir / "ck.json");
  EXPECT_EQ(ck.train_config.seed, 1234u);
  EXPECT_EQ(ck.train_config.learning_rate, 3e-5);
  EXPECT_EQ(ck.params.nodes.rows, toy.params.nodes.rows);
  EXPECT_EQ(ck.params.tokens.ids, toy.params.tokens.ids);
  EXPECT_EQ(ck.params.config.dropout, 0.2);
  std::vector<std::vector<double>> a, b;
  toy.params.weights.for_each([&](std::string_view, std::span<const double> v) { a.emplace_back(v.begin(), v.end()); });
  ck.params.weights.for_each([&](std::string_view, std::span<const double> v) { b.emplace_back(v.begin(), v.end()); });
  EXPECT_EQ(a, b);
}
