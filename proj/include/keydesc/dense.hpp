#ifndef KEYDESC_DENSE_HPP
#define KEYDESC_DENSE_HPP

// Bi-encoder passage ranker. Texts become L2-normalized hashed bags of
// token unigrams and character trigrams; two linear projections map queries
// and references (passages) into a shared embedding space, scored by dot
// product. Trained with the in-batch-negatives cross-entropy loss
//
//   L = -sum_i log( exp(q_i . r_i) / sum_j exp(q_i . r_j) )
//
// using closed-form gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "keydesc/corpus.hpp"
#include "keydesc/errors.hpp"
#include "keydesc/hashing.hpp"
#include "keydesc/rankers.hpp"

namespace keydesc::dense {

struct FeatureConfig {
  std::size_t hash_dim = 4096;
  bool unigrams = true;
  bool char_trigrams = true;
};

/// Sorted (feature, weight) pairs with unit L2 norm (or empty).
using SparseFeatures = std::vector<std::pair<std::uint32_t, double>>;

inline SparseFeatures featurize(std::string_view text, const FeatureConfig& cfg) {
  std::map<std::uint32_t, double> bag;
  auto add = [&](std::string_view f, double w) { bag[static_cast<std::uint32_t>(fnv1a64(f) % cfg.hash_dim)] += w; };
  for (const auto& tok : tokenize(text)) {
    if (cfg.unigrams) add("w:" + tok, 1.0);
    if (cfg.char_trigrams) {
      const std::string padded = "<" + tok + ">";
      const auto cps = unicode::decode(padded);
      for (std::size_t i = 0; i + 3 <= cps.size(); ++i) add("c:" + padded.substr(cps[i].begin, cps[i + 2].end - cps[i].begin), 0.5);
    }
  }
  double norm = 0.0;
  for (const auto& [f, w] : bag) norm += w * w;
  SparseFeatures out;
  if (norm == 0.0) return out;
  norm = std::sqrt(norm);
  for (const auto& [f, w] : bag) out.emplace_back(f, w / norm);
  return out;
}

/// Row-major (rows x cols) matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct DenseRankerModel {
  FeatureConfig features;
  std::size_t embed_dim = 128;
  Matrix query_projection;    // hash_dim x embed_dim
  Matrix passage_projection;  // hash_dim x embed_dim

  /// Uniform(-scale, scale) initialization from a platform-stable RNG.
  static DenseRankerModel initialize(const FeatureConfig& features, std::size_t embed_dim, std::uint64_t seed, double scale = 0.1) {
    if (features.hash_dim == 0 || embed_dim == 0) throw ConfigError("dense model dimensions must be > 0");
    DenseRankerModel m{features, embed_dim, Matrix(features.hash_dim, embed_dim), Matrix(features.hash_dim, embed_dim)};
    Rng rng(seed);
    for (double& x : m.query_projection.data) x = rng.uniform(-scale, scale);
    for (double& x : m.passage_projection.data) x = rng.uniform(-scale, scale);
    return m;
  }
};

inline std::vector<double> project(const Matrix& w, const SparseFeatures& x) {
  std::vector<double> out(w.cols, 0.0);
  for (const auto& [f, v] : x)
    for (std::size_t c = 0; c < w.cols; ++c) out[c] += v * w(f, c);
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> encode_query(const DenseRankerModel& m, std::string_view text) {
  return project(m.query_projection, featurize(text, m.features));
}

inline std::vector<double> encode_passage(const DenseRankerModel& m, std::string_view text) {
  return project(m.passage_projection, featurize(text, m.features));
}

struct TrainingPair {
  SparseFeatures query;
  SparseFeatures reference;
};

struct LossAndGradient {
  double loss = 0.0;  // summed over the batch
  Matrix grad_query;
  Matrix grad_passage;
};

/// Row-wise softmax cross-entropy with the diagonal as targets, given the
/// score matrix S[i][j] = q_i . r_j. Returns the summed loss and dL/dS.
inline double in_batch_cross_entropy(const std::vector<std::vector<double>>& scores, std::vector<std::vector<double>>* grad) {
  const std::size_t b = scores.size();
  double loss = 0.0;
  if (grad) grad->assign(b, std::vector<double>(b, 0.0));
  for (std::size_t i = 0; i < b; ++i) {
    const double mx = *std::max_element(scores[i].begin(), scores[i].end());
    double z = 0.0;
    for (double s : scores[i]) z += std::exp(s - mx);
    const double log_z = mx + std::log(z);
    loss += log_z - scores[i][i];
    if (grad)
      for (std::size_t j = 0; j < b; ++j) (*grad)[i][j] = std::exp(scores[i][j] - log_z) - (i == j ? 1.0 : 0.0);
  }
  return loss;
}

/// dL/dq_i = sum_j G_ij r_j, dL/dr_j = sum_i G_ij q_i, then chained through
/// the linear projections: dL/dW_q = sum_i x_i (dL/dq_i)^T.
inline LossAndGradient contrastive_loss(const DenseRankerModel& m, const std::vector<TrainingPair>& batch, bool with_gradient = true) {
  const std::size_t b = batch.size();
  std::vector<std::vector<double>> q(b), r(b);
  for (std::size_t i = 0; i < b; ++i) {
    q[i] = project(m.query_projection, batch[i].query);
    r[i] = project(m.passage_projection, batch[i].reference);
  }
  std::vector<std::vector<double>> s(b, std::vector<double>(b));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) s[i][j] = dot(q[i], r[j]);

  LossAndGradient out;
  std::vector<std::vector<double>> g;
  out.loss = in_batch_cross_entropy(s, with_gradient ? &g : nullptr);
  if (!with_gradient) return out;

  const std::size_t d = m.embed_dim;
  out.grad_query = Matrix(m.query_projection.rows, d);
  out.grad_passage = Matrix(m.passage_projection.rows, d);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> dq(d, 0.0), dr(d, 0.0);
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t c = 0; c < d; ++c) {
        dq[c] += g[i][j] * r[j][c];
        dr[c] += g[j][i] * q[j][c];
      }
    for (const auto& [f, v] : batch[i].query)
      for (std::size_t c = 0; c < d; ++c) out.grad_query(f, c) += v * dq[c];
    for (const auto& [f, v] : batch[i].reference)
      for (std::size_t c = 0; c < d; ++c) out.grad_passage(f, c) += v * dr[c];
  }
  return out;
}

struct TrainOptions {
  std::size_t batch_size = 32;
  double learning_rate = 1.0;
  std::size_t epochs = 30;
  std::uint64_t seed = 13;
  std::size_t embed_dim = 128;
  FeatureConfig features;
  double init_scale = 0.1;
};

struct TrainResult {
  DenseRankerModel model;
  /// Mean per-pair loss of each epoch.
  std::vector<double> epoch_loss;
};

/// Mini-batch gradient descent on the in-batch loss (step = lr * grad / B).
/// Batches are reshuffled every epoch; a trailing batch of one pair is
/// merged into the previous batch.
inline TrainResult dense_train(const std::vector<std::pair<Query, std::string>>& pairs, const TrainOptions& opts) {
  if (opts.batch_size < 2) throw ConfigError("dense_train: batch_size must be >= 2 (in-batch negatives)");
  if (pairs.size() < 2) throw PreconditionError("dense_train: need at least 2 pairs");
  if (!(opts.learning_rate > 0.0)) throw ConfigError("dense_train: learning rate must be > 0");

  TrainResult result{DenseRankerModel::initialize(opts.features, opts.embed_dim, opts.seed, opts.init_scale), {}};
  auto& model = result.model;
  std::vector<TrainingPair> data;
  for (const auto& [q, ref] : pairs) data.push_back({featurize(q.text(), opts.features), featurize(ref, opts.features)});

  Rng rng(opts.seed ^ 0x5bd1e995ULL);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += opts.batch_size)
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + opts.batch_size)));
    if (batches.size() > 1 && batches.back().size() == 1) {
      batches[batches.size() - 2].push_back(batches.back().front());
      batches.pop_back();
    }
    double epoch_loss = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      std::vector<TrainingPair> batch;
      for (auto i : batches[bi]) batch.push_back(data[i]);
      auto lg = contrastive_loss(model, batch);
      if (!std::isfinite(lg.loss)) {
        std::ostringstream msg;
        msg << "dense_train: non-finite loss at epoch " << epoch << ", batch " << bi << " (size " << batch.size()
            << ", lr " << opts.learning_rate << ")";
        throw Error(msg.str());
      }
      epoch_loss += lg.loss;
      const double step = opts.learning_rate / static_cast<double>(batch.size());
      for (std::size_t i = 0; i < model.query_projection.data.size(); ++i) {
        model.query_projection.data[i] -= step * lg.grad_query.data[i];
        model.passage_projection.data[i] -= step * lg.grad_passage.data[i];
      }
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return result;
}

/// Scores passages by dot product of the passage encoding with the query encoding.
inline RankedPassages dense_rank(const DenseRankerModel& m, const Instance& inst, std::size_t k) {
  const auto q = encode_query(m, Query::of(inst).text());
  std::vector<double> scores;
  for (const auto& p : inst.passages) scores.push_back(dot(q, encode_passage(m, p)));
  return top_k(scores, k);
}

inline nlohmann::json to_json(const DenseRankerModel& m) {
  return {{"hash_dim", m.features.hash_dim},
          {"unigrams", m.features.unigrams},
          {"char_trigrams", m.features.char_trigrams},
          {"embed_dim", m.embed_dim},
          {"query_projection", m.query_projection.data},
          {"passage_projection", m.passage_projection.data}};
}

inline DenseRankerModel model_from_json(const nlohmann::json& j) {
  auto need = [&](const char* f) -> const nlohmann::json& {
    if (!j.contains(f)) throw SchemaError(1, f);
    return j.at(f);
  };
  DenseRankerModel m;
  try {
    m.features.hash_dim = need("hash_dim").get<std::size_t>();
    m.features.unigrams = need("unigrams").get<bool>();
    m.features.char_trigrams = need("char_trigrams").get<bool>();
    m.embed_dim = need("embed_dim").get<std::size_t>();
    m.query_projection = Matrix(m.features.hash_dim, m.embed_dim);
    m.passage_projection = Matrix(m.features.hash_dim, m.embed_dim);
    m.query_projection.data = need("query_projection").get<std::vector<double>>();
    m.passage_projection.data = need("passage_projection").get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(1, "dense model");
  }
  if (m.query_projection.data.size() != m.features.hash_dim * m.embed_dim) throw SchemaError(1, "query_projection");
  if (m.passage_projection.data.size() != m.features.hash_dim * m.embed_dim) throw SchemaError(1, "passage_projection");
  return m;
}

}  // namespace keydesc::dense

#endif  // KEYDESC_DENSE_HPP
