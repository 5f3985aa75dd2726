#include "protosure/prototype_layer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

#include "protosure/errors.hpp"
#include "protosure/kernels.hpp"
#include "protosure/rng.hpp"

namespace protosure {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum;
}

std::size_t count_distinct(const Matrix& points) {
  std::set<std::vector<double>> distinct;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const auto row = points.row(i);
    distinct.emplace(row.begin(), row.end());
  }
  return distinct.size();
}

// Index drawn with probability proportional to weights; falls back to the
// largest weight when rounding leaves nothing.
std::size_t weighted_pick(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double target = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    if (target < weights[i]) return i;
    target -= weights[i];
  }
  return argmax(weights);
}

}  // namespace

void PrototypeSet::validate() const {
  if (vectors.rows() < 2) throw Error(ErrorCode::ShapeMismatch, "at least two prototypes are required");
  for (std::size_t k = 0; k < vectors.rows(); ++k) {
    if (!all_finite(vectors.row(k))) throw Error(ErrorCode::CorruptPayload, "prototype " + std::to_string(k) + " is not finite");
    if (norm(vectors.row(k)) <= 1e-8) throw Error(ErrorCode::ZeroVector, "prototype " + std::to_string(k) + " has zero norm");
  }
}

KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw Error(ErrorCode::TooFewPoints, "k must be positive");
  if (count_distinct(points) < k) {
    throw Error(ErrorCode::TooFewPoints, "need at least " + std::to_string(k) + " distinct points, got " +
                                             std::to_string(count_distinct(points)));
  }
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  Rng rng(seed);

  KMeansResult result;
  result.centers = Matrix(k, d);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) pick = weighted_pick(nearest, rng);
    std::copy_n(points.row(pick).begin(), d, result.centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points.row(i), result.centers.row(c)));
    }
  }

  result.assignment.assign(n, k);
  for (std::size_t iter = 0; iter < kKMeansMaxIterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = squared_distance(points.row(i), result.centers.row(c));
        if (dist < best_dist) {
          best_dist = dist;
          best = c;
        }
      }
      if (result.assignment[i] != best) {
        result.assignment[i] = best;
        changed = true;
      }
    }
    if (!changed) {
      result.converged = true;
      break;
    }

    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      axpy(1.0, points.row(i), sums.row(result.assignment[i]));
      ++counts[result.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      kernels::scale(1.0 / static_cast<double>(counts[c]), sums.row(c).data(), d);
      std::copy_n(sums.row(c).begin(), d, result.centers.row(c).begin());
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_dist = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dist = squared_distance(points.row(i), result.centers.row(result.assignment[i]));
        if (counts[result.assignment[i]] > 1 && dist > far_dist) {
          far_dist = dist;
          far = i;
        }
      }
      --counts[result.assignment[far]];
      result.assignment[far] = c;
      counts[c] = 1;
      std::copy_n(points.row(far).begin(), d, result.centers.row(c).begin());
    }

    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      inertia += squared_distance(points.row(i), result.centers.row(result.assignment[i]));
    }
    result.inertia_history.push_back(inertia);
    result.iterations = iter + 1;
  }
  return result;
}

PrototypeSet kmeans_init(const Matrix& points, std::size_t k, std::uint64_t seed) {
  PrototypeSet set;
  set.vectors = kmeans(points, k, seed).centers;
  round_to_float(set.vectors.values());
  return set;
}

std::vector<PrototypeAssociation> associate_nearest(const Matrix& prototypes,
                                                    std::span<const CorpusSentence> corpus) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyDataset, "no sentences to associate prototypes with");
  std::vector<PrototypeAssociation> out;
  out.reserve(prototypes.rows());
  for (std::size_t k = 0; k < prototypes.rows(); ++k) {
    const CorpusSentence* best = nullptr;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (const CorpusSentence& s : corpus) {
      const double sim = cosine(prototypes.row(k), s.embedding);
      const bool better =
          best == nullptr || sim > best_sim ||
          (sim == best_sim && std::tie(s.doc_id, s.sentence_index) < std::tie(best->doc_id, best->sentence_index));
      if (better) {
        best = &s;
        best_sim = sim;
      }
    }
    out.push_back({best->doc_id, best->sentence_index, best_sim, best->text});
  }
  return out;
}

std::vector<double> activations(std::span<const double> h, const Matrix& prototypes) {
  const double hn = norm(h);
  if (hn <= 1e-12) throw Error(ErrorCode::ZeroVector, "sentence embedding has zero norm");
  if (h.size() != prototypes.cols()) throw Error(ErrorCode::ShapeMismatch, "embedding width differs from prototypes");
  std::vector<double> a(prototypes.rows());
  for (std::size_t k = 0; k < prototypes.rows(); ++k) {
    const auto p = prototypes.row(k);
    const double pn = norm(p);
    a[k] = pn == 0.0 ? 0.0 : dot(h, p) / (hn * pn);
  }
  return a;
}

PredictionBreakdown predict_document(const Matrix& embeddings, const Matrix& prototypes, const LinearHead& head) {
  if (embeddings.rows() == 0) throw Error(ErrorCode::EmptyInput, "document has no sentences");
  if (head.weights.cols() != prototypes.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "head width differs from prototype count");
  }
  const std::size_t m = embeddings.rows();
  const std::size_t k = prototypes.rows();
  const std::size_t c = head.num_classes();
  PredictionBreakdown out;
  out.activations = Matrix(m, k);
  out.sentence_logits = Matrix(m, c);
  out.logits.assign(c, 0.0);
  out.head = head.weights;
  for (std::size_t i = 0; i < m; ++i) {
    const auto a = activations(embeddings.row(i), prototypes);
    std::copy(a.begin(), a.end(), out.activations.row(i).begin());
    for (std::size_t cls = 0; cls < c; ++cls) {
      out.sentence_logits(i, cls) = kernels::dot(head.weights.row(cls).data(), a.data(), k);
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t cls = 0; cls < c; ++cls) out.logits[cls] += out.sentence_logits(i, cls);
  }
  out.predicted_class = argmax(out.logits);
  return out;
}

}  // namespace protosure
