#include "protosure/encoder_adapter.hpp"

#include <cmath>

#include "protosure/errors.hpp"
#include "protosure/kernels.hpp"

namespace protosure {

namespace {

void check_shapes(const Matrix& e, std::span<const double> rhat, const AttentionParams& params) {
  const std::size_t d = params.dim();
  if (e.cols() != d || params.wk.rows() != d || params.wv.rows() != d || params.wq.cols() != d ||
      params.wk.cols() != d || params.wv.cols() != d) {
    throw Error(ErrorCode::ShapeMismatch, "embedding width " + std::to_string(e.cols()) +
                                              " does not match attention dimension " + std::to_string(d));
  }
  if (e.rows() == 0) throw Error(ErrorCode::ShapeMismatch, "sentence has no tokens");
  if (!rhat.empty() && rhat.size() != e.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "attribution length " + std::to_string(rhat.size()) +
                                              " differs from token count " + std::to_string(e.rows()));
  }
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  round_to_float(m.values());
  return m;
}

// rowsoftmax(q k^T / sqrt(d) + 1 rhat^T)
Matrix attention_weights(const Matrix& q, const Matrix& k, std::span<const double> rhat) {
  const std::size_t len = q.rows();
  Matrix scores = matmul_a_bt(q, k);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (std::size_t r = 0; r < len; ++r) {
    auto row = scores.row(r);
    kernels::scale(inv_sqrt_d, row.data(), len);
    if (!rhat.empty()) {
      for (std::size_t j = 0; j < len; ++j) row[j] += rhat[j];
    }
    softmax_inplace(row);
  }
  return scores;
}

struct Forward {
  Matrix q, k, v;
  Matrix attention;
  Matrix context;
  std::vector<double> weights;
  std::vector<double> embedding;
};

Forward forward(const Matrix& e, std::span<const double> rhat, const AttentionParams& params) {
  check_shapes(e, rhat, params);
  Forward f;
  f.q = matmul(e, params.wq);
  f.k = matmul(e, params.wk);
  f.v = matmul(e, params.wv);

  f.attention = attention_weights(f.q, f.k, rhat);
  f.context = matmul(f.attention, f.v);
  f.weights = token_importance(f.attention);
  f.embedding = pool(f.weights, f.context);
  return f;
}

}  // namespace

AttentionParams AttentionParams::init(std::size_t dim, Rng& rng) {
  const double bound = std::sqrt(6.0 / (2.0 * static_cast<double>(dim)));
  AttentionParams p;
  p.wq = uniform_matrix(dim, dim, bound, rng);
  p.wk = uniform_matrix(dim, dim, bound, rng);
  p.wv = uniform_matrix(dim, dim, bound, rng);
  return p;
}

AttentionParams AttentionParams::zeros(std::size_t dim) {
  return {Matrix(dim, dim), Matrix(dim, dim), Matrix(dim, dim)};
}

AttentionGrads AttentionGrads::zeros(std::size_t dim) { return {Matrix(dim, dim), Matrix(dim, dim), Matrix(dim, dim)}; }

void AttentionGrads::add(const AttentionGrads& other) {
  axpy(1.0, other.wq.values(), wq.values());
  axpy(1.0, other.wk.values(), wk.values());
  axpy(1.0, other.wv.values(), wv.values());
}

std::vector<double> normalize_attributions(std::span<const double> scores, double eps) {
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    out[j] = scores[j] > 0.0 ? scores[j] : 0.0;
    total += out[j];
  }
  for (double& v : out) v /= (total + eps);
  return out;
}

std::vector<double> normalize_attributions(std::span<const float> scores, double eps) {
  std::vector<double> wide(scores.begin(), scores.end());
  return normalize_attributions(std::span<const double>(wide), eps);
}

AttendResult attend(const Matrix& embeddings, std::span<const double> rhat, const AttentionParams& params) {
  check_shapes(embeddings, rhat, params);
  Matrix attention = attention_weights(matmul(embeddings, params.wq), matmul(embeddings, params.wk), rhat);
  Matrix context = matmul(attention, matmul(embeddings, params.wv));
  return {std::move(attention), std::move(context)};
}

std::vector<double> token_importance(const Matrix& attention) {
  const std::size_t len = attention.rows();
  std::vector<double> means(attention.cols(), 0.0);
  for (std::size_t k = 0; k < len; ++k) kernels::axpy(1.0, attention.row(k).data(), means.data(), means.size());
  for (double& m : means) m /= static_cast<double>(len);
  softmax_inplace(means);
  return means;
}

std::vector<double> pool(std::span<const double> weights, const Matrix& context) {
  if (weights.size() != context.rows()) throw Error(ErrorCode::ShapeMismatch, "pool: weight count differs from rows");
  std::vector<double> h(context.cols(), 0.0);
  for (std::size_t j = 0; j < weights.size(); ++j) kernels::axpy(weights[j], context.row(j).data(), h.data(), h.size());
  return h;
}

SentenceEncoding encode_sentence(const Matrix& embeddings, std::span<const double> rhat,
                                 const AttentionParams& params) {
  Forward f = forward(embeddings, rhat, params);
  return {std::move(f.attention), std::move(f.context), std::move(f.weights), std::move(f.embedding)};
}

void backprop_sentence(const Matrix& e, std::span<const double> rhat, const AttentionParams& params,
                       std::span<const double> upstream, AttentionGrads& grads) {
  const Forward f = forward(e, rhat, params);
  const std::size_t len = e.rows();
  const std::size_t d = params.dim();
  if (upstream.size() != d) throw Error(ErrorCode::ShapeMismatch, "upstream gradient has wrong length");

  // h = sum_j alpha_j c_j
  std::vector<double> g_alpha(len);
  Matrix g_context(len, d);
  for (std::size_t j = 0; j < len; ++j) {
    g_alpha[j] = kernels::dot(f.context.row(j).data(), upstream.data(), d);
    kernels::axpy(f.weights[j], upstream.data(), g_context.row(j).data(), d);
  }

  // alpha = softmax(m), m_j = mean_k A_kj
  double weighted = 0.0;
  for (std::size_t j = 0; j < len; ++j) weighted += f.weights[j] * g_alpha[j];
  std::vector<double> g_means(len);
  for (std::size_t j = 0; j < len; ++j) g_means[j] = f.weights[j] * (g_alpha[j] - weighted);

  // c = A V
  Matrix g_attention = matmul_a_bt(g_context, f.v);
  const double inv_len = 1.0 / static_cast<double>(len);
  for (std::size_t k = 0; k < len; ++k) {
    kernels::axpy(inv_len, g_means.data(), g_attention.row(k).data(), len);
  }
  const Matrix g_v = matmul_at_b(f.attention, g_context);

  // row softmax
  Matrix g_scores(len, len);
  for (std::size_t k = 0; k < len; ++k) {
    const auto a = f.attention.row(k);
    const auto ga = g_attention.row(k);
    const double inner = kernels::dot(a.data(), ga.data(), len);
    auto gs = g_scores.row(k);
    for (std::size_t j = 0; j < len; ++j) gs[j] = a[j] * (ga[j] - inner);
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  kernels::scale(inv_sqrt_d, g_scores.data(), g_scores.size());

  // S = Q K^T
  const Matrix g_q = matmul(g_scores, f.k);
  const Matrix g_k = matmul_at_b(g_scores, f.q);

  const Matrix g_wq = matmul_at_b(e, g_q);
  const Matrix g_wk = matmul_at_b(e, g_k);
  const Matrix g_wv = matmul_at_b(e, g_v);
  if (!all_finite(g_wq.values()) || !all_finite(g_wk.values()) || !all_finite(g_wv.values())) {
    throw Error(ErrorCode::NonFiniteGradient, "attention parameter gradient is not finite");
  }
  axpy(1.0, g_wq.values(), grads.wq.values());
  axpy(1.0, g_wk.values(), grads.wk.values());
  axpy(1.0, g_wv.values(), grads.wv.values());
}

EncodeWithGrads encode_sentence_with_grads(const Matrix& embeddings, std::span<const double> rhat,
                                           const AttentionParams& params, std::span<const double> upstream) {
  if (!all_finite(upstream)) throw Error(ErrorCode::NonFiniteGradient, "upstream gradient is not finite");
  EncodeWithGrads out{encode_sentence(embeddings, rhat, params).embedding, AttentionGrads::zeros(params.dim())};
  backprop_sentence(embeddings, rhat, params, upstream, out.grads);
  return out;
}

}  // namespace protosure
