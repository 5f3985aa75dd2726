#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "protosure/segmentation.hpp"
#include "protosure/training.hpp"

namespace fs = std::filesystem;

namespace protosure::testkit {

TempDir::TempDir() {
  static std::uint64_t counter = 0;
  Rng rng(static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()) + ++counter);
  path_ = fs::temp_directory_path() / ("protosure-test-" + std::to_string(rng.next_u64()));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = rng.uniform(-scale, scale);
  return m;
}

std::vector<double> random_vector(std::size_t n, Rng& rng, double scale) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

DocumentInput random_input(const std::string& id, std::size_t sentences, std::size_t max_tokens, std::size_t dim,
                           std::size_t num_classes, Rng& rng, bool with_attributions) {
  DocumentInput doc;
  doc.doc_id = id;
  doc.label = rng.below(num_classes);
  for (std::size_t i = 0; i < sentences; ++i) {
    const std::size_t l = 1 + rng.below(max_tokens);
    SentenceInput s{random_matrix(l, dim, rng), {}};
    if (with_attributions) s.attributions = random_vector(l, rng);
    doc.sentences.push_back(std::move(s));
    doc.sentence_texts.push_back(id + " sentence " + std::to_string(i) + ".");
  }
  return doc;
}

SurrogateModel random_model(std::size_t dim, std::size_t num_prototypes, std::size_t num_classes, Rng& rng) {
  SurrogateModel m;
  m.attention.wq = random_matrix(dim, dim, rng, 0.8);
  m.attention.wk = random_matrix(dim, dim, rng, 0.8);
  m.attention.wv = random_matrix(dim, dim, rng, 0.8);
  m.prototypes.vectors = random_matrix(num_prototypes, dim, rng);
  m.head.weights = random_matrix(num_classes, num_prototypes, rng);
  m.config.num_prototypes = num_prototypes;
  return m;
}

namespace {

double loss_at(std::span<const DocumentInput> batch, const SurrogateModel& model, const TrainConfig& config) {
  return total_loss(batch, model, config).loss.total;
}

void check_block(std::span<const DocumentInput> batch, SurrogateModel& model, const TrainConfig& config,
                 Matrix& param, const Matrix& analytic, double step, GradientCheck& out) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param.values()[i];
    param.values()[i] = saved + step;
    const double up = loss_at(batch, model, config);
    param.values()[i] = saved - step;
    const double down = loss_at(batch, model, config);
    param.values()[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic.values()[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    out.max_relative_error = std::max(out.max_relative_error, std::abs(a - numeric) / denom);
    ++out.entries;
  }
}

}  // namespace

GradientCheck check_gradients(std::span<const DocumentInput> batch, const SurrogateModel& model,
                              const TrainConfig& config, double step) {
  const auto analytic = total_loss(batch, model, config).grads;
  SurrogateModel m = model;
  GradientCheck out;
  check_block(batch, m, config, m.attention.wq, analytic.attention.wq, step, out);
  check_block(batch, m, config, m.attention.wk, analytic.attention.wk, step, out);
  check_block(batch, m, config, m.attention.wv, analytic.attention.wv, step, out);
  check_block(batch, m, config, m.head.weights, analytic.head, step, out);
  if (config.update_prototypes) check_block(batch, m, config, m.prototypes.vectors, analytic.prototypes, step, out);
  return out;
}

double brute_cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

double brute_proto_loss(const Matrix& h, const Matrix& p) {
  double total = 0.0;
  for (std::size_t k = 0; k < p.rows(); ++k) {
    double best = -2.0;
    for (std::size_t i = 0; i < h.rows(); ++i) best = std::max(best, brute_cosine(h.row(i), p.row(k)));
    total += best;
  }
  return -total / static_cast<double>(p.rows());
}

double brute_diversity_loss(const Matrix& p, bool normalize) {
  const std::size_t k = p.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      double d = 0.0;
      for (std::size_t c = 0; c < p.cols(); ++c) d += p(i, c) * p(j, c);
      if (normalize) d = brute_cosine(p.row(i), p.row(j));
      total += std::abs(d);
    }
  }
  return total / static_cast<double>(k * (k - 1));
}

namespace {

std::vector<double> counting_ranks(std::span<const double> v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) less += 1.0;
      else if (j != i && v[j] == v[i]) equal += 1.0;
    }
    r[i] = 1.0 + less + equal / 2.0;
  }
  return r;
}

}  // namespace

double oracle_spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = counting_ranks(a);
  const auto rb = counting_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

ToyLinearPredictor::ToyLinearPredictor(std::vector<std::vector<double>> sentence_logits)
    : logits_(std::move(sentence_logits)), classes_(logits_.front().size()) {}

std::vector<double> ToyLinearPredictor::probs_for(const std::vector<bool>& kept) const {
  std::vector<double> z(classes_, 0.0);
  for (std::size_t i = 0; i < logits_.size(); ++i) {
    if (!kept[i]) continue;
    for (std::size_t c = 0; c < classes_; ++c) z[c] += logits_[i][c];
  }
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (auto& v : z) s += (v = std::exp(v - m));
  for (auto& v : z) v /= s;
  return z;
}

std::vector<std::vector<double>> ToyLinearPredictor::predict(std::span<const std::string> texts) const {
  std::vector<std::vector<double>> out;
  for (const auto& t : texts) {
    std::vector<bool> kept(logits_.size(), false);
    std::istringstream in(t);
    std::string word;
    while (in >> word) kept.at(std::stoul(word.substr(1, word.size() - 2))) = true;
    out.push_back(probs_for(kept));
  }
  return out;
}

Document toy_document(const std::string& id, std::size_t sentences) {
  std::string text;
  for (std::size_t i = 0; i < sentences; ++i) text += (i ? " w" : "w") + std::to_string(i) + ".";
  return make_document(id, text);
}

OracleMetrics oracle_metrics(const ToyLinearPredictor& p, std::span<const double> scores) {
  const std::size_t n = p.num_sentences();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // Selection sort: highest score first, lower index on ties.
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t best = a;
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto ob = order[b], obest = order[best];
      if (scores[ob] > scores[obest] || (scores[ob] == scores[obest] && ob < obest)) best = b;
    }
    std::swap(order[a], order[best]);
  }

  const std::vector<bool> all(n, true);
  const auto full = p.probs_for(all);
  std::size_t cls = 0;
  for (std::size_t c = 1; c < full.size(); ++c) {
    if (full[c] > full[cls]) cls = c;
  }
  auto arg = [](const std::vector<double>& v) {
    std::size_t b = 0;
    for (std::size_t c = 1; c < v.size(); ++c) {
      if (v[c] > v[b]) b = c;
    }
    return b;
  };

  OracleMetrics m;
  std::vector<double> removal_conf(n + 1);
  bool found_flip = false;
  for (std::size_t l = 0; l <= n; ++l) {
    std::vector<bool> kept_rem(n, true), kept_keep(n, false);
    for (std::size_t t = 0; t < l; ++t) {
      kept_rem[order[t]] = false;
      kept_keep[order[t]] = true;
    }
    const auto pr = p.probs_for(kept_rem);
    const auto pk = p.probs_for(kept_keep);
    removal_conf[l] = pr[cls];
    m.comp_drop += full[cls] - pr[cls];
    m.suff_drop += full[cls] - pk[cls];
    if (l >= 1 && !found_flip && arg(pr) != cls) {
      found_flip = true;
      m.dff = static_cast<double>(l) / static_cast<double>(n);
    }
    if (l == 1) m.dfs = arg(pr) != cls ? 1.0 : 0.0;
  }
  m.comp_drop /= static_cast<double>(n + 1);
  m.suff_drop /= static_cast<double>(n + 1);
  if (!found_flip) m.dff = 1.0;
  m.flipped_any = found_flip;

  std::vector<double> deltas(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<bool> kept(n, true);
    kept[i] = false;
    deltas[i] = full[cls] - p.probs_for(kept)[cls];
  }
  m.del = oracle_spearman(deltas, scores);
  std::vector<double> v(n + 1), steps(n + 1);
  for (std::size_t l = 0; l <= n; ++l) {
    v[l] = removal_conf[n - l];
    steps[l] = static_cast<double>(l);
  }
  m.ins = oracle_spearman(v, steps);
  return m;
}

HotelReviewFixture hotel_review_fixture() {
  HotelReviewFixture f;
  const std::size_t d = 4;
  f.model.attention = AttentionParams::zeros(d);
  for (std::size_t i = 0; i < d; ++i) f.model.attention.wv(i, i) = 1.0;
  f.model.prototypes.vectors = Matrix(4, d);
  for (std::size_t k = 0; k < 4; ++k) f.model.prototypes.vectors(k, k) = 1.0;
  f.model.prototypes.associations = {
      {"train-1", 0, 1.0, "Spotless room, fresh sheets."},
      {"train-2", 0, 1.0, "The staff were wonderful."},
      {"train-3", 1, 1.0, "Breakfast had plenty of choice."},
      {"train-4", 2, 1.0, "Street noise all night."},
  };
  f.model.head.weights = Matrix(2, 4, std::vector<double>{0.95, 0.80, 0.60, 0.0, 0.0, 0.0, 0.0, 0.29444});
  f.model.config.num_prototypes = 4;
  f.model.config.use_attributions = false;

  const std::vector<std::string> sentences = {
      "The room was spotless and the bed was extremely comfortable.",
      "The front-desk staff went out of their way to help with late check-in.",
      "The breakfast buffet offered only a few cold pastries, but the coffee was excellent."};
  const std::vector<std::vector<double>> h = {
      {0.92, 0.0, 0.0, 0.3919}, {0.0, 0.88, 0.0, 0.4750}, {0.0, 0.0, 0.75, 0.6614}};
  f.document.doc_id = "hotel-review";
  f.document.label = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto tokens = tokenize(sentences[i]);
    Matrix e(tokens.size(), d);
    for (std::size_t r = 0; r < tokens.size(); ++r) std::copy(h[i].begin(), h[i].end(), e.row(r).begin());
    f.document.sentences.push_back({std::move(e), {}});
    f.document.sentence_texts.push_back(sentences[i]);
  }
  return f;
}

std::vector<DocumentInput> synthetic_inputs(const SyntheticTask& task) {
  std::vector<DocumentInput> out;
  for (std::size_t i = 0; i < task.documents.size(); ++i) {
    out.push_back(make_document_input(task.documents[i], task.bundles[i], &task.attributions[i]));
  }
  return out;
}

}  // namespace protosure::testkit
