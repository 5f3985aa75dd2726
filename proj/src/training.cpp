#include "protosure/training.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "protosure/errors.hpp"
#include "protosure/kernels.hpp"
#include "protosure/rng.hpp"

namespace protosure {

using nlohmann::json;

namespace {

// Accumulates the gradient of cos(h, p) into g_h and g_p, scaled by `scale`.
void cosine_backward(std::span<const double> h, std::span<const double> p, double scale, std::span<double> g_h,
                     std::span<double> g_p) {
  const double hn = norm(h);
  const double pn = norm(p);
  const double cos = dot(h, p) / (hn * pn);
  if (!g_h.empty()) {
    axpy(scale / (hn * pn), p, g_h);
    axpy(-scale * cos / (hn * hn), h, g_h);
  }
  if (!g_p.empty()) {
    axpy(scale / (hn * pn), h, g_p);
    axpy(-scale * cos / (pn * pn), p, g_p);
  }
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void diversity_backward(const Matrix& p, bool normalize, double scale, Matrix& grad) {
  const std::size_t k = p.rows();
  const double coeff = scale * 2.0 / static_cast<double>(k * (k - 1));
  std::vector<double> norms(k);
  for (std::size_t i = 0; i < k; ++i) norms[i] = norm(p.row(i));
  for (std::size_t i = 0; i < k; ++i) {
    auto g = grad.row(i);
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      if (!normalize) {
        axpy(coeff * sign(dot(p.row(i), p.row(j))), p.row(j), g);
      } else {
        const double s = dot(p.row(i), p.row(j)) / (norms[i] * norms[j]);
        const double sg = sign(s);
        if (sg == 0.0) continue;
        axpy(coeff * sg / (norms[i] * norms[j]), p.row(j), g);
        axpy(-coeff * sg * s / (norms[i] * norms[i]), p.row(i), g);
      }
    }
  }
}

std::vector<double> rhat_for(const SentenceInput& s, const TrainConfig& config) {
  if (!config.use_attributions || s.attributions.empty()) return {};
  return normalize_attributions(std::span<const double>(s.attributions), config.eps);
}

struct DocWork {
  Matrix h;               // M x d
  Matrix g_h;             // M x d
  Matrix g_head;          // C x K
  Matrix g_proto;         // K x d
  double ce = 0.0;
  AttentionGrads g_attn;
};

class AdamW {
 public:
  AdamW(std::size_t size, const AdamWSettings& s) : settings_(s), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::span<double> params, std::span<const double> grads, double lr, std::size_t t) {
    const double b1t = 1.0 - std::pow(settings_.beta1, static_cast<double>(t));
    const double b2t = 1.0 - std::pow(settings_.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = settings_.beta1 * m_[i] + (1.0 - settings_.beta1) * grads[i];
      v_[i] = settings_.beta2 * v_[i] + (1.0 - settings_.beta2) * grads[i] * grads[i];
      const double mhat = m_[i] / b1t;
      const double vhat = v_[i] / b2t;
      params[i] -= lr * (mhat / (std::sqrt(vhat) + settings_.eps) + settings_.weight_decay * params[i]);
    }
    round_to_float(params);
  }

 private:
  AdamWSettings settings_;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(threads, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double ce_loss(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label) + " with " +
                                                std::to_string(logits.size()) + " classes");
  }
  // log1p over the non-max terms keeps confident predictions accurate
  const std::size_t top = argmax(logits);
  const double m = logits[top];
  double rest = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    if (c != top) rest += std::exp(logits[c] - m);
  }
  return std::log1p(rest) - (logits[label] - m);
}

double proto_loss(const Matrix& embeddings, const Matrix& prototypes) {
  if (embeddings.rows() == 0) throw Error(ErrorCode::EmptyInput, "proto_loss needs at least one sentence");
  double total = 0.0;
  for (std::size_t k = 0; k < prototypes.rows(); ++k) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < embeddings.rows(); ++i) best = std::max(best, cosine(embeddings.row(i), prototypes.row(k)));
    total += best;
  }
  return -total / static_cast<double>(prototypes.rows());
}

double diversity_loss(const Matrix& prototypes, bool normalize) {
  const std::size_t k = prototypes.rows();
  if (k < 2) throw Error(ErrorCode::ShapeMismatch, "diversity_loss needs at least two prototypes");
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      const double overlap = normalize ? cosine(prototypes.row(i), prototypes.row(j))
                                       : dot(prototypes.row(i), prototypes.row(j));
      total += std::abs(overlap);
    }
  }
  return total / static_cast<double>(k * (k - 1));
}

LossAndGradients total_loss(std::span<const DocumentInput> batch, const SurrogateModel& model,
                            const TrainConfig& config) {
  if (batch.empty()) throw Error(ErrorCode::EmptyDataset, "empty batch");
  const std::size_t d = model.dim();
  const std::size_t k = model.num_prototypes();
  const std::size_t c = model.num_classes();
  const Matrix& protos = model.prototypes.vectors;
  const Matrix& head = model.head.weights;
  const bool grad_protos = config.update_prototypes;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  for (const auto& doc : batch) {
    if (doc.sentences.empty()) throw Error(ErrorCode::MissingBundle, "document '" + doc.doc_id + "' has no bundle data");
    if (!doc.label) throw Error(ErrorCode::MissingBundle, "document '" + doc.doc_id + "' has no target label");
  }

  std::vector<DocWork> work(batch.size());
  parallel_for(batch.size(), config.threads, [&](std::size_t b) {
    const DocumentInput& doc = batch[b];
    DocWork& w = work[b];
    const std::size_t m = doc.sentences.size();
    w.h = Matrix(m, d);
    for (std::size_t i = 0; i < m; ++i) {
      const auto enc = encode_sentence(doc.sentences[i].embeddings, rhat_for(doc.sentences[i], config), model.attention);
      std::copy(enc.embedding.begin(), enc.embedding.end(), w.h.row(i).begin());
    }
    const PredictionBreakdown pred = predict_document(w.h, protos, model.head);
    w.ce = ce_loss(pred.logits, *doc.label);

    std::vector<double> g_logits = softmax(pred.logits);
    g_logits[*doc.label] -= 1.0;
    for (double& g : g_logits) g *= inv_batch;

    w.g_h = Matrix(m, d);
    w.g_head = Matrix(c, k);
    w.g_proto = Matrix(grad_protos ? k : 0, grad_protos ? d : 0);
    std::vector<double> g_act(k);
    for (std::size_t i = 0; i < m; ++i) {
      const auto a = pred.activations.row(i);
      std::fill(g_act.begin(), g_act.end(), 0.0);
      for (std::size_t cls = 0; cls < c; ++cls) {
        axpy(g_logits[cls], a, w.g_head.row(cls));
        axpy(g_logits[cls], head.row(cls), g_act);
      }
      for (std::size_t p = 0; p < k; ++p) {
        if (g_act[p] == 0.0) continue;
        cosine_backward(w.h.row(i), protos.row(p), g_act[p], w.g_h.row(i),
                        grad_protos ? w.g_proto.row(p) : std::span<double>{});
      }
    }
  });

  LossAndGradients out;
  out.grads.head = Matrix(c, k);
  out.grads.prototypes = Matrix(k, d);
  std::size_t total_sentences = 0;
  for (const auto& w : work) {
    out.loss.ce += w.ce;
    axpy(1.0, w.g_head.values(), out.grads.head.values());
    if (grad_protos) axpy(1.0, w.g_proto.values(), out.grads.prototypes.values());
    total_sentences += w.h.rows();
  }
  out.loss.ce *= inv_batch;

  // Prototype coverage over every sentence in the batch.
  Matrix all_h(total_sentences, d);
  std::vector<std::pair<std::size_t, std::size_t>> owner;
  owner.reserve(total_sentences);
  for (std::size_t b = 0, row = 0; b < work.size(); ++b) {
    for (std::size_t i = 0; i < work[b].h.rows(); ++i, ++row) {
      std::copy(work[b].h.row(i).begin(), work[b].h.row(i).end(), all_h.row(row).begin());
      owner.emplace_back(b, i);
    }
  }
  out.loss.proto = proto_loss(all_h, protos);
  out.loss.diversity = diversity_loss(protos, config.normalize_diversity);
  out.loss.total = out.loss.ce + config.lambda1 * out.loss.proto + config.lambda2 * out.loss.diversity;

  if (config.lambda1 != 0.0) {
    const double scale = -config.lambda1 / static_cast<double>(k);
    for (std::size_t p = 0; p < k; ++p) {
      std::size_t best = 0;
      double best_sim = -std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < total_sentences; ++r) {
        const double sim = cosine(all_h.row(r), protos.row(p));
        if (sim > best_sim) {
          best_sim = sim;
          best = r;
        }
      }
      const auto [b, i] = owner[best];
      cosine_backward(all_h.row(best), protos.row(p), scale, work[b].g_h.row(i),
                      grad_protos ? out.grads.prototypes.row(p) : std::span<double>{});
    }
  }
  if (grad_protos && config.lambda2 != 0.0) {
    diversity_backward(protos, config.normalize_diversity, config.lambda2, out.grads.prototypes);
  }

  parallel_for(batch.size(), config.threads, [&](std::size_t b) {
    const DocumentInput& doc = batch[b];
    work[b].g_attn = AttentionGrads::zeros(d);
    for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
      backprop_sentence(doc.sentences[i].embeddings, rhat_for(doc.sentences[i], config), model.attention,
                        work[b].g_h.row(i), work[b].g_attn);
    }
  });
  out.grads.attention = AttentionGrads::zeros(d);
  for (const auto& w : work) out.grads.attention.add(w.g_attn);
  return out;
}

SurrogateModel initialize_model(std::span<const DocumentInput> docs, std::size_t num_classes,
                                const TrainConfig& config) {
  config.validate();
  if (docs.empty()) throw Error(ErrorCode::EmptyDataset, "no training documents");
  if (num_classes < 2) throw Error(ErrorCode::InvalidConfig, "'num_classes' must be >= 2");
  const std::size_t d = docs.front().sentences.at(0).embeddings.cols();

  SurrogateModel model;
  model.config = config;
  Rng param_rng(stream_seed(config.seed, Stream::Parameters));
  model.attention = AttentionParams::init(d, param_rng);

  std::size_t total = 0;
  for (const auto& doc : docs) total += doc.sentences.size();
  Matrix points(total, d);
  std::size_t row = 0;
  for (const auto& doc : docs) {
    for (const auto& s : doc.sentences) {
      if (s.embeddings.cols() != d) throw Error(ErrorCode::ShapeMismatch, "document '" + doc.doc_id + "' has a different embedding width");
      const auto enc = encode_sentence(s.embeddings, {}, model.attention);
      std::copy(enc.embedding.begin(), enc.embedding.end(), points.row(row++).begin());
    }
  }
  model.prototypes = kmeans_init(points, config.num_prototypes, stream_seed(config.seed, Stream::KMeans));
  model.prototypes.trainable = config.update_prototypes;
  model.head.weights = Matrix(num_classes, config.num_prototypes);
  return model;
}

double fidelity(const SurrogateModel& model, std::span<const DocumentInput> docs) {
  if (docs.empty()) return 0.0;
  std::size_t agree = 0;
  for (const auto& doc : docs) {
    if (doc.label && model.predict(doc).predicted_class == *doc.label) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(docs.size());
}

json TrainReport::to_json(bool include_timing) const {
  json epochs_json = json::array();
  for (const auto& e : epochs) {
    json j{{"epoch", e.epoch}, {"ce", e.ce}, {"proto", e.proto}, {"diversity", e.diversity}, {"total", e.total}};
    j["heldout_fidelity"] = e.heldout_fidelity ? json(*e.heldout_fidelity) : json(nullptr);
    if (include_timing) j["seconds"] = e.seconds;
    epochs_json.push_back(std::move(j));
  }
  return json{{"epochs", epochs_json}, {"steps", steps}};
}

TrainResult train(std::span<const DocumentInput> train_docs, std::span<const DocumentInput> heldout,
                  std::size_t num_classes, const TrainConfig& config, const TrainHooks& hooks) {
  for (const auto& doc : train_docs) {
    if (!doc.label) throw Error(ErrorCode::MissingBundle, "training document '" + doc.doc_id + "' has no target label");
    if (*doc.label >= num_classes) {
      throw Error(ErrorCode::LabelOutOfRange, "document '" + doc.doc_id + "' label " + std::to_string(*doc.label));
    }
  }
  TrainResult result{initialize_model(train_docs, num_classes, config), {}};
  SurrogateModel& model = result.model;

  AdamW opt_wq(model.attention.wq.size(), config.adamw);
  AdamW opt_wk(model.attention.wk.size(), config.adamw);
  AdamW opt_wv(model.attention.wv.size(), config.adamw);
  AdamW opt_head(model.head.weights.size(), config.adamw);
  AdamW opt_proto(model.prototypes.vectors.size(), config.adamw);

  Rng shuffle_rng(stream_seed(config.seed, Stream::Shuffle));
  std::vector<std::size_t> order(train_docs.size());
  std::vector<DocumentInput> batch;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_docs[order[i]]);

      LossAndGradients lg;
      try {
        lg = total_loss(batch, model, config);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::NonFiniteGradient) throw DivergedLoss(epoch, batches);
        throw;
      }
      if (!std::isfinite(lg.loss.total)) throw DivergedLoss(epoch, batches);
      stats.ce += lg.loss.ce;
      stats.proto += lg.loss.proto;
      stats.diversity += lg.loss.diversity;
      stats.total += lg.loss.total;

      ++step;
      opt_wq.step(model.attention.wq.values(), lg.grads.attention.wq.values(), config.learning_rate, step);
      opt_wk.step(model.attention.wk.values(), lg.grads.attention.wk.values(), config.learning_rate, step);
      opt_wv.step(model.attention.wv.values(), lg.grads.attention.wv.values(), config.learning_rate, step);
      opt_head.step(model.head.weights.values(), lg.grads.head.values(), config.learning_rate, step);
      if (config.update_prototypes) {
        opt_proto.step(model.prototypes.vectors.values(), lg.grads.prototypes.values(), config.learning_rate, step);
      }
      ++batches;
    }
    if (batches > 0) {
      const double n = static_cast<double>(batches);
      stats.ce /= n;
      stats.proto /= n;
      stats.diversity /= n;
      stats.total /= n;
    }
    if (!heldout.empty()) stats.heldout_fidelity = fidelity(model, heldout);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.report.epochs.push_back(stats);
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model);
  }
  result.report.steps = step;

  std::vector<CorpusSentence> corpus;
  for (const auto& doc : train_docs) {
    const Matrix h = model.encode(doc);
    for (std::size_t i = 0; i < h.rows(); ++i) {
      const auto row = h.row(i);
      corpus.push_back({doc.doc_id, i, i < doc.sentence_texts.size() ? doc.sentence_texts[i] : std::string(),
                        std::vector<double>(row.begin(), row.end())});
    }
  }
  model.prototypes.associations = associate_nearest(model.prototypes.vectors, corpus);
  return result;
}

}  // namespace protosure
