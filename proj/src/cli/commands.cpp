#include "protosure/cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "protosure/archive.hpp"
#include "protosure/data_io.hpp"
#include "protosure/errors.hpp"
#include "protosure/explanation.hpp"
#include "protosure/faithfulness.hpp"
#include "protosure/kernels.hpp"
#include "protosure/synthetic.hpp"
#include "protosure/target_client.hpp"
#include "protosure/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace protosure {

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::UnknownFormat:
    case ErrorCode::UnknownDatasetKind:
      return kExitUsage;
    case ErrorCode::DivergedLoss:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::TooFewPoints:
    case ErrorCode::LabelOutOfRange:
      return kExitTraining;
    default:
      return kExitIo;
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const json& value, const std::string& key) {
  if (!value.is_string()) throw Error(ErrorCode::InvalidConfig, "'" + key + "' must be a path string");
  const fs::path p(value.get<std::string>());
  return p.is_absolute() ? p : base / p;
}

void require_exists(const fs::path& p, const std::string& key) {
  if (!fs::exists(p)) throw Error(ErrorCode::InvalidConfig, "'" + key + "' points to a missing path: " + p.string());
}

void require_parent(const fs::path& p, const std::string& key) {
  const fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) {
    throw Error(ErrorCode::InvalidConfig, "'" + key + "' output directory does not exist: " + parent.string());
  }
}

void apply_predictions(std::vector<Document>& docs, const fs::path& path) {
  const auto records = read_predictions(path);
  for (auto& d : docs) {
    const auto it = records.find(d.id);
    if (it == records.end()) throw Error(ErrorCode::MissingPrediction, "predictions have no entry for id '" + d.id + "'");
    d.label = it->second.label;
  }
}

std::size_t infer_classes(std::span<const Document> docs) {
  std::size_t c = 0;
  for (const auto& d : docs) {
    if (!d.label) throw Error(ErrorCode::InvalidConfig, "document '" + d.id + "' has no label and no prediction");
    c = std::max(c, *d.label + 1);
  }
  return std::max<std::size_t>(c, 2);
}

std::string safe_file_name(const std::string& id) {
  std::string out;
  for (unsigned char c : id) out += (std::isalnum(c) || c == '-' || c == '_' || c == '.') ? static_cast<char>(c) : '_';
  return out;
}

// --- train -----------------------------------------------------------------

int cmd_train(const fs::path& config_path) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
    validate_run_paths(cfg);
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  std::vector<Document> docs = read_dataset(cfg.dataset);
  if (cfg.predictions) apply_predictions(docs, *cfg.predictions);
  const std::size_t classes = cfg.num_classes ? *cfg.num_classes : infer_classes(docs);

  const fs::path attr_dir = cfg.train.use_attributions && cfg.attributions ? *cfg.attributions : fs::path();
  const auto inputs = load_document_inputs(docs, cfg.bundles, attr_dir);

  const auto held = static_cast<std::size_t>(std::llround(cfg.holdout_fraction * static_cast<double>(inputs.size())));
  if (held >= inputs.size()) throw Error(ErrorCode::InvalidConfig, "holdout_fraction leaves no training documents");
  const std::span<const DocumentInput> all(inputs);
  const auto train_docs = all.first(inputs.size() - held);
  const auto heldout = all.last(held);

  TrainHooks hooks;
  if (cfg.checkpoint) {
    fs::create_directories(*cfg.checkpoint);
    hooks.on_epoch_end = [&](std::size_t epoch, const SurrogateModel& m) {
      save_model(m, *cfg.checkpoint / ("epoch-" + std::to_string(epoch) + ".psm"));
    };
  }
  const auto result = train(train_docs, heldout, classes, cfg.train, hooks);
  save_model(result.model, cfg.model);
  if (cfg.report) write_text_file(*cfg.report, result.report.to_json().dump(2) + "\n");

  for (const auto& e : result.report.epochs) {
    std::cerr << "epoch " << e.epoch << " loss " << e.total << " ce " << e.ce;
    if (e.heldout_fidelity) std::cerr << " heldout_fidelity " << *e.heldout_fidelity;
    std::cerr << " (" << e.seconds << " s)\n";
  }
  std::cout << "model written to " << cfg.model.string() << "\n";
  return kExitOk;
}

// --- explain ---------------------------------------------------------------

struct ExplainArgs {
  std::string model, dataset, bundles, attributions, out, format = "json";
  std::size_t top_k = 3;
};

int cmd_explain(const ExplainArgs& a) {
  if (a.top_k == 0) {
    std::cerr << "usage error: --top-k must be at least 1\n";
    return kExitUsage;
  }
  if (a.format != "json" && a.format != "html") {
    std::cerr << "usage error: --format must be json or html\n";
    return kExitUsage;
  }
  const SurrogateModel model = load_model(a.model);
  const auto docs = read_dataset(a.dataset);
  const auto inputs = load_document_inputs(docs, a.bundles, a.attributions);
  fs::create_directories(a.out);

  json index = json::array();
  for (const auto& input : inputs) {
    const Explanation e = explain(input, model, a.top_k);
    const std::string file = safe_file_name(input.doc_id) + "." + a.format;
    write_text_file(fs::path(a.out) / file, render_report(e, a.format));
    index.push_back({{"id", input.doc_id}, {"file", file}, {"predicted_class", e.predicted_class}});
  }
  write_text_file(fs::path(a.out) / "index.json", index.dump(2) + "\n");
  std::cout << inputs.size() << " explanations written to " << a.out << "\n";
  return kExitOk;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string model, dataset, bundles, attributions, predictions, provider, out;
  std::string importance = "self", variant = "drop", aggregation = "mean";
  std::size_t threads = 1;
};

int cmd_eval(const EvalArgs& a) {
  MetricVariant variant;
  Aggregation aggregation;
  try {
    variant = parse_variant(a.variant);
    aggregation = parse_aggregation(a.aggregation);
    if (a.importance != "self" && a.importance != "file") {
      throw Error(ErrorCode::InvalidConfig, "--importance must be self or file");
    }
    if (a.importance == "file" && a.attributions.empty()) {
      throw Error(ErrorCode::InvalidConfig, "--importance file needs --attributions");
    }
    if (a.threads < 1) throw Error(ErrorCode::InvalidConfig, "--threads must be >= 1");
  } catch (const Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  const SurrogateModel model = load_model(a.model);
  std::vector<Document> docs = read_dataset(a.dataset);
  if (!a.predictions.empty()) apply_predictions(docs, a.predictions);
  const auto attr_dir = model.config.use_attributions ? fs::path(a.attributions) : fs::path();
  const auto inputs = load_document_inputs(docs, a.bundles, attr_dir);

  std::vector<std::vector<double>> importance;
  std::vector<std::size_t> surrogate_classes;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto breakdown = model.predict(inputs[i]);
    surrogate_classes.push_back(breakdown.predicted_class);
    if (a.importance == "self") {
      std::vector<double> s(breakdown.num_sentences());
      for (std::size_t j = 0; j < s.size(); ++j) s[j] = breakdown.sentence_logits(j, breakdown.predicted_class);
      importance.push_back(std::move(s));
    } else {
      importance.push_back(
          importance_from_attributions(docs[i], read_attributions(attribution_path(a.attributions, docs[i].id)),
                                       aggregation));
    }
  }

  std::unique_ptr<Predictor> predictor;
  if (a.provider.empty()) {
    predictor = std::make_unique<SurrogatePredictor>(model, inputs);
  } else {
    const json pc = read_json_file(a.provider);
    predictor = make_provider(pc, fs::path(a.provider).parent_path(), docs);
  }

  EvalOptions options;
  options.variant = variant;
  options.threads = a.threads;
  const bool all_labelled = std::all_of(docs.begin(), docs.end(), [](const Document& d) { return d.label.has_value(); });
  if (all_labelled) options.surrogate_classes = surrogate_classes;
  const auto report = evaluate_explainer(*predictor, docs, importance, options);

  const std::string out = a.out.empty() ? "faithfulness" : a.out;
  write_text_file(out + ".json", report.to_json().dump(2) + "\n");
  write_text_file(out + ".csv", report.to_csv());

  auto show = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("n/a"); };
  std::cout << "documents " << report.documents << " (" << variant_name(variant) << ")\n"
            << "Acc  " << show(report.acc) << "\nComp " << report.comp << "\nSuff " << report.suff << "\nDFF  "
            << report.dff << "\nDFS  " << report.dfs << "\nDel  " << show(report.del) << "\nIns  "
            << show(report.ins) << "\n";
  return kExitOk;
}

// --- attribute -------------------------------------------------------------

int cmd_attribute(const std::string& dataset, const std::string& provider_path, const std::string& out, bool resume) {
  std::vector<Document> docs;
  std::unique_ptr<Predictor> provider;
  try {
    const json pc = read_json_file(provider_path);
    docs = read_dataset(dataset);
    provider = make_provider(pc, fs::path(provider_path).parent_path(), docs);
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return e.code() == ErrorCode::InvalidConfig || e.code() == ErrorCode::UnknownDatasetKind ? kExitUsage : kExitIo;
  }
  fs::create_directories(out);
  std::size_t written = 0, skipped = 0;
  for (const auto& doc : docs) {
    const fs::path path = attribution_path(out, doc.id);
    if (resume && fs::exists(path)) {
      ++skipped;
      continue;
    }
    write_attributions(occlusion_attributions(doc, *provider), path);
    ++written;
    std::cerr << "[" << written + skipped << "/" << docs.size() << "] " << doc.id << "\n";
  }
  std::cout << written << " written, " << skipped << " skipped\n";
  return kExitOk;
}

// --- inspect ---------------------------------------------------------------

int cmd_inspect_model(const std::string& path) {
  const SurrogateModel model = load_model(path);
  json summary = model_manifest(model);
  summary["file"] = path;
  summary["file_bytes"] = fs::file_size(path);
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

// One JSON object per document: sentence byte spans and tokens.
int cmd_inspect_segment(const std::string& path) {
  for (const auto& doc : read_dataset(path)) {
    json sentences = json::array();
    for (std::size_t i = 0; i < doc.num_sentences(); ++i) {
      const auto& s = doc.sentences[i];
      sentences.push_back(
          {{"start", s.start}, {"end", s.end}, {"text", std::string(doc.sentence_text(i))}, {"tokens", s.tokens}});
    }
    std::cout << json{{"id", doc.id}, {"sentences", sentences}}.dump() << "\n";
  }
  return kExitOk;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t docs = 64, classes = 4, dim = 24;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
  SyntheticTaskConfig c;
  c.num_documents = a.docs;
  c.num_classes = a.classes;
  c.dim = a.dim;
  c.seed = a.seed;
  const SyntheticTask task = generate_synthetic_task(c);
  const fs::path out(a.out);
  fs::create_directories(out / "bundles");
  fs::create_directories(out / "attributions");

  write_dataset(out / "dataset.jsonl", task.documents);
  std::vector<std::pair<std::string, PredictionRecord>> preds;
  for (const auto& d : task.documents) {
    preds.push_back({d.id, {*d.label, task.oracle.predict_one(remove_sentences(d, {}))}});
  }
  write_predictions(out / "predictions.jsonl", preds);
  for (std::size_t i = 0; i < task.documents.size(); ++i) {
    write_bundle(task.bundles[i], bundle_path(out / "bundles", task.documents[i].id));
    write_attributions(task.attributions[i], attribution_path(out / "attributions", task.documents[i].id));
  }
  write_text_file(out / "rules.json", task.oracle.to_json().dump(2) + "\n");
  write_text_file(out / "provider.json", json{{"type", "synthetic"}, {"rules_file", "rules.json"}}.dump(2) + "\n");

  json run = to_json(TrainConfig{});
  run["seed"] = a.seed;
  run["dataset"] = "dataset.jsonl";
  run["bundles"] = "bundles";
  run["attributions"] = "attributions";
  run["predictions"] = "predictions.jsonl";
  run["model"] = "model.psm";
  run["report"] = "train_report.json";
  run["holdout_fraction"] = 0.25;
  run["num_classes"] = a.classes;
  write_text_file(out / "train.json", run.dump(2) + "\n");
  std::cout << task.documents.size() << " documents written to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "run configuration must be a JSON object");
  static const std::set<std::string> path_keys = {"dataset", "bundles",  "attributions", "predictions",
                                                  "model",   "report",   "checkpoint"};
  RunConfig cfg;
  json train = json::object();
  for (const auto& [key, value] : j.items()) {
    if (path_keys.contains(key)) {
      const fs::path p = resolve(base, value, key);
      if (key == "dataset") cfg.dataset = p;
      else if (key == "bundles") cfg.bundles = p;
      else if (key == "attributions") cfg.attributions = p;
      else if (key == "predictions") cfg.predictions = p;
      else if (key == "model") cfg.model = p;
      else if (key == "report") cfg.report = p;
      else cfg.checkpoint = p;
    } else if (key == "holdout_fraction") {
      if (!value.is_number() || value.get<double>() < 0.0 || value.get<double>() >= 1.0) {
        throw Error(ErrorCode::InvalidConfig, "'holdout_fraction' must lie in [0, 1)");
      }
      cfg.holdout_fraction = value.get<double>();
    } else if (key == "num_classes") {
      if (!value.is_number_integer() || value.get<long long>() < 2) {
        throw Error(ErrorCode::InvalidConfig, "'num_classes' must be an integer >= 2");
      }
      cfg.num_classes = value.get<std::size_t>();
    } else {
      train[key] = value;
    }
  }
  for (const char* key : {"dataset", "bundles", "model"}) {
    if (!j.contains(key)) throw Error(ErrorCode::InvalidConfig, std::string("'") + key + "' is required");
  }
  cfg.train = train_config_from_json(train);
  cfg.train.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  return parse_run_config(read_json_file(path), path.parent_path());
}

void validate_run_paths(const RunConfig& c) {
  require_exists(c.dataset, "dataset");
  if (!fs::is_directory(c.bundles)) {
    throw Error(ErrorCode::InvalidConfig, "'bundles' must be an existing directory: " + c.bundles.string());
  }
  if (c.attributions && c.train.use_attributions) require_exists(*c.attributions, "attributions");
  if (c.predictions) require_exists(*c.predictions, "predictions");
  require_parent(c.model, "model");
  if (c.report) require_parent(*c.report, "report");
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Prototype surrogate explanations for black-box text classifiers"};
  app.require_subcommand(1);
  std::string simd;
  app.add_option("--simd", simd, "Kernel level: scalar, avx2 or neon");

  std::string train_config;
  auto* train_cmd = app.add_subcommand("train", "Train a surrogate from a run configuration");
  train_cmd->add_option("config", train_config, "Run configuration JSON")->required();

  ExplainArgs ex;
  auto* explain_cmd = app.add_subcommand("explain", "Write per-document explanation reports");
  explain_cmd->add_option("--model", ex.model)->required();
  explain_cmd->add_option("--dataset", ex.dataset)->required();
  explain_cmd->add_option("--bundles", ex.bundles)->required();
  explain_cmd->add_option("--attributions", ex.attributions);
  explain_cmd->add_option("--out", ex.out)->required();
  explain_cmd->add_option("--format", ex.format, "json or html");
  explain_cmd->add_option("--top-k", ex.top_k, "Prototypes listed per sentence");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Faithfulness metrics for a sentence-importance method");
  eval_cmd->add_option("--model", ev.model)->required();
  eval_cmd->add_option("--dataset", ev.dataset)->required();
  eval_cmd->add_option("--bundles", ev.bundles)->required();
  eval_cmd->add_option("--attributions", ev.attributions);
  eval_cmd->add_option("--predictions", ev.predictions, "Target predictions .jsonl (labels for Acc)");
  eval_cmd->add_option("--provider", ev.provider, "Provider JSON; the surrogate itself when omitted");
  eval_cmd->add_option("--importance", ev.importance, "self or file");
  eval_cmd->add_option("--aggregation", ev.aggregation, "mean, max or sum over token scores");
  eval_cmd->add_option("--variant", ev.variant, "drop or paper-literal");
  eval_cmd->add_option("--threads", ev.threads);
  eval_cmd->add_option("--out", ev.out, "Output prefix for .json and .csv");

  std::string at_dataset, at_provider, at_out;
  bool at_resume = false;
  auto* attr_cmd = app.add_subcommand("attribute", "Occlusion attributions against a provider");
  attr_cmd->add_option("--dataset", at_dataset)->required();
  attr_cmd->add_option("--provider", at_provider)->required();
  attr_cmd->add_option("--out", at_out, "Output directory of .psa files")->required();
  attr_cmd->add_flag("--resume", at_resume, "Skip documents that already have a file");

  std::string inspect_target;
  bool inspect_segment = false;
  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a model archive, or segment a dataset");
  inspect_cmd->add_option("path", inspect_target)->required();
  inspect_cmd->add_flag("--segment", inspect_segment, "Print sentence spans and tokens for a dataset");

  SynthArgs sy;
  auto* synth_cmd = app.add_subcommand("synth", "Generate the keyword-rule toy task");
  synth_cmd->add_option("--out", sy.out)->required();
  synth_cmd->add_option("--docs", sy.docs);
  synth_cmd->add_option("--classes", sy.classes);
  synth_cmd->add_option("--dim", sy.dim);
  synth_cmd->add_option("--seed", sy.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (!simd.empty()) {
      if (simd == "scalar") kernels::set_level(kernels::Level::Scalar);
      else if (simd == "avx2") kernels::set_level(kernels::Level::Avx2);
      else if (simd == "neon") kernels::set_level(kernels::Level::Neon);
      else throw std::invalid_argument("unknown kernel level '" + simd + "'");
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_config);
    if (*explain_cmd) return cmd_explain(ex);
    if (*eval_cmd) return cmd_eval(ev);
    if (*attr_cmd) return cmd_attribute(at_dataset, at_provider, at_out, at_resume);
    if (*inspect_cmd) return inspect_segment ? cmd_inspect_segment(inspect_target) : cmd_inspect_model(inspect_target);
    if (*synth_cmd) return cmd_synth(sy);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace protosure
