#pragma once

// Pipeline stages behind the command-line tool. Each stage declares its
// config keys, reads inputs and writes outputs relative to a work directory,
// and leaves a RunManifest listing every artifact with its checksum.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "c3po/checksum.hpp"
#include "c3po/config.hpp"
#include "c3po/forest.hpp"
#include "c3po/metrics.hpp"
#include "c3po/model_io.hpp"
#include "c3po/simulator.hpp"

namespace c3po {

namespace fs = std::filesystem;

struct KeySpec {
  std::string key;
  std::string default_value;
  std::string help;
  bool is_input = false;   // path read by the stage
  bool is_output = false;  // path written by the stage
};

struct ArtifactRecord {
  std::string key;
  std::string path;  // relative to the work directory
  std::string checksum;
  bool operator==(const ArtifactRecord&) const = default;
};

struct RunManifest {
  std::string subcommand;
  Config config;
  std::uint64_t seed = 0;
  std::string started, finished;
  std::vector<ArtifactRecord> inputs, outputs;
  std::map<std::string, std::string> results;

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["started"] = started;
    j["finished"] = finished;
    j["config"] = config.values();
    auto list = [](const std::vector<ArtifactRecord>& v) {
      auto a = nlohmann::ordered_json::array();
      for (const auto& r : v) a.push_back({{"key", r.key}, {"path", r.path}, {"checksum", r.checksum}});
      return a;
    };
    j["inputs"] = list(inputs);
    j["outputs"] = list(outputs);
    j["results"] = results;
    return j.dump(2) + "\n";
  }

  static RunManifest from_json(std::string_view text) {
    try {
      const auto j = nlohmann::json::parse(text);
      RunManifest m;
      m.subcommand = j.at("subcommand").get<std::string>();
      m.seed = j.at("seed").get<std::uint64_t>();
      m.started = j.at("started").get<std::string>();
      m.finished = j.at("finished").get<std::string>();
      m.config = Config(j.at("config").get<Config::Map>());
      auto list = [](const nlohmann::json& a) {
        std::vector<ArtifactRecord> v;
        for (const auto& r : a) v.push_back({r.at("key"), r.at("path"), r.at("checksum")});
        return v;
      };
      m.inputs = list(j.at("inputs"));
      m.outputs = list(j.at("outputs"));
      m.results = j.at("results").get<std::map<std::string, std::string>>();
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::CorruptFile, std::string("manifest: ") + e.what());
    }
  }
};

inline std::string file_checksum(const fs::path& p) { return to_hex(fnv1a64(read_file(p.string()))); }

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// One stage invocation: resolved config plus artifact bookkeeping.
class StageRun {
 public:
  StageRun(std::string stage, fs::path workdir, Config cfg, std::ostream& log = std::cout)
      : workdir_(std::move(workdir)), cfg_(std::move(cfg)), log_(log) {
    manifest_.subcommand = std::move(stage);
    manifest_.config = cfg_;
    manifest_.started = utc_now();
    if (cfg_.has("seed")) manifest_.seed = cfg_.get<std::uint64_t>("seed");
  }

  const Config& config() const { return cfg_; }
  std::ostream& log() { return log_; }
  const fs::path& workdir() const { return workdir_; }

  // Reads an input artifact and records its checksum.
  std::string read(const std::string& key) {
    const auto rel = cfg_.str(key);
    if (rel.empty()) throw Error(ErrorCode::InvalidConfig, "'" + key + "' is required");
    const auto content = read_file((workdir_ / rel).string());
    manifest_.inputs.push_back({key, rel, to_hex(fnv1a64(content))});
    return content;
  }

  bool given(const std::string& key) const { return cfg_.has(key) && !cfg_.str(key).empty(); }

  void write(const std::string& key, std::string_view content) {
    const auto rel = cfg_.str(key);
    const auto path = workdir_ / rel;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file(path.string(), content);
    manifest_.outputs.push_back({key, rel, to_hex(fnv1a64(content))});
  }

  void result(const std::string& key, std::string value) { manifest_.results[key] = std::move(value); }

  // The manifest goes next to the first output.
  fs::path finish() {
    manifest_.finished = utc_now();
    fs::path dir = workdir_;
    if (!manifest_.outputs.empty()) dir = (workdir_ / manifest_.outputs.front().path).parent_path();
    const auto path = dir / (manifest_.subcommand + ".manifest.json");
    fs::create_directories(dir);
    write_file(path.string(), manifest_.to_json());
    return path;
  }

  const RunManifest& manifest() const { return manifest_; }

 private:
  fs::path workdir_;
  Config cfg_;
  std::ostream& log_;
  RunManifest manifest_;
};

struct Stage {
  std::string name;
  std::string help;
  std::vector<KeySpec> keys;
  std::function<void(StageRun&)> run;

  Config defaults() const {
    Config c;
    for (const auto& k : keys) c.set(k.key, k.default_value);
    return c;
  }
};

namespace detail {

inline std::string fmt(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

inline std::array<bool, kFeatureCount> parse_mask(std::string_view text) {
  std::array<bool, kFeatureCount> keep{};
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto name = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (name.empty() || name.front() == '#') continue;
    const auto idx = feature_index(name);
    if (!idx) throw Error(ErrorCode::InvalidConfig, "mask names unknown feature '" + std::string(name) + "'");
    keep[*idx] = true;
  }
  return keep;
}

inline std::string emit_mask(const std::array<bool, kFeatureCount>& keep) {
  std::string out = "# screened features, one per line\n";
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (keep[i]) out += std::string(kFeatureNames[i]) + "\n";
  }
  return out;
}

inline Optimizer parse_optimizer(const std::string& s) {
  if (s == "sgd") return Optimizer::SGD;
  if (s == "momentum") return Optimizer::Momentum;
  if (s == "adam") return Optimizer::Adam;
  throw Error(ErrorCode::InvalidConfig, "optimizer must be sgd, momentum or adam");
}

inline int default_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// ---------------------------------------------------------------------------
// Stage bodies

inline void run_simulate(StageRun& run) {
  const auto& c = run.config();
  PopulationSpec spec;
  spec.n_users = c.get<std::size_t>("n_users");
  spec.new_users_per_day = c.get<std::size_t>("new_users_per_day");
  spec.annoyance = c.get<double>("annoyance");
  spec.seed = c.get<std::uint64_t>("seed");
  const auto policy = parse_policy(c.str("policy"));
  if (!policy) throw Error(ErrorCode::InvalidConfig, "policy must be always-show, random or model");
  std::optional<ModelSnapshot> model;
  if (*policy == Policy::ModelRanker) {
    if (!run.given("model")) throw Error(ErrorCode::MissingModel, "policy=model needs --model");
    model = deserialize_model(run.read("model"));
  }
  SimOptions opts;
  opts.legacy_days = c.get<int>("legacy_days");
  opts.collect_log = true;
  const int days = c.get<int>("days");
  const auto result = simulate_period(generate_population(spec), *policy, days, spec.seed, model ? &*model : nullptr, opts);
  run.write("events", emit_events_csv(result.log));
  run.write("snapshots", emit_snapshots_csv(result.log));
  run.write("users_csv", emit_users_csv(result.log));
  run.write("report", emit_report_csv(result.report));
  run.write("retention", emit_retention_csv({result.report}));
  const auto total = result.report.total(0, days);
  run.result("displays", std::to_string(total.displays));
  run.result("clicks", std::to_string(total.clicks));
  run.result("ctr", fmt(total.ctr()));
  // Cohorts need 7 observed days after joining.
  const std::string retention = result.report.retention.empty() ? "n/a" : fmt(result.report.pooled_retention());
  run.result("retention7", retention);
  run.log() << "simulated " << days << " days, policy " << to_string(*policy) << ": " << total.displays << " displays, CTR "
            << fmt(total.ctr(), 4) << ", 7-day retention " << retention << "\n";
}

inline void run_featurize(StageRun& run) {
  EventLog log;
  log.events = parse_events_csv(run.read("events"));
  log.snapshots = parse_snapshots_csv(run.read("snapshots"));
  const Dataset examples = featurize_log(log);
  run.write("examples", emit_dataset(examples));
  const auto pos = std::count_if(examples.begin(), examples.end(), [](const auto& e) { return e.label == 1; });
  run.result("examples", std::to_string(examples.size()));
  run.result("positives", std::to_string(pos));
  run.log() << "featurized " << examples.size() << " displays (" << pos << " clicked)\n";
}

inline void run_make_dataset(StageRun& run) {
  const auto& c = run.config();
  const Dataset pool = parse_dataset(run.read("examples"));
  const auto seed = c.get<std::uint64_t>("seed");
  const Dataset train = balance_training_set(pool, c.get<std::size_t>("train_size"), seed);
  const auto exclude = id_set(train);
  const Dataset test = sample_test_set(pool, c.get<std::size_t>("test_size"), seed + 1, exclude);
  run.write("train", emit_dataset(train));
  run.write("test", emit_dataset(test));
  const auto test_pos = std::count_if(test.begin(), test.end(), [](const auto& e) { return e.label == 1; });
  run.result("train_size", std::to_string(train.size()));
  run.result("test_size", std::to_string(test.size()));
  run.result("test_positives", std::to_string(test_pos));
  run.log() << "train " << train.size() << " (balanced 50/50), test " << test.size() << " (" << test_pos
            << " positives, 1:10)\n";
}

inline void run_screen(StageRun& run) {
  const auto& c = run.config();
  const Dataset train = parse_dataset(run.read("train"));
  ForestParams p;
  p.n_trees = c.get<int>("n_trees");
  p.max_depth = c.get<int>("max_depth");
  p.min_leaf = c.get<int>("min_leaf");
  p.feature_subsample = c.get<int>("feature_subsample");
  p.seed = c.get<std::uint64_t>("seed");
  p.threads = c.get<int>("threads");
  if (p.threads <= 0) p.threads = default_threads();
  const auto report = feature_importances(fit_forest(train, p));
  const auto keep = select_top_k(report, c.get<int>("top_k"));
  run.write("importance", emit_importance_report(report));
  run.write("mask", emit_mask(keep));
  const auto order = importance_order(report);
  run.result("top_feature", std::string(kFeatureNames[order[0]]));
  run.log() << "forest of " << p.n_trees << " trees; top features:";
  for (std::size_t i = 0; i < 5; ++i) run.log() << ' ' << kFeatureNames[order[i]];
  run.log() << "\n";
}

inline void run_train(StageRun& run) {
  const auto& c = run.config();
  const Dataset data = parse_dataset(run.read("train"));
  EncodingSpec spec = run.given("encoding") ? parse_encoding_spec(run.read("encoding")) : default_encoding_spec();
  if (run.given("mask")) spec = masked(spec, parse_mask(run.read("mask")));
  TrainConfig tc;
  tc.learning_rate = c.get<double>("learning_rate");
  tc.batch_size = c.get<std::size_t>("batch_size");
  tc.epochs = c.get<std::uint32_t>("epochs");
  tc.optimizer = parse_optimizer(c.str("optimizer"));
  tc.patience = c.get<std::uint32_t>("patience");
  tc.seed = c.get<std::uint64_t>("seed");
  const auto [train, valid] = split_validation(data, c.get<double>("validation_fraction"), tc.seed);
  const auto stats = fit_normalization(train);
  std::vector<std::size_t> dims = kDefaultLayerDims;
  dims.front() = spec.output_dim();
  ModelSnapshot model = init_model(dims, tc.seed);
  model.encoding = spec;
  model.normalization = stats;
  const auto fitted = fit(model, encode_dataset(train, spec, stats), encode_dataset(valid, spec, stats), tc);
  const auto bytes = serialize_model(fitted.model);
  run.write("model", bytes);
  std::string curve = "epoch,train_loss,valid_loss\n";
  for (std::size_t e = 0; e < fitted.train_loss.size(); ++e) {
    curve += std::to_string(e + 1) + ',' + fmt(fitted.train_loss[e], 9) + ',' + fmt(fitted.valid_loss[e], 9) + '\n';
  }
  run.write("loss_curve", curve);
  run.result("model_version", to_hex(fnv1a64(bytes)));
  run.result("epochs", std::to_string(fitted.train_loss.size()));
  run.result("best_epoch", std::to_string(fitted.best_epoch + 1));
  run.result("valid_loss", fmt(fitted.valid_loss[fitted.best_epoch], 9));
  run.log() << "trained " << fitted.train_loss.size() << " epochs on " << train.size() << " examples (" << valid.size()
            << " held for validation); best epoch " << fitted.best_epoch + 1 << ", validation loss "
            << fmt(fitted.valid_loss[fitted.best_epoch], 4) << "\n";
}

struct Evaluation {
  std::size_t examples = 0, positives = 0;
  double auc = 0, accuracy = 0, no_information_rate = 0;
  double constant_negative_auc = 0, constant_negative_accuracy = 0;

  std::string emit() const {
    std::string out;
    out += "examples\t" + std::to_string(examples) + "\n";
    out += "positives\t" + std::to_string(positives) + "\n";
    out += "auc\t" + fmt(auc) + "\n";
    out += "accuracy\t" + fmt(accuracy) + "\n";
    out += "no_information_rate\t" + fmt(no_information_rate) + "\n";
    out += "constant_negative_auc\t" + fmt(constant_negative_auc) + "\n";
    out += "constant_negative_accuracy\t" + fmt(constant_negative_accuracy) + "\n";
    return out;
  }
};

// AUC is the headline; accuracy is always shown next to the rate a
// constant majority-class guess would reach.
inline Evaluation evaluate(const ModelSnapshot& model, const Dataset& test, double threshold = 0.5) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& e : test) {
    scores.push_back(score(model, e.features));
    labels.push_back(e.label);
  }
  Evaluation ev;
  ev.examples = test.size();
  ev.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  ev.auc = roc_auc(scores, labels);
  ev.accuracy = accuracy(scores, labels, threshold);
  ev.no_information_rate = no_information_rate(labels);
  const std::vector<double> zeros(labels.size(), 0.0);
  ev.constant_negative_auc = roc_auc(zeros, labels);
  ev.constant_negative_accuracy = accuracy(zeros, labels, threshold);
  return ev;
}

inline void run_evaluate(StageRun& run) {
  const auto model = deserialize_model(run.read("model"));
  const Dataset test = parse_dataset(run.read("test"));
  const auto ev = evaluate(model, test, run.config().get<double>("threshold"));
  run.write("evaluation", ev.emit());
  run.result("auc", fmt(ev.auc));
  run.result("accuracy", fmt(ev.accuracy));
  run.result("no_information_rate", fmt(ev.no_information_rate));
  run.log() << "AUC                          " << fmt(ev.auc, 4) << "\n"
            << "accuracy                     " << fmt(ev.accuracy, 4) << "\n"
            << "no-information rate          " << fmt(ev.no_information_rate, 4) << "  (always predicting no click)\n"
            << "constant-negative AUC        " << fmt(ev.constant_negative_auc, 4) << "\n"
            << "test composition             " << ev.positives << " clicked / " << ev.examples - ev.positives
            << " not clicked\n";
}

inline void run_report(StageRun& run) {
  const auto a = parse_report_csv(run.read("a"), "a");
  std::string text;
  auto describe = [&](const SimReport& r, const std::string& label) {
    text += label + ": day,noti_type,displays,clicks,ctr\n";
    for (int d = 0; d < r.days; ++d) {
      for (NotiType t : kAllNotiTypes) {
        const auto c = r.total(d, d + 1, t);
        text += std::to_string(d) + ',' + to_string(t) + ',' + std::to_string(c.displays) + ',' + std::to_string(c.clicks) +
                ',' + fmt(c.ctr()) + '\n';
      }
    }
  };
  describe(a, "a");
  if (run.given("b")) {
    const auto b = parse_report_csv(run.read("b"), "b");
    describe(b, "b");
    const auto cmp = ab_compare(a, b);
    run.write("ab", emit_ab_csv(cmp));
    text += "summary: noti_type,displays_a,displays_b,ctr_a,ctr_b,delta_ctr\n";
    for (const auto& s : cmp.summary) {
      text += to_string(s.noti_type) + ',' + std::to_string(s.a.displays) + ',' + std::to_string(s.b.displays) + ',' +
              fmt(s.a.ctr()) + ',' + fmt(s.b.ctr()) + ',' + fmt(s.delta_ctr()) + '\n';
    }
  }
  run.write("out", text);
  run.log() << text;
}

}  // namespace detail

inline const std::vector<Stage>& stages() {
  static const std::vector<Stage> all = {
      {"simulate",
       "Generate a synthetic population and event log under one display policy",
       {{"n_users", "6000", "established users"},
        {"new_users_per_day", "150", "new-user cohort size per day"},
        {"days", "7", "simulated days"},
        {"policy", "random", "always-show | random | model"},
        {"legacy_days", "0", "leading days run under the random policy"},
        {"annoyance", "0.25", "logit penalty per display beyond the tolerated daily count"},
        {"seed", "0", "population and simulation seed"},
        {"model", "", "model file for policy=model", true},
        {"events", "sim/events.csv", "event log", false, true},
        {"snapshots", "sim/snapshots.csv", "device snapshots", false, true},
        {"users_csv", "sim/users.csv", "user table", false, true},
        {"report", "sim/report.csv", "hourly displays and clicks", false, true},
        {"retention", "sim/retention.csv", "7-day cohort retention", false, true}},
       detail::run_simulate},
      {"featurize",
       "Turn an event log and snapshots into labeled feature vectors, one per display",
       {{"events", "sim/events.csv", "event log", true},
        {"snapshots", "sim/snapshots.csv", "device snapshots", true},
        {"examples", "examples.csv", "labeled examples", false, true}},
       detail::run_featurize},
      {"make-dataset",
       "Sample a balanced training set and a disjoint 1:10 test set",
       {{"examples", "examples.csv", "labeled example pool", true},
        {"train_size", "50000", "training examples, half clicked"},
        {"test_size", "50000", "test examples, clicked:not clicked = 1:10"},
        {"seed", "0", "sampling seed"},
        {"train", "train.csv", "training set", false, true},
        {"test", "test.csv", "test set", false, true}},
       detail::run_make_dataset},
      {"screen",
       "Rank features by random-forest impurity decrease and keep the top k",
       {{"train", "train.csv", "training set", true},
        {"n_trees", "100", "trees"},
        {"max_depth", "12", "maximum tree depth"},
        {"min_leaf", "5", "minimum examples per leaf"},
        {"feature_subsample", "6", "candidate features per split"},
        {"top_k", "32", "features kept"},
        {"threads", "0", "worker threads, 0 = all cores"},
        {"seed", "0", "forest seed"},
        {"importance", "importance.tsv", "importance report", false, true},
        {"mask", "mask.txt", "kept feature names", false, true}},
       detail::run_screen},
      {"train",
       "Train the click-prediction network",
       {{"train", "train.csv", "training set", true},
        {"mask", "", "feature mask from screen (empty keeps all)", true},
        {"encoding", "", "encoding spec file (empty uses the built-in spec)", true},
        {"learning_rate", "0.001", "step size"},
        {"batch_size", "64", "mini-batch size"},
        {"epochs", "30", "maximum epochs"},
        {"optimizer", "adam", "sgd | momentum | adam"},
        {"patience", "5", "epochs without validation improvement before stopping"},
        {"validation_fraction", "0.1", "share of the training set held out for early stopping"},
        {"seed", "0", "initialization and shuffling seed"},
        {"model", "model.bin", "model file", false, true},
        {"loss_curve", "loss.csv", "per-epoch losses", false, true}},
       detail::run_train},
      {"evaluate",
       "Score a test set: AUC, accuracy and the no-information rate",
       {{"model", "model.bin", "model file", true},
        {"test", "test.csv", "test set", true},
        {"threshold", "0.5", "decision threshold for accuracy"},
        {"evaluation", "evaluation.txt", "metrics report", false, true}},
       detail::run_evaluate},
      {"report",
       "Summarize one simulation report, or compare two (deltas are b - a)",
       {{"a", "sim/report.csv", "report A", true},
        {"b", "", "report B", true},
        {"out", "report.txt", "text summary", false, true},
        {"ab", "ab.csv", "hourly A/B comparison (written when b is given)", false, true}},
       detail::run_report},
  };
  return all;
}

inline const Stage& find_stage(std::string_view name) {
  for (const auto& s : stages()) {
    if (s.name == name) return s;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown stage '" + std::string(name) + "'");
}

// A shared config file or the environment may carry other stages' keys; those
// are skipped. Flags are built from the stage's own table.
inline Config resolve_config(const Stage& stage, const Config& file, const Config& flags, const Config& env) {
  Config cfg = stage.defaults();
  for (const Config* layer : {&file, &flags, &env}) {
    for (const auto& [k, v] : layer->values()) {
      if (cfg.has(k)) cfg.set(k, v);
    }
  }
  return cfg;
}

inline RunManifest run_stage(const Stage& stage, const fs::path& workdir, const Config& cfg, std::ostream& log = std::cout) {
  StageRun run(stage.name, workdir, cfg, log);
  stage.run(run);
  run.finish();
  return run.manifest();
}

// Re-runs a manifest in a scratch directory seeded with copies of its inputs
// and compares every output checksum. Returns the mismatching output keys.
inline std::vector<std::string> reproduce(const fs::path& manifest_path, const fs::path& workdir, const fs::path& scratch,
                                          std::ostream& log = std::cout) {
  const auto m = RunManifest::from_json(read_file(manifest_path.string()));
  const Stage& stage = find_stage(m.subcommand);
  fs::create_directories(scratch);
  for (const auto& in : m.inputs) {
    const auto src = workdir / in.path;
    if (file_checksum(src) != in.checksum) {
      throw Error(ErrorCode::ChecksumMismatch, "input " + in.path + " changed since the recorded run");
    }
    const auto dst = scratch / in.path;
    if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
    fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
  }
  const auto again = run_stage(stage, scratch, m.config, log);
  std::vector<std::string> mismatched;
  for (const auto& out : m.outputs) {
    const auto it = std::find_if(again.outputs.begin(), again.outputs.end(), [&](const auto& r) { return r.key == out.key; });
    if (it == again.outputs.end() || it->checksum != out.checksum) mismatched.push_back(out.key);
  }
  return mismatched;
}

}  // namespace c3po
