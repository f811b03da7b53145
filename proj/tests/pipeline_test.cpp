#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <sys/wait.h>

#include "c3po/pipeline.hpp"

namespace c3po {
namespace {

class Workdir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("c3po_pipeline_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  RunManifest run(const std::string& stage, Config::Map overrides = {}) {
    const Stage& s = find_stage(stage);
    std::ostringstream log;
    return run_stage(s, dir_, resolve_config(s, {}, Config(std::move(overrides)), {}), log);
  }

  // A small log and datasets, enough for every stage.
  void small_pipeline() {
    run("simulate", {{"n_users", "800"}, {"new_users_per_day", "0"}, {"days", "4"}});
    run("featurize");
    run("make-dataset", {{"train_size", "2000"}, {"test_size", "2200"}});
  }

  fs::path dir_;
};

TEST(ConfigLayers, Precedence) {
  const Stage& s = find_stage("train");
  const auto file = Config::parse("# comment\nepochs = 7\nbatch_size=16\nlearning_rate = 0.5\nunrelated = 1\n");
  Config flags;
  flags.set("batch_size", "32");
  flags.set("learning_rate", "0.25");
  char env0[] = "C3PO_LEARNING_RATE=0.125";
  char env1[] = "PATH=/bin";
  char* env[] = {env0, env1, nullptr};
  const auto cfg = resolve_config(s, file, flags, Config::from_env(env));
  EXPECT_EQ(cfg.get<double>("learning_rate"), 0.125);
  EXPECT_EQ(cfg.get<int>("batch_size"), 32);
  EXPECT_EQ(cfg.get<int>("epochs"), 7);
  EXPECT_EQ(cfg.get<int>("patience"), 5);
  EXPECT_FALSE(cfg.has("unrelated"));
}

TEST(ConfigLayers, Errors) {
  EXPECT_THROW(Config::parse("just words\n"), Error);
  EXPECT_THROW(Config::parse(" = 3\n"), Error);
  Config c;
  c.set("n", "12x");
  try {
    c.get<int>("n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
  }
  EXPECT_THROW(c.str("missing"), Error);
  c.set("b", "maybe");
  EXPECT_THROW(c.flag("b"), Error);
}

TEST(Manifest, JsonRoundTrip) {
  RunManifest m;
  m.subcommand = "train";
  m.seed = 9;
  m.config.set("epochs", "3");
  m.inputs.push_back({"train", "train.csv", "00ff"});
  m.outputs.push_back({"model", "out/model.bin", "abcd"});
  m.results["auc"] = "0.9";
  const auto back = RunManifest::from_json(m.to_json());
  EXPECT_EQ(back.subcommand, "train");
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.config.values(), m.config.values());
  EXPECT_EQ(back.inputs, m.inputs);
  EXPECT_EQ(back.outputs, m.outputs);
  EXPECT_EQ(back.results, m.results);
  EXPECT_THROW(RunManifest::from_json("{}"), Error);
}

TEST_F(Workdir, EveryArtifactIsChecksummed) {
  small_pipeline();
  const auto m = run("train", {{"epochs", "2"}});
  ASSERT_EQ(m.outputs.size(), 2u);
  for (const auto& out : m.outputs) EXPECT_EQ(file_checksum(dir_ / out.path), out.checksum);
  ASSERT_EQ(m.inputs.size(), 1u);
  EXPECT_EQ(m.inputs[0].checksum, file_checksum(dir_ / "train.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "train.manifest.json"));
  EXPECT_TRUE(fs::exists(dir_ / "sim" / "simulate.manifest.json"));
}

TEST_F(Workdir, MakeDatasetCompositions) {
  small_pipeline();
  const auto train = load_dataset((dir_ / "train.csv").string());
  const auto test = load_dataset((dir_ / "test.csv").string());
  EXPECT_EQ(std::count_if(train.begin(), train.end(), [](auto& e) { return e.label == 1; }), 1000);
  EXPECT_EQ(std::count_if(test.begin(), test.end(), [](auto& e) { return e.label == 1; }), 200);
  EXPECT_EQ(test.size(), 2200u);
}

TEST_F(Workdir, ZeroLearningRateKeepsInitialParameters) {
  small_pipeline();
  run("train", {{"learning_rate", "0"}, {"epochs", "2"}, {"seed", "4"}});
  const auto m = load_model((dir_ / "model.bin").string());
  const auto init = init_model(kDefaultLayerDims, 4);
  EXPECT_EQ(m.layers, init.layers);
}

TEST_F(Workdir, MaskShrinksTheInputLayer) {
  small_pipeline();
  run("screen", {{"n_trees", "5"}, {"top_k", "8"}});
  std::string mask = read_file((dir_ / "mask.txt").string());
  EXPECT_EQ(std::count(mask.begin(), mask.end(), '\n'), 9);
  run("train", {{"mask", "mask.txt"}, {"epochs", "1"}});
  const auto m = load_model((dir_ / "model.bin").string());
  EXPECT_LT(m.layer_dims.front(), 80u);
  EXPECT_EQ(m.layer_dims.front(), m.encoding.output_dim());
  EXPECT_EQ(m.layer_dims[1], 40u);
}

TEST_F(Workdir, EvaluateReportsNoInformationRate) {
  small_pipeline();
  run("train", {{"epochs", "3"}});
  const auto m = run("evaluate");
  EXPECT_EQ(m.results.at("no_information_rate"), "0.909091");
  const auto text = read_file((dir_ / "evaluation.txt").string());
  EXPECT_NE(text.find("no_information_rate\t0.909091"), std::string::npos);
  EXPECT_NE(text.find("constant_negative_auc\t0.500000"), std::string::npos);
  EXPECT_NE(text.find("auc\t"), std::string::npos);
}

TEST_F(Workdir, ReproduceMatchesAndDetectsTampering) {
  small_pipeline();
  run("train", {{"epochs", "2"}});
  std::ostringstream log;
  for (const char* m : {"sim/simulate.manifest.json", "featurize.manifest.json", "make-dataset.manifest.json",
                        "train.manifest.json"}) {
    EXPECT_TRUE(reproduce(dir_ / m, dir_, dir_ / "scratch", log).empty()) << m;
  }
  std::string train = read_file((dir_ / "train.csv").string());
  train[train.size() - 2] = train[train.size() - 2] == '0' ? '1' : '0';
  write_file((dir_ / "train.csv").string(), train);
  try {
    reproduce(dir_ / "train.manifest.json", dir_, dir_ / "scratch2", log);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ChecksumMismatch);
  }
}

TEST_F(Workdir, ReportComparesTwoRuns) {
  run("simulate", {{"n_users", "300"}, {"new_users_per_day", "0"}, {"days", "2"}, {"report", "sim/a.csv"}});
  run("simulate",
      {{"n_users", "300"}, {"new_users_per_day", "0"}, {"days", "2"}, {"policy", "always-show"}, {"report", "sim/b.csv"}});
  run("report", {{"a", "sim/a.csv"}, {"b", "sim/b.csv"}});
  const auto ab = read_file((dir_ / "ab.csv").string());
  EXPECT_EQ(std::count(ab.begin(), ab.end(), '\n'), 1 + 2 * 24 * 3 + 3);  // header, hourly rows, per-type totals
  EXPECT_NE(read_file((dir_ / "report.txt").string()).find("summary:"), std::string::npos);
}

TEST_F(Workdir, MissingInputFailsFast) {
  try {
    run("featurize");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
  try {
    run("simulate", {{"policy", "model"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingModel);
  }
}

int cli(const std::string& args, const std::string& env = "") {
  const int status = std::system((env + " " + C3PO_CLI + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(Workdir, CliExitCodes) {
  const std::string wd = "--workdir " + dir_.string();
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli(wd + " train --no-such-flag 1"), 2);
  EXPECT_EQ(cli(wd + " featurize"), static_cast<int>(ErrorCode::IoError));
  EXPECT_EQ(cli(wd + " simulate --policy model --days 1"), static_cast<int>(ErrorCode::MissingModel));
  EXPECT_EQ(cli(wd + " simulate --days x"), static_cast<int>(ErrorCode::InvalidConfig));
  EXPECT_EQ(cli(wd + " simulate --n-users 50 --new-users-per-day 0 --days 1"), 0);
  EXPECT_EQ(cli(wd + " reproduce --manifest sim/simulate.manifest.json"), 0);
  EXPECT_EQ(cli(wd + " simulate", "C3PO_DAYS=oops"), static_cast<int>(ErrorCode::InvalidConfig));
}

}  // namespace
}  // namespace c3po
