/* Copyright 2026 The eodistort Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "eodistort/sweep.hpp"

#include <gtest/gtest.h>
#include <stdlib.h>

#include "eodistort/report.hpp"
#include "json.hpp"
#include "support/test_util.hpp"

namespace eodistort {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::TempDir;

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no eodistort::Error thrown";
  return ErrorCode::kMissingFile;
}

class SweepTest : public ::testing::Test {
 protected:
  void SetUp() override {
    items_ = testing::SmallSuite(1234);
    manifest_ = testing::WriteDataset(dir_ / "data", items_, testing::SmallClassTable());
  }

  // A small sweep: two transforms on a three-point grid.
  json BaseConfig() const {
    return {{"manifest", "data/manifest.json"},
            {"seed", 9},
            {"transforms",
             {{{"kind", "gray"}, {"grid", {0.0, 0.5, 1.0}}},
              {{"kind", "pixel-swap"}, {"grid", {0.0, 1.0}}, {"replicates", 2}}}},
            {"predictor", {{"kind", "oracle"}}}};
  }

  SweepConfig Parse(const json& doc) const { return ParseSweepConfig(doc.dump(), dir_.path()); }

  std::string StubCommand() const {
    return std::string("'") + EODISTORT_STUB_PATH + "' --manifest '" + manifest_.string() +
           "' {input_dir} {output_dir}";
  }

  TempDir dir_;
  std::vector<testing::SyntheticImage> items_;
  fs::path manifest_;
};

TEST(TransformSpecTest, DefaultsAndLabels) {
  const auto grid = DefaultIntensityGrid();
  ASSERT_EQ(grid.size(), 11u);
  for (int i = 0; i <= 10; ++i) EXPECT_EQ(grid[i], i / 10.0);
  const auto t = DefaultTransforms();
  ASSERT_EQ(t.size(), 4u);
  EXPECT_EQ(t[0].Label(), "gray");
  EXPECT_EQ(t[1].Label(), "pixel-swap");
  EXPECT_EQ(t[1].replicates, 3);
  EXPECT_EQ(t[2].Label(), "color-dup-r");
  EXPECT_EQ(t[3].Label(), "context-mask");
  EXPECT_EQ(t[3].grid, std::vector<double>{1.0});
}

TEST(TransformSpecTest, CellPathLayout) {
  TransformSpec t{DistortionKind::kColorDuplication, Channel::kB, {}, 1};
  EXPECT_EQ(CellPath(t, 4, 0.3, 0), fs::path("color-dup-b/4/0.300000/0"));
  EXPECT_EQ(FormatIntensity(1.0), "1.000000");
}

TEST_F(SweepTest, ParsesAndResolvesPaths) {
  json doc = BaseConfig();
  doc["classes"] = {3, 1};
  doc["split"] = "train";
  doc["fill"] = {{"means", {1.5, 2.5, 3.5}}};
  doc["jobs"] = 2;
  doc["max_external"] = 3;
  doc["batch_size"] = 2;
  const auto c = Parse(doc);
  EXPECT_EQ(c.manifest_path, manifest_);
  EXPECT_EQ(c.split, Split::kTrain);
  EXPECT_EQ(c.seed, 9u);
  ASSERT_EQ(c.transforms.size(), 2u);
  EXPECT_EQ(c.transforms[1].replicates, 2);
  EXPECT_EQ(c.classes, (std::vector<ClassId>{3, 1}));
  ASSERT_TRUE(c.fill_means.has_value());
  EXPECT_EQ(c.fill_means->mean_g, 2.5);
  EXPECT_EQ(c.jobs, 2);
  EXPECT_EQ(c.max_external, 3);
  EXPECT_EQ(c.batch_size, 2u);

  const auto loaded = LoadSweepConfig(testing::WriteConfig(dir_.path(), doc));
  EXPECT_EQ(loaded.Digest(), c.Digest());
}

TEST_F(SweepTest, OmittedFieldsTakeDefaults) {
  const auto c = Parse({{"manifest", "data/manifest.json"}});
  EXPECT_EQ(c.transforms.size(), 4u);
  EXPECT_EQ(c.split, Split::kVal);
  EXPECT_EQ(c.fill_split, Split::kTrain);
  EXPECT_EQ(c.predictor.kind, PredictorSpec::Kind::kOracle);

  const auto t = Parse({{"manifest", "m.json"},
                        {"transforms", {{{"kind", "pixel-swap"}}, {{"kind", "context-mask"}}}}});
  EXPECT_EQ(t.transforms[0].replicates, 3);
  EXPECT_EQ(t.transforms[0].grid.size(), 11u);
  EXPECT_EQ(t.transforms[1].grid, std::vector<double>{1.0});
}

TEST_F(SweepTest, SeedFallsBackToEnvironment) {
  json doc = BaseConfig();
  doc.erase("seed");
  setenv("EO_DISTORT_SEED", "777", 1);
  EXPECT_EQ(Parse(doc).seed, 777u);
  setenv("EO_DISTORT_SEED", "abc", 1);
  EXPECT_EQ(CodeOf([&] { Parse(doc); }), ErrorCode::kMalformedConfig);
  unsetenv("EO_DISTORT_SEED");
  EXPECT_EQ(Parse(doc).seed, 0u);
}

TEST_F(SweepTest, RejectsInvalidConfigs) {
  const std::vector<std::function<void(json&)>> breakers{
      [](json& d) { d["bogus"] = 1; },
      [](json& d) { d.erase("manifest"); },
      [](json& d) { d["transforms"][0]["grid"] = {0.5, 0.2}; },
      [](json& d) { d["transforms"][0]["grid"] = {0.0, 1.5}; },
      [](json& d) { d["transforms"][0]["grid"] = json::array(); },
      [](json& d) { d["transforms"][0]["replicates"] = 3; },
      [](json& d) { d["transforms"][1] = d["transforms"][0]; },
      [](json& d) { d["transforms"][0]["kind"] = "blur"; },
      [](json& d) { d["transforms"][0] = {{"kind", "color-dup"}}; },
      [](json& d) { d["transforms"][0]["channel"] = "R"; },
      [](json& d) { d["predictor"] = {{"kind", "external"}, {"command", "run {input_dir}"}}; },
      [](json& d) { d["predictor"] = {{"kind", "variance"}, {"threshold", 1},
                                      {"window", 4}, {"low_class", 1}, {"high_class", 2}}; },
      [](json& d) { d["predictor"] = {{"kind", "nearest-color"}, {"centroids", json::object()}}; },
      [](json& d) { d["predictor"] = {{"kind", "oracle"}, {"extra", true}}; },
      [](json& d) { d["fill"] = {{"means", {1, 2}}}; },
      [](json& d) { d["split"] = "dev"; },
      [](json& d) { d["jobs"] = -1; },
      [](json& d) { d["max_external"] = 0; },
      [](json& d) { d["classes"] = {300}; },
  };
  for (std::size_t i = 0; i < breakers.size(); ++i) {
    json doc = BaseConfig();
    breakers[i](doc);
    EXPECT_EQ(CodeOf([&] { Parse(doc); }), ErrorCode::kMalformedConfig) << "case " << i;
  }
  EXPECT_EQ(CodeOf([&] { ParseSweepConfig("{", dir_.path()); }), ErrorCode::kMalformedConfig);
}

TEST_F(SweepTest, DigestIgnoresParallelismOnly) {
  json doc = BaseConfig();
  const auto base = Parse(doc).Digest();
  doc["jobs"] = 8;
  doc["max_external"] = 4;
  EXPECT_EQ(Parse(doc).Digest(), base);
  doc["seed"] = 10;
  EXPECT_NE(Parse(doc).Digest(), base);
}

TEST_F(SweepTest, OracleGivesPerfectScoresInEveryCell) {
  const auto report = RunSweep(Parse(BaseConfig()));
  // 3 classes x (3 gray + 2x2 pixel-swap) cells.
  ASSERT_EQ(report.records.size(), 3u * (3 + 4));
  for (const auto& r : report.records) {
    ASSERT_TRUE(r.iou.has_value());
    EXPECT_EQ(*r.iou, 1.0);
    EXPECT_EQ(r.mean_iou, 1.0);
  }
  EXPECT_EQ(report.records.front().transform, "gray");
  EXPECT_EQ(report.records.front().class_name, "bare");
  EXPECT_EQ(report.provenance.config_digest, Parse(BaseConfig()).Digest());
  EXPECT_FALSE(report.provenance.started_at.empty());
}

// With a constant prediction, IoU(c) = |truth == c| / |truth != background|
// for the predicted class and 0 for the others.
TEST_F(SweepTest, ConstantPredictorMatchesHistogram) {
  json doc = BaseConfig();
  doc["predictor"] = {{"kind", "constant"}, {"class_id", 2}};
  const auto report = RunSweep(Parse(doc));
  std::map<ClassId, std::uint64_t> hist;
  for (const auto& item : items_) {
    if (item.split != Split::kVal) continue;
    for (ClassId v : item.labels.labels()) ++hist[v];
  }
  const double foreground = hist[1] + hist[2] + hist[3];
  for (const auto& r : report.records) {
    ASSERT_TRUE(r.iou.has_value());
    if (r.class_id == 2) {
      EXPECT_DOUBLE_EQ(*r.iou, hist[2] / foreground);
      EXPECT_EQ(r.true_positives, hist[2]);
    } else {
      EXPECT_EQ(*r.iou, 0.0);
      EXPECT_EQ(r.false_negatives, hist[r.class_id]);
    }
    EXPECT_DOUBLE_EQ(*r.mean_iou, hist[2] / foreground / 3.0);
  }
}

TEST_F(SweepTest, ReplicatesAreAveragedBeforeClasses) {
  json doc = BaseConfig();
  doc["transforms"] = {{{"kind", "pixel-swap"}, {"grid", {1.0}}, {"replicates", 3}}};
  doc["predictor"] = {{"kind", "variance"}, {"threshold", 3000}, {"low_class", 1},
                      {"high_class", 2}};
  const auto report = RunSweep(Parse(doc));
  ASSERT_EQ(report.records.size(), 9u);
  std::map<ClassId, double> per_class;
  for (const auto& r : report.records) per_class[r.class_id] += r.iou.value_or(0) / 3.0;
  double mean = 0;
  for (const auto& [c, v] : per_class) mean += v / per_class.size();
  for (const auto& r : report.records) EXPECT_NEAR(*r.mean_iou, mean, 1e-12);
}

TEST_F(SweepTest, ResultsIndependentOfJobsAndBatching) {
  json doc = BaseConfig();
  doc["predictor"] = {{"kind", "variance"}, {"threshold", 2500}, {"low_class", 1},
                      {"high_class", 3}};
  doc["jobs"] = 1;
  const auto a = RunSweep(Parse(doc));
  doc["jobs"] = 6;
  doc["batch_size"] = 1;
  const auto b = RunSweep(Parse(doc));
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(ToCsv(a), ToCsv(b));
}

TEST_F(SweepTest, ExternalStubReproducesOracle) {
  json doc = BaseConfig();
  const auto oracle = RunSweep(Parse(doc));
  doc["predictor"] = {{"kind", "external"}, {"command", StubCommand()},
                      {"staging_dir", "ext"}, {"timeout_s", 60}};
  doc["jobs"] = 3;
  doc["max_external"] = 2;
  doc["batch_size"] = 3;
  const auto external = RunSweep(Parse(doc));
  EXPECT_EQ(ToCsv(external), ToCsv(oracle));
  EXPECT_TRUE(fs::exists(dir_ / "ext" / "unit-000000" / "input_dir" / "batch.json"));
}

TEST_F(SweepTest, FailureCarriesTagAndPartialReport) {
  json doc = BaseConfig();
  doc["predictor"] = {{"kind", "external"},
                      {"command", "exit 5 # {input_dir} {output_dir}"},
                      {"staging_dir", "ext"}};
  doc["jobs"] = 1;
  try {
    RunSweep(Parse(doc));
    FAIL();
  } catch (const SweepError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kExternalCommandFailed);
    EXPECT_TRUE(e.is_external());
    EXPECT_NE(e.tag().find("transform=gray"), std::string::npos) << e.tag();
    EXPECT_NE(e.tag().find("image="), std::string::npos) << e.tag();
    EXPECT_TRUE(e.partial().records.empty());
  }
}

TEST_F(SweepTest, PartialReportKeepsCompletedCells) {
  json doc = BaseConfig();
  // Fails only for the fourth distinct unit.
  doc["predictor"] = {{"kind", "external"},
                      {"command", "case {input_dir} in *unit-000003*) exit 9;; esac; '" +
                                      std::string(EODISTORT_STUB_PATH) + "' --manifest '" +
                                      manifest_.string() + "' {input_dir} {output_dir}"},
                      {"staging_dir", "ext"}};
  doc["jobs"] = 1;
  try {
    RunSweep(Parse(doc));
    FAIL();
  } catch (const SweepError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kExternalCommandFailed);
    const auto& recs = e.partial().records;
    EXPECT_FALSE(recs.empty());
    EXPECT_LT(recs.size(), 21u);
    for (const auto& r : recs) EXPECT_EQ(r.iou, 1.0);
  }
}

TEST_F(SweepTest, PlanningErrors) {
  json doc = BaseConfig();
  doc["split"] = "test";
  EXPECT_EQ(CodeOf([&] { RunSweep(Parse(doc)); }), ErrorCode::kEmptySplit);
  doc = BaseConfig();
  doc["classes"] = {0};
  EXPECT_EQ(CodeOf([&] { RunSweep(Parse(doc)); }), ErrorCode::kMalformedConfig);
  doc["classes"] = {7};
  EXPECT_EQ(CodeOf([&] { RunSweep(Parse(doc)); }), ErrorCode::kMalformedConfig);
  doc = BaseConfig();
  doc["manifest"] = "missing.json";
  EXPECT_EQ(CodeOf([&] { RunSweep(Parse(doc)); }), ErrorCode::kMissingFile);
}

TEST_F(SweepTest, ContextMaskingWithOracleStaysPerfect) {
  json doc = BaseConfig();
  doc["context_masking"] = true;
  doc["transforms"].push_back({{"kind", "context-mask"}});
  const auto report = RunSweep(Parse(doc));
  EXPECT_EQ(report.records.size(), 3u * 8);
  for (const auto& r : report.records) EXPECT_EQ(r.iou, 1.0);
}

TEST_F(SweepTest, StageWritesTheDocumentedTree) {
  json doc = BaseConfig();
  doc["context_masking"] = true;
  doc["fill"] = {{"means", {10.2, 20.7, 30.5}}};
  const auto config = Parse(doc);
  const fs::path root = dir_ / "staging";
  StageSweep(config, root);

  const json marker = json::parse(testing::ReadFile(root / "sweep.json"));
  EXPECT_EQ(marker["cells"], 21);
  EXPECT_EQ(marker["images"], 4);

  const auto manifest = LoadManifest(manifest_);
  const auto val = manifest.SplitEntries(Split::kVal);
  const fs::path cell = root / "pixel-swap" / "2" / "1.000000" / "1";
  ASSERT_TRUE(fs::is_directory(cell / "output_dir"));
  EXPECT_TRUE(fs::is_empty(cell / "output_dir"));
  EXPECT_EQ(testing::ReadFile(cell / "batch.json"),
            testing::ReadFile(cell / "input_dir" / "batch.json"));
  for (std::size_t i = 0; i < val.size(); ++i) {
    DistortionSpec spec;
    spec.kind = DistortionKind::kPixelSwap;
    spec.class_id = 2;
    spec.intensity = 1.0;
    spec.seed = 9;
    spec.image_index = i;
    spec.replicate = 1;
    spec.mask_context = true;
    spec.fill = ChannelStats{10.2, 20.7, 30.5, 0};
    const auto expected = Apply(LoadImage(val[i].image_path), LoadLabels(val[i].label_path), spec);
    EXPECT_EQ(LoadImage(cell / "input_dir" / (val[i].id() + ".png")), expected);
  }
  // Replicates draw different permutations.
  EXPECT_NE(testing::ReadFile(cell / "input_dir" / "tile0.png"),
            testing::ReadFile(root / "pixel-swap" / "2" / "1.000000" / "0" / "input_dir" /
                              "tile0.png"));
}

TEST_F(SweepTest, CollectChecksCompletenessAndConfig) {
  const auto config = Parse(BaseConfig());
  const fs::path root = dir_ / "staging";
  StageSweep(config, root);
  try {
    CollectSweep(config, root);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingPrediction);
    EXPECT_NE(std::string(e.what()).find("84 missing"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("gray/1/0.000000/0/output_dir/tile0"),
              std::string::npos);
  }
  json other = BaseConfig();
  other["seed"] = 10;
  EXPECT_EQ(CodeOf([&] { CollectSweep(Parse(other), root); }), ErrorCode::kMalformedConfig);
  EXPECT_EQ(CodeOf([&] { CollectSweep(config, dir_ / "nowhere"); }), ErrorCode::kMissingFile);
}

TEST_F(SweepTest, StageThenStubThenCollectMatchesRunSweep) {
  const auto config = Parse(BaseConfig());
  const fs::path root = dir_ / "staging";
  StageSweep(config, root);
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.path().filename() != "input_dir") continue;
    const auto cell = entry.path().parent_path();
    const std::string cmd = std::string("'") + EODISTORT_STUB_PATH + "' --manifest '" +
                            manifest_.string() + "' '" + (cell / "input_dir").string() +
                            "' '" + (cell / "output_dir").string() + "'";
    ASSERT_EQ(std::system(cmd.c_str()), 0) << cmd;
  }
  EXPECT_EQ(ToCsv(CollectSweep(config, root)), ToCsv(RunSweep(config)));
}

}  // namespace
}  // namespace eodistort
