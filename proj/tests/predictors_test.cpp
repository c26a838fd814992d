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
#include "eodistort/predictors.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "eodistort/error.hpp"
#include "json.hpp"
#include "support/test_util.hpp"

namespace eodistort {
namespace {

using nlohmann::json;
using testing::ReadFile;
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

std::string StubCommand(const std::filesystem::path& manifest, const std::string& extra = "") {
  return std::string("'") + EODISTORT_STUB_PATH + "' --manifest '" + manifest.string() + "' " +
         extra + " {input_dir} {output_dir}";
}

TEST(NearestColorTest, PicksClosestCentroidWithLowIdTies) {
  const auto handle = PredictorHandle::NearestColor(
      {{1, Rgb{0, 0, 0}}, {2, Rgb{255, 255, 255}}, {3, Rgb{10, 0, 0}}});
  // (5,0,0) is equidistant from 1 and 3: the lower id wins.
  const ImageBuffer img(3, 1, std::vector<Rgb>{{5, 0, 0}, {200, 200, 200}, {9, 0, 0}});
  const std::vector<BatchItem> batch{{"x", img}};
  const auto out = handle.PredictBatch(batch);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].id, "x");
  EXPECT_EQ(out[0].labels, LabelMap(3, 1, std::vector<ClassId>{1, 2, 3}));
}

TEST(ConstantClassTest, FillsEveryPixel) {
  const std::vector<BatchItem> batch{{"a", ImageBuffer(4, 2)}, {"b", ImageBuffer(1, 3)}};
  const auto out = PredictorHandle::ConstantClass(6).PredictBatch(batch);
  EXPECT_EQ(out[0].labels, LabelMap(4, 2, 6));
  EXPECT_EQ(out[1].labels, LabelMap(1, 3, 6));
}

TEST(OracleTest, ReturnsRegisteredTruth) {
  const LabelMap truth(2, 2, std::vector<ClassId>{1, 2, 3, 4});
  const auto handle = PredictorHandle::Oracle({{"t", truth}});
  std::vector<BatchItem> batch{{"t", ImageBuffer(2, 2)}};
  EXPECT_EQ(handle.PredictBatch(batch)[0].labels, truth);
  batch[0].id = "other";
  EXPECT_EQ(CodeOf([&] { handle.PredictBatch(batch); }), ErrorCode::kInvalidSpec);
  batch = {{"t", ImageBuffer(3, 2)}};
  EXPECT_EQ(CodeOf([&] { handle.PredictBatch(batch); }), ErrorCode::kDimensionMismatch);
}

// For a 0/255 checkerboard every 3x3 window (clamped borders included)
// holds five of one value and four of the other: variance 255^2 * 20/81.
TEST(VarianceTest, CheckerboardOracle) {
  ImageBuffer img(7, 5);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 7; ++c) {
      const std::uint8_t v = (r + c) % 2 ? 255 : 0;
      img.at(r, c) = {v, v, v};
    }
  }
  const double var = 255.0 * 255.0 * 20.0 / 81.0;  // 16055.5...
  const std::vector<BatchItem> batch{{"c", img}};
  EXPECT_EQ(MakeVariancePredictor(var + 0.01, 3, 1, 2).PredictBatch(batch)[0].labels,
            LabelMap(7, 5, 1));
  EXPECT_EQ(MakeVariancePredictor(var - 0.01, 3, 1, 2).PredictBatch(batch)[0].labels,
            LabelMap(7, 5, 2));
}

TEST(VarianceTest, FlatImageIsLowAndChannelsAreAveraged) {
  // Only the red channel varies: mean variance is a third of its variance.
  ImageBuffer img(3, 3);
  for (std::size_t i = 0; i < 9; ++i) img[i] = {std::uint8_t(i % 2 ? 90 : 0), 7, 7};
  const std::vector<BatchItem> batch{{"f", img}};
  const double red_var = 90.0 * 90.0 * 20.0 / 81.0;
  const auto center = [&](double thr) {
    return MakeVariancePredictor(thr, 3, 1, 2).PredictBatch(batch)[0].labels.at(1, 1);
  };
  EXPECT_EQ(center(red_var / 3 + 1e-6), 1);
  EXPECT_EQ(center(red_var / 3 - 1e-6), 2);
  const std::vector<BatchItem> flat{{"g", ImageBuffer(4, 4, Rgb{3, 3, 3})}};
  EXPECT_EQ(MakeVariancePredictor(0.5, 5, 1, 2).PredictBatch(flat)[0].labels, LabelMap(4, 4, 1));
}

TEST(PredictorHandleTest, ConstructionRules) {
  EXPECT_EQ(CodeOf([] { MakeVariancePredictor(1, 4, 1, 2); }), ErrorCode::kInvalidSpec);
  EXPECT_EQ(CodeOf([] { MakeVariancePredictor(1, 1, 1, 2); }), ErrorCode::kInvalidSpec);
  EXPECT_EQ(CodeOf([] { PredictorHandle::External("run {input_dir}", "/tmp/x"); }),
            ErrorCode::kInvalidSpec);
  EXPECT_EQ(CodeOf([] { PredictorHandle::External("{input_dir} {output_dir}", ""); }),
            ErrorCode::kInvalidSpec);
  EXPECT_EQ(CodeOf([] { PredictorHandle::NearestColor({}); }), ErrorCode::kInvalidSpec);
  EXPECT_EQ(CodeOf([] { PredictorHandle(OraclePredictor{}); }), ErrorCode::kInvalidSpec);
  EXPECT_EQ(PredictorHandle::ConstantClass(1).kind_name(), "constant");
  EXPECT_TRUE(PredictorHandle::External("{input_dir}{output_dir}", "/tmp/x").is_external());
  EXPECT_EQ(CodeOf([] { PredictorHandle::ConstantClass(1).PredictBatch({}); }),
            ErrorCode::kInvalidSpec);
}

TEST(BatchProtocolTest, WriteBatchLayoutAndJson) {
  TempDir dir;
  std::mt19937_64 gen(3);
  const std::vector<BatchItem> items{{"alpha", testing::RandomImage(5, 3, gen)},
                                     {"beta", testing::RandomImage(2, 7, gen)}};
  const auto staged = WriteBatch(dir / "in", items);
  ASSERT_EQ(staged.size(), 2u);
  EXPECT_EQ(LoadImage(dir / "in" / "alpha.png"), items[0].image);
  EXPECT_EQ(LoadImage(dir / "in" / "beta.png"), items[1].image);

  const json doc = json::parse(ReadFile(dir / "in" / "batch.json"));
  ASSERT_EQ(doc.at("images").size(), 2u);
  EXPECT_EQ(doc["images"][0]["id"], "alpha");
  EXPECT_EQ(doc["images"][0]["file"], "alpha.png");
  EXPECT_EQ(doc["images"][0]["width"], 5);
  EXPECT_EQ(doc["images"][0]["height"], 3);
  EXPECT_EQ(doc["images"][1]["id"], "beta");

  const auto back = ReadBatchJson(dir / "in" / "batch.json");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].id, "beta");
  EXPECT_EQ(back[1].width, 2u);
  EXPECT_EQ(back[1].height, 7u);
}

TEST(BatchProtocolTest, MalformedBatchJson) {
  TempDir dir;
  testing::WriteFile(dir / "batch.json", R"({"images": [{"id": "a"}]})");
  EXPECT_EQ(CodeOf([&] { ReadBatchJson(dir / "batch.json"); }),
            ErrorCode::kMalformedManifest);
  EXPECT_EQ(CodeOf([&] { ReadBatchJson(dir / "none.json"); }), ErrorCode::kMissingFile);
}

TEST(BatchProtocolTest, CollectListsEveryMissingId) {
  TempDir dir;
  std::filesystem::create_directories(dir / "out");
  SaveLabels(LabelMap(2, 2, 1), dir / "out" / "b.png");
  const std::vector<StagedImage> staged{{"a", 2, 2}, {"b", 2, 2}, {"c", 2, 2}};
  try {
    CollectBatch(dir / "out", staged);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingPrediction);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("a, c"), std::string::npos) << msg;
  }
  const std::vector<StagedImage> wrong{{"b", 3, 2}};
  EXPECT_EQ(CodeOf([&] { CollectBatch(dir / "out", wrong); }), ErrorCode::kDimensionMismatch);
}

TEST(ExpandCommandTest, QuotesPaths) {
  EXPECT_EQ(ExpandCommand("run {input_dir} -> {output_dir} {input_dir}", "/a b", "/it's"),
            "run '/a b' -> '/it'\\''s' '/a b'");
}

TEST(RunShellCommandTest, ExitStatusAndTimeout) {
  EXPECT_EQ(RunShellCommand("true", std::chrono::seconds(5)), 0);
  EXPECT_EQ(RunShellCommand("exit 7", std::chrono::seconds(5)), 7);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_EQ(CodeOf([] { RunShellCommand("sleep 30", std::chrono::seconds(1)); }),
            ErrorCode::kExternalTimeout);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(5));
  EXPECT_EQ(CodeOf([] { RunShellCommand("kill -9 $$", std::chrono::seconds(5)); }),
            ErrorCode::kExternalCommandFailed);
}

class ExternalPredictorTest : public ::testing::Test {
 protected:
  void SetUp() override {
    items_ = testing::SmallSuite(17);
    manifest_ = testing::WriteDataset(dir_ / "data", items_, testing::SmallClassTable());
    for (const auto& item : items_) batch_.push_back({item.id, item.image});
  }

  TempDir dir_;
  std::vector<testing::SyntheticImage> items_;
  std::filesystem::path manifest_;
  std::vector<BatchItem> batch_;
};

TEST_F(ExternalPredictorTest, StubRoundTripsGroundTruth) {
  const auto handle = PredictorHandle::External(StubCommand(manifest_), dir_ / "stage");
  const auto preds = handle.PredictBatch(batch_);
  ASSERT_EQ(preds.size(), items_.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(preds[i].id, items_[i].id);
    EXPECT_EQ(preds[i].labels, items_[i].labels);
  }
  // The protocol tree is left in place for inspection.
  EXPECT_TRUE(std::filesystem::exists(dir_ / "stage" / "input_dir" / "batch.json"));
  EXPECT_TRUE(std::filesystem::exists(dir_ / "stage" / "output_dir" / "tile0.png"));
}

TEST_F(ExternalPredictorTest, StaleOutputsDoNotLeakIntoTheNextBatch) {
  const auto good = PredictorHandle::External(StubCommand(manifest_), dir_ / "stage");
  good.PredictBatch(batch_);
  const auto skipping =
      PredictorHandle::External(StubCommand(manifest_, "--skip tile2"), dir_ / "stage");
  try {
    skipping.PredictBatch(batch_);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingPrediction);
    EXPECT_NE(std::string(e.what()).find("tile2"), std::string::npos);
  }
}

TEST_F(ExternalPredictorTest, FailuresMapToExternalCodes) {
  const auto failing = PredictorHandle::External("exit 3 # {input_dir} {output_dir}",
                                                 dir_ / "s1");
  EXPECT_EQ(CodeOf([&] { failing.PredictBatch(batch_); }), ErrorCode::kExternalCommandFailed);

  const auto slow = PredictorHandle::External("sleep 20 # {input_dir} {output_dir}",
                                              dir_ / "s2", std::chrono::seconds(1));
  EXPECT_EQ(CodeOf([&] { slow.PredictBatch(batch_); }), ErrorCode::kExternalTimeout);

  const std::vector<BatchItem> one{{"tile0", ImageBuffer(3, 3)}};
  const auto wrong_size = PredictorHandle::External(StubCommand(manifest_), dir_ / "s3");
  EXPECT_EQ(CodeOf([&] { wrong_size.PredictBatch(one); }), ErrorCode::kDimensionMismatch);
}

}  // namespace
}  // namespace eodistort
