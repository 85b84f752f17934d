#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mgkd/data.hpp"
#include "support.hpp"

namespace mgkd::data {
namespace {

using testing::small_synthetic;

TwoPhaseDataset tiny(std::vector<double> pre, std::vector<std::int64_t> ts) {
  TwoPhaseDataset ds;
  const auto n = static_cast<Eigen::Index>(pre.size());
  ds.x_pre.resize(n, 1);
  ds.x_in.resize(n, 1);
  ds.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.x_pre(i, 0) = pre[static_cast<std::size_t>(i)];
    ds.x_in(i, 0) = 2.0 * pre[static_cast<std::size_t>(i)];
    ds.y[i] = i % 2 == 0 ? 1.0 : 0.0;
    ds.user_id.push_back(i);
  }
  ds.timestamp = std::move(ts);
  ds.split.assign(pre.size(), Split::kTrain);
  return ds;
}

TEST(Generator, CalibratesPositiveRate) {
  SyntheticConfig cfg;
  ASSERT_EQ(cfg.n, 50'000u);
  const auto ds = generate_synthetic(cfg);
  ASSERT_EQ(ds.size(), 50'000u);
  EXPECT_EQ(ds.d_pre(), 20u);
  EXPECT_EQ(ds.d_in(), 20u);
  const double rate = ds.y.mean();
  EXPECT_GE(rate, 0.095);
  EXPECT_LE(rate, 0.105);
}

TEST(Generator, CalibratesOtherRates) {
  for (double target : {0.05, 0.072, 0.3}) {
    auto cfg = small_synthetic(3, 20'000);
    cfg.positive_rate = target;
    EXPECT_NEAR(generate_synthetic(cfg).y.mean(), target, 0.005 + 3 * std::sqrt(target * (1 - target) / 20'000));
  }
}

TEST(Generator, DeterministicForFixedSeed) {
  const auto a = generate_synthetic(small_synthetic(5));
  const auto b = generate_synthetic(small_synthetic(5));
  EXPECT_TRUE(a == b);
  const auto c = generate_synthetic(small_synthetic(6));
  EXPECT_FALSE(a == c);
}

TEST(Generator, ZeroGainMakesWindowsIdentical) {
  auto cfg = small_synthetic(2);
  cfg.window_gain = 0.0;
  cfg.window_days = 30;
  const auto a = generate_synthetic(cfg);
  cfg.window_days = 60;
  const auto b = generate_synthetic(cfg);
  cfg.window_days = 90;
  const auto c = generate_synthetic(cfg);
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(b == c);
}

TEST(Generator, WindowsAreOrderedBySignal) {
  SyntheticConfig cfg;
  cfg.window_days = 30;
  const double s30 = cfg.snr_in();
  cfg.window_days = 60;
  const double s60 = cfg.snr_in();
  cfg.window_days = 90;
  const double s90 = cfg.snr_in();
  EXPECT_GT(s90, s60);
  EXPECT_GT(s60, s30);
  EXPECT_GT(s30, cfg.snr_pre);
  EXPECT_DOUBLE_EQ(s60, cfg.snr_in_base * (1 + cfg.window_gain * 2));
}

TEST(Generator, WindowsShareEverythingButInServiceSignal) {
  auto cfg = small_synthetic(2);
  cfg.window_days = 30;
  const auto a = generate_synthetic(cfg);
  cfg.window_days = 90;
  const auto b = generate_synthetic(cfg);
  EXPECT_EQ(a.x_pre, b.x_pre);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.timestamp, b.timestamp);
  EXPECT_NE(a.x_in, b.x_in);
}

TEST(Generator, RejectsInvalidConfig) {
  auto cfg = small_synthetic();
  cfg.window_days = 45;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = small_synthetic();
  cfg.snr_in_base = 0.01;
  cfg.window_gain = 0.0;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = small_synthetic();
  cfg.positive_rate = 1.0;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
}

TEST(Delimited, RoundTripIsExact) {
  const auto ds = generate_synthetic(small_synthetic(1, 1000));
  std::stringstream buf;
  write_delimited(ds, buf);
  const auto back = read_delimited(buf, {6, 6});
  EXPECT_EQ(back.x_pre, ds.x_pre);
  EXPECT_EQ(back.x_in, ds.x_in);
  EXPECT_EQ(back.y, ds.y);
  EXPECT_EQ(back.timestamp, ds.timestamp);
  EXPECT_EQ(back.user_id, ds.user_id);
}

TEST(Delimited, FileRoundTrip) {
  testing::TempDir dir("data");
  const auto ds = generate_synthetic(small_synthetic(1, 200));
  save_delimited(ds, dir / "d.csv");
  const auto back = load_delimited(dir / "d.csv");
  EXPECT_EQ(back.x_pre, ds.x_pre);
  EXPECT_EQ(back.x_in, ds.x_in);
  EXPECT_THROW(load_delimited(dir / "missing.csv"), MissingArtifactError);
}

TEST(Delimited, HeaderOnlyGivesEmptyDataset) {
  std::istringstream in("user_id,ts,y,pre_0,pre_1,in_0\n");
  const auto ds = read_delimited(in);
  EXPECT_EQ(ds.size(), 0u);
  EXPECT_EQ(ds.d_pre(), 2u);
  EXPECT_EQ(ds.d_in(), 1u);
}

TEST(Delimited, PreServiceOnlyFileIsAccepted) {
  std::istringstream in("user_id,ts,y,pre_0\n1,10,0,0.5\n2,11,1,-0.5\n");
  const auto ds = read_delimited(in);
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_FALSE(ds.has_in_service());
}

TEST(Delimited, BadLabelNamesTheLine) {
  std::istringstream in("user_id,ts,y,pre_0\n1,10,0,0.5\n2,11,2,0.25\n");
  try {
    read_delimited(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Delimited, MalformedInputs) {
  std::istringstream missing("user_id,y,pre_0\n");
  EXPECT_THROW(read_delimited(missing), ParseError);
  std::istringstream text("user_id,ts,y,pre_0\n1,10,0,abc\n");
  EXPECT_THROW(read_delimited(text), ParseError);
  std::istringstream short_row("user_id,ts,y,pre_0\n1,10,0\n");
  EXPECT_THROW(read_delimited(short_row), ParseError);
  std::istringstream schema("user_id,ts,y,pre_0\n");
  EXPECT_THROW(read_delimited(schema, {2, std::nullopt}), ParseError);
}

TEST(Split, EightyTenTen) {
  std::vector<double> pre(100);
  std::vector<std::int64_t> ts(100);
  for (int i = 0; i < 100; ++i) {
    pre[static_cast<std::size_t>(i)] = i;
    ts[static_cast<std::size_t>(i)] = (i * 37) % 100;  // shuffled distinct stamps
  }
  const auto ds = temporal_split(tiny(pre, ts), 0.1, 0.1);
  EXPECT_EQ(ds.rows(Split::kTrain).size(), 80u);
  EXPECT_EQ(ds.rows(Split::kValid).size(), 10u);
  EXPECT_EQ(ds.rows(Split::kTest).size(), 10u);
  EXPECT_TRUE(std::is_sorted(ds.timestamp.begin(), ds.timestamp.end()));
  for (std::size_t i = 0; i < 100; ++i) {
    // Rows stay aligned after sorting.
    EXPECT_EQ(ds.x_in(static_cast<Eigen::Index>(i), 0), 2.0 * ds.x_pre(static_cast<Eigen::Index>(i), 0));
  }
}

TEST(Split, TimeOrderingAcrossSplits) {
  const auto ds = temporal_split(generate_synthetic(small_synthetic(4)), 0.1, 0.1);
  std::int64_t max_train = INT64_MIN, min_valid = INT64_MAX, max_valid = INT64_MIN, min_test = INT64_MAX;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto t = ds.timestamp[i];
    switch (ds.split[i]) {
      case Split::kTrain: max_train = std::max(max_train, t); break;
      case Split::kValid:
        min_valid = std::min(min_valid, t);
        max_valid = std::max(max_valid, t);
        break;
      case Split::kTest: min_test = std::min(min_test, t); break;
    }
  }
  EXPECT_LT(max_train, min_valid);
  EXPECT_LT(max_valid, min_test);
}

std::vector<double> iota_values(int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

TEST(Split, TiesStayInTheEarlierSplit) {
  std::vector<std::int64_t> ts{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 15, 17, 18, 19};
  const auto ds = temporal_split(tiny(iota_values(20), ts), 0.1, 0.1);
  // Row 16 would open the valid split by count, but it shares ts 15 with a train row.
  EXPECT_EQ(ds.split[16], Split::kTrain);
  EXPECT_EQ(ds.split[17], Split::kValid);
  EXPECT_EQ(ds.split[18], Split::kTest);
  EXPECT_EQ(ds.rows(Split::kValid).size(), 1u);
  std::fill(ts.begin() + 15, ts.end(), 15);
  EXPECT_THROW(temporal_split(tiny(iota_values(20), ts), 0.1, 0.1), SplitError);
}

TEST(Split, AllEqualTimestampsCannotBeSplit) {
  EXPECT_THROW(temporal_split(tiny({1, 2, 3, 4, 5}, {7, 7, 7, 7, 7}), 0.2, 0.2), SplitError);
}

TEST(Split, PureFunctionOfInputs) {
  const auto base = generate_synthetic(small_synthetic(8));
  EXPECT_TRUE(temporal_split(base, 0.15, 0.1) == temporal_split(base, 0.15, 0.1));
}

TEST(Split, InvalidFractions) {
  const auto base = tiny({1, 2, 3, 4}, {1, 2, 3, 4});
  EXPECT_THROW(temporal_split(base, 0.0, 0.2), ConfigError);
  EXPECT_THROW(temporal_split(base, 0.5, 0.5), ConfigError);
}

TEST(Standardize, ClosedFormPopulationStd) {
  const auto ds = tiny({1, 2, 3}, {1, 2, 3});
  const auto out = apply_standardize(ds, fit_standardize(ds));
  const double z = std::sqrt(1.5);
  EXPECT_NEAR(out.x_pre(0, 0), -z, 1e-12);
  EXPECT_NEAR(out.x_pre(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(out.x_pre(2, 0), z, 1e-12);
  EXPECT_NEAR(z, 1.2247, 1e-4);
}

TEST(Standardize, ConstantColumnMapsToZero) {
  const auto ds = tiny({4, 4, 4}, {1, 2, 3});
  const auto scaler = fit_standardize(ds);
  EXPECT_EQ(scaler.pre_std[0], 1.0);
  EXPECT_TRUE(apply_standardize(ds, scaler).x_pre.isZero(0.0));
}

TEST(Standardize, TrainColumnsAreUnitAndRefitIsIdentity) {
  const auto ds = testing::small_dataset(9);
  const auto train = ds.subset(Split::kTrain);
  const auto again = fit_standardize(ds);
  for (Eigen::Index j = 0; j < train.x_pre.cols(); ++j) {
    const auto col = train.x_pre.col(j).array();
    EXPECT_NEAR(col.mean(), 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt((col - col.mean()).square().mean()), 1.0, 1e-9);
    EXPECT_NEAR(again.pre_mean[j], 0.0, 1e-9);
    EXPECT_NEAR(again.pre_std[j], 1.0, 1e-9);
    EXPECT_NEAR(again.in_std[j], 1.0, 1e-9);
  }
}

TEST(Standardize, StatisticsUseTrainRowsOnly) {
  auto ds = temporal_split(generate_synthetic(small_synthetic(10)), 0.1, 0.1);
  // Shift the held-out rows: a leaky fit would move with them.
  for (std::size_t r : ds.rows(Split::kTest)) ds.x_pre.row(static_cast<Eigen::Index>(r)).array() += 5.0;
  const auto fitted = fit_standardize(ds);
  auto all_train = ds;
  std::fill(all_train.split.begin(), all_train.split.end(), Split::kTrain);
  const auto leaky = fit_standardize(all_train);
  EXPECT_GT((fitted.pre_mean - leaky.pre_mean).cwiseAbs().minCoeff(), 0.1);
  const auto clean = fit_standardize(temporal_split(generate_synthetic(small_synthetic(10)), 0.1, 0.1));
  EXPECT_EQ(fitted.pre_mean, clean.pre_mean);
}

}  // namespace
}  // namespace mgkd::data
