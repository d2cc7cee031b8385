#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "microflow/io/kv_config.hpp"
#include "microflow/io/normalize.hpp"
#include "microflow/io/orderflow.hpp"
#include "microflow/io/split.hpp"
#include "microflow/io/synthetic.hpp"
#include "microflow/lob/order_book.hpp"
#include "support/random_orders.hpp"

using namespace microflow;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("microflow_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
  fs::path path_;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

SynthConfig short_config() {
  SynthConfig cfg;
  cfg.session_ms = 10 * 60 * 1000;
  return cfg;
}

}  // namespace

TEST(ParseOrderflow, ThreeRowFixture) {
  TempDir dir;
  write_text(dir.file("day.csv"),
             "time_ms,order_id,kind,price_ticks,size\n"
             "100,1,A,1000,5\n"
             "150,2,A,999,-3\n"
             "200,1,C,0,0\n");
  auto day = io::parse_orderflow(dir.file("day.csv"));
  ASSERT_EQ(day.orders.size(), 3u);
  EXPECT_EQ(day.orders[0], Order::add(1, 1000, 5, 100));
  EXPECT_EQ(day.orders[1], Order::add(2, 999, -3, 150));
  EXPECT_EQ(day.orders[2].kind, OrderKind::Cancel);
}

TEST(ParseOrderflow, ZeroSizeNamesTheRow) {
  TempDir dir;
  write_text(dir.file("day.csv"),
             "time_ms,order_id,kind,price_ticks,size\n"
             "100,1,A,1000,5\n"
             "150,2,A,999,0\n");
  try {
    io::parse_orderflow(dir.file("day.csv"));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ParseOrderflow, ShuffledTimestampsAreFormatError) {
  TempDir dir;
  write_text(dir.file("day.csv"),
             "time_ms,order_id,kind,price_ticks,size\n"
             "300,1,A,1000,5\n"
             "100,2,A,999,-3\n");
  EXPECT_THROW(io::parse_orderflow(dir.file("day.csv")), FormatError);
}

TEST(ParseOrderflow, BadHeaderAndMalformedRows) {
  TempDir dir;
  write_text(dir.file("a.csv"), "time,id\n1,2\n");
  EXPECT_THROW(io::parse_orderflow(dir.file("a.csv")), ParseError);
  write_text(dir.file("b.csv"), "time_ms,order_id,kind,price_ticks,size\n1,2,X,3,4\n");
  EXPECT_THROW(io::parse_orderflow(dir.file("b.csv")), ParseError);
  write_text(dir.file("c.csv"), "time_ms,order_id,kind,price_ticks,size\n1,2,A,abc,4\n");
  EXPECT_THROW(io::parse_orderflow(dir.file("c.csv")), ParseError);
}

TEST(ParseOrderflow, DropCancelsFlag) {
  TempDir dir;
  write_text(dir.file("day.csv"),
             "time_ms,order_id,kind,price_ticks,size\n"
             "100,1,A,1000,5\n"
             "200,1,C,0,0\n");
  io::ParseOptions opt;
  opt.drop_cancels = true;
  EXPECT_EQ(io::parse_orderflow(dir.file("day.csv"), opt).orders.size(), 1u);
}

TEST(ParseOrderflow, RoundTripOnRandomStreams) {
  TempDir dir;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    DayStream day;
    day.instrument = "X" + std::to_string(seed);
    day.date = "2024-03-0" + std::to_string(seed + 1);
    day.orders = test_support::random_order_stream(500, seed);
    day.t0 = 0;
    day.session_ms = day.orders.back().time + 10;
    io::write_orderflow(dir.file("rt.csv"), day);
    EXPECT_EQ(io::parse_orderflow(dir.file("rt.csv")), day);
  }
}

TEST(TransactionsCsv, RoundTrip) {
  TempDir dir;
  std::vector<Transaction> txs{{1003750, -8, 2}, {1000000, 5, 9}};
  io::write_transactions(dir.file("tx.csv"), txs);
  EXPECT_EQ(io::parse_transactions(dir.file("tx.csv")), txs);
  EXPECT_EQ(read_text(dir.file("tx.csv")), "time_ms,price_x10000,size\n2,1003750,-8\n9,1000000,5\n");
}

TEST(Synthetic, SameSeedGivesByteIdenticalFiles) {
  TempDir dir;
  auto cfg = short_config();
  cfg.anomaly_fraction = 0.05;
  auto a = generate_synthetic_day(cfg, 42);
  auto b = generate_synthetic_day(cfg, 42);
  io::write_orderflow(dir.file("a.csv"), a.stream);
  io::write_orderflow(dir.file("b.csv"), b.stream);
  EXPECT_EQ(read_text(dir.file("a.csv")), read_text(dir.file("b.csv")));
  EXPECT_EQ(a.labels, b.labels);
  auto c = generate_synthetic_day(cfg, 43);
  EXPECT_NE(a.stream.orders, c.stream.orders);
}

TEST(Synthetic, ZeroAnomalyFractionLabelsAllZero) {
  auto day = generate_synthetic_day(short_config(), 1);
  EXPECT_EQ(day.labels.size(), 150u);
  for (auto l : day.labels) EXPECT_EQ(l, 0);
}

TEST(Synthetic, TwoPercentOfFourHourSessionIs72Segments) {
  SynthConfig cfg;
  cfg.anomaly_fraction = 0.02;
  Rng rng(3);
  auto labels = plant_anomaly_windows(cfg.segment_count(), cfg.anomaly_fraction, cfg.anomaly_window_segments, rng);
  EXPECT_EQ(labels.size(), 3600u);
  std::size_t count = 0;
  for (auto l : labels) count += l;
  EXPECT_EQ(count, 72u);
}

TEST(Synthetic, NonPositiveRateIsConfigError) {
  auto cfg = short_config();
  cfg.limit_rate = 0.0;
  EXPECT_THROW(generate_synthetic_day(cfg, 1), ConfigError);
  cfg = short_config();
  cfg.cancel_rate = -1.0;
  EXPECT_THROW(generate_synthetic_day(cfg, 1), ConfigError);
}

TEST(Synthetic, StreamIsValidAndReplaysWithoutCrossing) {
  auto cfg = short_config();
  cfg.anomaly_fraction = 0.05;
  auto day = generate_synthetic_day(cfg, 9);
  EXPECT_NO_THROW(validate(day.stream));
  OrderBook book;
  std::vector<Transaction> txs;
  for (const auto& o : day.stream.orders) {
    book.process(o, txs);  // throws InvariantError on a crossed book
    ASSERT_FALSE(book.levels().crossed());
  }
  EXPECT_GT(txs.size(), 50u);
}

TEST(ZScore, ConstantFeatureDropped) {
  nn::Tensor x = nn::Tensor::from_rows({{1, 5}, {2, 5}, {3, 5}});
  auto r = zscore_fit_apply(x);
  EXPECT_EQ(r.stats.dropped, (std::vector<std::size_t>{1}));
  EXPECT_EQ(r.train.cols(), 1u);
}

TEST(ZScore, HandArithmetic) {
  nn::Tensor x = nn::Tensor::from_rows({{1}, {2}, {3}});
  auto r = zscore_fit_apply(x, {nn::Tensor::from_rows({{2}})});
  const double sigma = std::sqrt(2.0 / 3.0);  // population std of {1,2,3}
  EXPECT_DOUBLE_EQ(r.stats.mean[0], 2.0);
  EXPECT_DOUBLE_EQ(r.stats.stddev[0], sigma);
  EXPECT_DOUBLE_EQ(r.train(0, 0), -1.0 / sigma);
  EXPECT_DOUBLE_EQ(r.train(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(r.train(2, 0), 1.0 / sigma);
  EXPECT_DOUBLE_EQ(r.others[0](0, 0), 0.0);
}

TEST(ZScore, NormalizedTrainingHasUnitMoments) {
  Rng rng(5);
  nn::Tensor x(200, 6);
  for (std::size_t r = 0; r < 200; ++r) {
    for (std::size_t c = 0; c < 6; ++c) x(r, c) = rng.normal(10.0 * double(c), 1.0 + double(c));
  }
  auto z = zscore_fit_apply(x).train;
  for (std::size_t c = 0; c < 6; ++c) {
    double m = 0, s = 0;
    for (std::size_t r = 0; r < 200; ++r) m += z(r, c);
    m /= 200;
    for (std::size_t r = 0; r < 200; ++r) s += (z(r, c) - m) * (z(r, c) - m);
    s = std::sqrt(s / 200);
    EXPECT_LT(std::fabs(m), 1e-9);
    EXPECT_LT(std::fabs(s - 1.0), 1e-9);
  }
}

TEST(ZScore, EmptyTrainRejected) { EXPECT_THROW(zscore_fit(nn::Tensor(0, 3)), ConfigError); }

TEST(SplitDays, PaperRatio) {
  EXPECT_EQ(split_counts(12), (SplitCounts{7, 1, 4}));
  EXPECT_EQ(split_counts(24), (SplitCounts{14, 2, 8}));
  EXPECT_EQ(split_counts(60), (SplitCounts{35, 5, 20}));
  EXPECT_THROW(split_counts(3), ConfigError);
  std::vector<int> days{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  auto s = split_days(days);
  EXPECT_EQ(s.train.back(), 6);
  EXPECT_EQ(s.valid, (std::vector<int>{7}));
  EXPECT_EQ(s.test.front(), 8);
}

TEST(KvConfig, ParsesCommentsAndOverrides) {
  auto kv = io::parse_kv_text("# comment\n\nmu = 0.05\nmask.mode=hybrid\nmu=0.02\n", "cfg");
  EXPECT_EQ(kv.at("mu"), "0.02");
  EXPECT_EQ(kv.at("mask.mode"), "hybrid");
  EXPECT_THROW(io::parse_kv_text("novalue\n", "cfg"), ParseError);
}
