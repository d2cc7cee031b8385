#include <gtest/gtest.h>

#include <cmath>

#include "microflow/io/synthetic.hpp"
#include "microflow/model/context_encoder.hpp"
#include "microflow/nn/grad_check.hpp"

using namespace microflow;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = 0.0, double hi = 2.0) {
  Tensor t(r, c);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

DayVectors random_day(std::size_t n, std::size_t k, Rng& rng) {
  DayVectors d;
  d.k_levels = k;
  d.boundary = random_tensor(n, 2 * k, rng);
  d.real = random_tensor(n, 2 * k, rng);
  d.delta_bid = random_tensor(n, 2 * k, rng);
  d.delta_ask = random_tensor(n, 2 * k, rng);
  d.mids.assign(n, 100.0);
  return d;
}

std::vector<DayVectors> synthetic_days(std::size_t n_days, std::uint64_t seed, std::size_t k) {
  std::vector<DayVectors> out;
  SynthConfig cfg;
  cfg.session_ms = 20 * 60 * 1000;
  for (std::size_t d = 0; d < n_days; ++d) {
    auto day = generate_synthetic_day(cfg, derive_seed(seed, d));
    out.push_back(vectorize_day(segment_day(day.stream, {.delta_t_ms = 4000}), k));
  }
  return out;
}

}  // namespace

TEST(EncodeHistory, ZeroWeightsAndInputsGiveZeroState) {
  nn::ModelParams p;
  Rng rng(1);
  ContextConfig cfg{.k_levels = 3, .m_history = 4, .hidden = 5};
  auto enc = ContextEncoder::create(p, cfg, rng);
  for (auto& e : p.entries()) e.value.fill(0.0);
  Tape t(&p, false);
  std::vector<Var> steps;
  for (int j = 0; j < 4; ++j) steps.push_back(t.constant(Tensor(2, 6)));
  auto s = enc.encode_history(t, steps, steps);
  for (double v : s.h_buy.value().values()) EXPECT_EQ(v, 0.0);
  for (double v : s.h_sell.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(EncodeHistory, StateWidthIndependentOfK) {
  for (std::size_t k : {1u, 5u, 10u}) {
    nn::ModelParams p;
    Rng rng(2);
    auto enc = ContextEncoder::create(p, {.k_levels = k, .m_history = 3}, rng);
    Tape t(&p, false);
    std::vector<Var> steps;
    for (int j = 0; j < 3; ++j) steps.push_back(t.constant(random_tensor(1, 2 * k, rng)));
    auto s = enc.encode_history(t, steps, steps);
    EXPECT_EQ(s.h_buy.cols(), 64u);
    EXPECT_EQ(s.h_sell.cols(), 64u);
  }
}

TEST(EncodeHistory, SingleStepMatchesHandEvaluatedCell) {
  // One input of width 2, hidden width 1: gates are scalars.
  nn::ModelParams p;
  Rng rng(3);
  auto cell = nn::LstmCell::create(p, "c", 2, 1, rng);
  p.value(cell.w_input) = Tensor::from_rows({{0.5, -0.3, 0.8, 0.1}, {0.2, 0.4, -0.6, 0.7}});
  p.value(cell.bias) = Tensor::row({0.1, 0.2, 0.0, -0.1});
  Tape t(&p, false);
  auto s = cell.step(t, t.constant(Tensor::row({1.0, 2.0})), cell.zero_state(t, 1));
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  const double zi = 0.5 + 0.4 + 0.1, zg = 0.8 - 1.2, zo = 0.1 + 1.4 - 0.1;
  const double c = sig(zi) * std::tanh(zg);  // forget gate multiplies a zero cell
  EXPECT_NEAR(s.c.value().item(), c, 1e-15);
  EXPECT_NEAR(s.h.value().item(), sig(zo) * std::tanh(c), 1e-15);
}

TEST(Generate, ShapesNonnegativityAndCrossConditioning) {
  nn::ModelParams p;
  Rng rng(4);
  auto enc = ContextEncoder::create(p, {.k_levels = 10, .m_history = 2}, rng);
  Tape t(&p, false);
  Var hb = t.constant(random_tensor(3, 64, rng, -1, 1));
  Var hs = t.constant(random_tensor(3, 64, rng, -1, 1));
  auto [db, ds] = enc.generate(t, {hb, hs});
  EXPECT_EQ(db.cols(), 20u);
  EXPECT_EQ(ds.cols(), 20u);
  for (double v : db.value().values()) EXPECT_GE(v, 0.0);
  for (double v : ds.value().values()) EXPECT_GE(v, 0.0);
  auto [db_swapped, ds_swapped] = enc.generate(t, {hs, hb});
  EXPECT_FALSE(db.value() == db_swapped.value());
}

TEST(Generate, OutputsNonnegativeForExtremeInputs) {
  nn::ModelParams p;
  Rng rng(5);
  auto enc = ContextEncoder::create(p, {.k_levels = 4, .m_history = 2}, rng);
  Tape t(&p, false);
  auto [db, ds] = enc.generate(t, {t.constant(random_tensor(50, 64, rng, -1e3, 1e3)),
                                   t.constant(random_tensor(50, 64, rng, -1e3, 1e3))});
  for (double v : db.value().values()) EXPECT_GE(v, 0.0);
  for (double v : ds.value().values()) EXPECT_GE(v, 0.0);
}

TEST(PredictBook, ZeroDeltaIsIdentity) {
  Rng rng(6);
  std::vector<double> o(20), z(20, 0.0);
  for (auto& v : o) v = rng.uniform(0, 3);
  auto p = predict_book(o, z, z);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(p[i], o[i], 1e-12);
}

TEST(PredictBook, HandSumAtOneLevel) {
  BookLevels b;
  b.adjust(Side::Buy, 99, 5);
  auto o = vectorize(b, 100.0, 10);
  std::vector<double> db(20, 0.0), ds(20, 0.0);
  db[0] = 2.0;
  auto p = predict_book(o, db, ds);
  BookLevels expect;
  expect.adjust(Side::Buy, 99, 7);
  auto e = vectorize(expect, 100.0, 10);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(p[i], e[i], 1e-12);
}

TEST(PredictBook, EntrywiseVolumeSum) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> o(6), a(6), b(6);
    for (std::size_t i = 0; i < 6; ++i) {
      o[i] = rng.uniform(0, 4);
      a[i] = rng.uniform(0, 10);
      b[i] = rng.uniform(0, 10);
    }
    auto p = predict_book(o, a, b);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(std::expm1(p[i]), std::expm1(o[i]) + a[i] + b[i], 1e-9);
  }
}

TEST(PredictBook, GraphVersionMatchesScalarVersion) {
  Rng rng(8);
  Tensor o = random_tensor(2, 6, rng), a = random_tensor(2, 6, rng), b = random_tensor(2, 6, rng);
  Tape t;
  auto v = ContextEncoder::predict(t, o, t.constant(a), t.constant(b)).value();
  for (std::size_t r = 0; r < 2; ++r) {
    auto p = predict_book(o.row_span(r), a.row_span(r), b.row_span(r));
    for (std::size_t c = 0; c < 6; ++c) EXPECT_DOUBLE_EQ(v(r, c), p[c]);
  }
}

TEST(BookDistance, WorkedExamples) {
  std::vector<double> o{1, 2, 3, 4};
  EXPECT_EQ(book_distance(o, o), 0.0);
  auto a = o;
  a[1] += 3;
  EXPECT_EQ(book_distance(o, a), 3.0);
  a[3] -= 4;
  EXPECT_EQ(book_distance(o, a), 7.0);
  EXPECT_THROW(book_distance(o, std::vector<double>{1, 2}), DimensionError);
}

TEST(BookDistance, PseudometricOnRandomTriples) {
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> x(20), y(20), z(20);
    for (std::size_t i = 0; i < 20; ++i) {
      x[i] = rng.uniform(0, 5);
      y[i] = rng.uniform(0, 5);
      z[i] = rng.uniform(0, 5);
    }
    EXPECT_GE(book_distance(x, y), 0.0);
    EXPECT_EQ(book_distance(x, y), book_distance(y, x));
    EXPECT_EQ(book_distance(x, x), 0.0);
    EXPECT_GT(book_distance(x, y), 0.0);
    EXPECT_LE(book_distance(x, z), book_distance(x, y) + book_distance(y, z) + 1e-12);
  }
}

TEST(GenerationLoss, ZeroWhenPredictionEqualsReal) {
  Tape t;
  Tensor v = Tensor::from_rows({{1, 2}, {0, 3}});
  auto g = ContextEncoder::gamma(t.constant(v), t.constant(v));
  EXPECT_EQ(nn::mean(g).value().item(), 0.0);
}

TEST(GenerationLoss, GradientMatchesFiniteDifferencesOnTwoSegmentToy) {
  nn::ModelParams p;
  Rng rng(10);
  ContextConfig cfg{.k_levels = 2, .m_history = 3, .hidden = 4, .gen_hidden = 5};
  auto enc = ContextEncoder::create(p, cfg, rng);
  // Keep real and predicted books apart so |.| stays away from its kink.
  // Rows with a full history: a zero history puts the generator's ReLU units
  // exactly at their kink.
  DayVectors day = random_day(6, 2, rng);
  for (auto& v : day.real.values()) v += 6.0;
  std::vector<std::size_t> rows{4, 5};
  auto res = nn::grad_check([&](Tape& t) { return enc.loss(t, day, rows); }, p,
                            {.eps = 1e-3, .five_point = true});
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param << "[" << res.worst_index << "]";
  EXPECT_GT(res.checked, 100u);
}

TEST(GenerationLoss, FeedBookVariantGradients) {
  nn::ModelParams p;
  Rng rng(11);
  ContextConfig cfg{.k_levels = 2, .m_history = 2, .hidden = 3, .gen_hidden = 4, .feed_book = true};
  auto enc = ContextEncoder::create(p, cfg, rng);
  EXPECT_EQ(p.value("context.gen_buy.hidden.weight").rows(), 2u * 3u + 4u);
  DayVectors day = random_day(3, 2, rng);
  for (auto& v : day.real.values()) v += 6.0;
  std::vector<std::size_t> rows{2, 1};
  auto res = nn::grad_check([&](Tape& t) { return enc.loss(t, day, rows); }, p,
                            {.eps = 1e-3, .five_point = true});
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param << " " << res.analytic << " " << res.numeric;
}

TEST(ContextFeatures, LayoutAndRange) {
  nn::ModelParams p;
  Rng rng(12);
  auto enc = ContextEncoder::create(p, {.k_levels = 3, .m_history = 4, .hidden = 8, .gen_hidden = 8}, rng);
  DayVectors day = random_day(10, 3, rng);
  Tensor f = enc.features(p, day, 4);
  ASSERT_EQ(f.rows(), 10u);
  ASSERT_EQ(f.cols(), 13u);
  for (std::size_t r = 0; r < 10; ++r) {
    auto row = f.row_span(r);
    for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(row[k], day.real(r, k));
    std::vector<double> real(row.begin(), row.begin() + 6), pred(row.begin() + 6, row.begin() + 12);
    EXPECT_GE(row[12], 0.0);
    EXPECT_NEAR(row[12], book_distance(real, pred), 1e-12);
  }
}

TEST(ContextFeatures, WarmupUsesZeroHistory) {
  // Segment 0 has no predecessors, so its state cannot depend on the data.
  nn::ModelParams p;
  Rng rng(13);
  auto enc = ContextEncoder::create(p, {.k_levels = 2, .m_history = 3, .hidden = 4, .gen_hidden = 4}, rng);
  DayVectors a = random_day(5, 2, rng);
  DayVectors b = a;
  for (auto& v : b.delta_bid.values()) v += 1.0;
  for (auto& v : b.delta_ask.values()) v += 1.0;
  Tensor fa = enc.features(p, a), fb = enc.features(p, b);
  for (std::size_t c = 0; c < fa.cols(); ++c) EXPECT_EQ(fa(0, c), fb(0, c));
  EXPECT_NE(fa(1, 4), fb(1, 4));
}

TEST(ContextFeatures, RejectsGridMismatch) {
  nn::ModelParams p;
  Rng rng(14);
  auto enc = ContextEncoder::create(p, {.k_levels = 3, .m_history = 2}, rng);
  DayVectors day = random_day(4, 2, rng);
  EXPECT_THROW(enc.features(p, day), DimensionError);
}

TEST(ContextTraining, ReducesValidationLossAndIsDeterministic) {
  const auto days = synthetic_days(4, 21, 10);
  std::vector<DayVectors> train(days.begin(), days.begin() + 3), valid(days.begin() + 3, days.end());
  ContextConfig cfg{.k_levels = 10, .m_history = 4, .hidden = 16, .gen_hidden = 16};
  ContextTrainConfig tc{.max_epochs = 6, .patience = 10, .batch_size = 32, .lr = 3e-3, .seed = 5};

  auto run = [&]() {
    nn::ModelParams p;
    Rng rng(99);
    auto enc = ContextEncoder::create(p, cfg, rng);
    auto rep = train_context_encoder(enc, p, train, valid, tc);
    return std::make_pair(rep, p);
  };
  auto [rep, params] = run();
  EXPECT_LE(rep.best_valid_loss, 0.7 * rep.initial_valid_loss)
      << "initial " << rep.initial_valid_loss << " best " << rep.best_valid_loss;
  auto [rep2, params2] = run();
  EXPECT_EQ(rep.valid_loss, rep2.valid_loss);
  EXPECT_EQ(rep.train_loss, rep2.train_loss);
  EXPECT_TRUE(params == params2);
}
