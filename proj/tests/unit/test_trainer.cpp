#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "redsc/baselines.hpp"
#include "redsc/data/synth.hpp"
#include "redsc/gradcheck_suite.hpp"
#include "redsc/trainer.hpp"

using namespace redsc;

namespace {

Array small_batch(std::size_t n = 12) {
    data::SynthSpec s;
    s.subspaces = 3;
    s.per_class = n / 3;
    return data::synth_subspaces(s).dataset.images;
}

TrainConfig quick(std::size_t pre, std::size_t fine) {
    TrainConfig c;
    c.epochs_pretrain = pre;
    c.epochs_finetune = fine;
    c.seed = 1;
    return c;
}

}  // namespace

TEST(Adam, FirstStepMovesEachCoordinateByLearningRate) {
    // With bias correction the first update is lr * g / (|g| + eps').
    ad::Var p = ad::parameter(Array({3}, std::vector<double>{1, 2, 3}));
    std::vector<ad::Var> params{p};
    AdamState s = AdamState::for_params(params);
    p.mutable_grad() = Array({3}, std::vector<double>{0.5, -2, 0});
    adam_step(params, s, {});
    EXPECT_NEAR(p.value()[0], 1 - 1e-3 * 0.5 / (0.5 + 1e-8), 1e-15);
    EXPECT_NEAR(p.value()[1], 2 + 1e-3 * 2 / (2 + 1e-8), 1e-15);
    EXPECT_EQ(p.value()[2], 3.0);
    EXPECT_EQ(s.step, 1u);
}

TEST(Adam, SecondStepMatchesHandComputation) {
    ad::Var p = ad::parameter(Array::scalar(0.0));
    std::vector<ad::Var> params{p};
    AdamState s = AdamState::for_params(params);
    const AdamHyper h{0.1, 0.5, 0.75, 0.0};
    p.mutable_grad()[0] = 1.0;
    adam_step(params, s, h);
    p.mutable_grad()[0] = 3.0;
    adam_step(params, s, h);
    const double m = 0.5 * 0.5 * 1 + 0.5 * 3, v = 0.75 * 0.25 * 1 + 0.25 * 9;
    const double mh = m / (1 - 0.25), vh = v / (1 - 0.5625);
    EXPECT_NEAR(p.value()[0], -0.1 - 0.1 * mh / std::sqrt(vh), 1e-14);
}

TEST(Adam, MinimisesAQuadratic) {
    ad::Var p = ad::parameter(Array({2}, std::vector<double>{3, -4}));
    std::vector<ad::Var> params{p};
    AdamState s = AdamState::for_params(params);
    for (int i = 0; i < 3000; ++i) {
        p.zero_grad();
        ad::backward(ad::frobenius_sq(p));
        adam_step(params, s, {0.01});
    }
    EXPECT_LT(frobenius_norm(p.value()), 1e-2);
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.learning_rate = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.lambda = -1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.adam_beta2 = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(History, EpochsToReachAndMovingAverage) {
    LossHistory h;
    for (double v : {100.0, 50.0, 12.0, 10.5, 10.0}) h.records.push_back({h.size() + 1, {0, 0, 0, v}, {}});
    EXPECT_EQ(epochs_to_reach(h, 1.1), 4u);
    EXPECT_EQ(epochs_to_reach(h, 1.25), 3u);
    EXPECT_EQ(epochs_to_reach(h, 1.0), 5u);
    const std::vector<double> xs{1, 2, 3, 4, 5};
    EXPECT_EQ(moving_average(xs, 2), (std::vector<double>{1.5, 2.5, 3.5, 4.5}));
    EXPECT_TRUE(moving_average(xs, 6).empty());
}

TEST(History, CsvHasHeaderAndRoundTripsDoubles) {
    LossHistory h;
    h.records.push_back({1, {0.1, 0.2, 0.3, 0.6000000000000001}, 0.25});
    h.records.push_back({2, {1.0 / 3, 0, 0, 1.0 / 3}, std::nullopt});
    std::ostringstream os;
    h.write_csv(os);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "epoch,reconstruction,self_expression,regularizer,total,err");
    std::getline(in, line);
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "0.25");
    EXPECT_EQ(std::stod(line.substr(line.rfind(',', line.rfind(',') - 1) + 1)), 0.6000000000000001);
    std::getline(in, line);
    EXPECT_EQ(line.back(), ',');
}

TEST(Pretrain, ReducesReconstructionLossDeterministically) {
    const Array x = small_batch();
    const Architecture a;
    const PretrainResult r = pretrain(x, a, quick(60, 0));
    ASSERT_EQ(r.history.size(), 60u);
    EXPECT_LT(r.history.records.back().loss.total, 0.5 * r.history.records.front().loss.total);
    for (const EpochRecord& e : r.history.records) {
        EXPECT_EQ(e.loss.self_expression, 0.0);
        EXPECT_EQ(e.loss.total, e.loss.reconstruction);
    }
    const PretrainResult again = pretrain(x, a, quick(60, 0));
    EXPECT_EQ(again.history.totals(), r.history.totals());
    EXPECT_EQ(again.params.decoder[2].weight.value(), r.params.decoder[2].weight.value());
}

TEST(Finetune, KeepsDiagonalZeroAndLowersLoss) {
    const Array x = small_batch();
    const Architecture a;
    const TrainConfig cfg = quick(30, 40);
    const PretrainResult pre = pretrain(x, a, cfg);
    std::vector<std::size_t> seen;
    const FinetuneResult r = finetune(x, {pre.params, std::nullopt}, a, cfg, [&](std::size_t e, const Array& th) {
        seen.push_back(e);
        for (std::size_t i = 0; i < th.dim(0); ++i) EXPECT_EQ(th.at(i, i), 0.0);
        return std::optional<double>(0.5);
    });
    EXPECT_EQ(seen.size(), 40u);
    const Array& th = r.params.self_expressive.value();
    EXPECT_EQ(th.shape(), (Shape{12, 12}));
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(th.at(i, i), 0.0);
    EXPECT_LT(r.history.records.back().loss.total, r.history.records.front().loss.total);
    EXPECT_EQ(r.history.records[3].err, 0.5);
    // The initial autoencoder is not modified in place.
    EXPECT_EQ(pre.params.encoder[0].weight.value(), pretrain(x, a, cfg).params.encoder[0].weight.value());
}

TEST(Finetune, ZeroDiagOffLetsDiagonalMove) {
    const Array x = small_batch();
    const Architecture a;
    TrainConfig cfg = quick(5, 5);
    cfg.zero_diag = false;
    const FinetuneResult r = finetune(x, {init_autoencoder(a, 0), std::nullopt}, a, cfg);
    double diag = 0;
    for (std::size_t i = 0; i < 12; ++i) diag += std::abs(r.params.self_expressive.value().at(i, i));
    EXPECT_GT(diag, 0.0);
}

TEST(Finetune, RejectsWrongThetaShape) {
    const Array x = small_batch();
    const Architecture a;
    EXPECT_THROW(finetune(x, {init_autoencoder(a, 0), Array({5, 5})}, a, quick(1, 1)), ConfigError);
}

TEST(Finetune, DivergenceIsReported) {
    const Array x = small_batch();
    const Architecture a;
    TrainConfig cfg = quick(0, 50);
    cfg.learning_rate = 1e3;
    EXPECT_THROW(finetune(x, {init_autoencoder(a, 0), std::nullopt}, a, cfg), DivergenceError);
}

TEST(Finetune, SkipModesShareParameterCounts) {
    const Array x = small_batch();
    const Architecture a;
    TrainConfig cfg = quick(0, 2);
    const FinetuneResult full = finetune(x, {init_autoencoder(a, 0), std::nullopt}, a, cfg);
    cfg.skip_mode = SkipMode::none;
    const FinetuneResult none = finetune(x, {init_autoencoder(a, 0), std::nullopt}, a, cfg);
    const auto pf = full.params.trainables(), pn = none.params.trainables();
    ASSERT_EQ(pf.size(), pn.size());
    for (std::size_t i = 0; i < pf.size(); ++i) EXPECT_EQ(pf[i].shape(), pn[i].shape());
}

TEST(SelfExpressionFit, ApproachesRidgeSolution) {
    // Frozen features, no diagonal constraint: the trained layer converges to (G + lambda I)^{-1} G.
    std::mt19937_64 rng(3);
    const std::size_t n = 10;
    std::vector<Array> maps{random_array({n, 2, 2, 2}, rng), random_array({n, 3, 1, 1}, rng)};
    Eigen::MatrixXd f(11, n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < 8; ++i) f(i, j) = maps[0][j * 8 + i];
        for (std::size_t i = 0; i < 3; ++i) f(8 + i, j) = maps[1][j * 3 + i];
    }
    const Eigen::MatrixXd c = ridge_closed_form({{f}, 1.0, false});
    const SelfExpressionFit fit = fit_self_expression(maps, 1.0, 6000, {1e-2}, false);
    Eigen::MatrixXd got(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) got(i, j) = fit.theta_c.at(i, j);
    EXPECT_LT((got - c).norm() / c.norm(), 1e-3);
    EXPECT_LT(fit.losses.back(), fit.losses.front());
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    ad::Var p = ad::parameter(Array({2}, std::vector<double>{1.5, -2}));
    std::vector<ad::Var> params{p};
    AdamState s = AdamState::for_params(params);
    for (int i = 0; i < 3; ++i) adam_step(params, s, {});
    EXPECT_EQ(p.value().values(), (std::vector<double>{1.5, -2}));
}
