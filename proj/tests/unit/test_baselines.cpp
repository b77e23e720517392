#include <gtest/gtest.h>

#include <random>

#include "redsc/baselines.hpp"
#include "redsc/data/synth.hpp"
#include "support/oracles.hpp"

using namespace redsc;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
}

}  // namespace

TEST(Ridge, ClosedFormMatchesGaussJordanOracle) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Eigen::MatrixXd x = random_matrix(6, 9, seed);
        const double lambda = 0.1 + seed;
        oracle::Mat rows(6, std::vector<double>(9));
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 9; ++j) rows[i][j] = x(i, j);
        const oracle::Mat expect = oracle::ridge(rows, lambda);
        const Eigen::MatrixXd c = ridge_closed_form({{x}, lambda, false});
        for (int i = 0; i < 9; ++i)
            for (int j = 0; j < 9; ++j) EXPECT_NEAR(c(i, j), expect[i][j], 1e-10);
    }
}

TEST(Ridge, GradientVanishesAtOptimum) {
    const RidgeProblem p{{random_matrix(5, 8, 1), random_matrix(3, 8, 2)}, 0.5, false};
    const Eigen::MatrixXd c = ridge_closed_form(p);
    EXPECT_LT(ridge_objective_gradient(p, c).norm(), 1e-10);
    EXPECT_GT(ridge_objective_gradient(p, c + 0.01 * Eigen::MatrixXd::Ones(8, 8)).norm(), 1e-3);
}

TEST(Ridge, MultipleFeatureMatricesStack) {
    const Eigen::MatrixXd a = random_matrix(4, 6, 3), b = random_matrix(2, 6, 4);
    Eigen::MatrixXd stacked(6, 6);
    stacked << a, b;
    EXPECT_TRUE(ridge_closed_form({{a, b}, 1.0, false}).isApprox(ridge_closed_form({{stacked}, 1.0, false}), 1e-12));
}

TEST(Ridge, VanishingLambdaGivesBlockDiagonalCoefficients) {
    // Noise-free independent subspaces: as lambda -> 0 the solution tends to the
    // shape-interaction matrix V V^T, which never links different subspaces.
    data::SynthSpec s;
    s.subspaces = 3;
    s.dim = 2;
    s.per_class = 6;
    s.noise_sigma = 0.0;
    const data::SynthDataset d = data::synth_subspaces(s);
    const Eigen::MatrixXd c = ridge_closed_form({{d.raw}, 1e-9, false});
    double off = 0, on = 0;
    for (int i = 0; i < 18; ++i)
        for (int j = 0; j < 18; ++j) (i / 6 != j / 6 ? off : on) = std::max(i / 6 != j / 6 ? off : on, std::abs(c(i, j)));
    EXPECT_LT(off, 1e-5);
    EXPECT_GT(on, 0.1);
}

TEST(Ridge, ErrorsAreExplicit) {
    const Eigen::MatrixXd x = random_matrix(3, 8, 5);  // rank 3 < N
    EXPECT_THROW(ridge_closed_form({{x}, 0.0, false}), NumericalError);
    EXPECT_THROW(ridge_closed_form({{x}, 1.0, true}), ContractError);
    EXPECT_THROW(ridge_closed_form({{x}, -1.0, false}), ContractError);
    EXPECT_THROW(ridge_closed_form({{}, 1.0, false}), ContractError);
    EXPECT_NO_THROW(ridge_closed_form({{random_matrix(10, 4, 6)}, 0.0, false}));
}

TEST(LsrBaseline, ClustersTheSyntheticDataset) {
    const data::SynthDataset d = data::synth_subspaces({});
    BaselineOptions opt;
    opt.seed = 7;
    const BaselineResult r = lsr_baseline_cluster(d.raw, 5, opt, d.dataset.labels);
    EXPECT_LT(r.clusters.err, 0.05);
    EXPECT_GT(r.clusters.nmi, 0.9);
    EXPECT_EQ(r.coefficients.rows(), 250);
    const BaselineResult unlabelled = lsr_baseline_cluster(d.raw, 5, opt);
    EXPECT_EQ(unlabelled.clusters.labels, r.clusters.labels);
}
