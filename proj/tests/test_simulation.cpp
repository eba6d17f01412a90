#include "oracles.hpp"

#include "mam/marginalizer.hpp"
#include "mam/quadrature.hpp"
#include "mam/simulation.hpp"

#include "doctest.h"

#include <algorithm>

using namespace mam;

namespace {

Scenario small(RandomEffects re, Index R = 3) {
    Scenario s;
    s.name = "small";
    s.clusters = 20;
    s.cluster_size = 8;
    s.re = re;
    s.replicates = R;
    s.basis_dim = 6;
    s.grid_points = 10;
    s.seed = 77;
    return s;
}

bool same(const ReplicateResult& a, const ReplicateResult& b) {
    if (a.ok != b.ok || a.error != b.error) return false;
    if (!a.ok) return true;
    for (int l = 0; l < 2; ++l)
        if (a.gam[l].error != b.gam[l].error || a.mam[l].error != b.mam[l].error ||
            a.gam[l].covered != b.gam[l].covered || a.mam[l].covered != b.mam[l].covered)
            return false;
    return a.theta_hat == b.theta_hat && a.rmsep == b.rmsep;
}

// Monte-Carlo mean of expit(delta + u), u ~ N(0, s^2), delta solving the marginal constraint.
void mc_marginal(double lambda, double s, std::uint64_t seed, double& mean, double& se) {
    const Matrix L = Matrix::Constant(1, 1, s);
    const double delta = solve_delta(lambda, RowVector::Ones(1), L, ghq_rule(1, 30), Link::Logit);
    RandomStream rng(seed, 0);
    const int n = 1000000;
    double sum = 0.0, ss = 0.0;
    for (int k = 0; k < n; ++k) {
        const double y = rng.bernoulli(oracle::expit(delta + s * rng.normal())) ? 1.0 : 0.0;
        sum += y;
        ss += y * y;
    }
    mean = sum / n;
    se = std::sqrt((ss / n - mean * mean) / n);
}

}  // namespace

TEST_SUITE("sim-harness") {

TEST_CASE("random streams are deterministic and distinct") {
    RandomStream a(1, 2), b(1, 2), c(1, 3), d(2, 2);
    bool differs_c = false, differs_d = false;
    for (int k = 0; k < 100; ++k) {
        const auto x = a.next();
        CHECK(x == b.next());
        differs_c |= x != c.next();
        differs_d |= x != d.next();
    }
    CHECK(differs_c);
    CHECK(differs_d);
}

TEST_CASE("uniform and normal draws have the right range and moments") {
    RandomStream rng(3, 0);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0;
    for (int k = 0; k < n; ++k) {
        const double u = rng.uniform(-1, 1);
        REQUIRE(u >= -1.0);
        REQUIRE(u < 1.0);
        su += u;
        const double z = rng.normal();
        sn += z;
        sn2 += z * z;
    }
    CHECK(std::abs(su / n) <= 4 * std::sqrt(1.0 / 3.0 / n));
    CHECK(std::abs(sn / n) <= 4 / std::sqrt(double(n)));
    CHECK(std::abs(sn2 / n - 1.0) <= 4 * std::sqrt(2.0 / n));
}

TEST_CASE("scenario JSON round trip and validation") {
    Scenario s = small(RandomEffects::InterceptSlope);
    s.rho = -0.3;
    s.f2 = "zero";
    const Scenario back = scenario_from_json(scenario_to_json(s));
    CHECK(scenario_to_json(back) == scenario_to_json(s));
    nlohmann::json j = scenario_to_json(s);
    j["sigma0"] = 0.0;
    CHECK_THROWS_WITH_AS(scenario_from_json(j), doctest::Contains("sigma0"), ValidationError);
    j = scenario_to_json(s);
    j["rho"] = 1.0;
    CHECK_THROWS_WITH_AS(scenario_from_json(j), doctest::Contains("rho"), ValidationError);
    j = scenario_to_json(s);
    j["f1"] = "cubic";
    CHECK_THROWS_WITH_AS(scenario_from_json(j), doctest::Contains("cubic"), ValidationError);
    j = scenario_to_json(s);
    j["clusters"] = "many";
    CHECK_THROWS_AS(scenario_from_json(j), ValidationError);
}

TEST_CASE("truth functions") {
    CHECK(truth_function("sin_pi")(0.5) == doctest::Approx(1.0));
    CHECK(truth_function("quadratic")(1.0) == doctest::Approx(4.0 / 3.0));
    CHECK(truth_function("zero")(0.3) == 0.0);
    Scenario s;
    s.beta3 = 0.5;
    RowVector x(3);
    x << 0.5, 1.0, 2.0;
    CHECK(true_marginal_predictor(s, x) == doctest::Approx(1.0 + 4.0 / 3.0 + 1.0));
}

TEST_CASE("generated data are deterministic per replicate and independent of R") {
    Scenario s = small(RandomEffects::InterceptSlope);
    const SimulatedData a = generate_dataset(s, 2);
    s.replicates = 50;
    const SimulatedData b = generate_dataset(s, 2);
    CHECK(a.u == b.u);
    CHECK(a.data.stacked_x() == b.data.stacked_x());
    CHECK(a.data.stacked_y() == b.data.stacked_y());
    CHECK(a.data.stacked_z().col(1) == a.data.stacked_x().col(2));
    const SimulatedData c = generate_dataset(s, 3);
    CHECK(c.data.stacked_x() != a.data.stacked_x());
    CHECK(a.data.num_clusters() == s.clusters);
    CHECK(a.data.n_total() == s.clusters * s.cluster_size);
    const Vector y = a.data.stacked_y();
    CHECK(((y.array() == 0.0) || (y.array() == 1.0)).all());
}

TEST_CASE("random effects have the scenario covariance") {
    Scenario s = small(RandomEffects::InterceptSlope);
    s.clusters = 20000;
    s.cluster_size = 1;
    const SimulatedData d = generate_dataset(s, 0);
    const Matrix C = (d.u.transpose() * d.u) / static_cast<double>(s.clusters);
    const Matrix S = s.sigma();
    CHECK(std::abs(C(0, 0) - S(0, 0)) <= 4 * S(0, 0) * std::sqrt(2.0 / s.clusters));
    CHECK(std::abs(C(1, 1) - S(1, 1)) <= 4 * S(1, 1) * std::sqrt(2.0 / s.clusters));
    CHECK(std::abs(C(0, 1) - S(0, 1)) <= 4 * std::sqrt((S(0, 0) * S(1, 1) + S(0, 1) * S(0, 1)) / s.clusters));
}

TEST_CASE("generated responses have the requested marginal mean") {
    double mean, se;
    mc_marginal(0.0, 2.0, 11, mean, se);
    CHECK(std::abs(mean - 0.5) <= 3 * se);
    mc_marginal(1.0, 2.0, 12, mean, se);
    CHECK(std::abs(mean - oracle::expit(1.0)) <= 3 * se);
    // vanishing random-effect scale: delta collapses to lambda
    CHECK(std::abs(solve_delta(1.0, RowVector::Ones(1), Matrix::Constant(1, 1, 1e-9), ghq_rule(1, 20), Link::Logit) -
                   1.0) <= 1e-8);
}

TEST_CASE("replications are deterministic and GAMM shares the MAM variance components") {
    const Scenario s = small(RandomEffects::InterceptSlope);
    const ReplicateResult a = run_replication(s, 1);
    const ReplicateResult b = run_replication(s, 1);
    REQUIRE_MESSAGE(a.ok, a.error);
    CHECK(same(a, b));
    CHECK(a.theta_hat.size() == 3);
    CHECK(a.rmsep.size() == 2);
    CHECK(a.gam[0].error.size() == s.grid_points);
    CHECK(a.mam[1].covered.size() == s.grid_points);
    const Vector truth = CovarianceParam::from_covariance(s.sigma()).natural();
    CHECK((a.theta_error - (a.theta_hat - truth)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("studies are identical across thread counts and replicate r ignores R") {
    const Scenario s = small(RandomEffects::Intercept, 4);
    const StudyReport a = run_study(s, 1), b = run_study(s, 3);
    CHECK(study_report_csv(a) == study_report_csv(b));
    CHECK(replicates_csv(a) == replicates_csv(b));
    Scenario s2 = s;
    s2.replicates = 2;
    const StudyReport c = run_study(s2, 1);
    for (Index r = 0; r < 2; ++r) CHECK(same(a.replicates[static_cast<std::size_t>(r)], c.replicates[static_cast<std::size_t>(r)]));
}

TEST_CASE("report rows and CSV layout") {
    const StudyReport rep = run_study(small(RandomEffects::Intercept, 2), 1);
    CHECK(rep.completed + rep.failed == 2);
    CHECK_FALSE(rep.row("GAM").bias_sigma0.present);
    CHECK(rep.row("GAM").cvg_f1.present);
    CHECK(rep.row("GAMM").bias_sigma0.present);
    CHECK_FALSE(rep.row("GAMM").cvg_f1.present);
    CHECK(rep.row("MAM").cvg_f2.present);
    CHECK_FALSE(rep.row("MAM").bias_sigma1.present);
    CHECK_THROWS_AS(rep.row("GLM"), ValidationError);
    const std::string csv = study_report_csv(rep);
    CHECK(csv.rfind("scenario,model,replicates,failed,bias_f1,bias_f1_se,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    const std::string reps = replicates_csv(rep);
    CHECK(std::count(reps.begin(), reps.end(), '\n') == 3);
}

TEST_CASE("a null truth is recovered without bias") {
    Scenario s;
    s.name = "null";
    s.re = RandomEffects::Intercept;
    s.f1 = "zero";
    s.f2 = "zero";
    s.beta3 = 0.0;
    s.replicates = 200;
    s.seed = 4242;
    const StudyReport rep = run_study(s, 0);
    REQUIRE_FALSE(rep.unreliable);
    for (const char* model : {"GAM", "MAM"}) {
        const ModelRow& row = rep.row(model);
        INFO(model << " abs_bias_f1 " << row.abs_bias_f1.value << " abs_bias_f2 " << row.abs_bias_f2.value);
        CHECK(row.abs_bias_f1.value <= 0.05);
        CHECK(row.abs_bias_f2.value <= 0.05);
    }
}

}  // TEST_SUITE
