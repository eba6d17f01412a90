#include "oracles.hpp"

#include "mam/data.hpp"
#include "mam/family.hpp"

#include "doctest.h"

#include <filesystem>
#include <fstream>

using namespace mam;

namespace {

std::string work_file(const std::string& name, const std::string& text) {
    std::filesystem::create_directories(MAM_WORK_DIR);
    const std::string path = std::string(MAM_WORK_DIR) + "/" + name;
    std::ofstream(path, std::ios::binary) << text;
    return path;
}

const CsvSchema kSchema{"id", "y", {"x1", "x2"}};

ClusteredDataset one_row(double y) {
    Cluster c;
    c.id = "a";
    c.y = Vector::Constant(1, y);
    c.x = Matrix::Constant(1, 2, 0.5);
    c.z = Matrix::Ones(1, 1);
    return ClusteredDataset({c}, {"x1", "x2"});
}

ModelSpec linear_spec(Family f, Link l) {
    ModelSpec s;
    s.family = f;
    s.link = l;
    s.linear_terms = {0, 1};
    return s;
}

}  // namespace

TEST_SUITE("data-core") {

TEST_CASE("observation derivatives agree with finite differences") {
    const struct {
        Family f;
        Link l;
        double y;
    } cases[] = {{Family::Bernoulli, Link::Logit, 1.0},  {Family::Bernoulli, Link::Logit, 0.0},
                 {Family::Bernoulli, Link::Probit, 1.0}, {Family::Bernoulli, Link::Probit, 0.0},
                 {Family::Gaussian, Link::Identity, 0.7}, {Family::Poisson, Link::Log, 3.0}};
    for (const auto& c : cases)
        for (double eta : {-3.0, -0.4, 0.0, 1.3, 4.0}) {
            const double h = 1e-5;
            const ObsTerms t = observation_nll(c.f, c.l, c.y, eta, 0.8);
            const ObsTerms tp = observation_nll(c.f, c.l, c.y, eta + h, 0.8);
            const ObsTerms tm = observation_nll(c.f, c.l, c.y, eta - h, 0.8);
            CHECK(t.d1 == doctest::Approx((tp.value - tm.value) / (2 * h)).epsilon(1e-7));
            CHECK(t.d2 == doctest::Approx((tp.d1 - tm.d1) / (2 * h)).epsilon(1e-7));
        }
}

TEST_CASE("Bernoulli log-likelihood at eta = 0 is log 2") {
    CHECK(observation_nll(Family::Bernoulli, Link::Logit, 1.0, 0.0, 1.0).value == doctest::Approx(std::log(2.0)));
    CHECK(observation_nll(Family::Bernoulli, Link::Probit, 0.0, 0.0, 1.0).value == doctest::Approx(std::log(2.0)));
}

TEST_CASE("probit tail stays finite") {
    const ObsTerms t = observation_nll(Family::Bernoulli, Link::Probit, 1.0, -40.0, 1.0);
    CHECK(std::isfinite(t.value));
    CHECK(std::isfinite(t.d1));
    CHECK(t.d2 > 0);
}

TEST_CASE("link and inverse link are inverses") {
    for (Link l : {Link::Logit, Link::Probit, Link::Identity, Link::Log})
        for (double eta : {-5.0, -1.0, 0.0, 0.3, 2.5}) CHECK(link_fn(l, inverse_link(l, eta)) == doctest::Approx(eta).epsilon(1e-12));
}

TEST_CASE("normal quantile inverts the cdf") {
    for (double p : {1e-10, 0.001, 0.025, 0.3, 0.5, 0.8, 0.975, 0.999999})
        CHECK(oracle::Phi(detail::std_normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
    CHECK(detail::std_normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
}

TEST_CASE("family and link names round-trip") {
    for (Family f : {Family::Bernoulli, Family::Gaussian, Family::Poisson}) CHECK(family_from_string(to_string(f)) == f);
    for (Link l : {Link::Logit, Link::Probit, Link::Identity, Link::Log}) CHECK(link_from_string(to_string(l)) == l);
    CHECK(link_compatible(Family::Bernoulli, Link::Probit));
    CHECK_FALSE(link_compatible(Family::Bernoulli, Link::Identity));
    CHECK_FALSE(link_compatible(Family::Gaussian, Link::Logit));
    CHECK(link_compatible(Family::Poisson, Link::Log));
}

TEST_CASE("validate flags a response outside the Bernoulli support") {
    const ValidationReport r = validate(one_row(2.0), linear_spec(Family::Bernoulli, Link::Logit));
    REQUIRE_FALSE(r.ok());
    CHECK(r.summary().find("response outside support") != std::string::npos);
}

TEST_CASE("one cluster of one row with a valid spec validates") {
    CHECK(validate(one_row(1.0), linear_spec(Family::Bernoulli, Link::Logit)).ok());
}

TEST_CASE("validate flags a basis that is too small") {
    ModelSpec s = linear_spec(Family::Bernoulli, Link::Logit);
    s.linear_terms = {1};
    s.smooth_terms = {{0, 2, 2}};
    const ValidationReport r = validate(one_row(1.0), s);
    REQUIRE_FALSE(r.ok());
    CHECK(r.summary().find("basis too small") != std::string::npos);
}

TEST_CASE("validate flags incompatible links, duplicate terms and bad ghq_k together") {
    ModelSpec s = linear_spec(Family::Gaussian, Link::Logit);
    s.smooth_terms = {{0, 5, 2}};
    s.ghq_k = 0;
    const ValidationReport r = validate(one_row(1.0), s);
    CHECK(r.violations.size() >= 3);
    CHECK(r.summary().find("incompatible") != std::string::npos);
    CHECK(r.summary().find("more than one term") != std::string::npos);
    CHECK(r.summary().find("ghq_k") != std::string::npos);
}

TEST_CASE("validate is pure") {
    ModelSpec s = linear_spec(Family::Gaussian, Link::Logit);
    const ClusteredDataset d = one_row(3.0);
    CHECK(validate(d, s).violations == validate(d, s).violations);
}

TEST_CASE("load_csv groups rows by cluster in first-appearance order") {
    const std::string path = work_file("four.csv", "id,y,x1,x2\nb,1,0.1,2\na,0,0.2,3\nb,0,0.3,4\na,1,0.4,5\n");
    const ClusteredDataset d = load_csv(path, kSchema, {RandomEffects::InterceptSlope, 1});
    CHECK(d.num_clusters() == 2);
    CHECK(d.n_total() == 4);
    CHECK(d.cluster(0).id == "b");
    CHECK(d.cluster(0).x(1, 0) == 0.3);
    CHECK(d.cluster(1).y(1) == 1.0);
    CHECK(d.m() == 2);
    CHECK(d.cluster(1).z(0, 0) == 1.0);
    CHECK(d.cluster(1).z(0, 1) == 3.0);
}

TEST_CASE("load_csv reports the line of a non-numeric cell") {
    const std::string path = work_file("bad.csv", "id,y,x1,x2\na,1,0.1,2\na,0,abc,3\n");
    try {
        load_csv(path, kSchema, {});
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("load_csv rejects empty files, missing columns and missing files") {
    CHECK_THROWS_WITH_AS(load_csv(work_file("empty.csv", ""), kSchema, {}), doctest::Contains("no observations"),
                         ParseError);
    CHECK_THROWS_WITH_AS(load_csv(work_file("header.csv", "id,y,x1,x2\n"), kSchema, {}),
                         doctest::Contains("no observations"), ParseError);
    CHECK_THROWS_WITH_AS(load_csv(work_file("cols.csv", "id,y,x1\na,1,2\n"), kSchema, {}), doctest::Contains("x2"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(load_csv(std::string(MAM_WORK_DIR) + "/nope.csv", kSchema, {}), doctest::Contains("nope.csv"),
                         ValidationError);
    CHECK_THROWS_AS(load_csv(work_file("ragged.csv", "id,y,x1,x2\na,1,2\n"), kSchema, {}), ParseError);
    CHECK_THROWS_AS(load_csv(work_file("missing.csv", "id,y,x1,x2\na,1,,2\n"), kSchema, {}), ParseError);
}

TEST_CASE("CSV write then load reproduces finite doubles bit-exactly") {
    RandomStream rng(99, 1);
    std::vector<Cluster> cl;
    for (int i = 0; i < 7; ++i) {
        Cluster c;
        c.id = "id" + std::to_string(i);
        const Index n = 1 + i % 3;
        c.y.resize(n);
        c.x.resize(n, 2);
        c.z = Matrix::Ones(n, 1);
        for (Index j = 0; j < n; ++j) {
            c.y(j) = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
            c.x(j, 0) = rng.uniform(-1, 1) / 3.0;
            c.x(j, 1) = j == 0 ? 5e-324 : -1.7976931348623157e308;
        }
        cl.push_back(c);
    }
    const ClusteredDataset d(cl, {"x1", "x2"});
    const std::string path = std::string(MAM_WORK_DIR) + "/roundtrip.csv";
    std::filesystem::create_directories(MAM_WORK_DIR);
    write_csv(d, kSchema, path);
    const ClusteredDataset back = load_csv(path, kSchema, {});
    REQUIRE(back.num_clusters() == d.num_clusters());
    for (Index i = 0; i < d.num_clusters(); ++i) {
        CHECK(back.cluster(i).id == d.cluster(i).id);
        CHECK(back.cluster(i).y == d.cluster(i).y);
        CHECK(back.cluster(i).x == d.cluster(i).x);
    }
}

TEST_CASE("format_double is the shortest round-trip text") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("random-effect rows carry the intercept and the slope covariate") {
    RowVector x(3);
    x << 0.2, -0.7, 1.5;
    CHECK(re_design_row({RandomEffects::Intercept, -1}, x) == RowVector::Ones(1));
    const RowVector z = re_design_row({RandomEffects::InterceptSlope, 1}, x);
    CHECK(z(0) == 1.0);
    CHECK(z(1) == -0.7);
    CHECK(re_design_row({RandomEffects::None, -1}, x).size() == 0);
}

TEST_CASE("threads resolve from MAM_THREADS when zero is requested") {
    CHECK(resolve_threads(3) == 3);
    setenv("MAM_THREADS", "5", 1);
    CHECK(resolve_threads(0) == 5);
    unsetenv("MAM_THREADS");
    CHECK(resolve_threads(0) >= 1);
}

}  // TEST_SUITE
