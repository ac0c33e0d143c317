#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "propfield/error.hpp"
#include "propfield/metrics.hpp"

using namespace propfield;

TEST_CASE("compute_metrics examples") {
  const auto same = compute_metrics(2, 2);
  CHECK(same.ade == 0.0);
  CHECK(same.alde == 0.0);
  CHECK(same.ape == 0.0);
  CHECK(same.mnre == 1.0);

  const auto over = compute_metrics(4, 2);
  CHECK(over.ade == 2.0);
  CHECK(over.alde == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(over.ape == 1.0);
  CHECK(over.mnre == 0.5);

  const auto under = compute_metrics(0.5, 1);
  CHECK(under.ade == 0.5);
  CHECK(under.alde == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(under.ape == 0.5);
  CHECK(under.mnre == 0.5);

  CHECK_THROWS_AS(compute_metrics(0, 1), Error);
  CHECK_THROWS_AS(compute_metrics(1, -1), Error);
  CHECK_THROWS_AS(compute_metrics(std::nan(""), 1), Error);
}

TEST_CASE("metric identities") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> logm(std::log(0.01), std::log(100.0));
  for (int i = 0; i < 2000; ++i) {
    const double a = std::exp(logm(rng));
    const double b = std::exp(logm(rng));
    const auto ab = compute_metrics(a, b);
    const auto ba = compute_metrics(b, a);
    CHECK(ab.mnre == ba.mnre);
    CHECK(ab.alde == ba.alde);
    CHECK(ab.ade == ba.ade);
    CHECK(std::abs(ab.mnre - std::exp(-ab.alde)) <= 1e-12);
    CHECK(ab.mnre > 0.0);
    CHECK(ab.mnre <= 1.0);
    if (a != b) CHECK(ab.ape != ba.ape);
  }
}

TEST_CASE("pairwise_relationship_accuracy") {
  const std::vector<double> gts{1, 2, 3};
  CHECK(pairwise_relationship_accuracy(std::vector<double>{10, 20, 30}, gts) == 1.0);
  CHECK(pairwise_relationship_accuracy(std::vector<double>{30, 20, 10}, gts) == 0.0);
  CHECK(pairwise_relationship_accuracy(std::vector<double>{20, 10, 30}, gts) == doctest::Approx(2.0 / 3.0));
  CHECK(pairwise_relationship_accuracy(std::vector<double>{5, 5, 5}, gts) == 0.0);
  CHECK(pairwise_relationship_accuracy(std::vector<double>{1, 2, 3}, std::vector<double>{1, 1, 2}) == 1.0);
  CHECK_THROWS_AS(pairwise_relationship_accuracy(std::vector<double>{1}, std::vector<double>{1}), Error);
  CHECK_THROWS_AS(pairwise_relationship_accuracy(std::vector<double>{1, 2}, std::vector<double>{3, 3}), Error);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(12), g(12), mono(12);
    for (std::size_t i = 0; i < 12; ++i) {
      p[i] = u(rng);
      g[i] = u(rng);
      mono[i] = std::exp(3.0 * p[i]) + 7.0;
    }
    CHECK(pairwise_relationship_accuracy(p, g) == pairwise_relationship_accuracy(mono, g));
  }
}

TEST_CASE("aggregate_report") {
  const auto single = aggregate_report({{"a", 1.0, 1.0}});
  CHECK(single.n == 1);
  CHECK(single.mean.ade == 0.0);
  CHECK(single.mean.mnre == 1.0);
  CHECK_FALSE(single.pra.has_value());
  CHECK(single.to_json()["pra"].is_null());

  const auto two = aggregate_report({{"a", 4.0, 2.0}, {"b", 0.5, 1.0}});
  REQUIRE(two.pra.has_value());
  CHECK(*two.pra == 1.0);
  CHECK(two.mean.ade == doctest::Approx(1.25));
  CHECK(two.mean.ape == doctest::Approx(0.75));
  CHECK(two.mean.mnre == doctest::Approx(0.5));
  const std::string table = two.to_table();
  CHECK(table.rfind("scene\tpred\tgt\tADE\tALDE\tAPE\tMnRE\n", 0) == 0);
  CHECK(table.find("mean\t\t\t1.250\t0.693\t0.750\t0.500\n") != std::string::npos);
  CHECK(table.find("PRA\t1.000") != std::string::npos);
  const auto doc = two.to_json();
  CHECK(doc["n"] == 2);
  CHECK(doc["records"].size() == 2);
  CHECK(doc["records"][1]["scene"] == "b");

  const auto tied = aggregate_report({{"a", 1.0, 2.0}, {"b", 1.0, 2.0}});
  CHECK_FALSE(tied.pra.has_value());
  CHECK_THROWS_AS(aggregate_report({}), Error);
}
