#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "propfield/error.hpp"
#include "propfield/regression.hpp"

using namespace propfield;

namespace {

class TableText : public TextEmbeddingProvider {
 public:
  explicit TableText(std::map<std::string, Embedding> table) : table_(std::move(table)) {}
  std::vector<Embedding> embed_text(std::span<const std::string> texts) override {
    std::vector<Embedding> out;
    for (const auto& t : texts) {
      seen.push_back(t);
      auto it = table_.find(t);
      if (it == table_.end()) throw Error(ErrorKind::Provider, "no vector for " + t);
      out.push_back(it->second);
    }
    return out;
  }
  std::vector<std::string> seen;

 private:
  std::map<std::string, Embedding> table_;
};

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

MaterialDictionary dict(std::vector<std::pair<std::string, ValueRange>> items) {
  MaterialDictionary d;
  for (auto& [name, v] : items) d.entries.push_back({name, v, std::nullopt, std::nullopt});
  d.units = "kg/m^3";
  return d;
}

FeaturePointCloud cloud_from(const std::vector<Eigen::Vector3d>& pts, const Eigen::MatrixXd& feats) {
  FeaturePointCloud c;
  for (const auto& p : pts) c.points.push_back(p, 0);
  c.features = feats;
  c.visibility.assign(pts.size(), 1);
  return c;
}

}  // namespace

TEST_CASE("similarity_weights") {
  Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(4, 4);
  CHECK(similarity_weights(vec({1, 0, 0, 0}), basis) == vec({1, 0, 0, 0}));
  Eigen::MatrixXd e(1, 2);
  e << 0.6, 0.8;
  CHECK(similarity_weights(vec({1, 0}), e)[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK_THROWS_AS(similarity_weights(vec({0, 0}), e), Error);
  CHECK_THROWS_AS(similarity_weights(vec({1, 0, 0}), e), Error);
}

TEST_CASE("kernel_regress examples") {
  const std::vector<double> one{42.0};
  CHECK(kernel_regress(vec({-0.7}), one, 1e-6) == 42.0);
  CHECK(kernel_regress(vec({0.9}), one, 10.0) == 42.0);
  const std::vector<double> ys{2, 4, 6};
  CHECK(kernel_regress(vec({0.3, 0.3, 0.3}), ys, 0.1) == doctest::Approx(4.0).epsilon(1e-14));

  const std::vector<double> y2{2700, 775};
  const std::vector<double> w2{0.3, 0.1};
  const double got = kernel_regress(vec({0.3, 0.1}), y2, 0.1);
  const double want = oracle::kernel_regress(w2, y2, 0.1);
  CHECK(std::abs(got - want) / want <= 1e-9);
  CHECK(got == doctest::Approx(2470.5).epsilon(1e-4));

  CHECK_THROWS_AS(kernel_regress(vec({0.1}), y2, 0.1), Error);
  CHECK_THROWS_AS(kernel_regress(vec({0.1, 0.2}), y2, 0.0), Error);
}

TEST_CASE("kernel_regress against the high-precision oracle") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> w(-1.0, 1.0);
  std::uniform_real_distribution<double> y(0.1, 9000.0);
  const double temps[] = {1e-6, 1e-3, 0.01, 0.1, 1.0};
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = 1 + trial % 8;
    Eigen::VectorXd wv(static_cast<Eigen::Index>(k));
    std::vector<double> wl(k), yv(k);
    for (std::size_t i = 0; i < k; ++i) {
      wl[i] = wv[static_cast<Eigen::Index>(i)] = w(rng);
      yv[i] = y(rng);
    }
    const double t = temps[trial % 5];
    const double got = kernel_regress(wv, yv, t);
    const double want = oracle::kernel_regress(wl, yv, t);
    CHECK(std::abs(got - want) <= 1e-9 * std::abs(want));
    CHECK(got >= *std::min_element(yv.begin(), yv.end()));
    CHECK(got <= *std::max_element(yv.begin(), yv.end()));
  }
}

TEST_CASE("kernel_regress properties") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd wv(5);
    for (int i = 0; i < 5; ++i) wv[i] = u(rng);
    const std::vector<double> yv{100, 700, 1300, 2500, 7800};
    const double base = kernel_regress(wv, yv, 0.1);
    CHECK(std::abs(kernel_regress((wv.array() + 0.37).matrix(), yv, 0.1) - base) <= 1e-12 * base);
    Eigen::VectorXd up = wv;
    up[4] += 0.05;
    CHECK(kernel_regress(up, yv, 0.1) > base);

    std::vector<double> scaled = yv;
    for (double& v : scaled) v *= 3.5;
    const double scaled_out = kernel_regress(wv, scaled, 0.1);
    CHECK(scaled_out == doctest::Approx(3.5 * base).epsilon(1e-12));
  }
}

TEST_CASE("segment_material and the retrieval limit") {
  CHECK(segment_material(vec({0.2, 0.9, 0.1})) == 1);
  CHECK(segment_material(vec({0.5, 0.5})) == 0);
  CHECK(segment_material(vec({-0.5, 0.1, 0.1})) == 1);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> y(1.0, 5000.0);
  int checked = 0;
  while (checked < 500) {
    Eigen::VectorXd wv(4);
    std::vector<double> yv(4);
    for (int i = 0; i < 4; ++i) {
      wv[i] = u(rng);
      yv[static_cast<std::size_t>(i)] = y(rng);
    }
    std::vector<double> sorted(wv.data(), wv.data() + 4);
    std::sort(sorted.rbegin(), sorted.rend());
    if (sorted[0] - sorted[1] < 0.01) continue;
    const double want = yv[segment_material(wv)];
    CHECK(std::abs(kernel_regress(wv, yv, 1e-6) - want) <= 1e-6 * want);
    ++checked;
  }
}

TEST_CASE("build_field") {
  const std::vector<Eigen::Vector3d> pts{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  SUBCASE("single material") {
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(4, 3);
    f.col(0).setOnes();
    TableText text({{"clay", {0.0f, 1.0f, 0.0f}}});
    const auto field = build_field(cloud_from(pts, f), dict({{"clay", {4, 6}}}), text, KernelConfig{});
    for (double v : field.values) CHECK(v == 5.0);
  }
  SUBCASE("features equal to text embeddings segment exactly") {
    Eigen::MatrixXd f(4, 3);
    f << 1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 0, 0;
    TableText text({{"a", {1, 0, 0}}, {"b", {0, 2, 0}}, {"c", {0, 0, 1}}});
    const auto d = dict({{"a", {100, 100}}, {"b", {200, 300}}, {"c", {900, 900}}});
    const auto field = build_field(cloud_from(pts, f), d, text, KernelConfig{0.01, "{name}", false});
    CHECK(field.material == std::vector<std::uint32_t>{0, 1, 2, 0});
    CHECK(field.material_values == std::vector<double>{100, 250, 900});
    CHECK(field.weights(1, 1) == doctest::Approx(1.0));
    CHECK(field.values[2] == doctest::Approx(900).epsilon(1e-6));

    KernelConfig retrieval{0.01, "{name}", true};
    const auto r = build_field(cloud_from(pts, f), d, text, retrieval);
    CHECK(r.values == std::vector<double>{100, 250, 900, 100});
    CHECK(r.mixing(1) == vec({0, 1, 0}));
    CHECK(field.mixing(0).sum() == doctest::Approx(1.0));
  }
  SUBCASE("uniform features give a uniform field") {
    Eigen::MatrixXd f(4, 3);
    f.rowwise() = Eigen::RowVector3d(0.6, 0.8, 0.0);
    TableText text({{"a", {1, 0, 0}}, {"b", {0, 1, 0}}});
    const auto field =
        build_field(cloud_from(pts, f), dict({{"a", {100, 100}}, {"b", {500, 500}}}), text, KernelConfig{});
    for (double v : field.values) CHECK(v == field.values[0]);
  }
  SUBCASE("prompt template and provider errors") {
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(4, 3);
    f.col(0).setOnes();
    TableText text({{"a photo of oak", {1, 0, 0}}});
    KernelConfig cfg;
    cfg.text_prompt_template = "a photo of {name}";
    build_field(cloud_from(pts, f), dict({{"oak", {700, 700}}}), text, cfg);
    CHECK(text.seen == std::vector<std::string>{"a photo of oak"});
    CHECK_THROWS_AS(build_field(cloud_from(pts, f), dict({{"pine", {500, 500}}}), text, cfg), Error);
  }
  SUBCASE("invalid inputs") {
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(4, 3);
    f.col(0).setOnes();
    TableText text({{"a", {1, 0, 0}}});
    CHECK_THROWS_AS(build_field(cloud_from(pts, f), MaterialDictionary{}, text, KernelConfig{}), Error);
    CHECK_THROWS_AS(build_field(cloud_from(pts, f), dict({{"a", {1, 1}}}), text, KernelConfig{0.0, "{name}", false}),
                    Error);
  }
}

TEST_CASE("query_field") {
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(2, 2);
  f.col(0).setOnes();
  Eigen::MatrixXd text(2, 2);
  text << 1, 0, 0, 1;
  PropertyField field = build_field(cloud_from({{0, 0, 0}, {1, 0, 0}}, f),
                                    dict({{"a", {1, 1}}, {"b", {1, 1}}}), text, KernelConfig{});
  field.values = {1.0, 2.0};
  CHECK(query_field(field, {0.1, 0, 0}) == 1.0);
  CHECK(query_field(field, {1, 0, 0}) == 2.0);
  CHECK(query_field(field, {0.5, 0, 0}) == 1.0);
  CHECK_THROWS_AS(query_field(PropertyField{}, {0, 0, 0}), Error);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Eigen::Vector3d> pts(1000);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(1000, 2);
    feats.col(0).setOnes();
    PropertyField big = build_field(cloud_from(pts, feats), dict({{"a", {1, 1}}, {"b", {1, 1}}}), text, KernelConfig{});
    for (std::size_t i = 0; i < big.values.size(); ++i) big.values[i] = static_cast<double>(i);
    for (int q = 0; q < 100; ++q) {
      const Eigen::Vector3d x(u(rng), u(rng), u(rng));
      CHECK(query_field(big, x) == static_cast<double>(oracle::nearest(pts, x)));
    }
  }
}
