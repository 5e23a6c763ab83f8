#include <gtest/gtest.h>

#include "branchimm/config.hpp"
#include "branchimm/report.hpp"
#include "branchimm/rng.hpp"

using namespace branchimm;

namespace {
RunConfig random_config(Rng& rng) {
  RunConfig c;
  c.command = "simulate";
  c.rates = {0.1 + rng.uniform(), 1.2 + rng.uniform(), 0.5 + rng.uniform(), 1.0};
  switch (rng() % 3) {
    case 0:
      break;
    case 1:
      c.space = FiniteSet::ring(3 + rng() % 4, 0.25 + rng.uniform());
      break;
    default: {
      Torus t{static_cast<int>(4 + rng() % 8), 1, LatticeKernel::nearest_neighbor(1)};
      c.space = t;
      if (rng() % 2) {
        SpatialField f;
        f.torus = t;
        f.beta.assign(t.sites(), 1.0);
        f.mu.assign(t.sites(), 2.0);
        f.k.breakpoints = {0.0, 1.5};
        f.k.values = {std::vector<double>(t.sites(), 0.5), std::vector<double>(t.sites(), 1.5)};
        f.delta1 = 0.5;
        f.delta2 = 1.5;
        c.environment = f;
      }
    }
  }
  if (std::holds_alternative<SingleSite>(c.space) && rng() % 2) {
    ByPopulationLevel e{RateLaw::two_point(0.5, 1.0, rng.uniform()), RateLaw::uniform(1.0, 2.0),
                        RateLaw::triangular(0.5, 0.75, 1.0), 0.5, 2.0, rng()};
    c.environment = e;
  }
  c.simulation.replicas = 1 + rng() % 1000;
  c.simulation.horizon = 10.0 * rng.uniform() + 1.0;
  c.simulation.seed = rng();
  c.simulation.grid = {0.5, 1.0};
  c.simulation.n0 = rng() % 2 ? InitialCondition::fixed(rng() % 5) : InitialCondition::poisson(rng.uniform());
  c.options = {{"order", 3}};
  return c;
}
}  // namespace

TEST(Config, RoundTripProperty) {
  Rng rng(123);
  for (int i = 0; i < 200; ++i) {
    const auto c = random_config(rng);
    const auto back = parse_config(to_json(c));
    EXPECT_EQ(back, c) << to_json(c).dump();
    EXPECT_EQ(config_hash(back), config_hash(c));
  }
}

TEST(Config, DefaultsAndGridObject) {
  const auto c = parse_config_text(R"({"rates": {"beta": 1, "mu": 2, "k": 1},
      "simulation": {"horizon": 4, "grid": {"start": 0, "stop": 4, "step": 0.5}}})");
  EXPECT_EQ(c.simulation.grid.size(), 9u);
  EXPECT_DOUBLE_EQ(c.simulation.grid.back(), 4.0);
  EXPECT_EQ(c.rates.kappa, 1.0);
  EXPECT_TRUE(std::holds_alternative<SingleSite>(c.space));
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse_config_text("{not json"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"ratez": {}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"rates": {"beta": -1, "mu": 2, "k": 1}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"rates": {"beta": 1, "mu": 2, "k": 1, "gamma": 3}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"space": {"type": "torus", "side": 4}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"space": {"type": "torus", "side": 4},
      "kernel": {"support": [{"offset": [1], "weight": 0.9}, {"offset": [-1], "weight": 0.1}]}})"),
               ConfigError);
  EXPECT_THROW(parse_config_text(R"({"simulation": {"horizon": 1, "grid": [0.5, 2]}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"simulation": {"n0": -3}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"environment": {"type": "spatial_field", "beta": 1, "mu": 2, "k": 1,
      "delta1": 0.5, "delta2": 1.5}})"),
               ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, HashChangesWithContent) {
  RunConfig a, b;
  b.simulation.seed = a.simulation.seed + 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Report, CsvFormatting) {
  CsvTable t({"a", "b", "c"});
  t.add(1, 0.1, true);
  t.add(std::string("x"), 1e-20, false);
  EXPECT_EQ(t.body(), "a,b,c\n1,0.1,true\nx,1e-20,false\n");
  EXPECT_THROW(t.add(1, 2), std::invalid_argument);
  CsvTable q({"s"});
  q.add_row({"a,b \"c\""});
  EXPECT_EQ(q.body(), "s\n\"a,b \"\"c\"\"\"\n");
  OutputHeader h;
  h.seed = 5;
  h.config_hash = "abc";
  const auto text = t.render(h);
  EXPECT_EQ(text.rfind("# branchimm ", 0), 0u);
  EXPECT_NE(text.find("config=abc seed=5 utc="), std::string::npos);
  EXPECT_EQ(csv_body(text), t.body());
}

TEST(Report, FormatDoubleRoundTrips) {
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double v = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<double>(rng() % 40) - 20.0);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(NAN), "nan");
}

TEST(Report, ClaimJsonLinesRoundTrip) {
  std::vector<ClaimRow> rows{{"m1 limit", "gw-moments", 3.0, 2.99, 0.01, -1.0, true},
                             {"exact", "bd-invariant", 0.5, 0.5, NAN, NAN, true}};
  EXPECT_EQ(claims_from_json_lines(claims_to_json_lines(rows)), rows);
  EXPECT_EQ(report_summary({}), "");
  const auto s = report_summary(rows);
  EXPECT_NE(s.find("gw-moments"), std::string::npos);
  EXPECT_NE(s.find("PASS"), std::string::npos);
}
