#include <gtest/gtest.h>

#include <sstream>

#include "dynbps/config.hpp"
#include "dynbps/io.hpp"
#include "dynbps/simulate.hpp"

using namespace dynbps;

namespace {

const char* kMinimal =
    "time,location_id,lon,lat,y_1,x_1\n"
    "1,a,0,0,1.5,1\n"
    "1,b,1,0,2.5,1\n"
    "2,b,1,0,3.5,1\n"
    "# comment\n"
    "2,a,0,0,0.5,1\n"
    "\n"
    "3,a,0,0,-1,1\n"
    "3,b,1,0,-2,1\n";

SpatioTemporalDataset parse(const std::string& text, int first_time = 1) {
  std::istringstream in(text);
  return read_panel(in, "test.csv", first_time);
}

template <typename F>
Error catch_error(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected an Error";
  return Error(ErrorKind::InputError, "none");
}

std::string without(const std::string& text, const std::string& line) {
  std::string s = text;
  s.erase(s.find(line), line.size());
  return s;
}

}  // namespace

TEST(Panel, ReadsLongFormat) {
  const auto d = parse(kMinimal);
  ASSERT_EQ(d.T(), 3);
  ASSERT_EQ(d.n(), 2);
  EXPECT_EQ(d.q(), 1);
  EXPECT_EQ(d.p(), 1);
  EXPECT_EQ(d.locations.ids, (std::vector<std::string>{"a", "b"}));
  EXPECT_DOUBLE_EQ(d.Y[0](0, 0), 1.5);
  EXPECT_DOUBLE_EQ(d.Y[1](0, 0), 0.5);
  EXPECT_DOUBLE_EQ(d.Y[1](1, 0), 3.5);
  EXPECT_DOUBLE_EQ(d.Y[2](1, 0), -2);
  EXPECT_DOUBLE_EQ(d.locations.coords(1, 0), 1);
}

TEST(Panel, NaturalLocationOrder) {
  const auto d = parse(
      "time,location_id,lon,lat,y_1\n"
      "1,s10,0,0,1\n1,s2,1,0,1\n1,s1,2,0,1\n");
  EXPECT_EQ(d.locations.ids, (std::vector<std::string>{"s1", "s2", "s10"}));
}

TEST(Panel, MissingCellNamesTheCell) {
  const auto e = catch_error([] { parse(without(kMinimal, "2,a,0,0,0.5,1\n")); });
  EXPECT_EQ(e.kind(), ErrorKind::GridError);
  EXPECT_NE(std::string(e.what()).find("time=2, location=a"), std::string::npos) << e.what();
}

TEST(Panel, DuplicateCell) {
  const auto e = catch_error([] { parse(std::string(kMinimal) + "3,b,1,0,7,1\n"); });
  EXPECT_EQ(e.kind(), ErrorKind::GridError);
  EXPECT_NE(std::string(e.what()).find("duplicated cell (time=3, location=b)"), std::string::npos);
}

TEST(Panel, ParseErrorReportsLineAndColumn) {
  std::string text = kMinimal;
  text.replace(text.find("3.5"), 3, "x.5");
  const auto e = catch_error([&] { parse(text); });
  EXPECT_EQ(e.kind(), ErrorKind::ParseError);
  EXPECT_NE(std::string(e.what()).find("line 4, column 5 (y_1)"), std::string::npos) << e.what();
}

TEST(Panel, SchemaErrors) {
  EXPECT_EQ(catch_error([] { parse(""); }).kind(), ErrorKind::SchemaError);
  EXPECT_EQ(catch_error([] { parse("time,id,lon,lat,y_1\n1,a,0,0,1\n"); }).kind(), ErrorKind::SchemaError);
  EXPECT_EQ(catch_error([] { parse("time,location_id,lon,lat,y_1\n1,a,0,0\n"); }).kind(),
            ErrorKind::SchemaError);
  EXPECT_EQ(catch_error([] { parse("time,location_id,lon,lat,y_1,z\n1,a,0,0,1,2\n"); }).kind(),
            ErrorKind::SchemaError);
}

TEST(Panel, GridErrors) {
  EXPECT_EQ(catch_error([] { parse("time,location_id,lon,lat,y_1\n"); }).kind(), ErrorKind::GridError);
  EXPECT_EQ(catch_error([] { parse("time,location_id,lon,lat,y_1\n1,a,0,0,1\n2,a,0,1,1\n"); }).kind(),
            ErrorKind::GridError);
  // Times must start at the expected first time.
  EXPECT_EQ(catch_error([] { parse("time,location_id,lon,lat,y_1\n2,a,0,0,1\n"); }).kind(),
            ErrorKind::GridError);
  EXPECT_EQ(parse("time,location_id,lon,lat,y_1\n5,a,0,0,1\n6,a,0,0,2\n", 5).T(), 2);
}

TEST(Panel, RoundTrip) {
  GeneratorSpec spec;
  spec.n = 7;
  spec.T = 4;
  spec.seed = 3;
  const auto data = generate_dataset(spec).train;
  std::ostringstream out;
  emit_panel(out, data, {"simulate", 3, "abc"});
  EXPECT_EQ(out.str().rfind("# dynbps version=", 0), 0u);
  const auto back = parse(out.str());
  ASSERT_EQ(back.T(), data.T());
  ASSERT_EQ(back.n(), data.n());
  // Ids s1..s7 sort naturally, so the order is preserved.
  EXPECT_EQ(back.locations.ids, data.locations.ids);
  EXPECT_LT((back.locations.coords - data.locations.coords).cwiseAbs().maxCoeff(), 1e-11);
  for (int t = 0; t < data.T(); ++t) {
    const auto k = static_cast<std::size_t>(t);
    EXPECT_LT(((back.Y[k] - data.Y[k]).array() / data.Y[k].array().abs().max(1.0)).abs().maxCoeff(), 1e-11);
    EXPECT_LT(((back.X[k] - data.X[k]).array() / data.X[k].array().abs().max(1.0)).abs().maxCoeff(), 1e-11);
  }
}

TEST(Locations, ReadsDesign) {
  std::istringstream in("location_id,lon,lat,x_1,x_2\nn1,0.1,0.2,1,2\nn2,0.3,0.4,3,4\n");
  const auto f = read_locations(in);
  ASSERT_EQ(f.locations.size(), 2);
  EXPECT_EQ(f.design.cols(), 2);
  EXPECT_DOUBLE_EQ(f.design(1, 0), 3);
  EXPECT_DOUBLE_EQ(f.locations.coords(0, 1), 0.2);
}

TEST(Csv, WriterChecksColumnCount) {
  std::ostringstream out;
  CsvWriter w(out, {"fit", 1, "h"}, {"a", "b"});
  w.field(1).field(2.5).end_row();
  EXPECT_EQ(out.str(), "# dynbps version=" + std::string(kVersion) + " command=fit seed=1 config_hash=h\na,b\n1,2.5\n");
  w.field(1);
  EXPECT_THROW(w.end_row(), Error);
}

TEST(Config, ParsesSections) {
  const auto c = parse_config(
      "[data]\npanel = p.csv\noutput = out\n"
      "[grid]\nalpha = 0.5, 0.8\nphi = 2,4,6\n"
      "[prior]\ncoef_var = 0.1\n"
      "[run]\nseed = 42\ndraws = 50\naggregation = consensus\nforecast_mode = marginal\n"
      "[seasonal]\nenabled = true\nstart_month = 3\n",
      {}, "/base");
  EXPECT_EQ(c.panel, "/base/p.csv");
  EXPECT_EQ(c.output, "/base/out");
  EXPECT_EQ(c.fit_archive, "/base/out/fit.bin");
  EXPECT_EQ(c.grid().size(), 6);
  EXPECT_DOUBLE_EQ(c.prior.coef_var, 0.1);
  EXPECT_EQ(c.require_seed(), 42u);
  EXPECT_EQ(c.draws, 50);
  EXPECT_EQ(c.aggregation, Aggregation::Consensus);
  EXPECT_EQ(c.forecast_mode, ForecastMode::Marginal);
  EXPECT_TRUE(c.seasonal);
  // t = 1 is March, so the dummy for March is set.
  const Matrix x = c.design_at(Matrix::Ones(2, 1), 1);
  ASSERT_EQ(x.cols(), 1 + kSeasonalDummies);
  EXPECT_DOUBLE_EQ(x.rightCols(kSeasonalDummies).sum(), 2.0);
}

TEST(Config, RejectsUnknownAndMalformed) {
  for (const char* text : {"[run]\nsed = 1\n", "[runs]\nseed = 1\n", "[run]\ndraws = many\n",
                           "[grid]\nalpha = 1.5\n", "[run]\naggregation = median\n"}) {
    const auto e = catch_error([&] { parse_config(text); });
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError) << text;
  }
  EXPECT_EQ(catch_error([] { parse_config("[run]\ndraws = 5\n").require_seed(); }).kind(),
            ErrorKind::ConfigError);
}

TEST(Config, OverridesAndHash) {
  const std::string text = "[run]\nseed = 1\ndraws = 10\n";
  const auto a = parse_config(text);
  const auto b = parse_config(text, {"run.draws=20"});
  EXPECT_EQ(b.draws, 20);
  EXPECT_NE(a.hash, b.hash);
  EXPECT_EQ(a.hash, parse_config("[run]\ndraws = 10\nseed = 1\n").hash);
  EXPECT_EQ(a.hash, parse_config(text, {"run.threads=8"}).hash);
  EXPECT_EQ(a.hash.size(), 16u);
  EXPECT_EQ(catch_error([&] { parse_config(text, {"draws=3"}); }).kind(), ErrorKind::ConfigError);
  EXPECT_EQ(catch_error([&] { parse_config(text, {"run.bogus=3"}); }).kind(), ErrorKind::ConfigError);
}

TEST(FitArchive, RoundTrip) {
  GeneratorSpec spec;
  spec.n = 6;
  spec.T = 5;
  spec.seed = 9;
  const auto data = generate_dataset(spec).train;
  const auto grid = ModelGrid::cross({0.5, 0.9}, {2.0, 5.0});
  const auto prior = Prior::standard(data.locations, data.p(), data.q());
  EngineOptions opts;
  opts.aggregation = Aggregation::Consensus;
  const auto fit = parallel_forward_filter(data, grid, prior, opts);
  std::stringstream buf;
  write_fit(buf, fit);
  const auto back = read_fit(buf);
  ASSERT_EQ(back.models(), fit.models());
  EXPECT_EQ(back.T, fit.T);
  EXPECT_EQ(back.locations.ids, fit.locations.ids);
  EXPECT_EQ(back.options.aggregation, Aggregation::Consensus);
  for (Index j = 0; j < fit.models(); ++j)
    for (int t = 0; t <= fit.T; ++t) {
      const auto& s = fit.states[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)];
      const auto& r = back.states[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)];
      EXPECT_EQ(s.m, r.m);
      EXPECT_EQ(s.C, r.C);
      EXPECT_EQ(s.nu, r.nu);
      EXPECT_EQ(s.Psi, r.Psi);
    }
  EXPECT_EQ(back.weights.global, fit.weights.global);
  EXPECT_EQ(back.weights.consensus, fit.weights.consensus);
  // Draws from the archived fit equal draws from the original.
  const auto d1 = weighted_backward_sample(fit, 5, 4);
  const auto d2 = weighted_backward_sample(back, 5, 4);
  for (Index r = 0; r < 5; ++r)
    for (Index s = 0; s < d1.slots(); ++s)
      EXPECT_EQ(d1.draws[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)],
                d2.draws[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)]);
}

TEST(FitArchive, RejectsGarbage) {
  std::stringstream buf("not an archive at all");
  EXPECT_EQ(catch_error([&] { read_fit(buf); }).kind(), ErrorKind::ParseError);
}
