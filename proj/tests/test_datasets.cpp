#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "eqdisc/datasets.hpp"

using namespace eqdisc;

namespace {

PdeGrid small_grid(std::vector<std::string> fields = {"u"}) {
  PdeGrid g;
  g.system = "toy";
  g.field_names = fields;
  g.x = {0.0, 0.25, 16};
  g.t = {0.0, 0.1, 8};
  for (std::size_t f = 0; f < fields.size(); ++f) {
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < g.n_t(); ++i)
      for (std::size_t j = 0; j < g.n_x(); ++j)
        v[i * g.n_x() + j] = std::sin(g.x.at(j) + static_cast<double>(f)) * std::exp(-g.t.at(i));
    g.fields[fields[f]] = v;
  }
  g.truth = {{"u_xx", 1.0}};
  g.compute_features();
  return g;
}

}  // namespace

TEST(GeneratePde, BurgersShapeAndTruth) {
  const auto g = generate_pde(PdeSystem::Burgers);
  EXPECT_EQ(g.n_t(), 201u);
  EXPECT_EQ(g.n_x(), 256u);
  EXPECT_DOUBLE_EQ(g.x.start, -8.0);
  EXPECT_NEAR(g.x.at(255) + g.x.step, 8.0, 1e-12);
  EXPECT_NEAR(g.t.at(200), 10.0, 1e-12);
  ASSERT_EQ(g.truth.size(), 2u);
  EXPECT_EQ(g.truth[0].term, "u*u_x");
  EXPECT_DOUBLE_EQ(g.truth[0].coefficient, -1.0);
  EXPECT_EQ(g.truth[1].term, "u_xx");
  EXPECT_DOUBLE_EQ(g.truth[1].coefficient, 0.1);
  const auto names = g.operand_names();
  EXPECT_EQ(names, (std::vector<std::string>{"u", "x", "u_x", "u_xx", "u_xxx", "u_xxxx"}));
}

TEST(GeneratePde, ChafeeInfanteShapeAndTruth) {
  const auto g = generate_pde(PdeSystem::ChafeeInfante);
  EXPECT_EQ(g.n_t(), 200u);
  EXPECT_EQ(g.n_x(), 301u);
  std::map<std::string, double> truth;
  for (const auto& t : g.truth) truth[t.term] = t.coefficient;
  EXPECT_EQ(truth, (std::map<std::string, double>{{"u_xx", 1.0}, {"u", 1.0}, {"u^3", -1.0}}));
}

TEST(GeneratePde, Deterministic) {
  const auto a = generate_pde(PdeSystem::PdeDivide);
  const auto b = generate_pde(PdeSystem::PdeDivide);
  EXPECT_EQ(a.fields.at("u"), b.fields.at("u"));
  EXPECT_EQ(fingerprint(a), fingerprint(b));
}

TEST(GeneratePde, FeaturesRegenerateFromFields) {
  auto g = generate_pde(PdeSystem::Burgers);
  const auto before = g.features.at("u_xx");
  g.compute_features();
  EXPECT_EQ(g.features.at("u_xx"), before);
}

TEST(GeneratePde, NameLookup) {
  for (auto s : all_pde_systems()) EXPECT_EQ(pde_system_from_name(pde_system_name(s)), s);
  EXPECT_FALSE(pde_system_from_name("navier-stokes"));
}

TEST(OdeBench, TableRows) {
  ASSERT_EQ(odebench().size(), 16u);
  const auto& r1 = odebench_system(1);
  EXPECT_DOUBLE_EQ(r1.ic_train, 10.0);
  EXPECT_DOUBLE_EQ(r1.ic_test, 3.54);
  const auto& r16 = odebench_system(16);
  EXPECT_DOUBLE_EQ(r16.ic_train, -2.74);
  EXPECT_NEAR(evaluate_scalar(odebench_rhs(16), "x", 1.0), 0.21 - std::sin(1.0), 1e-15);
  EXPECT_NEAR(evaluate_scalar(odebench_rhs(1), "x", 2.0), (0.7 - 2.0 / 1.2) / 2.31, 1e-15);
}

TEST(OdeBench, TrainTrajectoryStartsAtTableCondition) {
  const auto tr = generate_odebench(16, WhichIc::Train);
  EXPECT_DOUBLE_EQ(tr.x.front(), -2.74);
  EXPECT_EQ(tr.t.size(), 512u);
  EXPECT_DOUBLE_EQ(tr.t.back(), 10.0);
  EXPECT_EQ(tr.system_id, 16);
  const auto te = generate_odebench(1, WhichIc::Test);
  EXPECT_DOUBLE_EQ(te.x.front(), 3.54);
}

TEST(OdeBench, RowOneApproachesFixedPoint) {
  const auto tr = generate_odebench(1, WhichIc::Train, 200.0, 2000);
  EXPECT_NEAR(tr.x.back(), 0.7 * 1.2, 1e-4);
}

TEST(OdeBench, XdotMatchesFiniteDifferencesAtSecondOrder) {
  auto fd_error = [](std::size_t n) {
    const auto tr = generate_odebench(16, WhichIc::Train, 10.0, n);
    double err = 0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double d = (tr.x[i + 1] - tr.x[i - 1]) / (tr.t[i + 1] - tr.t[i - 1]);
      err = std::max(err, std::abs(d - tr.xdot[i]));
    }
    return err;
  };
  const double e1 = fd_error(257), e2 = fd_error(513);
  EXPECT_LT(e2, e1);
  EXPECT_NEAR(e1 / e2, 4.0, 0.8);
}

TEST(GridFiles, RoundTrip) {
  const auto g = small_grid();
  const auto back = parse_grid(serialize_grid(g));
  EXPECT_EQ(back.system, g.system);
  EXPECT_EQ(back.field_names, g.field_names);
  EXPECT_EQ(back.fields.at("u"), g.fields.at("u"));
  EXPECT_EQ(back.x.count, g.x.count);
  EXPECT_EQ(back.t.step, g.t.step);
  ASSERT_EQ(back.truth.size(), 1u);
  EXPECT_EQ(back.truth[0].term, "u_xx");
  EXPECT_EQ(back.features.at("u_xx"), g.features.at("u_xx"));
  EXPECT_EQ(fingerprint(back), fingerprint(g));
}

TEST(GridFiles, SaveAndLoad) {
  const auto path = std::filesystem::temp_directory_path() / "eqdisc_test_grid.grid";
  const auto g = small_grid();
  save_grid(g, path.string());
  const auto back = load_grid(path.string());
  EXPECT_EQ(back.fields.at("u"), g.fields.at("u"));
  const auto any = load_dataset(path.string());
  EXPECT_TRUE(std::holds_alternative<PdeGrid>(any));
  std::filesystem::remove(path);
}

TEST(GridFiles, RowLengthMismatchIsFormatError) {
  auto text = serialize_grid(small_grid());
  const auto pos = text.find("data u\n") + 7;
  const auto comma = text.find(',', pos);
  text.erase(pos, comma - pos + 1);  // drop first value of the first row
  try {
    parse_grid(text);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
  }
}

TEST(GridFiles, OtherMalformedInputs) {
  EXPECT_THROW(parse_grid("not a grid"), FormatError);
  auto text = serialize_grid(small_grid());
  EXPECT_THROW(parse_grid(text.substr(0, text.size() / 2)), FormatError);
  auto bad = text;
  bad.replace(bad.find("data u"), 6, "frob u");
  EXPECT_THROW(parse_grid(bad), FormatError);
}

TEST(GridFiles, TwoFieldsAreOperands) {
  const auto g = parse_grid(serialize_grid(small_grid({"u", "v"})));
  EXPECT_TRUE(g.has_column("u"));
  EXPECT_TRUE(g.has_column("v"));
  EXPECT_TRUE(g.has_column("v_x"));
  const auto names = g.operand_names();
  EXPECT_NE(std::find(names.begin(), names.end(), "v"), names.end());
  const auto lib = SymbolLibrary::pde_with_operands(names);
  EXPECT_NO_THROW(parse("u*v_x + v_xx", lib));
}

TEST(TrajectoryFiles, RoundTripAndErrors) {
  const auto tr = generate_odebench(3, WhichIc::Test, 5.0, 64);
  const auto back = parse_trajectory(serialize_trajectory(tr));
  EXPECT_EQ(back.t, tr.t);
  EXPECT_EQ(back.x, tr.x);
  EXPECT_EQ(back.xdot, tr.xdot);
  EXPECT_EQ(back.system_id, 3);
  EXPECT_EQ(fingerprint(back), fingerprint(tr));

  EXPECT_THROW(parse_trajectory("t,x,xdot\n0,1\n"), FormatError);
  EXPECT_THROW(parse_trajectory("a,b,c\n0,1,2\n"), FormatError);
}

TEST(Fingerprint, ChangesWithAnyByte) {
  const auto g = small_grid();
  const auto base = fingerprint(g);
  auto h = g;
  h.fields["u"][5] = std::nextafter(h.fields["u"][5], 10.0);
  EXPECT_NE(fingerprint(h), base);
  auto k = g;
  k.truth[0].coefficient = 1.5;
  EXPECT_NE(fingerprint(k), base);
  auto s = g;
  s.system = "other";
  EXPECT_NE(fingerprint(s), base);
}

TEST(Fingerprint, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
