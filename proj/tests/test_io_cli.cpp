#include <qvident/cli.hpp>

#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qvident;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

const char* kForwardConfig =
    "# shipped regression instance\n"
    "problem.dim = 1\nproblem.n = 64\nproblem.p = 2\nproblem.phi = zero\n"
    "problem.c_variant = affine_clamped\nproblem.c_alpha = 0.5\nproblem.c_beta = 0.25\n"
    "problem.c_floor = 0.1\nproblem.c0 = 1\nproblem.m_const = 1\n"
    "admissible.c1 = 0.5\nadmissible.c2 = 3\nadmissible.c3 = 10\n"
    "inverse.kappa = 1e-6\ninverse.misfit_mode = gradient\ninverse.block_size = 32\n"
    "inverse.z_file = z.field\nsolver.seed = 7\n";

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("qvident_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    put(dir_ / "run.cfg", kForwardConfig);
    const Grid g(1, 64);
    std::vector<double> a(64, 1.0);
    std::fill(a.begin() + 32, a.end(), 2.0);
    io::write_field_file(dir_ / "a_true.field", CellField(g, a));
    io::write_field_file(dir_ / "a_one.field", CellField(g, 1.0));
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path at(const std::string& name) const { return dir_ / name; }

  cli::Streams quiet() { return cli::Streams{out_, err_}; }

  fs::path dir_;
  std::ostringstream out_;
  std::ostringstream err_;
};

}  // namespace

TEST(FieldFile, RoundTripIsBitwise) {
  Rng rng(71);
  for (int dim : {1, 2}) {
    const Grid g(dim, 7);
    const auto u = testing_support::random_node(g, rng, 1e3);
    const auto a = testing_support::random_cell(g, rng, 1e-300, 1.0);
    const auto w = testing_support::random_vector(g, rng, 1e-5);
    std::stringstream s1, s2, s3;
    io::write_field(s1, io::FieldKind::node, g, u.values());
    io::write_field(s2, io::FieldKind::cell, g, a.values());
    io::write_field(s3, io::FieldKind::vector, g, w.values(), {{"seed", "3"}});
    const auto fu = io::read_field(s1);
    const auto fa = io::read_field(s2);
    const auto fw = io::read_field(s3);
    EXPECT_EQ(NodeField(fu.grid, fu.values), u);
    EXPECT_EQ(CellField(fa.grid, fa.values), a);
    EXPECT_EQ(VectorField(fw.grid, fw.values), w);
    ASSERT_EQ(fw.meta.size(), 1u);
    EXPECT_EQ(fw.meta[0].second, "3");
  }
}

TEST(FieldFile, RejectsInconsistentFiles) {
  std::istringstream short_rows("# kind: node\n# dim: 1\n# n: 4\n0,1\n1,2\n");
  EXPECT_THROW(io::read_field(short_rows), std::invalid_argument);
  std::istringstream bad_kind("# kind: face\n# dim: 1\n# n: 2\n0,1\n");
  EXPECT_THROW(io::read_field(bad_kind), std::invalid_argument);
  std::istringstream no_header("0,1\n");
  EXPECT_THROW(io::read_field(no_header), std::invalid_argument);
  std::istringstream wrong_width("# kind: vector\n# dim: 2\n# n: 1\n0,1\n");
  EXPECT_THROW(io::read_field(wrong_width), std::invalid_argument);
}

TEST(RunConfig, RejectsUnknownAndNamesMissingKeys) {
  std::istringstream unknown("problem.dim = 1\nproblem.colour = red\n");
  EXPECT_THROW(io::RunConfig::parse(unknown), InvalidConfig);
  std::istringstream dup("problem.dim = 1\nproblem.dim = 2\n");
  EXPECT_THROW(io::RunConfig::parse(dup), InvalidConfig);
  std::istringstream partial("problem.dim = 1 # one\nproblem.n = 8\n");
  const auto cfg = io::RunConfig::parse(partial);
  EXPECT_EQ(cfg.integer("problem.dim"), 1);
  try {
    io::build_problem(cfg);
    FAIL();
  } catch (const InvalidConfig& e) {
    EXPECT_NE(std::string(e.what()).find("problem.p"), std::string::npos);
  }
}

TEST(RunConfig, BuildsTheShippedProblem) {
  std::istringstream in(kForwardConfig);
  const auto cfg = io::RunConfig::parse(in);
  const auto prob = io::build_problem(cfg);
  EXPECT_EQ(prob.grid, Grid(1, 64));
  EXPECT_EQ(prob.constraint.kind(), ConstraintSpec::Kind::affine_clamped);
  EXPECT_EQ(prob.m, NodeField(prob.grid, 1.0));
  EXPECT_EQ(io::build_qvi_options(cfg).minty_seed, 7u);
  EXPECT_EQ(io::build_misfit_mode(cfg), MisfitMode::gradient);
}

TEST_F(CliTest, SynthIsDeterministicAndNoiseFreeMatchesForward) {
  ASSERT_EQ(cli::synth(at("run.cfg"), at("a_true.field"), 0.0, at("z0.field"), {}, quiet()), 0);
  ASSERT_EQ(cli::synth(at("run.cfg"), at("a_true.field"), 0.0, at("z0b.field"), {}, quiet()), 0);
  EXPECT_EQ(slurp(at("z0.field")), slurp(at("z0b.field")));
  ASSERT_EQ(cli::forward(at("run.cfg"), at("a_true.field"), at("u.field"), at("rep.txt"), quiet()), 0);
  const auto u = io::read_node_field(at("u.field"));
  EXPECT_EQ(io::read_vector_field(at("z0.field")), gradient(u.grid(), u));

  ASSERT_EQ(cli::synth(at("run.cfg"), at("a_true.field"), 0.01, at("z1.field"), {}, quiet()), 0);
  ASSERT_EQ(cli::synth(at("run.cfg"), at("a_true.field"), 0.01, at("z2.field"), {}, quiet()), 0);
  EXPECT_EQ(slurp(at("z1.field")), slurp(at("z2.field")));
  ASSERT_EQ(cli::synth(at("run.cfg"), at("a_true.field"), 0.01, at("z3.field"), 99, quiet()), 0);
  EXPECT_NE(slurp(at("z1.field")), slurp(at("z3.field")));

  const auto f = io::read_field_file(at("z1.field"));
  bool has_seed = false, has_sigma = false;
  for (const auto& [k, v] : f.meta) {
    has_seed = has_seed || (k == "seed" && v == "7");
    has_sigma = has_sigma || (k == "sigma" && v == "0.01");
  }
  EXPECT_TRUE(has_seed);
  EXPECT_TRUE(has_sigma);
}

TEST_F(CliTest, SynthNoiseHasTheRequestedSpread) {
  // state mode so the noise sits on the 63 nodal values
  put(at("state.cfg"), std::string(kForwardConfig) + "solver.max_outer = 100\n");
  std::string text = slurp(at("state.cfg"));
  text.replace(text.find("misfit_mode = gradient"), 22, "misfit_mode = state");
  put(at("state.cfg"), text);
  ASSERT_EQ(cli::synth(at("state.cfg"), at("a_true.field"), 0.0, at("z0.field"), {}, quiet()), 0);
  ASSERT_EQ(cli::synth(at("state.cfg"), at("a_true.field"), 0.01, at("z1.field"), {}, quiet()), 0);
  const auto z0 = io::read_node_field(at("z0.field"));
  const auto z1 = io::read_node_field(at("z1.field"));
  double mean = 0.0, sq = 0.0;
  const auto N = static_cast<double>(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) mean += (z1[i] - z0[i]) / N;
  for (std::size_t i = 0; i < z0.size(); ++i) sq += (z1[i] - z0[i] - mean) * (z1[i] - z0[i] - mean);
  const double sd = std::sqrt(sq / (N - 1.0));
  EXPECT_GE(sd, 0.007);
  EXPECT_LE(sd, 0.013);
}

TEST_F(CliTest, SynthRejectsBadInput) {
  EXPECT_EQ(cli::synth(at("run.cfg"), at("a_true.field"), -1.0, at("z.field"), {}, quiet()), 3);
  io::write_field_file(at("a_bad.field"), CellField(Grid(1, 64), 5.0));  // above admissible.c2
  EXPECT_EQ(cli::synth(at("run.cfg"), at("a_bad.field"), 0.0, at("z.field"), {}, quiet()), 3);
  EXPECT_EQ(cli::synth(at("nope.cfg"), at("a_true.field"), 0.0, at("z.field"), {}, quiet()), 3);
}

TEST_F(CliTest, ForwardReportsAndExitCodes) {
  ASSERT_EQ(cli::forward(at("run.cfg"), at("a_one.field"), at("u.field"), at("rep.txt"), quiet()), 0);
  std::ifstream rin(at("rep.txt"));
  const auto rep = io::parse_key_values(rin);
  EXPECT_EQ(rep.at("converged"), "true");
  EXPECT_LE(io::parse_double(rep.at("fp_residual"), "fp"), 1e-6);
  EXPECT_EQ(rep.count("wall_time"), 0u);

  std::string text = kForwardConfig;
  text.replace(text.find("problem.m_const = 1"), 19, "problem.m_const = 0");
  put(at("zero.cfg"), text);
  ASSERT_EQ(cli::forward(at("zero.cfg"), at("a_one.field"), at("u0.field"), at("rep0.txt"), quiet()), 0);
  EXPECT_EQ(io::read_node_field(at("u0.field")).max_abs(), 0.0);

  text = kForwardConfig;
  text.replace(text.find("affine_clamped"), 14, "constant");
  put(at("const.cfg"), text);
  ASSERT_EQ(cli::forward(at("const.cfg"), at("a_one.field"), at("uc.field"), at("repc.txt"), quiet()), 0);
  std::ifstream cin_(at("repc.txt"));
  EXPECT_LE(std::stoi(io::parse_key_values(cin_).at("outer_iterations")), 2);

  put(at("slow.cfg"), std::string(kForwardConfig) + "solver.max_inner = 1\nsolver.max_outer = 1\n");
  EXPECT_EQ(cli::forward(at("slow.cfg"), at("a_one.field"), at("us.field"), at("reps.txt"), quiet()), 2);

  io::write_field_file(at("a_small.field"), CellField(Grid(1, 8), 1.0));
  EXPECT_EQ(cli::forward(at("run.cfg"), at("a_small.field"), at("u.field"), at("rep.txt"), quiet()), 3);
}

TEST_F(CliTest, InvertRecoversAndStopsAtOptimum) {
  ASSERT_EQ(cli::synth(at("run.cfg"), at("a_true.field"), 0.0, at("z.field"), {}, quiet()), 0);
  ASSERT_EQ(cli::invert(at("run.cfg"), at("a_out.field"), at("hist.csv"), quiet()), 0);
  const auto a = io::read_cell_field(at("a_out.field"));
  double err = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) err += std::abs(a[c] - (c < 32 ? 1.0 : 2.0));
  EXPECT_LE(err / 96.0, 0.05);
  EXPECT_EQ(slurp(at("hist.csv")).rfind("eval,J,misfit,tv,converged\n", 0), 0u);

  // data synthesized at the starting point (c1+c2)/2 -> one evaluation, J = 0
  std::string text = kForwardConfig;
  text.replace(text.find("inverse.kappa = 1e-6"), 20, "inverse.kappa = 0");
  put(at("k0.cfg"), text);
  io::write_field_file(at("a_mid.field"), CellField(Grid(1, 64), 1.75));
  ASSERT_EQ(cli::synth(at("k0.cfg"), at("a_mid.field"), 0.0, at("z.field"), {}, quiet()), 0);
  ASSERT_EQ(cli::invert(at("k0.cfg"), at("a_mid_out.field"), at("hist0.csv"), quiet()), 0);
  std::ifstream hin(at("hist0.csv"));
  std::string header, row, extra;
  std::getline(hin, header);
  std::getline(hin, row);
  EXPECT_FALSE(std::getline(hin, extra));
  EXPECT_NEAR(io::parse_double(io::split(row, ',')[1], "J"), 0.0, 1e-10);
}

TEST_F(CliTest, InvertNamesMissingDataKey) {
  std::string text = kForwardConfig;
  text.erase(text.find("inverse.z_file"), std::string("inverse.z_file = z.field\n").size());
  put(at("noz.cfg"), text);
  EXPECT_EQ(cli::invert(at("noz.cfg"), at("a.field"), at("h.csv"), quiet()), 3);
  EXPECT_NE(err_.str().find("inverse.z_file"), std::string::npos);
}

TEST_F(CliTest, VerifyPassesOwnSolutionAndFailsPerturbed) {
  ASSERT_EQ(cli::forward(at("run.cfg"), at("a_one.field"), at("u.field"), at("rep.txt"), quiet()), 0);
  EXPECT_EQ(cli::verify(at("run.cfg"), at("a_one.field"), at("u.field"), 200, {}, quiet()), 0) << out_.str();
  EXPECT_NE(out_.str().find("hoelder_self"), std::string::npos);

  auto u = io::read_node_field(at("u.field"));
  u[31] += 0.1;
  io::write_field_file(at("u_bad.field"), u);
  out_.str("");
  EXPECT_EQ(cli::verify(at("run.cfg"), at("a_one.field"), at("u_bad.field"), 200, {}, quiet()), 1);
  EXPECT_NE(out_.str().find("minty             FAIL"), std::string::npos) << out_.str();

  EXPECT_EQ(cli::verify(at("run.cfg"), at("a_one.field"), at("u.field"), 0, {}, quiet()), 3);
}

TEST_F(CliTest, SweepMatchesInvertAndFlattens) {
  ASSERT_EQ(cli::synth(at("run.cfg"), at("a_true.field"), 0.0, at("z.field"), {}, quiet()), 0);
  ASSERT_EQ(cli::invert(at("run.cfg"), at("a_out.field"), at("hist.csv"), quiet()), 0);
  ASSERT_EQ(cli::sweep(at("run.cfg"), {1e-6}, at("one.csv"), quiet()), 0);
  const auto lines = io::split(slurp(at("one.csv")), '\n');
  ASSERT_GE(lines.size(), 2u);
  const auto cols = io::split(lines[1], ',');
  EXPECT_EQ(cols[4], field_digest(io::read_cell_field(at("a_out.field"))));
  EXPECT_EQ(cols[5], "ok");

  ASSERT_EQ(cli::sweep(at("run.cfg"), {1e-6, 1e6}, at("two.csv"), quiet()), 0);
  const auto rows = io::split(slurp(at("two.csv")), '\n');
  const double tv_small = io::parse_double(io::split(rows[1], ',')[3], "tv");
  const double tv_large = io::parse_double(io::split(rows[2], ',')[3], "tv");
  EXPECT_LE(tv_large, tv_small + 1e-9);

  EXPECT_EQ(cli::sweep(at("run.cfg"), {}, at("none.csv"), quiet()), 3);
  EXPECT_THROW(cli::parse_kappa_list("1e-6,abc"), InvalidConfig);
  EXPECT_EQ(cli::parse_kappa_list("1e-6, 2"), (std::vector<double>{1e-6, 2.0}));
}
