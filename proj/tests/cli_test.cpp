#include <gtest/gtest.h>

#include <filesystem>

#include "artemis/cli/commands.hpp"

using namespace artemis;
using namespace artemis::cli;

TEST(Registry, SetGetRoundTrip) {
  Settings s;
  Registry r(s);
  r.set("train.lr", "0.005");
  r.set("physics.kappa", "3");
  r.set("dslob.n_steps", "1234");
  r.set("dslob.variance_target", "false");
  r.set("train.variant", "A4");
  r.set("dslob.seed_model.garch.alpha", "0.07");
  EXPECT_EQ(s.train.lr, 0.005);
  EXPECT_EQ(s.train.physics.kappa, 3.0);
  EXPECT_EQ(s.dslob.n_steps, 1234);
  EXPECT_FALSE(s.dslob.variance_target);
  EXPECT_EQ(s.train.variant, train::Variant::A4_NoPhysics);
  EXPECT_EQ(s.dslob.seed_model.garch.alpha, 0.07);
  EXPECT_EQ(r.get("train.variant"), "A4_NoPhysics");
  EXPECT_EQ(r.get("train.lr"), "0.0050000000000000001");
  // echoed values parse back to the same bits
  Settings t;
  Registry r2(t);
  r2.load_text(r.echo(), "echo");
  EXPECT_EQ(r2.echo(), r.echo());
}

TEST(Registry, RejectsUnknownKeysAndBadValues) {
  Settings s;
  Registry r(s);
  EXPECT_THROW(r.set("train.nope", "1"), ContractViolation);
  EXPECT_THROW(r.set("train.epochs", "ten"), ContractViolation);
  EXPECT_THROW(r.set("train.epochs", "10x"), ContractViolation);
  EXPECT_THROW(r.set("train.rebalance", "yes"), ContractViolation);
  EXPECT_THROW(r.apply_override("train.lr"), ContractViolation);
  EXPECT_THROW(r.load_text("train.lr 0.1\n", "cfg"), ContractViolation);
}

TEST(Registry, ConfigTextAndOverrides) {
  Settings s;
  Registry r(s);
  r.load_text("# comment\n\n  train.epochs = 3   # trailing\r\nloss.lambda2=0.25\n", "cfg");
  r.apply_override("train.epochs=7");
  EXPECT_EQ(s.train.epochs, 7);
  EXPECT_EQ(s.train.weights.lambda2, 0.25);
}

TEST(Registry, EchoIsSortedFilteredAndOmitsThreads) {
  Settings s;
  Registry r(s);
  const std::string e = r.echo({"train."});
  EXPECT_EQ(e.find("train.threads"), std::string::npos);
  EXPECT_EQ(e.find("physics."), std::string::npos);
  EXPECT_LT(e.find("train.alpha"), e.find("train.batch"));
  for (const auto& k : r.keys()) EXPECT_NO_THROW(r.get(k)) << k;
}

TEST(Csv, QuotingAndRoundTrip) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  const auto path = (std::filesystem::temp_directory_path() / "artemis_cli_test.csv").string();
  write_csv(path, {"asset", "note"}, {{"A", "x,y"}, {"B", "line\nbreak"}, {"C", ""}});
  const auto rows = read_csv(path);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1], (std::vector<std::string>{"A", "x,y"}));
  EXPECT_EQ(rows[2], (std::vector<std::string>{"B", "line\nbreak"}));
  EXPECT_EQ(rows[3], (std::vector<std::string>{"C", ""}));
  std::filesystem::remove(path);
}

TEST(Commands, StageNamesPrefixErrors) {
  try {
    stage("load", [] { throw std::runtime_error("boom"); });
    FAIL();
  } catch (const StageError& e) {
    EXPECT_STREQ(e.what(), "load: boom");
  }
}

TEST(Commands, UsageErrorsExitOne) {
  const char* none[] = {"artemis"};
  std::ostringstream out, err;
  EXPECT_EQ(run_cli(1, none, out, err), kExitError);
  const char* bad[] = {"artemis", "train", "--data", "x"};
  EXPECT_EQ(run_cli(4, bad, out, err), kExitError);
  const char* help[] = {"artemis", "--help"};
  EXPECT_EQ(run_cli(2, help, out, err), kExitOk);
}
