#include <gtest/gtest.h>

#include "rideshare/config.hpp"
#include "rideshare/scenario.hpp"

using namespace rideshare;

TEST(KeyValueConfig, SectionsCommentsAndTypes) {
  auto c = KeyValueConfig::parse(R"(
# leading comment
top = 3
[demand]
passengers = 200   # trailing comment
shares = [0.1, 0.4, 0.4, 0.1]
[provider]
response_mode = "argmax # not a comment"
flag = true
)");
  EXPECT_EQ(c.integer("top", 0), 3);
  EXPECT_EQ(c.integer("demand.passengers", 0), 200);
  EXPECT_EQ(c.numbers("demand.shares", {}), (std::vector<double>{0.1, 0.4, 0.4, 0.1}));
  EXPECT_EQ(c.text("provider.response_mode", ""), "argmax # not a comment");
  EXPECT_TRUE(c.boolean("provider.flag", false));
  EXPECT_TRUE(c.unused().empty());
}

TEST(KeyValueConfig, FallbacksWhenAbsent) {
  auto c = KeyValueConfig::parse("");
  EXPECT_EQ(c.number("a.b", 2.5), 2.5);
  EXPECT_EQ(c.integer("a.b", 7), 7);
  EXPECT_EQ(c.text("a.b", "x"), "x");
  EXPECT_TRUE(c.numbers("a.b", {}).empty());
  EXPECT_TRUE(c.path("a.b").empty());
}

TEST(KeyValueConfig, EmptyListParses) {
  auto c = KeyValueConfig::parse("xs = []");
  EXPECT_TRUE(c.numbers("xs", {1.0}).empty());
}

TEST(KeyValueConfig, MalformedInputIsRejected) {
  EXPECT_THROW(KeyValueConfig::parse("[demand\nx = 1"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("[]\nx = 1"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("just words"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("= 1"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("x ="), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("x = 1\nx = 2"), ConfigError);
}

TEST(KeyValueConfig, DuplicateKeyErrorNamesTheLine) {
  try {
    KeyValueConfig::parse("[a]\nx = 1\n[a]\nx = 2", "f.toml");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("f.toml:4"), std::string::npos) << e.what();
  }
}

TEST(KeyValueConfig, BadValuesAreRejectedOnAccess) {
  auto c = KeyValueConfig::parse("n = abc\ni = 2.5\nb = yes\nl = 1, 2\nm = [1, x]");
  EXPECT_THROW(c.number("n", 0), ConfigError);
  EXPECT_THROW(c.integer("i", 0), ConfigError);
  EXPECT_THROW(c.boolean("b", false), ConfigError);
  EXPECT_THROW(c.numbers("l", {}), ConfigError);
  EXPECT_THROW(c.numbers("m", {}), ConfigError);
}

TEST(KeyValueConfig, OverridesReplaceAndAdd) {
  auto c = KeyValueConfig::parse("[demand]\npassengers = 200");
  c.set("demand.passengers=50");
  c.set(" provider.window = 3 ");
  EXPECT_EQ(c.integer("demand.passengers", 0), 50);
  EXPECT_EQ(c.number("provider.window", 0), 3.0);
  EXPECT_THROW(c.set("no_equals"), ConfigError);
  EXPECT_THROW(c.set("key="), ConfigError);
  EXPECT_THROW(c.set("=1"), ConfigError);
}

TEST(KeyValueConfig, UnusedTracksUnreadKeys) {
  auto c = KeyValueConfig::parse("a = 1\nb = 2");
  c.number("a", 0);
  EXPECT_EQ(c.unused(), std::vector<std::string>{"b"});
}

TEST(KeyValueConfig, RelativePathsResolveAgainstTheFile) {
  auto dir = std::filesystem::temp_directory_path() / "rideshare_cfg_test";
  std::filesystem::create_directories(dir);
  io::write_atomic(dir / "c.toml", "[network]\nnodes = \"n.csv\"\nlinks = \"/abs/l.csv\"\n");
  auto c = KeyValueConfig::load(dir / "c.toml");
  EXPECT_EQ(c.path("network.nodes"), dir / "n.csv");
  EXPECT_EQ(c.path("network.links"), std::filesystem::path("/abs/l.csv"));
  std::filesystem::remove_all(dir);
  EXPECT_THROW(KeyValueConfig::load(dir / "missing.toml"), ConfigError);
}

TEST(ScenarioFrom, DefaultsValidate) {
  auto s = scenario_from(KeyValueConfig::parse(""));
  EXPECT_EQ(s.passengers, 2000);
  EXPECT_EQ(s.drivers, 1600);
  EXPECT_EQ(s.driver_count(), 1600);
  EXPECT_DOUBLE_EQ(s.vot_passenger.lo, 0.5);
  EXPECT_DOUBLE_EQ(s.vot_passenger.hi, 1.0);
}

TEST(ScenarioFrom, ReadsDistributionsAndModes) {
  auto s = scenario_from(KeyValueConfig::parse(R"(
[attributes]
max_excess = 20
match_wait = [2, 4]
[provider]
response_mode = "sampled"
decision_mode = "argmax"
)"));
  EXPECT_DOUBLE_EQ(s.max_excess.lo, 20.0);
  EXPECT_DOUBLE_EQ(s.max_excess.hi, 20.0);
  EXPECT_DOUBLE_EQ(s.match_wait.lo, 2.0);
  EXPECT_DOUBLE_EQ(s.match_wait.hi, 4.0);
  EXPECT_EQ(s.sim.response_mode, ChoiceMode::Sampled);
  EXPECT_EQ(s.sim.decision_mode, ChoiceMode::Argmax);
}

TEST(ScenarioFrom, SupplyLevelOverridesDriverCount) {
  auto s = scenario_from(KeyValueConfig::parse("[demand]\npassengers = 200\nsupply_level = 0.25"));
  EXPECT_EQ(s.driver_count(), 50);
}

TEST(ScenarioFrom, UnknownKeyIsAnError) {
  try {
    scenario_from(KeyValueConfig::parse("[demand]\npasengers = 10"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("demand.pasengers"), std::string::npos) << e.what();
  }
}

TEST(ScenarioFrom, InvalidSettingsAreRejected) {
  for (const char* text : {
           "[demand]\nshares = [0.5, 0.6]",
           "[demand]\nshares = [1.2, -0.2]",
           "[demand]\npassengers = -1",
           "[provider]\nwindow = 0",
           "[provider]\np_noshow = 1.5",
           "[provider]\nresponse_mode = \"best\"",
           "[attributes]\nmax_excess = [45, 15]",
           "[attributes]\nmax_excess = [1, 2, 3]",
           "[attributes]\ncapacity = 0",
           "[run]\nreplications = 0",
           "[network]\ngrid_size = 1",
           "[network]\nnodes = \"n.csv\"",
           "[demand]\npassengers = 2.5",
       })
    EXPECT_THROW(scenario_from(KeyValueConfig::parse(text)), ConfigError) << text;
}
