#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lrdcast/kv_config.hpp"
#include "lrdcast/time_features.hpp"

using namespace lrdcast;

namespace {

constexpr TimestampMs kJan1 = 1704067200000;  // 2024-01-01T00:00:00Z, a Monday

}  // namespace

TEST_CASE("millisecond feature bounds") {
  const auto f0 = time_features(kJan1);
  REQUIRE(f0.size() == kTimeFeatureCount);
  CHECK(f0[6] == -0.5);
  CHECK(f0[0] == -0.5);
  CHECK(f0[1] == -0.5);
  CHECK(f0[3] == -0.5);
  CHECK(f0[4] == -0.5);
  CHECK(f0[5] == -0.5);
  CHECK(time_features(kJan1 + 999)[6] == doctest::Approx(0.5));
  CHECK(time_features(kJan1 + 500)[6] == doctest::Approx(500.0 / 999.0 - 0.5));
}

TEST_CASE("calendar components") {
  const TimestampMs dec31 = kJan1 + 365LL * 86400000LL + 23LL * 3600000LL + 59LL * 60000LL + 59999LL;
  const auto f = time_features(dec31);
  for (std::size_t k : {0, 1, 3, 4, 5, 6}) CHECK(f[k] == doctest::Approx(0.5));
  for (TimestampMs day = 0; day < 7; ++day) {
    const auto w = time_features(kJan1 + day * 86400000LL);
    CHECK(w[2] == doctest::Approx(static_cast<double>(day) / 6.0 - 0.5));
  }
}

TEST_CASE("features stay within bounds") {
  for (TimestampMs t = kJan1; t < kJan1 + 400LL * 86400000LL; t += 86400000LL * 3 + 3600000LL * 5 + 61237) {
    for (double v : time_features(t)) {
      CHECK(v >= -0.5);
      CHECK(v <= 0.5);
    }
  }
}

TEST_CASE("consecutive 10 ms ticks differ only in ms and second") {
  const auto m = time_embed(kJan1 + 123456789, 10, 500);
  CHECK(m.rows() == 500);
  CHECK(m.cols() == kTimeFeatureCount);
  for (std::size_t r = 1; r < m.rows(); ++r) {
    for (std::size_t k = 0; k < 4; ++k) CHECK(m(r, k) == m(r - 1, k));
    bool minute_ok = m(r, 4) == m(r - 1, 4) || m(r - 1, 5) == 0.5;
    CHECK(minute_ok);
  }
  std::vector<TimestampMs> stamps{kJan1, kJan1 + 10, kJan1 + 20};
  const auto e = time_embed(stamps);
  const auto g = time_embed(kJan1, 10, 3);
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i] == g[i]);
}

TEST_CASE("key-value parsing") {
  const auto cfg = KeyValueConfig::parse(
      "# comment\n"
      "name = medium  # trailing\n"
      "\n"
      "n = 42\n"
      "x = 2.5e-3\n"
      "flag = true\n"
      "off = no\n"
      "items = 1, 12 ,24,48\n"
      "words = high,low\n",
      "test");
  CHECK(cfg.get_string("name", "") == "medium");
  CHECK(cfg.get_int("n", 0) == 42);
  CHECK(cfg.get_double("x", 0) == 2.5e-3);
  CHECK(cfg.get_bool("flag", false));
  CHECK_FALSE(cfg.get_bool("off", true));
  CHECK(cfg.get_int_list("items", {}) == std::vector<long long>{1, 12, 24, 48});
  CHECK(cfg.get_list("words", {}) == std::vector<std::string>{"high", "low"});
  CHECK(cfg.get_int("missing", 7) == 7);
  CHECK(cfg.has("n"));
  CHECK_FALSE(cfg.has("missing"));
  CHECK_NOTHROW(cfg.check_known({"name", "n", "x", "flag", "off", "items", "words"}));
  CHECK_THROWS_AS(cfg.check_known({"name"}), ConfigError);
  CHECK_THROWS_AS(cfg.get_int("name", 0), ConfigError);
  CHECK_THROWS_AS(cfg.get_double("name", 0), ConfigError);
  CHECK_THROWS_AS(cfg.get_bool("n", false), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("= value"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("a = 1\na = 2"), ConfigError);
}

TEST_CASE("key-value files") {
  const auto path = std::filesystem::temp_directory_path() / "lrdcast_kv_test.cfg";
  {
    std::ofstream out(path);
    out << "seed = 5\n";
  }
  CHECK(KeyValueConfig::load(path).get_int("seed", 0) == 5);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(KeyValueConfig::load(path), ConfigError);
}
