#include <gtest/gtest.h>

#include "equisr/config.hpp"

using namespace equisr;

TEST(Config, DefaultsRoundTrip) {
  const RunConfig d;
  const auto j = to_json(d);
  EXPECT_EQ(to_json(config_from_json(j)), j);
  EXPECT_EQ(to_json(parse_config("{}")), j);
  EXPECT_EQ(j["model"]["encoder"]["blocks"], 4);
  EXPECT_EQ(j["model"]["t"].get<int>() * j["model"]["encoder"]["n"].get<int>(), 32);
  EXPECT_EQ(j["train"]["patch"], 24);
  EXPECT_EQ(j["train"]["batch"], 4);
  EXPECT_EQ(j["data"]["scale_min"], 2.0);
  EXPECT_EQ(j["data"]["scale_max"], 4.0);
}

TEST(Config, OverlaysPartialDocuments) {
  const auto c = parse_config(R"({"model": {"variant": "lte", "t": 8, "encoder": {"n": 4}, "inr": {"K": 5}},
                                  "eval": {"angles_deg": [45, 22.5]}})");
  EXPECT_EQ(c.model.inr.variant, InrVariant::lte);
  EXPECT_EQ(c.model.encoder.t, 8u);
  EXPECT_EQ(c.model.encoder.n, 4u);
  EXPECT_EQ(c.model.encoder.blocks, 4u);
  EXPECT_EQ(c.model.inr.K, 5u);
  const auto s = sweep_spec(c);
  ASSERT_EQ(s.angles.size(), 2u);
  EXPECT_DOUBLE_EQ(s.angles[0], std::numbers::pi / 4);
  EXPECT_DOUBLE_EQ(s.angles[1], std::numbers::pi / 8);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config(R"({"modle": {}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"encoder": {"depth": 3}}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"steps": "many"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"steps": 0}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"variant": "siren"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"equivariant": false}})"), ConfigError);  // plain needs t = 1
  EXPECT_THROW(parse_config(R"({"data": {"scale_min": 0.5}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"eval": {"mask": "sometimes"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"eval": {"models": ["eq", "other"]}})"), ConfigError);
  EXPECT_THROW(parse_config("[1, 2"), ParseError);
  try {
    parse_config(R"({"data": {"kind": "stripes", "colour": 1}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("data.colour"), std::string::npos);
  }
}

TEST(Config, EmptyGridAxisIsRejected) {
  auto c = parse_config(R"({"eval": {"angles_deg": []}})");
  EXPECT_THROW(sweep_spec(c), ConfigError);
}
