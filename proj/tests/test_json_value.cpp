#include <gtest/gtest.h>

#include "rstd/errors.hpp"
#include "rstd/json_value.hpp"

using rstd::JsonValue;
using rstd::ValuePath;

TEST(ParseValue, BareArray) {
    const auto v = rstd::parse_value(R"([{"anomaly":"oom","type":"memory","severity":"high","confidence":0.9}])");
    ASSERT_TRUE(v.is_array());
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0]["confidence"], 0.9);
}

TEST(ParseValue, ProseWrapped) {
    EXPECT_EQ(rstd::parse_value(R"(Here is the result: {"a":1})"), JsonValue({{"a", 1}}));
}

TEST(ParseValue, FirstWellFormedCandidateWins) {
    EXPECT_EQ(rstd::parse_value(R"(see [draft} then {"b":"}"} and {"c":2})"), JsonValue({{"b", "}"}}));
}

TEST(ParseValue, CodeFence) {
    EXPECT_EQ(rstd::parse_value("```json\n[1, 2]\n```"), JsonValue({1, 2}));
}

TEST(ParseValue, NothingParsable) {
    EXPECT_THROW(rstd::parse_value("no json here"), rstd::NoParsableValue);
    EXPECT_THROW(rstd::parse_value("{unclosed"), rstd::NoParsableValue);
}

TEST(Serialize, SortedKeysAreDeterministic) {
    JsonValue a = {{"z", 1}, {"a", 2}};
    JsonValue b = {{"a", 2}, {"z", 1}};
    EXPECT_EQ(rstd::serialize(a), rstd::serialize(b));
    EXPECT_EQ(rstd::serialize(a), R"({"a":2,"z":1})");
}

TEST(ValuePath, ParseAndRender) {
    for (const char* text : {"$", "$.a", "$[0].confidence", "$.a[2][3].b", R"($["odd key"].x)"}) {
        EXPECT_EQ(ValuePath::parse(text).str(), text);
    }
    EXPECT_TRUE(ValuePath::parse("$").is_root());
    EXPECT_EQ(ValuePath::parse("$").child("k").child(std::size_t{1}).str(), "$.k[1]");
}

TEST(ValuePath, Malformed) {
    for (const char* text : {"", "a", "$.", "$[", "$[x]", "$..a", "$[\"open"}) {
        EXPECT_THROW(ValuePath::parse(text), rstd::ParseError) << text;
    }
}

TEST(ValuePath, Find) {
    const JsonValue v = JsonValue::parse(R"({"a":[{"b":1}]})");
    ASSERT_NE(ValuePath::parse("$.a[0].b").find(v), nullptr);
    EXPECT_EQ(*ValuePath::parse("$.a[0].b").find(v), 1);
    EXPECT_EQ(ValuePath::parse("$.a[1]").find(v), nullptr);
    EXPECT_EQ(ValuePath::parse("$.a.b").find(v), nullptr);
    EXPECT_EQ(ValuePath::parse("$").find(v), &v);
}

TEST(ValuePath, Erase) {
    JsonValue v = JsonValue::parse(R"({"a":[{"b":1,"c":2}],"d":3})");
    ValuePath::parse("$.a[0].b").erase(v);
    EXPECT_EQ(v, JsonValue::parse(R"({"a":[{"c":2}],"d":3})"));
    ValuePath::parse("$.a[0]").erase(v);
    EXPECT_EQ(v, JsonValue::parse(R"({"a":[],"d":3})"));
    EXPECT_THROW(ValuePath::parse("$.missing").erase(v), rstd::PathNotFound);
    EXPECT_THROW(ValuePath::parse("$").erase(v), rstd::PathNotFound);
}
