#include <gtest/gtest.h>

#include "rstd/errors.hpp"
#include "rstd/fault_injector.hpp"
#include "test_support.hpp"

namespace {

using rstd::InjectionMode;
using rstd::JsonValue;
using rstd::testing::inject;

TEST(ShouldInject, SingleShot) {
    const auto spec = inject("S3", 1, InjectionMode::corrupt_response, "$.root_cause");
    EXPECT_TRUE(rstd::should_inject(spec, "S3", 1));
    EXPECT_FALSE(rstd::should_inject(spec, "S3", 2));
    EXPECT_FALSE(rstd::should_inject(spec, "S4", 1));
}

TEST(ApplyInjection, DropsConfidenceFromAnomalyItem) {
    const auto spec = inject("S2", 1, InjectionMode::corrupt_response, "$[0].confidence");
    const auto out =
        rstd::apply_injection(spec, JsonValue::parse(R"([{"metric":"pool_wait","confidence":0.9}])"));
    EXPECT_EQ(out, JsonValue::parse(R"([{"metric":"pool_wait"}])"));

    const auto pipeline = rstd::testing::bundled("uc2");
    const auto report = rstd::validate(out, pipeline.at("S2").output_schema);
    ASSERT_FALSE(report.passed());
    EXPECT_EQ(report.errors[0].path, "$[0].confidence");
}

TEST(ApplyInjection, OnlyField) {
    const auto spec = inject("T", 1, InjectionMode::corrupt_response, "$.a");
    EXPECT_EQ(rstd::apply_injection(spec, JsonValue::parse(R"({"a":1})")), JsonValue::object());
}

TEST(ApplyInjection, MissingPath) {
    const auto spec = inject("T", 1, InjectionMode::corrupt_response, "$.missing");
    EXPECT_THROW(rstd::apply_injection(spec, JsonValue::parse(R"({"a":1})")), rstd::PathNotFound);
}

TEST(ApplyInjection, RawText) {
    const auto spec = inject("T", 1, InjectionMode::corrupt_response, "$.a");
    EXPECT_EQ(rstd::apply_injection(spec, std::string_view(R"(Result: {"a":1,"b":2})")), R"({"b":2})");
    EXPECT_THROW(rstd::apply_injection(spec, std::string_view("no json")), rstd::PathNotFound);
}

TEST(ParseInjection, CliForm) {
    const auto spec =
        rstd::parse_injection({"target=S3", "attempt=1", "mode=corrupt_response", "path=$.root_cause"});
    EXPECT_EQ(spec, inject("S3", 1, InjectionMode::corrupt_response, "$.root_cause"));
    EXPECT_EQ(rstd::format_injection(spec), "target=S3 attempt=1 mode=corrupt_response path=$.root_cause");
    EXPECT_EQ(rstd::parse_injection({"target=S2", "mode=drop_field", "path=$.triage"}).attempt, 1u);
}

TEST(ParseInjection, Rejections) {
    EXPECT_THROW(rstd::parse_injection({"target=S3"}), rstd::ParseError);
    EXPECT_THROW(rstd::parse_injection({"target=S3", "path=$"}), rstd::ParseError);
    EXPECT_THROW(rstd::parse_injection({"target=S3", "path=$.a", "attempt=0"}), rstd::ParseError);
    EXPECT_THROW(rstd::parse_injection({"target=S3", "path=$.a", "mode=explode"}), rstd::ParseError);
    EXPECT_THROW(rstd::parse_injection({"target=S3", "path=$.a", "when=now"}), rstd::ParseError);
    EXPECT_THROW(rstd::parse_injection({"S3"}), rstd::ParseError);
}

TEST(CheckInjection, TargetMustExist) {
    const auto p = rstd::testing::bundled("uc2");
    EXPECT_NO_THROW(rstd::check_injection(inject("S3", 1, InjectionMode::corrupt_response, "$.a"), p));
    EXPECT_NO_THROW(rstd::check_injection(inject("monolithic", 1, InjectionMode::corrupt_response, "$.a"), p));
    EXPECT_THROW(rstd::check_injection(inject("S9", 1, InjectionMode::corrupt_response, "$.a"), p), rstd::SpecError);
}

}  // namespace
