#include <gtest/gtest.h>

#include "arbor/domains.hpp"
#include "arbor/tools.hpp"

using namespace arbor;

namespace {

ToolSpec echo_tool()
{
    return ToolSpec{"echo",
                    "Repeats its input.",
                    {{"text", ArgType::string, true, "what to say"}, {"times", ArgType::integer, false, "repeat count"}},
                    [](const Json& args) {
                        std::string out;
                        for (int i = 0; i < args.value("times", 1); ++i) {
                            out += args.at("text").get<std::string>();
                        }
                        return out;
                    }};
}

}  // namespace

TEST(Tools, ValidationMessages)
{
    const ToolSpec spec = echo_tool();
    EXPECT_EQ(validate_arguments(spec, Json::array()).error, "validation error: arguments must be a JSON object");
    EXPECT_EQ(validate_arguments(spec, Json::object()).error, "validation error: text required");
    EXPECT_EQ(validate_arguments(spec, Json{{"text", "a"}, {"times", "two"}}).error,
              "validation error: times must be integer");
    const ArgCheck ok = validate_arguments(spec, Json{{"text", "a"}, {"times", 2}});
    ASSERT_TRUE(ok.coerced);
    EXPECT_TRUE(ok.error.empty());
}

TEST(Tools, ScalarsAreCoercedToStrings)
{
    const ArgCheck c = validate_arguments(echo_tool(), Json{{"text", 7}});
    ASSERT_TRUE(c.coerced);
    EXPECT_EQ(c.coerced->at("text"), "7");
    EXPECT_EQ(run_tool(echo_tool(), Json{{"text", true}, {"times", 2}}), "truetrue");
}

TEST(Tools, RunToolNeverThrows)
{
    ToolSpec boom = echo_tool();
    boom.runner = [](const Json&) -> std::string { throw std::runtime_error("kaput"); };
    const std::string obs = run_tool(boom, Json{{"text", "x"}});
    EXPECT_NE(obs.find("kaput"), std::string::npos);
    EXPECT_EQ(run_tool(echo_tool(), "not an object"), "validation error: arguments must be a JSON object");
}

TEST(Tools, DispatchListsAvailableTools)
{
    ResourceBundle bundle("ctx");
    bundle.add(echo_tool());
    EXPECT_EQ(dispatch_tool(bundle, "echo", Json{{"text", "hi"}}), "hi");
    const std::string miss = dispatch_tool(bundle, "x", Json::object());
    EXPECT_EQ(miss.rfind("error: unknown tool \"x\"", 0), 0u);
    EXPECT_NE(miss.find("available tools: echo"), std::string::npos);
    EXPECT_THROW(bundle.add(echo_tool()), std::invalid_argument);
}

TEST(Tools, CatalogAndSchema)
{
    ResourceBundle bundle;
    bundle.add(echo_tool());
    const Json schema = args_schema_json(echo_tool());
    EXPECT_EQ(schema["properties"]["times"]["type"], "integer");
    EXPECT_EQ(schema["required"], Json::array({"text"}));
    const std::string catalog = render_tool_catalog(bundle);
    EXPECT_NE(catalog.find("echo"), std::string::npos);
    EXPECT_NE(catalog.find("Repeats its input."), std::string::npos);
}

TEST(KvDatabase, SelectWithEqualityConditions)
{
    const auto db = toysql::fixture_database();
    EXPECT_EQ(db->query("SELECT v FROM t WHERE k = 2"), "17");
    EXPECT_EQ(db->query("select city, country from places where name = 'Prado'"), "Madrid | Spain");
    EXPECT_EQ(db->query("SELECT name FROM places WHERE country = 'Italy' AND city = 'Rome'"), "Colosseum");
    EXPECT_EQ(db->query("SELECT v FROM t WHERE k = 9"), "(no rows)");
    EXPECT_EQ(db->query("SELECT k FROM t"), "1\n2\n3");
    EXPECT_THROW(db->query("DELETE FROM t"), QueryError);
    EXPECT_THROW(db->query("SELECT v FROM nowhere"), QueryError);
    EXPECT_THROW(db->query("SELECT zz FROM t"), QueryError);
    EXPECT_THROW(db->query("SELECT v FROM t WHERE k > 1"), QueryError);
}

TEST(KvDatabase, QueryToolReportsErrorsAsObservations)
{
    const ToolSpec tool = make_query_sql_tool(toysql::fixture_database());
    EXPECT_EQ(run_tool(tool, Json{{"query", "SELECT v FROM t WHERE k = 3"}}), "99");
    EXPECT_NE(run_tool(tool, Json{{"query", "DROP TABLE t"}}).find("error"), std::string::npos);
}
