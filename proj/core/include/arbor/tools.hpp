#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "arbor/structures.hpp"

namespace arbor {

enum class ArgType { string, integer, number, boolean, object, array };

std::string_view to_string(ArgType t);

struct ArgField {
    std::string name;
    ArgType type = ArgType::string;
    bool required = true;
    std::string description;
};

/// A callable tool: name, description, argument schema and runner. Runners
/// receive arguments already validated and coerced to the schema types.
struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ArgField> args_schema;
    std::function<std::string(const Json& args)> runner;
};

/// Tools and context text handed to a tool-use task.
class ResourceBundle {
  public:
    ResourceBundle() = default;
    explicit ResourceBundle(std::string context) : tool_context_(std::move(context)) {}

    /// Throws std::invalid_argument when the name is already taken.
    void add(ToolSpec tool);
    const ToolSpec* find(std::string_view name) const;

    const std::vector<ToolSpec>& tools() const noexcept { return tools_; }
    const std::string& tool_context() const noexcept { return tool_context_; }
    void set_tool_context(std::string c) { tool_context_ = std::move(c); }
    std::vector<std::string> tool_names() const;

  private:
    std::vector<ToolSpec> tools_;
    std::string tool_context_;
};

/// Structural check: required fields present and values coercible to the
/// declared types. Returns the coerced arguments or a message such as
/// "validation error: query required".
struct ArgCheck {
    std::optional<Json> coerced;
    std::string error;
};
ArgCheck validate_arguments(const ToolSpec& spec, const Json& arguments);

/// Runs one tool. Never throws: validation failures and runner exceptions
/// come back as observation strings the agent can react to.
std::string run_tool(const ToolSpec& spec, const Json& arguments);

/// Looks the tool up by name, then runs it. Unknown names yield an
/// observation that lists the available tools.
std::string dispatch_tool(const ResourceBundle& bundle, std::string_view name, const Json& arguments);

/// JSON-shape description of a tool's arguments.
Json args_schema_json(const ToolSpec& spec);

/// Deterministic listing of every tool plus the tool context, for prompts.
std::string render_tool_catalog(const ResourceBundle& bundle);

// ---------------------------------------------------------------------------
// In-memory table store with an exact-match SELECT dialect:
//   SELECT col[, col...] FROM table [WHERE col = value [AND col = value ...]]
// ---------------------------------------------------------------------------

class QueryError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct KvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

class KvDatabase {
  public:
    void add_table(std::string name, KvTable table);
    const KvTable* table(std::string_view name) const;

    /// Matching rows, one per line, columns separated by " | ". No match
    /// yields "(no rows)".
    std::string query(std::string_view sql) const;

  private:
    std::map<std::string, KvTable, std::less<>> tables_;
};

ToolSpec make_query_sql_tool(std::shared_ptr<const KvDatabase> db);

}  // namespace arbor
