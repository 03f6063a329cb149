#include "arbor/tools.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace arbor {

std::string_view to_string(ArgType t)
{
    switch (t) {
    case ArgType::string: return "string";
    case ArgType::integer: return "integer";
    case ArgType::number: return "number";
    case ArgType::boolean: return "boolean";
    case ArgType::object: return "object";
    case ArgType::array: return "array";
    }
    return "string";
}

void ResourceBundle::add(ToolSpec tool)
{
    if (find(tool.name)) {
        throw std::invalid_argument("tool \"" + tool.name + "\" already in bundle");
    }
    tools_.push_back(std::move(tool));
}

const ToolSpec* ResourceBundle::find(std::string_view name) const
{
    for (const auto& t : tools_) {
        if (t.name == name) {
            return &t;
        }
    }
    return nullptr;
}

std::vector<std::string> ResourceBundle::tool_names() const
{
    std::vector<std::string> out;
    for (const auto& t : tools_) {
        out.push_back(t.name);
    }
    return out;
}

namespace {

std::optional<Json> coerce(const Json& v, ArgType type)
{
    switch (type) {
    case ArgType::string:
        if (v.is_string()) {
            return std::make_optional(v);
        }
        if (v.is_number() || v.is_boolean()) {
            return Json(v.dump());
        }
        return std::nullopt;
    case ArgType::integer:
        if (v.is_number_integer()) {
            return std::make_optional(v);
        }
        if (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>()))) {
            return Json(static_cast<long long>(v.get<double>()));
        }
        if (v.is_string()) {
            try {
                std::size_t pos = 0;
                const auto s = v.get<std::string>();
                long long x = std::stoll(s, &pos);
                if (pos == s.size()) {
                    return Json(x);
                }
            } catch (const std::exception&) {
            }
        }
        return std::nullopt;
    case ArgType::number:
        if (v.is_number()) {
            return std::make_optional(v);
        }
        if (v.is_string()) {
            try {
                std::size_t pos = 0;
                const auto s = v.get<std::string>();
                double x = std::stod(s, &pos);
                if (pos == s.size()) {
                    return Json(x);
                }
            } catch (const std::exception&) {
            }
        }
        return std::nullopt;
    case ArgType::boolean:
        if (v.is_boolean()) {
            return std::make_optional(v);
        }
        if (v == "true") {
            return Json(true);
        }
        if (v == "false") {
            return Json(false);
        }
        return std::nullopt;
    case ArgType::object: return v.is_object() ? std::optional<Json>(v) : std::nullopt;
    case ArgType::array: return v.is_array() ? std::optional<Json>(v) : std::nullopt;
    }
    return std::nullopt;
}

}  // namespace

ArgCheck validate_arguments(const ToolSpec& spec, const Json& arguments)
{
    if (!arguments.is_object()) {
        return {std::nullopt, "validation error: arguments must be a JSON object"};
    }
    Json out = Json::object();
    for (const auto& field : spec.args_schema) {
        auto it = arguments.find(field.name);
        if (it == arguments.end() || it->is_null()) {
            if (field.required) {
                return {std::nullopt, "validation error: " + field.name + " required"};
            }
            continue;
        }
        auto c = coerce(*it, field.type);
        if (!c) {
            return {std::nullopt, "validation error: " + field.name + " must be " + std::string(to_string(field.type))};
        }
        out[field.name] = std::move(*c);
    }
    return {std::move(out), {}};
}

std::string run_tool(const ToolSpec& spec, const Json& arguments)
{
    ArgCheck check = validate_arguments(spec, arguments);
    if (!check.coerced) {
        return check.error;
    }
    if (!spec.runner) {
        return "error: tool " + spec.name + " has no runner";
    }
    try {
        return spec.runner(*check.coerced);
    } catch (const std::exception& e) {
        return std::string("error: ") + e.what();
    } catch (...) {
        return "error: tool " + spec.name + " failed";
    }
}

std::string dispatch_tool(const ResourceBundle& bundle, std::string_view name, const Json& arguments)
{
    const ToolSpec* tool = bundle.find(name);
    if (!tool) {
        std::string names;
        for (const auto& n : bundle.tool_names()) {
            names += names.empty() ? n : ", " + n;
        }
        return "error: unknown tool \"" + std::string(name) + "\"; available tools: " + names;
    }
    return run_tool(*tool, arguments);
}

Json args_schema_json(const ToolSpec& spec)
{
    Json props = Json::object();
    Json required = Json::array();
    for (const auto& f : spec.args_schema) {
        Json p{{"type", std::string(to_string(f.type))}};
        if (!f.description.empty()) {
            p["description"] = f.description;
        }
        props[f.name] = std::move(p);
        if (f.required) {
            required.push_back(f.name);
        }
    }
    return Json{{"type", "object"}, {"properties", std::move(props)}, {"required", std::move(required)}};
}

std::string render_tool_catalog(const ResourceBundle& bundle)
{
    std::ostringstream out;
    out << "Available tools:\n";
    for (const auto& t : bundle.tools()) {
        out << "- " << t.name << ": " << t.description << "\n  args: " << args_schema_json(t).dump() << "\n";
    }
    if (!bundle.tool_context().empty()) {
        out << "\nContext:\n" << bundle.tool_context() << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// KvDatabase
// ---------------------------------------------------------------------------

void KvDatabase::add_table(std::string name, KvTable table)
{
    for (const auto& row : table.rows) {
        if (row.size() != table.columns.size()) {
            throw std::invalid_argument("row width does not match columns of table " + name);
        }
    }
    tables_[std::move(name)] = std::move(table);
}

const KvTable* KvDatabase::table(std::string_view name) const
{
    auto it = tables_.find(name);
    return it == tables_.end() ? nullptr : &it->second;
}

namespace {

class SqlLexer {
  public:
    explicit SqlLexer(std::string_view s) : s_(s) {}

    void skip_ws()
    {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) {
            ++i_;
        }
    }
    bool done()
    {
        skip_ws();
        if (i_ < s_.size() && s_[i_] == ';') {
            ++i_;
            skip_ws();
        }
        return i_ >= s_.size();
    }
    bool keyword(std::string_view kw)
    {
        skip_ws();
        if (s_.size() - i_ < kw.size()) {
            return false;
        }
        for (std::size_t k = 0; k < kw.size(); ++k) {
            if (std::toupper(static_cast<unsigned char>(s_[i_ + k])) != kw[k]) {
                return false;
            }
        }
        const std::size_t end = i_ + kw.size();
        if (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_')) {
            return false;
        }
        i_ = end;
        return true;
    }
    bool symbol(char c)
    {
        skip_ws();
        if (i_ < s_.size() && s_[i_] == c) {
            ++i_;
            return true;
        }
        return false;
    }
    std::string identifier()
    {
        skip_ws();
        if (i_ < s_.size() && s_[i_] == '*') {
            ++i_;
            return "*";
        }
        const std::size_t start = i_;
        while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_')) {
            ++i_;
        }
        if (start == i_) {
            throw QueryError("expected identifier at offset " + std::to_string(start));
        }
        return std::string(s_.substr(start, i_ - start));
    }
    std::string literal()
    {
        skip_ws();
        if (i_ < s_.size() && (s_[i_] == '\'' || s_[i_] == '"')) {
            const char q = s_[i_++];
            std::string out;
            while (i_ < s_.size()) {
                if (s_[i_] == q) {
                    if (i_ + 1 < s_.size() && s_[i_ + 1] == q) {
                        out.push_back(q);
                        i_ += 2;
                        continue;
                    }
                    ++i_;
                    return out;
                }
                out.push_back(s_[i_++]);
            }
            throw QueryError("unterminated string literal");
        }
        const std::size_t start = i_;
        while (i_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[i_])) && s_[i_] != ';') {
            ++i_;
        }
        if (start == i_) {
            throw QueryError("expected a value at offset " + std::to_string(start));
        }
        return std::string(s_.substr(start, i_ - start));
    }

  private:
    std::string_view s_;
    std::size_t i_ = 0;
};

std::size_t column_index(const KvTable& t, const std::string& name, std::string_view table)
{
    auto it = std::find(t.columns.begin(), t.columns.end(), name);
    if (it == t.columns.end()) {
        throw QueryError("no column \"" + name + "\" in table " + std::string(table));
    }
    return static_cast<std::size_t>(it - t.columns.begin());
}

}  // namespace

std::string KvDatabase::query(std::string_view sql) const
{
    SqlLexer lx(sql);
    if (!lx.keyword("SELECT")) {
        throw QueryError("only SELECT statements are supported");
    }
    std::vector<std::string> cols{lx.identifier()};
    while (lx.symbol(',')) {
        cols.push_back(lx.identifier());
    }
    if (!lx.keyword("FROM")) {
        throw QueryError("expected FROM");
    }
    const std::string tname = lx.identifier();
    const KvTable* t = table(tname);
    if (!t) {
        throw QueryError("no such table: " + tname);
    }
    std::vector<std::pair<std::size_t, std::string>> conds;
    if (lx.keyword("WHERE")) {
        do {
            const std::string c = lx.identifier();
            if (!lx.symbol('=')) {
                throw QueryError("only equality conditions are supported");
            }
            conds.emplace_back(column_index(*t, c, tname), lx.literal());
        } while (lx.keyword("AND"));
    }
    if (!lx.done()) {
        throw QueryError("unexpected trailing input");
    }
    std::vector<std::size_t> proj;
    for (const auto& c : cols) {
        if (c == "*") {
            for (std::size_t k = 0; k < t->columns.size(); ++k) {
                proj.push_back(k);
            }
        } else {
            proj.push_back(column_index(*t, c, tname));
        }
    }
    std::string out;
    for (const auto& row : t->rows) {
        bool match = std::all_of(conds.begin(), conds.end(), [&](const auto& cv) { return row[cv.first] == cv.second; });
        if (!match) {
            continue;
        }
        if (!out.empty()) {
            out += '\n';
        }
        for (std::size_t k = 0; k < proj.size(); ++k) {
            if (k) {
                out += " | ";
            }
            out += row[proj[k]];
        }
    }
    return out.empty() ? "(no rows)" : out;
}

ToolSpec make_query_sql_tool(std::shared_ptr<const KvDatabase> db)
{
    ToolSpec t;
    t.name = "query_sql";
    t.description = "Execute SQL query";
    t.args_schema = {ArgField{"query", ArgType::string, true, "SELECT statement to run"}};
    t.runner = [db = std::move(db)](const Json& args) { return db->query(args.at("query").get<std::string>()); };
    return t;
}

}  // namespace arbor
