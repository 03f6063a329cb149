#include <gtest/gtest.h>

#include <sstream>

#include "arbor/cli.hpp"
#include "arbor/persistence.hpp"
#include "support.hpp"

using namespace arbor;
namespace at = arbor::testing;
using at::TempDir;

namespace {

struct CliRunResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliRunResult cli(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    CliRunResult r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

}  // namespace

TEST(CliParse, SearchFlags)
{
    const CliOptions o = parse_cli({"search", "--save_dir", "d", "--dataset", "blocksworld", "--n_actions", "2",
                                    "--bn_threshold", "0.5", "--early_terminate", "--search", "bfs", "--limit", "3"});
    EXPECT_EQ(o.command, CliCommand::search);
    EXPECT_EQ(o.search, "bfs");
    EXPECT_EQ(o.search_config.n_actions, 2);
    EXPECT_EQ(o.search_config.bn_threshold, 0.5);
    EXPECT_TRUE(o.search_config.early_terminate);
    EXPECT_EQ(o.limit, 3);
    EXPECT_FALSE(o.search_config.beam_width.has_value());
}

TEST(CliParse, UsageErrors)
{
    EXPECT_THROW(parse_cli({}), CliUsageError);
    EXPECT_THROW(parse_cli({"search", "--dataset", "x"}), CliUsageError);
    EXPECT_THROW(parse_cli({"search", "--save_dir", "d", "--dataset", "x", "--n_actions", "0"}), CliUsageError);
    EXPECT_THROW(parse_cli({"chain", "--save_dir", "d", "--dataset", "x", "--backend", "carrier-pigeon"}),
                 CliUsageError);
    EXPECT_THROW(parse_cli({"chain", "--save_dir", "d", "--dataset", "x", "--n_iterations", "3"}), CliUsageError);
    EXPECT_THROW(parse_cli({"search", "--help"}), CliHelp);
}

TEST(CliParse, ConfigFileFillsUnsetFlags)
{
    TempDir dir;
    at::spit(dir / "c.json", R"({"dataset": "toy-math", "n_iterations": 4, "early_terminate": true,
        "save_dir": "from_config", "import": ["a.so", "b.so"]})");
    const CliOptions o = parse_cli({"search", "--config", (dir / "c.json").string(), "--save_dir", "explicit"});
    EXPECT_EQ(o.dataset, "toy-math");
    EXPECT_EQ(o.search_config.n_iterations, 4);
    EXPECT_TRUE(o.search_config.early_terminate);
    EXPECT_EQ(o.save_dir, "explicit");
    EXPECT_EQ(o.imports, (std::vector<std::string>{"a.so", "b.so"}));

    at::spit(dir / "bad.json", "[1, 2]");
    EXPECT_THROW(parse_cli({"search", "--config", (dir / "bad.json").string()}), CliUsageError);
    at::spit(dir / "broken.json", "{");
    EXPECT_THROW(parse_cli({"search", "--config", (dir / "broken.json").string()}), CliUsageError);
}

TEST(CliRun, ExitCodes)
{
    TempDir dir;
    EXPECT_EQ(cli({"search", "--help"}).code, 0);
    EXPECT_EQ(cli({"search", "--save_dir", (dir / "a").string()}).code, 1);
    const CliRunResult missing = cli({"search", "--save_dir", (dir / "b").string(), "--dataset", "no-such"});
    EXPECT_EQ(missing.code, 1);
    EXPECT_NE(missing.err.find("toy-math"), std::string::npos);
    EXPECT_EQ(cli({"eval", "--save_dir", (dir / "c").string()}).code, 1);
}

TEST(CliRun, ChainThenEval)
{
    TempDir dir;
    const std::string save = (dir / "run").string();
    const CliRunResult chain = cli({"chain", "--save_dir", save, "--dataset", "toy-math", "--limit", "2"});
    ASSERT_EQ(chain.code, 0) << chain.err;
    const RunDirectory run(save);
    EXPECT_TRUE(fs::exists(run.chain_checkpoint(1)));
    EXPECT_FALSE(fs::exists(run.chain_checkpoint(2)));
    const Json results = read_json(run.eval_results());
    EXPECT_EQ(results.at("n_queries"), 2);
    const CliRunResult eval = cli({"eval", "--save_dir", save});
    ASSERT_EQ(eval.code, 0) << eval.err;
    EXPECT_EQ(Json::parse(eval.out), results);
}

TEST(CliRun, ImportedSearchEngine)
{
    TempDir dir;
    const std::string save = (dir / "run").string();
    const CliRunResult r = cli({"search", "--save_dir", save, "--dataset", "blocksworld", "--limit", "1", "--search",
                       "greedy_descent", "--import", ARBOR_TEST_EXTENSION, "--max_depth", "4"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(RunDirectory(save).result_file(0)));
    EXPECT_EQ(read_config(RunDirectory(save)).at("search"), "greedy_descent");
}
