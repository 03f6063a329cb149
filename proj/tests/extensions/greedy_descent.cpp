// Example extension module: a search engine that always follows the
// highest-reward child. Loaded with --import.

#include <algorithm>

#include "arbor/prompts.hpp"
#include "arbor/registry.hpp"
#include "arbor/search.hpp"

namespace {

class GreedyDescent final : public arbor::TreeSearch {
  public:
    std::string name() const override { return "greedy_descent"; }

    void search(arbor::SearchSession& s) override
    {
        arbor::NodeId cur = s.root();
        for (int level = 0; level < s.config().max_depth && !s.tree().node(cur).is_terminal; ++level) {
            s.set_iteration(level);
            const auto kids = s.expand(cur, s.branching_width(cur));
            if (kids.empty()) {
                break;
            }
            cur = *std::max_element(kids.begin(), kids.end(), [&](arbor::NodeId a, arbor::NodeId b) {
                return s.tree().node(a).reward < s.tree().node(b).reward;
            });
            s.complete_iteration(level);
            if (s.should_stop()) {
                break;
            }
        }
        s.set_best(cur);
    }
};

}  // namespace

extern "C" void arbor_register_extensions(arbor::ComponentRegistry& registry, arbor::PromptRegistry&)
{
    registry.register_search("greedy_descent", [] { return std::make_unique<GreedyDescent>(); });
}
