#include "sage/tools/plan.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <stdexcept>

namespace sage::tools {

std::string to_string(PlanStatus s) {
    switch (s) {
        case PlanStatus::Valid: return "Valid";
        case PlanStatus::CycleError: return "CycleError";
        case PlanStatus::UnknownDep: return "UnknownDep";
    }
    return "?";
}

PlanValidation validate_plan_dag(const PlanDAG& plan) {
    PlanValidation r;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        if (!index.emplace(plan.steps[i].id, i).second) {
            r.status = PlanStatus::UnknownDep;
            r.detail = "duplicate step id '" + plan.steps[i].id + "'";
            return r;
        }
    }
    const std::size_t n = plan.steps.size();
    std::vector<std::vector<std::size_t>> out(n), in(n);
    for (const auto& [from, to] : plan.deps) {
        auto a = index.find(from), b = index.find(to);
        if (a == index.end() || b == index.end()) {
            r.status = PlanStatus::UnknownDep;
            r.detail = "edge " + from + " -> " + to + " names an unknown step";
            return r;
        }
        out[a->second].push_back(b->second);
        in[b->second].push_back(a->second);
    }
    std::vector<std::size_t> indeg(n);
    for (std::size_t i = 0; i < n; ++i) indeg[i] = in[i].size();
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0) ready.push(i);
    while (!ready.empty()) {
        const auto i = ready.top();
        ready.pop();
        r.order.push_back(plan.steps[i].id);
        for (auto j : out[i])
            if (--indeg[j] == 0) ready.push(j);
    }
    if (r.order.size() == n) return r;

    // Every unprocessed node has an unprocessed predecessor; walking
    // predecessors must revisit a node, which closes a cycle.
    r.status = PlanStatus::CycleError;
    r.order.clear();
    std::size_t cur = 0;
    while (indeg[cur] == 0) ++cur;
    std::vector<std::size_t> walk;
    std::vector<int> seen_at(n, -1);
    while (seen_at[cur] < 0) {
        seen_at[cur] = static_cast<int>(walk.size());
        walk.push_back(cur);
        for (auto p : in[cur]) {
            if (indeg[p] > 0) {
                cur = p;
                break;
            }
        }
    }
    std::vector<std::size_t> cyc(walk.begin() + seen_at[cur], walk.end());
    std::reverse(cyc.begin(), cyc.end());  // predecessor walk runs against the edges
    for (auto i : cyc) r.cycle.push_back(plan.steps[i].id);
    r.cycle.push_back(r.cycle.front());
    r.detail = "cycle through " + r.cycle.front();
    return r;
}

json to_json(const PlanDAG& plan) {
    json j;
    j["steps"] = json::array();
    for (const auto& s : plan.steps) j["steps"].push_back({{"id", s.id}, {"name", s.call.name}, {"arguments", s.call.arguments}});
    j["deps"] = json::array();
    for (const auto& [a, b] : plan.deps) j["deps"].push_back({a, b});
    return j;
}

PlanDAG plan_from_json(const json& j) {
    try {
        PlanDAG p;
        for (const auto& s : j.at("steps")) {
            p.steps.push_back({s.at("id").get<std::string>(),
                               {s.at("name").get<std::string>(), s.value("arguments", json::object())}});
        }
        for (const auto& d : j.value("deps", json::array())) p.deps.emplace_back(d.at(0).get<std::string>(), d.at(1).get<std::string>());
        return p;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed plan: ") + e.what());
    }
}

}  // namespace sage::tools
