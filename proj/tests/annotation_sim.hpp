#pragma once

#include "mcrc/annotation.hpp"

#include <nlohmann/json.hpp>

#include <random>
#include <string>

namespace mcrc::testing {

/// Fills in stage payloads the way an annotator with a fixed hit rate would.
/// Uses the annotator's layout only to look up gold labels.
class SimulatedAnnotator {
public:
    SimulatedAnnotator(const Corpus& corpus, SessionLayout layout, double p_correct, std::uint32_t seed)
        : corpus_(corpus), layout_(std::move(layout)), p_correct_(p_correct), rng_(seed) {}

    nlohmann::json respond(const nlohmann::json& payload) {
        nlohmann::json body = {{"stage", payload.at("stage")},
                               {"responses", nlohmann::json::array()},
                               {"ratings", nlohmann::json::array()}};
        for (const auto& item : payload.at("items")) {
            const auto key = item.at("item_key").get<std::string>();
            const auto& id = layout_.item_by_key.at(key);
            const auto* mc = corpus_.find_item(id);
            const auto& perm = layout_.option_order.at(id);
            for (const auto& opt : item.at("options")) {
                const auto pos = opt.at("position").get<std::size_t>();
                const bool gold = mc->options[perm[pos]].gold_label;
                const bool right = std::uniform_real_distribution<double>(0, 1)(rng_) < p_correct_;
                body["responses"].push_back({{"item_key", key}, {"position", pos}, {"label", right ? gold : !gold}});
            }
            if (payload.at("stage") == "comprehension")
                body["ratings"].push_back({{"item_key", key}, {"rating", 1 + static_cast<int>(rng_() % 5)}});
        }
        return body;
    }

private:
    const Corpus& corpus_;
    SessionLayout layout_;
    double p_correct_;
    std::mt19937 rng_;
};

/// Layout the service uses for `annotator`.
inline SessionLayout layout_for(const AnnotationService& service, const std::string& annotator) {
    for (const auto& a : service.assignments())
        if (a.annotator_id == annotator) return make_layout(a, service.corpus(), service.config().seed);
    throw std::runtime_error("no assignment for " + annotator);
}

}  // namespace mcrc::testing
