#include "mcrc/annotation.hpp"

#include "mcrc/error.hpp"
#include "mcrc/hashing.hpp"

#include <algorithm>
#include <numeric>

namespace mcrc {

namespace {

template <class T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
    // Fisher-Yates with our own generator; std::shuffle is not portable across libraries.
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::uint64_t stream_for(std::uint64_t seed, const std::string& key) { return derive_seed(seed, fnv1a64(key)); }

}  // namespace

const char* to_string(Stage stage) {
    switch (stage) {
        case Stage::guessing: return "guessing";
        case Stage::comprehension: return "comprehension";
        case Stage::done: return "done";
    }
    return "?";
}

Stage parse_stage(std::string_view text) {
    if (text == "guessing") return Stage::guessing;
    if (text == "comprehension") return Stage::comprehension;
    if (text == "done") return Stage::done;
    throw Error(ErrorCode::invalid_argument, "unknown stage '" + std::string(text) + "'");
}

const std::vector<std::string>& rating_criteria() {
    static const std::vector<std::string> criteria = {
        "The item refers to the content of the text.",
        "The item is comprehensible and grammatically correct.",
        "The item is unambiguously answerable.",
        "The item is answerable without additional world knowledge.",
        "The item is only answerable after reading the text (not through world knowledge alone).",
    };
    return criteria;
}

std::vector<Assignment> create_assignments(const std::vector<std::string>& annotators, const Corpus& corpus,
                                           const std::vector<Generator>& generators, std::uint64_t seed) {
    if (annotators.empty()) throw Error(ErrorCode::invalid_argument, "assignments need at least one annotator");
    if (corpus.texts.empty()) throw Error(ErrorCode::invalid_argument, "assignments need at least one text");
    if (generators.empty()) throw Error(ErrorCode::invalid_argument, "assignments need at least one generator");
    {
        auto sorted = annotators;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw Error(ErrorCode::invalid_argument, "duplicate annotator id");
    }

    SplitMix64 rng(stream_for(seed, "rotation"));
    auto rotation = generators;
    shuffle(rotation, rng);
    // Rotation offsets come from a seeded order of the sorted ids, so the plan
    // does not depend on the order annotators were listed in.
    auto offsets = annotators;
    std::sort(offsets.begin(), offsets.end());
    shuffle(offsets, rng);

    const std::string plan = "latin-square/" + to_hex(seed);
    std::vector<Assignment> out;
    for (const auto& annotator : annotators) {
        const auto a = static_cast<std::size_t>(std::find(offsets.begin(), offsets.end(), annotator) - offsets.begin());
        Assignment as;
        as.annotator_id = annotator;
        as.plan_id = plan;
        for (std::size_t t = 0; t < corpus.texts.size(); ++t) {
            as.text_order.push_back(corpus.texts[t].id);
            as.guessing_generator.emplace(corpus.texts[t].id, rotation[(t + a) % rotation.size()]);
        }
        SplitMix64 order(stream_for(seed, "texts/" + annotator));
        shuffle(as.text_order, order);
        out.push_back(std::move(as));
    }
    return out;
}

SessionLayout make_layout(const Assignment& assignment, const Corpus& corpus, std::uint64_t seed) {
    SessionLayout layout;
    SplitMix64 rng(stream_for(seed, "layout/" + assignment.annotator_id));
    for (const auto& text_id : assignment.text_order) {
        std::vector<std::string> ids;
        for (const auto* item : corpus.items_for(text_id)) {
            ids.push_back(item->id);
            std::vector<std::size_t> perm(item->options.size());
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            shuffle(perm, rng);
            layout.option_order.emplace(item->id, std::move(perm));
        }
        shuffle(ids, rng);
        layout.item_order.emplace(text_id, std::move(ids));
    }
    // Display keys reveal neither the generator nor the canonical id.
    for (const auto& item : corpus.items) {
        auto key = "k" + to_hex(stream_for(seed, "key/" + assignment.annotator_id + "/" + item.id)).substr(0, 10);
        layout.item_key.emplace(item.id, key);
        layout.item_by_key.emplace(key, item.id);
    }
    return layout;
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::validation: return 422;
        case ErrorCode::parse:
        case ErrorCode::invalid_argument:
        case ErrorCode::usage: return 400;
        case ErrorCode::stage_order:
        case ErrorCode::conflict: return 409;
        case ErrorCode::not_found: return 404;
        case ErrorCode::unauthorized: return 401;
        default: return 500;
    }
}

}  // namespace mcrc
