#include "mcrc/generation.hpp"

#include <algorithm>
#include <regex>

namespace mcrc {

using nlohmann::json;

void GenerationPolicy::validate() const {
    if (n_items < 1 || n_options < 1)
        throw Error(ErrorCode::config, "generation policy needs n_items, n_options >= 1");
    if (!(min_target_language_share > 0.0 && min_target_language_share <= 1.0))
        throw Error(ErrorCode::config, "min_target_language_share must be in (0, 1]");
    if (max_retries < 0) throw Error(ErrorCode::config, "max_retries must be >= 0");
    if (first_temperature < 0 || retry_temperature < 0)
        throw Error(ErrorCode::config, "temperatures must be >= 0");
    if (max_tokens < 1) throw Error(ErrorCode::config, "max_tokens must be positive");
}

GenerationPolicy generation_policy_from_json(const json& j) {
    GenerationPolicy p;
    p.n_items = j.value("n_items", p.n_items);
    p.n_options = j.value("n_options", p.n_options);
    p.first_temperature = j.value("first_temperature", p.first_temperature);
    p.retry_temperature = j.value("retry_temperature", p.retry_temperature);
    p.min_target_language_share = j.value("min_target_language_share", p.min_target_language_share);
    p.max_retries = j.value("max_retries", p.max_retries);
    p.max_tokens = j.value("max_tokens", p.max_tokens);
    p.target_language = j.value("target_language", p.target_language);
    p.validate();
    return p;
}

json diagnostics_to_json(const GenerationResult& r) {
    return {{"attempts", r.attempts},
            {"attempt_language_shares", r.attempt_shares},
            {"language_share", r.language_share},
            {"n_items", r.items.size()},
            {"truncated_extra_items", r.truncated_extra_items},
            {"unlabeled_options", r.diagnostics.unlabeled_options},
            {"dropped_items", r.diagnostics.dropped_items},
            {"ignored_lines", r.diagnostics.ignored_lines},
            {"raw_output", r.raw_output}};
}

std::string build_generation_prompt(const TextDoc& text, int n_items, int n_options) {
    const auto items = std::to_string(n_items);
    const auto options = std::to_string(n_options);
    std::string prompt = "Text:\n";
    prompt += text.joined();
    prompt += "\n\nSchreibe " + items +
              " Multiple-Choice-Verständnisfragen zum Text oben, in deutscher Sprache. "
              "Jede Frage soll " + options +
              " Antwortmöglichkeiten haben. Schreibe hinter jede Antwort in Klammern, ob sie "
              "richtig oder falsch ist. Zwischen 0 und " + options +
              " Antworten können richtig sein. Die falschen Antworten sollten plausibel sein, "
              "wenn man den Text nicht gelesen hat.";
    return prompt;
}

std::optional<bool> parse_label_word(std::string_view word) {
    const auto w = fold_case(word);
    if (w == "richtig" || w == "correct" || w == "true" || w == "wahr") return true;
    if (w == "falsch" || w == "incorrect" || w == "false") return false;
    return std::nullopt;
}

std::string generated_item_id(const std::string& text_id, const Generator& generator, int index) {
    return text_id + "-" + generator.name() + "-q" + std::to_string(index);
}

namespace {

std::string trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

std::string strip_markup(std::string s) {
    for (const char* m : {"**", "__"}) {
        for (auto pos = s.find(m); pos != std::string::npos; pos = s.find(m)) s.erase(pos, 2);
    }
    return trim(s);
}

struct LabelMatch {
    std::string content;  // option text without the parenthetical
    std::string raw;      // text inside the parentheses
    std::optional<bool> value;
};

// Finds a trailing "(...)" and reads its first word as a label.
std::optional<LabelMatch> trailing_label(const std::string& line) {
    static const std::regex re(R"(^(.*?)\s*\(\s*([^()]*?)\s*\)\s*[.!]?\s*$)");
    std::smatch m;
    if (!std::regex_match(line, m, re)) return std::nullopt;
    LabelMatch out;
    out.content = trim(m[1].str());
    out.raw = m[2].str();
    std::string first;
    for (char c : out.raw) {
        const auto u = static_cast<unsigned char>(c);
        if ((u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || u >= 0x80) {
            first.push_back(c);
        } else if (!first.empty()) {
            break;
        }
    }
    out.value = parse_label_word(first);
    if (!out.value) return std::nullopt;
    return out;
}

struct Marker {
    enum Kind { question, option, none } kind = none;
    std::string rest;
};

Marker classify_marker(const std::string& line) {
    static const std::regex question_word(R"(^(?:frage|question)(?![a-z])\s*(\d+)?\s*[:.)]?\s*(.*)$)",
                                          std::regex::icase);
    static const std::regex numbered(R"(^(\d+)\s*[.)]\s*(.*)$)");
    static const std::regex answer_word(R"(^(?:antwort|answer|option)\s*[a-h1-9]\s*[:.)]\s*(.*)$)",
                                        std::regex::icase);
    static const std::regex lettered(R"(^\(?([a-hA-H])\s*[.)]\s+(.*)$)");
    static const std::regex bullet(R"(^(?:[-*+]|\xE2\x80\xA2)\s+(.*)$)");
    std::smatch m;
    if (std::regex_match(line, m, answer_word)) return {Marker::option, trim(m[1].str())};
    if (std::regex_match(line, m, lettered)) return {Marker::option, trim(m[2].str())};
    if (std::regex_match(line, m, bullet)) return {Marker::option, trim(m[1].str())};
    if (std::regex_match(line, m, question_word)) return {Marker::question, trim(m[2].str())};
    if (std::regex_match(line, m, numbered)) return {Marker::question, trim(m[2].str())};
    return {};
}

bool looks_like_stem(const std::string& line) {
    return line.ends_with("?") || line.ends_with("...") || line.ends_with("\xE2\x80\xA6");
}

struct DraftOption {
    std::string text;
    std::optional<std::string> raw_label;
    std::optional<bool> value;
};

struct DraftItem {
    std::string stem;
    std::vector<DraftOption> options;
};

}  // namespace

ParsedItems parse_generated_items(std::string_view raw, const GenerationPolicy& policy,
                                  const std::string& text_id, const Generator& generator) {
    std::vector<DraftItem> drafts;
    ParsedItems out;

    std::size_t start = 0;
    while (start <= raw.size()) {
        auto end = raw.find('\n', start);
        if (end == std::string_view::npos) end = raw.size();
        const auto line = strip_markup(std::string(raw.substr(start, end - start)));
        start = end + 1;
        if (line.empty()) continue;

        const auto marker = classify_marker(line);
        const auto body = marker.kind == Marker::none ? line : marker.rest;
        const auto label = trailing_label(body);
        DraftItem* current = drafts.empty() ? nullptr : &drafts.back();

        if (label && current) {
            current->options.push_back({label->content, label->raw, label->value});
        } else if (marker.kind == Marker::question) {
            drafts.push_back({body, {}});
        } else if (marker.kind == Marker::option && current) {
            current->options.push_back({body, std::nullopt, std::nullopt});
        } else if (current && current->options.empty() && current->stem.empty()) {
            current->stem = line;
        } else if (looks_like_stem(line) && (!current || !current->options.empty())) {
            drafts.push_back({line, {}});
        } else if (current && current->options.empty()) {
            current->stem += " " + line;
        } else {
            out.diagnostics.ignored_lines.push_back(line);
        }
    }

    std::erase_if(drafts, [&](const DraftItem& d) {
        if (!d.options.empty()) return false;
        out.diagnostics.ignored_lines.push_back(d.stem);
        return true;
    });
    if (drafts.empty())
        throw GenerationParseError("no multiple-choice items recognized in generated output",
                                   std::string(raw));

    if (static_cast<int>(drafts.size()) > policy.n_items) {
        out.diagnostics.truncated_extra_items = static_cast<int>(drafts.size()) - policy.n_items;
        drafts.resize(static_cast<std::size_t>(policy.n_items));
    }

    for (std::size_t k = 0; k < drafts.size(); ++k) {
        const auto& d = drafts[k];
        const int index = static_cast<int>(k) + 1;
        if (static_cast<int>(d.options.size()) != policy.n_options) {
            out.diagnostics.dropped_items.push_back(
                "item " + std::to_string(index) + ": " + std::to_string(d.options.size()) +
                " options (expected " + std::to_string(policy.n_options) + ")");
            continue;
        }
        MCItem item;
        item.id = generated_item_id(text_id, generator, index);
        item.text_id = text_id;
        item.stem = d.stem;
        item.generator = generator;
        for (std::size_t j = 0; j < d.options.size(); ++j) {
            const auto& o = d.options[j];
            item.options.push_back({o.text, o.value.value_or(false), o.raw_label});
            if (!o.value) {
                out.diagnostics.unlabeled_options.push_back("item " + std::to_string(index) +
                                                            " option " + std::to_string(j + 1));
                if (!item.has_flag(flags::unlabeled_option)) item.flags.push_back(flags::unlabeled_option);
            }
        }
        out.items.push_back(std::move(item));
    }
    return out;
}

GenerationResult generate_items(const TextDoc& text, Backend& backend, const GenerationPolicy& policy,
                                const Generator& generator, const LanguageIdentifier& identifier) {
    policy.validate();
    const auto prompt = build_generation_prompt(text, policy.n_items, policy.n_options);

    GenerationResult best;
    best.language_share = -1;
    std::vector<double> shares;
    for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
        auto request = ChatRequest::user(
            prompt, attempt == 0 ? policy.first_temperature : policy.retry_temperature, policy.max_tokens);
        request.attempt = attempt;
        const auto completion = backend.complete(request);
        const double share = completion.text.empty()
                                 ? 0.0
                                 : target_language_share(completion.text, policy.target_language, identifier);
        shares.push_back(share);

        GenerationResult result;
        result.raw_output = completion.text;
        result.attempts = attempt + 1;
        result.language_share = share;

        if (share >= policy.min_target_language_share) {
            auto parsed = parse_generated_items(completion.text, policy, text.id, generator);
            result.items = std::move(parsed.items);
            result.truncated_extra_items = parsed.diagnostics.truncated_extra_items;
            result.diagnostics = std::move(parsed.diagnostics);
            result.attempt_shares = std::move(shares);
            return result;
        }
        if (share > best.language_share) best = std::move(result);
    }

    best.attempt_shares = shares;
    try {
        auto parsed = parse_generated_items(best.raw_output, policy, text.id, generator);
        best.items = std::move(parsed.items);
        best.truncated_extra_items = parsed.diagnostics.truncated_extra_items;
        best.diagnostics = std::move(parsed.diagnostics);
    } catch (const GenerationParseError&) {
        // best attempt keeps its raw output only
    }
    const int attempts = policy.max_retries + 1;
    best.attempts = attempts;
    throw GenerationExhausted("text " + text.id + ": output stayed below " +
                                  std::to_string(policy.min_target_language_share) + " " +
                                  policy.target_language + " share after " + std::to_string(attempts) +
                                  " attempts",
                              std::move(best));
}

}  // namespace mcrc
