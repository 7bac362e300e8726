#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mcrc {

/// Line-level language identifier. Implementations return an IETF tag, or an
/// empty string when the line carries no linguistic content.
class LanguageIdentifier {
public:
    virtual ~LanguageIdentifier() = default;
    virtual std::string identify(std::string_view line) const = 0;
};

/// Naive-Bayes classifier over byte trigrams of lowercased, space-padded words.
class TrigramLanguageIdentifier final : public LanguageIdentifier {
public:
    /// Adds a language profile trained on `sample`.
    void add_language(std::string tag, std::string_view sample);
    std::string identify(std::string_view line) const override;

    /// Log-likelihood per language for a line; exposed for diagnostics.
    std::map<std::string, double> scores(std::string_view line) const;

    /// Identifier trained on the bundled German and English samples.
    static const TrigramLanguageIdentifier& bundled();

private:
    struct Profile {
        std::string tag;
        std::unordered_map<std::string, double> counts;
        double total = 0;
    };
    std::vector<Profile> profiles_;
    std::size_t vocabulary_ = 0;
};

/// Number of Unicode code points in a UTF-8 string.
std::size_t utf8_length(std::string_view s);

/// Lowercases ASCII and the German umlauts; other bytes pass through.
std::string fold_case(std::string_view s);

/// Character-weighted share of `raw` on lines identified as `target`.
/// Lines without letters count toward neither side.
double target_language_share(std::string_view raw, std::string_view target,
                             const LanguageIdentifier& identifier = TrigramLanguageIdentifier::bundled());

}  // namespace mcrc
