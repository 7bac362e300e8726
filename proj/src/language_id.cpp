#include "mcrc/language_id.hpp"

#include "mcrc/error.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

namespace mcrc {

namespace {

// Training samples for the bundled profiles. Plain news and classroom prose.
constexpr std::string_view kGermanSample = R"(
Die Stadt hat beschlossen, im nächsten Jahr mehr Geld für Schulen und Kindergärten auszugeben.
Viele Eltern sind froh darüber, denn in den letzten Jahren gab es zu wenige Plätze für ihre Kinder.
Der Bürgermeister sagte, dass die Bildung für ihn das wichtigste Thema sei und dass man nicht sparen dürfe.
Kritiker meinen jedoch, dass die Kosten zu hoch sind und dass die Steuern deshalb steigen werden.
Im Sommer fahren viele Menschen in den Urlaub, aber wegen der hohen Preise bleiben dieses Jahr einige zu Hause.
Die Bahn hat angekündigt, dass es mehr Züge geben wird, weil immer mehr Leute mit dem Zug reisen wollen.
Wissenschaftler haben herausgefunden, dass Bienen für die Landwirtschaft sehr wichtig sind.
Ohne Bienen würden viele Pflanzen keine Früchte tragen, und die Bauern hätten große Probleme.
Deshalb fordern Umweltschützer, dass weniger Gift auf den Feldern benutzt wird.
Was ist richtig? Welche Aussage passt zum Text? Warum hat die Regierung das Gesetz geändert?
Wer hat den Preis gewonnen? Wie viele Menschen haben an der Demonstration teilgenommen?
Die Antwort ist falsch. Diese Antwort ist richtig. Der Text handelt vor allem von der Zukunft der Arbeit.
Die Mannschaft hat sich für die Meisterschaft qualifiziert, obwohl sie kaum trainieren konnte.
Nach dem Krieg mussten viele Familien ihre Heimat verlassen und in einem anderen Land neu anfangen.
Das Museum zeigt Bilder von bekannten Künstlern, die im neunzehnten Jahrhundert gelebt haben.
Jugendliche verbringen heute viel Zeit mit ihrem Handy und schreiben sich ständig Nachrichten.
Eine Studie zeigt, dass Schlaf für die Gesundheit genauso wichtig ist wie gesunde Ernährung und Sport.
Im Winter ist es in vielen Regionen kalt, und manchmal liegt wochenlang Schnee auf den Straßen.
Sie haben in verschiedenen Ländern gearbeitet und dabei viele Erfahrungen gesammelt.
Weil das Wetter schlecht war, wurde das Konzert abgesagt. Die Zuschauer bekamen ihr Geld zurück.
Der Verein möchte, dass mehr Frauen Fußball spielen, und bietet deshalb kostenlose Kurse an.
Es gibt immer weniger Geschäfte in der Innenstadt, weil die Menschen lieber im Internet einkaufen.
Zum Schluss erklärt die Expertin, warum die Preise für Lebensmittel weiter steigen könnten.
Frage: Wo fand das Treffen statt? Antwort: In einem kleinen Dorf in der Nähe der Grenze.
Gemäß dem Text oben ist diese Aussage nicht korrekt, weil sie den Angaben widerspricht.
)";

constexpr std::string_view kEnglishSample = R"(
The city has decided to spend more money on schools and kindergartens next year.
Many parents are happy about it, because in recent years there were not enough places for their children.
The mayor said that education was the most important issue for him and that they should not save money on it.
Critics, however, think that the costs are too high and that taxes will therefore rise.
In the summer many people go on holiday, but because of the high prices some are staying at home this year.
The railway company announced that there will be more trains, because more and more people want to travel by train.
Scientists have found that bees are very important for agriculture.
Without bees many plants would not bear fruit, and farmers would have big problems.
That is why environmentalists are demanding that less poison is used on the fields.
What is correct? Which statement matches the text? Why did the government change the law?
Who won the prize? How many people took part in the demonstration?
The answer is wrong. This answer is correct. The text is mainly about the future of work.
The team qualified for the championship even though it could hardly train at all.
After the war many families had to leave their home and start again in another country.
The museum shows paintings by famous artists who lived in the nineteenth century.
Young people today spend a lot of time on their phones and are constantly sending each other messages.
A study shows that sleep is just as important for health as a healthy diet and exercise.
In winter it is cold in many regions, and sometimes snow lies on the streets for weeks.
They worked in different countries and gained a lot of experience along the way.
Because the weather was bad, the concert was cancelled. The audience got their money back.
The club wants more women to play football and is therefore offering free courses.
There are fewer and fewer shops in the city centre, because people prefer to shop on the internet.
Finally, the expert explains why food prices could continue to rise.
Question: Where did the meeting take place? Answer: In a small village near the border.
Here are three multiple choice questions about the text, with the correct answers marked.
)";

bool is_letter_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

std::vector<std::string> trigrams(std::string_view line) {
    const auto folded = fold_case(line);
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        const std::string padded = " " + word + " ";
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) out.push_back(padded.substr(i, 3));
        word.clear();
    };
    for (unsigned char c : folded) {
        if (is_letter_byte(c)) {
            word.push_back(static_cast<char>(c));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

}  // namespace

std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

std::string fold_case(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto c = static_cast<unsigned char>(s[i]);
        if (c >= 'A' && c <= 'Z') {
            out.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if (c == 0xC3 && i + 1 < s.size()) {
            // Ä Ö Ü (C3 84 / 96 / 9C) map to ä ö ü (C3 A4 / B6 / BC).
            auto next = static_cast<unsigned char>(s[i + 1]);
            if (next == 0x84 || next == 0x96 || next == 0x9C) next = static_cast<unsigned char>(next + 0x20);
            out.push_back(static_cast<char>(c));
            out.push_back(static_cast<char>(next));
            ++i;
        } else {
            out.push_back(static_cast<char>(c));
        }
    }
    return out;
}

void TrigramLanguageIdentifier::add_language(std::string tag, std::string_view sample) {
    Profile p;
    p.tag = std::move(tag);
    for (auto& g : trigrams(sample)) {
        p.counts[g] += 1;
        p.total += 1;
    }
    profiles_.push_back(std::move(p));
    std::unordered_set<std::string> vocab;
    for (const auto& prof : profiles_)
        for (const auto& [g, n] : prof.counts) vocab.insert(g);
    vocabulary_ = vocab.size();
}

std::map<std::string, double> TrigramLanguageIdentifier::scores(std::string_view line) const {
    std::map<std::string, double> out;
    const auto grams = trigrams(line);
    for (const auto& p : profiles_) {
        const double denom = p.total + static_cast<double>(vocabulary_) + 1;
        double ll = 0;
        for (const auto& g : grams) {
            auto it = p.counts.find(g);
            ll += std::log(((it == p.counts.end() ? 0.0 : it->second) + 1.0) / denom);
        }
        out[p.tag] = ll;
    }
    return out;
}

std::string TrigramLanguageIdentifier::identify(std::string_view line) const {
    if (trigrams(line).empty()) return {};
    std::string best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& [tag, score] : scores(line)) {
        if (score > best_score) {
            best_score = score;
            best = tag;
        }
    }
    return best;
}

const TrigramLanguageIdentifier& TrigramLanguageIdentifier::bundled() {
    static const TrigramLanguageIdentifier instance = [] {
        TrigramLanguageIdentifier id;
        id.add_language("de", kGermanSample);
        id.add_language("en", kEnglishSample);
        return id;
    }();
    return instance;
}

double target_language_share(std::string_view raw, std::string_view target,
                             const LanguageIdentifier& identifier) {
    if (raw.empty()) throw Error(ErrorCode::invalid_argument, "language share of empty output");
    std::size_t on_target = 0, total = 0;
    std::size_t start = 0;
    while (start <= raw.size()) {
        auto end = raw.find('\n', start);
        if (end == std::string_view::npos) end = raw.size();
        const auto line = raw.substr(start, end - start);
        const auto tag = identifier.identify(line);
        if (!tag.empty()) {
            const auto n = utf8_length(line);
            total += n;
            if (tag == target) on_target += n;
        }
        start = end + 1;
    }
    return total == 0 ? 0.0 : static_cast<double>(on_target) / static_cast<double>(total);
}

}  // namespace mcrc
