#include "mcrc/corpus.hpp"

#include "mcrc/error.hpp"
#include "mcrc/io.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_set>

namespace mcrc {

using nlohmann::json;

Generator Generator::llm(std::string_view name) {
    if (name.empty()) throw Error(ErrorCode::invalid_argument, "llm generator needs a name");
    return Generator("llm:" + std::string(name));
}

Generator Generator::parse(std::string_view text) {
    if (text == "human") return human();
    if (text.starts_with("llm:") && text.size() > 4) return llm(text.substr(4));
    throw Error(ErrorCode::parse, "unknown generator '" + std::string(text) +
                                      "' (expected \"human\" or \"llm:<name>\")");
}

std::string Generator::name() const {
    return is_human() ? value_ : value_.substr(4);
}

std::string TextDoc::joined() const {
    std::string out = title;
    for (const auto& segment : body) {
        if (!out.empty()) out += '\n';
        out += segment;
    }
    return out;
}

std::size_t TextDoc::token_count() const {
    std::istringstream in(joined());
    std::size_t n = 0;
    for (std::string tok; in >> tok;) ++n;
    return n;
}

std::vector<bool> MCItem::gold_vector() const {
    std::vector<bool> out;
    out.reserve(options.size());
    for (const auto& o : options) out.push_back(o.gold_label);
    return out;
}

bool MCItem::has_flag(std::string_view flag) const {
    return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

const char* to_string(Split split) {
    return split == Split::test ? "test" : "calibration";
}

Split parse_split(std::string_view text) {
    if (text == "test") return Split::test;
    if (text == "calibration") return Split::calibration;
    throw Error(ErrorCode::parse, "unknown split '" + std::string(text) + "'");
}

const TextDoc* Corpus::find_text(std::string_view id) const {
    for (const auto& t : texts)
        if (t.id == id) return &t;
    return nullptr;
}

const MCItem* Corpus::find_item(std::string_view id) const {
    for (const auto& i : items)
        if (i.id == id) return &i;
    return nullptr;
}

std::vector<const MCItem*> Corpus::items_for(std::string_view text_id,
                                             const Generator* generator) const {
    std::vector<const MCItem*> out;
    for (const auto& item : items) {
        if (item.text_id != text_id) continue;
        if (generator && item.generator != *generator) continue;
        out.push_back(&item);
    }
    return out;
}

std::vector<Generator> Corpus::generators() const {
    std::vector<Generator> out;
    for (const auto& item : items)
        if (std::find(out.begin(), out.end(), item.generator) == out.end())
            out.push_back(item.generator);
    return out;
}

std::vector<Violation> validate_item(const MCItem& item) {
    std::vector<Violation> out;
    if (item.id.empty()) out.push_back({"id", "id non-empty"});
    if (item.text_id.empty()) out.push_back({"text_id", "text_id non-empty"});
    if (item.stem.empty()) out.push_back({"stem", "stem non-empty"});
    const auto n = item.options.size();
    if (item.generator.is_llm()) {
        if (n != 3) out.push_back({"options", "options length 3 for generated items"});
    } else if (n < 2 || n > 5) {
        out.push_back({"options", "options length 2-5 for human items"});
    }
    for (std::size_t i = 0; i < n; ++i)
        if (item.options[i].text.empty())
            out.push_back({"options[" + std::to_string(i) + "].text", "option text non-empty"});
    return out;
}

json to_json(const TextDoc& text) {
    json j = {{"id", text.id},
              {"title", text.title},
              {"body", text.body},
              {"language", text.language}};
    j["source_url"] = text.source_url ? json(*text.source_url) : json(nullptr);
    return j;
}

json to_json(const MCItem& item) {
    json options = json::array();
    for (const auto& o : item.options) {
        json jo = {{"text", o.text}, {"gold_label", o.gold_label}};
        if (o.origin_label_raw) jo["origin_label_raw"] = *o.origin_label_raw;
        options.push_back(std::move(jo));
    }
    json j = {{"id", item.id},
              {"text_id", item.text_id},
              {"stem", item.stem},
              {"generator", item.generator.str()},
              {"options", std::move(options)}};
    if (!item.flags.empty()) j["flags"] = item.flags;
    return j;
}

json to_json(const Corpus& corpus) {
    json texts = json::array();
    for (const auto& t : corpus.texts) texts.push_back(to_json(t));
    json items = json::array();
    for (const auto& i : corpus.items) items.push_back(to_json(i));
    return {{"schema_version", kCorpusSchemaVersion},
            {"split", to_string(corpus.split)},
            {"texts", std::move(texts)},
            {"items", std::move(items)}};
}

namespace {

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::parse, "corpus field " + path + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& path) {
    if (!obj.is_object()) field_error(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) field_error(path + "." + key, "missing");
    return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& path) {
    const auto& v = require(obj, key, path);
    if (!v.is_string()) field_error(path + "." + key, "expected a string");
    return v.get<std::string>();
}

TextDoc text_from_json(const json& j, const std::string& path) {
    TextDoc t;
    t.id = require_string(j, "id", path);
    t.title = j.contains("title") ? require_string(j, "title", path) : std::string{};
    const auto& body = require(j, "body", path);
    if (!body.is_array()) field_error(path + ".body", "expected an array of strings");
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (!body[i].is_string())
            field_error(path + ".body[" + std::to_string(i) + "]", "expected a string");
        t.body.push_back(body[i].get<std::string>());
    }
    if (t.body.empty()) field_error(path + ".body", "must be non-empty");
    if (j.contains("language")) t.language = require_string(j, "language", path);
    if (auto it = j.find("source_url"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) field_error(path + ".source_url", "expected a string or null");
        t.source_url = it->get<std::string>();
    }
    return t;
}

MCItem item_from_json(const json& j, const std::string& path) {
    MCItem item;
    item.id = require_string(j, "id", path);
    item.text_id = require_string(j, "text_id", path);
    item.stem = require_string(j, "stem", path);
    item.generator = j.contains("generator")
                         ? Generator::parse(require_string(j, "generator", path))
                         : Generator::human();
    const auto& options = require(j, "options", path);
    if (!options.is_array()) field_error(path + ".options", "expected an array");
    for (std::size_t i = 0; i < options.size(); ++i) {
        const auto opath = path + ".options[" + std::to_string(i) + "]";
        const auto& jo = options[i];
        AnswerOption o;
        o.text = require_string(jo, "text", opath);
        if (auto it = jo.find("gold_label"); it != jo.end()) {
            if (!it->is_boolean()) field_error(opath + ".gold_label", "expected a boolean");
            o.gold_label = it->get<bool>();
        }
        if (auto it = jo.find("origin_label_raw"); it != jo.end() && !it->is_null())
            o.origin_label_raw = it->get<std::string>();
        item.options.push_back(std::move(o));
    }
    // Single-select source items name their one correct option by index.
    if (auto it = j.find("correct_option"); it != j.end()) {
        if (!it->is_number_integer() || it->get<long long>() < 0 ||
            it->get<std::size_t>() >= item.options.size())
            field_error(path + ".correct_option", "expected an index into options");
        const auto k = it->get<std::size_t>();
        for (std::size_t i = 0; i < item.options.size(); ++i) item.options[i].gold_label = (i == k);
    }
    if (auto it = j.find("flags"); it != j.end()) {
        if (!it->is_array()) field_error(path + ".flags", "expected an array");
        item.flags = it->get<std::vector<std::string>>();
    }
    return item;
}

std::pair<std::size_t, std::size_t> line_and_column(std::string_view content, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < content.size(); ++i) {
        if (content[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace

Corpus corpus_from_json(const json& doc) {
    if (!doc.is_object()) field_error("$", "expected an object");
    const auto& version = require(doc, "schema_version", "$");
    if (!version.is_number_integer() || version.get<int>() != kCorpusSchemaVersion)
        field_error("$.schema_version",
                    "unsupported (expected " + std::to_string(kCorpusSchemaVersion) + ")");

    Corpus corpus;
    corpus.split = doc.contains("split") ? parse_split(require_string(doc, "split", "$"))
                                         : Split::test;
    const auto& texts = require(doc, "texts", "$");
    if (!texts.is_array()) field_error("$.texts", "expected an array");
    for (std::size_t i = 0; i < texts.size(); ++i)
        corpus.texts.push_back(text_from_json(texts[i], "$.texts[" + std::to_string(i) + "]"));
    if (auto it = doc.find("items"); it != doc.end()) {
        if (!it->is_array()) field_error("$.items", "expected an array");
        for (std::size_t i = 0; i < it->size(); ++i)
            corpus.items.push_back(item_from_json((*it)[i], "$.items[" + std::to_string(i) + "]"));
    }

    std::unordered_set<std::string> text_ids;
    std::vector<std::string> duplicates;
    for (const auto& t : corpus.texts)
        if (!text_ids.insert(t.id).second) duplicates.push_back(t.id);
    std::unordered_set<std::string> item_ids;
    for (const auto& item : corpus.items)
        if (!item_ids.insert(item.id).second) duplicates.push_back(item.id);
    if (!duplicates.empty()) {
        std::string msg = "duplicate ids:";
        for (const auto& d : duplicates) msg += " " + d;
        throw IntegrityError(msg, duplicates);
    }

    std::set<std::string> dangling;
    for (const auto& item : corpus.items)
        if (!text_ids.count(item.text_id)) dangling.insert(item.text_id);
    if (!dangling.empty()) {
        std::string msg = "items reference unknown text ids:";
        for (const auto& d : dangling) msg += " " + d;
        throw IntegrityError(msg, {dangling.begin(), dangling.end()});
    }

    std::vector<std::string> invalid;
    std::string msg = "items violate invariants:";
    for (auto& item : corpus.items) {
        for (const auto& v : validate_item(item)) {
            invalid.push_back(item.id);
            msg += " " + item.id + "." + v.field + " (" + v.rule + ")";
        }
        if (item.generator.is_human() && item.options.size() != 3 &&
            !item.has_flag(flags::nonstandard_option_count))
            item.flags.push_back(flags::nonstandard_option_count);
    }
    if (!invalid.empty()) throw IntegrityError(msg, invalid);
    return corpus;
}

Corpus parse_corpus(std::string_view content) {
    json doc;
    try {
        doc = json::parse(content);
    } catch (const json::parse_error& e) {
        auto [line, col] = line_and_column(content, e.byte == 0 ? 0 : e.byte - 1);
        throw Error(ErrorCode::parse, "corpus JSON malformed at line " + std::to_string(line) +
                                          ", column " + std::to_string(col) + ": " + e.what());
    }
    try {
        return corpus_from_json(doc);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, std::string("corpus field has wrong type: ") + e.what());
    }
}

Corpus load_corpus(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::not_found, "corpus file not found: " + path.string());
    return parse_corpus(read_file(path));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    write_file_atomic(path, to_json(corpus).dump(2) + "\n");
}

}  // namespace mcrc
