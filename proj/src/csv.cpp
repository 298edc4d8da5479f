#include "forestllm/csv.hpp"

#include "forestllm/error.hpp"
#include "forestllm/text.hpp"

namespace forestllm::csv {

namespace {

std::vector<std::vector<std::string>> parse_records(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;  // distinguishes "" from an absent trailing field

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
    };

    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
        case '"':
            in_quotes = true;
            field_started = true;
            break;
        case ',':
            end_field();
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_record();
            break;
        case '\n':
            end_record();
            break;
        default:
            field += c;
            field_started = true;
        }
    }
    if (in_quotes) throw Error(ErrorCode::RaggedRow, "unterminated quoted field");
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

}  // namespace

Records parse(std::string_view text) {
    auto records = parse_records(text);
    // Blank lines carry no data.
    std::erase_if(records, [](const auto& r) { return r.size() == 1 && r[0].empty(); });
    if (records.empty()) throw Error(ErrorCode::MissingHeader, "empty CSV input");
    Records out;
    out.header = std::move(records.front());
    for (auto& h : out.header) h = text::trim(h);
    out.rows.assign(std::make_move_iterator(records.begin() + 1),
                    std::make_move_iterator(records.end()));
    return out;
}

Records read_file(const std::filesystem::path& path) {
    return parse(text::read_file(path.string()));
}

std::string quote_field(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string format_record(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line += ',';
        line += quote_field(fields[i]);
    }
    return line;
}

}  // namespace forestllm::csv
