#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace forestllm::csv {

struct Records {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// RFC-4180 reader: quoted fields may contain commas, doubled quotes and line
/// breaks; CRLF and LF record separators are both accepted. A trailing empty
/// line is ignored. Throws Error(MissingHeader) on empty input.
Records parse(std::string_view text);
Records read_file(const std::filesystem::path& path);

std::string quote_field(std::string_view field);
std::string format_record(const std::vector<std::string>& fields);

}  // namespace forestllm::csv
