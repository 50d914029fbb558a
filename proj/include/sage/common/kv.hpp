#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace sage {

// Flat `key = value` text. Blank lines and lines starting with '#' are
// ignored. Throws std::invalid_argument on malformed lines or duplicate keys.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

double parse_double(const std::string& key, const std::string& value);
long long parse_int(const std::string& key, const std::string& value);

}  // namespace sage
