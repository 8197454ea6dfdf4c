#pragma once

#include <string>
#include <vector>

namespace chapterkit {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
// Non-empty lines of a file, in order.
std::vector<std::string> read_lines(const std::string& path);

}  // namespace chapterkit
