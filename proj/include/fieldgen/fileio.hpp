#pragma once

#include <filesystem>
#include <string>

namespace fieldgen {

// Whole-file binary IO; failures raise DataError.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace fieldgen
