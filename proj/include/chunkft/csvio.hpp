// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace chunkft {

// Shortest round-trippable decimal form (%.17g). All CSV and summary output
// goes through this so identical runs emit identical bytes.
std::string format_double(double v);

uint64_t fnv1a64(const void* data, size_t n);
uint64_t fnv1a64_str(const std::string& s);
uint64_t fnv1a64_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace chunkft
