#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace compnet::io {

/// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);
double parse_double(std::string_view text);

void append_le_f64(std::string& out, double value);
void append_le_u32(std::string& out, std::uint32_t value);
void append_le_u64(std::string& out, std::uint64_t value);
double read_le_f64(const char* bytes);
std::uint32_t read_le_u32(const char* bytes);
std::uint64_t read_le_u64(const char* bytes);

std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace compnet::io
