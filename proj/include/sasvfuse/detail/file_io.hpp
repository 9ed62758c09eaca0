#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sasvfuse/error.hpp"

namespace sasvfuse::detail {

inline std::string read_text_file(const std::filesystem::path& path, const std::string& module) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(module, "cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path,
                                                  const std::string& module) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(module, "cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes,
                       const std::string& module) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(module, "cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(module, "write failed for '" + path.string() + "'");
}

inline void write_file(const std::filesystem::path& path, std::string_view text, const std::string& module) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), module);
}

}  // namespace sasvfuse::detail
