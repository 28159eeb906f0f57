// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace decaylens {

std::string read_file(const std::filesystem::path& path);

// One document per line; trailing newline does not add an empty document.
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Writes to a sibling temp file and renames into place, so an interrupted
// invocation never leaves a partial file at the final path.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

// Shortest round-trip decimal representation (std::to_chars). Stable across
// invocations, which keeps emitted CSV/JSON byte-identical for equal inputs.
std::string format_double(double value);

// RFC-4180 style quoting; only quotes when the field needs it.
std::string csv_escape(std::string_view field);

}  // namespace decaylens
